"""Logit operations: utilities, availability-conditioned probabilities,
likelihood and analytic derivatives, Newton maximization with step-halving,
fit statistics, and seeded choice simulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from mclab.core import MODES, Mode
from mclab.errors import (
    DataError,
    DomainError,
    IdentificationError,
    NotConvergedError,
    NumericalError,
)
from mclab.mnl import _kernels_py
from mclab.mnl.data import VAR_INDEX, ChoiceData, Observation, build_design
from mclab.mnl.kernels import active_backend, loglik_grad_hess
from mclab.mnl.spec import CoefficientTable


def utility(observation: Observation, mode: Mode, table: CoefficientTable) -> float:
    """Systematic utility of one available alternative.

    Raises:
        DataError: the alternative is not available, so an occupied slot
            has no variable value.
    """
    if not observation.avail[mode]:
        raise DataError(f"trip {observation.trip_id}: {mode.label} is not available")
    total = 0.0
    for param in table:
        for m, var in param.slots:
            if m is mode:
                total += param.value * observation.x[mode, VAR_INDEX[var]]
    return total


def utilities(observation: Observation, table: CoefficientTable) -> np.ndarray:
    """Utility vector over the 8 modes; unavailable entries are -inf."""
    design = build_design(observation.x[None, :, :], table)[0]
    v = design @ table.values()
    return np.where(observation.avail, v, -np.inf)


def availability_softmax(v: np.ndarray, avail: np.ndarray) -> np.ndarray:
    """Probabilities over the available set; exact zeros elsewhere."""
    return _kernels_py.probabilities(np.asarray(v, dtype=np.float64), np.asarray(avail, dtype=bool))


def probabilities(observation: Observation, table: CoefficientTable) -> np.ndarray:
    """Choice probabilities for one observation, canonical mode order."""
    design = build_design(observation.x[None, :, :], table)[0]
    v = design @ table.values()
    return availability_softmax(v, observation.avail)


def _check_finite(design: np.ndarray, beta: np.ndarray, data: ChoiceData) -> None:
    v = design @ beta
    finite = np.isfinite(np.where(data.avail, v, 0.0)).all(axis=1)
    if not finite.all():
        bad = data.trip_ids[int(np.argmin(finite))]
        raise NumericalError(f"non-finite utility for observation {bad}")


def log_likelihood(data: ChoiceData, table: CoefficientTable) -> float:
    design = build_design(data.x, table)
    beta = table.values()
    _check_finite(design, beta, data)
    lnl, _, _ = loglik_grad_hess(design, data.avail, data.chosen, beta)
    if not np.isfinite(lnl):
        raise NumericalError("log-likelihood is not finite")
    return lnl


def gradient(data: ChoiceData, table: CoefficientTable) -> np.ndarray:
    design = build_design(data.x, table)
    beta = table.values()
    _check_finite(design, beta, data)
    _, grad, _ = loglik_grad_hess(design, data.avail, data.chosen, beta)
    return grad


def null_log_likelihood(data: ChoiceData) -> float:
    """Equal-shares likelihood over each observation's available set."""
    return float(-np.log(data.n_available.astype(np.float64)).sum())


def mcfadden_index(lnl: float, lnl0: float) -> float:
    """Likelihood ratio index 1 - lnL/lnL0."""
    if lnl0 >= 0:
        raise DomainError(f"null log-likelihood must be negative, got {lnl0}")
    if not (lnl0 <= lnl <= 0):
        raise DomainError(f"need lnL0 <= lnL <= 0, got lnL={lnl}, lnL0={lnl0}")
    return 1.0 - lnl / lnl0


@dataclass(frozen=True)
class EstimationOptions:
    max_iterations: int = 100
    gradient_tol: float = 1e-6
    rel_lnl_tol: float = 1e-10
    min_step: float = 1e-10


@dataclass
class EstimationResult:
    table: CoefficientTable
    std_errors: np.ndarray
    lnl: float
    lnl0: float
    iterations: int
    converged: bool
    status: str
    trajectory: list[float]
    n_observations: int
    backend: str

    @property
    def t_stats(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.table.values() / self.std_errors

    @property
    def index(self) -> float:
        return mcfadden_index(self.lnl, self.lnl0)

    def to_dict(self) -> dict:
        values = self.table.values()
        return {
            "converged": self.converged,
            "status": self.status,
            "iterations": self.iterations,
            "lnl": self.lnl,
            "lnl0": self.lnl0,
            "mcfadden_index": self.index,
            "n_observations": self.n_observations,
            "backend": self.backend,
            "parameters": [
                {
                    "name": p.name,
                    "value": float(values[i]),
                    "std_error": float(self.std_errors[i]),
                    "t_stat": float(self.t_stats[i]),
                    "slots": [[m.label, var] for m, var in p.slots],
                }
                for i, p in enumerate(self.table)
            ],
        }


def _identification_precheck(design: np.ndarray, avail: np.ndarray, table: CoefficientTable) -> None:
    """A parameter whose design column never varies across the available
    alternatives of any observation cannot move the likelihood."""
    masked_max = np.where(avail[:, :, None], design, -np.inf).max(axis=1)
    masked_min = np.where(avail[:, :, None], design, np.inf).min(axis=1)
    spread = (masked_max - masked_min).max(axis=0)
    flat = [table.names[p] for p in range(len(table)) if spread[p] <= 0.0]
    if flat:
        raise IdentificationError(flat, "no variation across available alternatives")


def _name_collinear(hess: np.ndarray, table: CoefficientTable) -> list[str]:
    w, v = np.linalg.eigh(-hess)
    tol = max(1e-12, 1e-10 * float(abs(w).max() or 1.0))
    names: list[str] = []
    for idx in np.nonzero(w <= tol)[0]:
        loadings = np.abs(v[:, idx])
        for p in np.nonzero(loadings >= 0.4 * loadings.max())[0]:
            name = table.names[int(p)]
            if name not in names:
                names.append(name)
    return names or list(table.names)


def estimate(
    data: ChoiceData,
    table: CoefficientTable,
    init: Optional[Sequence[float]] = None,
    options: EstimationOptions = EstimationOptions(),
) -> EstimationResult:
    """Maximize the log-likelihood by Newton steps with analytic gradient
    and Hessian.

    Line search halves the step until the likelihood does not decrease.
    When the Hessian is not negative definite the iteration falls back to
    gradient ascent. Convergence: max |gradient| < gradient_tol, or the
    relative likelihood change drops below rel_lnl_tol.

    Raises:
        IdentificationError: a parameter has no variation, or the Hessian
            is singular at some iterate.
        NotConvergedError: iteration cap reached; carries the trajectory.
    """
    design = build_design(data.x, table)
    _identification_precheck(design, data.avail, table)

    beta = np.array(init if init is not None else table.values(), dtype=np.float64)
    if beta.shape != (len(table),):
        raise ValueError("init vector length mismatch")

    backend = active_backend()
    _check_finite(design, beta, data)
    lnl, grad, hess = loglik_grad_hess(design, data.avail, data.chosen, beta)
    trajectory = [lnl]
    status = "max_iterations"
    converged = False
    iterations = 0

    for iteration in range(1, options.max_iterations + 1):
        iterations = iteration
        if np.abs(grad).max() < options.gradient_tol:
            status, converged = "gradient_tol", True
            iterations = iteration - 1
            break

        neg_hess = -hess
        step = None
        try:
            np.linalg.cholesky(neg_hess)
            step = np.linalg.solve(neg_hess, grad)
        except np.linalg.LinAlgError:
            # not negative definite: ascend along the gradient instead
            scale = np.abs(grad).max()
            step = grad / scale if scale > 0 else grad
        if not np.isfinite(step).all():
            raise IdentificationError(_name_collinear(hess, table), "singular Hessian")

        alpha = 1.0
        while True:
            candidate = beta + alpha * step
            new_lnl, new_grad, new_hess = loglik_grad_hess(
                design, data.avail, data.chosen, candidate
            )
            if np.isfinite(new_lnl) and new_lnl >= lnl:
                break
            alpha *= 0.5
            if alpha < options.min_step:
                candidate, new_lnl, new_grad, new_hess = beta, lnl, grad, hess
                break

        rel_change = abs(new_lnl - lnl) / max(1.0, abs(lnl))
        beta, lnl, grad, hess = candidate, new_lnl, new_grad, new_hess
        trajectory.append(lnl)
        if rel_change < options.rel_lnl_tol:
            status, converged = "rel_lnl_tol", True
            break
    else:
        raise NotConvergedError(options.max_iterations, trajectory)

    neg_hess = -hess
    try:
        cov = np.linalg.inv(neg_hess)
    except np.linalg.LinAlgError:
        raise IdentificationError(_name_collinear(hess, table), "singular Hessian at optimum")
    diag = np.diag(cov)
    if (diag <= 0).any():
        raise IdentificationError(
            [table.names[int(i)] for i in np.nonzero(diag <= 0)[0]],
            "non-positive variance at optimum",
        )

    return EstimationResult(
        table=table.with_values(beta),
        std_errors=np.sqrt(diag),
        lnl=lnl,
        lnl0=null_log_likelihood(data),
        iterations=iterations,
        converged=converged,
        status=status,
        trajectory=trajectory,
        n_observations=len(data),
        backend=backend,
    )


def simulate_choice(
    observation: Observation,
    table: CoefficientTable,
    seed: Union[int, np.random.Generator],
) -> Mode:
    """Inverse-CDF draw over the observation's choice probabilities.

    Passing an int seeds a fresh generator (same seed, same choice);
    passing a Generator advances it, for batch simulation.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    probs = probabilities(observation, table)
    u = rng.random()
    cumulative = 0.0
    last_available = None
    for mode in MODES:
        if not observation.avail[mode]:
            continue
        last_available = mode
        cumulative += probs[mode]
        if u < cumulative:
            return mode
    return last_available  # guard against rounding at the top of the CDF
