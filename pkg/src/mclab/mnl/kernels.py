"""Kernel backend selection.

The compiled extension is preferred when importable; the numpy fallback is
always present. MCLAB_KERNEL=python|compiled forces a backend (the latter
raises if the extension is missing).
"""

from __future__ import annotations

import os

import numpy as np

from mclab.mnl import _kernels_py

try:
    from mclab.mnl import _speedups
except ImportError:  # pragma: no cover - depends on build environment
    _speedups = None

_FORCED = os.environ.get("MCLAB_KERNEL", "").strip().lower()
if _FORCED == "compiled" and _speedups is None:
    raise ImportError("MCLAB_KERNEL=compiled but the extension is not built")


def active_backend() -> str:
    if _FORCED == "python" or _speedups is None:
        return "python"
    return "compiled"


def loglik_grad_hess(design, avail, chosen, beta, backend: str | None = None):
    """Dispatch to the selected kernel; identical contract either way."""
    choice = backend or active_backend()
    if choice == "compiled":
        if _speedups is None:
            raise RuntimeError("compiled kernel requested but not built")
        return _speedups.loglik_grad_hess(
            np.ascontiguousarray(design, dtype=np.float64),
            np.ascontiguousarray(avail, dtype=np.uint8),
            np.ascontiguousarray(chosen, dtype=np.int64),
            np.ascontiguousarray(beta, dtype=np.float64),
        )
    if choice == "python":
        return _kernels_py.loglik_grad_hess(design, avail, chosen, beta)
    raise ValueError(f"unknown kernel backend {choice!r}")


def available_backends() -> list[str]:
    out = ["python"]
    if _speedups is not None:
        out.append("compiled")
    return out
