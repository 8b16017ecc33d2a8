"""Availability-conditioned multinomial logit: specification, data
assembly, likelihood kernels, estimation, and simulation."""

from mclab.mnl.data import VARIABLES, ChoiceData, Observation, observation_from_choice_set
from mclab.mnl.kernels import active_backend, loglik_grad_hess
from mclab.mnl.model import (
    EstimationOptions,
    EstimationResult,
    availability_softmax,
    estimate,
    gradient,
    log_likelihood,
    mcfadden_index,
    null_log_likelihood,
    probabilities,
    simulate_choice,
    utility,
)
from mclab.mnl.spec import CoefficientTable, Parameter, load_table, paper_preset_path, save_table

__all__ = [
    "VARIABLES",
    "ChoiceData",
    "Observation",
    "observation_from_choice_set",
    "active_backend",
    "loglik_grad_hess",
    "EstimationOptions",
    "EstimationResult",
    "availability_softmax",
    "estimate",
    "gradient",
    "log_likelihood",
    "mcfadden_index",
    "null_log_likelihood",
    "probabilities",
    "simulate_choice",
    "utility",
    "CoefficientTable",
    "Parameter",
    "load_table",
    "paper_preset_path",
    "save_table",
]
