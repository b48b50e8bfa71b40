"""Scheduling a server whose completion probability depends on an action-dependent state.

The package computes the largest arrival rate any policy can stabilize by
a finite search over threshold policies, checks it against exhaustive
enumeration, and simulates the full queue to confirm stability behaviour.
"""

from .aux_chain import evaluate_policy, stationary_distribution
from .errors import (
    AdschedError,
    ConfigError,
    ModelError,
    NoConvergence,
    SingularSystem,
    TooLarge,
    UndefinedEntry,
)
from .model import (
    A,
    B,
    REST,
    WORK,
    AuxPolicy,
    ServerModel,
    SystemPolicy,
    SystemState,
    lift_threshold,
    threshold_aux_policy,
    validate_model,
)
from .optimizer import enumerate_deterministic, lambda_star, optimality_report

__version__ = "0.1.0"

__all__ = [
    "A",
    "B",
    "REST",
    "WORK",
    "AdschedError",
    "AuxPolicy",
    "ConfigError",
    "ModelError",
    "NoConvergence",
    "ServerModel",
    "SingularSystem",
    "SystemPolicy",
    "SystemState",
    "TooLarge",
    "UndefinedEntry",
    "enumerate_deterministic",
    "evaluate_policy",
    "lambda_star",
    "lift_threshold",
    "optimality_report",
    "stationary_distribution",
    "threshold_aux_policy",
    "validate_model",
]
