"""Equilibrium investment and stopping for time-inconsistent agents."""

from .ambiguity_model import Belief, exclusion_check, theta_tilde, theta_tilde_limits
from .diffusion_core import MarketParams, alpha_exponent, apply_generator, characteristic_roots
from .errors import DegenerateError, DomainError, NoRootError, NumericError
from .habit_model import (
    HabitEquilibrium,
    HabitSpec,
    PreferenceParams,
    check_sufficient_conditions,
    check_value_dominance,
    solve_equilibrium,
    solve_threshold,
    sweep_threshold,
)
from .hjb_verifier import VerificationReport, verify_system
from .mc_engine import (
    McConfig,
    McEstimate,
    control_perturbation_probe,
    immediate_stop_gap,
    simulate_stopped_payoff,
    stop_delay_probe,
)
from .problem import BivariateC2, CandidateProblem

__version__ = "0.1.0"

__all__ = [
    "Belief",
    "BivariateC2",
    "CandidateProblem",
    "DegenerateError",
    "DomainError",
    "HabitEquilibrium",
    "HabitSpec",
    "MarketParams",
    "McConfig",
    "McEstimate",
    "NoRootError",
    "NumericError",
    "PreferenceParams",
    "VerificationReport",
    "alpha_exponent",
    "apply_generator",
    "characteristic_roots",
    "check_sufficient_conditions",
    "check_value_dominance",
    "control_perturbation_probe",
    "exclusion_check",
    "immediate_stop_gap",
    "simulate_stopped_payoff",
    "solve_equilibrium",
    "solve_threshold",
    "stop_delay_probe",
    "sweep_threshold",
    "theta_tilde",
    "theta_tilde_limits",
    "verify_system",
]
