"""SIS epidemics on a mobile community coupled to fast isolated communities."""
from .control import ControlSignal, random_control
from .ctmc import EmpiricalState, EnsembleSummary, SimConfig, monte_carlo, simulate
from .integrator import BoxViolation, IntegrationError, StepBudgetExceeded, StepSizeUnderflow
from .model import (
    FluidState,
    ModelParams,
    ParameterError,
    endemic_equilibrium,
    equilibrium_xstar,
    f_slow,
    fig1_params,
    g_fast,
    network_effect_R,
    network_effect_dR,
    reduced_rhs,
    sustain_margin,
    sustain_verdict,
)
from .ode import Trajectory, integrate, integrate_artificial, integrate_full, integrate_reduced
from .optimal import costate_diagnostics, evaluate_cost, lie_bracket, optimize_threshold

__all__ = [
    "BoxViolation", "ControlSignal", "EmpiricalState", "EnsembleSummary", "FluidState",
    "IntegrationError", "ModelParams", "StepBudgetExceeded", "ParameterError", "SimConfig", "StepSizeUnderflow",
    "Trajectory", "costate_diagnostics", "endemic_equilibrium", "equilibrium_xstar",
    "evaluate_cost", "f_slow", "fig1_params", "g_fast", "integrate", "integrate_artificial",
    "integrate_full", "integrate_reduced", "lie_bracket", "monte_carlo", "network_effect_R",
    "network_effect_dR", "optimize_threshold", "random_control", "reduced_rhs", "simulate",
    "sustain_margin", "sustain_verdict",
]
