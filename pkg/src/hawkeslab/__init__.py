"""Simulation and numerical checks for supercritical nearly unstable Hawkes processes."""

__version__ = "0.1.0"

from .kernels import Kernel, MalthusianSolution, ScalingRegime, solve_malthusian  # noqa: E402
from .renewal import (  # noqa: E402
    RenewalTable,
    expectation_curve,
    expected_count,
    limit_profile_mean,
    limit_profile_psi,
    solve_renewal,
)
from .simulate import (  # noqa: E402
    EventPath,
    ExplosionError,
    SimulationParams,
    intensity_path,
    simulate_cluster,
    simulate_thinning,
    time_changed_qv,
)
from .cir import CIRParams, CIRPath, simulate_cir_euler, simulate_cir_exact  # noqa: E402

__all__ = [
    "CIRParams",
    "CIRPath",
    "EventPath",
    "ExplosionError",
    "Kernel",
    "MalthusianSolution",
    "RenewalTable",
    "ScalingRegime",
    "SimulationParams",
    "expectation_curve",
    "expected_count",
    "intensity_path",
    "limit_profile_mean",
    "limit_profile_psi",
    "simulate_cir_euler",
    "simulate_cir_exact",
    "simulate_cluster",
    "simulate_thinning",
    "solve_malthusian",
    "solve_renewal",
    "time_changed_qv",
]
