"""Solver and experiment harness for graphon-coupled nonlocal dynamics with Q-Wiener forcing."""

__version__ = "0.1.0"

from .dynamics import (
    Drift,
    Interaction,
    Problem,
    Trajectory,
    apply_nonlocal,
    coupled_solve,
    em_step,
    integrate,
)
from .errors import (
    AliasingError,
    ConfigError,
    IncommensurableGridsError,
    NonFiniteStateError,
    QuadratureConvergenceError,
)
from .experiments import (
    ConvergenceResult,
    EnsembleStats,
    ExperimentConfig,
    GuardReport,
    RateFit,
    convergence_in_dt,
    convergence_in_n,
    fit_rate,
    results_to_csv,
    run_ensemble,
    sine_moment_check,
)
from .grid import (
    GridFunction,
    Modulus,
    Partition,
    grid_function_from_csv,
    grid_function_to_csv,
    l2_distance,
    l2_norm,
    modulus_of_continuity,
    project_to_grid,
)
from .kernels import (
    Graphon,
    KernelMatrix,
    graphon_from_name,
    kernel_bounds,
    kernel_matrix_from_csv,
    kernel_matrix_to_csv,
    project_kernel,
    projection_error,
)
from .noise import (
    NoisePath,
    QWienerSpec,
    coarsen_increments,
    psi,
    psi_from_spectrum,
    qwiener_from_name,
    sample_increments,
    trace,
)

__all__ = [
    "__version__",
    "AliasingError",
    "ConfigError",
    "IncommensurableGridsError",
    "NonFiniteStateError",
    "QuadratureConvergenceError",
    "Partition",
    "GridFunction",
    "Modulus",
    "project_to_grid",
    "l2_distance",
    "l2_norm",
    "modulus_of_continuity",
    "grid_function_to_csv",
    "grid_function_from_csv",
    "Graphon",
    "KernelMatrix",
    "project_kernel",
    "kernel_bounds",
    "projection_error",
    "graphon_from_name",
    "kernel_matrix_to_csv",
    "kernel_matrix_from_csv",
    "QWienerSpec",
    "NoisePath",
    "trace",
    "sample_increments",
    "coarsen_increments",
    "psi",
    "psi_from_spectrum",
    "qwiener_from_name",
    "Drift",
    "Interaction",
    "Problem",
    "Trajectory",
    "apply_nonlocal",
    "em_step",
    "integrate",
    "coupled_solve",
    "ExperimentConfig",
    "EnsembleStats",
    "RateFit",
    "GuardReport",
    "ConvergenceResult",
    "run_ensemble",
    "convergence_in_n",
    "convergence_in_dt",
    "fit_rate",
    "sine_moment_check",
    "results_to_csv",
]
