"""Physics-aware recurrent convolutional surrogate for 2D advection-diffusion-
reaction systems.

Trajectories are float64 numpy arrays shaped [T, C, H, W]; single snapshots
are [C, H, W]. The first two channels are always the velocity components
u_x, u_y.
"""

from ._core import (
    IoError,
    Model,
    NumericsError,
    SolverError,
    ValidationError,
    burgers_residual,
    burgers_trajectory,
    divergence,
    divergence_error,
    gradient,
    hotspot_series,
    laplacian,
    load_trajectory,
    rmse,
    save_trajectory,
    taylor_green,
    train,
)

__all__ = [
    "IoError",
    "Model",
    "NumericsError",
    "SolverError",
    "ValidationError",
    "burgers_residual",
    "burgers_trajectory",
    "divergence",
    "divergence_error",
    "gradient",
    "hotspot_series",
    "laplacian",
    "load_trajectory",
    "rmse",
    "save_trajectory",
    "taylor_green",
    "train",
]
