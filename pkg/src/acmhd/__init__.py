"""Pseudo-spectral artificial-compressibility MHD solver and verification harness."""

__version__ = "0.1.0"

from .spectral import ContractError, Field, Grid3  # noqa: E402
from .solver import (  # noqa: E402
    AcState,
    IncState,
    StabilityError,
    Trajectory,
    integrate,
    make_initial_data,
    reference_step,
    strang_step,
)

__all__ = [
    "AcState",
    "ContractError",
    "Field",
    "Grid3",
    "IncState",
    "StabilityError",
    "Trajectory",
    "__version__",
    "integrate",
    "make_initial_data",
    "reference_step",
    "strang_step",
]
