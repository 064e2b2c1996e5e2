"""Staggered minimizing-movement simulator for poro-visco-elastic solids."""

__version__ = "0.1.0"

from .config import RunConfig, TimeFunction, benchmark_config, equilibrium_config, validate_config
from .diffusion import DiffSolveConfig, fixed_point_diffusion
from .errors import (
    ConfigInvalid,
    DegenerateDeformation,
    FixedPointDiverged,
    InvalidParams,
    InversionFailure,
    MaxIterationsExceeded,
    PoroviscError,
)
from .fields import Grid, Load
from .materials import (
    BiotMaterial,
    BiotParams,
    LawBundle,
    NeoHookeanEntropyMaterial,
    NeoHookeanEntropyParams,
    invert_chemical_potential,
    make_material,
)
from .mechanics import MechSolveConfig, incremental_gradient, solve_mechanical_step
from .simulation import compute_edi_slack, eta_tau_sweep, run_simulation

__all__ = [
    "BiotMaterial", "BiotParams", "ConfigInvalid", "DegenerateDeformation", "DiffSolveConfig",
    "FixedPointDiverged", "Grid", "InvalidParams", "InversionFailure", "LawBundle", "Load",
    "MaxIterationsExceeded", "MechSolveConfig", "NeoHookeanEntropyMaterial", "NeoHookeanEntropyParams",
    "PoroviscError", "RunConfig", "TimeFunction", "benchmark_config", "compute_edi_slack", "equilibrium_config",
    "eta_tau_sweep", "fixed_point_diffusion", "incremental_gradient", "invert_chemical_potential",
    "make_material", "run_simulation", "solve_mechanical_step", "validate_config",
]
