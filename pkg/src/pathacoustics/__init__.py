"""Pathline-averaged base flows, acoustic/vortical splitting and sound sources
on periodic grids."""
from .baseflow import BaseFlow, compute_base_flow
from .errors import CFLError, ContractError, GridMismatchError, WindowError
from .fields import Grid, ScalarField, SpectralField, VectorField
from .perturbation import PerturbationState
from .scenarios import FlowProvider, FlowSnapshot, make_provider
from .splitting import SplitVelocity, helmholtz_split

__all__ = [
    "BaseFlow",
    "CFLError",
    "ContractError",
    "FlowProvider",
    "FlowSnapshot",
    "Grid",
    "GridMismatchError",
    "PerturbationState",
    "ScalarField",
    "SpectralField",
    "SplitVelocity",
    "VectorField",
    "WindowError",
    "compute_base_flow",
    "helmholtz_split",
    "make_provider",
]
__version__ = "0.1.0"
