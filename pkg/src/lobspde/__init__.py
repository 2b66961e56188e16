"""Stochastic order-book dynamics: factor simulation, spectral evolution,
mid-price volatility and parameter estimation from book snapshots."""
from .lob_model import BookDensity, FactorState, ModelParams, Trajectory
from .sde_core import LinearSDEParams, TimeGrid
from .spectral import SideParams

__all__ = ["BookDensity", "FactorState", "LinearSDEParams", "ModelParams", "SideParams",
           "TimeGrid", "Trajectory"]
__version__ = "0.1.0"
