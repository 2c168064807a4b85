"""Simulation, identification and control of turbidostat optical density."""
from .kernels import BACKEND
from .model import GrowthParams, SimState, measure, simulate_open_loop, step_zoh

__all__ = ["BACKEND", "GrowthParams", "SimState", "measure", "simulate_open_loop", "step_zoh"]
__version__ = "0.1.0"
