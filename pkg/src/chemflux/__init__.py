"""Structured-grid simulator for chemotaxis coupled to (Navier-)Stokes flow."""

from .config import ConfigError, SimulationConfig, load_config, loads
from .grid import GridSpec, make_grid
from .runner import RunSummary, SimulationState, make_initial_data, run_simulation

__all__ = [
    "ConfigError",
    "GridSpec",
    "RunSummary",
    "SimulationConfig",
    "SimulationState",
    "load_config",
    "loads",
    "make_grid",
    "make_initial_data",
    "run_simulation",
]

__version__ = "0.1.0"
