"""Flit-level wormhole network simulator with dynamic reconfiguration.

Implements deadlock-based reconfiguration (DBR) alongside the Double
Scheme (DS) and Simple Reconfiguration (SR) baselines.
"""

from .sim import ConfigError, SimConfig, Simulation, TopologyConfig, run
from .reconfig import MechanismUnavailableError

__version__ = "0.1.0"

__all__ = ["ConfigError", "MechanismUnavailableError", "SimConfig", "Simulation", "TopologyConfig", "run"]
