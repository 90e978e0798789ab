"""Deterministic wireless-sensor-network simulator for insider-attack defence.

Watchdog rules feed a per-node reputation store; neighbourhoods vote
misbehaving nodes out; packets travel in 30-byte RC5-sealed frames.
"""
from .scenario import ConfigError, Scenario, load_preset, load_scenario, loads_scenario
from .network import World

__version__ = "0.1.0"

__all__ = ["ConfigError", "Scenario", "World", "load_preset", "load_scenario", "loads_scenario"]
