"""Crossbar-mapped spiking neural network simulator with energy/latency/area estimation."""

__version__ = "0.1.0"

from .config import HardwareConfig, load_config
from .mapper import MappedNetwork, map_network
from .model import LayerSpec, ModelBundle, build_model, load_model, save_model

__all__ = [
    "__version__", "HardwareConfig", "load_config", "MappedNetwork", "map_network", "LayerSpec",
    "ModelBundle", "build_model", "load_model", "save_model",
]
