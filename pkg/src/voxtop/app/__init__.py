"""Application layer: presets, configuration, file formats, CLI, benchmarks."""

from .config import RunConfig, parse_config
from .io import checkpoint_load, checkpoint_save, export_vti, read_vti
from .presets import PRESETS, instantiate

__all__ = [
    "RunConfig",
    "parse_config",
    "checkpoint_load",
    "checkpoint_save",
    "export_vti",
    "read_vti",
    "PRESETS",
    "instantiate",
]
