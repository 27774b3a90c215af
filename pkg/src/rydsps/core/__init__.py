"""Domain types, config ingestion and tag-file formats."""
from .config import Config, ConfigError, dump_config, load_config, parse_config, save_config
from .params import (
    HOM_SPLITTER_POWER,
    MHZ,
    TWO_PI,
    BeamSplitterCoeffs,
    DetectorModel,
    OpticalPath,
    PhysicalParams,
    PhysicsWarning,
    PulseSchedule,
    SimulationSettings,
    SourceSettings,
    ValidationError,
    path_efficiency,
    stage_list,
)
from .tags import TagFormatError, TimeTagStream, read_tags, write_tags

__all__ = [
    "BeamSplitterCoeffs", "Config", "ConfigError", "DetectorModel", "HOM_SPLITTER_POWER", "MHZ",
    "OpticalPath", "PhysicalParams", "PhysicsWarning", "PulseSchedule", "SimulationSettings",
    "SourceSettings", "TWO_PI", "TagFormatError", "TimeTagStream", "ValidationError", "dump_config",
    "load_config", "parse_config", "path_efficiency", "read_tags", "save_config", "stage_list",
    "write_tags",
]
