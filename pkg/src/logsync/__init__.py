"""Logical synchronization of clock-driven machines linked by signals."""

from .geometry import C, G, Metric, Position, null_tof, radar_distance, proper_rate
from .openmachine import HistoryRecord, OpenMachine, Reading

__all__ = ["C", "G", "Metric", "Position", "null_tof", "radar_distance", "proper_rate",
           "HistoryRecord", "OpenMachine", "Reading"]

SCHEMA_VERSION = "1.0"
