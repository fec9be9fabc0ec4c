"""Transformer-checkpoint to shard-file export bridge for the lateri engine."""

from .export import ExportConfig, Exporter
from .shardio import read_shard, write_shard

__version__ = "0.1.0"

__all__ = ["ExportConfig", "Exporter", "read_shard", "write_shard"]
