from __future__ import annotations

from .config import RunConfig, load_config, parse_config
from .output import write_csv, write_jsonl
from .sweep import ordered_map, resolve_threads

__all__ = (
    "RunConfig",
    "load_config",
    "ordered_map",
    "parse_config",
    "resolve_threads",
    "write_csv",
    "write_jsonl",
)
