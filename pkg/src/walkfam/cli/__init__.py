"""Command line layer: config loading, report writing, entry point."""

from .config import build_family, canonical_hash, load_config, validate_config
from .main import main
from .reports import version_string, write_csv_rows, write_json_report

__all__ = [
    "build_family",
    "canonical_hash",
    "load_config",
    "validate_config",
    "main",
    "version_string",
    "write_csv_rows",
    "write_json_report",
]
