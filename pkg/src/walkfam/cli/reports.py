"""Report writers: JSON documents and CSV tables with provenance stamps.

Every artifact records the config hash, the master seed, and the package
version, so any output file can be traced to the exact inputs that made
it.  CSV output uses '.' decimals, '\\n' line endings, and UTF-8; floats
are written with repr so a rerun is byte-identical.
"""

import csv
import json
from pathlib import Path

from .. import __version__

__all__ = [
    "version_string",
    "provenance",
    "write_json_report",
    "write_csv_rows",
    "read_json_report",
]


def version_string():
    return f"walkfam-{__version__}"


def provenance(config_hash, seed):
    return {"config_hash": config_hash, "seed": int(seed),
            "version": version_string()}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "as_dict"):
        return _jsonable(x.as_dict())
    if hasattr(x, "item"):            # numpy scalars
        return x.item()
    return x


def write_json_report(path, payload):
    """Write one JSON report; floats keep full repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(_jsonable(payload), f, indent=1, sort_keys=True)
        f.write("\n")
    return path


def write_csv_rows(path, header, rows, meta=None):
    """Write a CSV table, provenance as leading comment lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        if meta:
            for k in sorted(meta):
                f.write(f"# {k}: {meta[k]}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    return path


def read_json_report(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)
