"""Run directories and metadata headers shared by every writer."""

from __future__ import annotations

import datetime as _dt
import json
import os
from pathlib import Path

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj, **kw) -> str:
    return json.dumps(_plain(obj), sort_keys=True, **kw)


def comment_line(meta) -> str:
    """Single ``# {json}`` line; readers in this package skip such lines."""
    return "# " + dumps(meta) + "\n"


def skip_comments(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


def fresh_run_dir(parent, prefix: str, now: _dt.datetime | None = None) -> Path:
    """Create ``parent/prefix-YYYYmmdd-HHMMSS[-n]``; never reuses a directory."""
    now = now or _dt.datetime.now()
    parent = Path(parent)
    parent.mkdir(parents=True, exist_ok=True)
    base = f"{prefix}-{now.strftime('%Y%m%d-%H%M%S')}"
    n = 0
    while True:
        path = parent / (base if n == 0 else f"{base}-{n}")
        try:
            os.mkdir(path)
            return path
        except FileExistsError:
            n += 1


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj, indent=2) + "\n")
