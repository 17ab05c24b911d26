"""Default output locations and atomic file writers."""

import json
import os
import tempfile
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

load_dotenv()

# Experiment artifacts land here unless a config or --out says otherwise
DEFAULT_OUTPUT_DIR = Path(os.environ.get("LATTICEINV_OUTPUT_DIR", "latticeinv-output"))

# Log level for the CLI when --verbose is not given
DEFAULT_LOG_LEVEL = os.environ.get("LATTICEINV_LOG_LEVEL", "INFO")

REPORT_FILE = "report.json"
RESOLVED_CONFIG_FILE = "config.resolved.json"


def ensure_dir(path: Path) -> Path:
    """Ensure a directory exists and return it."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _json_default(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _atomic_write(path: Path, write, mode: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        if "b" in mode:
            with os.fdopen(fd, mode) as f:
                write(f)
        else:
            with os.fdopen(fd, mode, encoding="utf-8", newline="") as f:
                write(f)
        os.replace(tmp_path, path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise


def atomic_json_write(path: Path, data, *, indent: int = 2) -> None:
    """Write JSON data to a file atomically.

    Writes to a temporary file in the same directory, then renames it
    to the target path. numpy scalars and arrays are converted to lists.
    """
    _atomic_write(
        path,
        lambda f: json.dump(data, f, indent=indent, default=_json_default, allow_nan=True),
        "w",
    )


def atomic_text_write(path: Path, text: str) -> None:
    """Write text to a file atomically."""
    _atomic_write(path, lambda f: f.write(text), "w")


def atomic_bytes_write(path: Path, payload: bytes) -> None:
    """Write raw bytes to a file atomically."""
    _atomic_write(path, lambda f: f.write(payload), "wb")
