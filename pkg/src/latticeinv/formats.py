"""File formats: binary PGM images, single-column CSV signals, MatrixMarket operators."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import FormatError
from .models import ImageGrid, canonical_csr
from .paths import atomic_bytes_write, atomic_text_write


def _pgm_tokens(payload: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(payload) and payload[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(payload):
            raise FormatError("Truncated PGM header")
        if payload[pos:pos + 1] == b"#":
            end = payload.find(b"\n", pos)
            pos = len(payload) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(payload) and not payload[pos:pos + 1].isspace():
            pos += 1
        tokens.append(payload[start:pos])
    # Exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path: Path) -> ImageGrid:
    """Load an 8-bit binary (P5) PGM image."""
    try:
        payload = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read PGM file '{path}': {e}") from e

    tokens, offset = _pgm_tokens(payload, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"'{path}' is not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"Malformed PGM header in '{path}'") from e
    if maxval <= 0 or maxval > 255:
        raise FormatError(f"Only 8-bit PGM is supported (maxval {maxval})")
    raster = np.frombuffer(payload, dtype=np.uint8, count=width * height, offset=offset) \
        if len(payload) - offset >= width * height else None
    if raster is None:
        raise FormatError(f"PGM raster in '{path}' is truncated")
    values = raster.reshape(height, width).astype(np.float64) * (255.0 / maxval)
    return ImageGrid(values)


def write_pgm(path: Path, image: ImageGrid) -> None:
    """Write an image as 8-bit binary PGM, clipping to [0, 255]."""
    pixels = np.clip(np.rint(image.values), 0, 255).astype(np.uint8)
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    atomic_bytes_write(path, header + pixels.tobytes())


def read_signal_csv(path: Path) -> ImageGrid:
    """Load a 1-D signal stored one value per line (an optional header is skipped)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"Cannot read CSV file '{path}': {e}") from e

    values = []
    for i, row in enumerate(csv.reader(io.StringIO(text))):
        if not row or not row[0].strip():
            continue
        try:
            values.append(float(row[0]))
        except ValueError:
            if i == 0:
                continue
            raise FormatError(f"Non-numeric value {row[0]!r} on line {i + 1} of '{path}'")
    if not values:
        raise FormatError(f"No values found in '{path}'")
    return ImageGrid(np.asarray(values))


def write_signal_csv(path: Path, signal: ImageGrid, header: str = "value") -> None:
    """Write a signal (or any grid, flattened) as a single CSV column."""
    rows = [[header]] + [[repr(float(x))] for x in signal.vector()]
    write_csv(path, rows)


def write_csv(path: Path, rows: Iterable[Sequence]) -> None:
    """Write RFC-4180 CSV rows atomically."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerows(rows)
    atomic_text_write(path, buffer.getvalue())


def read_grid(path: Path) -> ImageGrid:
    """Load a PGM image or CSV signal depending on the file suffix."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix in (".csv", ".txt"):
        return read_signal_csv(path)
    raise FormatError(f"Unsupported grid format '{suffix}' (expected .pgm or .csv)")


def write_grid(path: Path, grid: ImageGrid) -> Path:
    """Write a grid as PGM (2-D) or CSV (1-D); returns the path written."""
    path = Path(path)
    if grid.is_1d:
        path = path.with_suffix(".csv")
        write_signal_csv(path, grid)
    else:
        path = path.with_suffix(".pgm")
        write_pgm(path, grid)
    return path


def read_matrix(path: Path) -> sp.csr_matrix:
    """Load a MatrixMarket coordinate file as canonical CSR."""
    try:
        matrix = scipy.io.mmread(str(path))
    except (OSError, ValueError, RuntimeError) as e:
        raise FormatError(f"Cannot read MatrixMarket file '{path}': {e}") from e
    return canonical_csr(matrix)


def write_matrix(path: Path, matrix: sp.spmatrix, comment: str = "") -> None:
    """Write a sparse matrix in MatrixMarket coordinate format."""
    buffer = io.BytesIO()
    scipy.io.mmwrite(buffer, sp.coo_matrix(matrix), comment=comment, field="real", precision=17)
    atomic_bytes_write(path, buffer.getvalue())
