"""Procedural piecewise-constant test images and signals."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterError
from .formats import read_grid
from .models import ImageGrid
from .operators import normalize_shape

# (start, end) as fractions of the signal length, and the level
STEP_SEGMENTS = [
    (0.00, 0.10, 0.0),
    (0.10, 0.25, 150.0),
    (0.25, 0.35, 60.0),
    (0.35, 0.55, 255.0),
    (0.55, 0.62, 100.0),
    (0.62, 0.80, 200.0),
    (0.80, 1.00, 20.0),
]

# (top, left, bottom, right) as fractions of the image size, and the level
SQUARES = [
    (0.10, 0.10, 0.40, 0.40, 230.0),
    (0.10, 0.55, 0.35, 0.80, 150.0),
    (0.50, 0.15, 0.85, 0.45, 90.0),
    (0.55, 0.55, 0.90, 0.90, 190.0),
    (0.65, 0.65, 0.78, 0.78, 40.0),
]
SQUARES_BACKGROUND = 20.0

# (row fraction, width in pixels, level); the first line is the low-contrast one
THIN_LINES = [
    (0.15, 2, 45.0),
    (0.30, 1, 200.0),
    (0.45, 2, 160.0),
    (0.60, 3, 230.0),
    (0.75, 1, 120.0),
    (0.88, 3, 180.0),
]
THIN_LINES_BACKGROUND = 30.0

KINDS = ("steps1d", "squares", "thinlines", "file")


def steps1d(n: int = 100) -> ImageGrid:
    """Piecewise-constant 1-D signal with jumps of varying height."""
    if n <= 0:
        raise ParameterError(f"Signal length must be positive, got {n}")
    signal = np.zeros(n)
    for start, end, level in STEP_SEGMENTS:
        signal[int(round(start * n)):int(round(end * n))] = level
    return ImageGrid(signal)


def squares(shape=(128, 128)) -> ImageGrid:
    """Axis-aligned rectangles of distinct intensities on a dark background."""
    rows, cols = normalize_shape(shape)
    image = np.full((rows, cols), SQUARES_BACKGROUND)
    for top, left, bottom, right, level in SQUARES:
        image[int(top * rows):int(bottom * rows), int(left * cols):int(right * cols)] = level
    return ImageGrid(image)


def thinlines(shape=(128, 128)) -> ImageGrid:
    """Horizontal lines of width 1 to 3 pixels spanning most of the width."""
    rows, cols = normalize_shape(shape)
    image = np.full((rows, cols), THIN_LINES_BACKGROUND)
    left, right = int(0.1 * cols), int(0.9 * cols)
    for position, width, level in THIN_LINES:
        top = min(int(position * rows), rows - width)
        image[top:top + width, left:right] = level
    return ImageGrid(image)


def generate_phantom(kind: str, shape=None, path: Path | None = None) -> ImageGrid:
    """Build a phantom by name; ``file`` loads a PGM image or CSV signal."""
    if kind == "steps1d":
        return steps1d(normalize_shape(shape or 100)[0])
    if kind == "squares":
        return squares(shape or (128, 128))
    if kind == "thinlines":
        return thinlines(shape or (128, 128))
    if kind == "file":
        if path is None:
            raise ParameterError("The file phantom needs a path")
        return read_grid(Path(path))
    raise ParameterError(f"Unknown phantom '{kind}' (expected one of {KINDS})")
