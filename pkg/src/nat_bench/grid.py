"""Probability grids and the elementary operations on them.

A saliency grid is a plain 2-D ``float64`` numpy array of shape
``(height, width)``; a 1-D array is accepted everywhere and treated as a
single row. Operations never modify their input.
"""

import math
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .errors import (
    AllZeroError,
    BadCoefficientError,
    FormatError,
    NegativeEntryError,
)

SUM_TOL = 1e-9
FILE_SUM_TOL = 1e-6
# Grids this close to unit mass count as normalized; keeps normalize idempotent.
_NORMALIZED_TOL = 1e-12


def as_grid(values):
    """Return ``values`` as a float64 array with 1 or 2 dimensions."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.size == 0:
        raise ValueError(f"grid must be a non-empty 1-D or 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("grid contains non-finite values")
    return arr


def check_grid(values, tol=SUM_TOL):
    """Validate a probability grid: non-negative entries summing to one."""
    arr = as_grid(values)
    if np.any(arr < 0):
        raise NegativeEntryError("grid has negative entries")
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise ValueError(f"grid sums to {total!r}, expected 1")
    return arr


def uniform(shape):
    shape = tuple(shape)
    return np.full(shape, 1.0 / math.prod(shape))


def normalize(raw):
    """Scale a non-negative grid so that it sums to one.

    Raises NegativeEntryError for negative input and AllZeroError when
    there is no mass to normalize.
    """
    arr = as_grid(raw)
    if np.any(arr < 0):
        raise NegativeEntryError("cannot normalize a grid with negative entries")
    total = arr.sum()
    if total <= 0:
        raise AllZeroError("cannot normalize an all-zero grid")
    if abs(total - 1.0) <= _NORMALIZED_TOL:
        return arr.copy()
    out = arr / total
    if abs(out.sum() - 1.0) > _NORMALIZED_TOL:
        out = out / out.sum()
    return out


def gaussian_kernel(sigma):
    """Discrete Gaussian taps on ``[-r, r]`` with ``r = ceil(3 sigma)``, summing to one."""
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(over="ignore"):  # tiny sigma: off-center taps underflow to 0
        taps = np.exp(-0.5 * (offsets / sigma) ** 2)
    return taps / taps.sum()


def gaussian_blur(grid, sigma):
    """Separable Gaussian blur with zero padding, renormalized to unit mass.

    Mass that the truncated kernel pushes off the grid edge is dropped and
    the result is renormalized. ``sigma == 0`` returns the input unchanged.
    """
    arr = as_grid(grid)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return arr.copy()
    return normalize(blur_unnormalized(arr, sigma))


def blur_unnormalized(grid, sigma):
    """The linear part of :func:`gaussian_blur`: truncated-kernel convolution only."""
    arr = as_grid(grid)
    if sigma == 0:
        return arr.copy()
    kernel = gaussian_kernel(sigma)
    out = arr
    for axis in range(arr.ndim):
        if arr.shape[axis] > 1:
            out = correlate1d(out, kernel, axis=axis, mode="constant", cval=0.0)
    return out


def mix_uniform(grid, eps):
    """Blend with the uniform grid: ``(1 - eps) * grid + eps * uniform``."""
    if not 0.0 <= eps <= 1.0:
        raise BadCoefficientError(f"mixing coefficient must lie in [0, 1], got {eps}")
    arr = as_grid(grid)
    if eps == 0:
        return arr.copy()
    if eps == 1:
        return uniform(arr.shape)
    return (1.0 - eps) * arr + eps / arr.size


def to_2d(grid):
    arr = as_grid(grid)
    return arr.reshape(1, -1) if arr.ndim == 1 else arr


# --- SGRID v1 text format -------------------------------------------------


def format_sgrid(grid):
    arr = to_2d(grid)
    height, width = arr.shape
    lines = [f"SGRID 1 {width} {height}"]
    for row in arr:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_sgrid(text, require_pdf=True):
    """Parse SGRID v1 text into a ``(height, width)`` array.

    With ``require_pdf=False`` the unit-sum check is skipped, which is how
    auxiliary arrays such as a pointwise standard deviation are read back.
    """
    tokens = text.split()
    if len(tokens) < 4 or tokens[0] != "SGRID" or tokens[1] != "1":
        raise FormatError("missing 'SGRID 1 <width> <height>' header")
    try:
        width, height = int(tokens[2]), int(tokens[3])
        values = np.array([float(t) for t in tokens[4:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"malformed SGRID body: {exc}") from None
    if width < 1 or height < 1:
        raise FormatError("SGRID dimensions must be positive")
    if values.size != width * height:
        raise FormatError(f"expected {width * height} values, found {values.size}")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise FormatError("SGRID values must be finite and non-negative")
    if require_pdf and abs(values.sum() - 1.0) > FILE_SUM_TOL:
        raise FormatError(f"SGRID values sum to {values.sum()!r}, expected 1")
    return values.reshape(height, width)


def write_sgrid(path, grid):
    Path(path).write_text(format_sgrid(grid))


def read_sgrid(path, require_pdf=True):
    return parse_sgrid(Path(path).read_text(), require_pdf)
