"""Sampling fixations from a map and rebuilding a map from fixations.

``sr_reconstruct`` is the standard gaze-map pipeline: one delta per
fixation, Gaussian blur, normalize. ``resample_once`` chains sampling and
reconstruction, which is how bootstrap realizations are produced. The KDE
"gold standard" adds a uniform floor whose weight, together with the
bandwidth, is chosen by leave-one-observer-out likelihood.
"""

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import (
    EmptyFixationsError,
    FormatError,
    TooFewObserversError,
    ZeroCountError,
)
from .grid import as_grid, check_grid, gaussian_blur, mix_uniform, normalize
from .rng import as_rng

DEFAULT_BANDWIDTHS = (1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_MIX_EPS = (0.0, 0.01, 0.05, 0.1, 0.2)
# held-out fixations in zero-density cells score log(PROB_FLOOR)
PROB_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FixationSet:
    """Fixated grid cells of one frame.

    ``points`` is an ``(n, 2)`` integer array of ``(col, row)`` pairs; for
    1-D grids ``row`` is always 0. ``observer_ids`` optionally labels each
    point with the observer that produced it.
    """

    points: np.ndarray
    observer_ids: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if self.observer_ids is not None:
            ids = np.asarray(self.observer_ids, dtype=np.int64).reshape(-1)
            if ids.shape[0] != pts.shape[0]:
                raise ValueError("observer_ids must parallel points")
            object.__setattr__(self, "observer_ids", ids)

    @classmethod
    def from_cells(cls, cols, rows=None, observer_ids=None):
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        rows = np.zeros_like(cols) if rows is None else np.asarray(rows, dtype=np.int64).reshape(-1)
        return cls(np.column_stack([cols, rows]), observer_ids)

    def __len__(self):
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FixationSet):
            return NotImplemented
        if not np.array_equal(self.points, other.points):
            return False
        if self.observer_ids is None or other.observer_ids is None:
            return self.observer_ids is None and other.observer_ids is None
        return np.array_equal(self.observer_ids, other.observer_ids)

    @property
    def cols(self):
        return self.points[:, 0]

    @property
    def rows(self):
        return self.points[:, 1]

    def flat_indices(self, shape):
        """Row-major cell indices into a grid of ``shape``."""
        height, width = _hw(shape)
        self.check_bounds(shape)
        return self.rows * width + self.cols

    def check_bounds(self, shape):
        height, width = _hw(shape)
        if len(self) and (
            self.cols.min() < 0 or self.rows.min() < 0
            or self.cols.max() >= width or self.rows.max() >= height
        ):
            raise ValueError(f"fixation outside grid of shape {height}x{width}")

    def by_observer(self):
        """Split into one FixationSet per observer, ordered by observer id."""
        if self.observer_ids is None:
            raise ValueError("fixations carry no observer ids")
        out = []
        for oid in np.unique(self.observer_ids):
            mask = self.observer_ids == oid
            out.append(FixationSet(self.points[mask], self.observer_ids[mask]))
        return out

    @classmethod
    def concat(cls, sets):
        sets = list(sets)
        if not sets:
            return cls(np.empty((0, 2), dtype=np.int64))
        pts = np.concatenate([s.points for s in sets])
        if all(s.observer_ids is not None for s in sets):
            ids = np.concatenate([s.observer_ids for s in sets])
        else:
            ids = None
        return cls(pts, ids)


@dataclass(frozen=True)
class GoldStandardParams:
    bandwidth: float
    mix_eps: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if not 0.0 <= self.mix_eps <= 1.0:
            raise ValueError("mix_eps must lie in [0, 1]")


def _hw(shape):
    shape = tuple(int(s) for s in shape)
    if len(shape) == 1:
        return 1, shape[0]
    if len(shape) == 2:
        return shape
    raise ValueError(f"grid shape must have 1 or 2 dimensions, got {shape}")


def sample_fixations(pdf, n, rng=None):
    """Draw ``n`` i.i.d. cells from the categorical distribution ``pdf``.

    Uses inverse-CDF lookup in the prefix-sum table of the flattened grid,
    so zero-probability cells are never returned.
    """
    if n < 1:
        raise ZeroCountError(f"fixation count must be >= 1, got {n}")
    p = check_grid(pdf)
    rng = as_rng(rng)
    cdf = np.cumsum(p.ravel())
    u = rng.random(int(n)) * cdf[-1]
    flat = np.searchsorted(cdf, u, side="right")
    np.minimum(flat, cdf.size - 1, out=flat)
    width = p.shape[-1]
    return FixationSet.from_cells(flat % width, flat // width)


def fixation_histogram(fixations, shape):
    """Count of fixations per cell, as a float array of ``shape``."""
    counts = np.bincount(fixations.flat_indices(shape), minlength=math.prod(_hw(shape)))
    return counts.astype(np.float64).reshape(shape)


def sr_reconstruct(fixations, sigma, shape):
    """Blurred, normalized fixation histogram (equal-variance Gaussian mixture)."""
    if len(fixations) == 0:
        raise EmptyFixationsError("cannot reconstruct a map from zero fixations")
    hist = fixation_histogram(fixations, shape)
    return normalize(gaussian_blur(hist, sigma))


def resample_once(measured, n, sigma, rng=None, return_fixations=False):
    """One bootstrap realization: sample ``n`` cells from ``measured`` and rebuild."""
    measured = as_grid(measured)
    fix = sample_fixations(measured, n, rng)
    out = sr_reconstruct(fix, sigma, measured.shape)
    return (out, fix) if return_fixations else out


def kde_reconstruct(fixations, params, shape):
    """Gaussian KDE of the fixations mixed with a uniform floor."""
    return mix_uniform(sr_reconstruct(fixations, params.bandwidth, shape), params.mix_eps)


def loo_log_likelihood(per_observer, shape, bandwidths, eps_values):
    """Leave-one-observer-out log-likelihood table, shape ``(len(bw), len(eps))``.

    Each held-out observer's fixations are scored under the KDE built from
    the remaining observers. Cells with zero density score ``log(1e-12)``.
    """
    per_observer = list(per_observer)
    if len(per_observer) < 2:
        raise TooFewObserversError("leave-one-out needs at least 2 observers")
    if any(len(f) == 0 for f in per_observer):
        raise EmptyFixationsError("every observer needs at least one fixation")
    shape = tuple(shape)
    size = math.prod(_hw(shape))
    hists = [fixation_histogram(f, shape) for f in per_observer]
    total = np.sum(hists, axis=0)
    eps_arr = np.asarray(eps_values, dtype=np.float64)
    scores = np.zeros((len(bandwidths), len(eps_arr)))
    for b, bw in enumerate(bandwidths):
        for held, hist in zip(per_observer, hists):
            density = normalize(gaussian_blur(total - hist, bw)).ravel()
            p = density[held.flat_indices(shape)]
            # rows: eps candidates, cols: held-out fixations
            mixed = (1.0 - eps_arr)[:, None] * p[None, :] + eps_arr[:, None] / size
            logp = np.log(np.maximum(mixed, PROB_FLOOR))
            scores[b] += logp.sum(axis=1)
    return scores


def fit_gold_standard(per_observer, shape, bandwidths=DEFAULT_BANDWIDTHS, eps_values=DEFAULT_MIX_EPS):
    """Grid-search the KDE bandwidth and uniform weight by held-out likelihood.

    Ties go to the pair that comes first when iterating bandwidths in the
    outer loop and mixing weights in the inner loop.
    """
    scores = loo_log_likelihood(per_observer, shape, bandwidths, eps_values)
    best = None
    for b, bw in enumerate(bandwidths):
        for e, eps in enumerate(eps_values):
            if best is None or scores[b, e] > scores[best]:
                best = (b, e)
    return GoldStandardParams(float(bandwidths[best[0]]), float(eps_values[best[1]]))


class GoldStandardKDE(BaseEstimator):
    """Per-frame KDE gold standard with leave-one-out parameter selection.

    Parameters
    ----------
    shape : tuple of int
        Grid shape the fixations index into.
    bandwidths, eps_values : sequence of float
        Candidate KDE bandwidths (cells) and uniform mixing weights.

    Attributes
    ----------
    params_ : GoldStandardParams
    scores_ : ndarray of shape (n_bandwidths, n_eps)
        Leave-one-out log-likelihood of every candidate pair.
    """

    def __init__(self, shape=(64, 64), bandwidths=DEFAULT_BANDWIDTHS, eps_values=DEFAULT_MIX_EPS):
        self.shape = shape
        self.bandwidths = bandwidths
        self.eps_values = eps_values

    def fit(self, X, y=None):
        """``X`` is a sequence of per-observer FixationSets, or one set with observer ids."""
        per_observer = X.by_observer() if isinstance(X, FixationSet) else list(X)
        self.params_ = fit_gold_standard(per_observer, self.shape, self.bandwidths, self.eps_values)
        self.scores_ = loo_log_likelihood(per_observer, self.shape, self.bandwidths, self.eps_values)
        self.bandwidth_ = self.params_.bandwidth
        self.mix_eps_ = self.params_.mix_eps
        self.n_observers_ = len(per_observer)
        return self

    def transform(self, X):
        """Reconstruct the gold-standard map from the given fixations."""
        check_is_fitted(self, "params_")
        fix = FixationSet.concat(X) if not isinstance(X, FixationSet) else X
        return kde_reconstruct(fix, self.params_, self.shape)

    def score(self, X, y=None):
        """Leave-one-out log-likelihood of ``X`` at the fitted parameters."""
        check_is_fitted(self, "params_")
        per_observer = X.by_observer() if isinstance(X, FixationSet) else list(X)
        table = loo_log_likelihood(per_observer, self.shape, [self.bandwidth_], [self.mix_eps_])
        return float(table[0, 0])


# --- FIXCSV v1 --------------------------------------------------------------

FIXCSV_HEADER = ["frame_id", "observer_id", "col", "row"]


def format_fixcsv(frames):
    """``frames`` maps frame_id -> FixationSet (observer ids default to 0..n-1)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FIXCSV_HEADER)
    for frame_id in sorted(frames):
        fix = frames[frame_id]
        ids = fix.observer_ids if fix.observer_ids is not None else np.arange(len(fix))
        for oid, (col, row) in zip(ids, fix.points):
            writer.writerow([int(frame_id), int(oid), int(col), int(row)])
    return buf.getvalue()


def parse_fixcsv(text, shape):
    """Parse FIXCSV text into ``{frame_id: FixationSet}`` checked against ``shape``."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != FIXCSV_HEADER:
        raise FormatError(f"FIXCSV header must be {','.join(FIXCSV_HEADER)}")
    height, width = _hw(shape)
    rows = {}
    for lineno, record in enumerate(reader, start=2):
        if not record or all(not f.strip() for f in record):
            continue
        if len(record) != 4:
            raise FormatError(f"line {lineno}: expected 4 fields, got {len(record)}")
        try:
            frame_id, oid, col, row = (int(f) for f in record)
        except ValueError:
            raise FormatError(f"line {lineno}: non-integer field") from None
        if not (0 <= col < width and 0 <= row < height):
            raise FormatError(f"line {lineno}: cell ({col}, {row}) outside {height}x{width} grid")
        rows.setdefault(frame_id, []).append((oid, col, row))
    out = {}
    for frame_id in sorted(rows):
        recs = np.array(rows[frame_id], dtype=np.int64)
        out[frame_id] = FixationSet(recs[:, 1:], recs[:, 0])
    return out


def write_fixcsv(path, frames):
    Path(path).write_text(format_fixcsv(frames))


def read_fixcsv(path, shape):
    return parse_fixcsv(Path(path).read_text(), shape)
