"""Inter-observer consistency: how well n observers predict one more.

For each subset size n, random n-observer maps are scored by NSS at the
fixations of a disjoint held-out observer. The curve flattens once adding
observers no longer changes the map much.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TooFewObserversError, TooShortError
from .grid import blur_unnormalized
from .reconstruct import FixationSet, fixation_histogram
from .rng import STREAM_IOC, as_rng, child_rng

DEFAULT_REALIZATIONS = 20


@dataclass
class IocCurve:
    n_values: list
    mean: list
    std: list
    realizations: int
    skipped: list = field(default_factory=list)

    def __post_init__(self):
        if not len(self.n_values) == len(self.mean) == len(self.std):
            raise ValueError("curve lists must have equal length")
        if not self.skipped:
            self.skipped = [0] * len(self.n_values)

    def __len__(self):
        return len(self.n_values)


def _observers(per_observer):
    if isinstance(per_observer, FixationSet):
        return per_observer.by_observer()
    return list(per_observer)


def ioc_curve(per_observer, sigma, shape, realizations=DEFAULT_REALIZATIONS, rng=None):
    """IOC curve of one frame for n = 1 .. observers - 1.

    ``per_observer`` is a FixationSet carrying observer ids (split and
    ordered by id) or a list with one FixationSet per observer. Realizations
    whose subset map is constant have no NSS; they are skipped and counted
    in ``IocCurve.skipped``.
    """
    observers = _observers(per_observer)
    count = len(observers)
    if count < 3:
        raise TooFewObserversError(f"IOC needs at least 3 observers, got {count}")
    rng = as_rng(rng)
    # Blur is linear and NSS ignores scale, so the n-observer map can be
    # scored from a running sum of per-observer blurred histograms; this
    # equals scoring sr_reconstruct of the pooled fixations.
    blurred = np.stack([blur_unnormalized(fixation_histogram(o, shape), sigma).ravel() for o in observers])
    cells = [np.sort(o.flat_indices(shape)) for o in observers]
    # One permutation per realization serves every n: the held-out observer is
    # its last entry and the n-subset its first n entries. Each point keeps the
    # uniform subset/held-out distribution while neighbouring points share draws,
    # which keeps Monte-Carlo noise out of the curve's increments.
    scores = np.full((realizations, count - 1), np.nan)
    for r in range(realizations):
        order = rng.permutation(count)
        maps = np.cumsum(blurred[order[:-1]], axis=0)
        scores[r] = _row_nss(maps, cells[order[-1]])
    n_values, means, stds, skipped = [], [], [], []
    for n in range(1, count):
        col = scores[:, n - 1]
        valid = col[~np.isnan(col)]
        n_values.append(n)
        means.append(float(valid.mean()) if valid.size else float("nan"))
        stds.append(float(valid.std()) if valid.size else float("nan"))
        skipped.append(int(realizations - valid.size))
    return IocCurve(n_values, means, stds, int(realizations), skipped)


def _row_nss(maps, cells):
    """NSS of every row of ``maps`` at ``cells``; NaN for constant rows."""
    mean = maps.mean(axis=1)
    std = maps.std(axis=1)
    flat_rows = np.ptp(maps, axis=1) == 0
    std[flat_rows] = 1.0
    out = (maps[:, cells].mean(axis=1) - mean) / std
    out[flat_rows] = np.nan
    return out


def ioc_convergence_gradient(curve):
    """Absolute slope of the last segment of the mean curve, per observer."""
    return _segment_slope(curve, -2)


def ioc_initial_gradient(curve):
    """Absolute slope of the first segment of the mean curve, per observer."""
    return _segment_slope(curve, 0)


def _segment_slope(curve, i):
    if len(curve) < 2:
        raise TooShortError("gradient needs a curve with at least 2 points")
    dn = curve.n_values[i + 1] - curve.n_values[i]
    return abs(curve.mean[i + 1] - curve.mean[i]) / dn


def dataset_ioc(frames, sigma, shape, stride=1, realizations=DEFAULT_REALIZATIONS, seed=0, threads=1):
    """Pointwise average of per-frame curves over every ``stride``-th frame.

    ``frames`` is a ``{frame_id: fixations}`` mapping, or a sequence of
    objects with ``frame_id`` and ``fixations`` attributes. Each frame draws
    from its own ``(seed, frame_id)`` stream, so the average does not depend
    on ``threads``. Curves are truncated to the shortest one.
    """
    if isinstance(frames, dict):
        items = [(k, frames[k]) for k in sorted(frames)]
    else:
        items = [(getattr(f, "frame_id", i), getattr(f, "fixations", f)) for i, f in enumerate(frames)]
    sampled = items[::stride]
    if not sampled:
        raise ValueError("no frames to average")

    def one(i):
        frame_id, fix = sampled[i]
        return ioc_curve(fix, sigma, shape, realizations, child_rng(seed, frame_id, STREAM_IOC))

    if threads <= 1:
        curves = [one(i) for i in range(len(sampled))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            curves = list(pool.map(one, range(len(sampled))))
    length = min(len(c) for c in curves)
    means = np.array([c.mean[:length] for c in curves])
    stds = np.array([c.std[:length] for c in curves])
    skipped = np.array([c.skipped[:length] for c in curves]).sum(axis=0)
    return IocCurve(
        list(curves[0].n_values[:length]),
        means.mean(axis=0).tolist(),
        stds.mean(axis=0).tolist(),
        int(realizations),
        skipped.tolist(),
    )


def format_ioc_csv(curve):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "mean_nss", "std_nss", "realizations"])
    for n, m, s in zip(curve.n_values, curve.mean, curve.std):
        writer.writerow([n, repr(m), repr(s), curve.realizations])
    return buf.getvalue()


def write_ioc_csv(path, curve):
    Path(path).write_text(format_ioc_csv(curve))
