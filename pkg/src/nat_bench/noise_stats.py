"""Bootstrap statistics of the measured-vs-true discrepancy.

The true map is unknown, so the mean and variance of ``d(x, x~)`` are
approximated by those of ``d(x~, x~~)``, where every ``x~~`` is rebuilt from
``n`` cells sampled out of the measured map ``x~`` itself. The ideal-side
estimator (sampling from a known truth) exists only for validation studies.
"""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import FormatError, TooFewRealizationsError
from .grid import as_grid
from .metrics import Discrepancy, eval_discrepancy
from .reconstruct import resample_once
from .rng import STREAM_BOOTSTRAP, STREAM_IDEAL, as_rng, child_rng

DEFAULT_REALIZATIONS = 10


@dataclass(frozen=True)
class NoiseStats:
    mean: float
    variance: float
    realizations: int
    observer_count: int
    discrepancy: Discrepancy

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be >= 0")
        if self.realizations < 2:
            raise TooFewRealizationsError("statistics need at least 2 realizations")

    @property
    def std(self):
        return float(np.sqrt(self.variance))


def _bootstrap(source, n, sigma, d, m, rng):
    if m < 2:
        raise TooFewRealizationsError(f"need m >= 2 realizations, got {m}")
    source = as_grid(source)
    rng = as_rng(rng)
    values = np.empty(m)
    for k in range(m):
        resample, fix = resample_once(source, n, sigma, rng, return_fixations=True)
        values[k] = eval_discrepancy(d, source, resample, fix)
    return NoiseStats(
        mean=float(values.mean()),
        variance=float(values.var(ddof=1)),
        realizations=int(m),
        observer_count=int(n),
        discrepancy=d,
    ), values


def estimate_noise_stats(measured, n, sigma, d=None, m=DEFAULT_REALIZATIONS, rng=None):
    """Mean and unbiased variance of ``d(measured, x~~)`` over ``m`` resamples.

    Each resample's own sampled cells serve as the reference fixations, so
    fixation-based discrepancies are handled the same way as map-based ones.
    """
    d = Discrepancy.KLD() if d is None else d
    return _bootstrap(measured, n, sigma, d, m, rng)[0]


def estimate_ideal_stats(truth, n, sigma, d=None, m=DEFAULT_REALIZATIONS, rng=None):
    """Same estimator with the true map as the source; validation use only."""
    d = Discrepancy.KLD() if d is None else d
    return _bootstrap(truth, n, sigma, d, m, rng)[0]


def discrepancy_samples(source, n, sigma, d=None, m=DEFAULT_REALIZATIONS, rng=None):
    """Raw per-realization discrepancy values behind the statistics."""
    d = Discrepancy.KLD() if d is None else d
    return _bootstrap(source, n, sigma, d, m, rng)[1]


def approximation_error_study(truths, n_values, sigma, d=None, m=200, seed=0):
    """How well bootstrap statistics of one measured map track the ideal ones.

    For every truth and ``n``: ideal stats from realizations drawn from the
    truth; one measured map drawn from the truth; bootstrap stats from that
    map. Returns one row per ``n`` with the mean absolute percentage error
    (as a fraction) of mean and variance, averaged over truths, and the
    per-truth relative errors.
    """
    d = Discrepancy.KLD() if d is None else d
    rows = []
    for j, n in enumerate(n_values):
        err_mean, err_var = [], []
        for t, truth in enumerate(truths):
            ideal = estimate_ideal_stats(truth, n, sigma, d, m, child_rng(seed, t, j, STREAM_IDEAL))
            measured = resample_once(truth, n, sigma, child_rng(seed, t, j, STREAM_IDEAL, 1))
            approx = estimate_noise_stats(measured, n, sigma, d, m, child_rng(seed, t, j, STREAM_BOOTSTRAP))
            err_mean.append(_rel_err(approx.mean, ideal.mean))
            err_var.append(_rel_err(approx.variance, ideal.variance))
        rows.append({
            "n": int(n),
            "mape_mean": float(np.mean(err_mean)),
            "mape_variance": float(np.mean(err_var)),
            "per_truth_mean": err_mean,
            "per_truth_variance": err_var,
        })
    return rows


def _rel_err(approx, ideal):
    if ideal == 0:
        return 0.0 if approx == 0 else float("inf")
    return abs(approx - ideal) / abs(ideal)


def estimate_frame_stats(measured_maps, observer_counts, sigma, d=None, m=DEFAULT_REALIZATIONS,
                         seed=0, frame_ids=None, threads=1):
    """Stats for many frames, each from its own ``(seed, frame_id)`` stream.

    Results do not depend on ``threads`` because no stream is shared.
    """
    d = Discrepancy.KLD() if d is None else d
    frame_ids = list(range(len(measured_maps))) if frame_ids is None else list(frame_ids)

    def one(i):
        rng = child_rng(seed, frame_ids[i], STREAM_BOOTSTRAP)
        return estimate_noise_stats(measured_maps[i], observer_counts[i], sigma, d, m, rng)

    if threads <= 1:
        return [one(i) for i in range(len(frame_ids))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(len(frame_ids))))


class BootstrapNoiseStats(BaseEstimator, TransformerMixin):
    """Per-frame bootstrap noise statistics as a transformer.

    ``fit`` takes a stack of measured maps ``(n_frames, ...)`` and the
    observer count per frame; ``transform`` returns an ``(n_frames, 2)``
    array of ``[mean, variance]``.
    """

    def __init__(self, sigma=2.0, discrepancy="kld", n_realizations=DEFAULT_REALIZATIONS,
                 random_state=0, threads=1):
        self.sigma = sigma
        self.discrepancy = discrepancy
        self.n_realizations = n_realizations
        self.random_state = random_state
        self.threads = threads

    def fit(self, X, y=None, observer_counts=None):
        maps = [as_grid(x) for x in X]
        if observer_counts is None:
            raise ValueError("observer_counts is required")
        counts = np.broadcast_to(np.asarray(observer_counts, dtype=np.int64), (len(maps),))
        d = self.discrepancy if isinstance(self.discrepancy, Discrepancy) else Discrepancy.parse(self.discrepancy)
        self.stats_ = estimate_frame_stats(maps, counts, self.sigma, d, self.n_realizations,
                                           seed=self.random_state, threads=self.threads)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "stats_")
        return np.array([[s.mean, s.variance] for s in self.stats_])


# --- NSTATS v1 ----------------------------------------------------------------

NSTATS_HEADER = ["frame_id", "n", "discrepancy", "mean", "variance", "m"]


def format_nstats(stats_by_frame):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(NSTATS_HEADER)
    for frame_id in sorted(stats_by_frame):
        s = stats_by_frame[frame_id]
        writer.writerow([int(frame_id), s.observer_count, str(s.discrepancy),
                         repr(s.mean), repr(s.variance), s.realizations])
    return buf.getvalue()


def parse_nstats(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != NSTATS_HEADER:
        raise FormatError(f"NSTATS header must be {','.join(NSTATS_HEADER)}")
    out = {}
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != 6:
            raise FormatError(f"line {lineno}: expected 6 fields")
        try:
            frame_id, n, m = int(rec[0]), int(rec[1]), int(rec[5])
            mean, var = float(rec[3]), float(rec[4])
            d = Discrepancy.parse(rec[2])
            out[frame_id] = NoiseStats(mean, var, m, n, d)
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return out


def write_nstats(path, stats_by_frame):
    Path(path).write_text(format_nstats(stats_by_frame))


def read_nstats(path):
    return parse_nstats(Path(path).read_text())
