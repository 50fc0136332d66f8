"""Desk-scale training harness comparing traditional and noise-aware training.

Each frame has its own logit vector; all frames are optimized jointly by
full-batch RMSprop on the summed loss. With a synthetic truth available the
run also records how far the prediction is from the truth, which is where
overfitting to noisy measured maps shows up.
"""

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import LengthMismatchError, MissingStatsError, StatsDiscrepancyMismatchError
from .frames import Frame
from .grid import as_grid
from .metrics import Discrepancy, all_metrics
from .nat import (
    VARIANCE_OFFSET,
    PredictedMap,
    batch_discrepancy,
    fixation_weights,
    softmax,
    softmax_backward,
)
from .noise_stats import estimate_frame_stats
from .reconstruct import FixationSet, sample_fixations, sr_reconstruct
from .rng import STREAM_EVAL, STREAM_FIXATIONS, STREAM_TRUTH, child_rng
from .synth import gmm_truth, random_gmm_suite

EVAL_FIXATIONS = 500


# --- optimizer -------------------------------------------------------------


@dataclass
class OptimizerState:
    learning_rate: float = 0.001
    decay_rho: float = 0.9
    epsilon: float = 1e-8
    accumulator: np.ndarray | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.decay_rho < 1:
            raise ValueError("decay_rho must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


def rmsprop_step(state, params, grads):
    """One RMSprop update; returns ``(new_params, new_state)``.

    acc <- rho * acc + (1 - rho) * g**2;  theta <- theta - lr * g / (sqrt(acc) + eps)
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise LengthMismatchError(f"params {params.shape} vs grads {grads.shape}")
    acc = np.zeros_like(params) if state.accumulator is None else state.accumulator
    if acc.shape != params.shape:
        raise LengthMismatchError("accumulator shape does not match params")
    rho = state.decay_rho
    acc = rho * acc + (1.0 - rho) * grads * grads
    new_params = params - state.learning_rate * grads / (np.sqrt(acc) + state.epsilon)
    return new_params, dataclasses.replace(state, accumulator=acc)


# --- configuration and results ---------------------------------------------


@dataclass
class ExperimentConfig:
    n_frames: int = 20
    n_videos: int = 5
    n_observers: int = 5
    shape: tuple = (64, 64)
    blur_sigma: float = 2.0
    discrepancy: str = "kld"
    mode: str = "nat"
    n_realizations: int = 10
    learning_rate: float = 0.001
    decay_rho: float = 0.9
    epsilon: float = 1e-8
    max_iter: int = 2000
    record_every: int = 50
    seed: int = 0
    components: tuple = (2, 3)
    component_sigma: tuple = (2.0, 4.0)
    jitter: float = 0.5
    threads: int = 1

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.components = tuple(int(c) for c in self.components)
        self.component_sigma = tuple(float(s) for s in self.component_sigma)
        if self.n_observers < 1 or self.n_videos < 1 or self.n_frames < 1:
            raise ValueError("frame, video and observer counts must be >= 1")
        if self.n_realizations < 2:
            raise ValueError("n_realizations must be >= 2")
        if self.mode not in ("tt", "nat"):
            raise ValueError(f"mode must be 'tt' or 'nat', got {self.mode!r}")
        if self.max_iter < 0 or self.record_every < 1:
            raise ValueError("max_iter must be >= 0 and record_every >= 1")
        Discrepancy.parse(self.discrepancy)

    @property
    def d(self):
        return Discrepancy.parse(self.discrepancy)

    def optimizer(self):
        return OptimizerState(self.learning_rate, self.decay_rho, self.epsilon)

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class HistoryPoint:
    iteration: int
    train_loss: float
    truth_kld: float
    measured_kld: float


@dataclass
class TrainRun:
    config: ExperimentConfig
    history: list = field(default_factory=list)
    predictors: list = field(default_factory=list)
    frame_ids: list = field(default_factory=list)

    def final_maps(self):
        return [p.map for p in self.predictors]


# --- synthetic data --------------------------------------------------------


def make_frames(config, seed=None):
    """Synthesize frames: ``n_videos`` groups share a mixture with jittered centers."""
    seed = config.seed if seed is None else seed
    specs = [
        random_gmm_suite(1, config.components, config.shape, child_rng(seed, g, STREAM_TRUTH),
                         config.component_sigma)[0]
        for g in range(config.n_videos)
    ]
    frames = []
    for frame_id in range(config.n_frames):
        group = frame_id * config.n_videos // config.n_frames
        spec = specs[group]
        rng = child_rng(seed, frame_id, STREAM_TRUTH)
        dims = len(spec.components[0].center)
        offsets = rng.normal(0.0, config.jitter, size=(len(spec), dims)) if config.jitter > 0 else np.zeros((len(spec), dims))
        truth = gmm_truth(_clamped(spec.shifted(offsets), config.shape), config.shape)
        fix = sample_fixations(truth, config.n_observers, child_rng(seed, frame_id, STREAM_FIXATIONS))
        fix = FixationSet(fix.points, np.arange(len(fix)))
        measured = sr_reconstruct(fix, config.blur_sigma, config.shape)
        frames.append(Frame(frame_id, fix, measured, group_id=group, truth=truth))
    return frames


def _clamped(spec, shape):
    dims = [shape[-1] - 1] if len(shape) == 1 else [shape[1] - 1, shape[0] - 1]
    comps = tuple(
        dataclasses.replace(c, center=tuple(float(min(max(v, 0.0), hi)) for v, hi in zip(c.center, dims)))
        for c in spec.components
    )
    return dataclasses.replace(spec, components=comps)


def attach_stats(frames, config, seed=None):
    """Bootstrap noise stats for every frame, computed once and stored on the frame."""
    seed = config.seed if seed is None else seed
    stats = estimate_frame_stats(
        [f.measured for f in frames], [f.n_observers for f in frames], config.blur_sigma,
        config.d, config.n_realizations, seed=seed, frame_ids=[f.frame_id for f in frames],
        threads=config.threads,
    )
    return [dataclasses.replace(f, stats=s) for f, s in zip(frames, stats)]


# --- training ----------------------------------------------------------------


def _truth_kld_rows(truth, probs):
    pos = truth > 0
    safe = np.where(pos, truth, 1.0)
    return np.where(pos, truth * (np.log(safe) - np.log(probs + 1e-12)), 0.0).sum(axis=1)


def train(frames, config, init_logits=None):
    """Optimize per-frame logits for ``config.max_iter`` full-batch RMSprop steps.

    History is recorded at iteration 0, every ``record_every`` updates, and
    after the last update. In NAT mode every frame must carry stats computed
    under ``config.discrepancy``.
    """
    d = config.d
    frames = list(frames)
    shape = frames[0].measured.shape
    size = math.prod(shape)
    measured = np.stack([f.measured.ravel() for f in frames])
    weights = np.stack([fixation_weights(f.fixations, shape) for f in frames]) if d.nss_w else None
    truths = None
    if all(f.truth is not None for f in frames):
        truths = np.stack([np.asarray(f.truth).ravel() for f in frames])

    nat = config.mode == "nat"
    if nat:
        missing = [f.frame_id for f in frames if f.stats is None]
        if missing:
            raise MissingStatsError(f"NAT mode needs noise stats; missing for frames {missing}")
        wrong = [f.frame_id for f in frames if f.stats.discrepancy != d]
        if wrong:
            raise StatsDiscrepancyMismatchError(f"stats for frames {wrong} use a different discrepancy")
        mu = np.array([f.stats.mean for f in frames])
        denom = np.array([f.stats.variance for f in frames]) + VARIANCE_OFFSET

    logits = np.zeros((len(frames), size)) if init_logits is None else np.array(init_logits, dtype=np.float64).reshape(len(frames), size)
    state = config.optimizer()
    history = []

    def evaluate(probs, values):
        if nat:
            contrib = (values - mu) ** 2 / denom
        else:
            contrib = values
        loss = float(sum(contrib.tolist()))
        kld_meas = _truth_kld_rows(measured, probs).mean()
        kld_truth = float("nan") if truths is None else float(_truth_kld_rows(truths, probs).mean())
        return loss, kld_truth, float(kld_meas)

    for it in range(config.max_iter + 1):
        probs = softmax(logits, axis=1)
        last = it == config.max_iter
        values, grad_p = batch_discrepancy(probs, measured, weights, d, with_grad=not last)
        if it % config.record_every == 0 or last:
            history.append(HistoryPoint(it, *evaluate(probs, values)))
        if last:
            break
        grad = softmax_backward(probs, grad_p)
        if nat:
            grad *= (2.0 * (values - mu) / denom)[:, None]
        logits, state = rmsprop_step(state, logits, grad)

    predictors = [PredictedMap(row.reshape(shape)) for row in logits]
    return TrainRun(config, history, predictors, [f.frame_id for f in frames])


# --- experiments ---------------------------------------------------------------


def eval_fixations(frame, seed, n=EVAL_FIXATIONS):
    return sample_fixations(frame.truth, n, child_rng(seed, frame.frame_id, STREAM_EVAL))


def evaluate_against_truth(frames, maps, seed, threads=1):
    """Per-frame metric dictionaries of predicted maps against the truths."""
    def one(i):
        return all_metrics(maps[i], frames[i].truth, eval_fixations(frames[i], seed))

    if threads <= 1:
        return [one(i) for i in range(len(frames))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(len(frames))))


def run_comparison(config, n_values, v_values=None, modes=("tt", "nat")):
    """Train every requested mode for each (V, N) on identical frames and start point.

    Returns ``(rows, details)``: ``rows`` holds one dict per (v, n, mode)
    with frame-averaged truth-side metrics; ``details[(v, n, mode)]`` holds
    the per-frame metric dictionaries and the TrainRun.
    """
    v_values = [config.n_videos] if v_values is None else list(v_values)
    rows, details = [], {}
    for v in v_values:
        for n in n_values:
            cfg = dataclasses.replace(config, n_videos=int(v), n_observers=int(n))
            frames = make_frames(cfg)
            if "nat" in modes:
                frames = attach_stats(frames, cfg)
            for mode in modes:
                run = train(frames, dataclasses.replace(cfg, mode=mode))
                per_frame = evaluate_against_truth(frames, [m.reshape(cfg.shape) for m in run.final_maps()],
                                                   cfg.seed, cfg.threads)
                row = {"v": int(v), "n": int(n), "mode": mode}
                for key in ("kld", "cc", "sim", "nss", "auc"):
                    row[key] = float(np.mean([m[key] for m in per_frame]))
                rows.append(row)
                details[(int(v), int(n), mode)] = {"per_frame": per_frame, "run": run, "frames": frames}
    return rows, details


def curve_flags(truth_curve, min_fraction=0.8, rise=0.05):
    """Overfitting / stability flags for a truth-side loss curve.

    ``overfitting``: the minimum occurs before ``min_fraction`` of the curve
    and the final value is at least ``rise`` above it (relative).
    ``stable``: the final value is within ``rise`` of the minimum.
    """
    curve = np.asarray(truth_curve, dtype=np.float64)
    j = int(np.argmin(curve))
    lo = curve[j]
    final = curve[-1]
    return {
        "overfitting": bool(j < min_fraction * (len(curve) - 1) and final >= (1.0 + rise) * lo),
        "stable": bool(final <= (1.0 + rise) * lo),
        "argmin_fraction": j / max(len(curve) - 1, 1),
        "min": float(lo),
        "final": float(final),
    }


def overfitting_study(frames, config):
    """Truth-side KLD curves for TT and NAT on the same frames.

    Returns ``(curve_rows, flags)`` where ``flags[mode]`` comes from
    :func:`curve_flags` applied to that mode's curve over recorded iterations.
    """
    if any(f.truth is None for f in frames):
        raise ValueError("overfitting study needs synthetic truths")
    if any(f.stats is None for f in frames):
        frames = attach_stats(frames, config)
    rows, flags = [], {}
    for mode in ("tt", "nat"):
        run = train(frames, dataclasses.replace(config, mode=mode))
        for h in run.history:
            rows.append({"iteration": h.iteration, "mode": mode, "train_loss": h.train_loss, "truth_kld": h.truth_kld})
        flags[mode] = curve_flags([h.truth_kld for h in run.history])
    return rows, flags


# --- estimator interface -----------------------------------------------------------


class NoiseAwareSaliencyFitter(BaseEstimator, TransformerMixin):
    """Fit per-frame saliency maps to measured maps under the TT or NAT loss.

    ``fit(X, fixations=..., stats=...)`` takes a stack of measured maps
    ``(n_frames, height, width)``; ``transform(X)`` returns the fitted maps
    for those same frames. ``loss="nat"`` computes bootstrap stats during
    ``fit`` when none are given, which needs ``fixations`` (for the observer
    count) or an explicit ``n_observers``.
    """

    def __init__(self, loss="nat", discrepancy="kld", blur_sigma=2.0, n_realizations=10,
                 learning_rate=0.001, decay_rho=0.9, epsilon=1e-8, max_iter=2000,
                 record_every=50, n_observers=None, random_state=0):
        self.loss = loss
        self.discrepancy = discrepancy
        self.blur_sigma = blur_sigma
        self.n_realizations = n_realizations
        self.learning_rate = learning_rate
        self.decay_rho = decay_rho
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.record_every = record_every
        self.n_observers = n_observers
        self.random_state = random_state

    def _config(self, n_frames, shape):
        return ExperimentConfig(
            n_frames=n_frames, n_videos=1, n_observers=1, shape=shape, blur_sigma=self.blur_sigma,
            discrepancy=self.discrepancy, mode=self.loss, n_realizations=self.n_realizations,
            learning_rate=self.learning_rate, decay_rho=self.decay_rho, epsilon=self.epsilon,
            max_iter=self.max_iter, record_every=self.record_every, seed=self.random_state,
        )

    def fit(self, X, y=None, fixations=None, stats=None, truths=None):
        maps = [as_grid(x) for x in X]
        if not maps:
            raise ValueError("X holds no frames")
        shape = maps[0].shape
        if any(m.shape != shape for m in maps):
            raise ValueError("all measured maps must share one shape")
        if fixations is None:
            counts = [self.n_observers] * len(maps)
            fixations = [None] * len(maps)
        else:
            counts = [len(f) for f in fixations]
        frames = [
            Frame(i, fixations[i], maps[i], truth=None if truths is None else as_grid(truths[i]),
                  stats=None if stats is None else stats[i])
            for i in range(len(maps))
        ]
        config = self._config(len(maps), shape)
        if config.mode == "nat" and stats is None:
            if any(c is None for c in counts):
                raise ValueError("NAT needs fixations, n_observers or precomputed stats")
            computed = estimate_frame_stats(maps, counts, self.blur_sigma, config.d, self.n_realizations,
                                            seed=self.random_state)
            frames = [dataclasses.replace(f, stats=s) for f, s in zip(frames, computed)]
        self.run_ = train(frames, config)
        self.history_ = self.run_.history
        self.stats_ = [f.stats for f in frames]
        self.maps_ = np.stack([p.map for p in self.run_.predictors])
        self.n_features_in_ = math.prod(shape)
        return self

    def transform(self, X):
        check_is_fitted(self, "maps_")
        X = np.asarray(X, dtype=np.float64)
        if X.shape != self.maps_.shape:
            raise ValueError(f"transform expects the fitted frames, shape {self.maps_.shape}, got {X.shape}")
        return self.maps_.copy()
