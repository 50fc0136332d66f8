"""Traditional and noise-aware training objectives with logit gradients.

Predicted maps are ``softmax(logits)`` over all grid cells. The noise-aware
frame loss is ``(d - mean)**2 / (variance + 5e-5)``: it is zero on the whole
level set ``d == mean`` rather than only at ``predicted == measured``, so a
prediction is not pulled all the way into a noisy target.

The batched kernels here work on ``(n_frames, n_cells)`` arrays and are
shared by the single-frame API and by the trainer.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import MissingFixationsError, ShapeMismatchError, StatsDiscrepancyMismatchError
from .grid import as_grid
from .metrics import KLD_EPS, Discrepancy

VARIANCE_OFFSET = 5e-5


def softmax(logits, axis=-1):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass(eq=False)
class PredictedMap:
    """A saliency map parameterized by unconstrained per-cell logits."""

    logits: np.ndarray

    def __post_init__(self):
        self.logits = as_grid(self.logits)

    @classmethod
    def uniform(cls, shape):
        return cls(np.zeros(shape))

    @classmethod
    def from_map(cls, grid):
        """Logits reproducing a strictly positive map."""
        g = as_grid(grid)
        if np.any(g <= 0):
            raise ValueError("from_map needs a strictly positive map")
        return cls(np.log(g))

    @property
    def shape(self):
        return self.logits.shape

    @property
    def map(self):
        return softmax(self.logits.ravel()).reshape(self.logits.shape)


def _as_discrepancy(d):
    return d if isinstance(d, Discrepancy) else Discrepancy.parse(d)


def batch_discrepancy(pred, ref, fix_weights, d, with_grad=True):
    """Discrepancy values ``(F,)`` and their gradient w.r.t. ``pred`` ``(F, K)``.

    ``fix_weights`` holds per-frame fixation counts divided by the number of
    fixations (rows summing to one); it may be None when ``d`` has no NSS term.
    """
    pred = np.atleast_2d(pred)
    ref = np.atleast_2d(ref)
    n_cells = pred.shape[1]
    value = np.zeros(pred.shape[0])
    grad = np.zeros_like(pred) if with_grad else None

    if d.kld_w:
        denom = pred + KLD_EPS
        pos = ref > 0
        safe_ref = np.where(pos, ref, 1.0)
        terms = np.where(pos, ref * (np.log(safe_ref) - np.log(denom)), 0.0)
        value += d.kld_w * terms.sum(axis=1)
        if with_grad:
            grad -= d.kld_w * ref / denom

    if d.cc_w or d.nss_w:
        a = pred - pred.mean(axis=1, keepdims=True)
        a_sq = np.einsum("ij,ij->i", a, a)[:, None]

    if d.cc_w:
        b = ref - ref.mean(axis=1, keepdims=True)
        b_norm = np.sqrt(np.einsum("ij,ij->i", b, b))[:, None]
        a_norm = np.sqrt(a_sq)
        corr = np.einsum("ij,ij->i", a, b)[:, None] / (a_norm * b_norm)
        value -= d.cc_w * corr[:, 0]
        if with_grad:
            grad -= d.cc_w * (b / (a_norm * b_norm) - corr * a / a_sq)

    if d.nss_w:
        if fix_weights is None:
            raise MissingFixationsError(f"discrepancy {d} needs reference fixations")
        h = np.atleast_2d(fix_weights)
        std = np.sqrt(a_sq / n_cells)
        score = np.einsum("ij,ij->i", h, a)[:, None] / std
        value -= d.nss_w * score[:, 0]
        if with_grad:
            h_centered = h - h.sum(axis=1, keepdims=True) / n_cells
            grad -= d.nss_w * (h_centered / std - score * a / (n_cells * std**2))

    return value, grad


def softmax_backward(probs, grad_probs):
    """Chain a gradient w.r.t. softmax outputs back to the logits (row-wise)."""
    inner = np.einsum("ij,ij->i", probs, grad_probs)[:, None]
    return probs * (grad_probs - inner)


def fixation_weights(fixations, shape):
    """Per-cell fixation counts divided by the fixation count, flattened."""
    if fixations is None:
        return None
    size = math.prod(shape)
    counts = np.bincount(fixations.flat_indices(shape), minlength=size).astype(np.float64)
    return counts / max(len(fixations), 1)


def _frame_inputs(predicted, measured, fixations, d):
    measured = as_grid(measured)
    if predicted.shape != measured.shape:
        raise ShapeMismatchError(f"predicted {predicted.shape} vs measured {measured.shape}")
    if d.needs_fixations and (fixations is None or len(fixations) == 0):
        raise MissingFixationsError(f"discrepancy {d} needs reference fixations")
    w = fixation_weights(fixations, measured.shape) if d.nss_w else None
    probs = predicted.map.ravel()[None, :]
    return probs, measured.ravel()[None, :], (None if w is None else w[None, :])


def tt_loss(predicted, measured, fixations=None, d="kld"):
    """Per-frame traditional loss ``d(predicted, measured)``."""
    d = _as_discrepancy(d)
    probs, ref, w = _frame_inputs(predicted, measured, fixations, d)
    value, _ = batch_discrepancy(probs, ref, w, d, with_grad=False)
    return float(value[0])


def nat_frame_loss(d_value, stats, offset=VARIANCE_OFFSET):
    """``(d_value - mean)**2 / (variance + offset)``."""
    gap = d_value - stats.mean
    return gap * gap / (stats.variance + offset)


def full_nll(d_value, stats, offset=VARIANCE_OFFSET):
    """Gaussian negative log-likelihood of ``d_value`` with offset variance."""
    var = stats.variance + offset
    sigma = math.sqrt(var)
    return math.log(math.sqrt(2.0 * math.pi) * sigma) + (d_value - stats.mean) ** 2 / (2.0 * var)


def loss_gradient(predicted, measured, fixations=None, stats=None, d="kld", offset=VARIANCE_OFFSET):
    """Gradient of the TT loss (``stats`` None) or NAT frame loss w.r.t. the logits."""
    d = _as_discrepancy(d)
    probs, ref, w = _frame_inputs(predicted, measured, fixations, d)
    value, grad_p = batch_discrepancy(probs, ref, w, d)
    grad_z = softmax_backward(probs, grad_p)
    if stats is not None:
        grad_z = grad_z * (2.0 * (value[0] - stats.mean) / (stats.variance + offset))
    return grad_z[0].reshape(predicted.shape)


@dataclass
class FrameLoss:
    frame_id: int
    d_value: float
    mean: float
    variance: float
    contribution: float


@dataclass
class LossReport:
    total: float
    per_frame: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"total": self.total, "frames": [asdict(f) for f in self.per_frame]})

    @classmethod
    def from_json(cls, text):
        obj = json.loads(text)
        return cls(obj["total"], [FrameLoss(**f) for f in obj["frames"]])


def nat_loss(frames, d="kld", offset=VARIANCE_OFFSET):
    """Summed NAT loss over ``(predicted, measured, fixations, stats)`` tuples.

    A 5-tuple with a leading frame id is also accepted. Frames are summed
    in the given order.
    """
    d = _as_discrepancy(d)
    per_frame = []
    for i, item in enumerate(frames):
        frame_id, item = (item[0], item[1:]) if len(item) == 5 else (i, item)
        predicted, measured, fixations, stats = item
        if stats.discrepancy != d:
            raise StatsDiscrepancyMismatchError(
                f"frame {frame_id}: stats computed under {stats.discrepancy}, loss uses {d}")
        value = tt_loss(predicted, measured, fixations, d)
        per_frame.append(FrameLoss(int(frame_id), value, stats.mean, stats.variance,
                                   nat_frame_loss(value, stats, offset)))
    total = 0.0
    for f in per_frame:
        total += f.contribution
    return LossReport(total, per_frame)
