"""Saliency metrics and the discrepancy functions built from them.

Conventions: ``kld(reference, predicted)`` puts the small constant only in
the predicted-side denominator; NSS z-scores with the population standard
deviation; AUC-Judd treats each fixated cell once as a positive and every
other cell as a negative, with tied scores counting half.
"""

import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyFixationsError,
    MissingFixationsError,
    NonDifferentiableError,
    NoNegativesError,
    ShapeMismatchError,
    ZeroVarianceError,
)
from .grid import as_grid

KLD_EPS = 1e-12


def _pair(a, b):
    a = as_grid(a)
    b = as_grid(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"grid shapes differ: {a.shape} vs {b.shape}")
    return a.ravel(), b.ravel()


def kld(reference, predicted):
    """KL divergence KL(reference || predicted); zero-reference cells contribute 0."""
    r, p = _pair(reference, predicted)
    mask = r > 0
    return float(np.sum(r[mask] * np.log(r[mask] / (p[mask] + KLD_EPS))))


def cc(a, b):
    """Pearson correlation between two maps."""
    x, y = _pair(a, b)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise ZeroVarianceError("correlation undefined for a constant map")
    x = x - x.mean()
    y = y - y.mean()
    nx = np.sqrt(np.dot(x, x))
    ny = np.sqrt(np.dot(y, y))
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def sim(a, b):
    """Histogram intersection."""
    x, y = _pair(a, b)
    return float(np.minimum(x, y).sum())


def _fixation_cells(predicted, fixations):
    if fixations is None or len(fixations) == 0:
        raise EmptyFixationsError("metric needs at least one fixation")
    return fixations.flat_indices(predicted.shape)


def nss(predicted, fixations):
    """Mean z-scored saliency at the fixated cells (repeated cells count each time)."""
    s = as_grid(predicted)
    idx = _fixation_cells(s, fixations)
    flat = s.ravel()
    if np.ptp(flat) == 0:
        raise ZeroVarianceError("NSS undefined for a constant map")
    std = flat.std()
    return float(np.mean((flat[idx] - flat.mean()) / std))


def auc_judd(predicted, fixations):
    """Area under the fixated-vs-non-fixated ROC curve.

    The curve visits, for every distinct saliency value at a fixated cell,
    the operating points just above and at that threshold. Trapezoidal
    integration of that curve equals the fraction of (positive, negative)
    cell pairs ranked correctly, ties counting one half, which is what is
    computed here with an exact integer numerator.
    """
    s = as_grid(predicted).ravel()
    idx = np.unique(_fixation_cells(as_grid(predicted), fixations))
    is_pos = np.zeros(s.size, dtype=bool)
    is_pos[idx] = True
    pos = s[is_pos]
    neg = np.sort(s[~is_pos])
    if neg.size == 0:
        raise NoNegativesError("every cell is fixated; ROC has no negatives")
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    twice_wins = int(2 * below.sum() + (upto - below).sum())
    return twice_wins / (2 * pos.size * neg.size)


@dataclass(frozen=True)
class Discrepancy:
    """Training discrepancy ``d(predicted, reference)``; lower is better.

    ``kind`` is one of ``"kld"``, ``"neg_cc"``, ``"neg_nss"``, ``"mix"``. All
    kinds are expressed through the three weights of
    ``kld_w * KLD - cc_w * CC - nss_w * NSS``.
    """

    kind: str
    kld_w: float = 0.0
    cc_w: float = 0.0
    nss_w: float = 0.0

    def __post_init__(self):
        if self.kind not in ("kld", "neg_cc", "neg_nss", "mix"):
            raise ValueError(f"unknown discrepancy kind {self.kind!r}")
        if not all(np.isfinite([self.kld_w, self.cc_w, self.nss_w])):
            raise ValueError("discrepancy weights must be finite")

    lower_is_better = True

    @classmethod
    def KLD(cls):
        return cls("kld", 1.0, 0.0, 0.0)

    @classmethod
    def NEG_CC(cls):
        return cls("neg_cc", 0.0, 1.0, 0.0)

    @classmethod
    def NEG_NSS(cls):
        return cls("neg_nss", 0.0, 0.0, 1.0)

    @classmethod
    def MIX(cls, kld_w, cc_w, nss_w):
        return cls("mix", float(kld_w), float(cc_w), float(nss_w))

    @property
    def needs_fixations(self):
        return self.nss_w != 0

    @classmethod
    def parse(cls, text):
        """Parse ``kld``, ``neg_cc``, ``neg_nss`` or ``mix:a,b,c``."""
        text = text.strip().lower()
        simple = {"kld": cls.KLD, "neg_cc": cls.NEG_CC, "neg_nss": cls.NEG_NSS}
        if text in ("auc", "neg_auc", "auc_judd"):
            raise NonDifferentiableError("AUC is an evaluation metric, not a training discrepancy")
        if text in simple:
            return simple[text]()
        m = re.fullmatch(r"mix:([^,]+),([^,]+),([^,]+)", text)
        if m:
            try:
                return cls.MIX(*(float(g) for g in m.groups()))
            except ValueError:
                pass
        raise ValueError(f"cannot parse discrepancy {text!r}; use kld, neg_cc, neg_nss or mix:a,b,c")

    def __str__(self):
        if self.kind == "mix":
            return f"mix:{self.kld_w!r},{self.cc_w!r},{self.nss_w!r}"
        return self.kind


def eval_discrepancy(d, predicted, reference, fixations=None):
    """``d(predicted, reference)`` with ``fixations`` as the reference fixations."""
    predicted = as_grid(predicted)
    reference = as_grid(reference)
    if predicted.shape != reference.shape:
        raise ShapeMismatchError(f"grid shapes differ: {predicted.shape} vs {reference.shape}")
    if d.needs_fixations and (fixations is None or len(fixations) == 0):
        raise MissingFixationsError(f"discrepancy {d} needs reference fixations")
    total = 0.0
    if d.kld_w:
        total += d.kld_w * kld(reference, predicted)
    if d.cc_w:
        total -= d.cc_w * cc(predicted, reference)
    if d.nss_w:
        total -= d.nss_w * nss(predicted, fixations)
    return total


def all_metrics(predicted, truth, fixations):
    """Evaluation row against a reference map and reference fixations."""
    return {
        "kld": kld(truth, predicted),
        "cc": cc(predicted, truth),
        "sim": sim(predicted, truth),
        "nss": nss(predicted, fixations),
        "auc": auc_judd(predicted, fixations),
    }
