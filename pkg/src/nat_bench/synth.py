"""Synthetic ground-truth maps from isotropic Gaussian mixtures."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptySpecError
from .grid import normalize
from .metrics import Discrepancy, eval_discrepancy
from .reconstruct import _hw, resample_once
from .rng import as_rng, child_rng

TOY_CELLS = 100
TOY_BLUR = 5.0


@dataclass(frozen=True)
class Component:
    center: tuple  # (col,) or (col, row), in cells
    sigma: float
    weight: float


@dataclass(frozen=True)
class GmmSpec:
    """Mixture components; weights are rescaled to sum to one on construction."""

    components: tuple

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, Component) else Component(tuple(np.atleast_1d(c[0]).tolist()), float(c[1]), float(c[2]))
            for c in self.components
        )
        if any(c.sigma <= 0 or c.weight <= 0 for c in comps):
            raise ValueError("component sigma and weight must be > 0")
        total = sum(c.weight for c in comps)
        comps = tuple(Component(c.center, c.sigma, c.weight / total) for c in comps)
        object.__setattr__(self, "components", comps)

    def __len__(self):
        return len(self.components)

    def shifted(self, offsets):
        """Copy with every center moved by the matching row of ``offsets``."""
        comps = []
        for c, off in zip(self.components, offsets):
            center = tuple(float(v + o) for v, o in zip(c.center, np.atleast_1d(off)))
            comps.append(Component(center, c.sigma, c.weight))
        return GmmSpec(tuple(comps))


def gmm_truth(spec, shape):
    """Mixture density at cell centers, normalized to a probability grid."""
    if len(spec) == 0:
        raise EmptySpecError("mixture has no components")
    height, width = _hw(shape)
    one_d = len(tuple(shape)) == 1
    cols = np.arange(width, dtype=np.float64)[None, :]
    rows = np.arange(height, dtype=np.float64)[:, None]
    density = np.zeros((height, width))
    for c in spec.components:
        cx = c.center[0]
        cy = 0.0 if one_d or len(c.center) == 1 else c.center[1]
        if not (0 <= cx <= width - 1 and 0 <= cy <= height - 1):
            raise ValueError(f"component center {c.center} outside grid {tuple(shape)}")
        sq = (cols - cx) ** 2 + (0.0 if one_d else (rows - cy) ** 2)
        dims = 1 if one_d else 2
        density += c.weight * np.exp(-0.5 * sq / c.sigma**2) / (np.sqrt(2 * np.pi) * c.sigma) ** dims
    return normalize(density.reshape(shape))


def random_gmm_suite(count, component_range=(1, 3), shape=(32, 32), rng=None, sigma_range=(2.0, 4.0)):
    """Reproducible list of random mixtures.

    Centers are redrawn (up to 100 attempts) until every pair is at least
    four times the larger of the two sigmas apart; after that the last draw
    is kept.
    """
    lo, hi = component_range
    if not 1 <= lo <= hi <= 8:
        raise ValueError("component range must lie within [1, 8]")
    rng = as_rng(rng)
    height, width = _hw(shape)
    one_d = len(tuple(shape)) == 1
    suite = []
    for _ in range(count):
        k = int(rng.integers(lo, hi + 1))
        sigmas = rng.uniform(*sigma_range, size=k)
        weights = rng.uniform(0.2, 1.0, size=k)
        for _attempt in range(100):
            centers = _draw_centers(rng, k, sigmas, height, width, one_d)
            if _separated(centers, sigmas):
                break
        suite.append(GmmSpec(tuple(
            Component(tuple(centers[i]), float(sigmas[i]), float(weights[i])) for i in range(k)
        )))
    return suite


def _draw_centers(rng, k, sigmas, height, width, one_d):
    margin = np.minimum(sigmas, (width - 1) / 4)
    cx = rng.uniform(margin, width - 1 - margin)
    if one_d:
        return [(float(x),) for x in cx]
    margin_y = np.minimum(sigmas, (height - 1) / 4)
    cy = rng.uniform(margin_y, height - 1 - margin_y)
    return [(float(x), float(y)) for x, y in zip(cx, cy)]


def _separated(centers, sigmas):
    pts = np.asarray(centers, dtype=np.float64)
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.linalg.norm(pts[i] - pts[j]) < 4 * max(sigmas[i], sigmas[j]):
                return False
    return True


def toy_truths():
    """The unimodal and bimodal 1-D reference truths on 100 cells."""
    unimodal = GmmSpec(((50.0, 5.0, 1.0),))
    bimodal = GmmSpec(((25.0, 5.0, 0.3), (75.0, 5.0, 0.7)))
    return {
        "unimodal": gmm_truth(unimodal, (TOY_CELLS,)),
        "bimodal": gmm_truth(bimodal, (TOY_CELLS,)),
    }


def toy_study(n_values=(3, 30), realizations=1000, seed=0, blur_sigma=TOY_BLUR):
    """Discrepancy between each toy truth and its few-observer reconstructions.

    Returns a list of rows, one per (truth, n), with the mean and standard
    deviation of KLD over realizations plus the pointwise mean and standard
    deviation of the reconstructed maps.
    """
    d = Discrepancy.KLD()
    rows = []
    for t, (name, truth) in enumerate(toy_truths().items()):
        for j, n in enumerate(n_values):
            rng = child_rng(seed, t, j)
            maps = np.empty((realizations, truth.size))
            values = np.empty(realizations)
            for r in range(realizations):
                rec, fix = resample_once(truth, n, blur_sigma, rng, return_fixations=True)
                maps[r] = rec
                values[r] = eval_discrepancy(d, truth, rec, fix)
            rows.append({
                "truth": name,
                "n": int(n),
                "e_kld": float(values.mean()),
                "std_kld": float(values.std(ddof=1)),
                "mean_map": maps.mean(axis=0),
                "std_map": maps.std(axis=0, ddof=1),
                "values": values,
            })
    return rows
