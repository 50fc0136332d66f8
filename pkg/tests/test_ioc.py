import numpy as np
import pytest

from nat_bench.errors import TooFewObserversError, TooShortError
from nat_bench.ioc import (
    IocCurve,
    dataset_ioc,
    format_ioc_csv,
    ioc_convergence_gradient,
    ioc_curve,
    ioc_initial_gradient,
)
from nat_bench.metrics import nss
from nat_bench.reconstruct import FixationSet, sample_fixations, sr_reconstruct
from nat_bench.rng import child_rng
from nat_bench.synth import gmm_truth, random_gmm_suite

SHAPE = (16, 16)


def observers_from(truth, count, per_observer, rng):
    fix = sample_fixations(truth, count * per_observer, rng)
    return FixationSet(fix.points, np.repeat(np.arange(count), per_observer))


@pytest.fixture
def truth():
    return gmm_truth(random_gmm_suite(1, (2, 3), SHAPE, rng=8, sigma_range=(1.5, 3.0))[0], SHAPE)


def direct_curve(per_observer, sigma, shape, realizations, rng):
    """Per-realization subset maps rebuilt from pooled fixations and scored directly."""
    count = len(per_observer)
    scores = np.empty((realizations, count - 1))
    for r in range(realizations):
        order = rng.permutation(count)
        for n in range(1, count):
            pooled = FixationSet.concat([per_observer[i] for i in order[:n]])
            scores[r, n - 1] = nss(sr_reconstruct(pooled, sigma, shape), per_observer[order[-1]])
    return scores.mean(axis=0), scores.std(axis=0)


class TestIocCurve:
    def test_matches_direct_reconstruction(self, truth):
        fix = observers_from(truth, 6, 2, child_rng(0, 1))
        curve = ioc_curve(fix, 1.5, SHAPE, realizations=7, rng=child_rng(0, 2))
        mean, std = direct_curve(fix.by_observer(), 1.5, SHAPE, 7, child_rng(0, 2))
        np.testing.assert_allclose(curve.mean, mean, rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(curve.std, std, rtol=1e-9, atol=1e-12)
        assert curve.n_values == [1, 2, 3, 4, 5]
        assert curve.realizations == 7

    def test_identical_observers_give_constant_curve(self):
        same = [FixationSet.from_cells([3, 9], [4, 10]) for _ in range(6)]
        curve = ioc_curve(same, 2.0, SHAPE, rng=0)
        np.testing.assert_allclose(curve.mean, curve.mean[0], rtol=1e-12)
        assert ioc_convergence_gradient(curve) < 1e-12

    def test_fixed_seed(self, truth):
        fix = observers_from(truth, 5, 1, child_rng(1, 1))
        assert ioc_curve(fix, 2.0, SHAPE, rng=4) == ioc_curve(fix, 2.0, SHAPE, rng=4)

    def test_point_order_and_monotone_relabeling(self, truth):
        fix = observers_from(truth, 6, 3, child_rng(2, 1))
        perm = np.random.default_rng(0).permutation(len(fix))
        shuffled = FixationSet(fix.points[perm], fix.observer_ids[perm] * 10 + 7)
        assert ioc_curve(shuffled, 2.0, SHAPE, rng=3) == ioc_curve(fix, 2.0, SHAPE, rng=3)

    def test_too_few_observers(self):
        with pytest.raises(TooFewObserversError):
            ioc_curve([FixationSet.from_cells([1]), FixationSet.from_cells([2])], 1.0, (8,))

    def test_constant_maps_are_skipped(self):
        # On a single-cell grid every map is constant, so no score exists.
        obs = [FixationSet.from_cells([0]) for _ in range(3)]
        curve = ioc_curve(obs, 1.0, (1,), realizations=4, rng=0)
        assert curve.skipped == [4, 4]
        assert all(np.isnan(curve.mean))

    def test_rising_then_flattening(self, truth):
        fix = observers_from(truth, 30, 1, child_rng(5, 1))
        curve = ioc_curve(fix, 2.0, SHAPE, rng=child_rng(5, 2))
        assert curve.mean[-1] > curve.mean[0]
        assert ioc_convergence_gradient(curve) < ioc_initial_gradient(curve)


class TestGradients:
    def test_constant(self):
        assert ioc_convergence_gradient(IocCurve([1, 2, 3], [0.7] * 3, [0] * 3, 20)) == 0.0

    def test_linear(self):
        curve = IocCurve([1, 2, 3, 4], [1.0, 0.5, 0.0, -0.5], [0] * 4, 20)
        assert ioc_convergence_gradient(curve) == 0.5
        assert ioc_initial_gradient(curve) == 0.5

    def test_uneven_spacing(self):
        assert ioc_convergence_gradient(IocCurve([1, 3, 7], [0, 1, 3], [0] * 3, 1)) == 0.5

    def test_too_short(self):
        with pytest.raises(TooShortError):
            ioc_convergence_gradient(IocCurve([1], [0.0], [0.0], 20))

    def test_unequal_lists(self):
        with pytest.raises(ValueError):
            IocCurve([1, 2], [0.0], [0.0], 20)


class TestDatasetIoc:
    @pytest.fixture
    def frames(self, truth):
        return {fid: observers_from(truth, count, 1, child_rng(9, fid))
                for fid, count in [(0, 8), (3, 5), (5, 6)]}

    def test_single_frame_equals_its_curve(self, frames):
        got = dataset_ioc({3: frames[3]}, 2.0, SHAPE, seed=2)
        own = ioc_curve(frames[3], 2.0, SHAPE, rng=child_rng(2, 3, 5))
        assert got.mean == own.mean and got.std == own.std

    def test_truncates_to_shortest(self, frames):
        assert dataset_ioc(frames, 2.0, SHAPE).n_values == [1, 2, 3, 4]

    def test_stride(self, frames):
        strided = dataset_ioc(frames, 2.0, SHAPE, stride=2, seed=1)
        pair = dataset_ioc({0: frames[0], 5: frames[5]}, 2.0, SHAPE, seed=1)
        assert strided == pair

    def test_threads_do_not_change_result(self, frames):
        assert dataset_ioc(frames, 2.0, SHAPE, threads=1) == dataset_ioc(frames, 2.0, SHAPE, threads=3)

    def test_empty(self):
        with pytest.raises(ValueError):
            dataset_ioc({}, 2.0, SHAPE)


def test_csv():
    text = format_ioc_csv(IocCurve([1, 2], [0.5, 0.75], [0.1, 0.2], 20))
    assert text == "n,mean_nss,std_nss,realizations\n1,0.5,0.1,20\n2,0.75,0.2,20\n"
