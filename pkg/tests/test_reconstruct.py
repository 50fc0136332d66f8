import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare
from sklearn.base import clone

from nat_bench import reconstruct
from nat_bench.errors import EmptyFixationsError, FormatError, TooFewObserversError, ZeroCountError
from nat_bench.grid import gaussian_blur, uniform
from nat_bench.metrics import kld
from nat_bench.reconstruct import (
    FixationSet,
    GoldStandardKDE,
    GoldStandardParams,
    fit_gold_standard,
    format_fixcsv,
    kde_reconstruct,
    loo_log_likelihood,
    parse_fixcsv,
    read_fixcsv,
    resample_once,
    sample_fixations,
    sr_reconstruct,
    write_fixcsv,
)
from nat_bench.rng import child_rng
from nat_bench.synth import GmmSpec, gmm_truth


def delta(shape, col, row=0):
    g = np.zeros(shape)
    if len(shape) == 1:
        g[col] = 1.0
    else:
        g[row, col] = 1.0
    return g


class TestFixationSet:
    def test_from_cells_and_indices(self):
        fix = FixationSet.from_cells([1, 2], [0, 3])
        np.testing.assert_array_equal(fix.flat_indices((4, 5)), [1, 17])

    def test_out_of_bounds(self):
        with pytest.raises(ValueError):
            FixationSet.from_cells([5], [0]).flat_indices((4, 5))

    def test_by_observer_sorted(self):
        fix = FixationSet.from_cells([0, 1, 2, 3], [0, 0, 0, 0], observer_ids=[7, 2, 7, 2])
        parts = fix.by_observer()
        assert [p.observer_ids[0] for p in parts] == [2, 7]
        np.testing.assert_array_equal(parts[1].cols, [0, 2])

    def test_concat(self):
        a = FixationSet.from_cells([0], observer_ids=[0])
        b = FixationSet.from_cells([1, 2], observer_ids=[1, 1])
        assert len(FixationSet.concat([a, b])) == 3
        assert len(FixationSet.concat([])) == 0

    def test_equality(self):
        assert FixationSet.from_cells([1, 2]) == FixationSet.from_cells([1, 2])
        assert FixationSet.from_cells([1, 2]) != FixationSet.from_cells([2, 1])


class TestSampleFixations:
    def test_delta(self, rng):
        fix = sample_fixations(delta((4, 4), 2, 3), 5, rng)
        assert all(tuple(p) == (2, 3) for p in fix.points)

    def test_chi_square_uniform(self):
        fix = sample_fixations(uniform((2, 2)), 100000, np.random.default_rng(0))
        counts = np.bincount(fix.flat_indices((2, 2)), minlength=4)
        assert chisquare(counts).pvalue > 0.001

    def test_chi_square_skewed(self):
        pdf = np.array([0.1, 0.2, 0.3, 0.4])
        fix = sample_fixations(pdf, 100000, np.random.default_rng(1))
        counts = np.bincount(fix.cols, minlength=4)
        assert chisquare(counts, 100000 * pdf).pvalue > 0.001

    def test_zero_cells_never_drawn(self, rng):
        pdf = np.array([0.0, 0.5, 0.0, 0.5, 0.0])
        fix = sample_fixations(pdf, 2000, rng)
        assert set(fix.cols.tolist()) == {1, 3}

    def test_deterministic(self):
        pdf = np.random.default_rng(3).random((6, 6))
        pdf /= pdf.sum()
        a = sample_fixations(pdf, 50, child_rng(9, 1))
        b = sample_fixations(pdf, 50, child_rng(9, 1))
        assert a == b

    def test_zero_count(self, rng):
        with pytest.raises(ZeroCountError):
            sample_fixations(uniform((3,)), 0, rng)


class TestSrReconstruct:
    def test_single_fixation_is_blurred_delta(self):
        fix = FixationSet.from_cells([4], [4])
        np.testing.assert_array_equal(sr_reconstruct(fix, 1.0, (9, 9)), gaussian_blur(delta((9, 9), 4, 4), 1.0))

    def test_opposite_corners_split_mass(self):
        out = sr_reconstruct(FixationSet.from_cells([0, 15], [0, 15]), 1.0, (16, 16))
        assert abs(out[:, :8].sum() - 0.5) < 1e-6
        assert abs(out[:8, :].sum() - 0.5) < 1e-6

    def test_repeated_fixation(self):
        one = sr_reconstruct(FixationSet.from_cells([3], [2]), 1.5, (8, 8))
        many = sr_reconstruct(FixationSet.from_cells([3] * 10, [2] * 10), 1.5, (8, 8))
        np.testing.assert_allclose(many, one, rtol=0, atol=1e-15)

    def test_empty(self):
        with pytest.raises(EmptyFixationsError):
            sr_reconstruct(FixationSet.from_cells([]), 1.0, (4, 4))

    @given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 5)), min_size=1, max_size=12), st.randoms())
    def test_permutation_invariant(self, cells, random):
        shuffled = list(cells)
        random.shuffle(shuffled)
        a = sr_reconstruct(FixationSet(np.array(cells)), 1.2, (6, 8))
        b = sr_reconstruct(FixationSet(np.array(shuffled)), 1.2, (6, 8))
        np.testing.assert_array_equal(a, b)

    @given(st.lists(st.tuples(st.integers(0, 7), st.integers(0, 5)), min_size=1, max_size=12),
           st.floats(0.3, 5.0))
    def test_continuous_in_sigma(self, cells, sigma):
        fix = FixationSet(np.array(cells))
        a = sr_reconstruct(fix, sigma, (6, 8))
        b = sr_reconstruct(fix, sigma + 1e-6, (6, 8))
        assert np.max(np.abs(a - b)) < 1e-4


class TestResample:
    def test_delta_fixed_point(self, rng):
        measured = delta((5, 5), 1, 3)
        for _ in range(5):
            np.testing.assert_array_equal(resample_once(measured, 4, 0.0, rng), measured)

    def test_deterministic(self):
        measured = gmm_truth(GmmSpec((((8.0, 8.0), 3.0, 1.0),)), (16, 16))
        a = resample_once(measured, 7, 1.5, child_rng(1, 2))
        b = resample_once(measured, 7, 1.5, child_rng(1, 2))
        np.testing.assert_array_equal(a, b)

    def test_more_observers_closer(self):
        measured = gmm_truth(GmmSpec((((8.0, 8.0), 3.0, 1.0),)), (16, 16))
        rng = np.random.default_rng(5)
        many = np.mean([kld(measured, resample_once(measured, 1000, 2.0, rng)) for _ in range(100)])
        few = np.mean([kld(measured, resample_once(measured, 3, 2.0, rng)) for _ in range(100)])
        assert many < few


class TestKde:
    def test_no_mixing_matches_sr(self):
        fix = FixationSet.from_cells([1, 5], [2, 6])
        np.testing.assert_array_equal(kde_reconstruct(fix, GoldStandardParams(2.0, 0.0), (8, 8)),
                                      sr_reconstruct(fix, 2.0, (8, 8)))

    def test_full_mixing_is_uniform(self):
        fix = FixationSet.from_cells([1, 5], [2, 6])
        np.testing.assert_array_equal(kde_reconstruct(fix, GoldStandardParams(2.0, 1.0), (8, 8)), uniform((8, 8)))

    def test_single_fixation_formula(self):
        fix = FixationSet.from_cells([3], [4])
        expected = 0.9 * gaussian_blur(delta((8, 8), 3, 4), 2.0) + 0.1 / 64
        np.testing.assert_allclose(kde_reconstruct(fix, GoldStandardParams(2.0, 0.1), (8, 8)), expected,
                                   rtol=0, atol=1e-15)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            GoldStandardParams(0.0, 0.1)
        with pytest.raises(ValueError):
            GoldStandardParams(1.0, 1.5)


class TestGoldStandard:
    def test_identical_fixations_pick_smallest(self):
        per_observer = [FixationSet.from_cells([5], [5]) for _ in range(4)]
        params = fit_gold_standard(per_observer, (12, 12))
        assert params == GoldStandardParams(1.0, 0.0)

    def test_tie_goes_to_first_pair(self, monkeypatch):
        monkeypatch.setattr(reconstruct, "loo_log_likelihood", lambda *a: np.zeros((2, 2)))
        per_observer = [FixationSet.from_cells([1]), FixationSet.from_cells([2])]
        params = fit_gold_standard(per_observer, (8,), bandwidths=(3.0, 1.0), eps_values=(0.2, 0.0))
        assert params == GoldStandardParams(3.0, 0.2)

    def test_zero_density_uses_floor(self):
        # the two observers sit 30 cells apart, beyond the truncated kernel
        per_observer = [FixationSet.from_cells([0]), FixationSet.from_cells([30])]
        table = loo_log_likelihood(per_observer, (31,), [1.0], [0.0, 0.1])
        assert table[0, 0] == pytest.approx(2 * np.log(1e-12))
        assert np.isfinite(table).all()
        assert table[0, 1] > table[0, 0]

    def test_too_few_observers(self):
        with pytest.raises(TooFewObserversError):
            fit_gold_standard([FixationSet.from_cells([1])], (4,))

    def test_bandwidth_recovery(self):
        truth = gmm_truth(GmmSpec((((16.0, 16.0), 4.0, 1.0),)), (32, 32))
        hits = 0
        for seed in range(5):
            rng = child_rng(seed, 7)
            per_observer = [sample_fixations(truth, 5, rng) for _ in range(20)]
            hits += 2.0 <= fit_gold_standard(per_observer, (32, 32)).bandwidth <= 8.0
        assert hits >= 4

    def test_estimator_api(self):
        truth = gmm_truth(GmmSpec((((8.0, 8.0), 2.0, 1.0),)), (16, 16))
        rng = np.random.default_rng(2)
        fix = FixationSet.concat([
            FixationSet(sample_fixations(truth, 3, rng).points, np.full(3, o)) for o in range(6)
        ])
        est = GoldStandardKDE(shape=(16, 16), bandwidths=(1.0, 2.0, 4.0))
        assert clone(est).get_params()["bandwidths"] == (1.0, 2.0, 4.0)
        est.fit(fix)
        assert est.n_observers_ == 6
        assert est.scores_.shape == (3, 5)
        assert est.score(fix) == pytest.approx(est.scores_.max())
        out = est.transform(fix)
        assert out.shape == (16, 16) and abs(out.sum() - 1) < 1e-12


class TestFixcsv:
    def test_round_trip(self, tmp_path):
        frames = {
            3: FixationSet.from_cells([1, 2], [0, 4], observer_ids=[5, 6]),
            0: FixationSet.from_cells([7], [7], observer_ids=[0]),
        }
        write_fixcsv(tmp_path / "f.csv", frames)
        back = read_fixcsv(tmp_path / "f.csv", (8, 8))
        assert list(back) == [0, 3]
        assert back[3] == frames[3] and back[0] == frames[0]

    def test_default_observer_ids(self):
        text = format_fixcsv({0: FixationSet.from_cells([1, 2])})
        assert text.splitlines()[1:] == ["0,0,1,0", "0,1,2,0"]

    @pytest.mark.parametrize("text", [
        "",
        "frame,observer,col,row\n",
        "frame_id,observer_id,col,row\n0,0,1\n",
        "frame_id,observer_id,col,row\n0,0,a,1\n",
        "frame_id,observer_id,col,row\n0,0,9,1\n",
    ])
    def test_malformed(self, text):
        with pytest.raises(FormatError):
            parse_fixcsv(text, (4, 4))
