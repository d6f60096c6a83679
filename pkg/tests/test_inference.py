import json
import math

import numpy as np
import pytest
from scipy import stats

from pwkstat.errors import InsufficientData, InvalidGram, InvalidSubsampleSize
from pwkstat.inference import (
    ConfidenceBand,
    EvaluationGrid,
    _permutation_statistics,
    band_from_values,
    bootstrap_band,
    centered_eigenvalues,
    effective_size,
    error_rate,
    error_rate_from_gram,
    index_grid,
    mmd_u,
    null_quantile,
    permutation_null_quantile,
    spectral_null_quantile,
    subsample_statistics,
    sup_statistics,
    upper_quantile,
)
from pwkstat.vectorization import KernelSpec, WeightSpec, evaluate, pwk_vector, rkhs_mean
from oracles import mmd_loop, pooled_mean_values, synthetic_diagrams

SIGMA = 0.1
GRID = index_grid((0.25, 0.5), 0.3, 0, 20)


def random_gram(rng, n):
    X = rng.normal(size=(n, 3))
    return np.exp(-((X[:, None] - X[None]) ** 2).sum(-1) / 2.0)


class TestQuantile:
    def test_definition(self):
        v = np.arange(1, 21, dtype=float)
        assert upper_quantile(v, 0.05) == 19.0
        assert upper_quantile(v, 0.5) == 10.0
        assert upper_quantile(v, 1.0) == 1.0

    def test_unsorted(self):
        assert upper_quantile([3.0, 1.0, 2.0], 0.34) == 2.0

    def test_errors(self):
        with pytest.raises(InsufficientData):
            upper_quantile([], 0.1)
        with pytest.raises(ValueError):
            upper_quantile([1.0], 0.0)


class TestGrid:
    def test_index_grid(self):
        g = index_grid((0.5, math.sqrt(2) / 2), 0.05, 0, 20)
        assert len(g) == 21 and g.labels == tuple(range(21))
        np.testing.assert_allclose(g.points[10], [0.5, math.sqrt(2) / 2], atol=1e-15)
        np.testing.assert_allclose(g.points[0, 1], math.sqrt(2) / 2 - 0.05, atol=1e-15)
        np.testing.assert_allclose(np.diff(g.points[:, 1]), 0.005, atol=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            EvaluationGrid(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            index_grid((0, 0), 1.0, 3, 2)


class TestBand:
    k, w = KernelSpec(SIGMA), WeightSpec("w1")

    def test_single_diagram(self):
        D = synthetic_diagrams(np.random.default_rng(0), 1)
        band = bootstrap_band(D, self.k, self.w, GRID, b=50, seed=1)
        assert band.half_width == 0.0

    def test_identical_diagrams(self):
        D = synthetic_diagrams(np.random.default_rng(0), 1) * 10
        band = bootstrap_band(D, self.k, self.w, GRID, b=50, seed=1)
        assert band.half_width == 0.0
        np.testing.assert_allclose(band.center, evaluate(pwk_vector(D[0], self.k, self.w), GRID.points))

    def test_empty(self):
        with pytest.raises(InsufficientData):
            bootstrap_band([], self.k, self.w, GRID)

    def test_four_atom_enumeration(self):
        F = np.array([[0.3], [1.1]])
        eta = sup_statistics(F, np.array([[0, 0], [0, 1], [1, 0], [1, 1]]))
        atom = math.sqrt(2) * 0.4
        np.testing.assert_allclose(np.sort(eta), [0, 0, atom, atom], atol=1e-15)
        for alpha, expected in [(0.05, atom), (0.5, 0.0), (0.49, atom)]:
            assert upper_quantile(eta, alpha) == pytest.approx(expected, abs=1e-15)
        band = band_from_values(F, EvaluationGrid([[0.0, 0.0]]), alpha=0.05, b=2000, seed=3)
        assert band.half_width == pytest.approx(atom / math.sqrt(2), rel=1e-14)

    def test_center_is_sample_mean(self):
        D = synthetic_diagrams(np.random.default_rng(4), 15)
        band = bootstrap_band(D, self.k, self.w, GRID, b=20, seed=0)
        mean = rkhs_mean([pwk_vector(d, self.k, self.w) for d in D])
        np.testing.assert_allclose(band.center, evaluate(mean, GRID.points), atol=1e-13)
        np.testing.assert_allclose(band.hi - band.lo, 2 * band.half_width)

    def test_deterministic(self):
        D = synthetic_diagrams(np.random.default_rng(5), 12)
        a = bootstrap_band(D, self.k, self.w, GRID, b=300, seed=7)
        b = bootstrap_band(D, self.k, self.w, GRID, b=300, seed=7)
        c = bootstrap_band(D, self.k, self.w, GRID, b=300, seed=8)
        assert a.half_width == b.half_width and a.half_width != c.half_width

    def test_disjoint(self):
        g = EvaluationGrid([[0, 0], [1, 0]])
        a = ConfidenceBand(g, np.array([0.0, 0.0]), 1.0, 0.05, 1, 0, 2)
        b = ConfidenceBand(g, np.array([3.0, 1.5]), 1.0, 0.05, 1, 0, 2)
        assert a.disjoint(b).tolist() == [True, False]
        assert a.contains([1.0, 1.01]).tolist() == [True, False]
        with pytest.raises(ValueError):
            a.disjoint(ConfidenceBand(EvaluationGrid([[0, 1], [1, 0]]), a.center, 1.0, 0.05, 1, 0, 2))

    def test_csv(self, tmp_path):
        D = synthetic_diagrams(np.random.default_rng(6), 5)
        band = bootstrap_band(D, self.k, self.w, GRID, b=20)
        band.write_csv(tmp_path / "band.csv")
        rows = np.loadtxt(tmp_path / "band.csv", delimiter=",", skiprows=1)
        np.testing.assert_array_equal(rows[:, 3], band.lo)
        assert (tmp_path / "band.csv").read_text().startswith("zx,zy,center,lo,hi\n")
        json.dumps(band.to_dict())

    def test_small_coverage(self):
        rng = np.random.default_rng(123)
        ref = pooled_mean_values(synthetic_diagrams(rng, 100_000), SIGMA, self.w, GRID.points)
        covered = 0
        for rep in range(40):
            D = synthetic_diagrams(np.random.default_rng(1000 + rep), 20)
            band = bootstrap_band(D, self.k, self.w, GRID, alpha=0.05, b=300, seed=rep)
            covered += bool(band.contains(ref).all())
        assert covered >= 32


def test_uniform_convergence():
    k, w = KernelSpec(SIGMA), WeightSpec("w1")
    ref = pooled_mean_values(synthetic_diagrams(np.random.default_rng(99), 100_000), SIGMA, w, GRID.points)
    medians = []
    for n in (10, 100, 1000):
        devs = []
        for s in range(20):
            D = synthetic_diagrams(np.random.default_rng([n, s]), n)
            mean = rkhs_mean([pwk_vector(d, k, w) for d in D])
            devs.append(np.abs(evaluate(mean, GRID.points) - ref).max())
        medians.append(float(np.median(devs)))
    assert medians[0] >= medians[1] >= medians[2]


class TestMmd:
    @pytest.mark.parametrize("n_x,n_y", [(2, 2), (3, 5), (7, 4), (12, 12)])
    def test_matches_loop(self, n_x, n_y):
        rng = np.random.default_rng(n_x * 31 + n_y)
        K = random_gram(rng, n_x + n_y)
        assert mmd_u(K, n_x, n_y) == pytest.approx(mmd_loop(K, n_x, n_y), abs=1e-12)

    def test_constant(self):
        assert mmd_u(np.full((10, 10), 0.7), 5, 5) == pytest.approx(0.0, abs=1e-15)

    def test_identical_blocks(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(4, 2))
        Z = np.vstack([X, X])
        K = np.exp(-((Z[:, None] - Z[None]) ** 2).sum(-1))
        assert mmd_u(K, 4, 4) == pytest.approx(mmd_loop(K, 4, 4), abs=1e-12)
        assert mmd_u(K, 4, 4) < 0

    def test_synthetic_blocks(self):
        K = np.zeros((6, 6))
        K[:3, :3] = 1.0
        K[3:, 3:] = 1.0
        assert mmd_u(K, 3, 3) == 2.0

    def test_swap_symmetry(self):
        rng = np.random.default_rng(3)
        K = random_gram(rng, 9)
        perm = np.r_[4:9, 0:4]
        assert mmd_u(K, 4, 5) == pytest.approx(mmd_u(K[np.ix_(perm, perm)], 5, 4), abs=1e-14)

    def test_errors(self):
        with pytest.raises(InsufficientData):
            mmd_u(np.eye(3), 1, 2)
        with pytest.raises(InvalidGram):
            mmd_u(np.eye(4), 2, 3)
        bad = np.eye(4)
        bad[0, 1] = 0.5
        with pytest.raises(InvalidGram):
            mmd_u(bad, 2, 2)

    def test_effective_size(self):
        assert effective_size(20, 20) == 20
        assert effective_size(10, 30) == 15


class TestSpectralNull:
    def test_zero(self):
        assert spectral_null_quantile(np.zeros((8, 8)), 0.05) == 0.0

    def test_rank_one(self):
        n = 10
        v = np.r_[np.ones(n), -np.ones(n)] * 0.3
        K = np.outer(v, v)
        mu = centered_eigenvalues(K)
        assert mu.max() == pytest.approx(v @ v) and np.count_nonzero(mu) == 1
        lam = v @ v / (2 * n)
        alpha, draws = 0.05, 10_000
        q = stats.chi2.ppf(1 - alpha, 1)
        expected = lam * (2 * q - 2)
        # standard error of the empirical quantile of 2 lam chi2_1
        se = 2 * lam * math.sqrt(alpha * (1 - alpha) / draws) / stats.chi2.pdf(q, 1)
        got = spectral_null_quantile(K, alpha, draws=draws, seed=4)
        assert abs(got - expected) < 4 * se

    def test_monotone_in_alpha(self):
        K = random_gram(np.random.default_rng(1), 16)
        qs = [spectral_null_quantile(K, a, seed=2) for a in (0.01, 0.05, 0.1, 0.5)]
        assert all(a >= b for a, b in zip(qs, qs[1:]))

    def test_non_symmetric(self):
        K = np.eye(4)
        K[2, 0] = 0.3
        with pytest.raises(InvalidGram):
            spectral_null_quantile(K, 0.05)

    def test_deterministic(self):
        K = random_gram(np.random.default_rng(1), 16)
        assert spectral_null_quantile(K, 0.05, seed=5) == spectral_null_quantile(K, 0.05, seed=5)


class TestPermutationNull:
    def test_constant_off_diagonal(self):
        K = np.full((12, 12), 0.4)
        np.fill_diagonal(K, 1.0)
        stat = effective_size(6, 6) * mmd_u(K, 6, 6)
        assert permutation_null_quantile(K, 6, 6, 0.05, permutations=200) == pytest.approx(stat, abs=1e-14)

    def test_alpha_one(self):
        K = random_gram(np.random.default_rng(2), 14)
        perm = _permutation_statistics(K, 7, 7, 300, 9)
        q = permutation_null_quantile(K, 7, 7, 1.0, permutations=300, seed=9)
        assert q <= perm.max() and q == perm.min()

    def test_dispatch(self):
        K = random_gram(np.random.default_rng(2), 14)
        assert null_quantile(K, 7, 7, 0.05, "permutation", seed=1) == permutation_null_quantile(K, 7, 7, 0.05, seed=1)
        with pytest.raises(ValueError):
            null_quantile(K, 7, 7, 0.05, "bootstrap")

    def test_methods_agree_roughly(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 2))
        K = np.exp(-((X[:, None] - X[None]) ** 2).sum(-1) / 2.0)
        s = null_quantile(K, 30, 30, 0.05, "spectral", seed=0)
        p = null_quantile(K, 30, 30, 0.05, "permutation", permutations=2000, seed=0)
        assert s == pytest.approx(p, rel=0.3)


@pytest.fixture(scope="module")
def gram():
    return random_gram(np.random.default_rng(11), 24)


class TestErrorRate:
    def test_infinite_thresholds(self, gram):
        hi = error_rate_from_gram(gram, 12, 12, 0.05, 8, 50, threshold=math.inf)
        lo = error_rate_from_gram(gram, 12, 12, 0.05, 8, 50, threshold=-math.inf)
        assert hi.rejection_rate == 0.0 and hi.acceptance_rate == 1.0
        assert lo.rejection_rate == 1.0

    def test_subsample_too_large(self, gram):
        with pytest.raises(InvalidSubsampleSize):
            error_rate_from_gram(gram, 12, 12, 0.05, 13, 10)
        with pytest.raises(InvalidSubsampleSize):
            subsample_statistics(gram, 12, 12, 1, 10)

    def test_subsample_full_is_statistic(self, gram):
        # without replacement, m = n only permutes each sample
        s = subsample_statistics(gram, 12, 12, 12, 5)
        np.testing.assert_allclose(s, 12 * mmd_u(gram, 12, 12), atol=1e-12)

    def test_shared_samples(self):
        d = synthetic_diagrams(np.random.default_rng(3), 20)
        alpha, N = 0.05, 200
        rep = error_rate(d, d, "pwk-w0", alpha, m=20, N=N, seed=2)
        assert rep.rejection_rate <= alpha + 3 * math.sqrt(alpha / N)

    def test_report(self, gram, tmp_path):
        rep = error_rate_from_gram(gram, 12, 12, 0.05, 8, 40, seed=3, threshold=math.inf)
        rep.write_json(tmp_path / "r.json")
        data = json.loads((tmp_path / "r.json").read_text())
        assert data["threshold"] == "inf" and data["m"] == 8 and data["N"] == 40
        assert 0 <= data["rejection_rate"] <= 1

    def test_deterministic(self, gram):
        a = error_rate_from_gram(gram, 12, 12, 0.05, 8, 300, seed=3)
        b = error_rate_from_gram(gram, 12, 12, 0.05, 8, 300, seed=3)
        assert a == b

    def test_separated_samples_reject(self):
        rng = np.random.default_rng(4)
        d = synthetic_diagrams(rng, 20)
        e = [x + np.array([0.0, 0.3]) for x in synthetic_diagrams(rng, 20)]
        rep = error_rate(d, e, "pwk-w1", 0.05, m=16, N=100, seed=0)
        assert rep.decision == "reject" and rep.rejection_rate > 0.9
        assert rep.kernel == "pwk-w1" and "tau" in rep.kernel_params
