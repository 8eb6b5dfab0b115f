"""Tests for the evaluation statistics (NSE, KGE, RMSE, R^2)."""

import numpy as np
import pytest

from kanhydro.errors import InvalidArgumentError, LengthMismatchError
from kanhydro.metrics import PairedSeries, all_metrics, kge, nse, r_squared, rmse


def series(obs, sim):
    return PairedSeries(np.asarray(obs, float), np.asarray(sim, float))


class TestPairedSeries:
    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            series([1, 2, 3], [1, 2])

    def test_too_short(self):
        with pytest.raises(InvalidArgumentError):
            series([1], [1])

    def test_nonfinite(self):
        with pytest.raises(InvalidArgumentError):
            series([1, np.nan], [1, 2])


class TestNse:
    def test_perfect(self):
        assert nse(series([1, 2, 3], [1, 2, 3])) == pytest.approx(1.0)

    def test_mean_predictor(self):
        assert nse(series([1, 2, 3], [2, 2, 2])) == pytest.approx(0.0,
                                                                  abs=1e-12)

    def test_hand_value(self):
        assert nse(series([1, 2, 3], [1.5, 2, 2.5])) == pytest.approx(
            0.75, abs=1e-12)

    def test_zero_variance_observed(self):
        with pytest.raises(InvalidArgumentError):
            nse(series([2, 2, 2], [1, 2, 3]))


class TestKge:
    def test_perfect(self):
        assert kge(series([1, 2, 3], [1, 2, 3])) == pytest.approx(1.0)

    def test_doubled(self):
        # r = 1, beta = 2, gamma = 1 (CV invariant to scaling) -> KGE = 0
        assert kge(series([1, 2, 3], [2, 4, 6])) == pytest.approx(0.0,
                                                                  abs=1e-12)

    def test_reversed(self):
        assert kge(series([1, 2, 3], [3, 2, 1])) == pytest.approx(-1.0,
                                                                  abs=1e-12)

    def test_zero_mean_rejected(self):
        with pytest.raises(InvalidArgumentError):
            kge(series([-1, 0, 1], [1, 2, 3]))


class TestRmse:
    def test_perfect(self):
        assert rmse(series([1, 2, 3], [1, 2, 3])) == 0.0

    def test_hand_value(self):
        assert rmse(series([1, 2, 3], [2, 1, 3])) == pytest.approx(
            np.sqrt(2 / 3), abs=1e-12)

    def test_constant_offset(self):
        assert rmse(series([1, 2, 3], [3, 4, 5])) == pytest.approx(2.0)


class TestRSquared:
    def test_affine_relation(self):
        obs = np.array([1.0, 2.0, 3.0, 5.0])
        assert r_squared(series(obs, 2 * obs + 1)) == pytest.approx(1.0)

    def test_negated(self):
        obs = np.array([1.0, 2.0, 3.0])
        assert r_squared(series(obs, -obs)) == pytest.approx(1.0)

    def test_hand_value(self):
        # obs [1,2,3,4] vs sim [1,2,2,4]: covariance 4.5 (sum of products),
        # variances 5 and 4.75, so r^2 = 4.5^2 / (5 * 4.75) = 0.85263...
        value = r_squared(series([1, 2, 3, 4], [1, 2, 2, 4]))
        assert value == pytest.approx(20.25 / 23.75, abs=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(InvalidArgumentError):
            r_squared(series([1, 2, 3], [2, 2, 2]))


class TestProperties:
    def _random(self, seed=0):
        rng = np.random.default_rng(seed)
        obs = rng.uniform(1, 10, 40)
        sim = obs + rng.normal(0, 1, 40)
        return obs, sim

    def test_bounded_above(self):
        obs, sim = self._random()
        s = series(obs, sim)
        assert nse(s) <= 1.0
        assert r_squared(s) <= 1.0

    def test_translation_sensitivity(self):
        obs, sim = self._random(1)
        base = series(obs, sim)
        shifted = series(obs, sim + 1.5)
        assert r_squared(shifted) == pytest.approx(r_squared(base))
        assert kge(shifted) != pytest.approx(kge(base))
        assert nse(shifted) != pytest.approx(nse(base))

    def test_scaling_invariance_of_r_squared(self):
        obs, sim = self._random(2)
        assert r_squared(series(obs, 3.0 * sim)) == pytest.approx(
            r_squared(series(obs, sim)))

    def test_permutation_invariance(self):
        obs, sim = self._random(3)
        perm = np.random.default_rng(4).permutation(len(obs))
        for fn in (nse, kge, rmse, r_squared):
            assert fn(series(obs[perm], sim[perm])) == pytest.approx(
                fn(series(obs, sim)))

    def test_all_metrics_keys(self):
        obs, sim = self._random(5)
        out = all_metrics(obs, sim)
        assert set(out) == {"nse", "kge", "rmse", "r2"}
