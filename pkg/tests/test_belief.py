import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from proxflow.belief import (
    BfnSchedule,
    GaussianBelief,
    belief_sample,
    bfn_accuracy,
    bfn_alpha,
    cosine_schedule,
    prior_belief,
)
from conftest import FixedNormal


class TestGaussianBelief:
    def test_valid_construction(self):
        b = GaussianBelief(mean=[0.5, -0.5], variance=2.0)
        assert b.dim == 2
        assert b.std == math.sqrt(2.0)

    def test_mean_is_immutable(self):
        b = GaussianBelief(mean=[1.0], variance=0.0)
        with pytest.raises(ValueError):
            b.mean[0] = 2.0

    @pytest.mark.parametrize(
        "mean,var",
        [([], 1.0), ([np.nan], 1.0), ([np.inf, 0.0], 1.0), ([0.0], -0.1), ([0.0], np.nan)],
    )
    def test_invalid_rejected(self, mean, var):
        with pytest.raises(ValueError):
            GaussianBelief(mean=mean, variance=var)


class TestCosineSchedule:
    def test_endpoints_T20(self):
        s = cosine_schedule(20, 0.008)
        assert s.gamma[0] == 1.0
        assert s.gamma[20] == 0.0
        assert s.tau[19] == 1.0
        assert s.final_eta_infinite

    def test_T2_value_against_high_precision(self):
        # Frozen from a 40-digit evaluation of the cosine formula.
        expected_gamma1 = 0.70274005894116902358
        s = cosine_schedule(2, 0.008)
        assert s.gamma[1] == pytest.approx(expected_gamma1, abs=1e-15)
        assert s.tau[0] == pytest.approx(1.0 - expected_gamma1, abs=1e-15)

    def test_T2_recompute_with_mpmath(self):
        mp.mp.dps = 30
        shift = mp.mpf("0.008")
        want = mp.cos(((mp.mpf(1) / 2 + shift) / (1 + shift)) * mp.pi / 2) / mp.cos(
            (shift / (1 + shift)) * mp.pi / 2
        )
        s = cosine_schedule(2, 0.008)
        assert abs(s.gamma[1] - float(want)) < 1e-15

    @pytest.mark.parametrize("T", [2, 3, 7, 20, 50, 113, 200])
    def test_invariants(self, T):
        s = cosine_schedule(T, 0.008)
        assert s.gamma[0] == 1.0 and s.gamma[T] == 0.0
        assert np.all(np.diff(s.gamma) < 0.0)
        assert np.all(s.tau > 0.0) and np.all(s.tau <= 1.0)
        prods = np.cumprod(1.0 - s.tau)
        # relative where gamma > 0; the final entry is exactly zero on both sides
        rel = np.abs(prods[:-1] - s.gamma[1:-1]) / s.gamma[1:-1]
        assert np.max(rel, initial=0.0) < 1e-12
        assert prods[-1] == 0.0
        finite = ~np.isinf(s.eta)
        assert np.allclose(s.eta[finite] / (1.0 + s.eta[finite]), s.tau[finite], rtol=1e-12)
        assert s.final_eta_infinite

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            cosine_schedule(0)
        with pytest.raises(ValueError):
            cosine_schedule(10, -0.1)


class TestBfnAccuracy:
    def test_endpoints(self):
        assert bfn_accuracy(0.0, 0.001) == 0.0
        assert bfn_accuracy(1.0, 0.001) == pytest.approx(1.0 - 1e-6, rel=1e-12)

    def test_half_time(self):
        # sigma1**(2*0.5) = sigma1, so gamma = 1 - sigma1 exactly.
        assert bfn_accuracy(0.5, 0.001) == pytest.approx(0.999, abs=1e-15)
        mp.mp.dps = 30
        want = 1 - mp.power(mp.mpf("0.001"), 2 * mp.mpf("0.5"))
        assert abs(bfn_accuracy(0.5, 0.001) - float(want)) < 1e-15

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            bfn_accuracy(-0.01, 0.001)
        with pytest.raises(ValueError):
            bfn_accuracy(1.01, 0.001)
        with pytest.raises(ValueError):
            bfn_accuracy(0.5, 1.5)

    @given(
        t1=st.floats(0.0, 1.0),
        t2=st.floats(0.0, 1.0),
        sigma1=st.floats(1e-6, 0.999),
    )
    def test_monotone_and_bounded(self, t1, t2, sigma1):
        lo, hi = sorted([t1, t2])
        g_lo, g_hi = bfn_accuracy(lo, sigma1), bfn_accuracy(hi, sigma1)
        assert g_lo <= g_hi
        assert 0.0 <= g_lo and g_hi <= 1.0 - sigma1**2 + 1e-15

    def test_schedule_object(self):
        sched = BfnSchedule(sigma1=0.001)
        assert sched.grid_gamma[0] == 0.0
        assert sched.grid_gamma[-1] == pytest.approx(1.0 - 1e-6, rel=1e-12)
        assert np.all(np.diff(sched.grid_gamma) > 0.0)
        assert sched.loss_weight(0.0) == pytest.approx(6.907755278982137, rel=1e-12)

    def test_alpha_increments_telescope(self):
        sched = BfnSchedule(sigma1=0.001)
        n = 20
        alphas = [sched.alpha(i, n) for i in range(1, n + 1)]
        assert all(a > 0 for a in alphas)
        assert np.all(np.diff(alphas) > 0.0)
        assert 1.0 + sum(alphas) == pytest.approx(0.001 ** (-2.0), rel=1e-9)
        with pytest.raises(ValueError):
            bfn_alpha(0, n, 0.001)


class TestBeliefSample:
    def test_degenerate_returns_mean(self, rng):
        b = GaussianBelief(mean=[0.0, 0.0], variance=0.0)
        assert np.array_equal(belief_sample(b, rng), [0.0, 0.0])

    def test_fixed_noise(self):
        b = GaussianBelief(mean=[1.0], variance=4.0)
        out = belief_sample(b, FixedNormal(0.5))
        assert np.array_equal(out, [2.0])

    def test_moments_at_1e5_draws(self):
        rng = np.random.default_rng(7)
        b = prior_belief(1)
        draws = np.array([belief_sample(b, rng)[0] for _ in range(100_000)])
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 1.0) < 0.02

    def test_prior(self):
        p = prior_belief(3)
        assert p.variance == 1.0 and p.dim == 3 and np.all(p.mean == 0.0)
