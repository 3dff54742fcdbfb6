import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs
from numpy.testing import assert_allclose
from scipy.stats import norm

from ggmselect import multitest as mt
from ggmselect.multitest import AdjustmentError, ErrorRateSpec

P3 = np.array([0.001, 0.01, 0.04])


def _z(p):
    """Fisher z values whose standardized statistic at n_eff = 4 has two-sided p-value ``p``."""
    return norm.isf(np.asarray(p) / 2)


class TestClassical:
    def test_bonferroni(self):
        assert mt.bonferroni([0.01] * 21).values[0] == pytest.approx(0.21)
        assert mt.bonferroni([0.1] * 21).values[0] == 1.0
        assert mt.bonferroni([0.0, 0.5]).values[0] == 0.0

    def test_holm(self):
        assert_allclose(mt.holm(P3).values, [0.003, 0.02, 0.04])

    def test_holm_ties(self):
        assert_allclose(mt.holm([0.02] * 4).values, [0.08] * 4)

    def test_sidak(self):
        assert mt.sidak([0.01, 0.5, 0.5]).values[0] == pytest.approx(0.029701)
        assert_allclose(mt.sidak([0.0, 1.0]).values, [0.0, 1.0])

    def test_sidak_step(self):
        assert_allclose(mt.sidak_step(P3).values, [0.0029970, 0.0199, 0.04], rtol=1e-4)

    def test_unsorted_input_keeps_positions(self):
        p = P3[::-1]
        assert_allclose(mt.holm(p).values, [0.04, 0.02, 0.003])

    @pytest.mark.parametrize("method", ["bonferroni", "holm", "sidak", "sidak-step"])
    def test_single_hypothesis_unchanged(self, method):
        assert mt.adjust(method, [0.037]).values[0] == pytest.approx(0.037)

    def test_rejects_out_of_range(self):
        with pytest.raises(AdjustmentError):
            mt.holm([0.1, 1.2])

    def test_unknown_method(self):
        with pytest.raises(AdjustmentError):
            mt.adjust("hochberg", P3)

    @settings(max_examples=200, deadline=None)
    @given(hs.lists(hs.floats(0, 1), min_size=1, max_size=30))
    def test_dominance(self, p):
        b, h = mt.bonferroni(p).values, mt.holm(p).values
        s, ss = mt.sidak(p).values, mt.sidak_step(p).values
        tol = 1e-12
        assert np.all(b >= s - tol) and np.all(s >= ss - tol) and np.all(b >= h - tol)
        assert np.all(h >= ss - tol)
        assert np.all(np.asarray(p) <= ss + tol)


class TestMaxT:
    def test_single_statistic_is_marginal(self):
        adj = mt.maxt(_z([0.03]), 4, np.eye(1), draws=20_000, seed=1)
        assert abs(adj.values[0] - 0.03) <= 2 / np.sqrt(20_000)

    def test_perfect_dependence_is_marginal(self):
        p = np.array([0.01, 0.2, 0.04])
        adj = mt.maxt(_z(p), 4, np.ones((3, 3)), draws=20_000, seed=2)
        assert np.all(np.abs(adj.values - p) <= 3 * np.sqrt(p * (1 - p) / 20_000) + 1e-12)

    def test_identity_matches_sidak(self):
        p = np.array([0.002, 0.01, 0.03, 0.2, 0.6])
        B = 100_000
        adj = mt.maxt(_z(p), 4, np.eye(5), draws=B, seed=3)
        ref = mt.sidak(p).values
        assert np.all(np.abs(adj.values - ref) <= 3 * np.sqrt(ref * (1 - ref) / B) + 1e-12)

    def test_step_down_properties(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((6, 6))
        C = np.corrcoef(A @ A.T)
        z = rng.uniform(0, 3, 6)
        single = mt.maxt(z, 4, C, draws=5000, seed=4)
        step = mt.maxt_step(z, 4, C, draws=5000, seed=4)
        assert np.all(step.values <= single.values + 1e-12)
        order = np.argsort(-z)
        assert np.all(np.diff(step.values[order]) >= 0)
        assert np.all(step.values >= step.unadjusted - 1e-15)

    def test_step_equals_single_for_one_statistic(self):
        a = mt.maxt([0.4], 30, np.eye(1), draws=4000, seed=5)
        b = mt.maxt_step([0.4], 30, np.eye(1), draws=4000, seed=5)
        assert a.values[0] == b.values[0]

    def test_deterministic_and_worker_independent(self):
        z = np.array([0.5, 1.2, 2.0, 0.1])
        a = mt.maxt_step(z, 4, np.eye(4), draws=10_000, seed=9)
        b = mt.maxt_step(z, 4, np.eye(4), draws=10_000, seed=9, workers=3)
        assert np.array_equal(a.values, b.values)

    def test_too_few_draws(self):
        with pytest.raises(AdjustmentError):
            mt.maxt([1.0], 10, np.eye(1), draws=10)

    def test_indefinite_correlation(self):
        with pytest.raises(AdjustmentError):
            mt.maxt([1.0, 1.0], 10, np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_dispatch_needs_statistics(self):
        with pytest.raises(AdjustmentError):
            mt.adjust("maxt", P3)


class TestErrorRates:
    def test_reject_set(self):
        adj = mt.AdjustedPValues(np.array([0.01, 0.2]), "x", ("a", "b"))
        assert mt.reject_set(adj, 0.05) == {"a"}
        assert mt.reject_set(adj, 0.001) == frozenset()

    def test_gfwer_augmentation(self):
        p = np.linspace(0.0001, 0.5, 40)
        adj = mt.holm(p)
        base = mt.reject_set(adj, 0.05)
        assert mt.augment_gfwer(base, adj, 0) == base
        aug = mt.augment_gfwer(set(range(19)), adj, 5)
        assert len(aug) == 24 and aug == set(range(24))
        assert len(mt.augment_gfwer(set(range(19)), adj, 100)) == 40

    @pytest.mark.parametrize("r0, lam, extra", [(19, 0.22, 5), (10, 0.5, 10), (7, 0.0, 0), (3, 0.1, 0)])
    def test_tppfp_count(self, r0, lam, extra):
        assert mt.tppfp_augmentation_count(r0, lam) == extra

    def test_tppfp_augmentation(self):
        adj = mt.holm(np.linspace(0.0001, 0.5, 40))
        assert len(mt.augment_tppfp(set(range(19)), adj, 0.22)) == 24

    def test_by_example(self):
        assert mt.harmonic(3) == pytest.approx(11 / 6)
        assert mt.fdr_by(P3, 0.05) == {0, 1}
        assert mt.fdr_by([], 0.05) == frozenset()
        assert mt.fdr_by([1.0, 1.0], 0.05) == frozenset()

    @settings(max_examples=100, deadline=None)
    @given(hs.lists(hs.floats(0, 1), min_size=1, max_size=25), hs.floats(0.001, 0.5))
    def test_by_adjusted_consistent_with_step_up(self, p, alpha):
        adj = mt.by_adjusted(p)
        via_adjusted = {i for i, v in enumerate(adj.values) if v <= alpha}
        direct = mt.fdr_by(p, alpha)
        # thresholds and adjusted values are computed in different orders of float ops
        borderline = {i for i, v in enumerate(adj.values) if abs(v - alpha) < 1e-12}
        assert via_adjusted - borderline == direct - borderline

    @pytest.mark.parametrize("text, kind, k, lam", [
        ("fwer", "fwer", 0, 0.0), ("gfwer:5", "gfwer", 5, 0.0),
        ("tppfp:0.22", "tppfp", 0, 0.22), ("FDR", "fdr", 0, 0.0)])
    def test_spec_parse(self, text, kind, k, lam):
        spec = ErrorRateSpec.parse(text, 0.1)
        assert (spec.kind, spec.k, spec.lam, spec.alpha) == (kind, k, lam, 0.1)
        assert ErrorRateSpec.parse(str(spec), 0.1) == spec

    @pytest.mark.parametrize("text", ["gfwer:-1", "gfwer:x", "tppfp:1.0", "fwer:3", "bogus"])
    def test_spec_parse_errors(self, text):
        with pytest.raises(AdjustmentError):
            ErrorRateSpec.parse(text, 0.1)

    def test_alpha_range(self):
        with pytest.raises(AdjustmentError):
            ErrorRateSpec("fwer", 1.5)


@settings(max_examples=100, deadline=None)
@given(hs.lists(hs.floats(0, 1), min_size=1, max_size=20), hs.floats(0.001, 0.2), hs.floats(0.001, 0.2))
def test_rejections_nested_in_alpha(p, a1, a2):
    lo, hi = sorted((a1, a2))
    for method in ("bonferroni", "holm", "sidak", "sidak-step"):
        adj = mt.adjust(method, p)
        assert mt.reject_set(adj, lo) <= mt.reject_set(adj, hi)
        assert np.all(adj.values >= np.asarray(p) - 1e-15) and np.all(adj.values <= 1)


@settings(max_examples=200, deadline=None)
@given(hs.integers(0, 500), hs.floats(0, 0.99))
def test_tppfp_bound_is_tight(r0, lam):
    from fractions import Fraction
    a = mt.tppfp_augmentation_count(r0, lam)
    frac = Fraction(repr(lam))
    assert a == 0 or Fraction(a, a + r0) <= frac
    assert Fraction(a + 1, a + 1 + r0) > frac


def test_maxt_dominates_step_down_with_shared_draws():
    rng = np.random.default_rng(21)
    z = rng.uniform(0, 2, 10)
    C = np.full((10, 10), 0.3) + 0.7 * np.eye(10)
    a = mt.maxt(z, 20, C, draws=4000, seed=2).values
    b = mt.maxt_step(z, 20, C, draws=4000, seed=2).values
    assert np.all(a >= b)
