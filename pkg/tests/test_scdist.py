"""Unit tests for pairwise stopping-index distributions."""

from __future__ import annotations

from fractions import Fraction

import pytest

from samplex import (
    ComputationRefused,
    EmpiricalSCDist,
    GeometricSCDist,
    PairwiseSCDist,
    PointMassSCDist,
    UndefinedMomentError,
    dist_moments,
    enumerate_orderings_oracle,
    geometric_pmf,
    mc_pairwise_oracle,
    pairwise_cdf,
    pairwise_pmf,
    pairwise_verification,
    partial_verification_prob,
    total_variation,
)

from oracles import pairwise_stop_pmf


class TestPairwiseExact:
    def test_pinned_L4_K2(self):
        dist = PairwiseSCDist(4, 2)
        assert dist.support() == range(1, 4)
        assert dist.pmf(1) == Fraction(1, 2)
        assert dist.pmf(2) == Fraction(1, 3)
        assert dist.pmf(3) == Fraction(1, 6)
        assert dist.cdf(2) == Fraction(5, 6)
        assert dist.moment(1) == Fraction(5, 3)

    def test_all_positions_disagree(self):
        dist = PairwiseSCDist(5, 5)
        assert dist.support() == range(1, 2)
        assert dist.pmf(1) == Fraction(1)

    def test_single_disagreement_is_uniform(self):
        dist = PairwiseSCDist(4, 1)
        assert [dist.pmf(i) for i in dist.support()] == [Fraction(1, 4)] * 4

    def test_pmf_is_zero_off_support(self):
        dist = PairwiseSCDist(4, 2)
        assert dist.pmf(0) == 0
        assert dist.pmf(4) == 0
        assert dist.cdf(0) == 0
        assert dist.cdf(17) == 1

    def test_mass_sums_to_one_exactly(self):
        for L in range(1, 9):
            for K in range(1, L + 1):
                dist = PairwiseSCDist(L, K)
                assert sum(dist.pmf(i) for i in dist.support()) == Fraction(1)

    def test_matches_permutation_oracle(self):
        for L in range(1, 7):
            for K in range(1, L + 1):
                dist = PairwiseSCDist(L, K)
                oracle = enumerate_orderings_oracle("0" * L, "1" * K + "0" * (L - K))
                for i in dist.support():
                    assert dist.pmf(i) == oracle.pmf(i), (L, K, i)

    def test_matches_independent_oracle(self):
        # recomputed from scratch in the test suite, not via the library
        for L in range(2, 6):
            for K in range(1, L + 1):
                dist = PairwiseSCDist(L, K)
                expected = pairwise_stop_pmf(L, K)
                got = {i: dist.pmf(i) for i in dist.support() if dist.pmf(i) > 0}
                assert got == expected

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            PairwiseSCDist(0, 0)
        with pytest.raises(ValueError):
            PairwiseSCDist(4, 5)
        with pytest.raises(ValueError, match="pairwise_verification"):
            PairwiseSCDist(4, 0)

    def test_module_level_helpers_agree(self):
        assert pairwise_pmf(4, 2, 1) == Fraction(1, 2)
        assert pairwise_cdf(4, 2, 2) == Fraction(5, 6)
        assert partial_verification_prob(4, 2, 1) == Fraction(1, 2)

    def test_survival_to_pmf_relation(self):
        dist = PairwiseSCDist(7, 3)
        for i in dist.support():
            step = partial_verification_prob(7, 3, i - 1) - partial_verification_prob(7, 3, i)
            assert dist.pmf(i) == step


class TestPairwiseLarge:
    def test_float_path_past_the_exact_cutoff(self):
        dist = PairwiseSCDist(25, 3)
        assert not dist.exact
        total = sum(dist.pmf(i) for i in dist.support())
        assert total == pytest.approx(1.0, abs=1e-9)
        # spot-check against the direct combinatorial ratio
        assert float(dist.pmf(1)) == pytest.approx(3 / 25, rel=1e-9)


class TestPointMass:
    def test_verification_runs_to_the_end(self):
        dist = pairwise_verification(4)
        assert dist == PointMassSCDist(4)
        assert dist.pmf(4) == Fraction(1)
        assert dist.pmf(3) == Fraction(0)
        assert dist.cdf(4) == Fraction(1)
        assert dist.moment(2) == Fraction(16)

    def test_rejects_bad_length(self):
        with pytest.raises(ValueError):
            pairwise_verification(0)
        with pytest.raises(ValueError):
            PointMassSCDist(-1)


class TestGeometric:
    def test_pmf_and_cdf(self):
        dist = GeometricSCDist(0.25)
        assert dist.pmf(1) == 0.25
        assert dist.pmf(3) == pytest.approx(0.75**2 * 0.25)
        assert dist.cdf(2) == pytest.approx(1 - 0.75**2)
        assert dist.pmf(0) == 0.0
        assert geometric_pmf(0.25, 3) == dist.pmf(3)

    def test_moments_match_closed_forms(self):
        for p in (0.1, 0.5, 0.9):
            dist = GeometricSCDist(p)
            assert dist.moment(1) == pytest.approx(1 / p, rel=1e-9)
            assert dist.moment(2) == pytest.approx((2 - p) / p**2, rel=1e-9)

    def test_certain_halt_is_a_point_mass(self):
        dist = GeometricSCDist(1.0)
        assert dist.pmf(1) == 1.0
        assert dist.moment(3) == pytest.approx(1.0)

    def test_never_halting_has_no_moments(self):
        dist = GeometricSCDist(0.0)
        assert not dist.halts_almost_surely
        assert dist.pmf(5) == 0.0
        with pytest.raises(UndefinedMomentError):
            dist.moment(1)

    def test_memorylessness(self):
        dist = GeometricSCDist(0.3)
        # P(I > a + b | I > a) == P(I > b)
        for a, b in ((1, 2), (3, 4), (2, 5)):
            tail = lambda i: 1.0 - dist.cdf(i)
            assert tail(a + b) / tail(a) == pytest.approx(tail(b), rel=1e-9)

    def test_rejects_bad_probability(self):
        for bad in (-0.1, 1.1, float("nan")):
            with pytest.raises(ValueError):
                GeometricSCDist(bad)


class TestEmpirical:
    def test_counts_must_reconcile(self):
        with pytest.raises(ValueError):
            EmpiricalSCDist({1: 3}, trials=5)
        EmpiricalSCDist({1: 3}, trials=5, censored=2)

    def test_pmf_and_moment(self):
        dist = EmpiricalSCDist({1: 2, 3: 2}, trials=4)
        assert dist.pmf(1) == Fraction(1, 2)
        assert dist.pmf(2) == Fraction(0)
        assert dist.cdf(3) == Fraction(1)
        assert dist.moment(1) == pytest.approx(2.0)

    def test_censoring_shrinks_the_pmf_not_the_moment_base(self):
        dist = EmpiricalSCDist({2: 5}, trials=10, censored=5)
        assert dist.pmf(2) == Fraction(1, 2)
        assert dist.moment(1) == pytest.approx(2.0)

    def test_all_censored_has_no_moments(self):
        dist = EmpiricalSCDist({}, trials=3, censored=3)
        with pytest.raises(UndefinedMomentError):
            dist.moment(1)


class TestOracles:
    def test_enumeration_refuses_long_inputs(self):
        with pytest.raises(ComputationRefused):
            enumerate_orderings_oracle("0" * 11, "1" * 11)

    def test_enumeration_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError):
            enumerate_orderings_oracle("00", "111")

    def test_mc_oracle_is_seeded_and_close(self):
        a = mc_pairwise_oracle("00000", "11000", trials=20_000, seed=3)
        b = mc_pairwise_oracle("00000", "11000", trials=20_000, seed=3)
        assert a.counts == b.counts
        exact = PairwiseSCDist(5, 2)
        tv = total_variation(
            a.pmf_map(), {i: float(exact.pmf(i)) for i in exact.support()}
        )
        assert tv < 0.02

    def test_mc_oracle_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            mc_pairwise_oracle("01", "10", trials=0, seed=1)


def test_dist_moments_helper():
    assert dist_moments(PairwiseSCDist(4, 2), 1) == Fraction(5, 3)
    with pytest.raises(ValueError):
        dist_moments(PairwiseSCDist(4, 2), 0)
