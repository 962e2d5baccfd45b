"""Unit tests for posterior tracking, stopping rules, and their analytics."""

from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest

import samplex.bayes
from samplex import (
    BitSource,
    ComputationRefused,
    Decision,
    DecisionStatus,
    HypothesisSet,
    IidSpec,
    MarkovSpec,
    PosteriorState,
    StoppingConfig,
    TypicalityRegion,
    check_stop,
    divergence_rate,
    equivalence_groups,
    expected_sc_evaluator,
    expected_sc_predictive,
    falsification_bounds,
    hypothesis_count_bound,
    mc_sample_complexity,
    mc_surprisal_moment_curve,
    posterior_predictive,
    posterior_update,
    sample_discrete,
    surprisal_moment,
    surprisal_moment_product_form,
    typical_membership,
    typical_set_bounds,
    warmup_threshold,
)

from oracles import hand_posterior, surprisal_moment_direct

B5 = IidSpec.from_probs([0.5, 0.5])
B9 = IidSpec.from_probs([0.1, 0.9])  # emits 1 with probability 0.9
B95 = IidSpec.from_probs([0.05, 0.95])
MIRROR = IidSpec.from_probs([0.9, 0.1])
PAIR = HypothesisSet((B5, B9))
UNIFORM = (0.5, 0.5)


def run_posterior(hset, prior, observations):
    state = PosteriorState.from_prior(hset, prior)
    for sym in observations:
        state = posterior_update(state, sym)
    return state


class TestDivergenceRate:
    def test_pinned_iid_value(self):
        assert divergence_rate(B5, MIRROR) == pytest.approx(0.7369655941662063)

    def test_symmetric_and_zero_on_equal(self):
        assert divergence_rate(B5, B9) == divergence_rate(B9, B5)
        assert divergence_rate(B9, B9) == 0.0

    def test_markov_weights_contexts_by_stationary_mass(self):
        sticky9 = MarkovSpec(
            memory=1,
            transitions={
                (0,): IidSpec.from_probs([0.9, 0.1]),
                (1,): IidSpec.from_probs([0.1, 0.9]),
            },
            init=("stationary", None),
        )
        sticky8 = MarkovSpec(
            memory=1,
            transitions={
                (0,): IidSpec.from_probs([0.8, 0.2]),
                (1,): IidSpec.from_probs([0.2, 0.8]),
            },
            init=("stationary", None),
        )
        assert divergence_rate(sticky9, sticky8) == pytest.approx(
            0.06405999884615013
        )

    def test_memory_mismatch_rejected(self):
        sticky = MarkovSpec(
            memory=1,
            transitions={
                (0,): IidSpec.from_probs([0.9, 0.1]),
                (1,): IidSpec.from_probs([0.1, 0.9]),
            },
            init=("stationary", None),
        )
        with pytest.raises(ValueError):
            divergence_rate(sticky, B5)


class TestHypothesisSet:
    def test_rejects_empty_and_mixed_alphabets(self):
        with pytest.raises(ValueError):
            HypothesisSet(())
        with pytest.raises(ValueError):
            HypothesisSet((B5, IidSpec.from_probs([0.25, 0.25, 0.5])))

    def test_labels_must_match_members(self):
        with pytest.raises(ValueError):
            HypothesisSet((B5, B9), labels=("only-one",))

    def test_rates(self):
        rates = HypothesisSet((B5, B9)).rates()
        assert rates[0] == pytest.approx(1.0)
        assert rates[1] == pytest.approx(0.4689955935892812)

    def test_identical_pairs_reported(self):
        trio = HypothesisSet((B5, B5, B9))
        assert trio.observationally_identical_pairs() == ((0, 1),)


class TestEquivalenceGroups:
    def test_exact_duplicates_merge_at_zero_tolerance(self):
        trio = HypothesisSet((B5, B5, B9))
        assert equivalence_groups(trio, 0.0) == ((0, 1), (2,))

    def test_generous_tolerance_merges_everything(self):
        trio = HypothesisSet((B5, B5, B9))
        assert equivalence_groups(trio, 0.75) == ((0, 1, 2),)

    def test_distinct_members_stay_apart(self):
        assert equivalence_groups(PAIR, 0.0) == ((0,), (1,))


class TestPosterior:
    CERTAIN_ONE = IidSpec.from_probs([0.0, 1.0])

    def test_pinned_two_member_update(self):
        hset = HypothesisSet((B5, self.CERTAIN_ONE))
        state = run_posterior(hset, UNIFORM, (1,))
        assert state.posterior().probs == pytest.approx((1 / 3, 2 / 3))
        assert posterior_predictive(state).probs == pytest.approx((1 / 6, 5 / 6))

    def test_contradiction_eliminates_a_member(self):
        hset = HypothesisSet((B5, self.CERTAIN_ONE))
        state = run_posterior(hset, UNIFORM, (1, 0))
        assert state.posterior().probs == pytest.approx((1.0, 0.0))
        assert not state.all_falsified

    def test_all_falsified_is_terminal(self):
        hset = HypothesisSet((self.CERTAIN_ONE, IidSpec.from_probs([1.0, 0.0])))
        state = run_posterior(hset, UNIFORM, (1, 0))
        assert state.all_falsified
        decision = check_stop(state, StoppingConfig(p=0.9), observations=(1, 0))
        assert decision.status is DecisionStatus.FALSIFIED
        assert decision.terminal
        assert decision.group == ()
        with pytest.raises(ValueError):
            posterior_predictive(state)

    def test_matches_exact_rational_bayes(self):
        rng = random.Random(0xACE)
        grid = [Fraction(j, 8) for j in range(9)]
        for _ in range(300):
            n = rng.randint(2, 4)
            probs = []
            for _ in range(n):
                p1 = rng.choice(grid)
                probs.append([1 - p1, p1])
            weights = [rng.randint(1, 5) for _ in range(n)]
            total = sum(weights)
            prior = [Fraction(w, total) for w in weights]
            obs = tuple(rng.randint(0, 1) for _ in range(rng.randint(1, 6)))
            hset = HypothesisSet(
                tuple(IidSpec.from_probs([float(a), float(b)]) for a, b in probs)
            )
            state = run_posterior(hset, tuple(float(w) for w in prior), obs)
            try:
                expected = hand_posterior(prior, probs, obs)
            except ZeroDivisionError:
                assert state.all_falsified
                continue
            got = state.posterior().probs
            for g, e in zip(got, expected):
                assert g == pytest.approx(float(e), abs=1e-12)

    def test_prior_must_match_and_normalize(self):
        with pytest.raises(ValueError):
            PosteriorState.from_prior(PAIR, (0.5, 0.25, 0.25))
        with pytest.raises(ValueError):
            PosteriorState.from_prior(PAIR, (0.9, 0.2))


class TestTypicality:
    def test_pinned_bounds(self):
        assert typical_set_bounds(B5, 4, 0.5) == pytest.approx((0.03125, 0.125))

    def test_bounds_need_observations(self):
        with pytest.raises(ValueError):
            typical_set_bounds(B5, 0, 0.5)

    def test_fair_sequences_are_always_typical(self):
        assert typical_membership(B5, (0, 1, 1, 0), 0.5) is TypicalityRegion.TYPICAL

    def test_improbable_region(self):
        assert (
            typical_membership(B9, (0,) * 12, 0.5)
            is TypicalityRegion.ATYPICAL_IMPROBABLE
        )

    def test_probable_region(self):
        assert (
            typical_membership(B9, (1,) * 12, 0.9)
            is TypicalityRegion.ATYPICAL_PROBABLE
        )

    def test_warmup_pinned_and_early_queries_warn(self):
        assert warmup_threshold(1.0, 0.5) == 2
        with pytest.warns(UserWarning):
            region = typical_membership(B5, (1,), 0.5)
        assert region is TypicalityRegion.UNDETERMINED


class TestFalsificationBounds:
    def test_pinned_open_band(self):
        lo, hi = falsification_bounds(B5, B9, 0.5)
        assert lo == pytest.approx(0.8684827970831032)
        assert hi == math.inf

    def test_pinned_closed_band(self):
        lo, hi = falsification_bounds(B5, B9, 0.9)
        assert lo == pytest.approx(1.507778585013894)
        assert hi == pytest.approx(2.048315955800779)
        assert lo < hi

    def test_well_specified_band_never_closes(self):
        lo, hi = falsification_bounds(B5, B5, 0.5)
        assert lo == pytest.approx(0.5)
        assert hi == math.inf

    def test_q_zero_never_falsifies(self):
        with pytest.raises(ValueError, match="never"):
            falsification_bounds(B5, B9, 0.0)


class TestStoppingRules:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            StoppingConfig(p=0.3, q=0.5)
        with pytest.raises(ValueError):
            StoppingConfig(p=1.5)
        with pytest.raises(ValueError):
            StoppingConfig(r=-0.5)

    def test_observation_count_must_match_state(self):
        state = run_posterior(PAIR, UNIFORM, (1,))
        with pytest.raises(ValueError):
            check_stop(state, StoppingConfig(p=0.9), observations=(1, 0))

    def test_pinned_threshold_cases(self):
        hset = HypothesisSet((B5, IidSpec.from_probs([0.0, 1.0])))
        state = run_posterior(hset, UNIFORM, (1,))
        eager = check_stop(state, StoppingConfig(p=0.6), observations=(1,))
        assert eager.status is DecisionStatus.VERIFIED
        assert eager.group == (1,)
        assert eager.terminal
        patient = check_stop(state, StoppingConfig(p=0.9), observations=(1,))
        assert patient.status is DecisionStatus.UNDETERMINED
        assert not patient.terminal

    def test_confident_prior_verifies_before_any_observation(self):
        state = PosteriorState.from_prior(PAIR, (0.95, 0.05))
        decision = check_stop(state, StoppingConfig(p=0.9), observations=())
        assert decision.status is DecisionStatus.VERIFIED
        assert decision.t == 0
        assert decision.terminal

    def test_resolution_cap_forces_a_terminal_undetermined(self):
        state = run_posterior(PAIR, UNIFORM, (1, 1))
        decision = check_stop(
            state, StoppingConfig(p=0.999999, r=0.25), observations=(1, 1)
        )
        assert decision.status is DecisionStatus.UNDETERMINED
        assert decision.terminal
        assert decision.t == 2

    def test_identical_members_partially_identify(self):
        twins = HypothesisSet((B5, B5))
        state = run_posterior(twins, UNIFORM, (1,))
        decision = check_stop(state, StoppingConfig(p=0.9), observations=(1,))
        assert decision.status is DecisionStatus.PARTIALLY_IDENTIFIED
        assert decision.group == (0, 1)
        assert decision.terminal

    def test_misspecified_data_falsifies_the_whole_set(self):
        strangers = HypothesisSet((B9, B95))
        state = PosteriorState.from_prior(strangers, UNIFORM)
        obs = []
        decision = None
        for _ in range(50):
            state = posterior_update(state, 0)
            obs.append(0)
            decision = check_stop(
                state, StoppingConfig(p=1.0, q=0.5), observations=tuple(obs)
            )
            if decision.terminal:
                break
        assert decision is not None
        assert decision.status is DecisionStatus.FALSIFIED
        assert decision.terminal

    def test_decision_serializes(self):
        state = run_posterior(PAIR, UNIFORM, ())
        decision = check_stop(state, StoppingConfig(p=0.9), observations=())
        data = decision.to_json()
        assert data["status"] == "Undetermined"
        assert data["t"] == 0


class TestMCSampleComplexity:
    CFG = StoppingConfig(p=0.9)

    def test_same_seed_reproduces_exactly(self):
        a = mc_sample_complexity(B5, PAIR, UNIFORM, self.CFG, trials=150, seed=4)
        b = mc_sample_complexity(B5, PAIR, UNIFORM, self.CFG, trials=150, seed=4)
        assert a.dist.counts == b.dist.counts
        assert a.decisions == b.decisions

    def test_in_set_ideal_always_verifies(self):
        report = mc_sample_complexity(
            B5, PAIR, UNIFORM, self.CFG, trials=300, seed=4
        )
        assert report.decisions["Verified"] == 300
        assert report.dist.censored == 0

    def test_fast_and_reference_paths_agree(self):
        scenarios = [
            (B5, PAIR, self.CFG),
            (B5, HypothesisSet((B9, B95)), StoppingConfig(p=1.0, q=0.5)),
            (B9, PAIR, StoppingConfig(p=0.8, q=0.25)),
        ]
        for ideal, hset, cfg in scenarios:
            fast = mc_sample_complexity(
                ideal, hset, UNIFORM, cfg, trials=120, seed=31, max_steps=2000
            )
            ref = mc_sample_complexity(
                ideal,
                hset,
                UNIFORM,
                cfg,
                trials=120,
                seed=31,
                max_steps=2000,
                _force_reference=True,
            )
            assert fast.dist.counts == ref.dist.counts
            assert fast.decisions == ref.decisions

    def test_trial_blocks_merge_to_the_full_run(self):
        whole = mc_sample_complexity(B5, PAIR, UNIFORM, self.CFG, trials=100, seed=9)
        head = mc_sample_complexity(B5, PAIR, UNIFORM, self.CFG, trials=60, seed=9)
        tail = mc_sample_complexity(
            B5, PAIR, UNIFORM, self.CFG, trials=40, seed=9, first_trial=60
        )
        merged: dict[int, int] = dict(head.dist.counts)
        for idx, count in tail.dist.counts.items():
            merged[idx] = merged.get(idx, 0) + count
        assert merged == dict(whole.dist.counts)

    def test_unreachable_certainty_censors_every_trial(self):
        report = mc_sample_complexity(
            B5, PAIR, UNIFORM, StoppingConfig(p=1.0), trials=5, seed=2, max_steps=400
        )
        assert report.dist.censored == 5
        assert report.decisions["Undetermined"] == 5

    def test_verified_decisions_are_mostly_correct(self):
        close = HypothesisSet((B5, IidSpec.from_probs([0.375, 0.625])))
        cfg = StoppingConfig(p=0.8)
        hits = 0
        total = 400
        report = mc_sample_complexity(B5, close, UNIFORM, cfg, trials=total, seed=77)
        assert report.decisions["Verified"] == total
        # rerun decisions to inspect which member each trial settled on
        # (the report binds group indices into the decision histogram only)
        correct = 0
        for i in range(total):
            src = BitSource(f"77:{i}")
            state = PosteriorState.from_prior(close, UNIFORM)
            obs: list[int] = []
            while True:
                decision = check_stop(state, cfg, observations=tuple(obs))
                if decision.terminal:
                    break
                sym = sample_discrete(B5, src)
                obs.append(sym)
                state = posterior_update(state, sym)
            if decision.status is DecisionStatus.VERIFIED and decision.group == (0,):
                correct += 1
        floor = 0.8 - 3 * math.sqrt(0.8 * 0.2 / total)
        assert correct / total >= floor

    def test_posterior_concentrates_on_the_truth(self):
        early, late = [], []
        for i in range(150):
            src = BitSource(f"doob:{i}")
            state = PosteriorState.from_prior(PAIR, UNIFORM)
            for t in range(1, 41):
                state = posterior_update(state, sample_discrete(B5, src))
                if t == 5:
                    early.append(state.posterior()[0])
            late.append(state.posterior()[0])
        assert sum(late) / len(late) > sum(early) / len(early)
        assert sum(late) / len(late) > 0.95


class TestSurprisalMoments:
    def test_singleton_set_has_zero_surprisal(self):
        lone = HypothesisSet((B5,))
        assert surprisal_moment(B5, lone, (1.0,), 6, 2) == 0.0

    def test_matches_direct_enumeration(self):
        prior = [Fraction(1, 2), Fraction(1, 2)]
        probs = [[Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 10), Fraction(9, 10)]]
        for t in (1, 3, 6):
            for m in (1, 2, 3):
                got = surprisal_moment(B5, PAIR, UNIFORM, t, m)
                want = surprisal_moment_direct(prior, probs, 0, t, m)
                assert got == pytest.approx(want, rel=1e-9), (t, m)

    def test_refuses_oversized_enumeration(self):
        with pytest.raises(ComputationRefused):
            surprisal_moment(B5, PAIR, UNIFORM, 21, 1)

    def test_product_form_candidate_matches_only_the_mean(self):
        for t in (2, 5, 9):
            closed = surprisal_moment_product_form(B5, PAIR, UNIFORM, t, 1)
            exact = surprisal_moment(B5, PAIR, UNIFORM, t, 1)
            assert closed == pytest.approx(exact, abs=1e-9)
        closed2 = surprisal_moment_product_form(B5, PAIR, UNIFORM, 5, 2)
        exact2 = surprisal_moment(B5, PAIR, UNIFORM, 5, 2)
        assert abs(closed2 - exact2) > 0.5

    def test_mc_curve_agrees_with_enumeration(self):
        curve = mc_surprisal_moment_curve(
            B5, PAIR, UNIFORM, t_max=6, orders=(1, 2), sequences=4000, seed=9
        )
        assert set(curve) == {(t, m) for t in range(1, 7) for m in (1, 2)}
        for t, m in ((3, 1), (6, 2)):
            exact = surprisal_moment(B5, PAIR, UNIFORM, t, m)
            assert curve[(t, m)] == pytest.approx(exact, rel=0.1)

    def test_mc_curve_is_seeded(self):
        a = mc_surprisal_moment_curve(B5, PAIR, UNIFORM, 4, (1,), 500, 3)
        b = mc_surprisal_moment_curve(B5, PAIR, UNIFORM, 4, (1,), 500, 3)
        assert a == b


class TestExpectedSampleComplexity:
    def test_pinned_crossing(self):
        est = expected_sc_evaluator(B5, PAIR, UNIFORM, 0.9)
        assert est.value == pytest.approx(13.905391109770717)
        assert est.method == "enumeration"
        assert est.smallest_t == 14

    def test_confident_prior_needs_no_observations(self):
        est = expected_sc_evaluator(B5, PAIR, (0.95, 0.05), 0.9)
        assert est.value == 0.0
        assert est.method == "prior-threshold"

    def test_duplicate_members_make_certainty_unreachable(self):
        twins = HypothesisSet((B5, B5))
        est = expected_sc_evaluator(B5, twins, UNIFORM, 0.9)
        assert est.value == math.inf
        assert est.method == "unreachable-threshold"
        assert est.smallest_t is None

    def test_symmetric_pair_is_indifferent_to_the_true_side(self):
        pair = HypothesisSet((MIRROR, B9))
        a = expected_sc_evaluator(MIRROR, pair, UNIFORM, 0.9)
        b = expected_sc_evaluator(B9, pair, UNIFORM, 0.9)
        assert a.value == pytest.approx(b.value, abs=1e-12)

    def test_estimate_serializes(self):
        est = expected_sc_evaluator(B5, PAIR, UNIFORM, 0.9)
        data = est.to_json()
        assert set(data) == {"value", "method", "ci", "smallest_t"}

    def test_prior_averaged_variant(self):
        est = expected_sc_predictive(PAIR, UNIFORM, 0.9)
        assert est.value == pytest.approx(13.446060752821765)

    def test_mc_extension_brackets_the_analytic_value(self):
        est = expected_sc_evaluator(
            B5, PAIR, UNIFORM, 0.9, sequences=4000, seed=7, exact_t_max=0
        )
        assert est.method == "monte-carlo"
        assert est.ci is not None
        lo, hi = est.ci
        slack = 0.5
        assert lo - slack <= 13.905391109770717 <= hi + slack


def test_hypothesis_count_bound():
    assert hypothesis_count_bound(1024, 0.9, 0.1) == 134
    with pytest.raises(ValueError):
        hypothesis_count_bound(1024, 0.9, 0.0)
    with pytest.raises(ValueError):
        hypothesis_count_bound(1024, 1.0, 0.1)
