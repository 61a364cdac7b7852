import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sample_set
from odmlab.core import CostSpec, MediatorDecision
from odmlab.mediators import (DecisionInputs, MatchedDecay, PolicyKind,
                              benchmark_decide, fit_matched_epsilon,
                              g_transform, greedy_decide, kappa0, lambert_w0,
                              mutual_info, umpire_decide)
from odmlab.model import PredictiveSampleSet

COSTS = CostSpec(k_int=0.1, k_req=0.6, kappa=kappa0(3, 0.5))


def _inputs(marginal, human, costs=COSTS, samples=None, t=1):
    marginal = np.asarray(marginal, dtype=float)
    if samples is None:
        samples = PredictiveSampleSet(probs=np.tile(marginal, (2, 1)))
    return DecisionInputs(marginal=marginal, samples=samples,
                          human_action=human, costs=costs, t=t,
                          m=marginal.shape[0])


def _brute_force_mi(probs: np.ndarray) -> float:
    def H(p):
        return -sum(v * math.log(v) for v in p if v > 0)

    return H(probs.mean(axis=0)) - sum(H(row) for row in probs) / probs.shape[0]


# ---------------------------------------------------------------------------
# Lambert W


def test_lambert_branch_values():
    assert abs(lambert_w0(0.0)) <= 1e-12
    assert abs(lambert_w0(math.e) - 1.0) <= 1e-12
    assert abs(lambert_w0(-1.0 / math.e) + 1.0) <= 1e-12


def test_lambert_domain_error():
    with pytest.raises(ValueError, match="domain"):
        lambert_w0(-1.0 / math.e - 1e-6)


@settings(max_examples=300, deadline=None)
@given(st.floats(-1.0 / math.e + 1e-15, 1e6))
def test_lambert_residual_property(x):
    w = lambert_w0(x)
    assert w >= -1.0 - 1e-12
    assert abs(w * math.exp(w) - x) <= 1e-12 * max(1.0, abs(x))


# ---------------------------------------------------------------------------
# g-transform and kappa0


def test_g_zero_is_zero_exactly():
    assert g_transform(0.0, 0.5) == 0.0


def test_g_at_one():
    for b in (0.5, 1.0, 2.5):
        assert g_transform(1.0, b) == pytest.approx(2 * b * (math.e - 1),
                                                    rel=1e-14)


def test_g_log3_frozen_value():
    # high-precision root-finder oracle, frozen before build
    assert g_transform(math.log(3), 0.5) == pytest.approx(
        1.8151869788736622, abs=1e-12)


def test_g_strictly_increasing():
    grid = np.linspace(0.0, math.log(10), 200)
    vals = [g_transform(v, 0.5) for v in grid]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert all(v >= 0 for v in vals)


def test_kappa0_normalization_identity():
    for m in range(2, 11):
        assert abs(kappa0(m, 0.5) * g_transform(math.log(m), 0.5) - 1.0) <= 1e-12


def test_kappa0_frozen_values_and_monotonicity():
    assert kappa0(3, 0.5) == pytest.approx(0.5509074335804832, abs=1e-12)
    assert kappa0(2, 0.5) == pytest.approx(0.71897572844573641, abs=1e-12)
    vals = [kappa0(m, 0.5) for m in range(2, 11)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------------
# Mutual information


def test_mi_identical_rows_is_zero():
    probs = np.tile([0.2, 0.3, 0.5], (6, 1))
    assert mutual_info(PredictiveSampleSet(probs=probs)) == 0.0


def test_mi_deterministic_disagreement_is_log2():
    probs = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert mutual_info(PredictiveSampleSet(probs=probs)) == pytest.approx(
        math.log(2), abs=1e-12)


def test_mi_matches_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(100):
        s = int(rng.integers(1, 9))
        m = int(rng.integers(2, 5))
        samples = make_sample_set(rng, s, m)
        mi = mutual_info(samples)
        assert mi == pytest.approx(_brute_force_mi(samples.probs), abs=1e-12)
        assert -1e-12 <= mi <= math.log(m) + 1e-12


def test_mi_rejects_invalid_rows():
    with pytest.raises(ValueError):
        mutual_info(np.array([[0.5, 0.4]]))


def test_mi_accepts_plain_arrays():
    probs = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert mutual_info(probs) == 0.0


# ---------------------------------------------------------------------------
# Greedy decisions


def test_greedy_confident_human_accepts():
    marginal = np.array([0.9, 0.06, 0.04])
    decision, model_action = greedy_decide(_inputs(marginal, human=0), 0.6)
    assert decision == MediatorDecision.ACCEPT
    assert model_action == 0


def test_greedy_uniform_requests():
    marginal = np.array([1 / 3, 1 / 3, 1 / 3])
    decision, _ = greedy_decide(_inputs(marginal, human=1), 0.6)
    assert decision == MediatorDecision.REQUEST


def test_greedy_confident_model_intervenes():
    marginal = np.array([0.05, 0.95, 0.0])
    decision, model_action = greedy_decide(_inputs(marginal, human=0), 0.6)
    assert decision == MediatorDecision.INTERVENE
    assert model_action == 1


def test_greedy_tie_prefers_accept_then_intervene():
    # human action is also the argmax: accept = intervene - k_int < request
    marginal = np.array([0.6, 0.4, 0.0])
    decision, _ = greedy_decide(_inputs(marginal, human=0), 0.4)
    assert decision == MediatorDecision.ACCEPT
    # a strictly cheaper request must win the moment the tie breaks
    decision, _ = greedy_decide(_inputs(marginal, human=0), 0.4 - 1e-9)
    assert decision == MediatorDecision.REQUEST
    # intervene ties request: 1 - 0.6 + 0.1 = 0.5, human is wrong
    decision, _ = greedy_decide(_inputs(marginal, human=2), 0.5)
    assert decision == MediatorDecision.INTERVENE


def test_greedy_argmax_lowest_index_on_ties():
    marginal = np.array([0.4, 0.4, 0.2])
    _, model_action = greedy_decide(_inputs(marginal, human=2), 10.0)
    assert model_action == 0


def test_greedy_matches_enumeration_on_random_inputs():
    rng = np.random.default_rng(7)
    for _ in range(2000):
        m = int(rng.integers(2, 6))
        marginal = rng.dirichlet(np.ones(m))
        human = int(rng.integers(0, m))
        k_int = float(rng.uniform(0.0, 0.5))
        k_req = float(rng.uniform(0.0, 1.5))
        costs = CostSpec(k_int=k_int, k_req=k_req, kappa=0.0)
        decision, model_action = greedy_decide(
            _inputs(marginal, human, costs=costs), k_req)
        best = int(np.argmax(marginal))
        arms = [1.0 - marginal[human], 1.0 - marginal[best] + k_int, k_req]
        expected = min(range(3), key=lambda i: (arms[i], i))
        assert int(decision) == expected
        assert model_action == best


# ---------------------------------------------------------------------------
# Adjusted-cost mediator


def test_umpire_zero_mi_equals_greedy():
    marginal = np.array([0.7, 0.2, 0.1])
    inputs = _inputs(marginal, human=1)
    decision, action, mi, adjusted = umpire_decide(inputs)
    assert mi == 0.0
    assert adjusted == COSTS.k_req
    assert (decision, action) == greedy_decide(inputs, COSTS.k_req)


def test_umpire_max_mi_drives_request_cost_to_zero():
    probs = np.array([[1.0, 0.0], [0.0, 1.0]])
    samples = PredictiveSampleSet(probs=probs)
    costs = CostSpec(k_int=0.1, k_req=0.6, kappa=kappa0(2, 0.5))
    inputs = DecisionInputs(marginal=samples.mean(), samples=samples,
                            human_action=0, costs=costs, t=1, m=2)
    decision, _, mi, adjusted = umpire_decide(inputs)
    assert mi == pytest.approx(math.log(2), abs=1e-12)
    assert adjusted == pytest.approx(0.0, abs=1e-12)
    assert decision == MediatorDecision.REQUEST


def test_umpire_free_request_still_loses_to_zero_cost_accept():
    # the tie at value 0 prefers Accept by the documented order
    marginal = np.array([1.0, 0.0, 0.0])
    decision, _ = greedy_decide(_inputs(marginal, human=0), 0.0)
    assert decision == MediatorDecision.ACCEPT


def test_umpire_adjusted_cost_in_range_on_random_sets():
    rng = np.random.default_rng(13)
    for _ in range(500):
        m = int(rng.integers(2, 6))
        samples = make_sample_set(rng, int(rng.integers(1, 9)), m)
        costs = CostSpec(k_int=0.1, k_req=float(rng.uniform(0.1, 2.0)),
                         kappa=kappa0(m, 0.5))
        inputs = DecisionInputs(marginal=samples.mean(), samples=samples,
                                human_action=int(rng.integers(0, m)),
                                costs=costs, t=1, m=m)
        _, _, mi, adjusted = umpire_decide(inputs)
        assert 0.0 <= adjusted <= costs.k_req
        assert 0.0 <= mi <= math.log(m) + 1e-12


def test_umpire_requires_samples():
    inputs = DecisionInputs(marginal=np.array([0.5, 0.5]), samples=None,
                            human_action=0, costs=COSTS, t=1, m=2)
    with pytest.raises(ValueError, match="samples"):
        umpire_decide(inputs)


def test_umpire_eps_floor():
    marginal = np.array([0.9, 0.05, 0.05])
    inputs = _inputs(marginal, human=0)
    decisions = {umpire_decide(inputs, np.random.default_rng(i),
                               eps_floor=1.0)[0] for i in range(20)}
    assert decisions == {MediatorDecision.REQUEST}
    with pytest.raises(ValueError, match="RNG"):
        umpire_decide(inputs, None, eps_floor=0.5)


# ---------------------------------------------------------------------------
# Benchmarks


def test_human_always_accepts():
    marginal = np.array([0.0, 0.0, 1.0])
    decision, _ = benchmark_decide(PolicyKind.HUMAN, _inputs(marginal, 0),
                                   np.random.default_rng(0))
    assert decision == MediatorDecision.ACCEPT


def test_random_covers_all_arms():
    rng = np.random.default_rng(0)
    inputs = _inputs(np.array([0.5, 0.3, 0.2]), 0)
    seen = {int(benchmark_decide(PolicyKind.RANDOM, inputs, rng)[0])
            for _ in range(200)}
    assert seen == {0, 1, 2}


def test_supervised_branches():
    agree = _inputs(np.array([0.8, 0.1, 0.1]), 0,
                    costs=CostSpec(k_int=0.1, k_req=0.6, epsilon=0.0, kappa=0.0))
    decision, _ = benchmark_decide(PolicyKind.SUPERVISED, agree,
                                   np.random.default_rng(0))
    assert decision == MediatorDecision.ACCEPT
    disagree = _inputs(np.array([0.8, 0.1, 0.1]), 1,
                       costs=CostSpec(k_int=0.1, k_req=0.6, epsilon=0.0, kappa=0.0))
    decision, _ = benchmark_decide(PolicyKind.SUPERVISED, disagree,
                                   np.random.default_rng(0))
    assert decision == MediatorDecision.INTERVENE
    always_req = _inputs(np.array([0.8, 0.1, 0.1]), 0,
                         costs=CostSpec(k_int=0.1, k_req=0.6, epsilon=1.0, kappa=0.0))
    decision, _ = benchmark_decide(PolicyKind.SUPERVISED, always_req,
                                   np.random.default_rng(0))
    assert decision == MediatorDecision.REQUEST


def test_cost_sensitive_is_greedy():
    rng = np.random.default_rng(3)
    for _ in range(50):
        marginal = rng.dirichlet(np.ones(3))
        inputs = _inputs(marginal, int(rng.integers(0, 3)))
        assert benchmark_decide(PolicyKind.COST_SENSITIVE, inputs,
                                rng) == greedy_decide(inputs, COSTS.k_req)


def test_thompson_variants_share_sampled_row():
    probs = np.array([[0.1, 0.8, 0.1],
                      [0.7, 0.2, 0.1],
                      [0.1, 0.1, 0.8]])
    samples = PredictiveSampleSet(probs=probs)
    marginal = samples.mean()  # rows disagree about the best action
    inputs = DecisionInputs(marginal=marginal, samples=samples,
                            human_action=2, costs=COSTS, t=1, m=3)
    for seed in range(10):
        d1, a1 = benchmark_decide(PolicyKind.THOMPSON, inputs,
                                  np.random.default_rng(seed))
        d2, a2 = benchmark_decide(PolicyKind.FULL_THOMPSON, inputs,
                                  np.random.default_rng(seed))
        assert d1 == d2
        assert a1 == int(np.argmax(marginal))
        row = probs[np.random.default_rng(seed).integers(0, 3)]
        assert a2 == int(np.argmax(row))


def test_epsilon_greedy_override():
    inputs = _inputs(np.array([0.9, 0.05, 0.05]), 0,
                     costs=CostSpec(k_int=0.1, k_req=0.6, epsilon=1.0, kappa=0.0))
    rng = np.random.default_rng(1)
    seen = {int(benchmark_decide(PolicyKind.EPSILON_GREEDY, inputs, rng)[0])
            for _ in range(200)}
    assert seen == {0, 1, 2}


def test_epsilon_request_zero_eps_equals_cost_sensitive():
    rng = np.random.default_rng(5)
    costs = CostSpec(k_int=0.1, k_req=0.6, epsilon=0.0, kappa=0.0)
    for _ in range(100):
        marginal = rng.dirichlet(np.ones(3))
        inputs = _inputs(marginal, int(rng.integers(0, 3)), costs=costs)
        a = benchmark_decide(PolicyKind.EPSILON_REQUEST, inputs,
                             np.random.default_rng(0))
        b = benchmark_decide(PolicyKind.COST_SENSITIVE, inputs,
                             np.random.default_rng(0))
        assert a == b


def test_epsilon_request_full_eps_always_requests():
    inputs = _inputs(np.array([0.9, 0.05, 0.05]), 0,
                     costs=CostSpec(k_int=0.1, k_req=0.6, epsilon=1.0, kappa=0.0))
    decision, _ = benchmark_decide(PolicyKind.EPSILON_REQUEST, inputs,
                                   np.random.default_rng(0))
    assert decision == MediatorDecision.REQUEST


def test_pessimistic_requests_at_least_as_often_as_thompson():
    rng = np.random.default_rng(11)
    for _ in range(300):
        m = int(rng.integers(2, 5))
        samples = make_sample_set(rng, int(rng.integers(2, 8)), m)
        inputs = DecisionInputs(marginal=samples.mean(), samples=samples,
                                human_action=int(rng.integers(0, m)),
                                costs=COSTS, t=1, m=m)
        seed = int(rng.integers(0, 10_000))
        thompson, _ = benchmark_decide(PolicyKind.THOMPSON, inputs,
                                       np.random.default_rng(seed))
        pessimistic, _ = benchmark_decide(
            PolicyKind.PESSIMISTIC_BAYESIAN_SAMPLING, inputs,
            np.random.default_rng(seed))
        if thompson == MediatorDecision.REQUEST:
            assert pessimistic == MediatorDecision.REQUEST


def test_bayesian_active_request_extremes():
    sure = _inputs(np.array([0.6, 0.3, 0.1]), 0)
    decision, _ = benchmark_decide(PolicyKind.BAYESIAN_ACTIVE_REQUEST, sure,
                                   np.random.default_rng(0))
    assert decision == greedy_decide(sure, COSTS.k_req)[0]
    probs = np.array([[1.0, 0.0], [0.0, 1.0]])
    samples = PredictiveSampleSet(probs=probs)
    costs = CostSpec(k_int=0.1, k_req=0.6, kappa=kappa0(2, 0.5))
    uncertain = DecisionInputs(marginal=samples.mean(), samples=samples,
                               human_action=0, costs=costs, t=1, m=2)
    for seed in range(10):
        decision, _ = benchmark_decide(PolicyKind.BAYESIAN_ACTIVE_REQUEST,
                                       uncertain, np.random.default_rng(seed))
        assert decision == MediatorDecision.REQUEST


def test_matched_decay_requires_table():
    inputs = _inputs(np.array([0.5, 0.3, 0.2]), 0, t=3)
    with pytest.raises(ValueError, match="fit"):
        benchmark_decide(PolicyKind.MATCHED_DECAYING_REQUEST, inputs,
                         np.random.default_rng(0))


def test_matched_decay_table_drives_requests():
    matched = MatchedDecay(coefficients=np.zeros(4),
                           eps_table=np.ones(10))
    inputs = _inputs(np.array([0.9, 0.05, 0.05]), 0, t=4)
    decision, _ = benchmark_decide(PolicyKind.MATCHED_DECAYING_REQUEST,
                                   inputs, np.random.default_rng(0),
                                   matched=matched)
    assert decision == MediatorDecision.REQUEST
    with pytest.raises(ValueError, match="horizon"):
        matched.epsilon_at(11)
    with pytest.raises(ValueError, match="horizon"):
        matched.epsilon_at(0)


def test_umpire_not_dispatchable_as_benchmark():
    inputs = _inputs(np.array([0.5, 0.5]), 0,
                     costs=CostSpec(k_int=0.1, k_req=0.6, kappa=0.0))
    with pytest.raises(ValueError, match="umpire"):
        benchmark_decide(PolicyKind.UMPIRE, inputs, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Matched-epsilon fitting


def test_fit_matched_constant_rate_recovered():
    rate = 0.23
    t = np.arange(1, 501, dtype=float)
    matched = fit_matched_epsilon([rate * t, rate * t])
    assert np.max(np.abs(matched.eps_table - rate)) <= 1e-6


def test_fit_matched_zero_requests():
    matched = fit_matched_epsilon([np.zeros(100)])
    assert np.array_equal(matched.eps_table, np.zeros(100))


def test_fit_matched_sqrt_curve_frozen_error():
    # synthetic-curve oracle (frozen before build): a cubic fit to sqrt(t)
    # over n=500 misses the endpoint total by about 11.4 percent.
    t = np.arange(1, 501, dtype=float)
    matched = fit_matched_epsilon([np.sqrt(t)])
    total_true = math.sqrt(500.0)
    total_fit = float(matched.eps_table.sum())
    rel_err = abs(total_fit - total_true) / total_true
    assert rel_err == pytest.approx(0.11362756, abs=5e-4)
    assert rel_err < 0.15


def test_fit_matched_empty_input_rejected():
    with pytest.raises(ValueError, match="at least one"):
        fit_matched_epsilon([])


def test_decision_determinism_for_nonrandom_policies():
    rng = np.random.default_rng(2)
    marginal = rng.dirichlet(np.ones(3))
    inputs = _inputs(marginal, 1)
    first = greedy_decide(inputs, 0.6)
    assert all(greedy_decide(inputs, 0.6) == first for _ in range(20))
