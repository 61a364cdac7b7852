import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odmlab.core import CostSpec, MediatorDecision, RoundRecord
from odmlab.metrics import (MediatorCounters, binary_auprc, binary_auroc,
                            cumulative_regret, heldout_metrics,
                            mediator_counters, moving_average, oracle_round,
                            system_mistake)

COSTS = CostSpec(k_int=0.1, k_req=0.6, kappa=0.0)


def _record(decision, human, model, expert, oracle=MediatorDecision.ACCEPT):
    from odmlab.core import realized_round_loss, system_action
    return RoundRecord(
        t=1, context=np.zeros(2), human_action=human, model_action=model,
        expert_action=expert, decision=decision,
        system_action=system_action(decision, human, model, expert),
        realized_loss=realized_round_loss(decision, human, model, expert, COSTS),
        oracle_decision=oracle, oracle_loss=0.0)


# ---------------------------------------------------------------------------
# Oracle round and regret


def test_oracle_round_one_hot_correct_human():
    decision, loss = oracle_round(np.zeros(2), 1, 1,
                                  np.array([0.0, 1.0, 0.0]), COSTS)
    assert decision == MediatorDecision.ACCEPT
    assert loss == 0.0


def test_oracle_round_one_hot_wrong_human():
    decision, loss = oracle_round(np.zeros(2), 0, 1,
                                  np.array([0.0, 1.0, 0.0]), COSTS)
    assert decision == MediatorDecision.INTERVENE
    assert loss == pytest.approx(COSTS.k_int)


def test_cumulative_regret_identical_series_is_zero():
    losses = np.array([0.3, 0.0, 1.1])
    assert np.array_equal(cumulative_regret(losses, losses), np.zeros(3))


def test_cumulative_regret_constant_gap():
    oracle = np.zeros(10)
    system = oracle + 0.1
    expected = 0.1 * np.arange(1, 11)
    assert np.allclose(cumulative_regret(system, oracle), expected, atol=1e-12)


def test_cumulative_regret_length_mismatch():
    with pytest.raises(ValueError):
        cumulative_regret(np.zeros(3), np.zeros(4))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=50),
       st.integers(0, 10_000))
def test_cumulative_regret_matches_prefix_sum(sys_list, seed):
    system = np.array(sys_list)
    oracle = np.random.default_rng(seed).uniform(-2, 2, size=system.size)
    expected = np.cumsum(system - oracle)
    assert np.array_equal(cumulative_regret(system, oracle), expected)


# ---------------------------------------------------------------------------
# Mistakes and counters


def test_system_mistake_cases():
    assert system_mistake(_record(MediatorDecision.REQUEST, 0, 1, 2)) == 0
    assert system_mistake(_record(MediatorDecision.ACCEPT, 2, 1, 2)) == 0
    assert system_mistake(_record(MediatorDecision.ACCEPT, 0, 1, 2)) == 1
    assert system_mistake(_record(MediatorDecision.INTERVENE, 0, 1, 2)) == 1
    assert system_mistake(_record(MediatorDecision.INTERVENE, 0, 2, 2)) == 0


def test_counters_all_request_trace_is_zero():
    records = [_record(MediatorDecision.REQUEST, 0, 1, 2) for _ in range(20)]
    counters = mediator_counters(records)
    assert (counters.erroneous_acceptances,
            counters.excessive_interventions,
            counters.abstention_shortfalls) == (0, 0, 0)


def test_counters_hand_built_trace():
    records = [
        # erroneous acceptance: accepted but the human was wrong; this also
        # fires the abstention shortfall because the model was wrong too
        _record(MediatorDecision.ACCEPT, human=0, model=1, expert=2,
                oracle=MediatorDecision.REQUEST),
        # excessive intervention alone: intervened while the oracle accepts
        _record(MediatorDecision.INTERVENE, human=2, model=2, expert=2,
                oracle=MediatorDecision.ACCEPT),
        # no event: correct acceptance matching the oracle
        _record(MediatorDecision.ACCEPT, human=1, model=1, expert=1,
                oracle=MediatorDecision.ACCEPT),
    ]
    counters = mediator_counters(records)
    assert counters.erroneous_acceptances == 1
    assert counters.excessive_interventions == 1
    assert counters.abstention_shortfalls == 1


def test_counters_each_event_isolated():
    acc = _record(MediatorDecision.ACCEPT, human=0, model=2, expert=2,
                  oracle=MediatorDecision.ACCEPT)
    assert mediator_counters([acc]).erroneous_acceptances == 1
    assert mediator_counters([acc]).abstention_shortfalls == 0
    exc = _record(MediatorDecision.INTERVENE, human=1, model=1, expert=1,
                  oracle=MediatorDecision.REQUEST)
    assert mediator_counters([exc]).excessive_interventions == 1
    ok_int = _record(MediatorDecision.INTERVENE, human=0, model=1, expert=1,
                     oracle=MediatorDecision.INTERVENE)
    assert mediator_counters([ok_int]).excessive_interventions == 0
    shf = _record(MediatorDecision.INTERVENE, human=0, model=1, expert=2,
                  oracle=MediatorDecision.INTERVENE)
    assert mediator_counters([shf]).abstention_shortfalls == 1


def test_counters_perfect_trace():
    records = [_record(MediatorDecision.ACCEPT, human=k, model=k, expert=k)
               for k in range(3)]
    c = mediator_counters(records)
    assert (c.erroneous_acceptances, c.excessive_interventions,
            c.abstention_shortfalls) == (0, 0, 0)


def test_counters_bounded_by_arm_counts():
    rng = np.random.default_rng(0)
    records = []
    for _ in range(200):
        records.append(_record(
            MediatorDecision(int(rng.integers(0, 3))),
            int(rng.integers(0, 3)), int(rng.integers(0, 3)),
            int(rng.integers(0, 3)),
            oracle=MediatorDecision(int(rng.integers(0, 3)))))
    c = mediator_counters(records)
    z = np.array([int(r.decision) for r in records])
    assert c.erroneous_acceptances <= int((z == 0).sum())
    assert c.excessive_interventions <= int((z == 1).sum())
    assert c.abstention_shortfalls <= int((z != 2).sum())


# ---------------------------------------------------------------------------
# Ranking metrics


def test_auroc_auprc_frozen_four_point_values():
    # exhaustive rank-statistic oracle: scores .1/.4 negative, .35/.8 positive
    scores = np.array([0.1, 0.4, 0.35, 0.8])
    positives = np.array([False, False, True, True])
    assert binary_auroc(scores, positives) == pytest.approx(0.75, abs=1e-12)
    assert binary_auprc(scores, positives) == pytest.approx(19.0 / 24.0,
                                                            abs=1e-12)


def test_auroc_perfect_and_inverted():
    scores = np.array([0.1, 0.2, 0.8, 0.9])
    positives = np.array([False, False, True, True])
    assert binary_auroc(scores, positives) == 1.0
    assert binary_auroc(-scores, positives) == 0.0
    assert binary_auprc(scores, positives) == 1.0


def test_auroc_constant_scores_is_half():
    scores = np.full(10, 0.5)
    positives = np.arange(10) < 5
    assert binary_auroc(scores, positives) == pytest.approx(0.5, abs=1e-12)
    assert binary_auprc(scores, positives) == pytest.approx(0.75, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10), st.floats(-5, 5))
def test_auroc_affine_invariance(seed, slope, intercept):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=30)
    positives = rng.uniform(size=30) < 0.4
    if positives.all() or not positives.any():
        return
    base = binary_auroc(scores, positives)
    scaled = binary_auroc(slope * scores + intercept, positives)
    assert scaled == pytest.approx(base, abs=1e-12)


# ---------------------------------------------------------------------------
# Heldout metrics


def test_heldout_metrics_on_seed_model(seed_model):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 2))
    from odmlab.env import gauss_sine_latent
    y = np.clip(np.rint([gauss_sine_latent(a, b, 0.5) for a, b in X]),
                0, 2).astype(np.int64)
    out = heldout_metrics(seed_model, X, y, 64, np.random.default_rng(1))
    assert set(out) == {"mistake_rate", "cross_entropy", "auroc", "auprc"}
    assert 0.0 <= out["mistake_rate"] <= 1.0
    assert out["cross_entropy"] >= 0.0
    assert 0.0 <= out["auroc"] <= 1.0
    assert 0.0 <= out["auprc"] <= 1.0


def test_heldout_metrics_skips_absent_class(seed_model):
    X = np.random.default_rng(3).normal(size=(20, 2))
    y = np.array([0, 1] * 10)  # class 2 never appears
    out = heldout_metrics(seed_model, X, y, 32, np.random.default_rng(0))
    assert np.isfinite(out["auroc"])


def test_heldout_metrics_single_class_rejected(seed_model):
    X = np.random.default_rng(3).normal(size=(10, 2))
    with pytest.raises(ValueError, match="positives"):
        heldout_metrics(seed_model, X, np.zeros(10, dtype=np.int64), 16,
                        np.random.default_rng(0))


def test_heldout_metrics_empty_rejected(seed_model):
    with pytest.raises(ValueError, match="empty"):
        heldout_metrics(seed_model, np.zeros((0, 2)),
                        np.zeros(0, dtype=np.int64), 16,
                        np.random.default_rng(0))


def test_heldout_evaluation_does_not_mutate_state(seed_model):
    x = np.array([0.2, -0.3])
    before = seed_model.weights.copy()
    heldout_metrics(seed_model, np.random.default_rng(1).normal(size=(15, 2)),
                    np.array([0, 1, 2] * 5), 32, np.random.default_rng(2))
    assert np.array_equal(seed_model.weights, before)
    from odmlab.model import predict_marginal
    a = predict_marginal(seed_model, x, 16, np.random.default_rng(5))
    heldout_metrics(seed_model, np.random.default_rng(1).normal(size=(15, 2)),
                    np.array([0, 1, 2] * 5), 32, np.random.default_rng(2))
    b = predict_marginal(seed_model, x, 16, np.random.default_rng(5))
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# Moving average


def test_moving_average_window_one_is_identity():
    series = np.array([3.0, -1.0, 2.0])
    assert np.array_equal(moving_average(series, 1), series)


def test_moving_average_constant_series():
    series = np.full(20, 0.7)
    assert np.allclose(moving_average(series, 6), series, atol=1e-12)


def test_moving_average_ramp_frozen_value():
    series = np.arange(10, dtype=float)
    out = moving_average(series, 5)
    assert out[9] == pytest.approx(7.0, abs=1e-12)
    assert out[0] == 0.0
    assert out[2] == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=60),
       st.integers(1, 70))
def test_moving_average_matches_brute_force(values, window):
    series = np.array(values)
    out = moving_average(series, window)
    for t in range(series.size):
        lo = max(0, t - window + 1)
        assert out[t] == pytest.approx(series[lo:t + 1].mean(),
                                       rel=1e-9, abs=1e-9)


def test_counters_type_is_plain_ints():
    c = mediator_counters([])
    assert isinstance(c, MediatorCounters)
    assert (c.erroneous_acceptances, c.excessive_interventions,
            c.abstention_shortfalls) == (0, 0, 0)
