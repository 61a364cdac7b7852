"""Evaluation quantities: system loss/regret/mistakes, heldout model metrics,
mediator error counters, and moving averages."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .core import CostSpec, MediatorDecision, RoundRecord, realized_round_loss
from .mediators import DecisionInputs, greedy_decide
from . import model as model_mod

logger = logging.getLogger(__name__)

__all__ = [
    "MetricSeries",
    "MediatorCounters",
    "oracle_round",
    "cumulative_regret",
    "system_mistake",
    "mediator_counters",
    "binary_auroc",
    "binary_auprc",
    "heldout_metrics",
    "moving_average",
]

PROB_FLOOR = 1e-12

ArrayLike = Union[np.ndarray, Sequence[float], "MetricSeries"]


@dataclass(frozen=True)
class MetricSeries:
    """A named per-round series with its aggregation mode."""

    name: str
    values: np.ndarray
    aggregation: str = "per_round"  # per_round | cumulative | moving_average
    window: int = 0


def _values(series: ArrayLike) -> np.ndarray:
    if isinstance(series, MetricSeries):
        return np.asarray(series.values, dtype=float)
    return np.asarray(series, dtype=float)


@dataclass(frozen=True)
class MediatorCounters:
    """The three mediator error counters, cumulative at the end of a run."""

    erroneous_acceptances: int
    excessive_interventions: int
    abstention_shortfalls: int


def oracle_round(context: np.ndarray, human_action: int, expert_action: int,
                 oracle_model_marginal: np.ndarray,
                 costs: CostSpec) -> Tuple[MediatorDecision, float]:
    """Best-in-class round: greedy mediation on the oracle model's marginal.

    Returns the oracle decision and its realized loss against the expert.
    """
    inputs = DecisionInputs(marginal=np.asarray(oracle_model_marginal),
                            samples=None, human_action=human_action,
                            costs=costs, t=0,
                            m=int(np.asarray(oracle_model_marginal).shape[0]))
    decision, model_action = greedy_decide(inputs, costs.k_req)
    loss = realized_round_loss(decision, human_action, model_action,
                               expert_action, costs)
    return decision, loss


def cumulative_regret(system_losses: ArrayLike,
                      oracle_losses: ArrayLike) -> np.ndarray:
    """Running sum of per-round (system - oracle) loss differences."""
    system = _values(system_losses)
    oracle = _values(oracle_losses)
    if system.shape != oracle.shape:
        raise ValueError(f"length mismatch: {system.shape} vs {oracle.shape}")
    return np.cumsum(system - oracle)


def system_mistake(record: RoundRecord) -> int:
    """1 if the system's final action differs from the expert's.

    Request rounds emit the expert action itself, so they are never mistakes.
    """
    return int(record.system_action != record.expert_action)


def mediator_counters(records: Sequence[RoundRecord]) -> MediatorCounters:
    """Count erroneous acceptances (Accept while the human is wrong),
    excessive interventions (Intervene while the oracle would Accept or
    Request), and abstention shortfalls (no Request while both human and
    model are wrong)."""
    err_acc = 0
    exc_int = 0
    abs_shf = 0
    for r in records:
        human_wrong = r.human_action != r.expert_action
        model_wrong = r.model_action != r.expert_action
        if r.decision == MediatorDecision.ACCEPT and human_wrong:
            err_acc += 1
        if (r.decision == MediatorDecision.INTERVENE
                and r.oracle_decision != MediatorDecision.INTERVENE):
            exc_int += 1
        if (r.decision != MediatorDecision.REQUEST
                and human_wrong and model_wrong):
            abs_shf += 1
    return MediatorCounters(err_acc, exc_int, abs_shf)


def _roc_points(scores: np.ndarray,
                positives: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Threshold-swept cumulative TP/FP counts at distinct scores (descending)."""
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order].astype(float)
    tp = np.cumsum(sorted_pos)
    fp = np.cumsum(1.0 - sorted_pos)
    # Keep only the last index of each tied-score group.
    distinct = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    return tp[distinct], fp[distinct], sorted_scores[distinct]


def binary_auroc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Trapezoidal area under the ROC curve (ties grouped per threshold)."""
    scores = np.asarray(scores, dtype=float)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC undefined without both classes")
    tp, fp, _ = _roc_points(scores, positives)
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return float(np.trapezoid(tpr, fpr))


def binary_auprc(scores: np.ndarray, positives: np.ndarray) -> float:
    """Trapezoidal area under the precision-recall curve, anchored at
    (recall=0, precision=1)."""
    scores = np.asarray(scores, dtype=float)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise ValueError("AUPRC undefined without positives")
    tp, fp, _ = _roc_points(scores, positives)
    recall = np.r_[0.0, tp / n_pos]
    precision = np.r_[1.0, tp / (tp + fp)]
    return float(np.trapezoid(precision, recall))


def heldout_metrics(state: "model_mod.ModelState", heldout_X: np.ndarray,
                    heldout_y: np.ndarray, s: int,
                    rng: np.random.Generator) -> Dict[str, float]:
    """Heldout mistake rate, cross-entropy, and one-vs-rest macro AUROC/AUPRC.

    Evaluation goes through the marginal predictive and never mutates the
    model state. Classes without both positives and negatives in the heldout
    set are skipped in the macro averages with a logged note.
    """
    heldout_X = np.atleast_2d(np.asarray(heldout_X, dtype=float))
    heldout_y = np.asarray(heldout_y, dtype=np.int64)
    if heldout_y.size == 0:
        raise ValueError("heldout set is empty")
    marginals = model_mod.predict_marginal_batch(state, heldout_X, s, rng)
    predictions = np.argmax(marginals, axis=1)
    mistake_rate = float(np.mean(predictions != heldout_y))
    picked = marginals[np.arange(heldout_y.size), heldout_y]
    cross_entropy = float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))

    aurocs: List[float] = []
    auprcs: List[float] = []
    for k in range(state.m):
        positives = heldout_y == k
        n_pos = int(positives.sum())
        if n_pos == 0 or n_pos == heldout_y.size:
            logger.info("heldout class %d has no %s; skipped in macro "
                        "AUROC/AUPRC", k, "positives" if n_pos == 0 else "negatives")
            continue
        aurocs.append(binary_auroc(marginals[:, k], positives))
        auprcs.append(binary_auprc(marginals[:, k], positives))
    if not aurocs:
        raise ValueError("no heldout class has both positives and negatives")
    return {
        "mistake_rate": mistake_rate,
        "cross_entropy": cross_entropy,
        "auroc": float(np.mean(aurocs)),
        "auprc": float(np.mean(auprcs)),
    }


def moving_average(series: ArrayLike, window: int) -> np.ndarray:
    """Rolling mean over the last min(window, t+1) entries (shrinking left
    edge, so early rounds average everything seen so far)."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = _values(series)
    csum = np.cumsum(x)
    out = np.empty_like(csum)
    t = np.arange(x.size)
    head = t < window
    out[head] = csum[head] / (t[head] + 1.0)
    tail = ~head
    out[tail] = (csum[tail] - csum[t[tail] - window]) / float(window)
    return out
