"""Mediator policies: greedy cost-sensitive arm selection, the adjusted-cost
mediator that discounts the request cost by estimated information gain, and
the benchmark policy family.

The adjusted request cost is k_bar = (1 - kappa * g(MI)) * k_req clamped to
[0, k_req], where MI is the mutual information between model parameters and
the unrevealed label (estimated from posterior predictive samples) and
g(v) = 2b(e^{W0((v-1)/e)+1} - 1) maps information to a bound on expected
model-risk improvement. kappa0 = 1/g(log m) keeps the adjusted cost
nonnegative for any achievable MI.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .core import CostSpec, MediatorDecision
from .model import PredictiveSampleSet

__all__ = [
    "PolicyKind",
    "DecisionInputs",
    "MatchedDecay",
    "lambert_w0",
    "g_transform",
    "kappa0",
    "mutual_info",
    "greedy_decide",
    "umpire_decide",
    "benchmark_decide",
    "fit_matched_epsilon",
]

_BRANCH_POINT = -math.exp(-1.0)
_MAX_HALLEY_ITERS = 50


class PolicyKind(str, enum.Enum):
    """Every mediator policy the runner can execute."""

    HUMAN = "human"
    RANDOM = "random"
    SUPERVISED = "supervised"
    COST_SENSITIVE = "cost_sensitive"
    THOMPSON = "thompson"
    FULL_THOMPSON = "full_thompson"
    EPSILON_GREEDY = "epsilon_greedy"
    EPSILON_REQUEST = "epsilon_request"
    PESSIMISTIC_BAYESIAN_SAMPLING = "pessimistic_bayesian_sampling"
    BAYESIAN_ACTIVE_REQUEST = "bayesian_active_request"
    MATCHED_DECAYING_REQUEST = "matched_decaying_request"
    UMPIRE = "umpire"


@dataclass(frozen=True)
class DecisionInputs:
    """Everything a policy may look at in one round.

    marginal is the row-mean of samples when both are supplied (the runner
    guarantees this); samples may be omitted for policies that only read
    the marginal.
    """

    marginal: np.ndarray
    samples: Optional[PredictiveSampleSet]
    human_action: int
    costs: CostSpec
    t: int
    m: int


def lambert_w0(x: float) -> float:
    """Principal branch of the product logarithm: w >= -1 with w*e^w = x.

    Halley iteration. Initial guess: the branch-point series
    w = -1 + p - p^2/3 + (11/72)p^3 with p = sqrt(2(e*x + 1)) near -1/e,
    log1p(x) on moderate inputs, and log(x) - log(log(x)) for large x.
    """
    x = float(x)
    if x < _BRANCH_POINT:
        if _BRANCH_POINT - x <= 1e-15:
            return -1.0
        raise ValueError(f"lambert_w0 domain error: x={x} < -1/e")
    if x == _BRANCH_POINT:
        return -1.0
    if x == 0.0:
        return 0.0

    if x < -0.25:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    elif x < math.e:
        w = math.log1p(x)
    else:
        lx = math.log(x)
        w = lx - math.log(lx)

    tol = 1e-14 * max(1.0, abs(x))
    for _ in range(_MAX_HALLEY_ITERS):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= tol:
            return w
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        step = f / denom
        w -= step
        if w < -1.0:
            w = -1.0 + 1e-16
        if abs(step) <= 1e-17 * (1.0 + abs(w)):
            return w
    residual = abs(w * math.exp(w) - x)
    if residual <= 1e-12 * max(1.0, abs(x)):
        return w
    raise RuntimeError(f"lambert_w0 failed to converge for x={x}; "
                       f"residual {residual:.3e}")


def g_transform(v: float, b: float = 0.5) -> float:
    """Monotone map from mutual information to bounded risk improvement."""
    if v < 0:
        raise ValueError(f"g_transform requires v >= 0, got {v}")
    if b <= 0:
        raise ValueError(f"b must be > 0, got {b}")
    w = lambert_w0((v - 1.0) / math.e)
    return 2.0 * b * (math.exp(w + 1.0) - 1.0)


def kappa0(m: int, b: float = 0.5) -> float:
    """Normalizing tradeoff coefficient 1/g(log m); keeps adjusted costs >= 0."""
    if m < 2:
        raise ValueError(f"need at least 2 actions, got m={m}")
    return 1.0 / g_transform(math.log(m), b)


def _entropy_rows(p: np.ndarray) -> np.ndarray:
    """Row entropies in nats with the 0*log 0 = 0 convention."""
    p = np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def mutual_info(samples: Union[PredictiveSampleSet, np.ndarray]) -> float:
    """BALD-style estimate: H(mean predictive) - mean(per-sample entropies)."""
    if isinstance(samples, PredictiveSampleSet):
        probs = samples.probs
    else:
        probs = np.asarray(samples, dtype=float)
        PredictiveSampleSet(probs=probs)  # reuse row validation
    if np.all(probs == probs[0]):
        return 0.0  # agreement carries no information, exactly
    mean = probs.mean(axis=0)
    mi = float(_entropy_rows(mean[None, :])[0] - _entropy_rows(probs).mean())
    if mi < -1e-12:
        raise ValueError(f"mutual information estimate {mi} below -1e-12")
    return max(mi, 0.0)


def greedy_decide(inputs: DecisionInputs,
                  effective_k_req: float) -> Tuple[MediatorDecision, int]:
    """One-step-risk arm selection.

    Arm values: accept = 1 - marginal(human); intervene = 1 - marginal(best)
    + k_int; request = effective_k_req. Ties break Accept, then Intervene,
    then Request; the model action is the lowest-index argmax of the marginal.
    """
    marginal = np.asarray(inputs.marginal, dtype=float)
    model_action = int(np.argmax(marginal))
    accept = 1.0 - float(marginal[inputs.human_action])
    intervene = 1.0 - float(marginal[model_action]) + inputs.costs.k_int
    if accept <= intervene and accept <= effective_k_req:
        return MediatorDecision.ACCEPT, model_action
    if intervene <= effective_k_req:
        return MediatorDecision.INTERVENE, model_action
    return MediatorDecision.REQUEST, model_action


def umpire_decide(inputs: DecisionInputs,
                  rng: Optional[np.random.Generator] = None,
                  eps_floor: float = 0.0,
                  ) -> Tuple[MediatorDecision, int, float, float]:
    """Greedy selection under the information-adjusted request cost.

    Returns (decision, model_action, mi_value, adjusted_k_req). The optional
    epsilon-request floor (off by default) overrides the decision to Request
    with probability eps_floor before the greedy rule is consulted.
    """
    costs = inputs.costs
    costs.require_resolved()
    if inputs.samples is None:
        raise ValueError("umpire_decide requires predictive samples")
    mi = mutual_info(inputs.samples)
    discount = 1.0 - costs.kappa * g_transform(mi, costs.b)
    adjusted = min(max(discount * costs.k_req, 0.0), costs.k_req)
    if eps_floor > 0.0:
        if rng is None:
            raise ValueError("eps_floor > 0 requires a policy RNG")
        if rng.uniform() < eps_floor:
            model_action = int(np.argmax(np.asarray(inputs.marginal)))
            return MediatorDecision.REQUEST, model_action, mi, adjusted
    decision, model_action = greedy_decide(inputs, adjusted)
    return decision, model_action, mi, adjusted


def _greedy_on_vector(vec: np.ndarray, human_action: int, k_int: float,
                      k_req: float) -> Tuple[MediatorDecision, int]:
    """Greedy arm selection scoring accept/intervene with an arbitrary
    probability vector (used by the sampling-based benchmarks)."""
    best = int(np.argmax(vec))
    accept = 1.0 - float(vec[human_action])
    intervene = 1.0 - float(vec[best]) + k_int
    if accept <= intervene and accept <= k_req:
        return MediatorDecision.ACCEPT, best
    if intervene <= k_req:
        return MediatorDecision.INTERVENE, best
    return MediatorDecision.REQUEST, best


@dataclass(frozen=True)
class MatchedDecay:
    """Fitted request-rate schedule: cubic fit to a mean cumulative request
    curve, differenced into per-round request probabilities."""

    coefficients: np.ndarray
    eps_table: np.ndarray

    @property
    def horizon(self) -> int:
        return int(self.eps_table.shape[0])

    def epsilon_at(self, t: int) -> float:
        if not 1 <= t <= self.horizon:
            raise ValueError(f"round {t} outside fitted horizon "
                             f"[1, {self.horizon}]")
        return float(self.eps_table[t - 1])


def fit_matched_epsilon(
        umpire_request_curves: Sequence[np.ndarray]) -> MatchedDecay:
    """Fit the decaying request schedule from cumulative request-count curves.

    Curves (one per run, indexed t=1..n) are averaged, a cubic C~(t) is fit
    by least squares, and eps_t = clip(C~(t) - C~(t-1), 0, 1).
    """
    if len(umpire_request_curves) == 0:
        raise ValueError("fit_matched_epsilon needs at least one request curve")
    curves = np.stack([np.asarray(c, dtype=float)
                       for c in umpire_request_curves])
    if curves.ndim != 2 or curves.shape[1] < 4:
        raise ValueError("request curves must share a horizon of at least 4")
    mean_curve = curves.mean(axis=0)
    n = mean_curve.shape[0]
    t = np.arange(1, n + 1, dtype=float)
    coefficients = np.polyfit(t, mean_curve, deg=3)
    fitted = np.polyval(coefficients, np.arange(0, n + 1, dtype=float))
    eps_table = np.clip(np.diff(fitted), 0.0, 1.0)
    return MatchedDecay(coefficients=coefficients, eps_table=eps_table)


def benchmark_decide(kind: PolicyKind, inputs: DecisionInputs,
                     rng: np.random.Generator,
                     matched: Optional[MatchedDecay] = None,
                     ) -> Tuple[MediatorDecision, int]:
    """Dispatch for every non-adjusted-cost policy. Returns (decision,
    model_action); model_action is the action executed if the decision is
    Intervene and is logged either way."""
    costs = inputs.costs
    costs.require_resolved()
    marginal = np.asarray(inputs.marginal, dtype=float)
    marginal_best = int(np.argmax(marginal))

    if kind == PolicyKind.HUMAN:
        return MediatorDecision.ACCEPT, marginal_best

    if kind == PolicyKind.RANDOM:
        return MediatorDecision(int(rng.integers(0, 3))), marginal_best

    if kind == PolicyKind.SUPERVISED:
        if rng.uniform() < costs.epsilon:
            return MediatorDecision.REQUEST, marginal_best
        if marginal_best == inputs.human_action:
            return MediatorDecision.ACCEPT, marginal_best
        return MediatorDecision.INTERVENE, marginal_best

    if kind == PolicyKind.COST_SENSITIVE:
        return greedy_decide(inputs, costs.k_req)

    if kind in (PolicyKind.THOMPSON, PolicyKind.FULL_THOMPSON):
        if inputs.samples is None:
            raise ValueError(f"{kind.value} requires predictive samples")
        row = inputs.samples.probs[int(rng.integers(0, inputs.samples.s))]
        decision, row_best = _greedy_on_vector(row, inputs.human_action,
                                               costs.k_int, costs.k_req)
        if kind == PolicyKind.FULL_THOMPSON:
            return decision, row_best
        return decision, marginal_best

    if kind == PolicyKind.EPSILON_GREEDY:
        decision, model_action = greedy_decide(inputs, costs.k_req)
        if rng.uniform() < costs.epsilon:
            decision = MediatorDecision(int(rng.integers(0, 3)))
        return decision, model_action

    if kind == PolicyKind.EPSILON_REQUEST:
        decision, model_action = greedy_decide(inputs, costs.k_req)
        if rng.uniform() < costs.epsilon:
            decision = MediatorDecision.REQUEST
        return decision, model_action

    if kind == PolicyKind.PESSIMISTIC_BAYESIAN_SAMPLING:
        if inputs.samples is None:
            raise ValueError(f"{kind.value} requires predictive samples")
        row = inputs.samples.probs[int(rng.integers(0, inputs.samples.s))]
        pessimistic = np.minimum(marginal, row)
        return _greedy_on_vector(pessimistic, inputs.human_action,
                                 costs.k_int, costs.k_req)

    if kind == PolicyKind.BAYESIAN_ACTIVE_REQUEST:
        if inputs.samples is None:
            raise ValueError(f"{kind.value} requires predictive samples")
        p_req = min(max(mutual_info(inputs.samples) / math.log(inputs.m),
                        0.0), 1.0)
        if rng.uniform() < p_req:
            return MediatorDecision.REQUEST, marginal_best
        return greedy_decide(inputs, costs.k_req)

    if kind == PolicyKind.MATCHED_DECAYING_REQUEST:
        if matched is None:
            raise ValueError("matched_decaying_request used without fitted "
                             "coefficients; run fit-matched-eps first")
        if rng.uniform() < matched.epsilon_at(inputs.t):
            return MediatorDecision.REQUEST, marginal_best
        return greedy_decide(inputs, costs.k_req)

    if kind == PolicyKind.UMPIRE:
        raise ValueError("umpire is handled by umpire_decide, not "
                         "benchmark_decide")
    raise ValueError(f"unknown policy kind: {kind!r}")
