"""Shared domain types, cost structure, RNG stream derivation, and per-round losses.

A mediation round involves three actors: a human proposing an action, a model
proposing an action, and an expert whose action is ground truth. The mediator
picks one of three decisions per round; the realized loss of that decision is
the single-sample form of the system risk.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "MediatorDecision",
    "StreamTag",
    "CostSpec",
    "RoundRecord",
    "SeedSpec",
    "default_k_req",
    "realized_round_loss",
    "system_action",
    "centered_loss",
]


class MediatorDecision(enum.IntEnum):
    """Mediator decision z. Integer encoding is fixed for CSV logs."""

    ACCEPT = 0
    INTERVENE = 1
    REQUEST = 2


class StreamTag(enum.IntEnum):
    """Named RNG streams derived per (master_seed, run_index, tag).

    HELDOUT and ORACLE are internal plumbing: they isolate heldout-set
    generation/evaluation sampling and oracle-marginal sampling from the
    decision trace, so neither can perturb the run itself.
    """

    ENVIRONMENT = 0
    HUMAN = 1
    MODEL = 2
    POLICY = 3
    HELDOUT = 4
    ORACLE = 5


def default_k_req(m: int) -> float:
    """Default request cost: m/(m-1) rounded down to one decimal place."""
    if m < 2:
        raise ValueError(f"need at least 2 actions, got m={m}")
    return math.floor(10.0 * m / (m - 1)) / 10.0


@dataclass(frozen=True)
class CostSpec:
    """Mediator cost structure.

    k_req=None defers to the per-environment rule m/(m-1) floored to one
    decimal; kappa=None defers to the normalizing coefficient kappa0(m, b).
    Both are resolved by the runner once m is known. epsilon is the
    exploration rate shared by the epsilon-style policies. b is the loss
    half-range used by the g-transform (zero-one loss centered to [-b, b]).
    """

    k_int: float = 0.1
    k_req: Optional[float] = None
    epsilon: float = 0.1
    kappa: Optional[float] = None
    b: float = 0.5

    def __post_init__(self) -> None:
        if self.k_int < 0:
            raise ValueError(f"k_int must be >= 0, got {self.k_int}")
        if self.k_req is not None and self.k_req < 0:
            raise ValueError(f"k_req must be >= 0, got {self.k_req}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.kappa is not None and self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.b <= 0:
            raise ValueError(f"b must be > 0, got {self.b}")

    def resolved(self, m: int, kappa0_fn) -> "CostSpec":
        """Fill in the deferred k_req / kappa defaults for an m-action task."""
        k_req = self.k_req if self.k_req is not None else default_k_req(m)
        kappa = self.kappa if self.kappa is not None else kappa0_fn(m, self.b)
        return CostSpec(k_int=self.k_int, k_req=k_req, epsilon=self.epsilon,
                        kappa=kappa, b=self.b)

    def require_resolved(self) -> None:
        if self.k_req is None or self.kappa is None:
            raise ValueError("CostSpec has unresolved defaults; call resolved(m, kappa0)")


@dataclass(frozen=True)
class RoundRecord:
    """Complete log of one mediation round.

    expert_action is stored every round for evaluation but is revealed to
    the learner only on Request rounds; that boundary is enforced by the
    runner, not by withholding data here. mi_value is a diagnostic of the
    adjusted-cost mediator and is 0 for every other policy.
    """

    t: int
    context: np.ndarray
    human_action: int
    model_action: int
    expert_action: int
    decision: MediatorDecision
    system_action: int
    realized_loss: float
    oracle_decision: MediatorDecision
    oracle_loss: float
    mi_value: float = 0.0
    adjusted_k_req: float = 0.0


@dataclass(frozen=True)
class SeedSpec:
    """Derives independent, reproducible RNG streams.

    Distinct (master_seed, run_index, tag) triples give statistically
    independent streams; the same triple always gives the identical stream.
    """

    master_seed: int
    run_index: int

    def stream(self, tag: StreamTag) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.master_seed,
                                     spawn_key=(self.run_index, int(tag)))
        return np.random.default_rng(seq)


def system_action(decision: MediatorDecision, human_action: int,
                  model_action: int, expert_action: int) -> int:
    """The action the overall system emits under the given decision."""
    if decision == MediatorDecision.ACCEPT:
        return human_action
    if decision == MediatorDecision.INTERVENE:
        return model_action
    return expert_action


def realized_round_loss(decision: MediatorDecision, human_action: int,
                        model_action: int, expert_action: int,
                        costs: CostSpec) -> float:
    """Single-sample system loss of one round.

    Accept: 1[human != expert]; Intervene: 1[model != expert] + k_int;
    Request: k_req (the expert's own action is ground truth by definition).
    """
    costs.require_resolved()
    if decision == MediatorDecision.ACCEPT:
        return float(human_action != expert_action)
    if decision == MediatorDecision.INTERVENE:
        return float(model_action != expert_action) + costs.k_int
    return float(costs.k_req)


def centered_loss(y: int, y_hat: int, b: float = 0.5) -> float:
    """Zero-one loss centered and scaled to {-b, +b}."""
    if b <= 0:
        raise ValueError(f"b must be > 0, got {b}")
    return (float(y != y_hat) - 0.5) * 2.0 * b
