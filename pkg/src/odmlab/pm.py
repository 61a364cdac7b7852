"""Partial-monitoring view of a mediation instance.

Materializes the reward and feedback matrices of the contextual
partial-monitoring game induced by one round: one accept arm, one intervene
arm per underlying action, and one request arm. Feedback is null everywhere
except the request row, which reveals the outcome; that is the formal
statement of abstentive feedback.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .core import CostSpec

__all__ = ["PMGame", "NULL_SYMBOL", "build_matrices", "format_game", "game_csv_rows"]

NULL_SYMBOL = "⊥"


@dataclass(frozen=True)
class PMGame:
    """Reward matrix R and feedback matrix F, both (m+2) x m.

    Row order: accept, intervene_0 .. intervene_{m-1}, request. Column j is
    the outcome "expert action = j".
    """

    m: int
    human_action: int
    reward: np.ndarray
    feedback: tuple

    @property
    def request_row(self) -> int:
        return self.m + 1


def build_matrices(m: int, human_action: int, costs: CostSpec) -> PMGame:
    """Construct R and F for a given human action and cost structure."""
    if m < 2:
        raise ValueError(f"need at least 2 actions, got m={m}")
    if not 0 <= human_action < m:
        raise ValueError(f"human_action {human_action} out of range [0, {m})")
    costs.require_resolved()
    reward = np.zeros((m + 2, m))
    outcomes = np.arange(m)
    reward[0] = -(outcomes != human_action).astype(float)
    for i in range(m):
        reward[1 + i] = -(outcomes != i).astype(float) - costs.k_int
    reward[m + 1] = -costs.k_req

    feedback: List[tuple] = [tuple(NULL_SYMBOL for _ in range(m))
                             for _ in range(m + 1)]
    feedback.append(tuple(str(j) for j in range(m)))
    return PMGame(m=m, human_action=human_action, reward=reward,
                  feedback=tuple(feedback))


def _arm_names(m: int) -> List[str]:
    return ["accept"] + [f"intervene_{i}" for i in range(m)] + ["request"]


def format_game(game: PMGame) -> str:
    """Aligned text rendering of both matrices for one human action."""
    names = _arm_names(game.m)
    width = max(len(n) for n in names)
    lines = [f"human action = {game.human_action}", "R (reward):"]
    for name, row in zip(names, game.reward):
        cells = "  ".join(f"{v:8.3f}" for v in row)
        lines.append(f"  {name:<{width}}  {cells}")
    lines.append("F (feedback):")
    for name, row in zip(names, game.feedback):
        cells = "  ".join(f"{sym:>8}" for sym in row)
        lines.append(f"  {name:<{width}}  {cells}")
    return "\n".join(lines)


def game_csv_rows(game: PMGame) -> List[List[str]]:
    """CSV form: matrix,human_action,arm,<one column per outcome>."""
    names = _arm_names(game.m)
    rows: List[List[str]] = []
    header = ["matrix", "human_action", "arm"] + [f"y{j}" for j in range(game.m)]
    rows.append(header)
    for name, row in zip(names, game.reward):
        rows.append(["R", str(game.human_action), name]
                    + [f"{v:.9g}" for v in row])
    for name, row in zip(names, game.feedback):
        rows.append(["F", str(game.human_action), name] + list(row))
    return rows
