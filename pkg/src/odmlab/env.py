"""Context streams, ground-truth expert policies, and the simulated noisy human.

Two environment families: a generative 3-class synthetic task (smooth latent
sine over Gaussian inputs, rounded to integer labels) and a generic tabular
loader that subsamples a delimited text file per run.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

__all__ = [
    "GaussSineParams",
    "NoisyHumanParams",
    "TabularEnvironment",
    "GAUSS_SINE_M",
    "gauss_sine_latent",
    "gauss_sine_draw",
    "gauss_sine_dataset",
    "gauss_sine_seed_examples",
    "load_tabular",
    "human_action",
]

GAUSS_SINE_M = 3
_VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class GaussSineParams:
    """noise_q widens the label boundaries with uniform(-q/2, q/2) latent noise."""

    noise_q: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.noise_q <= 0.5:
            raise ValueError(f"noise_q must be in [0, 0.5], got {self.noise_q}")


@dataclass(frozen=True)
class NoisyHumanParams:
    """alpha is the exact probability the human deviates from the expert."""

    alpha: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


def gauss_sine_latent(x1: float, x2: float, u: float) -> float:
    """Latent target f in [0, 2]: sin(0.15*pi*u + x1 + x2) + 1."""
    return math.sin(0.15 * math.pi * u + x1 + x2) + 1.0


def gauss_sine_draw(params: GaussSineParams,
                    rng: np.random.Generator) -> Tuple[np.ndarray, int]:
    """One draw: context (x1, x2) iid standard normal, label round(f + noise).

    RNG consumption order is fixed (two normals, u, noise) and the noise
    uniform is drawn even at q=0, so streams stay aligned across noise_q
    values of the same seed.
    """
    x = rng.standard_normal(2)
    u = rng.uniform(0.0, 1.0)
    noise = rng.uniform(-params.noise_q / 2.0, params.noise_q / 2.0)
    f = gauss_sine_latent(x[0], x[1], u)
    y = int(np.clip(np.rint(f + noise), 0, GAUSS_SINE_M - 1))
    return x, y


def gauss_sine_dataset(params: GaussSineParams, n: int,
                       rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """n sequential draws as arrays (X: n x 2, y: n)."""
    X = np.empty((n, 2))
    y = np.empty(n, dtype=np.int64)
    for i in range(n):
        X[i], y[i] = gauss_sine_draw(params, rng)
    return X, y


def gauss_sine_seed_examples(params: GaussSineParams, rng: np.random.Generator,
                             max_tries: int = 10000) -> Tuple[np.ndarray, np.ndarray]:
    """Rejection-sample until one example per class is found (initial dataset)."""
    found: dict[int, np.ndarray] = {}
    for _ in range(max_tries):
        x, y = gauss_sine_draw(params, rng)
        if y not in found:
            found[y] = x
            if len(found) == GAUSS_SINE_M:
                labels = sorted(found)
                return np.stack([found[k] for k in labels]), np.array(labels)
    raise RuntimeError(f"could not seed one example per class in {max_tries} draws")


@dataclass(frozen=True)
class TabularEnvironment:
    """Per-run view of a loaded tabular pool.

    examples/labels: the run's round stream (sample_n rows, in draw order).
    heldout_*: a disjoint split for model evaluation.
    pool_*: every loaded row (standardized), used for oracle fitting and
    initial-dataset seeding; stream/heldout index into it.
    """

    examples: np.ndarray
    labels: np.ndarray
    heldout_examples: np.ndarray
    heldout_labels: np.ndarray
    pool_examples: np.ndarray
    pool_labels: np.ndarray
    stream_indices: np.ndarray
    heldout_indices: np.ndarray
    m: int
    feature_dim: int
    label_names: Tuple[str, ...]


def _read_delimited(path: str, label_column: str) -> Tuple[np.ndarray, List[str]]:
    """Read a comma- or tab-delimited table; returns raw feature matrix and labels."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        delimiter = "\t" if "\t" in first else ","
        fh.seek(0)
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"insufficient examples: empty file {path}")
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"unknown label column {label_column!r}; "
                             f"available: {header}")
        label_idx = header.index(label_column)
        feats: List[List[float]] = []
        labels: List[str] = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            labels.append(row[label_idx].strip())
            try:
                feats.append([float(c) for j, c in enumerate(row) if j != label_idx])
            except ValueError as exc:
                raise ValueError(f"non-finite feature values: "
                                 f"unparseable cell in row {len(labels)}") from exc
    X = np.asarray(feats, dtype=float)
    if X.size and not np.isfinite(X).all():
        raise ValueError("non-finite feature values: NaN or inf in feature columns")
    return X, labels


def _standardize(X: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance per column over the pool; constant columns to zeros."""
    mean = X.mean(axis=0)
    var = X.var(axis=0)
    out = (X - mean) / np.sqrt(np.maximum(var, _VARIANCE_FLOOR))
    out[:, var < _VARIANCE_FLOOR] = 0.0
    return out


def load_tabular(path: str, label_column: str, sample_n: int,
                 rng: np.random.Generator,
                 heldout_size: int = 2000) -> TabularEnvironment:
    """Load a pool and draw a per-run stream plus a disjoint heldout split.

    Labels are re-indexed to [0, m) in first-appearance order; features are
    standardized with statistics of the full pool (constant columns map to
    zeros). The run's stream holds sample_n rows drawn without replacement;
    the heldout split is disjoint and holds up to heldout_size rows.
    """
    X_raw, label_strs = _read_delimited(path, label_column)
    pool_size = len(label_strs)
    if pool_size < sample_n + 1:
        raise ValueError(f"insufficient examples: pool has {pool_size}, "
                         f"need sample_n={sample_n} plus a non-empty heldout")
    names: List[str] = []
    for s in label_strs:
        if s not in names:
            names.append(s)
    name_to_idx = {s: i for i, s in enumerate(names)}
    y = np.array([name_to_idx[s] for s in label_strs], dtype=np.int64)
    X = _standardize(X_raw)

    perm = rng.permutation(pool_size)
    stream_idx = perm[:sample_n]
    n_held = min(heldout_size, pool_size - sample_n)
    heldout_idx = perm[sample_n:sample_n + n_held]
    return TabularEnvironment(
        examples=X[stream_idx], labels=y[stream_idx],
        heldout_examples=X[heldout_idx], heldout_labels=y[heldout_idx],
        pool_examples=X, pool_labels=y,
        stream_indices=stream_idx, heldout_indices=heldout_idx,
        m=len(names), feature_dim=X.shape[1], label_names=tuple(names))


def human_action(expert_action: int, params: NoisyHumanParams, m: int,
                 rng: np.random.Generator) -> int:
    """With probability 1 - alpha return the expert action, else a uniformly
    drawn different action, so alpha is exactly the human error rate."""
    if m < 2:
        raise ValueError(f"need at least 2 actions, got m={m}")
    if rng.uniform() < params.alpha:
        offset = int(rng.integers(1, m))
        return (expert_action + offset) % m
    return int(expert_action)
