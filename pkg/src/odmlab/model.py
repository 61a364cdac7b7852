"""Online Bayesian classifier with posterior predictive sampling.

Multiclass classification is recast as per-class GP regression on
Dirichlet-transformed targets with heteroskedastic diagonal noise
(log-normal moment matching of Dirichlet marginals). Class probabilities
come from softmax-normalized latent samples, so both a marginal predictive
and per-sample predictives are available for mutual-information estimates.

The GP is exact: request counts stay in the hundreds at desk scale, so
O(n^3) refits are affordable. A Cholesky row-extension fast path covers
the fixed-lengthscale configuration; with the median-heuristic lengthscale
every update refits so the heuristic stays fresh.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

logger = logging.getLogger(__name__)

__all__ = [
    "KernelConfig",
    "ModelDiagnostics",
    "ModelState",
    "PredictiveSampleSet",
    "dirichlet_transform",
    "median_heuristic",
    "fit",
    "fit_xy",
    "update",
    "posterior",
    "sample_softmax_probs",
    "sample_predictives",
    "predict_marginal",
    "predict_marginal_batch",
    "save_state",
    "load_state",
]

JITTER_LADDER = (1e-6, 1e-4, 1e-2)


@dataclass(frozen=True)
class KernelConfig:
    """RBF kernel settings.

    lengthscale=None selects the median heuristic over pairwise training
    distances, refreshed on every refit. jitter is the starting rung of the
    escalation ladder used when the Gram factorization fails.
    """

    lengthscale: Optional[float] = None
    signal_variance: float = 1.0
    jitter: float = 1e-6
    alpha_eps: float = 0.01

    def __post_init__(self) -> None:
        if self.lengthscale is not None and self.lengthscale <= 0:
            raise ValueError(f"lengthscale must be > 0, got {self.lengthscale}")
        if self.signal_variance <= 0:
            raise ValueError(f"signal_variance must be > 0, got {self.signal_variance}")
        if self.jitter <= 0:
            raise ValueError(f"jitter must be > 0, got {self.jitter}")
        if self.alpha_eps <= 0:
            raise ValueError(f"alpha_eps must be > 0, got {self.alpha_eps}")


@dataclass
class ModelDiagnostics:
    """Mutable numerical-stress counters shared along a model lineage."""

    negative_variance_clamps: int = 0
    jitter_escalations: int = 0


@dataclass(frozen=True)
class ModelState:
    """Immutable fitted model; update() returns a new state.

    chol holds one lower Cholesky factor of K + diag(noise_k) + jitter*I per
    class (noise differs per class, so the factors do too); weights holds the
    corresponding solves against the transformed targets.
    """

    X: np.ndarray
    y: np.ndarray
    m: int
    targets: np.ndarray
    noise_vars: np.ndarray
    hyper: KernelConfig
    lengthscale: float
    jitter: float
    chol: np.ndarray
    weights: np.ndarray
    diagnostics: ModelDiagnostics = field(compare=False, repr=False,
                                          default_factory=ModelDiagnostics)

    @property
    def train_size(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True)
class PredictiveSampleSet:
    """s predictive probability rows p(Y|x, w_i), one per posterior sample."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = self.probs
        if p.ndim != 2:
            raise ValueError(f"probs must be 2-D (s x m), got shape {p.shape}")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("sample probabilities outside [0, 1]")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("sample rows must sum to 1 within 1e-9")

    @property
    def s(self) -> int:
        return self.probs.shape[0]

    @property
    def m(self) -> int:
        return self.probs.shape[1]

    def mean(self) -> np.ndarray:
        return self.probs.mean(axis=0)


def dirichlet_transform(label: int, m: int,
                        alpha_eps: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class regression targets and noise variances for one label.

    Pseudo-counts alpha_k = alpha_eps + 1[k = label]; log-normal moment
    matching gives noise_vars_k = log(1/alpha_k + 1) and
    targets_k = log(alpha_k) - noise_vars_k / 2.
    """
    if alpha_eps <= 0:
        raise ValueError(f"alpha_eps must be > 0, got {alpha_eps}")
    if not 0 <= label < m:
        raise ValueError(f"label {label} out of range [0, {m})")
    alpha = np.full(m, alpha_eps)
    alpha[label] += 1.0
    noise_vars = np.log(1.0 / alpha + 1.0)
    targets = np.log(alpha) - noise_vars / 2.0
    return targets, noise_vars


def _transform_all(y: np.ndarray, m: int,
                   alpha_eps: float) -> Tuple[np.ndarray, np.ndarray]:
    alpha = np.full((y.shape[0], m), alpha_eps)
    alpha[np.arange(y.shape[0]), y] += 1.0
    noise_vars = np.log(1.0 / alpha + 1.0)
    targets = np.log(alpha) - noise_vars / 2.0
    return targets, noise_vars


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = (A * A).sum(axis=1)[:, None]
    bb = (B * B).sum(axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)


def _rbf(A: np.ndarray, B: np.ndarray, lengthscale: float,
         signal_variance: float) -> np.ndarray:
    return signal_variance * np.exp(-0.5 * _sq_dists(A, B) / lengthscale ** 2)


def median_heuristic(X: np.ndarray) -> float:
    """Median pairwise Euclidean distance; 1.0 on degenerate inputs."""
    n = X.shape[0]
    if n < 2:
        return 1.0
    d2 = _sq_dists(X, X)
    iu = np.triu_indices(n, k=1)
    med = float(np.median(np.sqrt(d2[iu])))
    return med if med > 1e-12 else 1.0


def _factorize(K: np.ndarray, noise_vars: np.ndarray, start_jitter: float,
               diagnostics: ModelDiagnostics) -> Tuple[np.ndarray, float]:
    """Batched per-class Cholesky with a jitter escalation ladder."""
    n = K.shape[0]
    m = noise_vars.shape[1]
    idx = np.arange(n)
    ladder = [start_jitter] + [j for j in JITTER_LADDER if j > start_jitter]
    for rung, jit in enumerate(ladder):
        A = np.broadcast_to(K, (m, n, n)).copy()
        A[:, idx, idx] += noise_vars.T + jit
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            if rung + 1 < len(ladder):
                diagnostics.jitter_escalations += 1
                logger.warning("Gram factorization failed at jitter %.1e; "
                               "escalating to %.1e", jit, ladder[rung + 1])
            continue
        return L, jit
    raise RuntimeError(f"Gram factorization failed after jitter escalation "
                       f"(final jitter tried: {ladder[-1]:.1e})")


def _solve_weights(chol: np.ndarray, targets: np.ndarray) -> np.ndarray:
    m = chol.shape[0]
    weights = np.empty((m, targets.shape[0]))
    for k in range(m):
        tmp = solve_triangular(chol[k], targets[:, k], lower=True)
        weights[k] = solve_triangular(chol[k].T, tmp, lower=False)
    return weights


def fit_xy(X: np.ndarray, y: np.ndarray, m: int,
           hyper: KernelConfig = KernelConfig(),
           diagnostics: Optional[ModelDiagnostics] = None) -> ModelState:
    """Fit per-class GP regressors on Dirichlet-transformed targets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y length mismatch")
    if y.size and (y.min() < 0 or y.max() >= m):
        raise ValueError(f"labels outside [0, {m})")
    present = set(np.unique(y).tolist())
    missing = [k for k in range(m) if k not in present]
    if missing:
        raise ValueError(f"missing class: no examples for labels {missing}")
    diagnostics = diagnostics if diagnostics is not None else ModelDiagnostics()
    targets, noise_vars = _transform_all(y, m, hyper.alpha_eps)
    lengthscale = (hyper.lengthscale if hyper.lengthscale is not None
                   else median_heuristic(X))
    K = _rbf(X, X, lengthscale, hyper.signal_variance)
    chol, jitter = _factorize(K, noise_vars, hyper.jitter, diagnostics)
    weights = _solve_weights(chol, targets)
    return ModelState(X=X, y=y, m=m, targets=targets, noise_vars=noise_vars,
                      hyper=hyper, lengthscale=lengthscale, jitter=jitter,
                      chol=chol, weights=weights, diagnostics=diagnostics)


def fit(examples: Sequence[Tuple[np.ndarray, int]], m: int,
        hyper: KernelConfig = KernelConfig()) -> ModelState:
    """fit_xy over a list of (context, label) pairs."""
    if not examples:
        raise ValueError("missing class: empty training set")
    X = np.stack([np.asarray(c, dtype=float) for c, _ in examples])
    y = np.array([lab for _, lab in examples], dtype=np.int64)
    return fit_xy(X, y, m, hyper)


def update(state: ModelState, example: Tuple[np.ndarray, int]) -> ModelState:
    """Insert one example; equivalent to refitting on the extended set.

    Fixed-lengthscale configurations take the O(n^2) Cholesky row-extension
    path; the median-heuristic configuration refits so the lengthscale is
    refreshed (an extension could not match the refit then).
    """
    x_new, label = example
    x_new = np.asarray(x_new, dtype=float).reshape(1, -1)
    X_ext = np.vstack([state.X, x_new])
    y_ext = np.append(state.y, np.int64(label))
    if state.hyper.lengthscale is None:
        return fit_xy(X_ext, y_ext, state.m, state.hyper, state.diagnostics)

    t_new, v_new = dirichlet_transform(int(label), state.m, state.hyper.alpha_eps)
    n = state.train_size
    k_vec = _rbf(state.X, x_new, state.lengthscale,
                 state.hyper.signal_variance)[:, 0]
    k_self = state.hyper.signal_variance + state.jitter
    chol_new = np.zeros((state.m, n + 1, n + 1))
    for k in range(state.m):
        l12 = solve_triangular(state.chol[k], k_vec, lower=True)
        d2 = k_self + v_new[k] - l12 @ l12
        if d2 <= 1e-12:
            # Extension lost positive definiteness; fall back to a refit.
            return fit_xy(X_ext, y_ext, state.m, state.hyper, state.diagnostics)
        chol_new[k, :n, :n] = state.chol[k]
        chol_new[k, n, :n] = l12
        chol_new[k, n, n] = np.sqrt(d2)
    targets = np.vstack([state.targets, t_new])
    noise_vars = np.vstack([state.noise_vars, v_new])
    weights = _solve_weights(chol_new, targets)
    return ModelState(X=X_ext, y=y_ext, m=state.m, targets=targets,
                      noise_vars=noise_vars, hyper=state.hyper,
                      lengthscale=state.lengthscale, jitter=state.jitter,
                      chol=chol_new, weights=weights,
                      diagnostics=state.diagnostics)


def posterior(state: ModelState, Xp: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Latent posterior means and variances at probe points (both P x m)."""
    Xp = np.atleast_2d(np.asarray(Xp, dtype=float))
    Ks = _rbf(state.X, Xp, state.lengthscale, state.hyper.signal_variance)
    means = Ks.T @ state.weights.T
    variances = np.empty_like(means)
    for k in range(state.m):
        v = solve_triangular(state.chol[k], Ks, lower=True)
        variances[:, k] = state.hyper.signal_variance - np.einsum("np,np->p", v, v)
    neg = variances < 0.0
    if np.any(neg):
        state.diagnostics.negative_variance_clamps += int(neg.sum())
        np.clip(variances, 0.0, None, out=variances)
    return means, variances


def sample_softmax_probs(means: np.ndarray, variances: np.ndarray, s: int,
                         rng: np.random.Generator) -> np.ndarray:
    """Draw s softmax-normalized latent samples per probe point (P x s x m).

    Latents are sampled independently per class from the marginal posterior
    at each point; with zero variance all rows collapse to softmax(means).
    """
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    means = np.atleast_2d(means)
    variances = np.atleast_2d(variances)
    z = rng.standard_normal((means.shape[0], s, means.shape[1]))
    f = means[:, None, :] + np.sqrt(variances)[:, None, :] * z
    f -= f.max(axis=2, keepdims=True)
    e = np.exp(f)
    return e / e.sum(axis=2, keepdims=True)


def sample_predictives(state: ModelState, x: np.ndarray, s: int,
                       rng: np.random.Generator) -> PredictiveSampleSet:
    """s predictive probability rows at a single context."""
    means, variances = posterior(state, np.asarray(x, dtype=float).reshape(1, -1))
    probs = sample_softmax_probs(means, variances, s, rng)[0]
    return PredictiveSampleSet(probs=probs)


def predict_marginal(state: ModelState, x: np.ndarray, s: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Marginal predictive at x: row-mean of s sampled predictives."""
    return sample_predictives(state, x, s, rng).mean()


def predict_marginal_batch(state: ModelState, Xp: np.ndarray, s: int,
                           rng: np.random.Generator) -> np.ndarray:
    """Marginal predictives at many probe points (P x m), one shared RNG draw."""
    means, variances = posterior(state, Xp)
    return sample_softmax_probs(means, variances, s, rng).mean(axis=1)


STATE_FORMAT_VERSION = 1


def save_state(state: ModelState, path: str) -> None:
    """Debugging snapshot (versioned npz); not load-bearing for experiments."""
    np.savez(path, format_version=STATE_FORMAT_VERSION, X=state.X, y=state.y,
             m=state.m, targets=state.targets, noise_vars=state.noise_vars,
             lengthscale=state.lengthscale, jitter=state.jitter,
             chol=state.chol, weights=state.weights,
             hyper_lengthscale=np.nan if state.hyper.lengthscale is None
             else state.hyper.lengthscale,
             hyper_signal_variance=state.hyper.signal_variance,
             hyper_jitter=state.hyper.jitter,
             hyper_alpha_eps=state.hyper.alpha_eps)


def load_state(path: str) -> ModelState:
    with np.load(path) as d:
        version = int(d["format_version"])
        if version != STATE_FORMAT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        hls = float(d["hyper_lengthscale"])
        hyper = KernelConfig(lengthscale=None if np.isnan(hls) else hls,
                             signal_variance=float(d["hyper_signal_variance"]),
                             jitter=float(d["hyper_jitter"]),
                             alpha_eps=float(d["hyper_alpha_eps"]))
        return ModelState(X=d["X"], y=d["y"], m=int(d["m"]),
                          targets=d["targets"], noise_vars=d["noise_vars"],
                          hyper=hyper, lengthscale=float(d["lengthscale"]),
                          jitter=float(d["jitter"]), chol=d["chol"],
                          weights=d["weights"])
