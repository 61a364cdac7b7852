"""Experiment orchestration: config parsing, the round loop generalized over
policies, seed-parallel execution, CSV emission, aggregation, and sweeps.

Determinism contract: every run is a pure function of (config, policy,
run_index); parallel and serial execution write byte-identical files because
rows are ordered by (run, t) regardless of completion order.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import env as env_mod
from . import metrics as metrics_mod
from . import model as model_mod
from .core import (CostSpec, MediatorDecision, RoundRecord, SeedSpec,
                   StreamTag, realized_round_loss, system_action)
from .mediators import (DecisionInputs, MatchedDecay, PolicyKind,
                        benchmark_decide, fit_matched_epsilon, kappa0,
                        umpire_decide)

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "EnvironmentSpec",
    "ModelSpec",
    "PolicySpec",
    "ExperimentConfig",
    "RunResult",
    "SuiteResult",
    "load_config",
    "resolve_config",
    "run_single",
    "run_suite",
    "run_sweep",
    "aggregate_directory",
    "load_matched",
    "save_matched",
    "request_curves_from_rounds_csv",
    "ROUNDS_HEADER",
    "HELDOUT_HEADER",
    "SUMMARY_HEADER",
    "SWEEP_AXES",
    "ACTIONS_WINDOW",
    "OUTPUT_DIR_ENV_VAR",
]

ROUNDS_HEADER = ["run_id", "t", "z", "human_correct", "model_correct",
                 "system_mistake", "realized_loss", "oracle_loss",
                 "cum_regret", "mi_value", "adjusted_k_req"]
HELDOUT_HEADER = ["run_id", "t", "mistake_rate", "cross_entropy", "auroc",
                  "auprc"]
SUMMARY_HEADER = ["policy", "run_id", "final_regret", "err_acc", "exc_int",
                  "abs_shf", "requests"]
AGG_ROUNDS_HEADER = ["t", "regret_mean", "regret_std", "loss_ma_mean",
                     "loss_ma_std", "mistake_ma_mean", "mistake_ma_std"]
AGG_HELDOUT_HEADER = ["t", "mistake_mean", "mistake_std",
                      "cross_entropy_mean", "cross_entropy_std",
                      "auroc_mean", "auroc_std", "auprc_mean", "auprc_std"]
ACTIONS_HEADER = ["t", "accept_frac", "intervene_frac", "request_frac"]
SWEEP_HEADER = ["axis", "value", "policy", "avg_loss_mean", "avg_loss_std",
                "final_regret_mean", "final_regret_std"]

SWEEP_AXES = ("noise_q", "k_req", "s", "alpha", "k_int")
ACTIONS_WINDOW = 10
OUTPUT_DIR_ENV_VAR = "ODMLAB_OUTDIR"

# Policies that consume the predictive sample set (not just its mean).
_SAMPLE_POLICIES = frozenset({
    PolicyKind.UMPIRE, PolicyKind.THOMPSON, PolicyKind.FULL_THOMPSON,
    PolicyKind.PESSIMISTIC_BAYESIAN_SAMPLING,
    PolicyKind.BAYESIAN_ACTIVE_REQUEST,
})


class ConfigError(ValueError):
    """Invalid configuration (exit code 1 at the CLI)."""


@dataclass(frozen=True)
class EnvironmentSpec:
    kind: str = "gauss_sine"  # gauss_sine | tabular
    noise_q: float = 0.0
    path: Optional[str] = None
    label_column: Optional[str] = None
    sample_n: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in ("gauss_sine", "tabular"):
            raise ConfigError(f"unknown environment kind {self.kind!r}")
        if self.kind == "tabular":
            if not self.path:
                raise ConfigError("tabular environment requires 'path'")
            if not self.label_column:
                raise ConfigError("tabular environment requires 'label_column'")


@dataclass(frozen=True)
class ModelSpec:
    lengthscale: Optional[float] = None
    signal_variance: float = 1.0
    jitter: float = 1e-6
    alpha_eps: float = 0.01
    s: int = 256

    def __post_init__(self) -> None:
        if self.s < 1:
            raise ConfigError(f"s must be >= 1, got {self.s}")

    def kernel(self) -> model_mod.KernelConfig:
        return model_mod.KernelConfig(lengthscale=self.lengthscale,
                                      signal_variance=self.signal_variance,
                                      jitter=self.jitter,
                                      alpha_eps=self.alpha_eps)


@dataclass(frozen=True)
class PolicySpec:
    kind: PolicyKind
    name: str = ""
    epsilon: Optional[float] = None        # per-policy exploration override
    kappa: Optional[float] = None          # per-policy tradeoff override
    eps_floor: float = 0.0                 # optional request floor (umpire)
    use_oracle_model: bool = False         # act with the oracle model
    matched_eps_path: Optional[str] = None
    matched: Optional[MatchedDecay] = None

    def resolved_name(self) -> str:
        if self.name:
            return self.name
        base = self.kind.value
        return base + ("_oracle_model" if self.use_oracle_model else "")


@dataclass(frozen=True)
class ExperimentConfig:
    environment: EnvironmentSpec = EnvironmentSpec()
    model: ModelSpec = ModelSpec()
    policies: Tuple[PolicySpec, ...] = (PolicySpec(kind=PolicyKind.UMPIRE),)
    n: Optional[int] = None                # default: 500 gauss_sine, else 2000
    runs: int = 10
    costs: CostSpec = CostSpec()
    alpha: float = 0.5
    heldout_size: int = 2000
    eval_every: Optional[int] = None       # default n // 10
    ma_window: Optional[int] = None        # default n // 5
    sweep: Dict[str, tuple] = field(default_factory=dict)
    master_seed: int = 0
    workers: int = 1
    output_dir: str = "results"
    oracle_train_cap: int = 4000


@dataclass
class RunResult:
    """Columnar per-run artifacts (picklable across worker processes)."""

    policy_name: str
    run_index: int
    z: np.ndarray
    human_correct: np.ndarray
    model_correct: np.ndarray
    system_mistake: np.ndarray
    realized_loss: np.ndarray
    oracle_loss: np.ndarray
    cum_regret: np.ndarray
    mi_value: np.ndarray
    adjusted_k_req: np.ndarray
    heldout_t: np.ndarray
    heldout: np.ndarray  # (evals, 4): mistake, cross_entropy, auroc, auprc
    counters: Tuple[int, int, int]
    requests: int
    final_train_size: int


@dataclass
class SuiteResult:
    output_dir: str
    policy_names: List[str]
    per_policy: Dict[str, Dict[str, np.ndarray]]
    summary_rows: List[dict]
    failures: List[Tuple[str, int, str]]
    n: int
    eval_every: int
    ma_window: int


# ---------------------------------------------------------------------------
# Config parsing


def _build_policy(entry: dict) -> PolicySpec:
    if "kind" not in entry:
        raise ConfigError(f"policy entry missing 'kind': {entry}")
    try:
        kind = PolicyKind(entry["kind"])
    except ValueError as exc:
        raise ConfigError(f"unknown policy kind {entry['kind']!r}") from exc
    known = {"kind", "name", "epsilon", "kappa", "eps_floor",
             "use_oracle_model", "matched_eps_path"}
    unknown = set(entry) - known
    if unknown:
        raise ConfigError(f"unknown policy fields {sorted(unknown)}")
    spec = PolicySpec(kind=kind, name=entry.get("name", ""),
                      epsilon=entry.get("epsilon"),
                      kappa=entry.get("kappa"),
                      eps_floor=float(entry.get("eps_floor", 0.0)),
                      use_oracle_model=bool(entry.get("use_oracle_model", False)),
                      matched_eps_path=entry.get("matched_eps_path"))
    if spec.kind == PolicyKind.MATCHED_DECAYING_REQUEST and spec.matched_eps_path:
        spec = replace(spec, matched=load_matched(spec.matched_eps_path))
    return spec


def _build_config(raw: dict) -> ExperimentConfig:
    known = {"environment", "model", "policies", "n", "runs", "costs",
             "alpha", "heldout_size", "eval_every", "ma_window", "sweep",
             "master_seed", "workers", "output_dir", "oracle_train_cap"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    try:
        environment = EnvironmentSpec(**raw.get("environment", {}))
        model_spec = ModelSpec(**raw.get("model", {}))
        costs = CostSpec(**raw.get("costs", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    policies = tuple(_build_policy(p) for p in raw.get("policies", []))
    if not policies:
        raise ConfigError("config must list at least one policy")
    sweep_raw = raw.get("sweep", {}) or {}
    for axis in sweep_raw:
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; "
                              f"choose from {SWEEP_AXES}")
    sweep = {axis: tuple(values) for axis, values in sweep_raw.items()}
    try:
        return ExperimentConfig(
            environment=environment, model=model_spec, policies=policies,
            n=raw.get("n"), runs=int(raw.get("runs", 10)), costs=costs,
            alpha=float(raw.get("alpha", 0.5)),
            heldout_size=int(raw.get("heldout_size", 2000)),
            eval_every=raw.get("eval_every"), ma_window=raw.get("ma_window"),
            sweep=sweep, master_seed=int(raw.get("master_seed", 0)),
            workers=int(raw.get("workers", 1)),
            output_dir=str(raw.get("output_dir", "results")),
            oracle_train_cap=int(raw.get("oracle_train_cap", 4000)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> ExperimentConfig:
    """Parse a YAML config whose keys mirror ExperimentConfig field names."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return resolve_config(_build_config(raw))


def resolve_config(config: ExperimentConfig) -> ExperimentConfig:
    """Fill derived defaults and validate cross-field constraints."""
    n = config.n
    if n is None:
        n = 500 if config.environment.kind == "gauss_sine" else 2000
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if config.environment.kind == "tabular":
        sample_n = config.environment.sample_n
        if sample_n is not None and sample_n != n:
            raise ConfigError(f"environment.sample_n ({sample_n}) must equal "
                              f"the horizon n ({n}); omit it to default")
    if config.runs < 1:
        raise ConfigError(f"runs must be >= 1, got {config.runs}")
    if config.heldout_size < 1:
        raise ConfigError(f"heldout_size must be >= 1, got {config.heldout_size}")
    if config.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {config.workers}")
    eval_every = config.eval_every if config.eval_every is not None else max(1, n // 10)
    ma_window = config.ma_window if config.ma_window is not None else max(1, n // 5)
    if eval_every < 1 or eval_every > n:
        raise ConfigError(f"eval_every must be in [1, n], got {eval_every}")
    if ma_window < 1:
        raise ConfigError(f"ma_window must be >= 1, got {ma_window}")
    names = [p.resolved_name() for p in config.policies]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate policy names: {names}; set 'name' to "
                          "disambiguate")
    for p in config.policies:
        if (p.kind == PolicyKind.MATCHED_DECAYING_REQUEST
                and p.matched is None):
            raise ConfigError("matched_decaying_request requires "
                              "'matched_eps_path' (run fit-matched-eps)")
        if p.matched is not None and p.matched.horizon < n:
            raise ConfigError(f"matched eps table horizon "
                              f"{p.matched.horizon} shorter than n={n}")
    return replace(config, n=n, eval_every=eval_every, ma_window=ma_window)


# ---------------------------------------------------------------------------
# Single run


@dataclass
class _RunData:
    m: int
    X0: np.ndarray
    y0: np.ndarray
    X_stream: np.ndarray
    y_stream: np.ndarray
    human: np.ndarray
    heldout_X: np.ndarray
    heldout_y: np.ndarray
    oracle_X: np.ndarray
    oracle_y: np.ndarray


def _prepare_run_data(config: ExperimentConfig, env_rng: np.random.Generator,
                      human_rng: np.random.Generator,
                      heldout_rng: np.random.Generator,
                      oracle_rng: np.random.Generator) -> _RunData:
    """Draw all run data. Each stream is consumed sequentially: the caller
    keeps using the same generator instances afterwards (heldout stream goes
    on to drive heldout evaluation sampling, oracle stream goes on to drive
    oracle marginal sampling)."""
    n = config.n
    if config.environment.kind == "gauss_sine":
        params = env_mod.GaussSineParams(noise_q=config.environment.noise_q)
        X0, y0 = env_mod.gauss_sine_seed_examples(params, env_rng)
        X_stream, y_stream = env_mod.gauss_sine_dataset(params, n, env_rng)
        heldout_X, heldout_y = env_mod.gauss_sine_dataset(
            params, config.heldout_size, heldout_rng)
        m = env_mod.GAUSS_SINE_M
        oracle_X = np.vstack([X0, X_stream])
        oracle_y = np.concatenate([y0, y_stream])
    else:
        tab = env_mod.load_tabular(config.environment.path,
                                   config.environment.label_column,
                                   sample_n=n, rng=env_rng,
                                   heldout_size=config.heldout_size)
        m = tab.m
        in_stream = np.zeros(len(tab.pool_labels), dtype=bool)
        in_stream[tab.stream_indices] = True
        in_heldout = np.zeros(len(tab.pool_labels), dtype=bool)
        in_heldout[tab.heldout_indices] = True
        seed_idx = []
        for k in range(m):
            mask = (tab.pool_labels == k) & ~in_stream & ~in_heldout
            candidates = np.flatnonzero(mask)
            if candidates.size == 0:
                candidates = np.flatnonzero((tab.pool_labels == k) & in_stream)
            if candidates.size == 0:
                raise RuntimeError(f"class {k} present only in the heldout "
                                   "split; cannot seed the initial dataset")
            seed_idx.append(int(env_rng.choice(candidates)))
        X0 = tab.pool_examples[seed_idx]
        y0 = tab.pool_labels[seed_idx]
        X_stream, y_stream = tab.examples, tab.labels
        heldout_X, heldout_y = tab.heldout_examples, tab.heldout_labels
        oracle_mask = ~in_heldout
        oracle_idx = np.flatnonzero(oracle_mask)
        if oracle_idx.size > config.oracle_train_cap:
            oracle_idx = np.sort(oracle_rng.choice(
                oracle_idx, size=config.oracle_train_cap, replace=False))
        oracle_X = tab.pool_examples[oracle_idx]
        oracle_y = tab.pool_labels[oracle_idx]

    human_params = env_mod.NoisyHumanParams(alpha=config.alpha)
    human = np.array([env_mod.human_action(int(y), human_params, m, human_rng)
                      for y in y_stream], dtype=np.int64)
    return _RunData(m=m, X0=X0, y0=y0, X_stream=X_stream, y_stream=y_stream,
                    human=human, heldout_X=heldout_X, heldout_y=heldout_y,
                    oracle_X=oracle_X, oracle_y=oracle_y)


def run_single(config: ExperimentConfig, policy: PolicySpec,
               run_index: int) -> RunResult:
    """Execute one (policy, run) pair; deterministic given the seed triple."""
    config = resolve_config(config)
    n = config.n
    s = config.model.s
    seed = SeedSpec(config.master_seed, run_index)
    env_rng = seed.stream(StreamTag.ENVIRONMENT)
    human_rng = seed.stream(StreamTag.HUMAN)
    model_rng = seed.stream(StreamTag.MODEL)
    policy_rng = seed.stream(StreamTag.POLICY)
    heldout_rng = seed.stream(StreamTag.HELDOUT)
    oracle_rng = seed.stream(StreamTag.ORACLE)
    data = _prepare_run_data(config, env_rng, human_rng, heldout_rng,
                             oracle_rng)
    m = data.m
    hyper = config.model.kernel()

    costs = config.costs.resolved(m, kappa0)
    policy_costs = costs
    if policy.epsilon is not None:
        policy_costs = replace(policy_costs, epsilon=policy.epsilon)
    if policy.kappa is not None:
        policy_costs = replace(policy_costs, kappa=policy.kappa)

    oracle_state = model_mod.fit_xy(data.oracle_X, data.oracle_y, m, hyper)
    oracle_marginals = model_mod.predict_marginal_batch(
        oracle_state, data.X_stream, s, oracle_rng)
    oracle_decisions = np.empty(n, dtype=np.int64)
    oracle_losses = np.empty(n)
    for i in range(n):
        dec, loss = metrics_mod.oracle_round(
            data.X_stream[i], int(data.human[i]), int(data.y_stream[i]),
            oracle_marginals[i], costs)
        oracle_decisions[i] = int(dec)
        oracle_losses[i] = loss

    state = (oracle_state if policy.use_oracle_model
             else model_mod.fit_xy(data.X0, data.y0, m, hyper))
    needs_samples = policy.kind in _SAMPLE_POLICIES

    z = np.empty(n, dtype=np.int64)
    human_correct = np.empty(n, dtype=np.int64)
    model_correct = np.empty(n, dtype=np.int64)
    mistakes = np.empty(n, dtype=np.int64)
    losses = np.empty(n)
    mi_values = np.zeros(n)
    adjusted = np.empty(n)
    records: List[RoundRecord] = []
    heldout_ts: List[int] = []
    heldout_rows: List[List[float]] = []
    requests = 0

    for t in range(1, n + 1):
        x = data.X_stream[t - 1]
        y_expert = int(data.y_stream[t - 1])
        y_human = int(data.human[t - 1])

        if policy.use_oracle_model:
            if needs_samples:
                samples = model_mod.sample_predictives(state, x, s, model_rng)
                marginal = samples.mean()
            else:
                samples = None
                marginal = oracle_marginals[t - 1]
        else:
            samples = model_mod.sample_predictives(state, x, s, model_rng)
            marginal = samples.mean()

        inputs = DecisionInputs(marginal=marginal, samples=samples,
                                human_action=y_human, costs=policy_costs,
                                t=t, m=m)
        if policy.kind == PolicyKind.UMPIRE:
            decision, y_model, mi, k_adj = umpire_decide(
                inputs, policy_rng, eps_floor=policy.eps_floor)
        else:
            decision, y_model = benchmark_decide(policy.kind, inputs,
                                                 policy_rng,
                                                 matched=policy.matched)
            mi, k_adj = 0.0, policy_costs.k_req

        y_system = system_action(decision, y_human, y_model, y_expert)
        loss = realized_round_loss(decision, y_human, y_model, y_expert,
                                   policy_costs)
        record = RoundRecord(
            t=t, context=x, human_action=y_human, model_action=y_model,
            expert_action=y_expert, decision=decision, system_action=y_system,
            realized_loss=loss,
            oracle_decision=MediatorDecision(int(oracle_decisions[t - 1])),
            oracle_loss=float(oracle_losses[t - 1]),
            mi_value=mi, adjusted_k_req=k_adj)
        records.append(record)

        z[t - 1] = int(decision)
        human_correct[t - 1] = int(y_human == y_expert)
        model_correct[t - 1] = int(y_model == y_expert)
        mistakes[t - 1] = metrics_mod.system_mistake(record)
        losses[t - 1] = loss
        mi_values[t - 1] = mi
        adjusted[t - 1] = k_adj

        if decision == MediatorDecision.REQUEST:
            requests += 1
            if not policy.use_oracle_model:
                state = model_mod.update(state, (x, y_expert))

        if t % config.eval_every == 0:
            hm = metrics_mod.heldout_metrics(state, data.heldout_X,
                                             data.heldout_y, s, heldout_rng)
            heldout_ts.append(t)
            heldout_rows.append([hm["mistake_rate"], hm["cross_entropy"],
                                 hm["auroc"], hm["auprc"]])

    if not policy.use_oracle_model and state.train_size != m + requests:
        raise RuntimeError(f"request accounting violated: |D_n|="
                           f"{state.train_size}, m={m}, requests={requests}")

    counters = metrics_mod.mediator_counters(records)
    cum_regret = metrics_mod.cumulative_regret(losses, oracle_losses)
    return RunResult(
        policy_name=policy.resolved_name(), run_index=run_index, z=z,
        human_correct=human_correct, model_correct=model_correct,
        system_mistake=mistakes, realized_loss=losses,
        oracle_loss=oracle_losses, cum_regret=cum_regret,
        mi_value=mi_values, adjusted_k_req=adjusted,
        heldout_t=np.array(heldout_ts, dtype=np.int64),
        heldout=np.array(heldout_rows, dtype=float).reshape(len(heldout_ts), 4),
        counters=(counters.erroneous_acceptances,
                  counters.excessive_interventions,
                  counters.abstention_shortfalls),
        requests=requests,
        final_train_size=state.train_size)


# ---------------------------------------------------------------------------
# Suite execution and CSV emission


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def _round9(a: np.ndarray) -> np.ndarray:
    """Round to the serialized precision (9 significant digits).

    Aggregates are computed from these values rather than the exact ones so
    that re-aggregating from the written CSVs reproduces identical files.
    """
    flat = np.array([float(f"{float(v):.9g}") for v in a.ravel()])
    return flat.reshape(a.shape)


def _write_csv(path: str, header: Sequence[str],
               rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _run_task(args: Tuple[ExperimentConfig, PolicySpec, int]):
    config, policy, run_index = args
    try:
        return ("ok", policy.resolved_name(), run_index,
                run_single(config, policy, run_index))
    except Exception as exc:  # noqa: BLE001 - failures become diagnostics
        logger.exception("run failed: policy=%s run=%d",
                         policy.resolved_name(), run_index)
        return ("err", policy.resolved_name(), run_index,
                f"{type(exc).__name__}: {exc}")


def run_suite(config: ExperimentConfig,
              output_dir: Optional[str] = None) -> SuiteResult:
    """Execute runs x policies, write per-policy and aggregate CSVs."""
    config = resolve_config(config)
    outdir = output_dir if output_dir is not None else config.output_dir
    os.makedirs(outdir, exist_ok=True)

    tasks = [(config, policy, run_index)
             for policy in config.policies
             for run_index in range(config.runs)]
    results: Dict[Tuple[str, int], RunResult] = {}
    failures: List[Tuple[str, int, str]] = []
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_task, tasks))
    else:
        outcomes = [_run_task(t) for t in tasks]
    for status, name, run_index, payload in outcomes:
        if status == "ok":
            results[(name, run_index)] = payload
        else:
            failures.append((name, run_index, payload))

    policy_names = [p.resolved_name() for p in config.policies]
    per_policy: Dict[str, Dict[str, np.ndarray]] = {}
    summary_rows: List[dict] = []

    for policy in config.policies:
        name = policy.resolved_name()
        runs = [results[(name, r)] for r in range(config.runs)
                if (name, r) in results]
        if not runs:
            logger.warning("policy %s: every run failed; skipping files", name)
            continue
        _write_policy_files(outdir, name, runs, config)
        per_policy[name] = _collect_policy_arrays(runs, config)
        for rr in runs:
            summary_rows.append({
                "policy": name, "run_id": rr.run_index,
                "final_regret": float(rr.cum_regret[-1]),
                "err_acc": rr.counters[0], "exc_int": rr.counters[1],
                "abs_shf": rr.counters[2], "requests": rr.requests})

    _write_csv(os.path.join(outdir, "summary.csv"), SUMMARY_HEADER,
               [[r["policy"], r["run_id"], _fmt(r["final_regret"]),
                 r["err_acc"], r["exc_int"], r["abs_shf"], r["requests"]]
                for r in summary_rows])
    if failures:
        _write_csv(os.path.join(outdir, "failures.csv"),
                   ["policy", "run_id", "error"],
                   [[n, r, e] for n, r, e in sorted(failures)])
    _write_config_snapshot(config, outdir)
    return SuiteResult(output_dir=outdir, policy_names=policy_names,
                       per_policy=per_policy, summary_rows=summary_rows,
                       failures=failures, n=config.n,
                       eval_every=config.eval_every,
                       ma_window=config.ma_window)


def _collect_policy_arrays(runs: List[RunResult],
                           config: ExperimentConfig) -> Dict[str, np.ndarray]:
    return {
        "regret": np.stack([r.cum_regret for r in runs]),
        "realized_loss": np.stack([r.realized_loss for r in runs]),
        "system_mistake": np.stack([r.system_mistake for r in runs]),
        "z": np.stack([r.z for r in runs]),
        "heldout_t": runs[0].heldout_t,
        "heldout": np.stack([r.heldout for r in runs]),
        "final_regret": np.array([r.cum_regret[-1] for r in runs]),
        "avg_loss": np.array([r.realized_loss.mean() for r in runs]),
        "requests": np.array([r.requests for r in runs]),
        "counters": np.array([r.counters for r in runs]),
        "run_ids": np.array([r.run_index for r in runs]),
    }


def _write_policy_files(outdir: str, name: str, runs: List[RunResult],
                        config: ExperimentConfig) -> None:
    rounds_rows = []
    heldout_rows = []
    for rr in sorted(runs, key=lambda r: r.run_index):
        for i in range(rr.z.shape[0]):
            rounds_rows.append([
                rr.run_index, i + 1, int(rr.z[i]),
                int(rr.human_correct[i]), int(rr.model_correct[i]),
                int(rr.system_mistake[i]), _fmt(rr.realized_loss[i]),
                _fmt(rr.oracle_loss[i]), _fmt(rr.cum_regret[i]),
                _fmt(rr.mi_value[i]), _fmt(rr.adjusted_k_req[i])])
        for j in range(rr.heldout_t.shape[0]):
            heldout_rows.append([
                rr.run_index, int(rr.heldout_t[j]),
                _fmt(rr.heldout[j, 0]), _fmt(rr.heldout[j, 1]),
                _fmt(rr.heldout[j, 2]), _fmt(rr.heldout[j, 3])])
    _write_csv(os.path.join(outdir, f"rounds_{name}.csv"), ROUNDS_HEADER,
               rounds_rows)
    _write_csv(os.path.join(outdir, f"heldout_{name}.csv"), HELDOUT_HEADER,
               heldout_rows)
    _write_aggregates(outdir, name,
                      regret=_round9(np.stack([r.cum_regret for r in runs])),
                      loss=_round9(np.stack([r.realized_loss for r in runs])),
                      mistake=np.stack([r.system_mistake for r in runs]),
                      z=np.stack([r.z for r in runs]),
                      heldout_t=runs[0].heldout_t,
                      heldout=_round9(np.stack([r.heldout for r in runs])),
                      ma_window=config.ma_window)


def _write_aggregates(outdir: str, name: str, regret: np.ndarray,
                      loss: np.ndarray, mistake: np.ndarray, z: np.ndarray,
                      heldout_t: np.ndarray, heldout: np.ndarray,
                      ma_window: int) -> None:
    """Aggregate across runs. Stats use the population std (ddof=0), so a
    single run reports std 0."""
    n = regret.shape[1]
    loss_ma = np.stack([metrics_mod.moving_average(row, ma_window)
                        for row in loss])
    mist_ma = np.stack([metrics_mod.moving_average(row, ma_window)
                        for row in mistake.astype(float)])
    rows = []
    for i in range(n):
        rows.append([i + 1, _fmt(regret[:, i].mean()), _fmt(regret[:, i].std()),
                     _fmt(loss_ma[:, i].mean()), _fmt(loss_ma[:, i].std()),
                     _fmt(mist_ma[:, i].mean()), _fmt(mist_ma[:, i].std())])
    _write_csv(os.path.join(outdir, f"agg_rounds_{name}.csv"),
               AGG_ROUNDS_HEADER, rows)

    h_rows = []
    for j in range(heldout_t.shape[0]):
        cells = [int(heldout_t[j])]
        for col in range(4):
            vals = heldout[:, j, col]
            cells += [_fmt(vals.mean()), _fmt(vals.std())]
        h_rows.append(cells)
    _write_csv(os.path.join(outdir, f"agg_heldout_{name}.csv"),
               AGG_HELDOUT_HEADER, h_rows)

    freqs = np.stack([(z == d).astype(float).mean(axis=0) for d in range(3)],
                     axis=1)
    smoothed = np.stack([metrics_mod.moving_average(freqs[:, d],
                                                    ACTIONS_WINDOW)
                         for d in range(3)], axis=1)
    a_rows = [[i + 1] + [_fmt(smoothed[i, d]) for d in range(3)]
              for i in range(n)]
    _write_csv(os.path.join(outdir, f"actions_{name}.csv"), ACTIONS_HEADER,
               a_rows)


def _config_snapshot_dict(config: ExperimentConfig) -> dict:
    def clean(value):
        if isinstance(value, PolicyKind):
            return value.value
        if isinstance(value, tuple):
            return [clean(v) for v in value]
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            return {k: clean(v) for k, v in dataclasses.asdict(value).items()}
        if isinstance(value, dict):
            return {k: clean(v) for k, v in value.items()}
        if isinstance(value, np.ndarray):
            return value.tolist()
        return value

    raw = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name == "policies":
            raw[f.name] = [
                {k: clean(v) for k, v in dataclasses.asdict(p).items()
                 if k != "matched"}
                for p in value]
        else:
            raw[f.name] = clean(value)
    return raw


def _write_config_snapshot(config: ExperimentConfig, outdir: str) -> None:
    with open(os.path.join(outdir, "config_used.yaml"), "w",
              encoding="utf-8") as fh:
        yaml.safe_dump(_config_snapshot_dict(config), fh, sort_keys=True)


# ---------------------------------------------------------------------------
# Sweeps


def _sweep_subconfig(config: ExperimentConfig, axis: str,
                     value) -> ExperimentConfig:
    if axis == "noise_q":
        return replace(config,
                       environment=replace(config.environment, noise_q=value))
    if axis == "k_req":
        return replace(config, costs=replace(config.costs, k_req=value))
    if axis == "k_int":
        return replace(config, costs=replace(config.costs, k_int=value))
    if axis == "alpha":
        return replace(config, alpha=value)
    if axis == "s":
        return replace(config, model=replace(config.model, s=int(value)))
    raise ConfigError(f"unknown sweep axis {axis!r}")


def run_sweep(config: ExperimentConfig, axis: str,
              values: Optional[Sequence] = None,
              output_dir: Optional[str] = None) -> List[dict]:
    """Run the suite once per axis value; emit the sweep table CSV."""
    config = resolve_config(config)
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from "
                          f"{SWEEP_AXES}")
    if values is None:
        values = config.sweep.get(axis)
    if not values:
        raise ConfigError(f"no sweep values supplied for axis {axis!r}")
    outdir = output_dir if output_dir is not None else config.output_dir
    os.makedirs(outdir, exist_ok=True)

    table: List[dict] = []
    for value in values:
        sub = _sweep_subconfig(config, axis, value)
        subdir = os.path.join(outdir, f"sweep_{axis}",
                              str(value).replace(".", "p"))
        suite = run_suite(sub, output_dir=subdir)
        if suite.failures:
            raise RuntimeError(
                f"sweep point {axis}={value}: {len(suite.failures)} run(s) "
                f"failed (see {os.path.join(subdir, 'failures.csv')}); "
                "a partial sweep table would be misleading")
        for name in suite.policy_names:
            if name not in suite.per_policy:
                continue
            arrays = suite.per_policy[name]
            table.append({
                "axis": axis, "value": value, "policy": name,
                "avg_loss_mean": float(arrays["avg_loss"].mean()),
                "avg_loss_std": float(arrays["avg_loss"].std()),
                "final_regret_mean": float(arrays["final_regret"].mean()),
                "final_regret_std": float(arrays["final_regret"].std())})
    _write_csv(os.path.join(outdir, f"sweep_{axis}.csv"), SWEEP_HEADER,
               [[r["axis"], _fmt(r["value"]), r["policy"],
                 _fmt(r["avg_loss_mean"]), _fmt(r["avg_loss_std"]),
                 _fmt(r["final_regret_mean"]), _fmt(r["final_regret_std"])]
                for r in table])
    return table


# ---------------------------------------------------------------------------
# Post-hoc tools: re-aggregation and matched-epsilon fitting


def _read_rounds_csv(path: str) -> Dict[int, Dict[str, np.ndarray]]:
    """Rounds CSV grouped by run_id, columns as arrays in round order."""
    per_run: Dict[int, Dict[str, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ROUNDS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            run = int(row["run_id"])
            bucket = per_run.setdefault(run, {k: [] for k in ROUNDS_HEADER})
            for k in ROUNDS_HEADER:
                bucket[k].append(row[k])
    out: Dict[int, Dict[str, np.ndarray]] = {}
    for run, bucket in per_run.items():
        order = np.argsort(np.array(bucket["t"], dtype=int), kind="stable")
        out[run] = {k: np.array(bucket[k], dtype=float)[order]
                    for k in ROUNDS_HEADER}
    return out


def aggregate_directory(directory: str, ma_window: Optional[int] = None) -> List[str]:
    """Recompute aggregate and action-evolution files from per-run CSVs.

    Counter columns of summary.csv are not recomputed (oracle decisions are
    not serialized in the rounds schema); existing summary rows stay as-is.
    """
    regenerated: List[str] = []
    for fname in sorted(os.listdir(directory)):
        if not (fname.startswith("rounds_") and fname.endswith(".csv")):
            continue
        name = fname[len("rounds_"):-len(".csv")]
        per_run = _read_rounds_csv(os.path.join(directory, fname))
        if not per_run:
            raise ValueError(f"{fname}: no rows")
        runs = sorted(per_run)
        n = per_run[runs[0]]["t"].shape[0]
        window = ma_window if ma_window is not None else max(1, n // 5)
        regret = np.stack([per_run[r]["cum_regret"] for r in runs])
        loss = np.stack([per_run[r]["realized_loss"] for r in runs])
        mistake = np.stack([per_run[r]["system_mistake"] for r in runs])
        z = np.stack([per_run[r]["z"] for r in runs]).astype(np.int64)

        heldout_path = os.path.join(directory, f"heldout_{name}.csv")
        heldout_t = np.array([], dtype=np.int64)
        heldout = np.zeros((len(runs), 0, 4))
        if os.path.exists(heldout_path):
            per_run_h: Dict[int, list] = {}
            with open(heldout_path, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                for row in reader:
                    per_run_h.setdefault(int(row["run_id"]), []).append(
                        [float(row["t"]), float(row["mistake_rate"]),
                         float(row["cross_entropy"]), float(row["auroc"]),
                         float(row["auprc"])])
            if per_run_h:
                stacks = [np.array(per_run_h[r]) for r in sorted(per_run_h)]
                heldout_t = stacks[0][:, 0].astype(np.int64)
                heldout = np.stack([s[:, 1:] for s in stacks])
        _write_aggregates(directory, name, regret=regret, loss=loss,
                          mistake=mistake, z=z, heldout_t=heldout_t,
                          heldout=heldout, ma_window=window)
        regenerated.append(name)
    if not regenerated:
        raise ValueError(f"no rounds_*.csv files in {directory}")
    return regenerated


def request_curves_from_rounds_csv(path: str) -> List[np.ndarray]:
    """Per-run cumulative request-count curves from a rounds CSV."""
    per_run = _read_rounds_csv(path)
    if not per_run:
        raise ValueError(f"{path}: no rows")
    return [np.cumsum(per_run[r]["z"] == 2.0).astype(float)
            for r in sorted(per_run)]


def save_matched(matched: MatchedDecay, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"coefficients": matched.coefficients.tolist(),
                   "eps_table": matched.eps_table.tolist()}, fh)


def load_matched(path: str) -> MatchedDecay:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        return MatchedDecay(coefficients=np.asarray(raw["coefficients"]),
                            eps_table=np.asarray(raw["eps_table"]))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load matched-eps table {path}: {exc}") from exc
