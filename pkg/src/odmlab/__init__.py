"""Simulation laboratory for online decision mediation.

Per round a mediator chooses among accepting a human's action, intervening
with a model action, or requesting (and learning from) an expert action.
This package provides the mediator policies, the online Bayesian classifier
behind them, simulated environments, and the evaluation pipeline.
"""
from .core import (CostSpec, MediatorDecision, RoundRecord, SeedSpec,
                   StreamTag, centered_loss, default_k_req,
                   realized_round_loss, system_action)
from .mediators import (DecisionInputs, MatchedDecay, PolicyKind,
                        benchmark_decide, fit_matched_epsilon, g_transform,
                        greedy_decide, kappa0, lambert_w0, mutual_info,
                        umpire_decide)
from .runner import (ConfigError, EnvironmentSpec, ExperimentConfig,
                     ModelSpec, PolicySpec, RunResult, SuiteResult,
                     load_config, resolve_config, run_single, run_suite,
                     run_sweep)

__version__ = "0.1.0"

__all__ = [
    "CostSpec", "MediatorDecision", "RoundRecord", "SeedSpec", "StreamTag",
    "centered_loss", "default_k_req", "realized_round_loss", "system_action",
    "DecisionInputs", "MatchedDecay", "PolicyKind", "benchmark_decide",
    "fit_matched_epsilon", "g_transform", "greedy_decide", "kappa0",
    "lambert_w0", "mutual_info", "umpire_decide",
    "ConfigError", "EnvironmentSpec", "ExperimentConfig", "ModelSpec",
    "PolicySpec", "RunResult", "SuiteResult", "load_config",
    "resolve_config", "run_single", "run_suite", "run_sweep", "__version__",
]
