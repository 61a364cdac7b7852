"""Drawing layer over the suite's aggregate CSV artifacts.

Every statistic (means, stds, moving averages, cumulative sums) is computed
upstream and stored in the CSVs; this module only reads columns and draws.
Rendering is a pure function of the CSV bytes: a pinned style dict and a
sorted policy order make repeated renders byte-identical for raster output.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

__all__ = ["PlotSpec", "render", "discover_policies", "preset_specs",
           "PRESET_NAMES"]

_SOURCE_PREFIX = {"rounds": "agg_rounds_", "heldout": "agg_heldout_",
                  "actions": "actions_"}

_ACTION_COLUMNS = ("accept_frac", "intervene_frac", "request_frac")

_STYLE = {
    "figure.figsize": (7.0, 4.4),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.6,
    "legend.framealpha": 0.9,
    "svg.hashsalt": "odmfigures",
}

_COLORS = plt.cm.tab10.colors


@dataclass(frozen=True)
class PlotSpec:
    """One figure: a metric drawn per policy as mean line plus std band.

    metric is a column stem: the source CSV must contain <metric>_mean and
    <metric>_std columns (the special source 'actions' instead draws its
    three fraction columns). aggregation is a descriptive label only; it is
    appended to the y-axis label so axes state what the numbers are.
    """

    metric: str
    output: str
    source: str = "rounds"
    aggregation: str = ""
    policies: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.metric:
            raise ValueError("metric must be non-empty")
        if not self.output:
            raise ValueError("output path must be non-empty")
        if self.source not in _SOURCE_PREFIX:
            raise ValueError(f"unknown source {self.source!r}; choose from "
                             f"{sorted(_SOURCE_PREFIX)}")


def _read_table(path: str) -> Dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return {name: np.array([float(r[name]) for r in rows])
            for name in reader.fieldnames}


def discover_policies(csv_dir: str, source: str) -> List[str]:
    """Policy names present for a source, from file names, sorted."""
    prefix = _SOURCE_PREFIX[source]
    names = []
    for fname in os.listdir(csv_dir):
        if fname.startswith(prefix) and fname.endswith(".csv"):
            names.append(fname[len(prefix):-len(".csv")])
    return sorted(names)


def _resolve_policies(csv_dir: str, spec: PlotSpec) -> List[str]:
    available = discover_policies(csv_dir, spec.source)
    if not available:
        raise ValueError(f"no {_SOURCE_PREFIX[spec.source]}*.csv files in "
                         f"{csv_dir}")
    if not spec.policies:
        return available
    missing = [p for p in spec.policies if p not in available]
    if missing:
        raise ValueError(f"policies {missing} not found in {csv_dir} "
                         f"(available: {available})")
    return list(spec.policies)


def _require_columns(table: Dict[str, np.ndarray], columns: Sequence[str],
                     path: str) -> None:
    missing = [c for c in columns if c not in table]
    if missing:
        raise ValueError(f"{path}: missing column(s) {missing}; "
                         f"have {sorted(table)}")


def _ylabel(spec: PlotSpec) -> str:
    label = spec.metric.replace("_", " ")
    if spec.aggregation:
        label += f" ({spec.aggregation})"
    return label


def _draw_metric(csv_dir: str, spec: PlotSpec, policies: List[str]) -> None:
    fig, ax = plt.subplots()
    for idx, policy in enumerate(policies):
        path = os.path.join(csv_dir, _SOURCE_PREFIX[spec.source]
                            + policy + ".csv")
        table = _read_table(path)
        _require_columns(table, ["t", f"{spec.metric}_mean",
                                 f"{spec.metric}_std"], path)
        t = table["t"]
        mean = table[f"{spec.metric}_mean"]
        std = table[f"{spec.metric}_std"]
        color = _COLORS[idx % len(_COLORS)]
        ax.fill_between(t, mean - std, mean + std, color=color, alpha=0.25,
                        linewidth=0)
        ax.plot(t, mean, color=color, label=policy)
    ax.set_xlabel("round")
    ax.set_ylabel(_ylabel(spec))
    ax.legend()
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)


def _draw_actions(csv_dir: str, spec: PlotSpec, policies: List[str]) -> None:
    fig, axes = plt.subplots(len(policies), 1, sharex=True, squeeze=False,
                             figsize=(7.0, 2.2 * len(policies)))
    for row, policy in enumerate(policies):
        ax = axes[row, 0]
        path = os.path.join(csv_dir, _SOURCE_PREFIX["actions"]
                            + policy + ".csv")
        table = _read_table(path)
        _require_columns(table, ("t",) + _ACTION_COLUMNS, path)
        for idx, column in enumerate(_ACTION_COLUMNS):
            ax.plot(table["t"], table[column], color=_COLORS[idx],
                    label=column.replace("_frac", ""))
        ax.set_ylim(-0.05, 1.05)
        ax.set_ylabel(policy)
        if row == 0:
            ax.legend(loc="upper right", ncol=3)
    axes[-1, 0].set_xlabel("round")
    fig.tight_layout()
    fig.savefig(spec.output)
    plt.close(fig)


def render(csv_dir: str, spec: PlotSpec) -> str:
    """Draw one figure from the aggregate CSVs; returns the written path."""
    if not os.path.isdir(csv_dir):
        raise ValueError(f"not a directory: {csv_dir}")
    policies = _resolve_policies(csv_dir, spec)
    parent = os.path.dirname(spec.output)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with plt.rc_context(_STYLE):
        if spec.source == "actions":
            _draw_actions(csv_dir, spec, policies)
        else:
            _draw_metric(csv_dir, spec, policies)
    return spec.output


_METRIC_PRESETS = {
    "regret": [("regret", "rounds", "cumulative system minus oracle loss",
                "regret")],
    "loss": [("loss_ma", "rounds", "moving average", "loss_ma")],
    "mistake": [("mistake_ma", "rounds", "moving average", "mistake_ma")],
    "heldout": [("mistake", "heldout", "heldout mean", "heldout_mistake"),
                ("cross_entropy", "heldout", "heldout mean",
                 "heldout_cross_entropy"),
                ("auroc", "heldout", "heldout mean", "heldout_auroc"),
                ("auprc", "heldout", "heldout mean", "heldout_auprc")],
}

PRESET_NAMES = ("all",) + tuple(_METRIC_PRESETS) + ("actions",)


def preset_specs(preset: str, out_dir: str, fmt: str = "png",
                 policies: Tuple[str, ...] = ()) -> List[PlotSpec]:
    """Expand a preset name into concrete PlotSpecs under out_dir."""
    if preset == "all":
        names = list(_METRIC_PRESETS) + ["actions"]
        specs: List[PlotSpec] = []
        for name in names:
            specs.extend(preset_specs(name, out_dir, fmt, policies))
        return specs
    if preset == "actions":
        return [PlotSpec(metric="actions", source="actions",
                         output=os.path.join(out_dir, f"actions.{fmt}"),
                         aggregation="across-run action fractions",
                         policies=policies)]
    if preset not in _METRIC_PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from "
                         f"{PRESET_NAMES}")
    return [PlotSpec(metric=metric, source=source, aggregation=agg,
                     output=os.path.join(out_dir, f"{stem}.{fmt}"),
                     policies=policies)
            for metric, source, agg, stem in _METRIC_PRESETS[preset]]
