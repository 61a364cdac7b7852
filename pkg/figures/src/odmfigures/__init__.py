"""Figure rendering for the decision-mediation laboratory's CSV artifacts.

This package consumes only the CSV files a suite writes; it computes no
statistics of its own and has no dependency on the simulation package.
"""
from .plots import PRESET_NAMES, PlotSpec, discover_policies, preset_specs, render

__version__ = "0.1.0"

__all__ = ["PlotSpec", "render", "discover_policies", "preset_specs",
           "PRESET_NAMES", "__version__"]
