"""Compute-budgeted model selection with Successive Halving and curve surrogates."""
from .allocator import AllocConfig, AllocationTrace, Surrogate, run_sh, run_uniform
from .curves import CurveSet, LearningCurve, ModelSpec, read_curves, write_curves
from .harness import ExperimentConfig, Strategy, run_campaign
from .scaling_law import PowerScalingLaw, abc, efficient_frontier, fit_lc_law, fit_lnd_law
from .synthgen import BESIROGLU, HOFFMANN, ChinchillaParams, NoiseConfig

__version__ = "0.1.0"

__all__ = [
    "AllocConfig", "AllocationTrace", "Surrogate", "run_sh", "run_uniform",
    "CurveSet", "LearningCurve", "ModelSpec", "read_curves", "write_curves",
    "ExperimentConfig", "Strategy", "run_campaign",
    "PowerScalingLaw", "abc", "efficient_frontier", "fit_lc_law", "fit_lnd_law",
    "BESIROGLU", "HOFFMANN", "ChinchillaParams", "NoiseConfig",
]
