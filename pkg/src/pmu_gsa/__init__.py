"""Identification and correction of GPS-spoofed PMU data in distribution system state estimation."""

from .attack import AttackProfile, apply_gsa, correct_measurements
from .config import ScenarioConfig, load_config, parse_config
from .correct import PsoParams, evaluate_correction, golden_section_baseline, pso_correct
from .estimator import build_jacobian, estimate_iterative, estimate_linear, objective
from .feeder import FeederModel, load_feeder, parse_feeder
from .identify import Category, build_test_dataset, identify_all, probe, sweep_objective
from .measurement import NoiseSpec, Placement, make_placement, synthesize
from .metrics import estimation_error, pmd_pfd, rmse, run_montecarlo
from .powerflow import solve

__all__ = [
    "AttackProfile", "apply_gsa", "correct_measurements",
    "ScenarioConfig", "load_config", "parse_config",
    "PsoParams", "evaluate_correction", "golden_section_baseline", "pso_correct",
    "build_jacobian", "estimate_iterative", "estimate_linear", "objective",
    "FeederModel", "load_feeder", "parse_feeder",
    "Category", "build_test_dataset", "identify_all", "probe", "sweep_objective",
    "NoiseSpec", "Placement", "make_placement", "synthesize",
    "estimation_error", "pmd_pfd", "rmse", "run_montecarlo",
    "solve",
]
