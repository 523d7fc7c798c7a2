"""Experiment harness: configs, batched simulation, fixed-point sweeps,
invariant checks and result files."""
from .checks import SUITES, run_checks
from .config import ExperimentConfig, load_config, parse_config
from .fixed_points import fixed_point_rows, sweep_fixed_points
from .io import read_csv, read_npz, write_csv, write_npz, write_svg
from .simulate import PointResult, RunResult, log_times, run

__all__ = [
    "SUITES",
    "ExperimentConfig",
    "PointResult",
    "RunResult",
    "fixed_point_rows",
    "load_config",
    "log_times",
    "parse_config",
    "read_csv",
    "read_npz",
    "run",
    "run_checks",
    "sweep_fixed_points",
    "write_csv",
    "write_npz",
    "write_svg",
]
