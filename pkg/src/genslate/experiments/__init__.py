"""Experiment harness: sweeps, scans, evaluation and report output."""

from .evaluation import EvalReport, evaluate_llm_slates, vote_validation
from .report import emit_report, read_report
from .sweep import ErrorSetting, SweepSpec, error_level_setting, run_error_sweep, run_param_scan

__all__ = ["EvalReport", "evaluate_llm_slates", "vote_validation", "emit_report", "read_report",
           "ErrorSetting", "SweepSpec", "error_level_setting", "run_error_sweep", "run_param_scan"]
