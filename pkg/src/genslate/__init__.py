"""Proportional slates of costly statements: process, audits, simulation
and a text pipeline."""

__version__ = "0.1.0"

from .audit import max_violation_ratio, max_weight_balanced_assignment, sample_violation_rate
from .core import Instance, Slate, Statement, quota, support
from .process import DemocraticProcess, ProcessConfig, make_config, run_process, run_uniform_approx

__all__ = ["max_violation_ratio", "max_weight_balanced_assignment", "sample_violation_rate",
           "Instance", "Slate", "Statement", "quota", "support", "DemocraticProcess",
           "ProcessConfig", "make_config", "run_process", "run_uniform_approx", "__version__"]
