"""Experiments built on the simulator and the mean-field solver."""

from .registry import EXPENSIVE, EXPERIMENTS, ExperimentResult, get_experiment, run_experiment

__all__ = ["EXPENSIVE", "EXPERIMENTS", "ExperimentResult", "get_experiment", "run_experiment"]
