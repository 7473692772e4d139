"""Cluster-level anomaly detection from the logs of every database node."""

from .experiment import ExperimentConfig, Report, fit, evaluate, run_experiment
from .generator import GeneratorConfig, generate, simulate
from .logcore import AnomalyLabel, ClusterDataset, LogEntry, load_dataset, write_dataset

__all__ = [
    "AnomalyLabel", "ClusterDataset", "ExperimentConfig", "GeneratorConfig", "LogEntry", "Report",
    "evaluate", "fit", "generate", "load_dataset", "run_experiment", "simulate", "write_dataset",
]
__version__ = "0.1.0"
