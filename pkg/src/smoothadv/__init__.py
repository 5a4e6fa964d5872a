"""Curriculum-based smooth adversarial training for small dense classifiers."""

__version__ = "0.1.0"

from .attack import AdvBatch, AttackConfig, masked_pgd, pgd, project
from .curriculum import CurriculumConfig, Schedule, schedule_value
from .estimator import SmoothAdversarialClassifier
from .hessian import HessianEstimate, ProbeConfig
from .network import NetworkSpec, NumericalError, forward, init_network
from .trainer import TrainConfig, TrainResult, evaluate, train

__all__ = [
    "AdvBatch", "AttackConfig", "CurriculumConfig", "HessianEstimate", "NetworkSpec",
    "NumericalError", "ProbeConfig", "Schedule", "SmoothAdversarialClassifier", "TrainConfig",
    "TrainResult", "evaluate", "forward", "init_network", "masked_pgd", "pgd", "project",
    "schedule_value", "train",
]
