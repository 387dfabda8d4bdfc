"""Input checks shared by the estimator wrappers."""
from __future__ import annotations

from .decoy import CountsTable, ExperimentConfig
from .errors import ValidationError
from .sim import DetectorModel


def check_counts(counts) -> CountsTable:
    if isinstance(counts, CountsTable):
        return counts
    if isinstance(counts, str) or hasattr(counts, "__fspath__"):
        return CountsTable.read_csv(counts)
    raise ValidationError(f"expected a CountsTable or a CSV path, got {type(counts).__name__}")


def check_experiment(cfg) -> ExperimentConfig:
    if cfg is None:
        return ExperimentConfig()
    if not isinstance(cfg, ExperimentConfig):
        raise ValidationError(f"expected an ExperimentConfig, got {type(cfg).__name__}")
    return cfg


def check_detector(d) -> DetectorModel:
    if d is None:
        return DetectorModel()
    if not isinstance(d, DetectorModel):
        raise ValidationError(f"expected a DetectorModel, got {type(d).__name__}")
    return d


def check_probability(name: str, value: float, *, open_low: bool = False) -> float:
    v = float(value)
    if not (0.0 < v <= 1.0 if open_low else 0.0 <= v <= 1.0):
        raise ValidationError(f"{name} must be a probability, got {value}")
    return v
