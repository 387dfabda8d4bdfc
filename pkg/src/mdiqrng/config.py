"""JSON run configuration with strict key checking.

Precedence is built-in defaults, then the config file, then command-line flags.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .decoy import ExperimentConfig
from .entropy import PREFACTORS
from .errors import ValidationError
from .sim import AFTERPULSE_MODELS, DetectorModel
from .sweeps import NONDECOY_MODES, SweepOptions
from .tomo import OptimizerSettings


@dataclass(frozen=True)
class ModelSettings:
    prefactor: str = "poisson"
    afterpulse_model: str = "mult"
    dark_coefficient: float = 1.0
    decoy: bool = True

    def __post_init__(self):
        if self.prefactor not in PREFACTORS:
            raise ValidationError(f"prefactor must be one of {PREFACTORS}")
        if self.afterpulse_model not in AFTERPULSE_MODELS:
            raise ValidationError(f"afterpulse_model must be one of {AFTERPULSE_MODELS}")


@dataclass(frozen=True)
class SearchSettings:
    mu_step: float = 0.01
    nu_step: float = 0.01
    fidelity_step: float = 0.05
    search_grid_points: int = 7
    n_jobs: int = 1

    def __post_init__(self):
        if min(self.mu_step, self.nu_step, self.fidelity_step) <= 0:
            raise ValidationError("search steps must be positive")


@dataclass(frozen=True)
class SweepSettings:
    """Loss sweep range (dB), intensity sweep range, and the fixed loss of the intensity sweep.

    Losses scale the detector efficiency: ``eta = detector.eta * 10**(-loss/10)``.
    """

    loss_start: float = 0.0
    loss_stop: float = 15.0
    loss_step: float = 1.0
    mu_start: float = 0.05
    mu_stop: float = 1.0
    mu_step: float = 0.05
    fixed_loss_db: float = 2.6
    mode: str = "entropy"
    optimize: bool = True
    nondecoy: str = "shared"

    def __post_init__(self):
        if self.mode not in ("entropy", "fidelity"):
            raise ValidationError("sweep mode must be 'entropy' or 'fidelity'")
        if self.nondecoy not in NONDECOY_MODES:
            raise ValidationError(f"nondecoy must be one of {NONDECOY_MODES}")
        if self.loss_step <= 0 or self.mu_step <= 0:
            raise ValidationError("sweep steps must be positive")
        if self.loss_stop < self.loss_start or self.mu_stop < self.mu_start:
            raise ValidationError("sweep ranges must be non-empty")

    @property
    def losses(self) -> list[float]:
        return inclusive_range(self.loss_start, self.loss_stop, self.loss_step)

    @property
    def mus(self) -> list[float]:
        return inclusive_range(self.mu_start, self.mu_stop, self.mu_step)


@dataclass(frozen=True)
class ExtractSettings:
    block_bits: int = 10**6
    eps_ext: float = 1e-10


@dataclass(frozen=True)
class StabilitySettings:
    seconds: int = 180
    rounds_per_second: float | None = None


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    detector: DetectorModel = field(default_factory=lambda: DetectorModel(e_prep=0.03))
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    search: SearchSettings = field(default_factory=SearchSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    extractor: ExtractSettings = field(default_factory=ExtractSettings)
    stability: StabilitySettings = field(default_factory=StabilitySettings)
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        sections = {f.name: f for f in fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        defaults = cls()
        kw = {}
        for name, value in data.items():
            if name == "seed":
                if not isinstance(value, int) or isinstance(value, bool):
                    raise ValidationError("seed must be an integer")
                kw[name] = value
                continue
            kw[name] = _merge(getattr(defaults, name), value, name)
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["experiment"]["eta_j"] = list(out["experiment"]["eta_j"])
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def with_section(self, name: str, **changes) -> "RunConfig":
        return replace(self, **{name: replace(getattr(self, name), **changes)})

    def sweep_options(self) -> SweepOptions:
        return SweepOptions(
            mode=self.sweep.mode,
            mu_step=self.search.mu_step,
            nu_step=self.search.nu_step,
            fidelity_step=self.search.fidelity_step,
            search_optimizer=OptimizerSettings(grid_points=self.search.search_grid_points, refine_starts=0),
            optimizer=self.optimizer,
            prefactor=self.model.prefactor,
            afterpulse_model=self.model.afterpulse_model,
            dark_coefficient=self.model.dark_coefficient,
            nondecoy=self.sweep.nondecoy,
            optimize=self.sweep.optimize,
        )


def _merge(default, value, where: str):
    """Overlay a (possibly partial) section onto its default instance."""
    if not isinstance(value, dict):
        raise ValidationError(f"config section {where!r} must be an object")
    names = {f.name for f in fields(default)}
    unknown = set(value) - names
    if unknown:
        raise ValidationError(f"unknown keys in {where!r}: {sorted(unknown)}")
    if "eta_j" in value and isinstance(value["eta_j"], list):
        value = {**value, "eta_j": tuple(value["eta_j"])}
    try:
        return replace(default, **value)
    except TypeError as exc:
        raise ValidationError(f"config section {where!r}: {exc}") from None


def inclusive_range(start: float, stop: float, step: float) -> list[float]:
    n = int(round((stop - start) / step))
    if start + n * step > stop + 1e-9:
        n -= 1
    return [round(start + i * step, 10) for i in range(n + 1)]
