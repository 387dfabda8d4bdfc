"""Click statistics of phase-randomized time-bin probes on a threshold detector.

The detector model has an efficiency, a dark-count probability per gate, an
afterpulse-induced excess of '1' outcomes, and a state-preparation error that
swaps a probe for its orthogonal partner with a fixed probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decoy import INTENSITIES, Cell, CountsTable, ExperimentConfig, Intensity
from .errors import ValidationError
from .qmath import PROBES, ProbeId

AFTERPULSE_MODELS = ("mult", "add")
DEFAULT_BASE_EFFICIENCY = 0.55


@dataclass(frozen=True)
class DetectorModel:
    eta: float = 0.55
    p_d: float = 8e-5
    eps_afterpulse: float = 0.0
    e_prep: float = 0.0

    def __post_init__(self):
        for name in ("eta", "p_d", "eps_afterpulse", "e_prep"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class SimMode:
    """``seed=None`` means exact expectations; otherwise binomial sampling.

    A seed may be an int or a tuple of ints (e.g. ``(master_seed, second)``).
    """

    seed: int | tuple[int, ...] | None = None

    @classmethod
    def expectation(cls) -> "SimMode":
        return cls(None)

    @classmethod
    def sampled(cls, seed) -> "SimMode":
        return cls(tuple(int(v) for v in seed) if isinstance(seed, (tuple, list)) else int(seed))

    @property
    def is_sampled(self) -> bool:
        return self.seed is not None


def loss_to_eta(loss_db: float, eta0: float = DEFAULT_BASE_EFFICIENCY) -> float:
    return eta0 * 10.0 ** (-loss_db / 10.0)


def click_probability_bloch(r, intensity: float, d: DetectorModel) -> float:
    """Click probability for a pure time-bin probe with Bloch vector ``r``.

    The fraction ``(1 - r_z)/2`` of the pulse sits in the time bin read as '1'.
    """
    if intensity < 0:
        raise ValidationError(f"intensity must be non-negative, got {intensity}")
    weight = 0.5 * (1.0 - float(r[2]))
    # 1 - (1 - p_d) exp(-x) without cancellation for small p_d and x
    p = -math.expm1(math.log1p(-d.p_d) - d.eta * intensity * weight) if d.p_d < 1.0 else 1.0
    return min(1.0, max(0.0, p))


def click_probability(j: ProbeId, intensity: float, d: DetectorModel) -> float:
    return click_probability_bloch(j.bloch, intensity, d)


def apply_prep_error(j: ProbeId, e_prep: float) -> list[tuple[np.ndarray, float]]:
    """Prepared mixture as ``[(bloch, weight), ...]``; the error flips to the orthogonal state."""
    if not 0.0 <= e_prep <= 0.5:
        raise ValidationError(f"e_prep must lie in [0, 0.5], got {e_prep}")
    r = j.bloch
    if e_prep == 0.0:
        return [(r, 1.0)]
    return [(r, 1.0 - e_prep), (-r, e_prep)]


def apply_afterpulse(p: float, eps_ap: float, model: str = "mult", mean_click: float | None = None) -> float:
    """Inflate the '1' probability by afterpulsing.

    ``mult`` scales by ``1 + eps_ap``; ``add`` adds ``eps_ap * mean_click`` where
    ``mean_click`` is the average click probability over the probe set.
    """
    if model == "mult":
        return min(1.0, p * (1.0 + eps_ap))
    if model == "add":
        if mean_click is None:
            raise ValidationError("additive afterpulse model needs mean_click")
        return min(1.0, p + eps_ap * mean_click)
    raise ValidationError(f"unknown afterpulse model {model!r}")


def _mixture_click(j: ProbeId, intensity: float, d: DetectorModel) -> float:
    return sum(w * click_probability_bloch(r, intensity, d) for r, w in apply_prep_error(j, d.e_prep))


def cell_probabilities(intensity: float, d: DetectorModel, afterpulse_model: str = "mult") -> dict[ProbeId, float]:
    """Click probability of every probe at one intensity, after all device effects."""
    raw = {j: _mixture_click(j, intensity, d) for j in PROBES}
    mean = sum(raw.values()) / len(raw)
    return {j: apply_afterpulse(p, d.eps_afterpulse, afterpulse_model, mean) for j, p in raw.items()}


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _trials(cfg: ExperimentConfig, j: ProbeId, label: Intensity, signal_only: bool) -> float:
    if signal_only:
        return cfg.n_rounds * cfg.eta_j[j.index] if label is Intensity.signal else 0.0
    return cfg.trials(j, label)


def expected_counts(
    cfg: ExperimentConfig,
    d: DetectorModel,
    afterpulse_model: str = "mult",
    signal_only: bool = False,
) -> CountsTable:
    """Counts equal to ``trials * p`` for every cell, rounded half up.

    With ``signal_only`` every round uses the signal intensity, as in a
    tomography run without decoys; decoy cells then have zero trials.
    """
    cells = {}
    for label in INTENSITIES:
        probs = cell_probabilities(cfg.intensity(label), d, afterpulse_model)
        for j in PROBES:
            t = _trials(cfg, j, label, signal_only)
            cells[(j, label)] = Cell(_round_half_up(t), min(_round_half_up(t * probs[j]), _round_half_up(t)))
    return CountsTable(cells)


def cell_rng(seed, j: ProbeId, label: Intensity) -> np.random.Generator:
    """Independent PCG64 stream for one cell, keyed by (seed, probe, intensity)."""
    ss = np.random.SeedSequence(seed, spawn_key=(j.index, INTENSITIES.index(label)))
    return np.random.Generator(np.random.PCG64(ss))


def sample_counts(
    cfg: ExperimentConfig,
    d: DetectorModel,
    mode: SimMode,
    afterpulse_model: str = "mult",
    signal_only: bool = False,
) -> CountsTable:
    """Binomially sampled counts; expectation mode delegates to :func:`expected_counts`."""
    if not mode.is_sampled:
        return expected_counts(cfg, d, afterpulse_model, signal_only)
    cells = {}
    for label in INTENSITIES:
        probs = cell_probabilities(cfg.intensity(label), d, afterpulse_model)
        for j in PROBES:
            t = _round_half_up(_trials(cfg, j, label, signal_only))
            m = int(cell_rng(mode.seed, j, label).binomial(t, probs[j])) if t else 0
            cells[(j, label)] = Cell(t, m)
    return CountsTable(cells)
