"""Decoy-state estimation of single-photon click probabilities.

Observed click counts are turned into expectation intervals with a Chernoff
bound, divided by the trial counts to give click-probability intervals for the
signal and decoy intensities, and finally combined into intervals for the
single-photon click probability of every probe.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

from .errors import (
    CountsParseError,
    DecoyUnavailable,
    DegenerateStatistics,
    IncompleteData,
    ValidationError,
)
from .qmath import PROBES, ProbeId

# dark-count coefficient in the decoy lower bound: 1/2 as used after finite-size
# correction, 1 as in the asymptotic derivation
DARK_COEFF_HALF = 0.5
DARK_COEFF_FULL = 1.0
DEFAULT_DARK_COEFF = DARK_COEFF_FULL

CSV_HEADER = ("probe", "intensity", "trials", "clicks")


class Intensity(enum.Enum):
    signal = "signal"
    decoy = "decoy"


INTENSITIES = (Intensity.signal, Intensity.decoy)


class Interval(NamedTuple):
    lower: float
    upper: float


class ExpectationBounds(NamedTuple):
    lower: float
    upper: float
    degenerate: bool


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one tomography run.

    Attributes:
        mu: signal mean photon number.
        nu: decoy mean photon number, ``0 <= nu < mu <= 1``.
        n_rounds: total number of test rounds N.
        eta_j: proportion of rounds spent on each probe (Z0, Z1, Xplus, Yplus).
        p_s: probability of choosing the signal intensity.
        epsilon: failure probability of each Chernoff-bound use.
        clock_hz: system repetition rate, used to convert bits/pulse to bits/s.
        tomography_fraction: fraction of pulses spent in tomography mode.
    """

    mu: float = 0.45
    nu: float = 0.33
    n_rounds: float = 5.625e8
    eta_j: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    p_s: float = 0.5
    epsilon: float = 1e-10
    clock_hz: float = 312.5e6
    tomography_fraction: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "eta_j", tuple(float(e) for e in self.eta_j))
        if not 0.0 <= self.nu < self.mu <= 1.0:
            raise ValidationError(f"need 0 <= nu < mu <= 1, got mu={self.mu}, nu={self.nu}")
        if len(self.eta_j) != 4 or min(self.eta_j) <= 0:
            raise ValidationError("eta_j must hold four positive proportions")
        if abs(sum(self.eta_j) - 1.0) > 1e-12:
            raise ValidationError(f"eta_j must sum to 1, got {sum(self.eta_j)}")
        if not 0.0 < self.p_s < 1.0:
            raise ValidationError(f"p_s must lie in (0, 1), got {self.p_s}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.n_rounds <= 0 or self.clock_hz <= 0:
            raise ValidationError("n_rounds and clock_hz must be positive")
        if not 0.0 < self.tomography_fraction <= 1.0:
            raise ValidationError("tomography_fraction must lie in (0, 1]")

    def trials(self, j: ProbeId, label: Intensity) -> float:
        share = self.p_s if label is Intensity.signal else 1.0 - self.p_s
        return self.n_rounds * self.eta_j[j.index] * share

    def intensity(self, label: Intensity) -> float:
        return self.mu if label is Intensity.signal else self.nu


@dataclass(frozen=True)
class Cell:
    trials: int
    clicks: int


@dataclass(frozen=True)
class CountsTable:
    """Click counts per (probe, intensity) cell."""

    cells: Mapping[tuple[ProbeId, Intensity], Cell]

    def __post_init__(self):
        cells = {}
        for (j, label), cell in dict(self.cells).items():
            j, label = ProbeId(j), Intensity(label)
            t, m = int(cell.trials), int(cell.clicks)
            if t < 0 or m < 0 or m > t:
                raise ValidationError(
                    f"cell {j.value}/{label.value}: need 0 <= clicks <= trials, got {m}/{t}"
                )
            cells[(j, label)] = Cell(t, m)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_arrays(cls, trials, clicks) -> "CountsTable":
        """Build from two 4x2 nested sequences indexed [probe][intensity]."""
        cells = {}
        for j in PROBES:
            for k, label in enumerate(INTENSITIES):
                cells[(j, label)] = Cell(int(trials[j.index][k]), int(clicks[j.index][k]))
        return cls(cells)

    def cell(self, j: ProbeId, label: Intensity) -> Cell:
        try:
            return self.cells[(j, label)]
        except KeyError:
            raise IncompleteData(f"missing counts for {j.value}/{label.value}") from None

    def require_complete(self, labels: Iterable[Intensity] = INTENSITIES) -> None:
        for j in PROBES:
            for label in labels:
                self.cell(j, label)

    def scaled(self, factor: int) -> "CountsTable":
        return CountsTable(
            {k: Cell(c.trials * factor, c.clicks * factor) for k, c in self.cells.items()}
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for j in PROBES:
            for label in INTENSITIES:
                if (j, label) in self.cells:
                    c = self.cells[(j, label)]
                    w.writerow((j.value, label.value, c.trials, c.clicks))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CountsTable":
        """Parse the ``probe,intensity,trials,clicks`` format (exactly 8 data rows)."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
            raise CountsParseError(f"header must be {','.join(CSV_HEADER)}", line=1)
        cells = {}
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != 4:
                raise CountsParseError(f"expected 4 fields, got {len(row)}", line=lineno)
            probe, label, trials, clicks = (f.strip() for f in row)
            try:
                key = (ProbeId(probe), Intensity(label))
            except ValueError:
                raise CountsParseError(f"unknown probe/intensity {probe}/{label}", line=lineno) from None
            try:
                t, m = int(trials), int(clicks)
            except ValueError:
                raise CountsParseError("trials and clicks must be integers", line=lineno) from None
            if key in cells:
                raise CountsParseError(f"duplicate row for {probe}/{label}", line=lineno)
            if t < 0 or m < 0 or m > t:
                raise CountsParseError(f"need 0 <= clicks <= trials, got {m}/{t}", line=lineno)
            cells[key] = Cell(t, m)
        if len(cells) != 8:
            raise CountsParseError(f"expected 8 data rows, got {len(cells)}")
        return cls(cells)

    @classmethod
    def read_csv(cls, path) -> "CountsTable":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class ProbeBounds:
    mu_lower: float
    mu_upper: float
    nu_lower: float
    nu_upper: float
    p1_lower: float | None = None
    p1_upper: float | None = None

    @property
    def signal(self) -> Interval:
        return Interval(self.mu_lower, self.mu_upper)

    @property
    def decoy(self) -> Interval:
        return Interval(self.nu_lower, self.nu_upper)

    @property
    def single_photon(self) -> Interval | None:
        if self.p1_lower is None:
            return None
        return Interval(self.p1_lower, self.p1_upper)


@dataclass(frozen=True)
class ProbabilityBounds:
    """Click-probability intervals for every probe plus any clamp/degeneracy flags."""

    probes: Mapping[ProbeId, ProbeBounds]
    flags: tuple[str, ...] = field(default=())
    chernoff_uses: int = 0

    def __getitem__(self, j: ProbeId) -> ProbeBounds:
        return self.probes[j]

    def with_single_photon(self, p1: Mapping[ProbeId, Interval], flags=()) -> "ProbabilityBounds":
        probes = {
            j: replace(b, p1_lower=p1[j].lower, p1_upper=p1[j].upper) for j, b in self.probes.items()
        }
        return replace(self, probes=probes, flags=self.flags + tuple(flags))

    def to_dict(self) -> dict:
        out = {}
        for j in PROBES:
            b = self.probes[j]
            out[j.value] = {
                "p_mu": [b.mu_lower, b.mu_upper],
                "p_nu": [b.nu_lower, b.nu_upper],
                "p_1": None if b.p1_lower is None else [b.p1_lower, b.p1_upper],
            }
        return out


def _ln_half_eps(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1), got {epsilon}")
    return math.log(epsilon / 2.0)


def chernoff_delta(x: float, epsilon: float) -> float:
    """Relative half-width of the Chernoff interval for an observed count ``x``.

    Raises:
        DegenerateStatistics: if ``x <= -ln(epsilon / 2)``, where the formula's
            denominator is not positive.
    """
    lg = _ln_half_eps(epsilon)
    if x + lg <= 0:
        raise DegenerateStatistics(
            f"count {x} is below the Chernoff threshold {-lg:.4g} at epsilon={epsilon}"
        )
    return (-3.0 * lg + math.sqrt(-8.0 * x * lg + lg * lg)) / (2.0 * (x + lg))


def expectation_bounds(m: float, epsilon: float, trials: float | None = None) -> ExpectationBounds:
    """Interval ``[m/(1+delta), m/(1-delta)]`` for the expectation of a count ``m``.

    When the interval does not exist (tiny ``m`` or ``delta >= 1``) the trivial
    interval ``[0, trials]`` is returned with ``degenerate=True``; ``trials``
    defaults to infinity.
    """
    if m < 0:
        raise ValidationError(f"count must be non-negative, got {m}")
    fallback = ExpectationBounds(0.0, math.inf if trials is None else float(trials), True)
    try:
        d = chernoff_delta(m, epsilon)
    except DegenerateStatistics:
        return fallback
    if d >= 1.0:
        return fallback
    return ExpectationBounds(m / (1.0 + d), m / (1.0 - d), False)


def _clamp01(x: float) -> tuple[float, bool]:
    if x < 0.0:
        return 0.0, True
    if x > 1.0:
        return 1.0, True
    return x, False


def _cell_probability(cell: Cell, epsilon: float) -> tuple[Interval, bool, int]:
    """Probability interval for one cell, the degeneracy flag and the clamp count."""
    if cell.trials == 0:
        return Interval(0.0, 1.0), True, 0
    e = expectation_bounds(cell.clicks, epsilon, trials=cell.trials)
    lo, c1 = _clamp01(e.lower / cell.trials)
    hi, c2 = _clamp01(e.upper / cell.trials)
    return Interval(lo, hi), e.degenerate, int(c1) + int(c2)


def click_probability_bounds(
    counts: CountsTable,
    cfg: ExperimentConfig,
    labels: Iterable[Intensity] = INTENSITIES,
) -> ProbabilityBounds:
    """Signal and decoy click-probability intervals for every probe.

    Each interval is the Chernoff expectation interval divided by the cell's
    trial count (``N eta_j p_s`` for signal, ``N eta_j (1 - p_s)`` for decoy in
    simulated data). Decoy intervals are built from decoy counts. Cells whose
    label is not in ``labels`` are left at the vacuous interval ``[0, 1]``.
    """
    labels = tuple(labels)
    counts.require_complete(labels)
    flags = []
    uses = 0
    probes = {}
    for j in PROBES:
        iv = {}
        for label in INTENSITIES:
            if label not in labels:
                iv[label] = Interval(0.0, 1.0)
                continue
            iv[label], degenerate, clamps = _cell_probability(counts.cell(j, label), cfg.epsilon)
            uses += 2
            if degenerate:
                flags.append(f"degenerate_statistics:{j.value}:{label.value}")
            if clamps:
                flags.append(f"clamped:{j.value}:{label.value}")
        s, d = iv[Intensity.signal], iv[Intensity.decoy]
        probes[j] = ProbeBounds(s.lower, s.upper, d.lower, d.upper)
    return ProbabilityBounds(probes, tuple(flags), uses)


def _finalize(lo: float, hi: float, j: ProbeId, flags: list) -> Interval:
    lo, c1 = _clamp01(lo)
    hi, c2 = _clamp01(hi)
    if c1 or c2:
        flags.append(f"clamped:{j.value}:single_photon")
    if lo > hi:
        flags.append(f"crossed_bounds:{j.value}")
        lo = hi
    return Interval(lo, hi)


def single_photon_bounds_decoy(
    pb: ProbabilityBounds,
    cfg: ExperimentConfig,
    p_d: float,
    dark_coefficient: float = DEFAULT_DARK_COEFF,
    flags: list | None = None,
) -> dict[ProbeId, Interval]:
    """Single-photon click-probability interval per probe from one decoy intensity.

    ``dark_coefficient`` multiplies ``(mu^2 - nu^2)/mu^2 * p_d`` in the lower
    bound. The default 1 is the full vacuum-yield term and keeps the interval
    sound when dark counts dominate a probe (e.g. Z0); 1/2 is available for
    comparison but can push the lower bound above the true value.
    """
    mu, nu = cfg.mu, cfg.nu
    if nu <= 0.0:
        raise DecoyUnavailable("decoy intensity is zero; use single_photon_bounds_nondecoy")
    flags = [] if flags is None else flags
    pref = mu / (mu * nu - nu * nu)
    ratio = nu * nu / (mu * mu)
    dark = dark_coefficient * (mu * mu - nu * nu) / (mu * mu) * p_d
    out = {}
    for j in PROBES:
        b = pb[j]
        lo = pref * (b.nu_lower * math.exp(nu) - b.mu_upper * math.exp(mu) * ratio - dark)
        hi = b.nu_upper / (nu * math.exp(-nu))
        out[j] = _finalize(lo, hi, j, flags)
    return out


def single_photon_bounds_nondecoy(
    pb: ProbabilityBounds, mu: float, p_d: float, flags: list | None = None
) -> dict[ProbeId, Interval]:
    """Single-photon intervals using the signal intensity only.

    Every multi-photon event is assumed to click, which is what makes this
    interval looser than the decoy one.
    """
    if mu <= 0.0:
        raise ValidationError(f"mu must be positive, got {mu}")
    flags = [] if flags is None else flags
    vac = math.exp(-mu)
    single = mu * vac
    multi = -math.expm1(-mu) - single
    out = {}
    for j in PROBES:
        b = pb[j]
        lo = max(0.0, (b.mu_lower - vac * p_d - multi) / single)
        hi = min(1.0, b.mu_upper / single)
        out[j] = _finalize(lo, hi, j, flags)
    return out
