"""Min-entropy certification and brute-force search over probe intensities."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

from joblib import Parallel, delayed

from .decoy import (
    DEFAULT_DARK_COEFF,
    CountsTable,
    ExperimentConfig,
    Intensity,
    ProbabilityBounds,
    click_probability_bounds,
    single_photon_bounds_decoy,
    single_photon_bounds_nondecoy,
)
from .errors import InfeasibleRegion, NoRandomness, ValidationError
from .sim import DetectorModel, expected_counts
from .tomo import (
    OptimizerSettings,
    ParamBounds,
    SimModel,
    min_fidelity,
    povm_parameter_bounds,
    simulated_povm,
)

PREFACTORS = ("poisson", "literal")
OBJECTIVES = ("entropy", "fidelity")


def nynz_sq_lower(b: ParamBounds) -> float:
    """Smallest ``ny**2 + nz**2`` over the ``(ny, nz)`` rectangle, capped at 1."""

    def closest_sq(lo, hi):
        if lo <= 0.0 <= hi:
            return 0.0
        return min(lo * lo, hi * hi)

    return min(1.0, closest_sq(b.ny_lower, b.ny_upper) + closest_sq(b.nz_lower, b.nz_upper))


def min_entropy_objective(a1_lower: float, nynz_sq: float, mu: float, prefactor: str = "poisson") -> float:
    """Min-entropy per pulse, ``-2 a1 w(mu) log2((1 + sqrt(1 - s)) / 2)``.

    ``w(mu)`` is the single-photon Poisson weight ``mu exp(-mu)`` by default;
    ``prefactor="literal"`` uses ``mu / exp(-mu)`` instead. ``nynz_sq`` is
    clamped into ``[0, 1]``.
    """
    if a1_lower < 0:
        raise ValidationError(f"a1_lower must be non-negative, got {a1_lower}")
    if mu <= 0:
        raise ValidationError(f"mu must be positive, got {mu}")
    if prefactor == "poisson":
        weight = mu * math.exp(-mu)
    elif prefactor == "literal":
        weight = mu / math.exp(-mu)
    else:
        raise ValidationError(f"unknown prefactor {prefactor!r}")
    s = min(1.0, max(0.0, nynz_sq))
    h = -2.0 * a1_lower * weight * math.log2((1.0 + math.sqrt(1.0 - s)) / 2.0)
    return max(0.0, h)


def randomness_consumption(tomography_fraction: float, clock_hz: float) -> float:
    """Bits/s spent choosing probes: ``(3 + log2(1/q)) f q``."""
    q = tomography_fraction
    return (3.0 + math.log2(1.0 / q)) * clock_hz * q


@dataclass(frozen=True)
class CertReport:
    mu: float
    nu: float
    decoy: bool
    prefactor: str
    probability_bounds: ProbabilityBounds
    param_bounds: ParamBounds | None
    a1_lower: float
    nynz_sq_lower: float
    h_min: float
    bit_rate: float
    fidelity_lower: float | None
    epsilon_per_use: float
    clock_hz: float
    randomness_consumption_bps: float
    optimizer: dict | None = None
    flags: tuple[str, ...] = field(default=())

    @property
    def epsilon_total(self) -> float:
        return self.epsilon_per_use * self.probability_bounds.chernoff_uses

    def to_dict(self) -> dict:
        return {
            "h_min_bits_per_pulse": self.h_min,
            "bit_rate_hz": self.bit_rate,
            "mu": self.mu,
            "nu": self.nu,
            "decoy": self.decoy,
            "prefactor": self.prefactor,
            "a1_lower": self.a1_lower,
            "nynz_sq_lower": self.nynz_sq_lower,
            "fidelity_lower": self.fidelity_lower,
            "epsilon_per_use": self.epsilon_per_use,
            "chernoff_uses": self.probability_bounds.chernoff_uses,
            "epsilon_total": self.epsilon_total,
            "clock_hz": self.clock_hz,
            "randomness_consumption_bps": self.randomness_consumption_bps,
            "optimizer": self.optimizer,
            "flags": list(self.flags),
            "bounds": {
                "probes": self.probability_bounds.to_dict(),
                "params": None if self.param_bounds is None else self.param_bounds.to_dict(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def certify(
    counts: CountsTable,
    cfg: ExperimentConfig,
    p_d: float,
    *,
    decoy: bool = True,
    prefactor: str = "poisson",
    dark_coefficient: float = DEFAULT_DARK_COEFF,
    sim_model: SimModel | None = None,
    optimizer: OptimizerSettings = OptimizerSettings(),
) -> CertReport:
    """Certified min-entropy (and optionally fidelity) lower bound from counts.

    ``decoy=False`` uses the signal counts alone. A zero ``a1`` lower bound or an
    empty parameter box yields ``h_min = 0`` with an explanatory flag.
    """
    if prefactor not in PREFACTORS:
        raise ValidationError(f"unknown prefactor {prefactor!r}")
    flags: list[str] = []
    if decoy:
        pb = click_probability_bounds(counts, cfg)
        p1 = single_photon_bounds_decoy(pb, cfg, p_d, dark_coefficient, flags)
        flags.append("decoy_bounds_use_decoy_counts")
    else:
        pb = click_probability_bounds(counts, cfg, labels=(Intensity.signal,))
        p1 = single_photon_bounds_nondecoy(pb, cfg.mu, p_d, flags)
    pb = pb.with_single_photon(p1, flags)

    params = None
    a1_lo = 0.0
    s_lo = 0.0
    h = 0.0
    fid = None
    out_flags = list(pb.flags)
    try:
        params = povm_parameter_bounds(p1)
    except NoRandomness as exc:
        out_flags.append(f"no_randomness: {exc}")
    if params is not None:
        a1_lo = params.a1_lower
        s_lo = nynz_sq_lower(params)
        h = min_entropy_objective(a1_lo, s_lo, cfg.mu, prefactor)
        if sim_model is not None:
            try:
                fid = min_fidelity(params, simulated_povm(sim_model), optimizer)
            except InfeasibleRegion as exc:
                out_flags.append(f"infeasible_region: {exc}")
                h = 0.0
    if h == 0.0:
        out_flags.append("zero_entropy")
    return CertReport(
        mu=cfg.mu,
        nu=cfg.nu if decoy else 0.0,
        decoy=decoy,
        prefactor=prefactor,
        probability_bounds=replace(pb, flags=()),
        param_bounds=params,
        a1_lower=a1_lo,
        nynz_sq_lower=s_lo,
        h_min=h,
        bit_rate=h * cfg.clock_hz,
        fidelity_lower=fid,
        epsilon_per_use=cfg.epsilon,
        clock_hz=cfg.clock_hz,
        randomness_consumption_bps=randomness_consumption(cfg.tomography_fraction, cfg.clock_hz),
        optimizer=None if fid is None else asdict(optimizer),
        flags=tuple(out_flags),
    )


@dataclass(frozen=True)
class IntensitySearchResult:
    mu_star: float
    nu_star: float
    h_star: float
    objective: str
    trace: tuple[tuple[float, float, float], ...]

    @property
    def is_zero(self) -> bool:
        return self.h_star <= 0.0

    def to_dict(self, include_trace: bool = False) -> dict:
        out = {
            "mu_star": self.mu_star,
            "nu_star": self.nu_star,
            "h_star": self.h_star,
            "objective": self.objective,
            "zero_result": self.is_zero,
            "evaluated_points": len(self.trace),
        }
        if include_trace:
            out["trace"] = [list(t) for t in self.trace]
        return out


def intensity_lattice(mu_step: float, nu_step: float, decoy: bool = True) -> list[tuple[float, float]]:
    """All ``(mu, nu)`` lattice points with ``0 <= nu < mu <= 1``, ordered by mu then nu.

    Without decoys only ``nu = 0`` is used.
    """
    if mu_step <= 0 or nu_step <= 0:
        raise ValidationError("grid steps must be positive")
    n_mu = int(math.floor(1.0 / mu_step + 1e-9))
    points = []
    for i in range(1, n_mu + 1):
        mu = round(i * mu_step, 12)
        if not decoy:
            points.append((mu, 0.0))
            continue
        k = 0
        while True:
            nu = round(k * nu_step, 12)
            if nu >= mu - 1e-12:
                break
            points.append((mu, nu))
            k += 1
    return points


def evaluate_intensities(
    mu: float,
    nu: float,
    detector: DetectorModel,
    template: ExperimentConfig,
    *,
    objective: str = "entropy",
    decoy: bool = True,
    prefactor: str = "poisson",
    afterpulse_model: str = "mult",
    dark_coefficient: float = DEFAULT_DARK_COEFF,
    signal_only: bool = False,
    optimizer: OptimizerSettings = OptimizerSettings(),
) -> float:
    """Objective value of the certification pipeline on expectation counts at ``(mu, nu)``.

    ``signal_only`` simulates a run without decoy rounds (all N rounds signal);
    it only makes sense with ``decoy=False``.
    """
    if decoy and nu <= 0.0:
        return 0.0
    cfg = replace(template, mu=mu, nu=nu)
    counts = expected_counts(cfg, detector, afterpulse_model, signal_only=signal_only)
    sim = SimModel(mu, detector.eta) if objective == "fidelity" else None
    report = certify(
        counts,
        cfg,
        detector.p_d,
        decoy=decoy,
        prefactor=prefactor,
        dark_coefficient=dark_coefficient,
        sim_model=sim,
        optimizer=optimizer,
    )
    if objective == "fidelity":
        return report.fidelity_lower or 0.0
    return report.h_min


def optimize_intensities(
    detector: DetectorModel,
    template: ExperimentConfig,
    mu_step: float = 0.01,
    nu_step: float = 0.01,
    *,
    points: list[tuple[float, float]] | None = None,
    n_jobs: int | None = None,
    **kwargs,
) -> IntensitySearchResult:
    """Brute-force search of ``(mu, nu)`` maximizing the certified objective.

    Ties go to the smaller ``mu``, then the smaller ``nu``. ``points`` overrides
    the lattice; remaining keyword arguments go to :func:`evaluate_intensities`.
    """
    objective = kwargs.get("objective", "entropy")
    if objective not in OBJECTIVES:
        raise ValidationError(f"unknown objective {objective!r}")
    if points is None:
        points = intensity_lattice(mu_step, nu_step, kwargs.get("decoy", True))
    points = sorted(points)
    if not points:
        raise ValidationError("intensity lattice is empty")
    if n_jobs in (None, 1):
        values = [evaluate_intensities(mu, nu, detector, template, **kwargs) for mu, nu in points]
    else:
        values = Parallel(n_jobs=n_jobs)(
            delayed(evaluate_intensities)(mu, nu, detector, template, **kwargs) for mu, nu in points
        )
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    trace = tuple((mu, nu, float(v)) for (mu, nu), v in zip(points, values))
    mu_s, nu_s = points[best]
    return IntensitySearchResult(mu_s, nu_s, float(values[best]), objective, trace)
