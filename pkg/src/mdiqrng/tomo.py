"""POVM parameter bounds from probe statistics and the fidelity certificate."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np
from scipy.optimize import minimize

from .decoy import Interval
from .errors import InfeasibleRegion, NoRandomness, ValidationError
from .qmath import (
    IDENTITY,
    PAULI_Z,
    Povm,
    PovmParams,
    ProbeId,
    bloch_vector,
    params_fidelity,
)

FEASIBLE_TOL = 1e-12
_PARAM_NAMES = ("a1", "nx", "ny", "nz")


@dataclass(frozen=True)
class ParamBounds:
    a1_lower: float
    a1_upper: float
    nx_lower: float
    nx_upper: float
    ny_lower: float
    ny_upper: float
    nz_lower: float
    nz_upper: float

    def __post_init__(self):
        for name in _PARAM_NAMES:
            lo, hi = self.interval(name)
            if not lo <= hi:
                raise ValidationError(f"{name}: lower bound {lo} exceeds upper bound {hi}")

    def interval(self, name: str) -> Interval:
        return Interval(getattr(self, f"{name}_lower"), getattr(self, f"{name}_upper"))

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.interval(k).lower for k in _PARAM_NAMES])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.interval(k).upper for k in _PARAM_NAMES])

    @classmethod
    def from_arrays(cls, lower, upper) -> "ParamBounds":
        kw = {}
        for name, lo, hi in zip(_PARAM_NAMES, lower, upper):
            kw[f"{name}_lower"] = float(lo)
            kw[f"{name}_upper"] = float(hi)
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimModel:
    """Threshold detector seen as a lossy channel of transmittance ``eta``."""

    mu: float
    eta: float
    p_d: float = 0.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValidationError(f"mu must be positive, got {self.mu}")
        if not 0.0 < self.eta <= 1.0:
            raise ValidationError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0.0 <= self.p_d < 1.0:
            raise ValidationError(f"p_d must lie in [0, 1), got {self.p_d}")


@dataclass(frozen=True)
class OptimizerSettings:
    """Grid-plus-simplex minimizer settings for the fidelity certificate."""

    grid_points: int = 21
    refine_starts: int = 10
    refine_iterations: int = 200
    safety_margin: float = 1e-4

    def __post_init__(self):
        if self.grid_points < 2:
            raise ValidationError("grid_points must be at least 2")
        if self.refine_starts < 0 or self.refine_iterations < 0:
            raise ValidationError("refinement counts must be non-negative")
        if not 0.0 <= self.safety_margin < 1.0:
            raise ValidationError("safety_margin must lie in [0, 1)")


@dataclass(frozen=True)
class FidelitySearch:
    value: float
    raw_minimum: float
    argmin: PovmParams | None
    evaluations: int


def povm_parameter_bounds(p1: Mapping[ProbeId, Interval]) -> ParamBounds:
    """Box on ``(a1, nx, ny, nz)`` implied by single-photon probe intervals.

    Raises:
        NoRandomness: if the lower bound on ``a1`` is not positive.
    """
    z0, z1, xp, yp = (p1[j] for j in (ProbeId.Z0, ProbeId.Z1, ProbeId.Xplus, ProbeId.Yplus))
    a1_lo = 0.5 * (z0.lower + z1.lower)
    a1_hi = 0.5 * (z0.upper + z1.upper)
    if a1_lo <= 0.0:
        raise NoRandomness("lower bound on a1 is zero; the feasible region touches a1 = 0")

    def clamp(v):
        return min(1.0, max(-1.0, v))

    # nz = (p_Z0 - p_Z1) / (p_Z0 + p_Z1) rises with p_Z0 and falls with p_Z1, so its range
    # over the probe rectangle is attained at opposite corners
    nz_lo = (z0.lower - z1.upper) / (z0.lower + z1.upper)
    nz_hi = (z0.upper - z1.lower) / (z0.upper + z1.lower)

    return ParamBounds(
        a1_lower=a1_lo,
        a1_upper=a1_hi,
        nx_lower=clamp(xp.lower / a1_hi - 1.0),
        nx_upper=clamp(xp.upper / a1_lo - 1.0),
        ny_lower=clamp(yp.lower / a1_hi - 1.0),
        ny_upper=clamp(yp.upper / a1_lo - 1.0),
        nz_lower=clamp(nz_lo),
        nz_upper=clamp(nz_hi),
    )


def simulated_povm(m: SimModel) -> Povm:
    """Reference POVM of a lossy perfect detector; no-click and double clicks read as 0.

    A non-zero ``m.p_d`` adds an independent dark click to each time bin.
    """
    q = 1.0 - (1.0 - m.p_d) * math.exp(-m.mu * m.eta / 2.0)
    p0 = (1.0 - q) ** 2
    p1 = 2.0 * q * (1.0 - q)
    p2 = q * q
    one = 0.5 * (IDENTITY - PAULI_Z)
    lambda1 = p1 * one
    lambda0 = p1 * (IDENTITY - one) + (p0 + p2) * IDENTITY
    return Povm(lambda0, lambda1)


def _radius(a1: float) -> float:
    # |n| bound from PSD-ness of both elements
    return min(1.0, (1.0 - a1) / a1)


def feasible(p: PovmParams, b: ParamBounds) -> bool:
    vals = (p.a1,) + tuple(p.n)
    for name, v in zip(_PARAM_NAMES, vals):
        lo, hi = b.interval(name)
        if v < lo - FEASIBLE_TOL or v > hi + FEASIBLE_TOL:
            return False
    return p.norm <= _radius(p.a1) + FEASIBLE_TOL


def _closest_norm(lo, hi) -> float:
    return math.sqrt(sum(min(max(0.0, l), h) ** 2 for l, h in zip(lo, hi)))


def region_is_empty(b: ParamBounds) -> bool:
    if b.a1_upper <= 0.0 or b.a1_lower >= 1.0:
        return True
    a1 = max(b.a1_lower, 1e-300)
    return _closest_norm(b.lower[1:], b.upper[1:]) > _radius(a1) + FEASIBLE_TOL


def _project_n(n, lo, hi, radius, iters=100):
    """Euclidean projection of ``n`` onto box ``[lo, hi]`` intersected with a ball (Dykstra)."""
    x = list(n)
    p = [0.0, 0.0, 0.0]
    q = [0.0, 0.0, 0.0]
    for _ in range(iters):
        y = [min(max(x[i] + p[i], lo[i]), hi[i]) for i in range(3)]
        p = [x[i] + p[i] - y[i] for i in range(3)]
        z = [y[i] + q[i] for i in range(3)]
        nz = math.sqrt(z[0] ** 2 + z[1] ** 2 + z[2] ** 2)
        xn = z if nz <= radius else [radius * v / nz for v in z]
        q = [y[i] + q[i] - xn[i] for i in range(3)]
        if max(abs(xn[i] - x[i]) for i in range(3)) < 1e-15:
            x = xn
            break
        x = xn
    return [min(max(x[i], lo[i]), hi[i]) for i in range(3)]


def fidelity_search(b: ParamBounds, sim: Povm, opt: OptimizerSettings = OptimizerSettings()) -> FidelitySearch:
    """Minimize the POVM fidelity to ``sim`` over the feasible part of ``b``.

    A uniform grid over the four-parameter box is evaluated first (infeasible
    lattice points are skipped), then Nelder-Mead runs from the best grid
    points on a projected objective. The reported value is the smallest
    fidelity found at a feasible point minus ``opt.safety_margin``.
    """
    if region_is_empty(b):
        raise InfeasibleRegion("parameter box does not intersect the physical region")
    s0 = bloch_vector(sim.lambda0)
    s1 = bloch_vector(sim.lambda1)
    lo, hi = b.lower, b.upper
    lo[0] = max(lo[0], 1e-15)
    hi[0] = min(hi[0], 1.0 - 1e-15)

    axes = [np.linspace(l, h, opt.grid_points) for l, h in zip(lo, hi)]
    a1g, nxg, nyg, nzg = np.meshgrid(*axes, indexing="ij")
    a1g = a1g.ravel()
    ng = np.stack([nxg.ravel(), nyg.ravel(), nzg.ravel()], axis=-1)
    radius = np.minimum(1.0, (1.0 - a1g) / a1g)
    ok = np.linalg.norm(ng, axis=-1) <= radius + FEASIBLE_TOL
    evaluations = int(ok.sum())

    best_val = math.inf
    best_x = None
    starts = []
    if evaluations:
        a1f, nf = a1g[ok], ng[ok]
        vals = params_fidelity(a1f, nf, s0, s1)
        k = min(opt.refine_starts, vals.size)
        order = np.argsort(vals, kind="stable")
        best_val = float(vals[order[0]])
        best_x = np.concatenate([[a1f[order[0]]], nf[order[0]]])
        starts = [np.concatenate([[a1f[i]], nf[i]]) for i in order[:k]]
    else:
        centre = 0.5 * (lo + hi)
        starts = [centre] if opt.refine_starts else []

    width = hi - lo
    free = width > 0

    def project(x):
        a1 = min(max(x[0], lo[0]), hi[0])
        r = _radius(a1)
        if _closest_norm(lo[1:], hi[1:]) > r:
            return None
        return np.array([a1] + _project_n(x[1:], lo[1:], hi[1:], r))

    def scalar_fid(x):
        return float(params_fidelity(x[0], x[1:], s0, s1))

    if opt.refine_iterations and np.any(free):
        base = np.where(free, width, 0.0) / (opt.grid_points - 1)

        def objective(z, x0):
            x = x0.copy()
            x[free] = z
            px = project(x)
            if px is None:
                return 10.0 + float(np.linalg.norm(x - x0))
            return scalar_fid(px) + 10.0 * float(np.linalg.norm(x - px))

        for x0 in starts:
            px0 = project(x0)
            if px0 is None:
                continue
            z0 = px0[free]
            simplex = [z0] + [z0 + np.eye(z0.size)[i] * base[free][i] for i in range(z0.size)]
            res = minimize(
                objective,
                z0,
                args=(px0,),
                method="Nelder-Mead",
                options={
                    "initial_simplex": np.array(simplex),
                    "maxiter": opt.refine_iterations,
                    "xatol": 1e-10,
                    "fatol": 1e-12,
                },
            )
            evaluations += int(res.nfev)
            x = px0.copy()
            x[free] = res.x
            px = project(x)
            if px is None:
                continue
            cand = PovmParams(px[0], tuple(px[1:]))
            if not feasible(cand, b):
                continue
            v = scalar_fid(px)
            if v < best_val:
                best_val, best_x = v, px

    if best_x is None:
        raise InfeasibleRegion("no feasible point found inside the parameter box")
    argmin = PovmParams(best_x[0], tuple(best_x[1:]))
    value = min(1.0, max(0.0, best_val - opt.safety_margin))
    return FidelitySearch(value, best_val, argmin, evaluations)


def min_fidelity(b: ParamBounds, sim: Povm, opt: OptimizerSettings = OptimizerSettings()) -> float:
    """Certified lower bound on the fidelity over every POVM consistent with ``b``."""
    return fidelity_search(b, sim, opt).value
