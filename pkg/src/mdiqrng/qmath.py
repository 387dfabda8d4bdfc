"""Two-level linear algebra: Bloch-parameterized two-outcome POVMs and fidelities."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-12
COMPLETENESS_TOL = 1e-10
NORM_TOL = 1e-9
TRACE_FLOOR = 1e-12

IDENTITY = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (PAULI_X, PAULI_Y, PAULI_Z)


class ProbeId(enum.Enum):
    """The four tomography probes, in the canonical order used for bounds."""

    Z0 = "Z0"
    Z1 = "Z1"
    Xplus = "Xplus"
    Yplus = "Yplus"

    @property
    def bloch(self) -> np.ndarray:
        return np.array(_PROBE_BLOCH[self], dtype=float)

    @property
    def index(self) -> int:
        return _PROBE_ORDER.index(self)

    def density_matrix(self) -> np.ndarray:
        return bloch_to_density(self.bloch)


_PROBE_BLOCH = {
    ProbeId.Z0: (0.0, 0.0, 1.0),
    ProbeId.Z1: (0.0, 0.0, -1.0),
    ProbeId.Xplus: (1.0, 0.0, 0.0),
    ProbeId.Yplus: (0.0, 1.0, 0.0),
}
_PROBE_ORDER = [ProbeId.Z0, ProbeId.Z1, ProbeId.Xplus, ProbeId.Yplus]
PROBES = tuple(_PROBE_ORDER)


def bloch_to_density(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return 0.5 * (IDENTITY + r[0] * PAULI_X + r[1] * PAULI_Y + r[2] * PAULI_Z)


def as_qubit_operator(a, psd: bool = False) -> np.ndarray:
    """Validate and return ``a`` as a 2x2 complex Hermitian matrix.

    Raises:
        ValidationError: if ``a`` is not 2x2, not Hermitian within 1e-12, or
            (when ``psd`` is set) has an eigenvalue below -1e-12.
    """
    m = np.asarray(a, dtype=complex)
    if m.shape != (2, 2):
        raise ValidationError(f"expected a 2x2 matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise ValidationError("operator is not Hermitian")
    if psd and np.min(np.linalg.eigvalsh(m)) < -PSD_TOL:
        raise ValidationError("operator is not positive semidefinite")
    return m


@dataclass(frozen=True)
class PovmParams:
    """Bloch parameters ``(a1, n)`` of the outcome-1 element ``a1 (I + n.sigma)``."""

    a1: float
    n: tuple[float, float, float]

    def __post_init__(self):
        n = tuple(float(v) for v in self.n)
        if len(n) != 3:
            raise ValidationError("n must have three components")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "a1", float(self.a1))
        if not 0.0 < self.a1 < 1.0:
            raise ValidationError(f"a1 must lie in (0, 1), got {self.a1}")
        if self.norm > 1.0 + NORM_TOL:
            raise ValidationError(f"|n| = {self.norm} exceeds 1")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.n))

    @property
    def a0(self) -> float:
        return 1.0 - self.a1

    @property
    def n0(self) -> tuple[float, float, float]:
        scale = -self.a1 / self.a0
        return tuple(scale * v for v in self.n)

    @classmethod
    def from_povm(cls, povm: "Povm") -> "PovmParams":
        lam = povm.lambda1
        a1 = float(np.real(np.trace(lam))) / 2.0
        n = tuple(float(np.real(np.trace(lam @ s))) / (2.0 * a1) for s in PAULIS)
        return cls(a1, n)


@dataclass(frozen=True, eq=False)
class Povm:
    """Two-outcome qubit POVM ``{lambda0, lambda1}``."""

    lambda0: np.ndarray
    lambda1: np.ndarray

    def __post_init__(self):
        l0 = as_qubit_operator(self.lambda0, psd=True)
        l1 = as_qubit_operator(self.lambda1, psd=True)
        if np.max(np.abs(l0 + l1 - IDENTITY)) > COMPLETENESS_TOL:
            raise ValidationError("POVM elements do not sum to the identity")
        l0.setflags(write=False)
        l1.setflags(write=False)
        object.__setattr__(self, "lambda0", l0)
        object.__setattr__(self, "lambda1", l1)

    @property
    def elements(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lambda0, self.lambda1


def params_to_povm(p: PovmParams) -> Povm:
    nx, ny, nz = p.n
    lambda1 = p.a1 * (IDENTITY + nx * PAULI_X + ny * PAULI_Y + nz * PAULI_Z)
    lambda0 = IDENTITY - lambda1
    for lam in (lambda0, lambda1):
        if np.min(np.linalg.eigvalsh(lam)) < -1e-9:
            raise ValidationError("parameters give a non-positive POVM element")
    # clamp tiny negative eigenvalues so Povm's PSD check passes
    return Povm(_clamp_psd(lambda0), _clamp_psd(lambda1))


def _clamp_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    if np.min(w) >= 0:
        return m
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def probe_click_prob(p: PovmParams, j: ProbeId) -> float:
    """Probability of outcome 1 for the ideal single-photon probe ``j``."""
    return p.a1 * (1.0 + float(np.dot(p.n, j.bloch)))


def _normalize(m: np.ndarray) -> np.ndarray:
    tr = float(np.real(np.trace(m)))
    if tr < TRACE_FLOOR:
        raise ValidationError(f"cannot normalize an operator with trace {tr:.3g}")
    return m / tr


def matrix_fidelity(a, b) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(b) a sqrt(b)))**2`` of trace-normalized inputs.

    Inputs are divided by their traces first, so un-normalized PSD operators
    are accepted. Traces below 1e-12 raise :class:`ValidationError`. For qubits
    this equals ``tr(a b) + 2 sqrt(det a det b)``, which is evaluated directly
    because it stays exact for rank-deficient inputs.
    """
    a = _normalize(as_qubit_operator(a))
    b = _normalize(as_qubit_operator(b))
    det_a = max(0.0, float(np.real(np.linalg.det(a))))
    det_b = max(0.0, float(np.real(np.linalg.det(b))))
    f = float(np.real(np.trace(a @ b))) + 2.0 * math.sqrt(det_a * det_b)
    return min(1.0, max(0.0, f))


def povm_fidelity(tom: Povm, sim: Povm) -> float:
    return min(matrix_fidelity(t, s) for t, s in zip(tom.elements, sim.elements))


def bloch_vector(m) -> np.ndarray:
    """Bloch vector of ``m / tr(m)``."""
    rho = _normalize(as_qubit_operator(m))
    return np.array([np.real(np.trace(rho @ s)) for s in PAULIS])


def bloch_fidelity(r, s) -> np.ndarray:
    """Vectorized qubit-state fidelity from Bloch vectors (last axis has length 3)."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    rr = np.clip(1.0 - np.sum(r * r, axis=-1), 0.0, None)
    ss = np.clip(1.0 - np.sum(s * s, axis=-1), 0.0, None)
    f = 0.5 * (1.0 + np.sum(r * s, axis=-1) + np.sqrt(rr * ss))
    return np.clip(f, 0.0, 1.0)


def params_fidelity(a1, n, sim_bloch0, sim_bloch1) -> np.ndarray:
    """POVM fidelity of ``params_to_povm((a1, n))`` against a reference, vectorized.

    ``a1`` has shape ``(...)`` and ``n`` shape ``(..., 3)``; the reference is given
    by the Bloch vectors of its normalized elements.
    """
    a1 = np.asarray(a1, dtype=float)[..., None]
    n = np.asarray(n, dtype=float)
    r0 = -a1 / (1.0 - a1) * n
    f0 = bloch_fidelity(r0, sim_bloch0)
    f1 = bloch_fidelity(n, sim_bloch1)
    return np.minimum(f0, f1)
