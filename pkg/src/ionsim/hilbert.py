"""Truncated joint Hilbert space of the optical qubit and one motional mode.

The electronic degree of freedom is reduced to the two Zeeman components
that are actually driven: S = S1/2(m=+1/2), the fluorescing ground state,
and D = D5/2(m=+5/2), the shelved metastable level. The motional mode is a
harmonic oscillator truncated at n_max phonons. Joint operators are dense
complex matrices of dimension 2*(n_max+1), with flat index

    level * (n_max + 1) + n

so the S block occupies the first n_max+1 rows/columns and the D block the
rest. States are density matrices: mixed states appear naturally after
detection, quenching, and dissipative evolution, so there is no separate
pure-state code path.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

TRACE_TOL = 1e-9
HERMITICITY_TOL = 1e-12
POSITIVITY_TOL = -1e-8
THERMAL_TAIL_TOL = 1e-3


class Mode(enum.Enum):
    AXIAL = "axial"
    RADIAL_Y = "radial_y"
    RADIAL_X = "radial_x"


class ElectronicLevel(enum.Enum):
    S = 0
    D = 1


class TruncationWarning(UserWarning):
    """Population is leaking into the highest retained Fock levels."""


@dataclass(frozen=True)
class FockSpace:
    """One truncated motional mode attached to the two-level ion.

    n_max is the highest retained Fock level, so the mode has n_max+1
    levels and the joint space dimension is 2*(n_max+1).
    """

    n_max: int
    mode: Mode = Mode.AXIAL
    trap_frequency: float = 2 * math.pi * 4.51e6  # rad/s

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.trap_frequency <= 0:
            raise ValueError("trap_frequency must be positive")

    @property
    def n_fock(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def index(self, level: ElectronicLevel, n: int) -> int:
        if not 0 <= n <= self.n_max:
            raise ValueError(f"Fock level n={n} outside truncated space "
                             f"(n_max={self.n_max})")
        return level.value * self.n_fock + n


@dataclass(frozen=True, eq=False)
class JointState:
    """Density matrix on a FockSpace; validated and immutable.

    Invariants enforced at construction: unit trace (1e-9), Hermiticity
    (1e-12 elementwise), positivity up to -1e-8 on the spectrum.
    """

    rho: np.ndarray
    space: FockSpace

    def __post_init__(self):
        rho = np.array(self.rho, dtype=complex)
        d = self.space.dim
        if rho.shape != (d, d):
            raise ValueError(f"rho has shape {rho.shape}, expected {(d, d)}")
        tr = np.trace(rho)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace(rho) = {tr}, violates unit trace by "
                             f"{abs(tr - 1.0):.2e}")
        herm = np.abs(rho - rho.conj().T).max()
        if herm > HERMITICITY_TOL:
            raise ValueError(f"rho not Hermitian: max asymmetry {herm:.2e}")
        if np.linalg.eigvalsh(rho).min() < POSITIVITY_TOL:
            raise ValueError("rho has an eigenvalue below the positivity "
                             "tolerance")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)


def suggested_n_max(nbar: float | None = None) -> int:
    """Default truncation: 4*nbar + 20 for thermal inputs, 10 otherwise."""
    if nbar is None or nbar <= 0:
        return 10
    return int(math.ceil(4.0 * nbar + 20.0))


def thermal_n_max(nbar: float, tail: float = THERMAL_TAIL_TOL) -> int:
    """Smallest n_max keeping the truncated thermal tail below `tail`."""
    if nbar <= 0:
        return suggested_n_max()
    r = nbar / (1.0 + nbar)
    n = int(math.ceil(math.log(tail) / math.log(r))) - 1
    return max(n, suggested_n_max(None))


def fock_state(space: FockSpace, level: ElectronicLevel, n: int) -> JointState:
    """Pure product state |level> x |n>."""
    i = space.index(level, n)
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    rho[i, i] = 1.0
    return JointState(rho, space)


def thermal_state(space: FockSpace, level: ElectronicLevel,
                  nbar: float) -> JointState:
    """Thermal motional state p_n = nbar^n / (1+nbar)^(n+1) on one level.

    The distribution is renormalized over the truncated space so the trace
    is exactly 1; if the discarded tail exceeds 1e-3 a TruncationWarning is
    raised.
    """
    if nbar < 0:
        raise ValueError(f"nbar must be nonnegative, got {nbar}")
    if nbar == 0:
        return fock_state(space, level, 0)
    r = nbar / (1.0 + nbar)
    tail = r ** space.n_fock
    if tail >= THERMAL_TAIL_TOL:
        warnings.warn(
            f"thermal state nbar={nbar:g} truncated at n_max={space.n_max} "
            f"discards tail {tail:.2e}; increase n_max",
            TruncationWarning, stacklevel=2)
    n = np.arange(space.n_fock)
    p = (1.0 - r) * r ** n
    p /= p.sum()
    rho = np.zeros((space.dim, space.dim), dtype=complex)
    base = level.value * space.n_fock
    rho[base + n, base + n] = p
    return JointState(rho, space)


def phonon_distribution(state: JointState) -> np.ndarray:
    """Fock populations p_n marginalized over the electronic level."""
    N = state.space.n_fock
    diag = np.real(np.diagonal(state.rho))
    return diag[:N] + diag[N:]


def mean_phonon(state: JointState) -> float:
    p = phonon_distribution(state)
    return float(np.dot(np.arange(p.size), p))


def excited_population(state: JointState) -> float:
    """Total population of the shelved D level."""
    N = state.space.n_fock
    return float(np.real(np.diagonal(state.rho)[N:]).sum())


def truncate_state(state: JointState, n_max: int) -> JointState:
    """Project onto a smaller Fock cutoff and renormalize.

    Warns if the discarded population exceeds 1e-3.
    """
    if n_max >= state.space.n_max:
        return state
    old = state.space
    new = FockSpace(n_max, old.mode, old.trap_frequency)
    keep = np.concatenate([np.arange(new.n_fock),
                           old.n_fock + np.arange(new.n_fock)])
    rho = state.rho[np.ix_(keep, keep)].copy()
    kept = np.real(np.trace(rho))
    if 1.0 - kept > THERMAL_TAIL_TOL:
        warnings.warn(f"truncation to n_max={n_max} discards population "
                      f"{1.0 - kept:.2e}", TruncationWarning, stacklevel=2)
    rho /= kept
    return JointState(rho, new)


def state_to_json(state: JointState) -> str:
    doc = {
        "n_max": state.space.n_max,
        "mode": state.space.mode.value,
        "omega_rad_s": state.space.trap_frequency,
        "rho_real": np.real(state.rho).tolist(),
        "rho_imag": np.imag(state.rho).tolist(),
    }
    return json.dumps(doc)


def state_from_json(text: str) -> JointState:
    doc = json.loads(text)
    space = FockSpace(doc["n_max"], Mode(doc["mode"]), doc["omega_rad_s"])
    rho = np.array(doc["rho_real"]) + 1j * np.array(doc["rho_imag"])
    return JointState(rho, space)
