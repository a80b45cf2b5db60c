"""Resolved-sideband cooling as a classical rate ladder.

During the cooling pulse the quench laser broadens the shelved level to an
effective linewidth gamma_eff, and the excited level can be adiabatically
eliminated: the motional populations then obey a birth-death ladder

    dp_n/dt = A_minus [ (n+1) p_{n+1} - n p_n ]
            + A_plus  [ n p_{n-1} - (n+1) p_n ]

where A_minus is the per-phonon cooling rate of the red-sideband cycle and
A_plus aggregates the off-resonant heating channels (carrier and blue
excitation plus spontaneous-emission recoil). The mean phonon number obeys
d<n>/dt = -(A_minus - A_plus) <n> + A_plus exactly, i.e. a single
exponential toward the detailed-balance limit nbar = A_plus / (A_minus -
A_plus).

Default rate forms (saturating red-sideband cycle, lowest-order heating):

    A_minus = eta^2 Omega0^2 gamma_eff / (gamma_eff^2 + 2 eta^2 Omega0^2)
    A_plus  = gamma_eff (eta^2 + recoil_eta^2) (Omega0 / 2 omega_trap)^2

Both can be overridden for calibrated scans.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.optimize import brentq

from .hilbert import ElectronicLevel, JointState


class NoCoolingError(ValueError):
    """Heating rate exceeds the cooling rate; no steady state below infinity."""


class NonDiagonalStateError(ValueError):
    """The rate ladder only propagates Fock-diagonal states."""


@dataclass(frozen=True)
class CoolingParams:
    """Parameters of one sideband-cooling pulse (all angular, rad/s)."""

    gamma_eff: float           # quench-broadened linewidth of the D level
    eta: float
    omega_trap: float
    omega0: float              # Rabi frequency of the cooling drive
    recoil_eta: float | None = None    # defaults to eta
    a_minus_override: float | None = None
    a_plus_override: float | None = None

    def __post_init__(self):
        if self.gamma_eff <= 0:
            raise ValueError("gamma_eff must be positive")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if self.omega_trap <= 0 or self.omega0 < 0:
            raise ValueError("omega_trap must be positive, omega0 >= 0")
        if self.recoil_eta is None:
            object.__setattr__(self, "recoil_eta", self.eta)
        if self.gamma_eff >= self.omega_trap:
            warnings.warn(
                "gamma_eff >= trap frequency: sidebands are not resolved "
                "and the rate-ladder model is unreliable", stacklevel=2)


def doppler_limit(gamma: float, omega_trap: float) -> float:
    """Mean phonon number at the Doppler-cooling limit E = hbar*gamma/2.

    With E = hbar*omega*(nbar + 1/2) this gives nbar = gamma/(2 omega) - 1/2,
    clamped at zero.
    """
    if gamma <= 0 or omega_trap <= 0:
        raise ValueError("gamma and omega_trap must be positive")
    return max(gamma / (2.0 * omega_trap) - 0.5, 0.0)


def cooling_rates(params: CoolingParams) -> tuple[float, float]:
    """Per-phonon cooling and heating rates (A_minus, A_plus) in 1/s."""
    if params.a_minus_override is not None:
        a_minus = params.a_minus_override
    else:
        x = (params.eta * params.omega0) ** 2
        a_minus = x * params.gamma_eff / (params.gamma_eff ** 2 + 2.0 * x)
    if params.a_plus_override is not None:
        a_plus = params.a_plus_override
    else:
        a_plus = (params.gamma_eff
                  * (params.eta ** 2 + params.recoil_eta ** 2)
                  * (params.omega0 / (2.0 * params.omega_trap)) ** 2)
    return a_minus, a_plus


def cooling_limit(params: CoolingParams) -> float:
    """Detailed-balance steady state nbar = A_plus / (A_minus - A_plus)."""
    a_minus, a_plus = cooling_rates(params)
    if a_plus >= a_minus:
        raise NoCoolingError(
            f"A_plus = {a_plus:.3g}/s >= A_minus = {a_minus:.3g}/s: "
            "the ladder heats")
    return a_plus / (a_minus - a_plus)


def calibrate_omega0(gamma_eff: float, eta: float, omega_trap: float,
                     target_rate: float,
                     recoil_eta: float | None = None) -> float:
    """Drive strength giving a net cooling rate A_minus - A_plus = target."""
    def net(omega0):
        p = CoolingParams(gamma_eff, eta, omega_trap, omega0, recoil_eta)
        a_minus, a_plus = cooling_rates(p)
        return a_minus - a_plus - target_rate

    # A_minus saturates near gamma_eff/2 as the drive strengthens
    hi = gamma_eff / eta
    if net(hi) < 0:
        raise NoCoolingError(f"target rate {target_rate:g}/s not reachable "
                             f"with gamma_eff = {gamma_eff:g} rad/s")
    return brentq(net, 1e-6 * hi, hi)


def _ladder_generator(a_minus: float, a_plus: float, n_fock: int) -> np.ndarray:
    n = np.arange(n_fock)
    M = np.zeros((n_fock, n_fock))
    M[n[:-1], n[1:]] += a_minus * n[1:]          # n+1 -> n
    M[n, n] -= a_minus * n                        # loss to n-1
    M[n[1:], n[:-1]] += a_plus * n[1:]            # n-1 -> n  (rate (n-1)+1)
    M[n[:-1], n[:-1]] -= a_plus * (n[:-1] + 1)    # gain channel, top clamped
    return M


def sideband_cool(initial: JointState, params: CoolingParams,
                  duration: float, dt: float = 1e-5):
    """Propagate the cooling ladder and record the temperature trajectory.

    Requires a Fock-diagonal input (the ladder has no notion of
    coherences). Returns the cooled state, re-pumped into S, and the
    trajectory as an array of (t, mean_n) rows sampled every dt.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    space = initial.space
    off = initial.rho - np.diag(np.diagonal(initial.rho))
    if np.abs(off).max() > 1e-9:
        raise NonDiagonalStateError(
            "sideband_cool propagates Fock populations only; evolve "
            "coherent states with the master-equation integrator instead")
    N = space.n_fock
    diag = np.real(np.diagonal(initial.rho))
    p = diag[:N] + diag[N:]

    a_minus, a_plus = cooling_rates(params)
    nsteps = max(1, int(math.ceil(duration / dt))) if duration > 0 else 0
    h = duration / nsteps if nsteps else 0.0
    ns = np.arange(N)
    traj = [(0.0, float(ns @ p))]
    if nsteps:
        # the ladder is linear, so one matrix exponential per step is exact
        prop = expm(_ladder_generator(a_minus, a_plus, N) * h)
        for k in range(1, nsteps + 1):
            p = prop @ p
            np.clip(p, 0.0, None, out=p)
            p /= p.sum()
            traj.append((k * h, float(ns @ p)))

    rho = np.zeros((space.dim, space.dim), dtype=complex)
    s = ElectronicLevel.S.value * N
    rho[s + ns, s + ns] = p
    return JointState(rho, space), np.array(traj)
