"""Driven sideband dynamics and Lindblad dissipation.

Model
-----
Each laser pulse on the quadrupole transition is treated in the rotating
frame of the selected sideband, keeping only that ladder (resolved-sideband
regime, coupling much weaker than the trap frequency):

    H = (delta/2) (|D><D| - |S><S|) x 1
        + sum_n (Omega_n / 2) (e^{i phi} |D, n+m><S, n| + h.c.)

with m = -1, 0, +1 for red sideband, carrier, blue sideband, and Omega_n
the Fock-dependent Rabi frequency of `rabi_frequency`. Dissipation enters
through a Lindblad master equation

    drho/dt = -i [H, rho] + sum_k ( L_k rho L_k^+ - {L_k^+ L_k, rho}/2 )

with three channels: electronic dephasing L = sqrt(gamma_phi/2) sigma_z
(off-diagonal electronic coherences decay at exactly gamma_phi), and an
infinite-temperature heating pair L1 = sqrt(kappa) a^+, L2 = sqrt(kappa) a,
normalized so a drive-free evolution gains exactly kappa quanta per second.

Integration is fixed-step classical RK4 on the vectorized master equation.
The ac-line magnetic pickup enters as a sinusoidal detuning modulation,
i.e. a time-dependent diagonal term; intensity jitter and the line-shift
phase are per-shot quantities, constant within any single integration.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.special import eval_genlaguerre

from .hilbert import (FockSpace, JointState, TruncationWarning,
                      excited_population)
from .units import CA40_MASS, HBAR, TWO_PI, WAVELENGTH_729

SIDEBAND_RED = -1
SIDEBAND_CARRIER = 0
SIDEBAND_BLUE = +1

# dt selection: dt = STEP_FACTOR / (|H| bound + total dissipation rate).
# RK4 phase error per step scales as (rate*dt)^5, so 0.01 leaves orders of
# magnitude below the 1e-6 oracle tolerances at typical pulse areas.
STEP_FACTOR = 0.01
STABILITY_LIMIT = 0.1
EVOLVE_TAIL_TOL = 1e-3


class StabilityError(ValueError):
    """Requested integration step too large for the fastest system rate."""


class Regime(enum.Enum):
    LAMB_DICKE = "lamb_dicke_first_order"
    EXACT = "exact_laguerre"


@dataclass(frozen=True)
class DriveParams:
    """One square laser pulse on the quadrupole transition.

    omega0 is the bare carrier Rabi angular frequency (rad/s); the sideband
    couplings are suppressed by the Lamb-Dicke parameter eta. detuning is
    measured from the selected sideband resonance, so detuning = 0 always
    means resonant drive on that ladder.
    """

    omega0: float
    eta: float
    sideband: int = SIDEBAND_BLUE
    detuning: float = 0.0
    phase: float = 0.0
    regime: Regime = Regime.LAMB_DICKE

    def __post_init__(self):
        if self.omega0 < 0:
            raise ValueError("omega0 must be nonnegative")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        if self.sideband not in (-1, 0, 1):
            raise ValueError(f"sideband must be -1, 0, or +1, "
                             f"got {self.sideband}")


@dataclass(frozen=True)
class NoiseModel:
    """Decoherence budget of the experiment.

    dephasing_rate lumps laser linewidth and slow magnetic field noise into
    a single electronic dephasing rate (1/s). heating_rate is the
    drive-free phonon gain (quanta/s). intensity_jitter_rel is the relative
    rms Rabi-frequency fluctuation applied per shot. The line-shift pair
    models ac-line magnetic pickup as a sinusoidal detuning modulation of
    amplitude line_shift_amplitude (rad/s) at line_shift_frequency (Hz);
    with line_synchronized the modulation phase is fixed at zero for every
    shot, otherwise it is drawn uniformly per shot.

    dephasing_fock_exponent is not a Lindblad parameter: it only shapes the
    (n+1)^alpha envelope of the closed-form flopping model used for
    analysis and oracle checks.
    """

    dephasing_rate: float = 0.0
    dephasing_fock_exponent: float = 0.7
    heating_rate: float = 0.0
    intensity_jitter_rel: float = 0.0
    line_shift_amplitude: float = 0.0
    line_shift_frequency: float = 50.0
    line_synchronized: bool = True

    def __post_init__(self):
        for name in ("dephasing_rate", "heating_rate",
                     "intensity_jitter_rel", "line_shift_amplitude"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.intensity_jitter_rel >= 0.2:
            raise ValueError("intensity_jitter_rel must be below 0.2")

    def has_per_shot_noise(self) -> bool:
        return (self.intensity_jitter_rel > 0
                or (self.line_shift_amplitude > 0
                    and not self.line_synchronized))


@dataclass(frozen=True)
class FloppingTrace:
    """Shelved-state probability versus pulse duration.

    shots_per_point = 0 marks exact probabilities; otherwise p_d holds
    sampled shot frequencies.
    """

    times: np.ndarray
    p_d: np.ndarray
    shots_per_point: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        p_d = np.asarray(self.p_d, dtype=float)
        if times.ndim != 1 or times.shape != p_d.shape:
            raise ValueError("times and p_d must be 1-D arrays of equal "
                             "length")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("times must be strictly increasing")
        if p_d.min() < -1e-9 or p_d.max() > 1 + 1e-9:
            raise ValueError("p_d values outside [0, 1]")
        p_d = np.clip(p_d, 0.0, 1.0)
        for name, arr in (("times", times), ("p_d", p_d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Spectrum:
    """Shelved-state probability versus drive detuning at fixed pulse time."""

    detunings: np.ndarray
    p_d: np.ndarray
    shots_per_point: int = 0

    def __post_init__(self):
        det = np.asarray(self.detunings, dtype=float)
        p_d = np.asarray(self.p_d, dtype=float)
        if det.ndim != 1 or det.shape != p_d.shape:
            raise ValueError("detunings and p_d must be 1-D arrays of "
                             "equal length")
        if det.size > 1 and not np.all(np.diff(det) > 0):
            raise ValueError("detunings must be strictly increasing")
        if p_d.min() < -1e-9 or p_d.max() > 1 + 1e-9:
            raise ValueError("p_d values outside [0, 1]")
        p_d = np.clip(p_d, 0.0, 1.0)
        det.setflags(write=False)
        p_d.setflags(write=False)
        object.__setattr__(self, "detunings", det)
        object.__setattr__(self, "p_d", p_d)


def lamb_dicke(trap_frequency: float, mass: float = CA40_MASS,
               wavelength: float = WAVELENGTH_729,
               projection: float = 1.0) -> float:
    """eta = cos(theta) * k * sqrt(hbar / 2 m omega) for a trap mode.

    trap_frequency in rad/s; projection is the cosine of the angle between
    the laser wavevector and the mode axis.
    """
    k = TWO_PI / wavelength
    return projection * k * math.sqrt(HBAR / (2.0 * mass * trap_frequency))


def rabi_frequency(n: int, drive: DriveParams) -> float:
    """Coupling Omega_{n, n+m} on the selected sideband.

    First-order Lamb-Dicke values: Omega0 on the carrier,
    Omega0*eta*sqrt(n+1) on the blue sideband, Omega0*eta*sqrt(n) on the
    red (zero from n = 0, there is no phonon to remove). The exact regime
    keeps the full e^{-eta^2/2} Laguerre matrix element.
    """
    if n < 0:
        raise ValueError(f"Fock index must be nonnegative, got {n}")
    return float(_coupling_vector(np.array([n]), drive)[0])


def _coupling_vector(ns: np.ndarray, drive: DriveParams) -> np.ndarray:
    m = drive.sideband
    ns = np.asarray(ns)
    if drive.regime is Regime.LAMB_DICKE:
        if m == 0:
            return np.full(ns.shape, drive.omega0, dtype=float)
        if m == 1:
            return drive.omega0 * drive.eta * np.sqrt(ns + 1.0)
        return drive.omega0 * drive.eta * np.sqrt(ns.astype(float))
    x = drive.eta ** 2
    n_lo = np.minimum(ns, ns + m)
    n_hi = np.maximum(ns, ns + m)
    out = np.zeros(ns.shape, dtype=float)
    ok = n_lo >= 0
    ratio = np.ones(ns.shape, dtype=float)
    if m != 0:
        ratio[ok] = 1.0 / np.sqrt(n_hi[ok])
    lag = eval_genlaguerre(n_lo[ok], abs(m), x)
    out[ok] = (drive.omega0 * math.exp(-x / 2.0) * drive.eta ** abs(m)
               * ratio[ok] * np.abs(lag))
    return out


def drive_hamiltonian(space: FockSpace, drive: DriveParams) -> np.ndarray:
    """Rotating-frame Hamiltonian keeping only the selected sideband ladder."""
    N = space.n_fock
    d = space.dim
    H = np.zeros((d, d), dtype=complex)
    half = 0.5 * drive.detuning
    H[np.arange(N), np.arange(N)] = -half
    H[np.arange(N, d), np.arange(N, d)] = half
    m = drive.sideband
    lo, hi = max(0, -m), N - max(0, m)
    ns = np.arange(lo, hi)
    if ns.size:
        coup = 0.5 * np.exp(1j * drive.phase) * _coupling_vector(ns, drive)
        rows = N + ns + m
        H[rows, ns] = coup
        H[ns, rows] = np.conj(coup)
    return H


def _sigma_z_diag(space: FockSpace) -> np.ndarray:
    s = np.empty(space.dim)
    s[:space.n_fock] = -1.0
    s[space.n_fock:] = 1.0
    return s


def _dissipator_super(L: sp.spmatrix, ident: sp.spmatrix) -> sp.spmatrix:
    # row-major vectorization: vec(A X B) = (A kron B^T) vec(X)
    LdL = (L.conj().T @ L).tocsr()
    return (sp.kron(L, L.conj())
            - 0.5 * sp.kron(LdL, ident)
            - 0.5 * sp.kron(ident, LdL.T))


def _liouvillian(space: FockSpace, drive: DriveParams | None,
                 noise: NoiseModel):
    """Static superoperator plus the diagonal ac-line modulation term."""
    d = space.dim
    N = space.n_fock
    ident = sp.identity(d, format="csr", dtype=complex)
    if drive is not None:
        H = sp.csr_matrix(drive_hamiltonian(space, drive))
        L = -1j * (sp.kron(H, ident) - sp.kron(ident, H.T))
    else:
        L = sp.csr_matrix((d * d, d * d), dtype=complex)
    if noise.dephasing_rate > 0:
        s = _sigma_z_diag(space)
        w = 0.5 * noise.dephasing_rate * (np.outer(s, s).ravel() - 1.0)
        L = L + sp.diags(w.astype(complex))
    if noise.heating_rate > 0:
        a = sp.diags(np.sqrt(np.arange(1, N)), 1, format="csr")
        a_joint = sp.kron(sp.identity(2, format="csr"), a).tocsr()
        kappa = noise.heating_rate
        L = L + kappa * _dissipator_super(a_joint.conj().T.tocsr(), ident)
        L = L + kappa * _dissipator_super(a_joint, ident)
    lmod = None
    if drive is not None and noise.line_shift_amplitude > 0:
        h = 0.5 * _sigma_z_diag(space)
        lmod = -1j * (h[:, None] - h[None, :]).ravel()
    return L.tocsr(), lmod


def _rate_bound(space: FockSpace, drive: DriveParams | None,
                noise: NoiseModel) -> float:
    """Upper bound on |H| plus the total dissipation rate."""
    h = 0.0
    if drive is not None:
        ns = np.arange(space.n_fock)
        om = _coupling_vector(ns, drive)
        h = 0.5 * (abs(drive.detuning) + noise.line_shift_amplitude
                   + (om.max() if om.size else 0.0))
    diss = (0.5 * noise.dephasing_rate
            + noise.heating_rate * (2 * space.n_fock + 1))
    return h + diss


def _auto_dt(space, drive, noise, duration):
    bound = _rate_bound(space, drive, noise)
    if bound <= 0:
        return duration if duration > 0 else 1.0
    return STEP_FACTOR / bound


def _check_stability(space, drive, noise, dt):
    bound = _rate_bound(space, drive, noise)
    if dt * bound >= STABILITY_LIMIT:
        raise StabilityError(
            f"dt = {dt:.3e} s too large: dt * (|H| + dissipation) = "
            f"{dt * bound:.2f} exceeds {STABILITY_LIMIT}")


def _evolve_snapshots(state: JointState, drive: DriveParams | None,
                      noise: NoiseModel, times, dt: float | None = None,
                      omega_scale: float = 1.0,
                      line_phase: float = 0.0) -> list[np.ndarray]:
    """Integrate the master equation, returning rho at each requested time.

    times must be sorted and nonnegative. The per-shot quantities (Rabi
    scale, line phase) are held fixed for the whole integration.
    """
    space = state.space
    times = np.asarray(times, dtype=float)
    if times.size and times[0] < 0:
        raise ValueError("evolution times must be nonnegative")
    if drive is not None and omega_scale != 1.0:
        drive = replace(drive, omega0=drive.omega0 * max(omega_scale, 0.0))
    if dt is None:
        dt = _auto_dt(space, drive, noise, times[-1] if times.size else 0.0)
    elif dt <= 0:
        raise ValueError("dt must be positive")
    _check_stability(space, drive, noise, dt)

    L0, lmod = _liouvillian(space, drive, noise)
    amp = noise.line_shift_amplitude
    omega_line = TWO_PI * noise.line_shift_frequency

    if lmod is None:
        def rhs(v, t):
            return L0 @ v
    else:
        def rhs(v, t):
            shift = amp * math.sin(omega_line * t + line_phase)
            return L0 @ v + shift * (lmod * v)

    d = space.dim
    v = state.rho.reshape(-1).astype(complex)
    out = []
    warned = False
    t_now = 0.0
    for t_target in times:
        span = t_target - t_now
        if span > 0:
            nsteps = max(1, int(math.ceil(span / dt)))
            h = span / nsteps
            for k in range(nsteps):
                t = t_now + k * h
                k1 = rhs(v, t)
                k2 = rhs(v + (0.5 * h) * k1, t + 0.5 * h)
                k3 = rhs(v + (0.5 * h) * k2, t + 0.5 * h)
                k4 = rhs(v + h * k3, t + h)
                v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t_now = t_target
        rho = v.reshape(d, d)
        rho = 0.5 * (rho + rho.conj().T)
        v = rho.reshape(-1)
        top = rho[space.n_max, space.n_max].real \
            + rho[d - 1, d - 1].real
        if not warned and top > EVOLVE_TAIL_TOL:
            warnings.warn(
                f"population {top:.2e} in the top Fock level during "
                f"evolution; result is truncation-limited",
                TruncationWarning, stacklevel=3)
            warned = True
        out.append(rho.copy())
    return out


def evolve(state: JointState, drive: DriveParams | None, noise: NoiseModel,
           duration: float, dt: float | None = None) -> JointState:
    """Propagate a state for `duration` seconds under drive and noise.

    drive = None integrates the dissipators alone (heating delay). This is
    the exact-probability path: per-shot noise terms enter with their
    deterministic values (unit Rabi scale, zero line phase).
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if duration == 0:
        return JointState(state.rho.copy(), state.space)
    rho = _evolve_snapshots(state, drive, noise, [duration], dt)[0]
    return JointState(rho, state.space)


def _excited_pop(rho: np.ndarray, n_fock: int) -> float:
    return float(np.real(np.diagonal(rho)[n_fock:]).sum())


def _shot_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed,) + key))


def _draw_shot_params(noise: NoiseModel, rng: np.random.Generator):
    scale = 1.0
    phase = 0.0
    if noise.intensity_jitter_rel > 0:
        scale = max(0.0, 1.0 + noise.intensity_jitter_rel * rng.normal())
    if noise.line_shift_amplitude > 0 and not noise.line_synchronized:
        phase = rng.uniform(0.0, TWO_PI)
    return scale, phase


def flopping_trace(initial: JointState, drive: DriveParams,
                   noise: NoiseModel, times, shots_per_point: int = 0,
                   rng_seed: int = 0, dt: float | None = None) -> FloppingTrace:
    """Shelving probability versus pulse duration.

    With shots_per_point = 0 the exact excited population is recorded at
    each requested duration. Otherwise each point is the frequency of
    shelved outcomes over Bernoulli shots; every (point, shot) pair uses an
    independent substream of rng_seed, and per-shot intensity jitter and
    line phase are resampled when those noise terms are active, so results
    do not depend on execution order.
    """
    times = np.asarray(times, dtype=float)
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise ValueError("times must be strictly increasing")
    if shots_per_point < 0:
        raise ValueError("shots_per_point must be nonnegative")

    if shots_per_point == 0 or not noise.has_per_shot_noise():
        rhos = _evolve_snapshots(initial, drive, noise, times, dt)
        p_exact = np.array([_excited_pop(r, initial.space.n_fock)
                            for r in rhos])
        if shots_per_point == 0:
            return FloppingTrace(times, np.clip(p_exact, 0.0, 1.0), 0)
        p_hat = np.empty(times.size)
        for i, p in enumerate(np.clip(p_exact, 0.0, 1.0)):
            hits = sum(_shot_rng(rng_seed, i, s).random() < p
                       for s in range(shots_per_point))
            p_hat[i] = hits / shots_per_point
        return FloppingTrace(times, p_hat, shots_per_point)

    # per-shot drive parameters differ, so every shot integrates afresh
    p_hat = np.empty(times.size)
    for i, tau in enumerate(times):
        hits = 0
        for s in range(shots_per_point):
            rng = _shot_rng(rng_seed, i, s)
            scale, phase = _draw_shot_params(noise, rng)
            rho = _evolve_snapshots(initial, drive, noise, [tau], dt,
                                    omega_scale=scale, line_phase=phase)[0]
            p = min(max(_excited_pop(rho, initial.space.n_fock), 0.0), 1.0)
            hits += rng.random() < p
        p_hat[i] = hits / shots_per_point
    return FloppingTrace(times, p_hat, shots_per_point)


def sideband_spectrum(initial: JointState, drive_template: DriveParams,
                      detunings, pulse_duration: float, noise: NoiseModel,
                      shots_per_point: int = 0, rng_seed: int = 0,
                      dt: float | None = None) -> Spectrum:
    """Shelving probability versus detuning for a fixed probe pulse."""
    detunings = np.asarray(detunings, dtype=float)
    if detunings.size > 1 and not np.all(np.diff(detunings) > 0):
        raise ValueError("detunings must be strictly increasing")
    if shots_per_point < 0:
        raise ValueError("shots_per_point must be nonnegative")
    n_fock = initial.space.n_fock
    p_out = np.empty(detunings.size)
    for i, delta in enumerate(detunings):
        drive = replace(drive_template, detuning=float(delta))
        if shots_per_point == 0 or not noise.has_per_shot_noise():
            rho = _evolve_snapshots(initial, drive, noise,
                                    [pulse_duration], dt)[0]
            p = min(max(_excited_pop(rho, n_fock), 0.0), 1.0)
            if shots_per_point == 0:
                p_out[i] = p
            else:
                hits = sum(_shot_rng(rng_seed, i, s).random() < p
                           for s in range(shots_per_point))
                p_out[i] = hits / shots_per_point
        else:
            hits = 0
            for s in range(shots_per_point):
                rng = _shot_rng(rng_seed, i, s)
                scale, phase = _draw_shot_params(noise, rng)
                rho = _evolve_snapshots(initial, drive, noise,
                                        [pulse_duration], dt,
                                        omega_scale=scale,
                                        line_phase=phase)[0]
                p = min(max(_excited_pop(rho, n_fock), 0.0), 1.0)
                hits += rng.random() < p
            p_out[i] = hits / shots_per_point
    return Spectrum(detunings, p_out, shots_per_point)


def analytic_flopping(populations, drive: DriveParams, gamma0: float,
                      alpha: float, times) -> FloppingTrace:
    """Closed-form flopping signal for a Fock-diagonal initial state:

        P_D(tau) = sum_n p_n [1 - cos(Omega_n tau) e^{-gamma_n tau}] / 2,
        gamma_n = gamma0 (n+1)^alpha.

    Uncoupled levels (zero Omega_n, e.g. n = 0 on the red sideband)
    contribute nothing. This is the oracle for the integrator in the
    noise-free and weak-dephasing cases and the model the population fit
    inverts.
    """
    p = np.asarray(populations, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("populations must be a nonempty 1-D sequence")
    if p.min() < 0:
        raise ValueError("populations must be nonnegative")
    if p.sum() > 1.0 + 1e-9:
        raise ValueError(f"populations sum to {p.sum():.6f} > 1")
    if gamma0 < 0:
        raise ValueError("gamma0 must be nonnegative")
    times = np.asarray(times, dtype=float)
    omegas = _coupling_vector(np.arange(p.size), drive)
    gammas = gamma0 * (np.arange(p.size) + 1.0) ** alpha
    pd = np.zeros(times.shape)
    for pn, om, gn in zip(p, omegas, gammas):
        if om == 0.0 or pn == 0.0:
            continue
        pd += pn * 0.5 * (1.0 - np.cos(om * times) * np.exp(-gn * times))
    return FloppingTrace(times, np.clip(pd, 0.0, 1.0), 0)
