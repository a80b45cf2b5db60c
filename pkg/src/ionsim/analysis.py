"""Inverse problems: thermometry, Fock-population extraction, decay fits.

The flopping signal of a Fock-diagonal state is

    P_D(tau) = sum_n p_n [1 - cos(Omega_n tau) e^{-gamma_n tau}] / 2

with Omega_n = omega0_eta * sqrt(n+1) on the blue sideband and gamma_n =
gamma0 (n+1)^alpha. Populations are recovered either by nonnegative least
squares on that model (default) or by reading windowed Fourier amplitudes
at the known Omega_n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit, lsq_linear, minimize_scalar

from .dynamics import FloppingTrace

DEFAULT_FOCK_DEPHASING_EXPONENT = 0.7
_ZERO_PAD = 4


@dataclass
class FitResult:
    parameters: dict[str, float]
    standard_errors: dict[str, float] | None
    residual_rms: float
    converged: bool

    def __post_init__(self):
        if self.residual_rms < 0:
            raise ValueError("residual_rms must be nonnegative")
        if self.converged != (self.standard_errors is not None):
            raise ValueError("standard_errors must be present exactly "
                             "when the fit converged")

    def to_dict(self) -> dict:
        return {
            "parameters": dict(self.parameters),
            "standard_errors": (dict(self.standard_errors)
                                if self.standard_errors else None),
            "residual_rms": self.residual_rms,
            "converged": self.converged,
        }


def wilson_interval(successes: int, trials: int,
                    z: float = 1.0) -> tuple[float, float]:
    """Wilson score interval; z = 1 gives the 68% band."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials
                         + z * z / (4 * trials * trials)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def thermometry_from_sidebands(p_red: float, p_blue: float) -> float:
    """Mean phonon number from the thermal ratio P_red/P_blue = n/(1+n)."""
    if p_blue <= 0:
        raise ValueError("p_blue must be positive; ratio undefined")
    if not 0 <= p_red <= 1 or p_blue > 1:
        raise ValueError("sideband excitations must lie in [0, 1]")
    if p_red >= p_blue:
        raise ValueError(
            f"p_red = {p_red:.4f} >= p_blue = {p_blue:.4f}: distribution "
            "is not thermal (or the mode is heating out of range)")
    ratio = p_red / p_blue
    return ratio / (1.0 - ratio)


def _as_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (N, 2) array of (t, y)")
    return pts[:, 0], pts[:, 1]


def fit_linear(points) -> FitResult:
    """Ordinary least squares y = intercept + slope * t."""
    t, y = _as_points(points)
    if np.unique(t).size < 2:
        raise ValueError("need at least two distinct t values")
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    dof = max(len(t) - 2, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    return FitResult(
        parameters={"slope": float(coef[0]), "intercept": float(coef[1])},
        standard_errors={"slope": float(np.sqrt(cov[0, 0])),
                         "intercept": float(np.sqrt(cov[1, 1]))},
        residual_rms=rms, converged=True)


def fit_exponential_decay(points) -> FitResult:
    """Least-squares fit of y = asymptote + amplitude * exp(-rate * t)."""
    t, y = _as_points(points)
    if len(t) < 4:
        raise ValueError("need at least 4 points")
    if not np.all(np.diff(t) > 0):
        raise ValueError("t must be strictly increasing")

    span = np.ptp(y)
    if span <= 0 or span < 1e-12 * max(abs(y).max(), 1.0):
        return FitResult(parameters={"rate": 0.0, "asymptote": float(y[0]),
                                     "amplitude": 0.0},
                         standard_errors=None,
                         residual_rms=float(np.std(y)), converged=False)

    # crude rate guess from the time to lose ~63% of the span
    target = y[-1] + span * math.exp(-1.0) * np.sign(y[0] - y[-1])
    idx = np.argmin(np.abs(y - target))
    rate0 = 1.0 / max(t[idx], (t[-1] - t[0]) / len(t))
    p0 = [rate0, float(y[-1]), float(y[0] - y[-1])]

    def model(tt, rate, asymptote, amplitude):
        return asymptote + amplitude * np.exp(-rate * tt)

    try:
        popt, pcov = curve_fit(model, t, y, p0=p0, maxfev=20000)
    except RuntimeError:
        return FitResult(parameters={"rate": p0[0], "asymptote": p0[1],
                                     "amplitude": p0[2]},
                         standard_errors=None,
                         residual_rms=float(np.std(y)), converged=False)
    resid = y - model(t, *popt)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    ok = popt[0] > 0 and np.isfinite(pcov).all()
    names = ("rate", "asymptote", "amplitude")
    params = dict(zip(names, map(float, popt)))
    if not ok:
        return FitResult(parameters=params, standard_errors=None,
                         residual_rms=rms, converged=False)
    errs = dict(zip(names, map(float, np.sqrt(np.diag(pcov)))))
    return FitResult(parameters=params, standard_errors=errs,
                     residual_rms=rms, converged=True)


def _windowed_spectrum(times, values):
    """(omega grid, |FFT|) of the detrended, Hann-windowed, zero-padded data."""
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=0.0):
        raise ValueError("Fourier analysis requires a uniform time grid")
    y = values - np.mean(values)
    window = np.hanning(len(y))
    spec = np.abs(np.fft.rfft(y * window, n=_ZERO_PAD * len(y)))
    omega = 2.0 * np.pi * np.fft.rfftfreq(_ZERO_PAD * len(y), d=dt[0])
    return omega, spec


def _interp_peak(omega, spec, i):
    """Quadratic interpolation of a spectral peak around bin i."""
    if 0 < i < len(spec) - 1:
        a, b, c = spec[i - 1], spec[i], spec[i + 1]
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
        shift = np.clip(shift, -0.5, 0.5)
        height = b - 0.25 * (a - c) * shift
        return omega[i] + shift * (omega[1] - omega[0]), float(height)
    return omega[i], float(spec[i])


def dominant_frequency(times, values) -> float:
    """Angular frequency of the strongest spectral component (rad/s)."""
    omega, spec = _windowed_spectrum(np.asarray(times, float),
                                     np.asarray(values, float))
    i = int(np.argmax(spec[1:])) + 1   # skip the DC bin
    freq, _ = _interp_peak(omega, spec, i)
    return float(freq)


def count_local_maxima(values, min_height: float = 0.5) -> int:
    """Number of interior local maxima reaching min_height."""
    y = np.asarray(values, dtype=float)
    up = y[1:-1] > y[:-2]
    down = y[1:-1] >= y[2:]
    return int(np.sum(up & down & (y[1:-1] >= min_height)))


def _model_matrix(tau, omegas, gammas):
    cols = [0.5 * (1.0 - np.cos(om * tau) * np.exp(-gn * tau))
            for om, gn in zip(omegas, gammas)]
    return np.column_stack(cols)


def _check_trace(trace: FloppingTrace, omega0_eta: float, n_max_fit: int):
    if n_max_fit < 0 or n_max_fit > 6:
        raise ValueError("n_max_fit must lie in 0..6")
    tau = trace.times
    span = tau[-1] - tau[0]
    slowest_period = 2.0 * np.pi / omega0_eta
    if span < 5.0 * slowest_period:
        raise ValueError(
            f"trace spans {span / slowest_period:.1f} periods of the "
            "slowest component; need at least 5")
    omega_top = omega0_eta * math.sqrt(n_max_fit + 1.0)
    step = np.max(np.diff(tau))
    if step >= math.pi / omega_top:
        raise ValueError(
            "time grid too coarse to resolve the fastest fitted "
            f"component (need step < {math.pi / omega_top:.3e} s)")


def _binomial_weights(trace: FloppingTrace) -> np.ndarray:
    if trace.shots_per_point <= 0:
        return np.ones_like(trace.p_d)
    var = np.maximum(trace.p_d * (1.0 - trace.p_d), 0.05) \
        / trace.shots_per_point
    return 1.0 / np.sqrt(var)


def extract_populations(trace: FloppingTrace, omega0_eta: float,
                        n_max_fit: int = 3, method: str = "constrained_lsq",
                        alpha: float = DEFAULT_FOCK_DEPHASING_EXPONENT):
    """Recover Fock populations from a blue-sideband flopping trace.

    omega0_eta is the n = 0 sideband Rabi frequency (rad/s); components up
    to n_max_fit are fitted. Returns (populations, gamma0, FitResult).
    """
    _check_trace(trace, omega0_eta, n_max_fit)
    if method == "constrained_lsq":
        return _extract_lsq(trace, omega0_eta, n_max_fit, alpha)
    if method == "fourier":
        return _extract_fourier(trace, omega0_eta, n_max_fit, alpha)
    raise ValueError(f"unknown method {method!r}")


def _extract_lsq(trace, omega0_eta, n_max_fit, alpha):
    tau = trace.times
    y = trace.p_d
    ns = np.arange(n_max_fit + 1)
    omegas = omega0_eta * np.sqrt(ns + 1.0)
    w = _binomial_weights(trace)
    gamma_hi = 20.0 / (tau[-1] - tau[0])

    def solve(gamma0):
        gammas = gamma0 * (ns + 1.0) ** alpha
        A = _model_matrix(tau, omegas, gammas)
        res = lsq_linear(A * w[:, None], y * w, bounds=(0.0, 1.0))
        return res, A

    def objective(gamma0):
        res, _ = solve(gamma0)
        return res.cost

    opt = minimize_scalar(objective, bounds=(0.0, gamma_hi),
                          method="bounded",
                          options={"xatol": gamma_hi * 1e-6})
    gamma0 = float(opt.x)
    res, A = solve(gamma0)
    p = res.x
    if p.sum() > 1.0:
        p = p / p.sum()
    resid = (A @ p - y) * w
    rms = float(np.sqrt(np.mean(((A @ p - y)) ** 2)))
    converged = bool(opt.success and res.success)

    params = {f"p{n}": float(p[n]) for n in ns}
    params["gamma0"] = gamma0
    errors = None
    if converged:
        errors = _population_errors(A, w, resid, ns, trace.shots_per_point)
        errors["gamma0"] = _gamma_curvature_error(objective, gamma0,
                                                  gamma_hi)
    return p, gamma0, FitResult(parameters=params, standard_errors=errors,
                                residual_rms=rms, converged=converged)


def _population_errors(A, w, resid, ns, shots):
    Aw = A * w[:, None]
    try:
        cov = np.linalg.inv(Aw.T @ Aw)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(Aw.T @ Aw)
    if shots <= 0:
        # unweighted data: scale by the residual variance instead
        dof = max(len(resid) - len(ns) - 1, 1)
        cov = cov * float(resid @ resid) / dof
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return {f"p{n}": float(sig[n]) for n in ns}


def _gamma_curvature_error(objective, gamma0, gamma_hi):
    h = max(gamma0, gamma_hi * 1e-3) * 0.05
    f0 = objective(gamma0)
    fp = objective(min(gamma0 + h, gamma_hi))
    fm = objective(max(gamma0 - h, 0.0))
    curv = (fp - 2 * f0 + fm) / h ** 2
    if curv <= 0 or not np.isfinite(curv):
        return float("inf")
    return float(math.sqrt(2.0 / curv))


def _extract_fourier(trace, omega0_eta, n_max_fit, alpha):
    tau = trace.times
    y = trace.p_d
    ns = np.arange(n_max_fit + 1)
    omegas = omega0_eta * np.sqrt(ns + 1.0)
    omega_grid, spec = _windowed_spectrum(tau, y)
    dgrid = omega_grid[1] - omega_grid[0]

    def amplitude_at(target, spectrum):
        i0 = int(round(target / dgrid))
        lo = max(i0 - 2, 1)
        hi = min(i0 + 3, len(spectrum) - 1)
        i = lo + int(np.argmax(spectrum[lo:hi]))
        _, height = _interp_peak(omega_grid, spectrum, i)
        return height

    raw = np.array([amplitude_at(om, spec) for om in omegas])

    def populations_for(gamma0):
        gammas = gamma0 * (ns + 1.0) ** alpha
        refs = np.empty(len(ns))
        for j, (om, gn) in enumerate(zip(omegas, gammas)):
            unit = 0.5 * (1.0 - np.cos(om * tau) * np.exp(-gn * tau))
            _, uspec = _windowed_spectrum(tau, unit)
            refs[j] = amplitude_at(om, uspec)
        p = raw / np.maximum(refs, 1e-30)
        p = np.clip(p, 0.0, None)
        total = p.sum()
        return p / total if total > 0 else p

    def objective(gamma0):
        p = populations_for(gamma0)
        gammas = gamma0 * (ns + 1.0) ** alpha
        model = _model_matrix(tau, omegas, gammas) @ p
        return float(np.mean((model - y) ** 2))

    gamma_hi = 20.0 / (tau[-1] - tau[0])
    opt = minimize_scalar(objective, bounds=(0.0, gamma_hi),
                          method="bounded",
                          options={"xatol": gamma_hi * 1e-5})
    gamma0 = float(opt.x)
    p = populations_for(gamma0)
    gammas = gamma0 * (ns + 1.0) ** alpha
    model = _model_matrix(tau, omegas, gammas) @ p
    rms = float(np.sqrt(np.mean((model - y) ** 2)))
    params = {f"p{n}": float(p[n]) for n in ns}
    params["gamma0"] = gamma0
    converged = bool(opt.success)
    errors = None
    if converged:
        w = _binomial_weights(trace)
        A = _model_matrix(tau, omegas, gammas)
        resid = (model - y) * w
        errors = _population_errors(A, w, resid, ns, trace.shots_per_point)
        errors["gamma0"] = _gamma_curvature_error(objective, gamma0,
                                                  gamma_hi)
    return p, gamma0, FitResult(parameters=params, standard_errors=errors,
                                residual_rms=rms, converged=converged)
