"""Experiment scenarios shared by the command-line runner and the tests.

Each function composes the physics modules into one of the measurement
protocols: sideband spectroscopy and thermometry, Rabi flopping with Fock
preparation, cooling-dynamics scans, and heating-rate scans. They return
plain data (arrays and dicts); file emission lives in the CLI layer.
"""

from __future__ import annotations

import math

import numpy as np

from . import analysis, cooling, measurement, sequence
from .config import ExperimentConfig
from .dynamics import (SIDEBAND_BLUE, SIDEBAND_RED, NoiseModel,
                       Spectrum, flopping_trace, sideband_spectrum)
from .hilbert import (ElectronicLevel, JointState, excited_population,
                      mean_phonon, phonon_distribution, thermal_n_max,
                      thermal_state, truncate_state)
from .measurement import sample_detection

PREP_FOCK1_SEQ = """\
doppler_cool
pump
sideband_cool 6.4ms
pulse bsb pi
quench
"""


def default_probe_duration(config: ExperimentConfig) -> float:
    """pi time of the n = 0 blue sideband, the standard probe pulse."""
    return math.pi / config.sideband_rabi()


def sideband_peaks(state: JointState, config: ExperimentConfig,
                   noise: NoiseModel | None = None,
                   pulse_duration: float | None = None,
                   shots: int = 0, seed: int = 0) -> tuple[float, float]:
    """(p_red, p_blue) on resonance with matched probe parameters."""
    if noise is None:
        noise = NoiseModel()
    if pulse_duration is None:
        pulse_duration = default_probe_duration(config)
    out = []
    for i, sb in enumerate((SIDEBAND_RED, SIDEBAND_BLUE)):
        spec = sideband_spectrum(state, config.drive(sb), [0.0],
                                 pulse_duration, noise,
                                 shots_per_point=shots,
                                 rng_seed=seed + i,
                                 dt=config.dt or None)
        out.append(float(spec.p_d[0]))
    return out[0], out[1]


def thermometry(state: JointState, config: ExperimentConfig,
                noise: NoiseModel | None = None,
                pulse_duration: float | None = None, shots: int = 0,
                seed: int = 0) -> dict:
    """Sideband-ratio temperature measurement of a motional state."""
    p_red, p_blue = sideband_peaks(state, config, noise, pulse_duration,
                                   shots, seed)
    nbar = analysis.thermometry_from_sidebands(p_red, p_blue) \
        if p_blue > 0 and p_red < p_blue else 0.0
    return {"p_red": p_red, "p_blue": p_blue, "nbar": nbar,
            "p0": 1.0 / (1.0 + nbar)}


def scan_sideband(state: JointState, config: ExperimentConfig, sideband: int,
                  points: int = 25, span_factor: float = 4.0,
                  noise: NoiseModel | None = None,
                  pulse_duration: float | None = None, shots: int = 0,
                  seed: int = 0) -> Spectrum:
    """Symmetric detuning scan across one sideband."""
    if noise is None:
        noise = NoiseModel()
    if pulse_duration is None:
        pulse_duration = default_probe_duration(config)
    span = span_factor * config.sideband_rabi()
    detunings = np.linspace(-span, span, points)
    return sideband_spectrum(state, config.drive(sideband), detunings,
                             pulse_duration, noise, shots_per_point=shots,
                             rng_seed=seed, dt=config.dt or None)


def doppler_state(config: ExperimentConfig,
                  n_max: int | None = None) -> JointState:
    nbar = config.doppler_nbar()
    if n_max is None:
        n_max = max(config.n_max, thermal_n_max(nbar)) if config.n_max \
            else thermal_n_max(nbar)
    return thermal_state(config.fock_space(n_max), ElectronicLevel.S, nbar)


def cooled_state(config: ExperimentConfig, duration: float = 6.4e-3,
                 n_max: int | None = None):
    """Doppler stage then sideband cooling; returns (state, trajectory)."""
    initial = doppler_state(config, n_max)
    return cooling.sideband_cool(initial, config.cooling(), duration,
                                 dt=min(1e-4, duration / 10.0)
                                 if duration > 0 else 1e-4)


def prepare_fock1(config: ExperimentConfig, noise: NoiseModel | None = None,
                  flop_n_max: int = 12) -> JointState:
    """Fock |n=1> preparation: cool, pump, blue pi pulse, quench.

    Runs the shipped five-step protocol through the sequence executor and
    projects the result onto a small Fock space suitable for flopping.
    """
    if noise is None:
        noise = config.noise()
    seq = sequence.parse_sequence(PREP_FOCK1_SEQ, name="prep_fock1")
    timeline = sequence.compile_sequence(seq, config)
    state = sequence.run_state_pipeline(timeline, config, noise)
    return truncate_state(state, flop_n_max)


def flop_scenario(config: ExperimentConfig, initial: str = "n0",
                  duration: float = 1.4e-3, points: int = 1120,
                  shots: int = 0, seed: int | None = None,
                  exact: bool = False, n_max_fit: int = 3) -> dict:
    """Blue-sideband Rabi flopping plus population extraction.

    initial = 'n0' probes the state left by ground-state cooling;
    'n1' first runs the Fock |1> preparation protocol.
    """
    if initial not in ("n0", "n1"):
        raise ValueError("initial must be 'n0' or 'n1'")
    if seed is None:
        seed = config.seed
    noise = config.noise()
    if exact:
        shots = 0
    if initial == "n0":
        state, _ = cooled_state(config)
        state = truncate_state(state, 12)
    else:
        state = prepare_fock1(config, noise)
    times = np.linspace(0.0, duration, points + 1)[1:]
    trace = flopping_trace(state, config.drive(SIDEBAND_BLUE), noise,
                           times, shots_per_point=shots, rng_seed=seed,
                           dt=config.dt or None)
    populations, gamma0, fit = analysis.extract_populations(
        trace, config.sideband_rabi(), n_max_fit=n_max_fit,
        alpha=config.dephasing_fock_exponent)
    return {
        "trace": trace,
        "populations": populations,
        "gamma0": gamma0,
        "fit": fit,
        "dominant_frequency": analysis.dominant_frequency(trace.times,
                                                          trace.p_d),
        "oscillations": analysis.count_local_maxima(
            trace.p_d, min_height=0.5 * trace.p_d.max()),
        "true_populations": phonon_distribution(state),
    }


def spectrum_scenario(config: ExperimentConfig, points: int = 25,
                      shots: int = 0, seed: int | None = None,
                      cool_duration: float = 6.4e-3) -> dict:
    """Red/blue sideband scans after Doppler and after sideband cooling."""
    if seed is None:
        seed = config.seed
    hot = doppler_state(config)
    cold, _ = cooled_state(config, cool_duration, n_max=hot.space.n_max)
    out = {"nbar_doppler_expected": config.doppler_nbar()}
    for label, state in (("doppler", hot), ("cooled", cold)):
        red = scan_sideband(state, config, SIDEBAND_RED, points,
                            shots=shots, seed=seed)
        blue = scan_sideband(state, config, SIDEBAND_BLUE, points,
                             shots=shots, seed=seed + 1)
        out[f"red_{label}"] = red
        out[f"blue_{label}"] = blue
        p_red = float(red.p_d.max())
        p_blue = float(blue.p_d.max())
        summary = {"p_red_peak": p_red, "p_blue_peak": p_blue}
        if 0 <= p_red < p_blue:
            nbar = analysis.thermometry_from_sidebands(p_red, p_blue)
            summary["nbar"] = nbar
            summary["p0"] = 1.0 / (1.0 + nbar)
        out[f"summary_{label}"] = summary
    return out


def cooling_scenario(config: ExperimentConfig, duration: float = 6.4e-3,
                     sample_every: float = 1e-4) -> dict:
    """Cooling trajectory from the Doppler limit plus an exponential fit."""
    state, trajectory = cooled_state(config)
    a_minus, a_plus = cooling.cooling_rates(config.cooling())
    keep = trajectory[:, 0] <= duration + 1e-12
    traj = trajectory[keep]
    stride = max(1, int(round(sample_every
                              / (traj[1, 0] - traj[0, 0])))) \
        if len(traj) > 1 else 1
    sampled = traj[::stride]
    fit = analysis.fit_exponential_decay(sampled)
    return {
        "trajectory": traj,
        "fit": fit,
        "final_state": state,
        "nbar_initial": float(traj[0, 1]),
        "nbar_final": float(traj[-1, 1]),
        "rate_expected": a_minus - a_plus,
        "nbar_limit": cooling.cooling_limit(config.cooling()),
        "nbar_detection_floor": config.offresonant_excitation,
    }


def heating_scenario(config: ExperimentConfig, delays, shots: int = 400,
                     seed: int | None = None, exact: bool = False) -> dict:
    """Heating-rate measurement: cool, wait, sideband thermometry, fit.

    The wait is drive-free Lindblad evolution, so its state is exact and
    shared by all shots of a delay; sampling happens in the two sideband
    probes and in photon-count detection.
    """
    from .dynamics import evolve

    if seed is None:
        seed = config.seed
    delays = np.asarray(sorted(delays), dtype=float)
    if delays.size < 2:
        raise ValueError("need at least two delays to fit a heating rate")
    kappa = config.heating_rate
    nbar_top = kappa * delays[-1] + 1.0
    n_max = max(thermal_n_max(nbar_top),
                thermal_n_max(config.doppler_nbar()), 15)
    cold, _ = cooled_state(config, n_max=n_max)
    noise = config.noise()
    det = config.detection()
    points = []
    for i, delay in enumerate(delays):
        state = evolve(cold, None, noise, float(delay),
                       dt=config.dt or None) if delay > 0 else cold
        if exact or shots == 0:
            meas = thermometry(state, config)
            nbar_est = meas["nbar"]
        else:
            nbar_est = _sampled_thermometry(state, config, det, shots,
                                            seed=seed + 1000 * i)
        points.append((float(delay), float(nbar_est),
                       float(mean_phonon(state))))
    pts = np.array(points)
    fit = analysis.fit_linear(pts[:, :2])
    return {"points": pts, "fit": fit, "kappa_expected": kappa}


def _sampled_thermometry(state, config, det, shots, seed):
    """Shot-sampled red/blue probe with photon-count classification."""
    p_red, p_blue = sideband_peaks(state, config)
    est = {}
    for j, p in enumerate((p_red, p_blue)):
        hits = 0
        for s in range(shots):
            rng = np.random.default_rng(
                np.random.SeedSequence((seed, j, s)))
            _, shelved = sample_detection(p, det, rng)
            hits += shelved
        est[j] = hits / shots
    if est[1] <= 0 or est[0] >= est[1]:
        return 0.0
    return analysis.thermometry_from_sidebands(est[0], est[1])


def run_scenario(config: ExperimentConfig, seq_text: str,
                 repetitions: int | None = None,
                 seed: int | None = None, name: str = "") -> dict:
    """Parse, compile, and estimate the shelving probability."""
    if seed is None:
        seed = config.seed
    if repetitions is None:
        repetitions = config.repetitions
    seq = sequence.parse_sequence(seq_text, name=name)
    timeline = sequence.compile_sequence(seq, config)
    noise = config.noise()
    p_hat, ci = sequence.estimate_excitation(timeline, config, noise,
                                             repetitions, seed)
    exact_state = sequence.run_state_pipeline(timeline, config, noise)
    return {
        "timeline": timeline,
        "p_hat": p_hat,
        "ci": ci,
        "repetitions": repetitions,
        "p_d_exact": excited_population(exact_state),
        "mean_phonon": mean_phonon(exact_state),
    }
