"""Acceptance suite: one test per release criterion.

Each test exercises the full pipeline at the committed tolerance and
prints a PASS line (visible with `pytest -s` or `-rP`); assertion
failures surface through pytest as usual. Run with

    pytest tests/test_acceptance.py -v -s
"""

import math
import time

import numpy as np
import pytest

from ionsim.analysis import (count_local_maxima, dominant_frequency,
                             extract_populations,
                             thermometry_from_sidebands)
from ionsim.config import ExperimentConfig
from ionsim.cooling import cooling_rates, doppler_limit
from ionsim.dynamics import (SIDEBAND_BLUE, SIDEBAND_RED, DriveParams,
                             NoiseModel, analytic_flopping, evolve,
                             flopping_trace, sideband_spectrum)
from ionsim.hilbert import (ElectronicLevel, FockSpace, excited_population,
                            fock_state, mean_phonon, phonon_distribution,
                            thermal_n_max, thermal_state)
from ionsim.measurement import (DetectionParams, choose_threshold,
                                discrimination_error)
from ionsim.scenarios import (cooled_state, heating_scenario,
                              prepare_fock1, scan_sideband)
from ionsim.sequence import (SequenceSyntaxError, format_sequence,
                             parse_sequence)

S = ElectronicLevel.S
TWO_PI = 2 * math.pi
OMEGA_01 = TWO_PI * 21e3
ETA = 0.0456


def blue_drive(sideband=SIDEBAND_BLUE):
    return DriveParams(omega0=OMEGA_01 / ETA, eta=ETA, sideband=sideband)


def cooling_config(**overrides):
    values = dict(trap_freq_axial=4.51e6, rabi_freq=460.1225e3,
                  cool_gamma_eff=30e3, cool_rabi_freq=110.015e3)
    values.update(overrides)
    return ExperimentConfig(**values)


def fock_prep_config():
    return ExperimentConfig(trap_freq_axial=2.0e6, rabi_freq=306.4081e3,
                            cool_gamma_eff=940e3, cool_rabi_freq=400e3,
                            dephasing_rate=1455.6, heating_rate=5.3,
                            intensity_jitter_rel=0.03,
                            line_shift_amplitude=10e3,
                            line_synchronized=True, n_max=38)


@pytest.fixture(scope="module")
def rabi_traces():
    """Noise-free 1.4 ms flopping traces from |0> and |1>, plus wall time."""
    times = np.linspace(0.0, 1.4e-3, 1401)[1:]
    noise = NoiseModel()
    start = time.monotonic()
    traces = {}
    for n in (0, 1):
        initial = fock_state(FockSpace(8), S, n)
        traces[n] = flopping_trace(initial, blue_drive(), noise, times)
    freqs = {n: dominant_frequency(traces[n].times, traces[n].p_d)
             for n in (0, 1)}
    elapsed = time.monotonic() - start
    return traces, freqs, elapsed


def test_criterion_01_rabi_frequency_ratio(rabi_traces):
    traces, freqs, elapsed = rabi_traces
    ratio = freqs[0] / freqs[1]
    assert ratio * math.sqrt(2) == pytest.approx(1.0, abs=0.01)
    assert elapsed < 10.0
    print(f"\nPASS criterion 1: Omega01/Omega12 = {ratio:.5f} "
          f"(1/sqrt2 = {1 / math.sqrt(2):.5f}, "
          f"dev {abs(ratio * math.sqrt(2)) - 1:+.2e}) in {elapsed:.1f} s")


def test_criterion_02_oscillation_count(rabi_traces):
    traces, _, _ = rabi_traces
    count = count_local_maxima(traces[0].p_d, min_height=0.5)
    assert 28 <= count <= 30
    print(f"\nPASS criterion 2: {count} Rabi oscillations in 1.4 ms "
          "(expected 29 +/- 1)")


def test_criterion_03_population_extraction():
    t20 = 20 * TWO_PI / OMEGA_01
    gamma0 = math.log(2) / t20           # envelope contrast 0.5 there
    times = np.linspace(0.0, 1.4e-3, 1121)[1:]
    tolerances = {"constrained_lsq": 0.02, "fourier": 0.05}
    worst = 0.0
    for p_true in ((0.89, 0.09, 0.02), (0.03, 0.87, 0.08, 0.02)):
        trace = analytic_flopping(p_true, blue_drive(), gamma0, 0.7, times)
        for method, tol in tolerances.items():
            p, _, _ = extract_populations(trace, OMEGA_01, n_max_fit=3,
                                          method=method)
            padded = np.zeros(4)
            padded[:len(p_true)] = p_true
            err = np.abs(p - padded).max()
            worst = max(worst, err / tol)
            assert err < tol, (p_true, method, p)
    print(f"\nPASS criterion 3: populations recovered, worst error at "
          f"{worst:.2f} of tolerance")


def test_criterion_04_thermometry_identity():
    tau = math.pi / OMEGA_01
    noise = NoiseModel()
    shots = 400
    seed = 5
    for nbar in (0.5, 1.0, 5.0, 10.0):
        space = FockSpace(thermal_n_max(nbar) + 4)
        state = thermal_state(space, S, nbar)
        exact = {}
        sampled = {}
        for i, sb in enumerate((SIDEBAND_RED, SIDEBAND_BLUE)):
            drive = blue_drive(sb)
            exact[sb] = sideband_spectrum(state, drive, [0.0], tau,
                                          noise).p_d[0]
            sampled[sb] = sideband_spectrum(
                state, drive, [0.0], tau, noise, shots_per_point=shots,
                rng_seed=seed + i).p_d[0]
        est = thermometry_from_sidebands(exact[SIDEBAND_RED],
                                         exact[SIDEBAND_BLUE])
        assert est == pytest.approx(nbar, rel=0.03)
        # statistical check against the true binomial sigma
        p_r, p_b = exact[SIDEBAND_RED], exact[SIDEBAND_BLUE]
        ratio = p_r / p_b
        sig_ratio = ratio * math.sqrt(p_r * (1 - p_r) / shots / p_r ** 2
                                      + p_b * (1 - p_b) / shots / p_b ** 2)
        sig_nbar = sig_ratio / (1 - ratio) ** 2
        est_sampled = thermometry_from_sidebands(sampled[SIDEBAND_RED],
                                                 sampled[SIDEBAND_BLUE])
        assert abs(est_sampled - nbar) <= 3.0 * sig_nbar
    print("\nPASS criterion 4: nbar in {0.5, 1, 5, 10} recovered within "
          "3% exact and 3 sigma at 400 shots/point")


def test_criterion_05_ground_state_cooling():
    config = cooling_config()
    a_minus, a_plus = cooling_rates(config.cooling())
    assert a_plus / a_minus <= 1e-3
    state, _ = cooled_state(config, duration=6.4e-3)
    p0 = phonon_distribution(state)[0]
    assert p0 >= 0.999
    red = scan_sideband(state, config, SIDEBAND_RED, points=11)
    blue = scan_sideband(state, config, SIDEBAND_BLUE, points=11)
    assert red.p_d.max() < 0.01 * blue.p_d.max()
    print(f"\nPASS criterion 5: p0 = {p0:.6f} after 6.4 ms, red peak "
          f"{red.p_d.max():.2e} < 1% of blue peak {blue.p_d.max():.3f}")


def test_criterion_06_cooling_rate():
    from ionsim.analysis import fit_exponential_decay

    config = cooling_config()
    nbar0 = doppler_limit(config.doppler_linewidth_rad(),
                          TWO_PI * config.trap_freq_axial)
    space = FockSpace(thermal_n_max(nbar0))
    from ionsim.cooling import sideband_cool
    initial = thermal_state(space, S, nbar0)
    _, traj = sideband_cool(initial, config.cooling(), 1.5e-3, dt=2e-5)
    fit = fit_exponential_decay(traj)
    rate = fit.parameters["rate"]
    assert fit.converged
    assert rate == pytest.approx(5000.0, rel=0.10)
    print(f"\nPASS criterion 6: fitted cooling rate {rate:.0f}/s within "
          "10% of the configured 5000/s")


def test_criterion_07_heating():
    # exact single evolution
    state = fock_state(FockSpace(30), S, 0)
    out = evolve(state, None, NoiseModel(heating_rate=5.3), 0.19)
    nbar = mean_phonon(out)
    assert nbar == pytest.approx(1.0, abs=0.02)

    # end-to-end sampled pipeline for both modes
    from ionsim.hilbert import Mode

    runs = {
        "axial 1/190ms": (ExperimentConfig(
            mode=Mode.AXIAL, trap_freq_axial=4.0e6,
            rabi_freq=433.3264e3, heating_rate=5.3,
            cool_gamma_eff=30e3, cool_rabi_freq=103.6085e3),
            [1e-4, 0.04, 0.08, 0.12, 0.16], 5.3),
        "radial 1/70ms": (ExperimentConfig(
            mode=Mode.RADIAL_Y, trap_freq_radial_y=1.9e6,
            rabi_freq=298.6496e3, heating_rate=14.286,
            cool_gamma_eff=30e3, cool_rabi_freq=71.411e3),
            [1e-4, 0.02, 0.04, 0.06, 0.08], 14.286),
    }
    slopes = {}
    for label, (config, delays, kappa) in runs.items():
        result = heating_scenario(config, delays, shots=400, seed=99)
        slope = result["fit"].parameters["slope"]
        assert slope == pytest.approx(kappa, rel=0.15), label
        slopes[label] = slope
    print(f"\nPASS criterion 7: exact <n>(0.19 s) = {nbar:.4f}; sampled "
          f"slopes {slopes['axial 1/190ms']:.2f}/s and "
          f"{slopes['radial 1/70ms']:.2f}/s within 15%")


def test_criterion_08_detection_fidelity():
    threshold = choose_threshold(42.0, 2.0)
    params = DetectionParams(42.0, 2.0, 2e-3, threshold)
    eps_b, eps_d = discrimination_error(params)
    assert eps_b < 1e-4 and eps_d < 1e-4
    rng = np.random.default_rng(2024)
    n = 1_000_000
    mc_b = np.mean(rng.poisson(42.0, n) < threshold)
    mc_d = np.mean(rng.poisson(2.0, n) >= threshold)
    for exact, mc in ((eps_b, mc_b), (eps_d, mc_d)):
        sigma = math.sqrt(max(exact * (1 - exact), 1e-12) / n)
        assert abs(mc - exact) <= 4.0 * sigma + 1e-9
    print(f"\nPASS criterion 8: threshold {threshold}, eps_bright = "
          f"{eps_b:.2e}, eps_dark = {eps_d:.2e}, Monte Carlo agrees "
          "within 4 sigma at 1e6 samples")


def test_criterion_09_doppler_limit():
    nbar = doppler_limit(TWO_PI * 20e6, TWO_PI * 1e6)
    assert nbar == pytest.approx(9.5, rel=1e-12)
    print(f"\nPASS criterion 9: Doppler limit nbar = {nbar:.3f} at "
          "20 MHz linewidth and 1 MHz trap frequency")


# the randomized corners intentionally brush the truncation edge; the
# invariants must hold there regardless, so the advisory warning is noise
@pytest.mark.filterwarnings("ignore::ionsim.hilbert.TruncationWarning")
def test_criterion_10_physics_invariants():
    rng = np.random.default_rng(31)
    start = time.monotonic()
    checked_oracle = 0
    for k in range(50):
        n_max = int(rng.integers(3, 11))
        space = FockSpace(n_max)
        omega_sb = rng.uniform(0.4, 2.5) * OMEGA_01
        eta = rng.uniform(0.03, 0.12)
        noise_free = k % 2 == 0
        if noise_free:
            n0 = int(rng.integers(0, max(1, n_max - 1)))
            state = fock_state(space, S, n0)
            drive = DriveParams(omega0=omega_sb / eta, eta=eta,
                                sideband=SIDEBAND_BLUE)
            noise = NoiseModel()
        else:
            state = thermal_state(space, S, rng.uniform(0.0,
                                                        0.05 * n_max))
            drive = DriveParams(omega0=omega_sb / eta, eta=eta,
                                sideband=int(rng.integers(-1, 2)),
                                detuning=rng.uniform(-1, 1) * omega_sb,
                                phase=rng.uniform(0, TWO_PI))
            noise = NoiseModel(dephasing_rate=rng.uniform(0, 400),
                               heating_rate=rng.uniform(0, 15))
        omega_n = omega_sb * math.sqrt(n0 + 1) if noise_free else omega_sb
        tau = rng.uniform(0.2, 2.5) * math.pi / omega_n
        out = evolve(state, drive, noise, tau)
        assert abs(np.trace(out.rho) - 1.0) < 1e-9
        assert np.abs(out.rho - out.rho.conj().T).max() < 1e-12
        assert np.linalg.eigvalsh(out.rho).min() > -1e-8
        if noise_free:
            expected = math.sin(omega_n * tau / 2.0) ** 2
            assert abs(excited_population(out) - expected) < 1e-6
            checked_oracle += 1
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    print(f"\nPASS criterion 10: 50 randomized evolutions kept all state "
          f"invariants; {checked_oracle} checked against the sin^2 oracle "
          f"({elapsed:.1f} s)")


def test_criterion_11_fock_preparation_fidelity():
    config = fock_prep_config()
    state = prepare_fock1(config)
    p1 = phonon_distribution(state)[1]
    assert 0.84 <= p1 <= 0.93
    print(f"\nPASS criterion 11: prepared |n=1> with p1 = {p1:.3f} "
          "(target 0.84..0.93)")


def test_criterion_12_parser_suite(tmp_path):
    from ionsim.cli import main

    main(["presets", "--out", str(tmp_path)])
    seq_files = sorted(tmp_path.glob("*.seq"))
    assert len(seq_files) >= 4
    for path in seq_files:
        seq = parse_sequence(path.read_text())
        assert parse_sequence(format_sequence(seq)).steps == seq.steps

    malformed = [
        "pulse xyz pi", "pulse bsb", "pulse bsb 100", "wait",
        "sideband_cool 6.4", "detect 2ms\npulse bsb pi",
        "detect 2ms\ndetect 2ms", "warmup 5ms", "pulse bsb pi detuning=",
        "pulse bsb pi foo=1",
    ]
    for text in malformed:
        with pytest.raises(SequenceSyntaxError) as err:
            parse_sequence(text)
        assert err.value.line >= 1
        assert err.value.column >= 1
    print(f"\nPASS criterion 12: {len(seq_files)} shipped sequences "
          f"round-trip; {len(malformed)} malformed inputs produce "
          "positioned errors")
