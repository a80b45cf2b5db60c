import math

import numpy as np
import pytest

from ionsim.dynamics import (SIDEBAND_BLUE, SIDEBAND_CARRIER, SIDEBAND_RED,
                             DriveParams, FloppingTrace, NoiseModel, Regime,
                             Spectrum, StabilityError, analytic_flopping,
                             drive_hamiltonian, evolve, flopping_trace,
                             lamb_dicke, rabi_frequency, sideband_spectrum)
from ionsim.hilbert import (ElectronicLevel, FockSpace, JointState,
                            TruncationWarning, excited_population,
                            fock_state, mean_phonon, thermal_state)

S, D = ElectronicLevel.S, ElectronicLevel.D
TWO_PI = 2 * math.pi
OMEGA_01 = TWO_PI * 21e3


def blue_drive(eta=0.05, omega_sb=OMEGA_01, **kw):
    return DriveParams(omega0=omega_sb / eta, eta=eta,
                       sideband=SIDEBAND_BLUE, **kw)


def superposition_state(space, n=0):
    """(|S,n> + |D,n>)/sqrt(2) as a density matrix."""
    d = space.dim
    i, j = space.index(S, n), space.index(D, n)
    rho = np.zeros((d, d), dtype=complex)
    rho[i, i] = rho[j, j] = 0.5
    rho[i, j] = rho[j, i] = 0.5
    return JointState(rho, space)


class TestRabiFrequency:
    def test_blue_from_ground(self):
        assert rabi_frequency(0, blue_drive()) == pytest.approx(OMEGA_01)

    def test_ratio_sqrt2(self):
        drive = blue_drive()
        ratio = rabi_frequency(0, drive) / rabi_frequency(1, drive)
        assert ratio == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_red_from_ground_is_zero(self):
        drive = DriveParams(omega0=1e5, eta=0.05, sideband=SIDEBAND_RED)
        assert rabi_frequency(0, drive) == 0.0

    def test_carrier(self):
        drive = DriveParams(omega0=3e5, eta=0.05, sideband=SIDEBAND_CARRIER)
        assert rabi_frequency(7, drive) == 3e5

    def test_sqrt_ladder(self):
        drive = blue_drive()
        for n in range(12):
            expected = math.sqrt((n + 1) / (n + 2))
            ratio = rabi_frequency(n, drive) / rabi_frequency(n + 1, drive)
            assert ratio == pytest.approx(expected, abs=1e-14)

    def test_negative_n(self):
        with pytest.raises(ValueError):
            rabi_frequency(-1, blue_drive())

    @pytest.mark.parametrize("eta", [0.02, 0.05, 0.1])
    @pytest.mark.parametrize("sideband", [-1, 0, 1])
    def test_laguerre_agrees_with_first_order(self, eta, sideband):
        for n in range(8):
            first = DriveParams(1e5, eta, sideband)
            exact = DriveParams(1e5, eta, sideband, regime=Regime.EXACT)
            a = rabi_frequency(n, first)
            b = rabi_frequency(n, exact)
            if a == 0.0:
                assert b == 0.0
                continue
            assert abs(b - a) / a <= 2.0 * (n + 1) * eta ** 2

    def test_exact_red_matches_laguerre_formula(self):
        # independent evaluation of the matrix element for n -> n-1
        eta, n = 0.12, 4
        drive = DriveParams(2e5, eta, SIDEBAND_RED, regime=Regime.EXACT)
        x = eta ** 2
        lag = sum((-1) ** k * math.comb(n, n - 1 - k) * x ** k
                  / math.factorial(k) for k in range(n))
        expected = 2e5 * math.exp(-x / 2) * eta / math.sqrt(n) * abs(lag)
        assert rabi_frequency(n, drive) == pytest.approx(expected,
                                                         rel=1e-12)


class TestDriveHamiltonian:
    def test_hermitian(self):
        space = FockSpace(6)
        for sb in (-1, 0, 1):
            H = drive_hamiltonian(space, DriveParams(1e5, 0.07, sb,
                                                     detuning=2e4,
                                                     phase=0.8))
            assert np.abs(H - H.conj().T).max() < 1e-14

    def test_carrier_block_structure(self):
        space = FockSpace(3)
        H = drive_hamiltonian(space, DriveParams(
            2e5, 0.05, SIDEBAND_CARRIER))
        for n in range(4):
            assert H[space.index(D, n), space.index(S, n)] == \
                pytest.approx(1e5)
        assert np.count_nonzero(H) == 8

    def test_blue_coupling_element(self):
        space = FockSpace(4)
        drive = blue_drive()
        H = drive_hamiltonian(space, drive)
        elem = H[space.index(D, 1), space.index(S, 0)]
        assert elem == pytest.approx(0.5 * rabi_frequency(0, drive))

    def test_detuned_zero_drive_is_diagonal(self):
        space = FockSpace(3)
        H = drive_hamiltonian(space, DriveParams(0.0, 0.05, SIDEBAND_BLUE,
                                                 detuning=5e4))
        assert np.abs(H - np.diag(np.diagonal(H))).max() == 0.0

    def test_phase_enters_coupling(self):
        space = FockSpace(2)
        H = drive_hamiltonian(space, blue_drive(phase=math.pi / 2))
        elem = H[space.index(D, 1), space.index(S, 0)]
        assert elem.real == pytest.approx(0.0, abs=1e-9)
        assert elem.imag == pytest.approx(0.5 * OMEGA_01)


class TestEvolveOracles:
    def test_pi_pulse_full_transfer(self):
        state = fock_state(FockSpace(8), S, 0)
        out = evolve(state, blue_drive(), NoiseModel(), math.pi / OMEGA_01)
        assert excited_population(out) == pytest.approx(1.0, abs=1e-6)

    def test_matches_sin_squared(self):
        # noise-free blue sideband from |S,1>: P_D = sin^2(Omega_12 t / 2)
        drive = blue_drive()
        om12 = rabi_frequency(1, drive)
        state = fock_state(FockSpace(8), S, 1)
        for frac in (0.25, 0.6, 1.3):
            tau = frac * math.pi / om12
            out = evolve(state, drive, NoiseModel(), tau)
            assert excited_population(out) == pytest.approx(
                math.sin(om12 * tau / 2) ** 2, abs=1e-6)

    def test_detuned_generalized_rabi(self):
        drive = blue_drive(detuning=0.7 * OMEGA_01)
        omr = math.hypot(OMEGA_01, drive.detuning)
        tau = 2.3 / OMEGA_01
        out = evolve(fock_state(FockSpace(6), S, 0), drive, NoiseModel(),
                     tau)
        expected = (OMEGA_01 / omr) ** 2 * math.sin(omr * tau / 2) ** 2
        assert excited_population(out) == pytest.approx(expected, abs=1e-6)

    def test_coherence_decays_at_dephasing_rate(self):
        gamma = 120.0
        space = FockSpace(2)
        state = superposition_state(space)
        for t in (3e-3, 8e-3):
            out = evolve(state, None, NoiseModel(dephasing_rate=gamma), t)
            coh = abs(out.rho[space.index(S, 0), space.index(D, 0)])
            assert coh == pytest.approx(0.5 * math.exp(-gamma * t),
                                        abs=1e-6)

    def test_heating_linear_growth(self):
        noise = NoiseModel(heating_rate=5.3)
        state = fock_state(FockSpace(30), S, 0)
        out = evolve(state, None, noise, 0.19)
        assert mean_phonon(out) == pytest.approx(5.3 * 0.19, rel=0.02)

    def test_heating_slope_from_thermal_start(self):
        noise = NoiseModel(heating_rate=40.0)
        state = thermal_state(FockSpace(40), S, 1.2)
        out = evolve(state, None, noise, 0.01)
        gained = mean_phonon(out) - mean_phonon(state)
        assert gained == pytest.approx(0.4, rel=0.01)

    def test_driven_dephasing_matches_damped_bloch(self):
        # exact two-level solution: w'' + gamma w' + Omega^2 w = 0
        gamma = 0.02 * OMEGA_01
        drive = blue_drive()
        noise = NoiseModel(dephasing_rate=gamma)
        state = fock_state(FockSpace(4), S, 0)
        omt = math.sqrt(OMEGA_01 ** 2 - gamma ** 2 / 4)
        for tau in (0.3e-4, 1.1e-4, 2.9e-4):
            out = evolve(state, drive, noise, tau)
            w = -(math.cos(omt * tau) + gamma / (2 * omt)
                  * math.sin(omt * tau)) * math.exp(-gamma * tau / 2)
            assert excited_population(out) == pytest.approx(
                (1 + w) / 2, abs=1e-6)

    def test_weak_dephasing_matches_analytic_envelope(self):
        # the closed-form model with gamma_n = gamma_phi/2 (alpha = 0)
        gamma = 2e-4 * OMEGA_01
        drive = blue_drive()
        state = fock_state(FockSpace(4), S, 0)
        times = np.linspace(1e-5, 8e-4, 7)
        ref = analytic_flopping([1.0], drive, gamma / 2, 0.0, times)
        for tau, expected in zip(times, ref.p_d):
            out = evolve(state, drive, NoiseModel(dephasing_rate=gamma),
                         tau)
            assert excited_population(out) == pytest.approx(expected,
                                                            abs=1e-4)

    def test_zero_duration_returns_copy(self):
        state = fock_state(FockSpace(3), S, 1)
        out = evolve(state, blue_drive(), NoiseModel(), 0.0)
        assert np.array_equal(out.rho, state.rho)


class TestEvolveValidation:
    def test_dt_too_large(self):
        state = fock_state(FockSpace(4), S, 0)
        with pytest.raises(StabilityError):
            evolve(state, blue_drive(), NoiseModel(), 1e-3, dt=1e-3)

    def test_truncation_warning_on_overflow(self):
        state = fock_state(FockSpace(4), S, 0)
        with pytest.warns(TruncationWarning):
            evolve(state, None, NoiseModel(heating_rate=200.0), 0.02)

    def test_negative_duration(self):
        with pytest.raises(ValueError):
            evolve(fock_state(FockSpace(3), S, 0), None, NoiseModel(),
                   -1e-6)


class TestInvariantPreservation:
    @pytest.mark.parametrize("seed", range(8))
    def test_random_evolutions(self, seed):
        rng = np.random.default_rng(seed)
        n_max = int(rng.integers(3, 9))
        space = FockSpace(n_max)
        if rng.random() < 0.5:
            state = thermal_state(space, S, rng.uniform(0.0, 0.8))
        else:
            state = superposition_state(space, int(rng.integers(0, 2)))
        omega_sb = rng.uniform(0.5, 2.0) * OMEGA_01
        drive = DriveParams(omega0=omega_sb / 0.06, eta=0.06,
                            sideband=int(rng.integers(-1, 2)),
                            detuning=rng.uniform(-1, 1) * omega_sb,
                            phase=rng.uniform(0, TWO_PI))
        noise = NoiseModel(dephasing_rate=rng.uniform(0, 500),
                           heating_rate=rng.uniform(0, 20))
        out = evolve(state, drive, noise,
                     rng.uniform(0.2, 3.0) * math.pi / omega_sb)
        assert abs(np.trace(out.rho) - 1) < 1e-9
        assert np.abs(out.rho - out.rho.conj().T).max() < 1e-12
        assert np.linalg.eigvalsh(out.rho).min() > -1e-8

    def test_integrator_second_order_or_better(self):
        state = fock_state(FockSpace(5), S, 0)
        drive = blue_drive(detuning=0.3 * OMEGA_01)
        noise = NoiseModel(dephasing_rate=300.0, heating_rate=10.0)
        tau = 1.5 / OMEGA_01
        dts = [3e-7, 1.5e-7, 7.5e-8]
        p = [excited_population(evolve(state, drive, noise, tau, dt=dt))
             for dt in dts]
        d1 = abs(p[1] - p[0])
        d2 = abs(p[2] - p[1])
        assert d2 <= 4.0 * 0.25 * d1 + 1e-14


class TestFloppingTrace:
    def test_exact_zero_time_point(self):
        state = fock_state(FockSpace(5), S, 2)
        trace = flopping_trace(state, blue_drive(), NoiseModel(),
                               [0.0, 1e-5])
        assert trace.p_d[0] == 0.0

    def test_matches_pointwise_evolution(self):
        state = fock_state(FockSpace(6), S, 0)
        drive = blue_drive()
        noise = NoiseModel(dephasing_rate=200.0)
        times = np.array([2e-5, 5e-5, 9e-5])
        trace = flopping_trace(state, drive, noise, times)
        for tau, p in zip(times, trace.p_d):
            direct = excited_population(evolve(state, drive, noise, tau))
            assert p == pytest.approx(direct, abs=1e-9)

    def test_oscillation_count_vs_analytic(self):
        state = fock_state(FockSpace(6), S, 0)
        times = np.linspace(0, 1.4e-3, 1401)[1:]
        trace = flopping_trace(state, blue_drive(), NoiseModel(), times)
        ref = analytic_flopping([1.0], blue_drive(), 0.0, 0.0, times)
        assert np.abs(trace.p_d - ref.p_d).max() < 1e-5

    def test_sampled_deterministic_and_order_independent(self):
        state = fock_state(FockSpace(4), S, 0)
        times = np.array([1e-5, 2e-5, 3e-5])
        kw = dict(shots_per_point=25, rng_seed=7)
        a = flopping_trace(state, blue_drive(), NoiseModel(), times, **kw)
        b = flopping_trace(state, blue_drive(), NoiseModel(), times, **kw)
        assert np.array_equal(a.p_d, b.p_d)
        sub = flopping_trace(state, blue_drive(), NoiseModel(), times[:2],
                             **kw)
        assert np.array_equal(sub.p_d, a.p_d[:2])

    def test_sampled_tracks_exact(self):
        state = fock_state(FockSpace(4), S, 0)
        times = np.array([5e-6, 1.2e-5])
        exact = flopping_trace(state, blue_drive(), NoiseModel(), times)
        sampled = flopping_trace(state, blue_drive(), NoiseModel(), times,
                                 shots_per_point=400, rng_seed=3)
        assert np.abs(sampled.p_d - exact.p_d).max() < 0.1

    def test_per_shot_jitter_path(self):
        state = fock_state(FockSpace(3), S, 0)
        noise = NoiseModel(intensity_jitter_rel=0.1)
        times = np.array([1e-5, 2e-5])
        trace = flopping_trace(state, blue_drive(), noise, times,
                               shots_per_point=4, rng_seed=11)
        again = flopping_trace(state, blue_drive(), noise, times,
                               shots_per_point=4, rng_seed=11)
        assert np.array_equal(trace.p_d, again.p_d)

    def test_times_must_increase(self):
        state = fock_state(FockSpace(3), S, 0)
        with pytest.raises(ValueError):
            flopping_trace(state, blue_drive(), NoiseModel(),
                           [2e-5, 1e-5])


class TestAnalyticFlopping:
    def test_single_fock_identity(self):
        times = np.linspace(0, 5e-4, 300)
        trace = analytic_flopping([1.0], blue_drive(), 0.0, 0.0, times)
        assert np.allclose(trace.p_d, np.sin(OMEGA_01 * times / 2) ** 2,
                           atol=1e-12)

    def test_envelope_contrast_half(self):
        t20 = 20 * TWO_PI / OMEGA_01
        gamma0 = math.log(2) / t20
        trace = analytic_flopping([0.89, 0.09, 0.02], blue_drive(), gamma0,
                                  0.7, np.array([t20]))
        # the n = 0 component carries envelope exp(-gamma0 t) = 1/2 there
        assert math.exp(-gamma0 * t20) == pytest.approx(0.5, abs=1e-12)

    def test_dominant_component_frequency(self):
        times = np.linspace(0, 1.4e-3, 2048)[1:]
        trace = analytic_flopping([0.03, 0.87, 0.08, 0.02], blue_drive(),
                                  300.0, 0.7, times)
        spec = np.abs(np.fft.rfft(trace.p_d - trace.p_d.mean()))
        freqs = np.fft.rfftfreq(times.size, d=times[1] - times[0])
        peak = freqs[np.argmax(spec)] * TWO_PI
        om12 = rabi_frequency(1, blue_drive())
        assert abs(peak - om12) / om12 < 0.02

    def test_red_sideband_ground_term_vanishes(self):
        drive = DriveParams(omega0=4e5, eta=0.05, sideband=SIDEBAND_RED)
        trace = analytic_flopping([1.0], drive, 0.0, 0.0,
                                  np.linspace(0, 1e-4, 50))
        assert np.all(trace.p_d == 0.0)

    def test_invalid_populations(self):
        with pytest.raises(ValueError):
            analytic_flopping([-0.1, 1.0], blue_drive(), 0.0, 0.0, [1e-5])
        with pytest.raises(ValueError):
            analytic_flopping([0.9, 0.2], blue_drive(), 0.0, 0.0, [1e-5])


class TestSidebandSpectrum:
    def test_red_scan_of_ground_state_dark(self):
        state = fock_state(FockSpace(6), S, 0)
        drive = DriveParams(omega0=4.2e5, eta=0.05, sideband=SIDEBAND_RED)
        spec = sideband_spectrum(state, drive,
                                 np.linspace(-5e4, 5e4, 9),
                                 math.pi / (4.2e5 * 0.05), NoiseModel())
        assert spec.p_d.max() <= 1e-3

    def test_thermal_peak_ratio(self):
        nbar = 2.0
        state = thermal_state(FockSpace(35), S, nbar)
        tau = math.pi / OMEGA_01
        peaks = {}
        for sb in (SIDEBAND_RED, SIDEBAND_BLUE):
            spec = sideband_spectrum(state, blue_drive() if sb > 0 else
                                     DriveParams(OMEGA_01 / 0.05, 0.05, sb),
                                     [0.0], tau, NoiseModel())
            peaks[sb] = spec.p_d[0]
        ratio = peaks[SIDEBAND_RED] / peaks[SIDEBAND_BLUE]
        assert ratio == pytest.approx(nbar / (1 + nbar), rel=0.03)

    def test_thermal_red_peak_present(self):
        state = thermal_state(FockSpace(72), S, 10.0)
        drive = DriveParams(OMEGA_01 / 0.05, 0.05, SIDEBAND_RED)
        spec = sideband_spectrum(state, drive, [0.0],
                                 math.pi / OMEGA_01, NoiseModel())
        assert spec.p_d[0] > 0.1


class TestLambDicke:
    def test_default_axial_value(self):
        eta = lamb_dicke(TWO_PI * 4.51e6)
        assert eta == pytest.approx(0.0456, abs=5e-4)

    def test_formula(self):
        # independent recomputation
        hbar = 1.054571817e-34
        m = 39.96259085 * 1.660539066e-27
        omega = TWO_PI * 2e6
        k = TWO_PI / 729e-9
        assert lamb_dicke(omega) == pytest.approx(
            k * math.sqrt(hbar / (2 * m * omega)), rel=1e-9)


class TestDataTypes:
    def test_trace_validation(self):
        with pytest.raises(ValueError):
            FloppingTrace(np.array([1e-5, 1e-5]), np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            FloppingTrace(np.array([1e-5, 2e-5]), np.array([0.1, 1.3]))

    def test_spectrum_validation(self):
        with pytest.raises(ValueError):
            Spectrum(np.array([2.0, 1.0]), np.array([0.1, 0.1]))

    def test_noise_model_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(dephasing_rate=-1.0)
        with pytest.raises(ValueError):
            NoiseModel(intensity_jitter_rel=0.25)

    def test_drive_validation(self):
        with pytest.raises(ValueError):
            DriveParams(omega0=-1.0, eta=0.05)
        with pytest.raises(ValueError):
            DriveParams(omega0=1.0, eta=1.5)
        with pytest.raises(ValueError):
            DriveParams(omega0=1.0, eta=0.05, sideband=2)
