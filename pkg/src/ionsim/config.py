"""Experiment configuration: flat key = value files with explicit units.

A config aggregates every calibrated quantity of the apparatus (trap
frequencies, drive strengths, decoherence budget, detection means, cooling
parameters) plus run controls (seed, repetitions, truncation). Unknown
keys are rejected so presets cannot silently drift. Absolute hardware
calibrations (laser power to Rabi frequency, quench power to effective
linewidth) are inputs here, not derived quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .cooling import CoolingParams
from .dynamics import DriveParams, NoiseModel, Regime, lamb_dicke
from .hilbert import FockSpace, Mode, suggested_n_max
from .measurement import DetectionParams, choose_threshold
from .units import TWO_PI, parse_duration, parse_frequency


@dataclass
class ExperimentConfig:
    # trap
    mode: Mode = Mode.AXIAL
    trap_freq_axial: float = 4.51e6        # Hz
    trap_freq_radial_y: float = 2.07e6     # Hz
    trap_freq_radial_x: float = 2.16e6     # Hz
    eta_axial: float = 0.0                 # 0 = derive from trap frequency
    eta_radial_y: float = 0.0
    eta_radial_x: float = 0.0
    projection_cos: float = 1.0            # beam/mode overlap for derived eta
    # probe drive
    rabi_freq: float = 460e3               # Hz, carrier Omega0 / 2pi
    coupling_regime: Regime = Regime.LAMB_DICKE
    pi_reference_n: int = 0
    # decoherence
    dephasing_rate: float = 0.0            # 1/s
    dephasing_fock_exponent: float = 0.7
    heating_rate: float = 0.0              # quanta/s
    intensity_jitter_rel: float = 0.0
    line_shift_amplitude: float = 0.0      # Hz
    line_shift_frequency: float = 50.0     # Hz
    line_synchronized: bool = True
    # detection
    bright_mean: float = 42.0
    dark_mean: float = 2.0
    detect_window: float = 2e-3            # s
    threshold: int = 0                     # 0 = optimize at load
    detect_d_lifetime: float = 0.0         # s, 0 = ignore mid-window decay
    # Doppler stage
    doppler_linewidth: float = 20e6        # Hz, dipole transition width
    # sideband cooling
    cool_gamma_eff: float = 30e3           # Hz, quench-broadened D width
    cool_rabi_freq: float = 110e3          # Hz
    recoil_eta: float = 0.0                # 0 = same as mode eta
    a_minus_override: float = -1.0         # <0 = use analytic form
    a_plus_override: float = -1.0
    # quench transfer
    quench_scatters: float = 2.0           # photons per repump event
    # nominal step durations for the schedule
    doppler_duration: float = 2e-3
    pump_duration: float = 20e-6
    quench_duration: float = 5e-6
    # sideband-measurement floor from off-resonant shelving
    offresonant_excitation: float = 1e-3
    # run controls
    seed: int = 1
    repetitions: int = 100
    n_max: int = 0                         # 0 = auto
    dt: float = 0.0                        # s, 0 = auto

    # ---- derived accessors ----

    def trap_frequency_hz(self, mode: Mode | None = None) -> float:
        mode = mode or self.mode
        return {Mode.AXIAL: self.trap_freq_axial,
                Mode.RADIAL_Y: self.trap_freq_radial_y,
                Mode.RADIAL_X: self.trap_freq_radial_x}[mode]

    def eta(self, mode: Mode | None = None) -> float:
        mode = mode or self.mode
        explicit = {Mode.AXIAL: self.eta_axial,
                    Mode.RADIAL_Y: self.eta_radial_y,
                    Mode.RADIAL_X: self.eta_radial_x}[mode]
        if explicit > 0:
            return explicit
        return lamb_dicke(TWO_PI * self.trap_frequency_hz(mode),
                          projection=self.projection_cos)

    def fock_space(self, n_max: int | None = None,
                   nbar_hint: float | None = None) -> FockSpace:
        if n_max is None:
            n_max = self.n_max if self.n_max > 0 else \
                suggested_n_max(nbar_hint if nbar_hint is not None
                                else self.doppler_nbar())
        return FockSpace(n_max, self.mode,
                         TWO_PI * self.trap_frequency_hz())

    def drive(self, sideband: int, detuning: float = 0.0,
              phase: float = 0.0) -> DriveParams:
        return DriveParams(omega0=TWO_PI * self.rabi_freq, eta=self.eta(),
                           sideband=sideband, detuning=detuning,
                           phase=phase, regime=self.coupling_regime)

    def noise(self) -> NoiseModel:
        return NoiseModel(
            dephasing_rate=self.dephasing_rate,
            dephasing_fock_exponent=self.dephasing_fock_exponent,
            heating_rate=self.heating_rate,
            intensity_jitter_rel=self.intensity_jitter_rel,
            line_shift_amplitude=TWO_PI * self.line_shift_amplitude,
            line_shift_frequency=self.line_shift_frequency,
            line_synchronized=self.line_synchronized)

    def detection(self) -> DetectionParams:
        threshold = self.threshold
        if threshold <= 0:
            threshold = choose_threshold(self.bright_mean, self.dark_mean)
        lifetime = self.detect_d_lifetime if self.detect_d_lifetime > 0 \
            else math.inf
        return DetectionParams(self.bright_mean, self.dark_mean,
                               self.detect_window, threshold,
                               d_lifetime=lifetime)

    def cooling(self) -> CoolingParams:
        return CoolingParams(
            gamma_eff=TWO_PI * self.cool_gamma_eff,
            eta=self.eta(),
            omega_trap=TWO_PI * self.trap_frequency_hz(),
            omega0=TWO_PI * self.cool_rabi_freq,
            recoil_eta=self.recoil_eta if self.recoil_eta > 0 else None,
            a_minus_override=(self.a_minus_override
                              if self.a_minus_override >= 0 else None),
            a_plus_override=(self.a_plus_override
                             if self.a_plus_override >= 0 else None))

    def doppler_linewidth_rad(self) -> float:
        return TWO_PI * self.doppler_linewidth

    def doppler_nbar(self) -> float:
        from .cooling import doppler_limit
        return doppler_limit(self.doppler_linewidth_rad(),
                             TWO_PI * self.trap_frequency_hz())

    def quench_recoil_branch(self) -> float:
        return min(self.quench_scatters * self.eta() ** 2, 1.0)

    def sideband_rabi(self) -> float:
        """n = 0 blue-sideband Rabi frequency eta * Omega0, rad/s."""
        return self.eta() * TWO_PI * self.rabi_freq

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (Mode, Regime)):
                value = value.value
            out[f.name] = value
        return out

    def validate(self) -> None:
        """Trigger every derived constructor so invariants fail at load."""
        for m in Mode:
            if self.trap_frequency_hz(m) <= 0:
                raise ValueError(f"trap frequency for {m.value} must be "
                                 "positive")
        self.drive(+1)
        self.noise()
        self.detection()
        self.cooling()
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.quench_scatters < 0:
            raise ValueError("quench_scatters must be nonnegative")
        if not 0 <= self.offresonant_excitation < 1:
            raise ValueError("offresonant_excitation must lie in [0, 1)")
        if not 0 < self.projection_cos <= 1:
            raise ValueError("projection_cos must lie in (0, 1]")


_PARSERS = {
    "mode": lambda v: Mode(v),
    "coupling_regime": lambda v: Regime(v),
    "trap_freq_axial": parse_frequency,
    "trap_freq_radial_y": parse_frequency,
    "trap_freq_radial_x": parse_frequency,
    "rabi_freq": parse_frequency,
    "line_shift_amplitude": parse_frequency,
    "line_shift_frequency": parse_frequency,
    "doppler_linewidth": parse_frequency,
    "cool_gamma_eff": parse_frequency,
    "cool_rabi_freq": parse_frequency,
    "detect_window": parse_duration,
    "detect_d_lifetime": parse_duration,
    "doppler_duration": parse_duration,
    "pump_duration": parse_duration,
    "quench_duration": parse_duration,
    "dt": parse_duration,
    "threshold": int,
    "pi_reference_n": int,
    "seed": int,
    "repetitions": int,
    "n_max": int,
    "line_synchronized": lambda v: {"true": True, "false": False}[v.lower()],
}

_FLOAT_KEYS = {f.name for f in fields(ExperimentConfig)} - set(_PARSERS)


def parse_config(text: str) -> ExperimentConfig:
    """Parse 'key = value' lines; '#' comments; unknown keys are errors."""
    values = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected key = value, "
                             f"got {line!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key in _PARSERS:
            parser = _PARSERS[key]
        elif key in _FLOAT_KEYS:
            parser = float
        else:
            raise ValueError(f"config line {line_no}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"config line {line_no}: duplicate key "
                             f"{key!r}")
        try:
            values[key] = parser(value)
        except (ValueError, KeyError) as exc:
            raise ValueError(f"config line {line_no}: bad value for "
                             f"{key!r}: {exc}") from None
    config = ExperimentConfig(**values)
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
