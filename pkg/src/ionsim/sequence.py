"""Pulse-sequence language, compiler, and shot executor.

Grammar (one step per line, '#' starts a comment):

    doppler_cool
    pump
    sideband_cool <duration>
    pulse <carrier|rsb|bsb> <pi|pi2|duration> [detuning=<freq>]
                                              [phase=<rad>] [ref_n=<int>]
    quench
    wait <duration>
    detect <duration>

Durations carry us/ms/s units, detunings Hz/kHz/MHz (a bare 0 is allowed);
phase is in radians. A detect step, if present, must be the last step.

Compilation resolves pi and pi2 areas into durations using the sideband
coupling at a fixed reference Fock level (experiments use fixed pulse
times, so population outside the reference level transfers imperfectly,
which is exactly the dominant infidelity of Fock-state preparation), then
lays all steps out gaplessly on an absolute time axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import cooling as cooling_mod
from .analysis import wilson_interval
from .dynamics import (NoiseModel, _draw_shot_params, _evolve_snapshots,
                       _shot_rng, evolve, rabi_frequency)
from .hilbert import (ElectronicLevel, JointState, excited_population,
                      mean_phonon, thermal_state)
from .measurement import sample_detection
from .units import (DURATION_UNITS, FREQUENCY_UNITS, TWO_PI,
                    format_with_unit, parse_duration, parse_frequency)

SIDEBAND_TOKENS = {"carrier": 0, "rsb": -1, "bsb": +1}
_SIDEBAND_NAMES = {v: k for k, v in SIDEBAND_TOKENS.items()}


class SequenceSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int,
                 token: str | None = None):
        where = f"line {line}, column {column}"
        if token:
            where += f" at {token!r}"
        super().__init__(f"{message} ({where})")
        self.line = line
        self.column = column
        self.token = token


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class DopplerCool:
    pass


@dataclass(frozen=True)
class Pump:
    pass


@dataclass(frozen=True)
class SidebandCool:
    duration: float


@dataclass(frozen=True)
class Pulse:
    sideband: int
    area: str | None = None        # "pi" | "pi2", exclusive with duration
    duration: float | None = None
    detuning_hz: float = 0.0
    phase: float = 0.0
    ref_n: int | None = None


@dataclass(frozen=True)
class Quench:
    pass


@dataclass(frozen=True)
class Wait:
    duration: float


@dataclass(frozen=True)
class Detect:
    window: float


SequenceStep = Union[DopplerCool, Pump, SidebandCool, Pulse, Quench, Wait,
                     Detect]


@dataclass(frozen=True)
class PulseSequence:
    steps: tuple[SequenceStep, ...]
    name: str = ""
    source: str = ""

    def __post_init__(self):
        if not self.steps:
            raise ValueError("sequence must contain at least one step")


@dataclass(frozen=True)
class ScheduledOp:
    start: float
    duration: float
    step: SequenceStep
    note: str = ""


@dataclass(frozen=True)
class Timeline:
    ops: tuple[ScheduledOp, ...]
    total_duration: float


def _tokenize(line: str):
    """Yield (token, column) pairs; column is 1-based."""
    col = 0
    for raw in line.split(" "):
        if raw:
            yield raw, col + 1
        col += len(raw) + 1


def _positive_duration(text, line_no, col, what):
    try:
        value = parse_duration(text)
    except ValueError as exc:
        raise SequenceSyntaxError(str(exc), line_no, col, text) from None
    if value <= 0:
        raise SequenceSyntaxError(f"{what} must be positive", line_no, col,
                                  text)
    return value


def _parse_pulse(tokens, line_no):
    if len(tokens) < 2:
        tok, col = tokens[0]
        raise SequenceSyntaxError("pulse needs a sideband and an area or "
                                  "duration", line_no, col + len(tok), None)
    (sb_tok, sb_col) = tokens[1]
    if sb_tok not in SIDEBAND_TOKENS:
        raise SequenceSyntaxError("unknown sideband token (expected "
                                  "carrier, rsb, or bsb)", line_no, sb_col,
                                  sb_tok)
    if len(tokens) < 3:
        raise SequenceSyntaxError("pulse needs an area (pi, pi2) or a "
                                  "duration", line_no,
                                  sb_col + len(sb_tok), None)
    (area_tok, area_col) = tokens[2]
    area = None
    duration = None
    if area_tok in ("pi", "pi2"):
        area = area_tok
    else:
        duration = _positive_duration(area_tok, line_no, area_col,
                                      "pulse duration")
    kwargs = {"detuning_hz": 0.0, "phase": 0.0, "ref_n": None}
    for tok, col in tokens[3:]:
        if "=" not in tok:
            raise SequenceSyntaxError("expected key=value option",
                                      line_no, col, tok)
        key, _, value = tok.partition("=")
        if value == "":
            raise SequenceSyntaxError(f"empty value for option {key!r}",
                                      line_no, col, tok)
        if key == "detuning":
            try:
                kwargs["detuning_hz"] = parse_frequency(value)
            except ValueError as exc:
                raise SequenceSyntaxError(str(exc), line_no, col,
                                          tok) from None
        elif key == "phase":
            try:
                kwargs["phase"] = float(value)
            except ValueError:
                raise SequenceSyntaxError("phase must be a plain number "
                                          "in radians", line_no, col,
                                          tok) from None
        elif key == "ref_n":
            try:
                kwargs["ref_n"] = int(value)
            except ValueError:
                raise SequenceSyntaxError("ref_n must be an integer",
                                          line_no, col, tok) from None
            if kwargs["ref_n"] < 0:
                raise SequenceSyntaxError("ref_n must be nonnegative",
                                          line_no, col, tok)
        else:
            raise SequenceSyntaxError(f"unknown pulse option {key!r}",
                                      line_no, col, tok)
    return Pulse(SIDEBAND_TOKENS[sb_tok], area, duration, **kwargs)


def parse_sequence(text: str, name: str = "") -> PulseSequence:
    """Parse the line-oriented protocol language into a PulseSequence."""
    steps: list[SequenceStep] = []
    saw_detect = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        tokens = list(_tokenize(line))
        keyword, col = tokens[0]
        if saw_detect:
            raise SequenceSyntaxError("detect must be the final step",
                                      line_no, col, keyword)
        if keyword in ("doppler_cool", "pump", "quench"):
            if len(tokens) > 1:
                tok, tcol = tokens[1]
                raise SequenceSyntaxError(f"{keyword} takes no arguments",
                                          line_no, tcol, tok)
            steps.append({"doppler_cool": DopplerCool,
                          "pump": Pump,
                          "quench": Quench}[keyword]())
        elif keyword in ("sideband_cool", "wait", "detect"):
            if len(tokens) != 2:
                raise SequenceSyntaxError(f"{keyword} takes exactly one "
                                          "duration argument", line_no,
                                          col + len(keyword), None)
            tok, tcol = tokens[1]
            dur = _positive_duration(tok, line_no, tcol,
                                     f"{keyword} duration")
            if keyword == "sideband_cool":
                steps.append(SidebandCool(dur))
            elif keyword == "wait":
                steps.append(Wait(dur))
            else:
                steps.append(Detect(dur))
                saw_detect = True
        elif keyword == "pulse":
            steps.append(_parse_pulse(tokens, line_no))
        else:
            raise SequenceSyntaxError("unknown keyword", line_no, col,
                                      keyword)
    if not steps:
        raise SequenceSyntaxError("sequence contains no steps", 1, 1)
    return PulseSequence(tuple(steps), name=name, source=text)


def format_sequence(seq: PulseSequence) -> str:
    """Canonical text form; parse(format(parse(x))) preserves every step."""
    lines = []
    for step in seq.steps:
        if isinstance(step, DopplerCool):
            lines.append("doppler_cool")
        elif isinstance(step, Pump):
            lines.append("pump")
        elif isinstance(step, Quench):
            lines.append("quench")
        elif isinstance(step, SidebandCool):
            lines.append("sideband_cool "
                         + format_with_unit(step.duration, DURATION_UNITS))
        elif isinstance(step, Wait):
            lines.append("wait "
                         + format_with_unit(step.duration, DURATION_UNITS))
        elif isinstance(step, Detect):
            lines.append("detect "
                         + format_with_unit(step.window, DURATION_UNITS))
        elif isinstance(step, Pulse):
            parts = ["pulse", _SIDEBAND_NAMES[step.sideband]]
            if step.area is not None:
                parts.append(step.area)
            else:
                parts.append(format_with_unit(step.duration,
                                              DURATION_UNITS))
            if step.detuning_hz != 0.0:
                parts.append("detuning=" + format_with_unit(
                    step.detuning_hz, FREQUENCY_UNITS))
            if step.phase != 0.0:
                parts.append(f"phase={step.phase!r}")
            if step.ref_n is not None:
                parts.append(f"ref_n={step.ref_n}")
            lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def compile_sequence(seq: PulseSequence, config) -> Timeline:
    """Resolve pulse areas to durations and assign absolute start times."""
    ops = []
    t = 0.0
    for i, step in enumerate(seq.steps):
        note = ""
        if isinstance(step, DopplerCool):
            dur = config.doppler_duration
        elif isinstance(step, Pump):
            dur = config.pump_duration
        elif isinstance(step, Quench):
            dur = config.quench_duration
        elif isinstance(step, SidebandCool):
            dur = step.duration
        elif isinstance(step, Wait):
            dur = step.duration
        elif isinstance(step, Detect):
            dur = step.window
        else:
            dur, note = _resolve_pulse(step, config, i)
        ops.append(ScheduledOp(start=t, duration=dur, step=step, note=note))
        t += dur
    return Timeline(tuple(ops), total_duration=t)


def _resolve_pulse(step: Pulse, config, index: int):
    drive = config.drive(step.sideband,
                         detuning=TWO_PI * step.detuning_hz,
                         phase=step.phase)
    if step.duration is not None:
        return step.duration, ""
    ref_n = step.ref_n if step.ref_n is not None else config.pi_reference_n
    omega = rabi_frequency(ref_n, drive)
    if omega <= 0:
        raise CompileError(
            f"step {index + 1}: {step.area} pulse on "
            f"{_SIDEBAND_NAMES[step.sideband]} from reference level "
            f"n={ref_n} has zero coupling")
    dur = math.pi / omega
    if step.area == "pi2":
        dur *= 0.5
    note = (f"{step.area} resolved to {dur * 1e6:.3f} us at "
            f"Omega/2pi = {omega / TWO_PI / 1e3:.3f} kHz (ref n={ref_n})")
    return dur, note


@dataclass(frozen=True)
class ExperimentRecord:
    """Outcome of a single execution of a compiled timeline."""

    classified_shelved: bool | None
    photon_count: int | None
    p_d_exact: float                # shelving probability before detection
    mean_phonon: float
    final_state: JointState


def _pump_to_ground(state: JointState) -> JointState:
    """Optical pumping: move all D population to S, phonon-preserving."""
    N = state.space.n_fock
    rho = np.array(state.rho)
    new = np.zeros_like(rho)
    new[:N, :N] = rho[:N, :N] + rho[N:, N:]
    return JointState(new, state.space)


def _quench(state: JointState, recoil_branch: float) -> JointState:
    """854 nm repump channel: |D,n> -> |S,n>, or |S,n+1> on a recoil event.

    The branch at the top Fock level keeps n (nowhere to go), preserving
    the trace.
    """
    N = state.space.n_fock
    rho = np.array(state.rho)
    r = min(max(recoil_branch, 0.0), 1.0)
    new = np.zeros_like(rho)
    new[:N, :N] = rho[:N, :N]
    dd = rho[N:, N:]
    new[:N, :N] += (1.0 - r) * dd
    shifted = np.zeros_like(dd)
    shifted[1:, 1:] = dd[:-1, :-1]
    shifted[N - 1, N - 1] += dd[N - 1, N - 1]
    new[:N, :N] += r * shifted
    return JointState(new, state.space)


def run_state_pipeline(timeline: Timeline, config, noise: NoiseModel,
                       omega_scale: float = 1.0,
                       line_phase: float = 0.0) -> JointState:
    """Execute every pre-detection step, returning the final state.

    Deterministic given the per-shot parameters; the only sampling in a
    full shot happens at the detect step.
    """
    space = config.fock_space()
    state = thermal_state(space, ElectronicLevel.S, 0.0)
    for op in timeline.ops:
        step = op.step
        if isinstance(step, DopplerCool):
            nbar = cooling_mod.doppler_limit(config.doppler_linewidth_rad(),
                                             space.trap_frequency)
            state = thermal_state(space, ElectronicLevel.S, nbar)
        elif isinstance(step, Pump):
            state = _pump_to_ground(state)
        elif isinstance(step, SidebandCool):
            state, _ = cooling_mod.sideband_cool(
                state, config.cooling(), step.duration,
                dt=min(1e-4, step.duration / 10.0))
        elif isinstance(step, Pulse):
            drive = config.drive(step.sideband,
                                 detuning=TWO_PI * step.detuning_hz,
                                 phase=step.phase)
            rho = _evolve_snapshots(state, drive, noise, [op.duration],
                                    config.dt or None,
                                    omega_scale=omega_scale,
                                    line_phase=line_phase)[0]
            state = JointState(rho, state.space)
        elif isinstance(step, Wait):
            state = evolve(state, None, noise, step.duration,
                           dt=config.dt or None)
        elif isinstance(step, Quench):
            state = _quench(state, config.quench_recoil_branch())
        elif isinstance(step, Detect):
            break
    return state


def _detect_params(timeline: Timeline, config):
    for op in timeline.ops:
        if isinstance(op.step, Detect):
            return config.detection().scaled_to_window(op.step.window)
    return None


def run(timeline: Timeline, config, noise: NoiseModel,
        rng_seed: int = 0) -> ExperimentRecord:
    """One shot: state pipeline, then photon-count detection if present."""
    rng = _shot_rng(rng_seed)
    scale, phase = _draw_shot_params(noise, rng)
    state = run_state_pipeline(timeline, config, noise, scale, phase)
    p_d = excited_population(state)
    det = _detect_params(timeline, config)
    count = classified = None
    if det is not None:
        count, classified = sample_detection(p_d, det, rng)
    return ExperimentRecord(classified_shelved=classified,
                            photon_count=count, p_d_exact=p_d,
                            mean_phonon=mean_phonon(state),
                            final_state=state)


def estimate_excitation(timeline: Timeline, config, noise: NoiseModel,
                        repetitions: int,
                        rng_seed: int = 0) -> tuple[float, tuple[float, float]]:
    """Shelved fraction over repeated shots with a Wilson 68% interval.

    When no per-shot drive noise is active the pre-detection state is
    shot-independent and is computed once; detection is still sampled shot
    by shot from independent substreams.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    det = _detect_params(timeline, config)
    if det is None:
        raise ValueError("timeline has no detect step; nothing to estimate")

    if not noise.has_per_shot_noise():
        state = run_state_pipeline(timeline, config, noise)
        p_d = excited_population(state)
        hits = 0
        for s in range(repetitions):
            _, shelved = sample_detection(p_d, det, _shot_rng(rng_seed, s))
            hits += shelved
    else:
        hits = 0
        for s in range(repetitions):
            rng = _shot_rng(rng_seed, s)
            scale, phase = _draw_shot_params(noise, rng)
            state = run_state_pipeline(timeline, config, noise, scale,
                                       phase)
            _, shelved = sample_detection(excited_population(state), det,
                                          rng)
            hits += shelved
    p_hat = hits / repetitions
    return p_hat, wilson_interval(hits, repetitions)
