"""Command-line front end: scenario runner and ad-hoc sequence execution.

Commands reproduce the standard measurement protocols as data files
(CSV/JSON, optionally with companion gnuplot scripts); there is no
plotting backend. Every command is deterministic under --seed, and with
--no-timestamp identical invocations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from . import __version__, io, scenarios
from .config import ExperimentConfig, load_config, parse_config
from .units import parse_duration

PRESET_NAMES = ("spectrum", "cooling", "flop_n0", "flop_n1",
                "heating_axial", "heating_radial")


def _preset_dir():
    return resources.files("ionsim").joinpath("presets")


def _load_preset_text(kind: str, name: str) -> str:
    ref = _preset_dir().joinpath(f"{name}.{kind}")
    if not ref.is_file():
        raise SystemExit(f"no shipped preset named {name!r}")
    return ref.read_text(encoding="utf-8")


def _resolve_config(spec: str | None) -> ExperimentConfig:
    if spec is None:
        raise SystemExit("--config is required (a file path or a preset "
                         f"name: {', '.join(PRESET_NAMES)})")
    path = Path(spec)
    if path.exists():
        return load_config(path)
    return parse_config(_load_preset_text("cfg", spec))


def _add_common(parser):
    parser.add_argument("--config", help="config file or preset name")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--reps", type=int, default=None,
                        help="shots per point (sampled mode)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="primary data format (JSON reports are "
                        "always written)")
    parser.add_argument("--exact", action="store_true",
                        help="record exact probabilities (shots = 0)")
    parser.add_argument("--no-timestamp", action="store_true")
    parser.add_argument("--gnuplot", action="store_true",
                        help="emit companion gnuplot scripts")


def _run_controls(args, config):
    seed = args.seed if args.seed is not None else config.seed
    shots = 0 if args.exact else (args.reps if args.reps is not None
                                  else config.repetitions)
    return seed, shots


def _spectrum_payload(spec):
    return {"detunings": spec.detunings, "p_d": spec.p_d,
            "shots": spec.shots_per_point}


def cmd_spectrum(args) -> int:
    config = _resolve_config(args.config)
    seed, shots = _run_controls(args, config)
    result = scenarios.spectrum_scenario(config, points=args.points,
                                         shots=shots, seed=seed)
    out = Path(args.out)
    data = {"summary_doppler": result["summary_doppler"],
            "summary_cooled": result["summary_cooled"],
            "nbar_doppler_expected": result["nbar_doppler_expected"]}
    for key in ("red_doppler", "blue_doppler", "red_cooled", "blue_cooled"):
        spec = result[key]
        if args.format == "csv":
            io.write_trace_csv(out / f"spectrum_{key}.csv",
                               "detuning_rad_s", spec.detunings, spec.p_d,
                               spec.shots_per_point)
            if args.gnuplot:
                io.write_gnuplot(out / f"spectrum_{key}.gp",
                                 f"spectrum_{key}.csv", "detuning (rad/s)",
                                 "P_D", key)
        else:
            data[key] = _spectrum_payload(spec)
    io.write_json(out / "spectrum_summary.json",
                  io.provenance("spectrum", seed, __version__,
                                not args.no_timestamp),
                  config.to_dict(), data)
    s = result["summary_cooled"]
    print(f"cooled: p_red_peak={s['p_red_peak']:.4g} "
          f"p_blue_peak={s['p_blue_peak']:.4g} "
          f"p0={s.get('p0', float('nan')):.6f}")
    return 0


def cmd_flop(args) -> int:
    config = _resolve_config(args.config)
    seed, shots = _run_controls(args, config)
    result = scenarios.flop_scenario(config, initial=args.initial,
                                     duration=parse_duration(args.duration),
                                     points=args.points, shots=shots,
                                     seed=seed, exact=args.exact)
    out = Path(args.out)
    trace = result["trace"]
    io.write_trace_csv(out / f"flop_{args.initial}.csv", "tau_s",
                       trace.times, trace.p_d, trace.shots_per_point)
    if args.gnuplot:
        io.write_gnuplot(out / f"flop_{args.initial}.gp",
                         f"flop_{args.initial}.csv", "pulse duration (s)",
                         "P_D", f"flopping from {args.initial}")
    sigmas = None
    if result["fit"].standard_errors:
        sigmas = [result["fit"].standard_errors[f"p{n}"]
                  for n in range(len(result["populations"]))]
    io.write_populations_csv(out / f"flop_{args.initial}_populations.csv",
                             result["populations"], sigmas)
    io.write_json(out / f"flop_{args.initial}_report.json",
                  io.provenance("flop", seed, __version__,
                                not args.no_timestamp),
                  config.to_dict(),
                  {"populations": list(result["populations"]),
                   "gamma0": result["gamma0"],
                   "dominant_frequency_rad_s": result["dominant_frequency"],
                   "oscillations": result["oscillations"],
                   "fit": result["fit"].to_dict()})
    pops = ", ".join(f"p{n}={p:.3f}"
                     for n, p in enumerate(result["populations"]))
    print(f"{args.initial}: {result['oscillations']} oscillations, {pops}")
    return 0


def cmd_heat(args) -> int:
    config = _resolve_config(args.config)
    seed, shots = _run_controls(args, config)
    delays = [parse_duration(tok) for tok in args.delays.split(",")]
    result = scenarios.heating_scenario(config, delays, shots=shots,
                                        seed=seed, exact=args.exact)
    out = Path(args.out)
    io.write_csv(out / "heat_points.csv",
                 ("delay_s", "nbar_measured", "nbar_exact"),
                 [tuple(row) for row in result["points"]])
    if args.gnuplot:
        io.write_gnuplot(out / "heat_points.gp", "heat_points.csv",
                         "delay (s)", "mean phonon number", "heating")
    io.write_json(out / "heat_fit.json",
                  io.provenance("heat", seed, __version__,
                                not args.no_timestamp),
                  config.to_dict(),
                  {"fit": result["fit"].to_dict(),
                   "kappa_expected": result["kappa_expected"]})
    slope = result["fit"].parameters["slope"]
    err = (result["fit"].standard_errors or {}).get("slope", float("nan"))
    print(f"heating rate: {slope:.4g} +/- {err:.2g} quanta/s "
          f"(configured {result['kappa_expected']:.4g})")
    return 0


def cmd_cool(args) -> int:
    config = _resolve_config(args.config)
    seed, _ = _run_controls(args, config)
    result = scenarios.cooling_scenario(
        config, duration=parse_duration(args.duration))
    out = Path(args.out)
    io.write_trajectory_csv(out / "cool_trajectory.csv",
                            result["trajectory"])
    if args.gnuplot:
        io.write_gnuplot(out / "cool_trajectory.gp", "cool_trajectory.csv",
                         "t (ms)", "mean phonon number", "cooling")
    io.write_json(out / "cool_fit.json",
                  io.provenance("cool", seed, __version__,
                                not args.no_timestamp),
                  config.to_dict(),
                  {"fit": result["fit"].to_dict(),
                   "rate_expected": result["rate_expected"],
                   "nbar_initial": result["nbar_initial"],
                   "nbar_final": result["nbar_final"],
                   "nbar_limit": result["nbar_limit"],
                   "nbar_detection_floor":
                       result["nbar_detection_floor"]})
    rate = result["fit"].parameters.get("rate", float("nan"))
    print(f"cooling: nbar {result['nbar_initial']:.3f} -> "
          f"{result['nbar_final']:.2e}, fitted rate {rate:.4g}/s "
          f"(expected {result['rate_expected']:.4g}/s)")
    return 0


def cmd_run(args) -> int:
    config = _resolve_config(args.config)
    seed, _ = _run_controls(args, config)
    if args.seq is None:
        raise SystemExit("run requires --seq <file or preset name>")
    path = Path(args.seq)
    if path.exists():
        text = path.read_text(encoding="utf-8")
        name = path.stem
    else:
        text = _load_preset_text("seq", args.seq)
        name = args.seq
    reps = args.reps if args.reps is not None else config.repetitions
    result = scenarios.run_scenario(config, text, repetitions=reps,
                                    seed=seed, name=name)
    timeline_doc = [{"start_s": op.start, "duration_s": op.duration,
                     "step": type(op.step).__name__.lower(),
                     "note": op.note}
                    for op in result["timeline"].ops]
    io.write_json(Path(args.out) / f"run_{name}.json",
                  io.provenance("run", seed, __version__,
                                not args.no_timestamp),
                  config.to_dict(),
                  {"p_hat": result["p_hat"], "ci": list(result["ci"]),
                   "repetitions": result["repetitions"],
                   "p_d_exact": result["p_d_exact"],
                   "mean_phonon": result["mean_phonon"],
                   "timeline": timeline_doc,
                   "total_duration_s":
                       result["timeline"].total_duration})
    lo, hi = result["ci"]
    print(f"p_hat = {result['p_hat']:.4f}  (68% CI {lo:.4f}..{hi:.4f}, "
          f"exact {result['p_d_exact']:.4f})")
    for op in result["timeline"].ops:
        label = type(op.step).__name__.lower()
        extra = f"  [{op.note}]" if op.note else ""
        print(f"  {op.start * 1e3:9.4f} ms  {label:<13s} "
              f"{op.duration * 1e3:9.4f} ms{extra}")
    return 0


def cmd_presets(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for entry in sorted(_preset_dir().iterdir(), key=lambda e: e.name):
        if entry.name.endswith((".cfg", ".seq")):
            (out / entry.name).write_text(entry.read_text(encoding="utf-8"),
                                          encoding="utf-8")
            print(out / entry.name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ionsim",
        description="Trapped-ion cooling and state-engineering simulator")
    parser.add_argument("--version", action="version",
                        version=f"ionsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="red/blue sideband scans with "
                       "thermometry, before and after cooling")
    _add_common(p)
    p.add_argument("--points", type=int, default=25)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("flop", help="Rabi flopping trace and population "
                       "extraction")
    _add_common(p)
    p.add_argument("--initial", choices=("n0", "n1"), default="n0")
    p.add_argument("--duration", default="1.4ms")
    p.add_argument("--points", type=int, default=1120)
    p.set_defaults(func=cmd_flop)

    p = sub.add_parser("heat", help="heating-rate scan: cool, wait, "
                       "thermometry, linear fit")
    _add_common(p)
    p.add_argument("--delays", default="0.1ms,40ms,80ms,120ms,160ms")
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("cool", help="cooling-dynamics trajectory and "
                       "exponential fit")
    _add_common(p)
    p.add_argument("--duration", default="6.4ms")
    p.set_defaults(func=cmd_cool)

    p = sub.add_parser("run", help="parse, compile, and execute a pulse "
                       "sequence")
    _add_common(p)
    p.add_argument("--seq", help="sequence file or preset name")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("presets", help="write the shipped presets to a "
                       "directory")
    p.add_argument("--out", default="presets")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
