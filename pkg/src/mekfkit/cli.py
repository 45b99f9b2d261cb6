"""Command-line interface.

Subcommands::

    mekfkit mc     Monte Carlo comparison of the filters (rmse.csv, summary.json)
    mekfkit sim    one run with per-axis errors for every filter (sim.csv)
    mekfkit align  yaw misalignment sweep for initial alignment (align.csv)
    mekfkit check  numerical property checks

Exit status: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from . import __version__, engine
from .alignment import (
    DEFAULT_SWEEP,
    DEG,
    ImuLogError,
    alignment_filter_config,
    build_alignment_pairs,
    dead_reckon,
    misaligned_start,
    read_imu_log,
    run_alignment,
    synthetic_sweep,
    SweepResult,
)
from .attitude import euler_to_matrix
from .checks import run_checks
from .config import (
    ConfigError,
    alignment_from_ini,
    alignment_settings,
    alignment_to_ini,
    load_preset,
    load_scenario,
    scenario_to_ini,
)
from .harness import run_scenario, simulate_block

log = logging.getLogger("mekfkit")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

IMU_FORMAT = """IMU log format: one sample per line, "t, wx, wy, wz, fx, fy, fz" in s, rad/s and
m/s^2 (body frame), comma or whitespace separated.  An optional header line and
lines starting with '#' are ignored; timestamps must increase."""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _provenance(kind: str, config_text: str, extra: Iterable[str] = ()) -> List[str]:
    lines = [f"mekfkit {__version__} {kind}"]
    lines += list(extra)
    lines.append("configuration (save without the leading '# ' to re-run with --config):")
    lines += config_text.rstrip("\n").split("\n")
    return lines


def _write_csv(path: Path, provenance: List[str], rows: Iterable[str]) -> None:
    with open(path, "w", newline="\n") as fh:
        for line in provenance:
            fh.write(f"# {line}".rstrip() + "\n")
        for row in rows:
            fh.write(row + "\n")


def _clean(obj):
    """JSON-safe copy: NaN and inf become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _filters(text: str) -> tuple:
    names = tuple(f.strip() for f in text.split(",") if f.strip())
    if not names:
        raise UsageError("--filters needs at least one name")
    for n in names:
        if n not in engine.FILTERS:
            raise UsageError(f"unknown filter {n!r}; choose from {', '.join(engine.FILTERS)}")
    return names


def _scenario(args):
    if args.preset and args.config:
        raise UsageError("give either --preset or --config, not both")
    if args.config:
        s = load_scenario(args.config)
    else:
        s = load_preset(args.preset or "paper-a")
    kw = {}
    if args.runs is not None:
        kw["runs"] = args.runs
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.filters is not None:
        kw["filters"] = _filters(args.filters)
    if args.gyro_hz is not None:
        kw["gyro_hz"] = args.gyro_hz
    if args.duration is not None:
        kw["duration"] = args.duration
    try:
        return replace(s, **kw)
    except (ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from None


def cmd_mc(args) -> int:
    s = _scenario(args)
    out = _out_dir(args)
    log.info("running %s: %d runs x %.0f s, filters %s", s.name, s.runs, s.duration, ", ".join(s.filters))
    series = run_scenario(s, workers=args.workers, record_streams=True)
    digests = series.stream_digests
    streams_equal = len(set(digests.values())) == 1
    config_text = scenario_to_ini(s)
    prov = _provenance("mc", config_text, [f"seed = {s.seed}", f"measurement stream sha256 = "
                                           f"{next(iter(digests.values()))}"])
    _write_csv(out / "rmse.csv", prov + ["att/bias columns: square root of the mean error norm"],
               series.csv_rows(conventional=False))
    _write_csv(out / "rmse_conventional.csv", prov + ["att/bias columns: root mean square error norm"],
               series.csv_rows(conventional=True))
    (out / "scenario.ini").write_text(config_text)
    summary = {
        "provenance": {"version": __version__, "command": "mc", "seed": s.seed, "config": config_text},
        "scenario": s.name,
        "runs": s.runs,
        "duration_s": s.duration,
        "final": series.summary(),
        "stream_digests": digests,
        "identical_streams": streams_equal,
    }
    _write_json(out / "summary.json", summary)
    for f in s.filters:
        log.info("%-8s final attitude RMSE %.3f deg (conventional %.3f)", f,
                 series.final(f, conventional=False), series.final(f))
    if not streams_equal:
        print("error: filters did not see identical measurement streams", file=sys.stderr)
        return EXIT_NUMERIC
    lost = [f for i, f in enumerate(s.filters) if series.diverged[i, -1] == s.runs]
    if lost:
        print(f"error: every run diverged for {', '.join(lost)}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {out / 'rmse.csv'}, {out / 'rmse_conventional.csv'} and {out / 'summary.json'}")
    return EXIT_OK


def cmd_sim(args) -> int:
    s = _scenario(args)
    if not 0 <= args.run < s.runs:
        raise UsageError(f"--run must be in [0, {s.runs})")
    out = _out_dir(args)
    res = simulate_block(s, [args.run], detail=True)
    config_text = scenario_to_ini(s)

    def rows():
        yield "t_s,filter,yaw_err_deg,pitch_err_deg,roll_err_deg,geodesic_err_deg,bias_err_deg_h,diverged"
        for k, t in enumerate(res.t):
            for i, f in enumerate(s.filters):
                vals = [*res.euler_err[i, k, 0], res.geodesic[i, k, 0], res.bias_norm[i, k, 0]]
                yield f"{t:.6g},{f}," + ",".join(repr(float(v)) for v in vals) + f",{int(res.diverged[i, k, 0])}"

    _write_csv(out / "sim.csv", _provenance("sim", config_text, [f"run index = {args.run}"]), rows())
    print(f"wrote {out / 'sim.csv'}")
    if res.diverged[:, -1, 0].all():
        print("error: every filter diverged", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _sweep_arg(text: str) -> tuple:
    """``start:stop:step`` (stop inclusive) or a comma list, in degrees."""
    try:
        if ":" in text:
            a, b, c = (float(v) for v in text.split(":"))
            if c <= 0:
                raise ValueError
            return tuple(float(v) for v in np.arange(a, b + c / 2, c))
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad --sweep {text!r}; use start:stop:step or a comma list") from None


def cmd_align(args) -> int:
    if bool(args.imu) == bool(args.synthetic):
        raise UsageError("give exactly one of --imu PATH or --synthetic")
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
        settings = alignment_from_ini(text, source=args.config)
    else:
        settings = alignment_settings()
    case = settings["case"]
    if args.seed is not None:
        case = replace(case, seed=args.seed)
    if args.latitude is not None:
        case = replace(case, latitude_deg=args.latitude)
    settings["case"] = case
    if args.sweep:
        settings["sweep_deg"] = _sweep_arg(args.sweep)
    sweep = settings["sweep_deg"]
    filters = _filters(args.filters) if args.filters else ("MEKF", "IMEKF")
    for f in filters:
        if f not in ("MEKF", "IMEKF"):
            raise UsageError("alignment supports the MEKF and IMEKF filters")
    out = _out_dir(args)
    extra = []
    if args.synthetic:
        res = synthetic_sweep(case, sweep, filters, settings["pitch_roll_deg"], **settings["filter"])
        extra.append("data = synthetic swaying vehicle")
    else:
        imu = read_imu_log(args.imu)
        lat = case.latitude_deg * DEG
        pairs = build_alignment_pairs(imu, lat, case.window)
        ypr = np.asarray(args.initial_ypr, dtype=float) * DEG
        C0 = euler_to_matrix(*ypr)
        ref = dead_reckon(pairs, C0, lat)
        starts = np.array([misaligned_start(C0, y, settings["pitch_roll_deg"], settings["pitch_roll_deg"])
                           for y in sweep])
        res = SweepResult(np.array([p.t for p in pairs]), tuple(sweep))
        for name in filters:
            run = run_alignment(pairs, alignment_filter_config(name, **settings["filter"]), starts, lat)
            res.errors[name] = run.euler_errors(ref)
        extra += [f"data = {args.imu} ({len(imu)} samples)",
                  f"errors relative to gyro dead reckoning from yaw/pitch/roll {tuple(args.initial_ypr)} deg"]
    config_text = alignment_to_ini(settings)
    _write_csv(out / "align.csv", _provenance("align", config_text, extra), res.csv_rows())
    summary = {"provenance": {"version": __version__, "command": "align", "config": config_text,
                              "data": extra[0]},
               "filters": {}}
    for name in filters:
        summary["filters"][name] = {
            f"{mis:g}": {"reach_5deg_s": float(r), "settle_5deg_s": float(st), "steady_yaw_err_deg": float(ss),
                         "final_err_ypr_deg": [float(v) for v in res.errors[name][-1, j]]}
            for j, (mis, r, st, ss) in enumerate(zip(sweep, res.reach_time(name), res.settle_time(name),
                                                    res.steady_yaw(name)))
        }
    _write_json(out / "align_summary.json", summary)
    print(f"wrote {out / 'align.csv'} and {out / 'align_summary.json'}")
    if not all(np.isfinite(e).all() for e in res.errors.values()):
        print("error: non-finite attitude estimate", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_checks(seed=args.seed or 0)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def _verbose_flag(p):
    p.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS,
                   help="more logging (repeatable)")


def _scenario_flags(p):
    p.add_argument("--preset", help="built-in scenario: paper-a (default) or paper-b")
    p.add_argument("--config", help="INI scenario file (see presets/*.ini for the keys)")
    p.add_argument("--runs", type=int, help="number of Monte Carlo runs")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--filters", help=f"comma list from {','.join(engine.FILTERS)}")
    p.add_argument("--gyro-hz", type=float, help="gyro sampling rate (Hz)")
    p.add_argument("--duration", type=float, help="simulated time (s)")
    p.add_argument("--out", default=".", help="output directory (default: current)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mekfkit", description="Attitude filters with estimate-independent measurement models.")
    parser.add_argument("--version", action="version", version=f"mekfkit {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="{mc,sim,align,check}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("mc", help="Monte Carlo filter comparison")
    _scenario_flags(p)
    p.add_argument("--workers", type=int, default=1, help="processes for blocks of runs (result is identical)")
    _verbose_flag(p)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("sim", help="single run with per-axis errors")
    _scenario_flags(p)
    p.add_argument("--run", type=int, default=0, help="run index within the scenario (default 0)")
    _verbose_flag(p)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("align", help="initial-alignment misalignment sweep",
                       epilog=IMU_FORMAT, formatter_class=argparse.RawDescriptionHelpFormatter)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--imu", help="IMU log file")
    src.add_argument("--synthetic", action="store_true", help="use a generated swaying-vehicle data set")
    p.add_argument("--config", help="INI file with an [alignment] section")
    p.add_argument("--sweep", help=f"yaw misalignments in deg, start:stop:step or list "
                                   f"(default {DEFAULT_SWEEP[0]}:{DEFAULT_SWEEP[-1]}:20)")
    p.add_argument("--filters", help="MEKF,IMEKF (default both)")
    p.add_argument("--latitude", type=float, help="latitude in degrees")
    p.add_argument("--initial-ypr", type=float, nargs=3, default=(0.0, 0.0, 0.0), metavar=("YAW", "PITCH", "ROLL"),
                   help="reference initial attitude for --imu data (deg)")
    p.add_argument("--seed", type=int, help="noise seed for --synthetic")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    _verbose_flag(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("check", help="numerical property checks")
    p.add_argument("--seed", type=int, default=0, help="seed for the random test inputs")
    _verbose_flag(p)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ImuLogError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: no such file", file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
