"""
Command-line runner: ``qref run <scenario> [options]``.

Writes ``report.json`` always, ``sweep.csv`` when a sweep was requested and
``fringe.csv`` when the scenario renders a fringe profile.

Exit codes: 0 success, 2 config or output error, 3 grid too coarse.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .errors import QRefError, ResolutionError
from .scenarios import (
    InterferometerConfig,
    RocketConfig,
    ScenarioReport,
    ThirdParticleConfig,
    appendix_analysis,
    run_frames,
    run_interferometer,
    run_rocket,
    run_third_particle,
)

SCENARIOS = ("interferometer", "rocket", "third-particle", "frames", "appendix")
CONFIG_KEYS = ("masses", "geometry", "widths", "theta", "grid", "mode")
RANDOM_ROUTE_SAMPLES = 50

# (config section, key) -> dataclass field, per scenario
_INTERFEROMETER_FIELDS = {
    ("masses", "m_p"): "m_p",
    ("masses", "m_i"): "m_i",
    ("masses", "m_F2"): "m_F2",
    ("geometry", "L"): "L",
    ("geometry", "setup"): "setup",
    ("geometry", "include_frame_F2"): "include_frame_F2",
    ("widths", "p"): "width_p",
    ("widths", "i"): "width_i",
    ("widths", "F2"): "width_F2",
    ("mode", "exact_transform"): "exact_transform",
}
_ROCKET_FIELDS = {
    ("masses", "m_p"): "m_p",
    ("masses", "m_R"): "m_R",
    ("geometry", "L"): "L",
    ("geometry", "p"): "p",
    ("widths", "delta_xR"): "delta_xR",
    ("widths", "delta_p"): "delta_p",
    ("grid", "points"): "grid_points",
    ("grid", "extent"): "grid_sigmas",
    ("mode", "exact_transform"): "exact_transform",
}
_THIRD_FIELDS = {
    ("masses", "m1"): "m1",
    ("masses", "m2"): "m2",
    ("masses", "m3"): "m3",
    ("geometry", "L"): "L",
    ("geometry", "c"): "c",
}
_APPENDIX_FIELDS = {
    ("masses", "m1"): "m1",
    ("masses", "m2"): "m2",
    ("masses", "m3"): "m3",
    ("geometry", "L"): "L",
    ("geometry", "c"): "c",
}


class ConfigError(QRefError, ValueError):
    """The config file or flags are malformed."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qref", description="Run quantum reference frame thought experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("scenario", choices=SCENARIOS)
    run.add_argument("--config", type=Path, help="JSON config file")
    run.add_argument("--out", type=Path, default=Path("qref-out"), help="output directory (default: qref-out)")
    run.add_argument("--sweep", help="name=start:stop:lin|log:count")
    run.add_argument("--grid-points", type=int, help="fringe grid size")
    run.add_argument("--grid-extent", type=float, help="fringe grid half-width, in envelope standard deviations")
    run.add_argument("--exact-transform", action="store_true", help="use the exact correlated transform for relative-frame states")
    run.add_argument("--seed", type=int, default=0, help="seed for randomized cross-checks")
    run.add_argument("--setup", choices=("a", "b"), help="interferometer setup override")
    parser.set_defaults(run_usage=run.format_usage())
    return parser


def parse_sweep(text: str) -> tuple[str, np.ndarray]:
    try:
        name, rng = text.split("=", 1)
        start, stop, kind, count = rng.split(":")
        start, stop, count = float(start), float(stop), int(count)
    except ValueError as exc:
        raise ConfigError(f"bad sweep {text!r}; expected name=start:stop:lin|log:count") from exc
    if not name or count < 1:
        raise ConfigError(f"bad sweep {text!r}")
    if kind == "lin":
        values = np.linspace(start, stop, count)
    elif kind == "log":
        if not (start > 0 and stop > 0):
            raise ConfigError("log sweep bounds must be positive")
        values = np.geomspace(start, stop, count)
    else:
        raise ConfigError(f"sweep spacing must be 'lin' or 'log', got {kind!r}")
    return name, values


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    return data


def _apply_sections(cfg, data: dict, mapping: dict, skip=()):
    updates = {}
    for section in ("masses", "geometry", "widths", "grid", "mode"):
        if section in skip or section not in data:
            continue
        block = data[section]
        if not isinstance(block, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        for key, value in block.items():
            if (section, key) not in mapping:
                raise ConfigError(f"unknown key {section}.{key}")
            updates[mapping[(section, key)]] = value
    return replace(cfg, **updates)


def _unused(data: dict, allowed: tuple[str, ...]):
    extra = [k for k in data if k not in allowed]
    if extra:
        raise ConfigError(f"config keys {extra} do not apply to this scenario")


def _float_list(value, n_allowed) -> tuple[float, ...]:
    if not isinstance(value, list) or len(value) not in n_allowed:
        raise ConfigError(f"widths must be a list of length {' or '.join(map(str, n_allowed))}")
    return tuple(float(v) for v in value)


def _sweep_config(cfg, name: str, values, runner, fields_ok) -> list[dict]:
    if name not in fields_ok:
        raise ConfigError(f"cannot sweep {name!r}; choose from {sorted(fields_ok)}")
    rows = []
    for v in values:
        rep = runner(replace(cfg, **{name: float(v)}))
        row = {name: float(v)}
        row.update(_scalar_columns(rep.metrics))
        rows.append(row)
    return rows


def _scalar_columns(metrics: dict) -> dict:
    out = {}
    for k, v in metrics.items():
        if isinstance(v, (bool, np.bool_)):
            out[k] = bool(v)
        elif isinstance(v, (complex, np.complexfloating)):
            out[f"{k}_re"], out[f"{k}_im"] = v.real, v.imag
        elif isinstance(v, (int, float, np.integer, np.floating)):
            out[k] = float(v)
    return out


def _numeric_fields(cls) -> set[str]:
    return {f.name for f in fields(cls) if f.type in ("float", "float | None")}


def run_scenario(args, data: dict) -> ScenarioReport:
    sweep = parse_sweep(args.sweep) if args.sweep else None
    name = args.scenario

    if name in ("interferometer", "frames"):
        _unused(data, ("masses", "geometry", "widths", "mode"))
        cfg = _apply_sections(InterferometerConfig(), data, _INTERFEROMETER_FIELDS)
        if args.setup:
            cfg = replace(cfg, setup=args.setup)
        if args.exact_transform:
            cfg = replace(cfg, exact_transform=True)
        if name == "frames":
            if sweep is not None and sweep[0] != "relabel_phase":
                raise ConfigError("frames only sweeps relabel_phase")
            return run_frames(cfg, None if sweep is None else sweep[1])
        report = run_interferometer(cfg)
        if sweep is not None:
            report.sweep_parameter = sweep[0]
            report.sweep = _sweep_config(cfg, *sweep, run_interferometer, _numeric_fields(InterferometerConfig))
        return report

    if name == "rocket":
        _unused(data, ("masses", "geometry", "widths", "grid", "mode"))
        cfg = _apply_sections(RocketConfig(), data, _ROCKET_FIELDS)
        if args.exact_transform:
            cfg = replace(cfg, exact_transform=True)
        if args.grid_points is not None:
            cfg = replace(cfg, grid_points=args.grid_points)
        if args.grid_extent is not None:
            cfg = replace(cfg, grid_sigmas=args.grid_extent)
        if sweep is None:
            return run_rocket(cfg)
        if sweep[0] == "delta_xR":
            return run_rocket(cfg, sweep[1])
        report = run_rocket(cfg)
        report.sweep_parameter = sweep[0]
        report.sweep = _sweep_config(cfg, *sweep, run_rocket, _numeric_fields(RocketConfig))
        return report

    if name == "third-particle":
        _unused(data, ("masses", "geometry", "widths", "theta"))
        cfg = _apply_sections(ThirdParticleConfig(), data, _THIRD_FIELDS, skip=("widths",))
        if "widths" in data:
            cfg = replace(cfg, widths=_float_list(data["widths"], (3,)))
        if "theta" in data:
            cfg = replace(cfg, theta=float(data["theta"]))
        rng = np.random.default_rng(args.seed)
        thetas = None
        if sweep is not None:
            if sweep[0] != "theta":
                raise ConfigError("third-particle only sweeps theta")
            thetas = sweep[1]
        report = run_third_particle(cfg, rng, RANDOM_ROUTE_SAMPLES, thetas)
        report.provenance["seed"] = args.seed
        return report

    # appendix
    if sweep is not None:
        raise ConfigError("appendix does not support sweeps")
    _unused(data, ("masses", "geometry", "widths", "theta"))
    base = {"m1": 1.0, "m2": 2.0, "m3": None, "L": 1.0, "c": 5.0}
    for (section, key), fname in _APPENDIX_FIELDS.items():
        block = data.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        if key in block:
            base[fname] = block[key]
    for section in ("masses", "geometry"):
        for key in data.get(section, {}):
            if (section, key) not in _APPENDIX_FIELDS:
                raise ConfigError(f"unknown key {section}.{key}")
    widths = None
    if "widths" in data:
        widths = _float_list(data["widths"], (2, 3))
    return appendix_analysis(
        base["m1"], base["m2"], base["m3"], widths, L=base["L"], c=base["c"], theta=float(data.get("theta", 0.0))
    )


def format_number(value) -> str:
    """Positional notation, 12 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {value}")
    if value == 0.0:
        return "0"
    return np.format_float_positional(value, precision=12, unique=False, fractional=False, trim="-")


def write_csv(path: Path, header: list[str], rows: list[list]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def write_outputs(report: ScenarioReport, out: Path, manifest: dict):
    out.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["manifest"] = manifest
    with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")
    if report.sweep_parameter is not None and report.sweep:
        param = report.sweep_parameter
        cols = [param] + [k for k in report.sweep[0] if k != param]
        write_csv(out / "sweep.csv", cols, [[row[c] for c in cols] for row in report.sweep])
    if report.fringe is not None:
        prof = report.fringe
        write_csv(out / "fringe.csv", ["position", "intensity"], [[x, y] for x, y in zip(prof.positions, prof.intensity)])


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        data = load_config(args.config)
        report = run_scenario(args, data)
    except ResolutionError as exc:
        print(f"qref: resolution error: {exc}", file=sys.stderr)
        return 3
    except (QRefError, ValueError, TypeError) as exc:
        sys.stderr.write(args.run_usage)
        print(f"qref: config error: {exc}", file=sys.stderr)
        return 2
    manifest = {
        "scenario": args.scenario,
        "config_path": None if args.config is None else str(args.config),
        "out": str(args.out),
        "sweep": args.sweep,
        "grid_points": args.grid_points,
        "grid_extent": args.grid_extent,
        "exact_transform": args.exact_transform,
        "seed": args.seed,
        "config": data,
    }
    try:
        write_outputs(report, args.out, manifest)
    except OSError as exc:
        print(f"qref: cannot write output to {args.out}: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    sys.exit(run_cli(argv))


if __name__ == "__main__":
    main()
