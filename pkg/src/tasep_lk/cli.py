"""Command-line front end.

Every command resolves its configuration as defaults < ``--config`` file <
explicit flags, and echoes the resolved configuration with a format version
into its output.  JSON outputs carry it inline; CSV outputs carry it in a
``<output>.meta.json`` sidecar (on stderr when writing CSV to stdout).
Feeding that echoed configuration back through ``--config`` reproduces the
output.

Exit codes: 0 success, 2 invalid input, 3 unresolved profile, 4 no wall
where one is required, 5 simulation failed the stationarity check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import kmc
from .domain_wall import (NoWallError, WallSolveError, check_existence, composite_profile,
                          solve_wall)
from .meanfield import ModelParams, ParameterError, validate_params
from .sensitivity import (PARAMETERS, RegimeCrossed, classify_scan, monotonicity_scan,
                          sensitivity_reports)

FORMAT_VERSION = "tasep-lk/1"

EXIT_OK, EXIT_INVALID, EXIT_UNRESOLVED, EXIT_NO_WALL, EXIT_NONSTATIONARY = 0, 2, 3, 4, 5

MODEL_KEYS = ("alpha", "beta", "omega_a", "omega_d")
LATTICE_DEFAULTS = {"sites": 1000, "seed": 0, "measure_time": 1e4, "burn_in": None,
                    "sample_interval": None, "initial": "empty",
                    "stationarity_threshold": 0.1}
COMMAND_DEFAULTS = {
    "profile": {"points": 201},
    "wall": {},
    "exist": {},
    "sensitivity": {"parameters": list(PARAMETERS)},
    "scan": {"parameter": None, "start": None, "stop": None, "steps": 41},
    "simulate": dict(LATTICE_DEFAULTS),
    "compare": dict(LATTICE_DEFAULTS, exclusion=0.05, input=None, points=2001),
}
DEFAULT_FORMAT = {"profile": "csv", "scan": "csv", "simulate": "csv"}


class UsageError(Exception):
    """Invalid input; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --- configuration ----------------------------------------------------------

def _model_flags(p):
    g = p.add_argument_group("model parameters")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--omega-a", dest="omega_a", type=float)
    g.add_argument("--omega-d", dest="omega_d", type=float)


def _io_flags(p, formats=("csv", "json")):
    p.add_argument("--config", type=Path, help="JSON file; explicit flags override it")
    p.add_argument("-o", "--output", type=Path, help="output file (default: stdout)")
    p.add_argument("--format", choices=formats)


def _lattice_flags(p):
    g = p.add_argument_group("lattice simulation")
    g.add_argument("--sites", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--measure-time", dest="measure_time", type=float)
    g.add_argument("--burn-in", dest="burn_in", type=float)
    g.add_argument("--sample-interval", dest="sample_interval", type=float)
    g.add_argument("--initial", help="empty, full, or a density in [0, 1]")
    g.add_argument("--stationarity-threshold", dest="stationarity_threshold", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tasep-lk", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("profile", help="mean-field composite density profile")
    _model_flags(p), _io_flags(p)
    p.add_argument("--points", type=int)

    for name, text in (("wall", "domain-wall position and height"),
                       ("exist", "domain-wall existence verdict")):
        p = sub.add_parser(name, help=text)
        _model_flags(p), _io_flags(p, ("json",))

    p = sub.add_parser("sensitivity", help="analytic vs finite-difference derivatives")
    _model_flags(p), _io_flags(p, ("json",))
    p.add_argument("--parameters", type=lambda s: [t.strip() for t in s.split(",") if t.strip()],
                   help=f"comma list from {','.join(PARAMETERS)}")

    p = sub.add_parser("scan", help="x_s and height along one parameter")
    _model_flags(p), _io_flags(p)
    p.add_argument("--parameter", choices=PARAMETERS)
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--steps", type=int)

    p = sub.add_parser("simulate", help="stochastic lattice simulation")
    _model_flags(p), _io_flags(p)
    _lattice_flags(p)

    p = sub.add_parser("compare", help="simulation vs mean-field distances")
    _model_flags(p), _io_flags(p, ("json",))
    _lattice_flags(p)
    p.add_argument("--input", type=Path, help="CSV written by `simulate` (needs its sidecar)")
    p.add_argument("--exclusion", type=float, help="half-width excluded around x_s")
    p.add_argument("--points", type=int, help="mean-field grid size")
    return parser


def _read_config_file(path: Path, command: str) -> dict:
    try:
        data = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        # an echoed output: take its embedded configuration
        if data.get("command") not in (None, command):
            raise UsageError(f"config was written by `{data['command']}`, not `{command}`")
        data = data["config"]
    data = {k: v for k, v in data.items() if k not in ("K",)}
    allowed = set(MODEL_KEYS) | set(COMMAND_DEFAULTS[command])
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise UsageError(f"unknown config keys for `{command}`: {', '.join(unknown)}")
    return data


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = {k: None for k in MODEL_KEYS}
    cfg.update(COMMAND_DEFAULTS[args.command])
    if args.config is not None:
        cfg.update(_read_config_file(args.config, args.command))
    for key in cfg:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = str(v) if isinstance(v, Path) else v
    if args.command == "compare" and cfg.get("input"):
        return cfg  # model parameters come from the simulation sidecar
    missing = [k for k in MODEL_KEYS if cfg[k] is None]
    if missing:
        raise UsageError(f"missing model parameters: {', '.join(missing)}")
    return cfg


def _params(cfg: dict) -> ModelParams:
    try:
        return validate_params({k: cfg[k] for k in MODEL_KEYS})
    except ParameterError as exc:
        raise UsageError(str(exc)) from None


def _lattice(cfg: dict, params: dict | None = None) -> kmc.LatticeConfig:
    src = params or cfg
    initial = cfg["initial"]
    if initial not in ("empty", "full"):
        try:
            initial = float(initial)
        except (TypeError, ValueError):
            raise UsageError(f"bad --initial {initial!r}") from None
    try:
        return kmc.LatticeConfig(
            n_sites=int(cfg["sites"]), alpha=float(src["alpha"]), beta=float(src["beta"]),
            omega_a=float(src["omega_a"]), omega_d=float(src["omega_d"]),
            seed=int(cfg["seed"]), burn_in_time=cfg["burn_in"],
            measure_time=float(cfg["measure_time"]), sample_interval=cfg["sample_interval"],
            initial=initial, stationarity_threshold=float(cfg["stationarity_threshold"]))
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None


# --- output -----------------------------------------------------------------

def _num(v):
    """Full round-trip text for floats; JSON-safe None for NaN."""
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, int, np.floating, np.integer, np.bool_)):
        return _num(obj)
    if hasattr(obj, "value"):  # enums
        return obj.value
    return obj


def envelope(command: str, cfg: dict, **payload) -> dict:
    body = {"format_version": FORMAT_VERSION, "command": command, "config": cfg}
    body.update(payload)
    return _clean(body)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


class Output:
    def __init__(self, path: Path | None, stdout, stderr):
        self.path, self.stdout, self.stderr = path, stdout, stderr

    def json(self, obj):
        text = _dump_json(obj)
        if self.path is None:
            self.stdout.write(text)
        else:
            self.path.write_text(text)

    def csv(self, header, rows, meta: dict):
        text = _csv_text(header, rows)
        if self.path is None:
            self.stdout.write(text)
            self.stderr.write(json.dumps(meta, allow_nan=False) + "\n")
        else:
            self.path.write_text(text)
            sidecar_path(self.path).write_text(_dump_json(meta))


# --- commands ---------------------------------------------------------------

def cmd_profile(cfg, fmt, out: Output) -> int:
    params = _params(cfg)
    points = int(cfg["points"])
    if points < 2:
        raise UsageError("--points must be >= 2")
    comp = composite_profile(params, points)
    meta = envelope("profile", cfg, K=params.K, regime=comp.regime,
                    wall=comp.wall.as_dict() if comp.wall else None,
                    unresolved=comp.unresolved, note=comp.note)
    if comp.unresolved:
        out.json(dict(meta, error="unresolved profile: no wall and no branch spans [0, 1]",
                      rows=_clean([[x, r, b] for x, r, b in comp.rows()])))
        return EXIT_UNRESOLVED
    if fmt == "json":
        out.json(dict(meta, rows=_clean([[x, r, b] for x, r, b in comp.rows()])))
    else:
        out.csv(("x", "rho", "branch"),
                ((_fmt(x), _fmt(r), b) for x, r, b in comp.rows()), meta)
    return EXIT_OK


def _wall_payload(params):
    verdict = check_existence(params)
    wall = None
    if verdict.exists:
        try:
            wall = solve_wall(params, verdict)
        except WallSolveError as exc:
            raise NoWallError(f"existence conditions hold but the wall solve failed: {exc}")
    fields = wall.as_dict() if wall else dict.fromkeys(
        ("x_s", "rho_minus", "rho_plus", "height", "residual"))
    return verdict, dict(exists=verdict.exists, regime=verdict.regime, gamma=verdict.gamma,
                         K=params.K, **fields, diagnostics=verdict.diagnostics)


def cmd_wall(cfg, fmt, out: Output, command="wall") -> int:
    params = _params(cfg)
    _, payload = _wall_payload(params)
    out.json(envelope(command, cfg, **payload))
    return EXIT_OK


def cmd_exist(cfg, fmt, out: Output) -> int:
    return cmd_wall(cfg, fmt, out, command="exist")


def cmd_sensitivity(cfg, fmt, out: Output) -> int:
    params = _params(cfg)
    names = list(cfg["parameters"])
    bad = [n for n in names if n not in PARAMETERS]
    if bad:
        raise UsageError(f"unknown sensitivity parameters: {bad}")
    if not check_existence(params).exists:
        out.json(envelope("sensitivity", cfg, error="no domain wall at the base point",
                          reports=[]))
        return EXIT_NO_WALL
    try:
        reports = sensitivity_reports(params, names)
    except RegimeCrossed as exc:
        raise UsageError(f"finite-difference stencil invalid here: {exc}") from None
    out.json(envelope("sensitivity", cfg, K=params.K,
                      reports=[r.as_dict() for r in reports]))
    return EXIT_OK


def cmd_scan(cfg, fmt, out: Output) -> int:
    params = _params(cfg)
    for key in ("parameter", "start", "stop"):
        if cfg[key] is None:
            raise UsageError(f"scan needs --{key}")
    if cfg["parameter"] not in PARAMETERS:
        raise UsageError(f"unknown scan parameter {cfg['parameter']!r}")
    steps = int(cfg["steps"])
    if steps < 3:
        raise UsageError("--steps must be >= 3")
    if not check_existence(params).exists:
        out.json(envelope("scan", cfg, error="no domain wall at the base point"))
        return EXIT_NO_WALL
    pts = monotonicity_scan(params, cfg["parameter"],
                            (float(cfg["start"]), float(cfg["stop"])), steps)
    held = "omega_d held fixed, omega_a = K * omega_d" if cfg["parameter"] == "K" \
        else "K held fixed" if cfg["parameter"] == "omega_d" else None
    meta = envelope("scan", cfg, K=params.K, classification=classify_scan(pts),
                    held=held, n_no_wall=sum(not p.exists for p in pts))
    rows = [(p.value, p.x_s, p.height, "" if p.exists else "no_wall") for p in pts]
    if fmt == "json":
        out.json(dict(meta, rows=_clean([list(r) for r in rows])))
    else:
        out.csv(("param_value", "x_s", "height", "note"),
                ((_fmt(v), _fmt(x), _fmt(h), n) for v, x, h, n in rows), meta)
    return EXIT_OK


def _simulation_meta(cfg, est: kmc.ProfileEstimate) -> dict:
    m = est.metadata()
    m["lattice"] = m.pop("config")
    return envelope("simulate", cfg, **m, wall_time=est.wall_time,
                    stationary=est.half_window_gap <= est.config.stationarity_threshold)


def _run_quiet(lat: kmc.LatticeConfig) -> kmc.ProfileEstimate:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", kmc.NonStationaryWarning)
        return kmc.run(lat)


def cmd_simulate(cfg, fmt, out: Output) -> int:
    _params(cfg)
    lat = _lattice(cfg)
    est = _run_quiet(lat)
    meta = _simulation_meta(cfg, est)
    if fmt == "json":
        out.json(dict(meta, site=list(range(1, est.n_sites + 1)), x=est.x.tolist(),
                      density=est.density.tolist()))
    else:
        out.csv(("site", "x", "density"),
                ((i + 1, f"{x:.12g}", repr(float(d)))
                 for i, (x, d) in enumerate(zip(est.x, est.density))), meta)
    if not meta["stationary"]:
        out.stderr.write(f"error: half-window gap {est.half_window_gap:.4g} exceeds "
                         f"{lat.stationarity_threshold}; measurement not stationary\n")
        return EXIT_NONSTATIONARY
    return EXIT_OK


def load_simulation(path: Path) -> kmc.ProfileEstimate:
    """Rebuild a :class:`kmc.ProfileEstimate` from a simulate CSV and its sidecar."""
    meta_path = sidecar_path(path)
    try:
        meta = json.loads(meta_path.read_text())
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read simulation {path}: {exc}") from None
    if meta.get("command") != "simulate" or "config" not in meta:
        raise UsageError(f"{meta_path} is not a simulate sidecar")
    c = meta["config"]
    lat = _lattice({**LATTICE_DEFAULTS, **c})
    density = np.array([float(r["density"]) for r in rows])
    if density.size != lat.n_sites:
        raise UsageError("CSV row count does not match the recorded lattice size")
    return kmc.ProfileEstimate(density, np.full(density.size, np.nan), meta["n_samples"],
                               meta["half_window_gap"], meta["event_counts"], lat)


def cmd_compare(cfg, fmt, out: Output) -> int:
    if cfg.get("input"):
        est = load_simulation(Path(cfg["input"]))
        model = {k: getattr(est.config, k) for k in MODEL_KEYS}
        for k in MODEL_KEYS:
            if cfg[k] is not None and float(cfg[k]) != model[k]:
                raise UsageError(f"{k}={cfg[k]} disagrees with the simulation ({model[k]})")
        cfg = dict(cfg, **model)
        params = _params(model)
    else:
        params = _params(cfg)
        est = _run_quiet(_lattice(cfg))
    comp = composite_profile(params, int(cfg["points"]))
    try:
        c = kmc.compare_to_meanfield(est, comp, float(cfg["exclusion"]))
    except kmc.ConfigMismatch as exc:
        raise UsageError(str(exc)) from None
    out.json(envelope("compare", cfg, K=params.K, regime=comp.regime,
                      x_s=comp.wall.x_s if comp.wall else None,
                      half_window_gap=est.half_window_gap, **c.as_dict()))
    return EXIT_OK


COMMANDS = {"profile": cmd_profile, "wall": cmd_wall, "exist": cmd_exist,
            "sensitivity": cmd_sensitivity, "scan": cmd_scan, "simulate": cmd_simulate,
            "compare": cmd_compare}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        fmt = args.format or DEFAULT_FORMAT.get(args.command, "json")
        return COMMANDS[args.command](cfg, fmt, Output(args.output, stdout, stderr))
    except UsageError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except NoWallError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_NO_WALL


if __name__ == "__main__":
    raise SystemExit(main())
