"""Command-line front end: ``nlqm <command> [options]``.

Parameters come from defaults, then an optional ``key = value`` file
(``--config``), then ``--set key=value`` overrides. Every output file gets a
``.manifest.json`` sibling recording the resolved parameters and where
each one came from; series outputs also get a ``.plot.json`` sidecar.

Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import dg_pde, grigorenko, lifetime, measurement, montecarlo
from .core import PhysicalConstants, RngStream
from .errors import NumericalError

COMMANDS = ("collapse", "born-test", "pde-run", "measure", "lifetime", "presets")
EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
REQUIRED = object()


class ConfigError(ValueError):
    def __init__(self, problems):
        super().__init__("\n".join(problems))
        self.problems = list(problems)


# --- value parsers -------------------------------------------------------------

def _floats(text: str) -> list[float]:
    vals = [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    if not vals:
        raise ValueError("empty list")
    return vals


def _int(text) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"{text!r} is not an integer")
    return int(value)


def _bool(text) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _choice(*options) -> Callable[[str], str]:
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"{t!r} is not one of {', '.join(options)}")
        return t
    return parse


def _optional(parse):
    def inner(text):
        t = str(text).strip()
        return None if t.lower() in ("", "none", "auto") else parse(t)
    return inner


def _bins(text):
    """Either a bin count or explicit ``lo:hi`` intervals separated by commas."""
    t = str(text).strip()
    if ":" not in t:
        return _int(t)
    out = []
    for part in t.split(","):
        lo, hi = part.split(":")
        out.append((float(lo), float(hi)))
    return tuple(out)


CONSTANT_KEYS = {f"constants.{k}": float for k in ("hbar", "c", "G", "m_atom")}

# key -> (parser, default); REQUIRED marks mandatory keys
SCHEMAS: dict[str, dict[str, tuple]] = {
    "collapse": {
        "weights": (_floats, REQUIRED),
        "q": (_optional(_floats), None),
        "sampling": (_choice("born", "phase"), "born"),
        "gamma": (float, 1.0),
        "t_max": (float, 5.0),
        "dt": (float, 0.1),
        "method": (_choice("ode", "closed_form"), "ode"),
    },
    "born-test": {
        "weights": (_floats, REQUIRED),
        "trials": (_int, 100_000),
        "engine": (_choice(*montecarlo.ENGINES), "grigorenko"),
        "sampling": (_choice(*measurement.SAMPLING_MODES), "born_distribution"),
        "parallelism": (_int, 1),
    },
    "pde-run": {
        "engine": (_choice(*dg_pde.ENGINES), "linear"),
        "grid_n": (_int, 512),
        "dx": (float, 0.078125),
        "dt": (_optional(float), None),
        "theta": (float, 1.0),
        "D": (float, 0.0),
        "mass": (float, 1.0),
        "hbar": (float, 1.0),
        "initial": (_choice("gaussian", "plane_wave", "custom_csv"), "gaussian"),
        "sigma": (float, 1.0),
        "center": (float, 0.0),
        "k0": (float, 0.0),
        "mode": (_int, 1),
        "input": (_optional(str), None),
        "boundary": (_choice(*dg_pde.BOUNDARIES), "periodic"),
        "stencil": (_choice(*dg_pde.STENCILS), "spectral"),
        "t_max": (float, 1.0),
        "snapshot_every": (float, 0.0),
    },
    "measure": {
        "weights": (_optional(_floats), None),
        "apparatus": (_optional(str), None),
        "bins": (_optional(_bins), None),
        "gamma": (float, 0.5),
        "m1": (float, 1.0),
        "sampling": (_choice(*measurement.SAMPLING_MODES), "born_distribution"),
        "trials": (_int, 1),
        "t_partial": (_optional(float), None),
        "relative": (_bool, False),
    },
    "lifetime": {
        "N": (float, REQUIRED),
        "a": (float, 1e-10),
        "L": (_optional(float), None),
        "mass": (_optional(float), None),
        "formula": (_choice("all", *lifetime.FORMULAS), "all"),
        **{k: (float, None) for k in CONSTANT_KEYS},
    },
    "presets": {k: (float, None) for k in CONSTANT_KEYS},
}


@dataclass
class RunConfig:
    command: str
    parameters: dict
    sources: dict
    seed: int
    output_path: Path
    format: str
    extra: dict = field(default_factory=dict)


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError([f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}"])
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def resolve(command: str, file_values: dict, cli_values: dict) -> tuple[dict, dict]:
    """Merge defaults < file < CLI and validate; all problems are reported together."""
    schema = SCHEMAS[command]
    problems = []
    for origin, values in (("config file", file_values), ("--set", cli_values)):
        unknown = sorted(set(values) - set(schema))
        if unknown:
            valid = ", ".join(sorted(schema)) or "(none)"
            problems.append(f"unknown key(s) {', '.join(unknown)} from {origin} for '{command}'; valid keys: {valid}")
    params, sources = {}, {}
    for key, (parse, default) in schema.items():
        if key in cli_values:
            raw, src = cli_values[key], "cli"
        elif key in file_values:
            raw, src = file_values[key], "file"
        else:
            if default is REQUIRED:
                problems.append(f"missing required key '{key}' for '{command}'")
            else:
                params[key], sources[key] = default, "default"
            continue
        try:
            params[key] = parse(raw)
            sources[key] = src
        except (ValueError, TypeError) as exc:
            problems.append(f"bad value for '{key}': {exc}")
    problems += _check_semantics(command, params)
    if problems:
        raise ConfigError(problems)
    return params, sources


def _check_semantics(command, p) -> list[str]:
    out = []

    def need(cond, msg):
        # keys that failed to parse are already reported; skip checks that use them
        try:
            ok = cond()
        except KeyError:
            return
        if not ok:
            out.append(msg)

    if "weights" in p and p["weights"] is not None:
        w = np.asarray(p["weights"])
        need(lambda: np.all(w >= 0) and w.sum() > 0, "weights must be non-negative with a positive sum")
    if command == "collapse":
        need(lambda: p["gamma"] >= 0, "gamma must be non-negative")
        need(lambda: p["t_max"] >= 0, "t_max must be non-negative")
        need(lambda: p["dt"] > 0, "dt must be positive")
        if p.get("q") is not None and "weights" in p:
            need(lambda: len(p["q"]) == len(p["weights"]), "q and weights must have the same length")
    elif command == "born-test":
        need(lambda: p["trials"] >= 1, "trials must be at least 1")
        need(lambda: p["parallelism"] >= 1, "parallelism must be at least 1")
    elif command == "pde-run":
        need(lambda: p["grid_n"] >= 16, "grid_n must be at least 16")
        need(lambda: p["dx"] > 0, "dx must be positive")
        need(lambda: 0 < p["theta"] <= 1, "theta must lie in (0, 1]")
        need(lambda: p["D"] >= 0, "D must be non-negative")
        need(lambda: p["t_max"] >= 0, "t_max must be non-negative")
        need(lambda: p["initial"] != "custom_csv" or p["input"], "initial = custom_csv needs the 'input' key")
    elif command == "measure":
        need(lambda: (p["weights"] is None) != (p["apparatus"] is None), "give exactly one of 'weights' or 'apparatus'")
        need(lambda: p["apparatus"] is None or p["bins"] is not None, "'apparatus' needs 'bins'")
        need(lambda: 0 <= p["gamma"] < 1, "gamma must lie in [0, 1)")
        need(lambda: p["m1"] > 0, "m1 must be positive")
        need(lambda: p["trials"] >= 1, "trials must be at least 1")
        need(lambda: p["t_partial"] is None or p["t_partial"] >= 0, "t_partial must be non-negative")
    elif command == "lifetime":
        need(lambda: p["N"] >= 1, "N must be at least 1")
        need(lambda: p["a"] > 0, "a must be positive")
    return out


def _constants(params) -> PhysicalConstants:
    given = {k: v for k, v in params.items() if k in CONSTANT_KEYS and v is not None}
    return PhysicalConstants.from_mapping(given)


# --- output helpers ---------------------------------------------------------------

def _json_dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _finite(x):
    return x if x is None or math.isfinite(x) else None


def _sidecar(path: Path, x: str, ys: list[str], xlabel: str, ylabel: str, title: str, kind: str = "line") -> Path:
    side = path.with_name(path.name + ".plot.json")
    _json_dump({"data": path.name, "kind": kind, "x": x, "y": ys,
                "xlabel": xlabel, "ylabel": ylabel, "title": title}, side)
    return side


# --- commands -------------------------------------------------------------------

def _cmd_collapse(cfg: RunConfig) -> list[Path]:
    p = cfg.parameters
    state = grigorenko.SuperpositionState.from_weights(p["weights"])
    if p["q"] is not None:
        q = np.asarray(p["q"], dtype=float)
    else:
        rng = RngStream(cfg.seed, 0)
        w = state.populations
        q = grigorenko.sample_q_born(w, rng) if p["sampling"] == "born" else grigorenko.sample_q_phase(w, rng)
    params = grigorenko.CollapseParams(p["gamma"], q)
    if p["method"] == "ode":
        traj = grigorenko.evolve_ode(state, params, p["t_max"], p["dt"])
    else:
        n = max(2, int(math.ceil(p["t_max"] / p["dt"])) + 1)
        traj = grigorenko.closed_form_trajectory(state, params, np.linspace(0.0, p["t_max"], n))
    out = cfg.output_path
    cfg.extra["q"] = [_finite(float(v)) for v in q]
    cfg.extra["winner"] = traj.winner
    if cfg.format == "csv":
        traj.to_csv(out)
        names = [f"pop_{i + 1}" for i in range(state.basis_size)]
        return [out, _sidecar(out, "t", names, "t", "population", "Population collapse")]
    _json_dump({"t": traj.times, "populations": traj.populations, "winner": traj.winner,
                "q": cfg.extra["q"], "gamma": p["gamma"]}, out)
    return [out]


def _cmd_born_test(cfg: RunConfig) -> list[Path]:
    p = cfg.parameters
    conf = montecarlo.EnsembleConfig(p["trials"], cfg.seed, p["parallelism"])
    report = montecarlo.run_born_ensemble(np.asarray(p["weights"]), conf, p["engine"], p["sampling"])
    out = cfg.output_path
    cfg.extra.update({"chi_square": report.chi_square, "p_value": report.p_value, "pass": report.passed})
    if cfg.format == "json":
        report.to_json(out)
        return [out]
    report.to_csv(out)
    return [out, _sidecar(out, "state_index", ["expected", "observed"], "state", "count",
                          "Winner counts against Born expectation", kind="bar")]


def _initial_state(p) -> dg_pde.GridWavefunction:
    n, dx, bc = p["grid_n"], p["dx"], p["boundary"]
    if p["initial"] == "gaussian":
        return dg_pde.gaussian_packet(n, dx, p["sigma"], p["center"], p["k0"], bc)
    if p["initial"] == "plane_wave":
        return dg_pde.plane_wave(n, dx, p["mode"], bc)
    return dg_pde.GridWavefunction.from_csv(p["input"], bc).normalized()


def _cmd_pde_run(cfg: RunConfig) -> list[Path]:
    p = cfg.parameters
    psi = _initial_state(p)
    params = dg_pde.PDEParams(mass=p["mass"], theta=p["theta"], diffusion_D=p["D"], dt=p["dt"],
                              hbar=p["hbar"], stencil=p["stencil"])
    run = dg_pde.run_pde(p["engine"], psi, params, p["t_max"], p["snapshot_every"] or None)
    final = run.final
    cfg.extra.update({k: v for k, v in run.meta.items()})
    out = cfg.output_path
    outputs = [out]
    if cfg.format == "csv":
        final.to_csv(out, mass=p["mass"], hbar=p["hbar"])
        outputs.append(_sidecar(out, "x", ["rho", "re_psi", "im_psi", "j"], "x", "psi, density, current",
                                f"{p['engine']} evolution at t = {p['t_max']:g}"))
    else:
        dc = dg_pde.density_current(final, params)
        _json_dump({"t": p["t_max"], "x": final.x, "re_psi": final.values.real, "im_psi": final.values.imag,
                    "rho": dc.rho, "j": dc.j}, out)
    if len(run.states) > 2:
        snaps, summary = dg_pde.write_snapshots(run, out.parent, out.stem)
        cfg.extra["snapshots"] = summary
        outputs += snaps
        series = out.with_name(out.stem + ".snapshots.csv")
        with open(series, "w") as fh:
            fh.write("t,norm,mean_x,width\n")
            for t, s in zip(run.times, run.states):
                rho = np.abs(s.values) ** 2
                mean = float(np.sum(rho * s.x) / rho.sum())
                fh.write(f"{t:.17g},{s.norm():.17g},{mean:.17g},{dg_pde.position_width(s):.17g}\n")
        outputs += [series, _sidecar(series, "t", ["norm", "width"], "t", "value", "Snapshot diagnostics")]
    return outputs


def _measure_weights(p):
    if p["weights"] is not None:
        w = np.asarray(p["weights"], dtype=float)
        return w / w.sum(), None
    psi = dg_pde.GridWavefunction.from_csv(p["apparatus"])
    bins = p["bins"] if isinstance(p["bins"], tuple) else measurement.default_bins(psi, p["bins"])
    ov = measurement.pointer_overlap(psi, bins)
    return ov.weights, ov


def _cmd_measure(cfg: RunConfig) -> list[Path]:
    p = cfg.parameters
    w, overlap = _measure_weights(p)
    if overlap is not None:
        cfg.extra.update({"overlap_residual": overlap.residual, "residual_flagged": overlap.flagged})
    out = cfg.output_path
    if p["t_partial"] is not None:
        res = measurement.sequential_measurement_discriminator(
            w, p["t_partial"], cfg.seed, p["trials"], p["sampling"], p["relative"])
        record = {"weights": w, "t_partial": p["t_partial"], "relative": p["relative"],
                  "trials": res.trials, "repeat_probability": res.repeat_probability,
                  "first_counts": np.bincount(res.first, minlength=w.size),
                  "second_counts": res.second_counts}
        cfg.extra["repeat_probability"] = res.repeat_probability
        if cfg.format == "json":
            _json_dump(record, out)
            return [out]
        with open(out, "w") as fh:
            fh.write("state_index,weight,first,second\n")
            for i in range(w.size):
                fh.write(f"{i},{w[i]:.17g},{record['first_counts'][i]},{record['second_counts'][i]}\n")
        return [out, _sidecar(out, "state_index", ["first", "second"], "state", "count",
                              "Sequential measurement outcomes", kind="bar")]
    if p["trials"] == 1:
        q = measurement.sample_Q(w, RngStream(cfg.seed, 0), p["sampling"])
        outcome = measurement.outcome_from_Q(w, q, p["sampling"])
        if cfg.format == "json":
            traj_path = out.with_name(out.stem + ".trajectory.csv")
            outcome.trajectory.to_csv(traj_path)
            outcome.to_json(out, cfg.seed, traj_path.name)
            return [out, traj_path]
        outcome.trajectory.to_csv(out)
        cfg.extra.update(outcome.to_record(cfg.seed))
        names = [f"pop_{i + 1}" for i in range(w.size)]
        return [out, _sidecar(out, "t", names, "t", "population", "Measurement collapse")]
    conf = montecarlo.EnsembleConfig(p["trials"], cfg.seed)
    report = montecarlo.run_born_ensemble(w, conf, "measurement", p["sampling"])
    cfg.extra.update({"chi_square": report.chi_square, "p_value": report.p_value, "pass": report.passed})
    if cfg.format == "json":
        report.to_json(out)
        return [out]
    report.to_csv(out)
    return [out]


def _lifetime_rows(cfg: RunConfig):
    p = cfg.parameters
    constants = _constants(p)
    if cfg.command == "presets":
        return lifetime.experiment_presets(constants)
    spec = lifetime.ObjectSpec(p["N"], p["a"], p["L"], p["mass"])
    formulas = list(lifetime.FORMULAS) if p["formula"] == "all" else [p["formula"]]
    return [lifetime.lifetime_row(f"N={p['N']:g}", spec, f, constants) for f in formulas]


def _cmd_lifetime(cfg: RunConfig) -> list[Path]:
    rows = _lifetime_rows(cfg)
    lifetime.write_table(rows, cfg.output_path, cfg.format)
    return [cfg.output_path]


HANDLERS = {
    "collapse": _cmd_collapse,
    "born-test": _cmd_born_test,
    "pde-run": _cmd_pde_run,
    "measure": _cmd_measure,
    "lifetime": _cmd_lifetime,
    "presets": _cmd_lifetime,
}


def execute(cfg: RunConfig) -> list[Path]:
    """Run one command and write its manifest; returns every file written."""
    start = time.perf_counter()
    outputs = HANDLERS[cfg.command](cfg)
    manifest = {
        "command": cfg.command,
        "parameters": cfg.parameters,
        "sources": cfg.sources,
        "seed": cfg.seed,
        "format": cfg.format,
        "software": {"name": "nlqm", "version": __version__},
        "outputs": [o.name for o in outputs],
        "results": {k: _finite(v) if isinstance(v, float) else v for k, v in cfg.extra.items()},
        "wall_time_s": time.perf_counter() - start,
    }
    path = cfg.output_path.with_name(cfg.output_path.name + ".manifest.json")
    _json_dump(manifest, path)
    return outputs + [path]


# --- argument handling -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlqm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        keys = ", ".join(sorted(SCHEMAS[name])) or "none"
        sp = sub.add_parser(name, help=f"keys: {keys}")
        sp.add_argument("--config", type=Path, help="flat 'key = value' parameter file")
        sp.add_argument("--seed", default="0", help="64-bit master seed (default 0)")
        sp.add_argument("--out", type=Path, help="primary output file")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one parameter (repeatable)")
    return parser


def make_config(args) -> RunConfig:
    problems = []
    file_values = {}
    if args.config is not None:
        try:
            file_values = read_config_file(args.config)
        except OSError as exc:
            problems.append(f"cannot read config file: {exc}")
        except ConfigError as exc:
            problems += exc.problems
    cli_values = {}
    for item in args.set:
        if "=" not in item:
            problems.append(f"--set expects KEY=VALUE, got {item!r}")
            continue
        k, v = item.split("=", 1)
        cli_values[k.strip()] = v.strip()
    try:
        seed = int(str(args.seed), 0)
        if not 0 <= seed < 2**64:
            raise ValueError
    except ValueError:
        problems.append(f"--seed must be an unsigned 64-bit integer, got {args.seed!r}")
        seed = 0
    out = args.out or Path(f"nlqm_{args.command.replace('-', '_')}.{args.format}")
    parent = out.resolve().parent
    if not parent.is_dir():
        problems.append(f"output directory {parent} does not exist")
    elif not os.access(parent, os.W_OK):
        problems.append(f"output directory {parent} is not writable")
    try:
        params, sources = resolve(args.command, file_values, cli_values)
    except ConfigError as exc:
        problems += exc.problems
        params, sources = {}, {}
    if problems:
        raise ConfigError(problems)
    return RunConfig(args.command, params, sources, seed, out, args.format)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args)
    except ConfigError as exc:
        for line in exc.problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_INVALID
    try:
        outputs = execute(cfg)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for path in outputs:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
