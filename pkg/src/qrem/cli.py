"""Command-line front end: ``qrem <subcommand> [options]``.

Every run is described by a :class:`RunConfig`.  Flags build it, an
optional JSON ``--config`` file overrides any field it names, and the
merged result is embedded in the header of every artifact written.

Exit codes: 0 success, 2 invalid configuration, 3 capacity exceeded,
4 numerical failure (no convergence, bracket failure, norm drift).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import artifacts, dynamics, sweep, theory
from .errors import (
    BracketError,
    CapacityError,
    ConvergenceError,
    NormDriftError,
    QremError,
    ValidationError,
)
from .model import ModelParams, check_capacity, ground_state_energy, sample_energies, save_table
from .spectral import DEFAULT_TOL, HamiltonianView, lowest_eigenpairs

SUBCOMMANDS = ("sample", "spectrum", "sweep", "min-gap", "ensemble", "anneal", "theory", "phase-diagram")
FORMATS = ("json", "jsonl", "csv", "binary")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAPACITY = 3
EXIT_NUMERICAL = 4

# module that owns each subcommand, for error messages
_OWNER = {
    "sample": "model",
    "spectrum": "spectral",
    "sweep": "sweep",
    "min-gap": "sweep",
    "ensemble": "sweep",
    "anneal": "dynamics",
    "theory": "theory",
    "phase-diagram": "theory",
}

_DEFAULT_FORMAT = {
    "sample": "binary",
    "spectrum": "json",
    "sweep": "csv",
    "min-gap": "jsonl",
    "ensemble": "json",
    "anneal": "jsonl",
    "theory": "csv",
    "phase-diagram": "csv",
}


@dataclass
class RunConfig:
    subcommand: str
    n: int | None = None
    seed: int = 0
    seeds: str | None = None
    sizes: str | None = None
    gamma: float | None = None
    gamma_grid: str | None = None
    t_grid: str | None = None
    phase_diagram: bool = False
    k: int = 2
    tol: float = DEFAULT_TOL
    taus: str | None = None
    gamma_max: float = dynamics.DEFAULT_GAMMA_MAX
    profile: str = "linear"
    dt_control: float = 0.5
    output: str | None = None
    format: str | None = None
    threads: int = 1
    keep_going: bool = False

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ValidationError(f"unknown subcommand {self.subcommand!r}")
        if self.format is None:
            self.format = _DEFAULT_FORMAT[self.subcommand]
        if self.format not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.format == "binary" and self.subcommand != "sample":
            raise ValidationError("binary format is only available for 'sample'")
        if self.format == "binary" and not self.output:
            raise ValidationError("binary output needs --output")
        if self.threads < 1:
            raise ValidationError(f"threads must be >= 1, got {self.threads}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if not self.tol > 0:
            raise ValidationError(f"tol must be positive, got {self.tol}")
        needs_n = self.subcommand in ("sample", "spectrum", "sweep", "min-gap", "anneal")
        if needs_n:
            if self.n is None:
                raise ValidationError(f"{self.subcommand} needs --n")
            ModelParams(self.n, self.seed)
            check_capacity(self.n)
        return self


def parse_grid(text, name="grid"):
    """``lo:hi:count`` evenly spaced and inclusive, or a comma-separated list."""
    try:
        if ":" in text:
            lo, hi, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError
            return np.linspace(float(lo), float(hi), count)
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise ValidationError(f"malformed {name} {text!r}; expected lo:hi:count or a,b,c") from None


def parse_geometric(text, name="taus"):
    """``lo:hi:count`` geometrically spaced, or a comma-separated list."""
    values = parse_grid(text, name)
    if values.size == 0 or values.min() <= 0:
        raise ValidationError(f"{name} must be positive")
    if ":" in text:
        return np.geomspace(values[0], values[-1], values.size)
    return values


def parse_seeds(text):
    """``a..b`` inclusive range, or a comma-separated list."""
    try:
        if ".." in text:
            a, b = text.split("..")
            a, b = int(a), int(b)
            if b < a:
                raise ValueError
            return list(range(a, b + 1))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"malformed seed list {text!r}; expected a..b or a,b,c") from None


def _seed_list(cfg):
    return parse_seeds(cfg.seeds) if cfg.seeds else [cfg.seed]


class _Run:
    """Collects payload for one subcommand and writes it in the chosen format."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.header = artifacts.make_header(cfg.subcommand, cfg.to_dict())
        self.failed = 0

    def emit(self, payload=None, records=None, table=None):
        """Write ``payload`` (json), ``records`` (jsonl) or ``table`` (csv columns, rows)."""
        fmt = self.cfg.format
        if fmt == "json":
            text = artifacts.format_json(self.header, payload if payload is not None else records)
        elif fmt == "jsonl":
            text = artifacts.format_jsonl(self.header, records if records is not None else [payload])
        elif fmt == "csv":
            if table is None:
                raise ValidationError(f"csv output is not available for {self.cfg.subcommand}")
            text = artifacts.format_csv(self.header, *table)
        else:
            raise ValidationError(f"{fmt} output is not available for {self.cfg.subcommand}")
        if self.cfg.output:
            artifacts.atomic_write(self.cfg.output, text)
        else:
            sys.stdout.write(text)


def _records_table(records):
    columns = list(records[0].keys()) if records else []
    rows = [[_scalar(r.get(c)) for c in columns] for r in records]
    return columns, rows


def _scalar(v):
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v)
    return v


def cmd_sample(cfg, run):
    table = sample_energies(ModelParams(cfg.n, cfg.seed), workers=cfg.threads)
    if cfg.format == "binary":
        save_table(table, cfg.output)
        return
    ground, e0 = ground_state_energy(table)
    payload = {
        "n": table.n,
        "seed": table.seed,
        "ground_index": ground.index,
        "ground_energy": e0,
        "energies": table.energies.tolist(),
    }
    records = [{"index": i, "energy": float(e)} for i, e in enumerate(table.energies)]
    run.emit(payload=payload, records=records, table=(["index", "energy"], [[r["index"], r["energy"]] for r in records]))


def cmd_spectrum(cfg, run):
    if cfg.gamma is None:
        raise ValidationError("spectrum needs --gamma")
    table = sample_energies(ModelParams(cfg.n, cfg.seed, cfg.gamma), workers=cfg.threads)
    res = lowest_eigenpairs(HamiltonianView(table, cfg.gamma), cfg.k, cfg.tol, seed=cfg.seed, threads=cfg.threads)
    payload = {"n": cfg.n, "seed": cfg.seed, "gamma": cfg.gamma, **res.to_dict()}
    rows = [[i, float(v), float(r)] for i, (v, r) in enumerate(zip(res.eigenvalues, res.residual_norms))]
    records = [{"level": i, "eigenvalue": v, "residual_norm": r} for i, v, r in rows]
    run.emit(payload=payload, records=records, table=(["level", "eigenvalue", "residual_norm"], rows))


def cmd_sweep(cfg, run):
    if not cfg.gamma_grid:
        raise ValidationError("sweep needs --gamma-grid lo:hi:count")
    grid = parse_grid(cfg.gamma_grid, "gamma grid")
    if len(grid) < 2 or grid.min() < 0:
        raise ValidationError("gamma grid needs >= 2 non-negative points")
    table = sample_energies(ModelParams(cfg.n, cfg.seed), workers=cfg.threads)
    curve = sweep.gap_sweep(table, float(grid[0]), float(grid[-1]), len(grid), k=max(cfg.k, 2), tol=cfg.tol)
    columns, rows = curve.csv_rows()
    records = [dict(zip(columns, row)) for row in rows]
    run.emit(payload={"n": cfg.n, "seed": cfg.seed, "points": records}, records=records, table=(columns, rows))


def _min_gap_records(cfg, n, seeds, run):
    config = sweep.SweepConfig(tol=cfg.tol)
    summary = sweep.ensemble_run(n, seeds, config, workers=cfg.threads)
    records = [r.to_dict() for r in summary.records]
    for seed, msg in summary.failures.items():
        records.append({"n": n, "seed": seed, "error": msg})
        print(f"qrem {cfg.subcommand}: sweep error (n={n}, seed={seed}): {msg}", file=sys.stderr)
    run.failed += len(summary.failures)
    records.sort(key=lambda r: r["seed"])
    return summary, records


def cmd_min_gap(cfg, run):
    _, records = _min_gap_records(cfg, cfg.n, _seed_list(cfg), run)
    cols = sorted({c for r in records for c in r}, key=lambda c: (c != "seed", c))
    table = (cols, [[_scalar(r.get(c, "")) for c in cols] for r in records])
    run.emit(payload=records, records=records, table=table)


def cmd_ensemble(cfg, run):
    sizes = [int(v) for v in parse_grid(cfg.sizes, "sizes")] if cfg.sizes else ([cfg.n] if cfg.n else [])
    if not sizes:
        raise ValidationError("ensemble needs --sizes or --n")
    for n in sizes:
        ModelParams(n)
    seeds = _seed_list(cfg)
    summaries, all_records = [], []
    for n in sizes:
        summary, records = _min_gap_records(cfg, n, seeds, run)
        summaries.append(summary)
        all_records.extend(records)
    rows = [s.to_dict() for s in summaries]
    fit = None
    usable = [s for s in summaries if s.records]
    if len(usable) >= 2:
        slope, intercept = sweep.fit_gap_scaling(usable)
        fit = {"slope": slope, "intercept": intercept, "reference_slope": -math.log(2) / 2}
    payload = {"sizes": rows, "fit": fit, "records": all_records}
    columns = ["n", "median_gap", "mean_gap", "min_gap", "max_gap", "median_ratio", "mean_ratio", "failures"]
    table = (columns, [[r["n"], *(r[c] for c in columns[1:-1]), len(r["failures"])] for r in rows])
    run.emit(payload=payload, records=rows, table=table)


def cmd_anneal(cfg, run):
    if cfg.n > dynamics.DYNAMICS_MAX_N:
        raise ValidationError(f"anneal supports n <= {dynamics.DYNAMICS_MAX_N}, got n={cfg.n}")
    taus = parse_geometric(cfg.taus or "1:1024:11")
    table = sample_energies(ModelParams(cfg.n, cfg.seed))
    curve = dynamics.success_curve(table, sorted(taus), cfg.gamma_max, cfg.profile, cfg.dt_control)
    records = [o.to_dict() for o in curve.outcomes]
    columns = list(records[0].keys())
    run.emit(
        payload={"n": cfg.n, "seed": cfg.seed, **curve.to_dict()},
        records=records,
        table=(columns, [[r[c] for c in columns] for r in records]),
    )


def cmd_theory(cfg, run):
    if cfg.phase_diagram or cfg.subcommand == "phase-diagram":
        temps = parse_grid(cfg.t_grid or "0:1.2:60", "temperature grid")
        gammas = parse_grid(cfg.gamma_grid or "0:1.6:80", "gamma grid")
        if temps.min() < 0 or gammas.min() < 0:
            raise ValidationError("phase diagram grids must be non-negative")
        points = [p for row in theory.phase_grid(temps, gammas) for p in row]
        records = [asdict(p) for p in points]
        columns = ["temperature", "gamma", "phase", "free_energy_density"]
        boundary = [{"temperature": float(T), "gamma": theory.transition_gamma(float(T))} for T in temps]
        run.emit(
            payload={"grid": records, "boundary": boundary, "critical_temperature": theory.critical_temperature()},
            records=records,
            table=(columns, [[r[c] for c in columns] for r in records]),
        )
        return
    sizes = [int(v) for v in parse_grid(cfg.sizes or "8:24:9", "sizes")]
    for n in sizes:
        ModelParams(n)
    rows = theory.prediction_table(sizes)
    run.emit(payload=rows, records=rows, table=_records_table(rows))


_COMMANDS = {
    "sample": cmd_sample,
    "spectrum": cmd_spectrum,
    "sweep": cmd_sweep,
    "min-gap": cmd_min_gap,
    "ensemble": cmd_ensemble,
    "anneal": cmd_anneal,
    "theory": cmd_theory,
    "phase-diagram": cmd_theory,
}


def run(cfg: RunConfig) -> int:
    """Execute one validated configuration; return the process exit code."""
    cfg.validate()
    job = _Run(cfg)
    _COMMANDS[cfg.subcommand](cfg, job)
    if job.failed and not cfg.keep_going:
        return EXIT_NUMERICAL
    return EXIT_OK


def _common(p):
    p.add_argument("--config", help="JSON file with RunConfig fields; wins over flags")
    p.add_argument("--n", type=int, help="number of spins")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="seed range a..b or list a,b,c")
    p.add_argument("--sizes", help="spin counts lo:hi:count or list")
    p.add_argument("--gamma", type=float, help="transverse field")
    p.add_argument("--gamma-grid", help="field grid lo:hi:count or list")
    p.add_argument("--k", type=int, default=2, help="number of lowest levels")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--output", "-o", help="output path (default stdout)")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--keep-going", action="store_true", help="exit 0 even if some seeds fail")


def build_parser():
    parser = argparse.ArgumentParser(prog="qrem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "sample": "draw an energy table",
        "spectrum": "lowest eigenvalues at one field",
        "sweep": "lowest levels and gap over a field grid",
        "min-gap": "minimal gap per seed",
        "ensemble": "minimal-gap statistics over seeds and sizes",
        "anneal": "success probability over an annealing-time ladder",
        "theory": "phase diagram or leading-order predictions",
        "phase-diagram": "phase classification on a (T, gamma) grid",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        _common(p)
        if name in ("theory", "phase-diagram"):
            p.add_argument("--phase-diagram", action="store_true")
            p.add_argument("--t-grid", help="temperature grid lo:hi:count")
        if name == "anneal":
            p.add_argument("--taus", help="annealing times lo:hi:count (geometric) or list")
            p.add_argument("--gamma-max", type=float, default=dynamics.DEFAULT_GAMMA_MAX)
            p.add_argument("--profile", choices=("linear", "quadratic"), default="linear")
            p.add_argument("--dt-control", type=float, default=0.5)
    return parser


def config_from_args(args) -> RunConfig:
    values = {f.name: getattr(args, f.name) for f in fields(RunConfig) if hasattr(args, f.name)}
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config file {args.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise ValidationError("config file must hold a JSON object")
        if "config" in overrides and "schema_version" in overrides:
            # a header copied out of an earlier artifact
            artifacts.check_header({"record": "header", **overrides})
            overrides = overrides["config"]
        if overrides.get("subcommand", args.subcommand) != args.subcommand:
            raise ValidationError(
                f"config file is for {overrides['subcommand']!r}, not {args.subcommand!r}"
            )
        values.update(overrides)
    values["subcommand"] = args.subcommand
    return RunConfig.from_dict(values)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    module = _OWNER[args.subcommand]
    context = f"n={args.n}, seed={args.seed}"
    try:
        cfg = config_from_args(args)
        context = f"n={cfg.n}, seed={cfg.seeds or cfg.seed}"
        return run(cfg)
    except CapacityError as exc:
        code, kind, msg = EXIT_CAPACITY, "capacity", str(exc)
    except ValidationError as exc:
        code, kind, msg = EXIT_VALIDATION, "validation", str(exc)
    except (ConvergenceError, BracketError, NormDriftError) as exc:
        code, kind, msg = EXIT_NUMERICAL, "numerical", str(exc)
    except QremError as exc:
        code, kind, msg = EXIT_NUMERICAL, "error", str(exc)
    print(f"qrem {args.subcommand}: {module} {kind} error ({context}): {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
