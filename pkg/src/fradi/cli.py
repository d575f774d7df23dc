"""``fradi`` command line: convergence tables, TLR reports, factor benchmarks, solves.

Settings come from an optional ``key = value`` config file and are overridden
by flags.  Results are written as CSV to stdout, or to ``<out>/<command>.csv``.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import harness
from .assembly import ConfigurationError
from .fields import validate_fields

COMMANDS = ("converge", "converge-nonsym", "tlr-report", "factor-bench", "solve")

DEFAULT_GRIDS = {
    ("converge", 1): [64, 128, 256, 512, 1024, 2048],
    ("converge", 2): [16, 32, 64, 128],
    ("converge-nonsym", 1): [64, 128, 256, 512, 1024, 2048],
    ("tlr-report", 2): [32, 64, 128, 256],
    ("tlr-report", 1): [256, 1024, 4096],
    ("factor-bench", 2): [32, 64, 128],
    ("factor-bench", 1): [256, 1024, 4096],
    ("solve", 1): [64],
    ("solve", 2): [32],
}


@dataclass
class RunConfig:
    command: str
    case: str = "kappa"
    dim: int | None = None
    grids: list = field(default_factory=list)
    beta0: float | None = None
    beta: float = 0.75
    delta_mult: float = 4.0
    eps: float = 1e-6
    tile: int = 0
    seed: int = 0
    solver: str = "auto"
    reps: int = 3
    out: str | None = None
    full_precision: bool = False


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {s!r}")


def _parse_grids(s: str) -> list[int]:
    try:
        out = [int(t) for t in str(s).replace(" ", "").split(",") if t]
    except ValueError:
        raise ConfigurationError(f"grids must be comma-separated integers, got {s!r}") from None
    if not out:
        raise ConfigurationError("empty grid list")
    return out


_CONVERTERS = {
    "case": str, "dim": int, "grids": _parse_grids, "beta0": float, "beta": float,
    "delta_mult": float, "eps": float, "tile": int, "seed": int, "solver": str,
    "reps": int, "out": str, "full_precision": _parse_bool,
}


def read_config(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment, dashes in keys are allowed."""
    values = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ValueError as exc:
            raise ConfigurationError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fradi", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--dim", type=int, choices=(1, 2))
        p.add_argument("--case", choices=harness.CASES)
        p.add_argument("--grids", type=_parse_grids,
                       help="comma list; cells per side for converge/solve, "
                            "points per side for tlr-report/factor-bench")
        p.add_argument("--beta0", type=float, help="order offset for the linear beta fields")
        p.add_argument("--beta", type=float, help="constant order of the kappa case")
        p.add_argument("--eps", type=float)
        p.add_argument("--tile", type=int, help="tile size (0 = automatic)")
        p.add_argument("--delta-mult", dest="delta_mult", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--solver", choices=("auto", "dense", "tlr"))
        p.add_argument("--reps", type=int, help="timing repetitions (factor-bench)")
        p.add_argument("--out", help="output directory (default: stdout)")
        p.add_argument("--full-precision", dest="full_precision", action="store_true", default=None,
                       help="write 17 significant digits instead of shortest round-trip")
    return ap


def make_config(args: argparse.Namespace) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    for f in fields(RunConfig):
        if f.name == "command":
            continue
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if args.command == "converge-nonsym":
        if values.get("case", "nonsym") != "nonsym":
            raise ConfigurationError("converge-nonsym only runs the nonsym case")
        values["case"] = "nonsym"
    cfg = RunConfig(command=args.command, **values)
    if cfg.dim is None:
        cfg.dim = 2 if cfg.command in ("tlr-report", "factor-bench") else 1
    if not cfg.grids:
        cfg.grids = list(DEFAULT_GRIDS.get((cfg.command, cfg.dim), []))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Reject bad settings before any heavy computation starts."""
    if cfg.case not in harness.CASES:
        raise ConfigurationError(f"unknown case {cfg.case!r}")
    if cfg.solver not in ("auto", "dense", "tlr"):
        raise ConfigurationError(f"unknown solver {cfg.solver!r}")
    if not cfg.eps > 0:
        raise ConfigurationError("eps must be positive")
    if cfg.tile < 0 or cfg.tile == 1:
        raise ConfigurationError("tile must be 0 (automatic) or at least 2")
    if cfg.reps < 1:
        raise ConfigurationError("reps must be at least 1")
    if cfg.case == "nonsym" and cfg.command not in ("converge-nonsym", "converge", "solve"):
        raise ConfigurationError(f"{cfg.command} needs a symmetric case (kappa or beta)")
    spec = harness.make_problem(cfg.case, cfg.dim, cfg.beta0, cfg.beta, cfg.delta_mult)
    if cfg.command in ("converge", "converge-nonsym"):
        if len(cfg.grids) < 3:
            raise ConfigurationError("a convergence study needs at least 3 grids")
        harness.check_nested(cfg.grids)
    if cfg.command in ("tlr-report", "factor-bench"):
        grids = [harness.grid_for(spec, g + 1) for g in cfg.grids]
    else:
        grids = [harness.grid_for(spec, g) for g in cfg.grids]
    for g in grids:
        spec.window_for(g.h)
    # the fields are smooth, so checking them on the coarsest lattice is enough
    validate_fields(spec, grids[0].to_points(grids[0].all_lattice))


def _fmt(v, full: bool) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.17g}" if full else repr(v)
    return str(v)


def to_csv(rows: list[dict], full_precision: bool = False) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(rows[0]))
    for r in rows:
        w.writerow([_fmt(v, full_precision) for v in r.values()])
    return buf.getvalue()


def run(cfg: RunConfig) -> list[dict]:
    spec = harness.make_problem(cfg.case, cfg.dim, cfg.beta0, cfg.beta, cfg.delta_mult)
    settings = harness.SolveSettings(cfg.solver, cfg.eps, cfg.tile, cfg.seed)
    if cfg.command == "converge":
        if cfg.case == "nonsym":
            return harness.convergence_nonsym(spec, cfg.grids)
        return harness.convergence(spec, cfg.grids, settings)
    if cfg.command == "converge-nonsym":
        return harness.convergence_nonsym(spec, cfg.grids)
    if cfg.command == "tlr-report":
        return harness.tlr_report(spec, cfg.grids, cfg.eps, cfg.tile, cfg.seed)
    if cfg.command == "factor-bench":
        return harness.factor_bench(spec, cfg.grids, cfg.eps, cfg.tile, cfg.seed, cfg.reps)
    if cfg.command == "solve":
        return harness.solve_rows(spec, cfg.grids[0], settings)
    raise ConfigurationError(f"unknown command {cfg.command!r}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"fradi: error: {exc}", file=sys.stderr)
        return 2
    text = to_csv(run(cfg), cfg.full_precision)
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{cfg.command}.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
