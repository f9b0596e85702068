"""Command line: validate | solve | verify | export.

Exit codes: 0 success, 1 a check or stage failed, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline as pl
from . import solver as sol
from . import verify as ver


def _out(args, cfg) -> Path:
    return Path(args.out) if args.out else cfg.out_dir


def cmd_validate(args) -> int:
    cfg = pl.load_config(args.config)
    report = pl.validate(cfg)
    print(json.dumps(report.to_dict(), indent=2))
    return 0 if report.passed else 1


def cmd_solve(args) -> int:
    cfg = pl.load_config(args.config)
    summary = pl.solve(cfg, _out(args, cfg))
    m = summary["invariant_margins"]
    print(f"solved {summary['levels']} levels, {summary['nodes']} nodes, t_min={summary['t_min']:.6g}; "
          f"W/Z margin {m['W_Z_margin']:.3e}, r margin {m['r_margin']:.3e}; "
          f"wrote {', '.join(summary['artifacts'])} to {_out(args, cfg)}")
    return 0


def cmd_export(args) -> int:
    cfg = pl.load_config(args.config)
    names = pl.export(cfg, _out(args, cfg))
    print(f"wrote {', '.join(names)}")
    return 0


def cmd_verify(args) -> int:
    cfg = pl.load_config(args.config)
    out = _out(args, cfg)
    if args.grids < 1:
        raise pl.ConfigError("--grids must be at least 1")
    st, fields = pl.verify_fields(cfg, out, args.grids)
    other = None
    if args.grids >= 3:
        form = "reciprocal" if cfg.solver.form == "primal" else "primal"
        scfg = sol.SolverConfig(**{**cfg.solver.__dict__, "form": form})
        path = out / f"field_L{scfg.n_levels}_{form}.csv"
        other = pl.read_field(path, st, scfg) if path.exists() else pl.march(st, scfg)
        if not path.exists():
            other.to_csv(path)
    reports = ver.run_all(fields, st.params, seed=args.seed, reciprocal=other)
    out.mkdir(parents=True, exist_ok=True)
    (out / "verify_report.json").write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    for r in reports:
        print(f"{r.status.upper():7s} {r.name}  margin={r.margin:.3e}  {r.detail}")
    failed = [r.name for r in reports if r.status == "fail"]
    if failed:
        print("failed: " + "; ".join(failed), file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sonicpatch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("validate", cmd_validate, "check the EOS and streamline hypotheses"),
        ("solve", cmd_solve, "march the hodograph system and write all artifacts"),
        ("verify", cmd_verify, "run the verification checks over refined grids"),
        ("export", cmd_export, "rebuild physical-plane exports from field.csv"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="INI run configuration")
        sp.add_argument("--out", help="output directory (default: [output] dir)")
        sp.add_argument("--grids", type=int, default=3, help="number of grids for verify")
        sp.add_argument("--seed", type=int, default=0, help="seed for Hoelder pair subsampling")
        sp.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except pl.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except pl.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
