"""Command line front end: ``antiplane {solve,sweep,verify} --config PATH``.

Exit codes: 0 success, 1 invalid configuration, 2 compatibility gate
failure, 3 solver error, 4 failed verification.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import load_config
from .errors import AntiplaneError, ConfigError, IncompatibleField, NodeSolveError

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GATE = 2
EXIT_SOLVER = 3
EXIT_VERIFY = 4

log = logging.getLogger("antiplane")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides output.dir)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="antiplane", description="Canonical dual solver for anti-plane shear")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the full pipeline and write result documents")
    _common(p)
    p.add_argument("--threads", type=int, default=None, help="worker threads for the per-node solves")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sweep", help="root tables over tau_sq or a material parameter")
    _common(p)
    p.add_argument("--parameter", default=None, help="'tau_sq' or a material parameter name")
    p.add_argument("--range", nargs=3, metavar=("START", "STOP", "STEPS"), default=None)
    p.add_argument("--tau-sq", type=float, default=None, help="fixed tau_sq for material sweeps")

    p = sub.add_parser("verify", help="run the pipeline and check its invariants")
    _common(p)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--perturb-zeta", type=float, default=0.0, metavar="EPS",
        help="perturb the root fields by a smooth random factor 1 + EPS*r(x, y)",
    )
    return ap


def _out_dir(args, cfg) -> Path:
    return args.out if args.out is not None else Path(cfg.output.dir)


def _cmd_solve(args) -> int:
    cfg = load_config(args.config)
    res = pipeline.run(cfg, threads=args.threads, seed=args.seed)
    out = _out_dir(args, cfg)
    pipeline.write_outputs(res, out, cfg.output.formats)
    print(f"wrote {out / 'result.json'}")
    for b in res.branches:
        if b.energies is not None:
            e = b.energies
            print(f"branch {b.index + 1}: Pi={e.Pi:.12g}  Pid={e.Pid:.12g}  |Pi-Pid|={e.duality_gap:.3e}")
    if res.gate_failed:
        bad = [b.index + 1 for b in res.branches if not b.compatibility.passed]
        print(f"compatibility gate failed for branch(es) {bad}", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    start = stop = steps = None
    if args.range is not None:
        try:
            start, stop, steps = float(args.range[0]), float(args.range[1]), int(args.range[2])
        except ValueError:
            raise ConfigError(f"--range: expected START STOP STEPS, got {' '.join(args.range)}") from None
    rows = pipeline.sweep(cfg, args.parameter, start, stop, steps, args.tau_sq)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_rows_csv(rows, out / "sweep.csv")
    m = cfg.build_material() if (args.parameter or "tau_sq") == "tau_sq" else None
    if m is not None:
        n = cfg.sweep.curve_points if cfg.sweep else 400
        z, h = pipeline.dual_curve(m, rows, n)
        pipeline.write_curve_csv(z, h, out / "curve.csv")
    print(f"wrote {out / 'sweep.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = load_config(args.config)
    res = pipeline.run(cfg, threads=args.threads, seed=args.seed, perturb_zeta=args.perturb_zeta, gate=False)
    checks = pipeline.verify(res)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"passed": ok, "checks": [c.to_json() for c in checks], "result": pipeline.result_document(res)}
    (out / "verify.json").write_text(json.dumps(doc, indent=2) + "\n")
    print("verify: " + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"solve": _cmd_solve, "sweep": _cmd_sweep, "verify": _cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IncompatibleField as exc:
        print(f"compatibility gate: {exc}", file=sys.stderr)
        return EXIT_GATE
    except NodeSolveError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AntiplaneError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
