"""Command-line front end.

Exit status: 0 pass, 1 check failure (or evaluation error), 2 config error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from ..errors import AccuracyError, ConfigError, DimensionRefusalError, FinslerError
from .commands import cmd_classify, cmd_eval, cmd_profile, cmd_verify
from .config import parse_config

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", metavar="PATH", default=None, help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default=None)

    p = argparse.ArgumentParser(prog="finsler", description="Finsler curvature engine and identity checker")
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("eval", parents=[common], help="tabulate every quantity at one (x, y)")
    e.add_argument("--x", type=_vector)
    e.add_argument("--y", type=_vector)
    sub.add_parser("verify", parents=[common], help="run the identity suite")
    pr = sub.add_parser("profile", parents=[common], help="Matsumoto profile along a geodesic")
    for name in ("x", "y", "u"):
        pr.add_argument(f"--{name}", type=_vector)
    pr.add_argument("--T", type=float)
    pr.add_argument("--steps", type=int)
    pr.add_argument("--a", type=float)
    c = sub.add_parser("classify", parents=[common], help="one-sided Randers test")
    c.add_argument("--n-points", type=int)
    c.add_argument("--n-dirs", type=int)
    return p


def _table_csv(table: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in table.items():
        w.writerow([k, repr(v) if isinstance(v, float) else v])
    return buf.getvalue()


def _emit(text: str, dest: str | None):
    if dest:
        Path(dest).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    def clean(v):
        if isinstance(v, float) and not np.isfinite(v):
            return None
        if isinstance(v, dict):
            return {k: clean(w) for k, w in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(w) for w in v]
        if isinstance(v, np.generic):
            return clean(v.item())
        return v
    return json.dumps(clean(obj), indent=2) + "\n"


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(Path(args.config).read_bytes())
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        for v in e.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    fmt = args.format or cfg.format
    out = args.out or cfg.out

    try:
        if args.command == "verify":
            rep = cmd_verify(cfg)
            _emit(rep.to_csv() if fmt == "csv" else rep.to_json(), out)
            return EXIT_PASS if rep.overall_pass else EXIT_FAIL

        if args.command == "eval":
            table = cmd_eval(cfg, args.x, args.y)
            _emit(_table_csv(table) if fmt == "csv" else _json(table), out)
            return EXIT_PASS

        if args.command == "profile":
            try:
                rep = cmd_profile(cfg, args.x, args.y, args.u, args.T, args.steps, args.a)
            except AccuracyError as e:
                print(f"accuracy error: {e}", file=sys.stderr)
                return EXIT_FAIL
            verdict = rep.verdict()
            if fmt == "csv":
                _emit(rep.to_csv(), out)
                print(_json(verdict), end="", file=sys.stderr)
            else:
                cols = {"t": rep.t, "M": rep.M, "K": rep.K, "residual": rep.residual, "margin": rep.margin}
                _emit(_json({"verdict": verdict, "profile": {k: v.tolist() for k, v in cols.items()}}), out)
            ok = rep.ode_pass and rep.mvc_pass is not False
            return EXIT_PASS if ok else EXIT_FAIL

        if args.command == "classify":
            res = cmd_classify(cfg, args.n_points, args.n_dirs)
            _emit(_table_csv(res) if fmt == "csv" else _json(res), out)
            return EXIT_PASS
    except DimensionRefusalError as e:
        print(f"refused: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FinslerError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_FAIL  # pragma: no cover


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
