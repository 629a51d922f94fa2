"""Command-line front end.

    repeller scales     --C 2000 --N 3
    repeller verify     --C 2000 --N 5 --samples 256
    repeller classify   --C 2000 --N 3 --window -8,20 --res 64,256
    repeller preimages  --C 2000 --N 3 --point 3,2 --depth 2
    repeller dimension  --C 2000 --N 3 --depth 5
    repeller render     --C 2000 --N 3 --mode orbits --out orbits.ppm

Options come from built-in defaults, then an optional JSON ``--config``
file (a previous report with an embedded ``config`` works too), then
explicit flags.  Every report embeds the resolved configuration.

Exit codes: 0 success, 1 failed checks, 2 usage or domain error,
3 numerical failure.  Errors are written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import warnings
from pathlib import Path

from .construction import Params, build_scales
from .dimension import (
    DEFAULT_T_RANGE,
    bowen_zero_of_tree,
    closed_form_bound,
    cover_ratios,
    default_t_grid,
    pressure_curve,
)
from .dynamics import LogPolarWindow, classify_grid, grid_to_csv
from .errors import (
    BracketError,
    BudgetError,
    ConstructionError,
    GeometryError,
    NumericalFailure,
    PartialTreeError,
    XDomainError,
    XRangeError,
)
from .inverse import build_tree
from .render import MODES, render
from .verifier import run_all
from .xnum import XComplex

EXIT_OK, EXIT_CHECKS, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("scales", "verify", "classify", "preimages", "dimension", "render")

DEFAULTS = {
    "C": 2000.0,
    "N": 3,
    "trunc": None,
    "tail_tol": 1e-12,
    "samples": 256,
    "max_iter": 100,
    "depth": None,
    "t_lo": DEFAULT_T_RANGE[0],
    "t_hi": DEFAULT_T_RANGE[1],
    "window": None,
    "res": "64,256",
    "seed": 0,
    "point": "3,2",
    "mode": "orbits",
    "threads": None,
    "out": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="repeller", description="Annulus-scheme repeller toolkit.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON file with option values (flags win)")
    parser.add_argument("--C", type=float, dest="C")
    parser.add_argument("--N", type=int, dest="N")
    parser.add_argument("--trunc", type=int, help="number of product factors M (default N + 8)")
    parser.add_argument("--tail-tol", type=float, dest="tail_tol")
    parser.add_argument("--samples", type=int, help="samples per circle in verify")
    parser.add_argument("--max-iter", type=int, dest="max_iter")
    parser.add_argument("--depth", type=int, help="preimage tree depth")
    parser.add_argument("--t-lo", type=float, dest="t_lo")
    parser.add_argument("--t-hi", type=float, dest="t_hi")
    parser.add_argument("--window", help="log2_r_lo,log2_r_hi[,theta_lo,theta_hi]")
    parser.add_argument("--res", help="radial,angular cell counts")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--point", help="base point re,im")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--out", help="output path (stdout when omitted, except render)")
    for action in parser._actions:
        if action.dest not in ("help", "command"):
            action.default = None
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if isinstance(loaded, dict) and isinstance(loaded.get("config"), dict):
            loaded = loaded["config"]
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if cfg["depth"] is None:
        cfg["depth"] = 5 if args.command == "dimension" else 1
    cfg["command"] = args.command
    return cfg


def _floats(text: str, counts: tuple, what: str) -> list[float]:
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise UsageError(f"cannot parse {what} {text!r}") from None
    if len(vals) not in counts:
        raise UsageError(f"{what} needs {' or '.join(map(str, counts))} comma-separated numbers")
    return vals


def _params(cfg: dict) -> Params:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Params(C=float(cfg["C"]), N=int(cfg["N"]), M=cfg["trunc"], tail_tol=float(cfg["tail_tol"]),
                      samples_per_circle=int(cfg["samples"]))


def _window(cfg: dict, sc) -> LogPolarWindow:
    if cfg["window"] is None:
        return LogPolarWindow(sc.log2_s(0) - 8.0, sc.log2_s(sc.N))
    vals = _floats(cfg["window"], (2, 4), "window")
    return LogPolarWindow(*vals)


def _resolution(cfg: dict) -> tuple[int, int]:
    vals = _floats(cfg["res"], (2,), "res")
    if any(v != int(v) or v < 1 for v in vals):
        raise UsageError("res must be two positive integers")
    return int(vals[0]), int(vals[1])


def _point(cfg: dict) -> XComplex:
    re, im = _floats(cfg["point"], (2,), "point")
    return XComplex.from_complex(complex(re, im))


def write_atomic(path: str, data: bytes) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(cfg: dict, text: str, path: str | None = None) -> None:
    path = cfg["out"] if path is None else path
    if path:
        write_atomic(path, text.encode())
    else:
        sys.stdout.write(text)


def _dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_scales(cfg: dict) -> int:
    sc = build_scales(_params(cfg))
    doc = json.loads(sc.to_json())
    doc["config"] = cfg
    _emit(cfg, _dumps(doc))
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    report = run_all(_params(cfg), seed=int(cfg["seed"]))
    doc = report.to_dict()
    doc["config"] = cfg
    _emit(cfg, _dumps(doc))
    return EXIT_OK if report.all_pass else EXIT_CHECKS


def cmd_classify(cfg: dict) -> int:
    p = _params(cfg)
    sc = build_scales(p)
    window = _window(cfg, sc)
    codes = classify_grid(p, sc, window, _resolution(cfg), int(cfg["max_iter"]))
    _emit(cfg, grid_to_csv(window, codes))
    return EXIT_OK


def cmd_preimages(cfg: dict) -> int:
    p = _params(cfg)
    sc = build_scales(p)
    tree = build_tree(p, sc, _point(cfg), int(cfg["depth"]), threads=cfg["threads"])
    _emit(cfg, tree.to_jsonl())
    return EXIT_NUMERIC if tree.partial else EXIT_OK


def cmd_dimension(cfg: dict) -> int:
    t_star = closed_form_bound(float(cfg["C"]))
    p = _params(cfg)
    sc = build_scales(p)
    n = int(cfg["depth"])
    tree = build_tree(p, sc, _point(cfg), n, threads=cfg["threads"])
    if tree.partial:
        raise PartialTreeError("preimage tree is partial")
    t_range = (float(cfg["t_lo"]), float(cfg["t_hi"]))
    t_seq = {f"t_{d}": bowen_zero_of_tree(tree, t_range, d) for d in range(max(1, n - 2), n + 1)}
    curve = pressure_curve(tree, default_t_grid())
    ratios = cover_ratios(tree, [t_star + 0.05, 1.0]) if n >= 2 else []
    doc = {
        "C": p.C,
        "N": p.N,
        "n": n,
        "L": p.L,
        "t_star": t_star,
        "t_n": t_seq[f"t_{n}"],
        "t_sequence": t_seq,
        "pressure_curve": curve.rows(),
        "cover_ratios": ratios,
        "config": cfg,
    }
    _emit(cfg, _dumps(doc))
    if cfg["out"]:
        out = Path(cfg["out"])
        csv_path = out.with_suffix(".csv") if out.suffix == ".json" else Path(f"{out}.csv")
        write_atomic(str(csv_path), curve.to_csv().encode())
    return EXIT_OK


def cmd_render(cfg: dict) -> int:
    if not cfg["out"]:
        raise UsageError("render needs --out")
    p = _params(cfg)
    sc = build_scales(p)
    data = render(p, sc, _window(cfg, sc), _resolution(cfg), cfg["mode"], int(cfg["max_iter"]))
    write_atomic(cfg["out"], data)
    return EXIT_OK


HANDLERS = {
    "scales": cmd_scales,
    "verify": cmd_verify,
    "classify": cmd_classify,
    "preimages": cmd_preimages,
    "dimension": cmd_dimension,
    "render": cmd_render,
}


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit": code}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (XDomainError, ConstructionError, BudgetError, BracketError) as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, str(exc))
    except (NumericalFailure, GeometryError, PartialTreeError, XRangeError) as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
