"""Command line entry point.

    bangcross run <config> [--out DIR] [--seed N] [--threads N] [--set key=value ...]
    bangcross verify [--tag T ...] [--only ID ...] [--tol name=value ...] [--json FILE]
    bangcross converge <config> <key=v1,v2,...> [--out DIR]
    bangcross oracle <frobenius-config> [--out DIR]

Every option can also come from the environment: ``BANGCROSS_OUT``,
``BANGCROSS_SEED``, ``BANGCROSS_THREADS``, ``BANGCROSS_TAG`` (comma list).
Command-line values win.  ``<config>`` may name a bundled scenario.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load, set_dotted
from .harness import RunError, convergence_csv, convergence_study, run_scenario

ENV = "BANGCROSS_"
log = logging.getLogger("bangcross")


def _env(name, default=None, cast=str):
    v = os.environ.get(ENV + name)
    if v is None or v == "":
        return default
    try:
        return cast(v)
    except ValueError:
        raise SystemExit(f"bad value for {ENV}{name}: {v!r}")


def _pairs(items, what):
    out = {}
    for it in items or []:
        k, sep, v = it.partition("=")
        if not sep:
            raise ConfigError(f"{what} must look like key=value; got {it!r}")
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=_env("OUT"), help="output directory")
    common.add_argument("--seed", type=int, default=_env("SEED", None, int), help="PRNG seed")
    common.add_argument("--threads", type=int, default=_env("THREADS", 1, int), help="mode-parallel workers")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="bangcross", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"bangcross {__version__}")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", parents=[common], help="run a scenario")
    r.add_argument("config")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    v = sub.add_parser("verify", parents=[common], help="run the acceptance checks")
    tags = _env("TAG")
    v.add_argument("--tag", action="append", default=tags.split(",") if tags else None)
    v.add_argument("--only", action="append", type=int, metavar="ID")
    v.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a tolerance")
    v.add_argument("--json", metavar="FILE", help="write a machine-readable report")

    c = sub.add_parser("converge", parents=[common], help="rerun a scenario over a parameter ladder")
    c.add_argument("config")
    c.add_argument("ladder", help="dotted key and values, e.g. frobenius.N=10,20,40")

    o = sub.add_parser("oracle", parents=[common], help="Frobenius comparison")
    o.add_argument("config")
    return p


def _run(args) -> int:
    sc = load(args.config)
    for k, v in _pairs(args.set, "--set").items():
        set_dotted(sc, k, v)
    out = args.out or f"out/{sc.name}"
    res = run_scenario(sc, out, seed=args.seed, threads=args.threads)
    for k, v in res.summary.items():
        if not k.startswith("_"):
            print(f"{k}: {v}")
    print(f"wrote {len(res.written)} files to {out}")
    return 0


def _verify(args) -> int:
    from .acceptance import verify
    try:
        results = verify(tags=args.tag, ids=args.only, overrides=_pairs(args.tol, "--tol"),
                         seed=args.seed or 0, echo=print)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "--tol") from None
    ok = all(r.passed for r in results)
    if args.json:
        Path(args.json).write_text(json.dumps([r.as_row() | {"failures": r.failures, "error": r.error}
                                               for r in results], indent=2, default=float))
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return 0 if ok else 1


def _converge(args) -> int:
    sc = load(args.config)
    key, rows = convergence_study(sc, args.ladder, seed=args.seed, threads=args.threads)
    text = convergence_csv(sc, key, rows, args.seed)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "convergence.csv").write_bytes(text.encode())
    print(f"{key:>16} {'error':>12} {'order':>8}")
    for r in rows:
        order = "" if r.order is None else f"{r.order:8.2f}"
        print(f"{r.value:16.6g} {r.error:12.3e} {order}")
    return 0


def _oracle(args) -> int:
    sc = load(args.config)
    if sc.kind != "frobenius":
        raise ConfigError("oracle needs a config with kind = \"frobenius\"", "kind")
    out = args.out or f"out/{sc.name}"
    res = run_scenario(sc, out, seed=args.seed, threads=args.threads)
    print(f"delta: {res.summary['delta']:.12g}")
    print(f"max relative error vs series rule: {res.summary['max_rel_error']:.3e}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return {"run": _run, "verify": _verify, "converge": _converge, "oracle": _oracle}[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RunError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
