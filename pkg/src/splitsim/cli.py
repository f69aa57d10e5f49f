"""Command line entry points.

Every failure prints one JSON line to stderr with a `category` key
(config, io, capability, internal) and exits 2, 3, 4 or 1 respectively;
stdout carries one JSON summary line on success.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .harness import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    bound,
    config_from_yaml,
    evaluate,
    report,
    runtime,
    train,
    training_traces,
    validate,
)
from .offline_bound import CapabilityError
from .traces import TraceParseError, TraceValidationError, export_traces_csv

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CAPABILITY = 4
EXIT_INTERNAL = 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="splitsim",
        description="Renewable small-cell sleep-control experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="YAML experiment config "
                        "(defaults apply when omitted)")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--epochs", type=int, help="override training epochs")
        sp.add_argument("--cells", type=int, help="override the cell count")
        sp.add_argument("--algo", choices=ALGORITHMS,
                        help="override the algorithm")
        sp.add_argument("--horizon", type=int, help="override the slot count")

    sp = sub.add_parser("gen-traces", help="write the training-year traces CSV")
    add_common(sp)
    sp.add_argument("--out", required=True, help="output CSV path")

    for name, blurb in (("train", "train policies over epochs"),
                        ("evaluate", "assess stored policies on the training year"),
                        ("validate", "assess stored policies on a fresh year"),
                        ("runtime", "learn online from scratch for one year"),
                        ("bound", "clairvoyant schedule for the training year")):
        sp = sub.add_parser(name, help=blurb)
        add_common(sp)
        sp.add_argument("--out", required=True, help="artifact directory")

    sp = sub.add_parser("report", help="assemble a comparison report")
    add_common(sp)
    sp.add_argument("--out", required=True,
                    help="root directory holding per-algorithm artifacts")
    sp.add_argument("--algos", help="comma-separated subset to include")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = config_from_yaml(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.horizon is not None:
        cfg = dataclasses.replace(cfg, horizon=args.horizon)
    if args.epochs is not None:
        cfg = dataclasses.replace(
            cfg, learning=dataclasses.replace(cfg.learning, epochs=args.epochs))
    if args.algo is not None:
        cfg = dataclasses.replace(
            cfg, learning=dataclasses.replace(cfg.learning, algorithm=args.algo))
    if args.cells is not None:
        cfg = dataclasses.replace(
            cfg, sim=dataclasses.replace(cfg.sim, n_cells=args.cells))
    return cfg


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload) + "\n")


def _dispatch(args) -> int:
    cfg = load_config(args)
    if args.command == "gen-traces":
        traces = training_traces(cfg)
        out = Path(args.out)
        if out.parent != Path(""):
            out.parent.mkdir(parents=True, exist_ok=True)
        export_traces_csv(traces, out)
        _emit({"written": str(out), "slots": traces.horizon,
               "cells": traces.n_cells, "seed": cfg.seed})
        return 0
    if args.command == "train":
        _, history = train(cfg, out_dir=args.out)
        _emit({"out": args.out, "epochs": len(history), "final": history[-1]})
        return 0
    if args.command == "evaluate":
        _, summary = evaluate(cfg, out_dir=args.out)
        _emit(summary)
        return 0
    if args.command == "validate":
        _, summary = validate(cfg, out_dir=args.out)
        _emit(summary)
        return 0
    if args.command == "runtime":
        _, summary = runtime(cfg, out_dir=args.out)
        _emit(summary)
        return 0
    if args.command == "bound":
        _, _, summary = bound(cfg, out_dir=args.out)
        _emit(summary)
        return 0
    if args.command == "report":
        algos = args.algos.split(",") if args.algos else None
        path = report(cfg, args.out, algorithms=algos)
        _emit({"report": path})
        return 0
    raise AssertionError(f"unhandled command {args.command}")


def _fail(category: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"category": category, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (TraceParseError, TraceValidationError) as exc:
        return _fail("io", str(exc), EXIT_IO)
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        return _fail("io", str(exc), EXIT_IO)
    except CapabilityError as exc:
        return _fail("capability", str(exc), EXIT_CAPABILITY)
    except Exception as exc:   # anything else is a bug, not user error
        return _fail("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
