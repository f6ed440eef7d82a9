"""
Command-line interface.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.

Examples
--------
::

    graphprobe gen --task trA2 --train "150xG(50,0.6)" --seed 7 -o tr.jsonl
    graphprobe gen --task trA2 --test "50xG(50,0.6)" --seed 7 -o ts.jsonl
    graphprobe train tr.jsonl --lambda 1e-6 -o model.json
    graphprobe eval model.json ts.jsonl
    graphprobe table1 --seed 7 -o out/
    graphprobe intrude --seed 7 -o gamma.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import serialize
from .errors import GraphProbeError, ParameterError
from .experiments import (
    GAMMA_MAPE_FLOOR, STREAM_TEST, STREAM_TRAIN, IntrusionSpec, build_dataset, intrusion_base_graph,
    intrusion_split, read_dataset, reproduce_table1, run_task, table1_csv, table1_json, table1_text,
    write_dataset,
)
from .graph import ObservableKind, parse_ensemble
from .probe import DEFAULT_DT, DEFAULT_M, DEFAULT_STEPS, ProbeConfig
from .readout import DEFAULT_LAMBDA, ReadoutModel, evaluate, fit_ridge, select_lambda

log = logging.getLogger("graphprobe")

# Defaults for flags that may also come from --config.
DEFAULTS = {
    "task": None, "train": None, "test": None,
    "probe_m": DEFAULT_M, "probe_t": DEFAULT_STEPS, "probe_dt": DEFAULT_DT,
    "shots": None, "lambda": DEFAULT_LAMBDA, "seed": 0, "threads": 1,
    "n": 100, "p": 0.5, "alpha": 99, "gamma_max": 2.0, "n_train": 360, "n_test": 40,
}

# Keys echoed into artifacts for provenance; accepted but ignored in --config,
# so an artifact's embedded config can be fed straight back in.
PROVENANCE_KEYS = {"command", "split", "rows", "dataset", "model"}


class UsageError(Exception):
    pass


def _lambda(s: str):
    if s == "cv":
        return s
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda must be a number or 'cv', got {s!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("lambda must be >= 0")
    return v


def _common(p: argparse.ArgumentParser, *keys: str) -> None:
    s = argparse.SUPPRESS
    opts = {
        "task": dict(flags=["--task"], help="observable: trA2, trA3, trA4, hub, size, ratio, gamma"),
        "train": dict(flags=["--train"], help='training ensemble, e.g. "150xG(50,0.6)"'),
        "test": dict(flags=["--test"], help='test ensemble, e.g. "50xG(50,0.6)"'),
        "probe_m": dict(flags=["--probe-m"], type=int, help=f"monitored nodes (default {DEFAULT_M})"),
        "probe_t": dict(flags=["--probe-t"], type=int, help=f"time samples (default {DEFAULT_STEPS})"),
        "probe_dt": dict(flags=["--probe-dt"], type=float, help=f"time step (default {DEFAULT_DT})"),
        "shots": dict(flags=["--shots"], type=int, help="measurement shots per feature (default exact)"),
        "lambda": dict(flags=["--lambda"], type=_lambda, help=f"ridge parameter or 'cv' (default {DEFAULT_LAMBDA})"),
        "seed": dict(flags=["--seed"], type=int, help="master seed (default 0)"),
        "threads": dict(flags=["--threads"], type=int, help="dataset-building workers (default 1)"),
        "n": dict(flags=["--n"], type=int, help="base graph size (default 100)"),
        "p": dict(flags=["--p"], type=float, help="base edge probability (default 0.5)"),
        "alpha": dict(flags=["--alpha"], type=int, help="leaky node (default 99)"),
        "gamma_max": dict(flags=["--gamma-max"], type=float, help="leak strengths drawn in [0, gamma_max] (default 2)"),
        "n_train": dict(flags=["--n-train"], type=int, help="training patterns (default 360)"),
        "n_test": dict(flags=["--n-test"], type=int, help="test patterns (default 40)"),
    }
    for k in keys:
        o = dict(opts[k])
        p.add_argument(*o.pop("flags"), dest=k, default=s, **o)
    p.add_argument("--config", type=Path, default=s, help="flat JSON file with the same keys as the flags")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphprobe", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a JSON-lines dataset")
    _common(g, "task", "train", "test", "probe_m", "probe_t", "probe_dt", "shots", "seed", "threads",
            "alpha", "gamma_max")
    g.add_argument("-o", "--output", type=Path, required=True)

    t = sub.add_parser("train", help="fit a readout on a dataset file")
    t.add_argument("dataset", type=Path)
    _common(t, "lambda")
    t.add_argument("-o", "--output", type=Path, required=True)

    e = sub.add_parser("eval", help="score a readout on a dataset file")
    e.add_argument("model", type=Path)
    e.add_argument("dataset", type=Path)
    e.add_argument("-o", "--output", type=Path)

    tb = sub.add_parser("table1", help="reproduce the benchmark table")
    _common(tb, "probe_m", "probe_t", "probe_dt", "shots", "lambda", "seed", "threads")
    tb.add_argument("--rows", type=int, nargs="+", help="subset of row ids")
    tb.add_argument("-o", "--output", type=Path, required=True, help="output directory")

    i = sub.add_parser("intrude", help="leak-strength inference experiment")
    _common(i, "probe_m", "probe_t", "probe_dt", "shots", "lambda", "seed", "threads",
            "n", "p", "alpha", "gamma_max", "n_train", "n_test")
    i.add_argument("-o", "--output", type=Path, required=True)
    return ap


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by explicit flags."""
    cfg: dict = {}
    path = getattr(args, "config", None)
    if path is not None:
        try:
            file_cfg = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config file {path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise UsageError(f"config file {path} must be a flat JSON object")
        unknown = set(file_cfg) - set(DEFAULTS) - PROVENANCE_KEYS
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        file_cfg = {k: v for k, v in file_cfg.items() if k in DEFAULTS}
        if any(isinstance(v, (dict, list)) for v in file_cfg.values()):
            raise UsageError(f"config file {path} must be a flat JSON object")
        cfg.update(file_cfg)
    for k in DEFAULTS:
        if hasattr(args, k):
            cfg[k] = getattr(args, k)
    return {k: cfg.get(k, v) for k, v in DEFAULTS.items()}


def _probe(cfg: dict) -> ProbeConfig:
    return ProbeConfig.default(int(cfg["probe_m"]), int(cfg["probe_t"]), float(cfg["probe_dt"]), cfg["shots"])


def _emit(obj: dict, path: Optional[Path]) -> None:
    text = serialize.dumps(obj)
    print(text)
    if path is not None:
        Path(path).write_text(text + "\n")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = effective_config(args)
    if cfg["task"] is None:
        raise UsageError("--task is required")
    if (cfg["train"] is None) == (cfg["test"] is None):
        raise UsageError("give exactly one of --train or --test")
    stream = STREAM_TRAIN if cfg["train"] is not None else STREAM_TEST
    try:
        kind = ObservableKind.parse(cfg["task"])
        ensemble = parse_ensemble(cfg["train"] if stream == STREAM_TRAIN else cfg["test"])
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    probe = _probe(cfg)
    config = {**cfg, "command": "gen", "split": "train" if stream == STREAM_TRAIN else "test"}
    if kind is ObservableKind.GAMMA:
        if len(ensemble.cells) != 1 or ensemble.cells[0].kind != "er":
            raise UsageError("the gamma task takes a single base cell, e.g. 360xG(100,0.5)")
        c = ensemble.cells[0]
        spec = IntrusionSpec(n=c.n, p=c.p, alpha=int(cfg["alpha"]), gamma_max=float(cfg["gamma_max"]),
                             probe=probe, master_seed=int(cfg["seed"]), workers=int(cfg["threads"]))
        patterns = intrusion_split(spec, intrusion_base_graph(spec), stream, c.count)
    else:
        patterns = build_dataset(ensemble, kind, probe, int(cfg["seed"]), stream, int(cfg["threads"]))
    write_dataset(args.output, patterns, config)
    draws = sum(p.draws for p in patterns)
    summary = {"patterns": len(patterns), "feature_dim": probe.dim,
               "rejection_rate": 1.0 - len(patterns) / draws, "output": str(args.output)}
    print(serialize.dumps(summary))
    return 0


def cmd_train(args) -> int:
    cfg = effective_config(args)
    x, y, recs = read_dataset(args.dataset)
    lam = cfg["lambda"]
    if lam == "cv":
        lam = select_lambda(x, y)
    task = recs[0]["task"]
    src = recs[0].get("config") or {}
    probe = {k: src[k] for k in ("probe_m", "probe_t", "probe_dt", "shots") if k in src}
    model = fit_ridge(x, y, float(lam), task=task, probe=probe)
    floor = GAMMA_MAPE_FLOOR if task == "gamma" else None
    metrics = evaluate(y, model.predict(x), floor)
    model.save(args.output, extra={"config": {"command": "train", "dataset": str(args.dataset), "lambda": lam},
                                   "train_metrics": metrics.to_dict()})
    print(serialize.dumps({"train": metrics.to_dict(), "lambda": lam, "model": str(args.output)}))
    return 0


def cmd_eval(args) -> int:
    model = ReadoutModel.load(args.model)
    x, y, recs = read_dataset(args.dataset)
    if x.shape[1] != model.dim:
        raise ParameterError(f"dataset features have length {x.shape[1]} but the model expects {model.dim}")
    floor = GAMMA_MAPE_FLOOR if recs[0]["task"] == "gamma" else None
    metrics = evaluate(y, model.predict(x), floor)
    _emit({"config": {"command": "eval", "model": str(args.model), "dataset": str(args.dataset)},
           **metrics.to_dict()}, args.output)
    return 0


def cmd_table1(args) -> int:
    cfg = effective_config(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = reproduce_table1(int(cfg["seed"]), _probe(cfg), cfg["lambda"], int(cfg["threads"]), args.rows)
    config = {**cfg, "command": "table1", "rows": args.rows}
    (out / "table1.csv").write_text(table1_csv(rows))
    (out / "table1.txt").write_text(table1_text(rows))
    (out / "table1.json").write_text(table1_json(rows, config) + "\n")
    print(table1_text(rows), end="")
    return 0


def cmd_intrude(args) -> int:
    cfg = effective_config(args)
    spec = IntrusionSpec(n=int(cfg["n"]), p=float(cfg["p"]), alpha=int(cfg["alpha"]),
                         gamma_max=float(cfg["gamma_max"]), n_train=int(cfg["n_train"]),
                         n_test=int(cfg["n_test"]), probe=_probe(cfg), lam=cfg["lambda"],
                         master_seed=int(cfg["seed"]), workers=int(cfg["threads"]))
    report = run_task(spec)
    _emit({**report.to_dict(), "config": {**cfg, "command": "intrude"}}, args.output)
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "table1": cmd_table1, "intrude": cmd_intrude}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (GraphProbeError, OSError) as exc:
        print(f"graphprobe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
