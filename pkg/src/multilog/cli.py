"""Command-line entry point: generate, parse, train, eval, report, gradcheck, run."""

from __future__ import annotations

import argparse
import ast
import csv
import dataclasses
import io
import logging
import sys
from pathlib import Path

from . import experiment as exp
from . import gradcheck
from .drain import mine
from .generator import generate
from .logcore import SCENARIOS, DatasetError, load_dataset


# flag dest -> (section, field); section None is ExperimentConfig itself
FLAG_FIELDS = {
    "window_ms": (None, "window_ms"), "group_len": (None, "group_len"), "beta": (None, "beta"),
    "mu": (None, "mu"), "split": (None, "split"), "seed": (None, "seed"), "label_scope": (None, "label_scope"),
    "standalone_epochs": (None, "standalone_epochs"), "ae_epochs": (None, "ae_epochs"),
    "meta_epochs": (None, "meta_epochs"), "lr": (None, "lr"), "batch_size": (None, "batch_size"),
    "word_vectors": (None, "word_vectors"), "per_node": (None, "shared_estimator"),
    "scenario": ("generator", "scenario"), "nodes": ("generator", "n_nodes"),
    "duration_s": ("generator", "duration_s"), "anomalies": ("generator", "anomaly_set"),
    "noise_per_hour": ("generator", "noise_per_hour"), "gen_seed": ("generator", "seed"),
    "inject_len_s": ("generator", "inject_len_s"), "rest_len_s": ("generator", "rest_len_s"),
}


def parse_value(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config_file(path: str | Path) -> dict[str, object]:
    """Flat ``key = value`` lines; ``#`` comments; generator keys as ``generator.field``."""
    out = {}
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{n}: expected key=value")
        out[key.strip()] = parse_value(value)
    return out


def build_config(args: argparse.Namespace) -> exp.ExperimentConfig:
    base = exp.ExperimentConfig().to_dict()
    gen = base.pop("generator")
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            section, _, name = key.rpartition(".")
            target = gen if section == "generator" else base
            if section not in ("", "generator") or name not in target:
                raise ValueError(f"unknown config key {key!r}")
            target[name] = value
    for dest, (section, name) in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "per_node":
            value = not value
        if dest == "anomalies":
            value = tuple(value)
        (gen if section == "generator" else base)[name] = value
    if getattr(args, "data", None):
        base["data"] = str(args.data)
    if isinstance(gen.get("anomaly_set"), (int, list)):
        gen["anomaly_set"] = tuple([gen["anomaly_set"]] if isinstance(gen["anomaly_set"], int) else gen["anomaly_set"])
    return exp.ExperimentConfig.from_dict(dict(base, generator=gen))


def anomaly_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated anomaly numbers, got {text!r}")


def add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--window-ms", type=int, help="time window span (default 5000)")
    p.add_argument("--group-len", type=int, help="events per group M (default 20)")
    p.add_argument("--beta", type=int, help="probability-list length for the autoencoder (default 128)")
    p.add_argument("--mu", type=int, help="latent size (default 32)")
    p.add_argument("--seed", type=int, help="training seed")
    p.add_argument("--split", type=float, help="temporal train fraction (default 0.7)")
    p.add_argument("--label-scope", choices=exp.LABEL_SCOPES)
    p.add_argument("--standalone-epochs", type=int)
    p.add_argument("--ae-epochs", type=int)
    p.add_argument("--meta-epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--word-vectors", help="text word-vector file (word v1 v2 ...)")
    p.add_argument("--per-node", action="store_true", default=None, help="one estimator per node")


def add_generator(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--nodes", type=int)
    p.add_argument("--duration-s", type=int)
    p.add_argument("--anomalies", type=anomaly_list, help="e.g. 4,5,7,8,9")
    p.add_argument("--noise-per-hour", type=float, help="unlabeled single-node glitches per node-hour")
    p.add_argument("--gen-seed", type=int)
    p.add_argument("--inject-len-s", type=int)
    p.add_argument("--rest-len-s", type=int)


def cmd_generate(args) -> int:
    cfg = build_config(args).generator
    if args.seed is not None and args.gen_seed is None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    _, summary = generate(cfg, args.out)
    print(summary, end="")
    return 0


def cmd_parse(args) -> int:
    ds = load_dataset(args.data)
    registry = mine(e.message for stream in ds.entries for e in stream)
    registry.save(args.out)
    print(f"{len(registry)} templates from {ds.n_entries()} lines -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = build_config(args)
    timings: dict[str, float] = {}
    ds = exp.load_or_generate(cfg)
    pipe, prep = exp.fit(cfg, ds, timings)
    exp.save_pipeline(pipe, args.out)
    stages = ", ".join(f"{k} {v:.1f}s" for k, v in timings.items())
    print(f"trained on {prep.split_idx} windows ({stages}); checkpoints in {args.out}")
    return 0


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    pipe = exp.load_pipeline(args.ckpt, ds.n_nodes)
    prep = exp.prepare(ds, pipe.registry, pipe.cfg)
    report = exp.evaluate(pipe, prep, start_idx=0 if args.all else None)
    root = exp.write_report(report, args.out)
    print((root / "report.txt").read_text(), end="")
    return 0


def cmd_report(args) -> int:
    print(exp.render_report_dir(args.dir), end="")
    return 0


def cmd_run(args) -> int:
    cfg = build_config(args)
    report = exp.run_experiment(cfg, args.out)
    if args.out:
        print((Path(args.out) / "report.txt").read_text(), end="")
    else:
        print(exp.render_table(*_rows(report)), end="")
    return 0


def _rows(report: exp.Report):
    files = exp.report_csvs(report)
    read = lambda name: list(csv.DictReader(io.StringIO(files[name])))
    return read("cluster_metrics.csv"), read("node_metrics.csv")


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_all(args.seed or 0)
    print(gradcheck.format_results(results))
    return 0 if all(r.ok for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multilog", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic labeled cluster dataset")
    add_common(p)
    add_generator(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("parse", help="mine and freeze an event registry from a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("train", help="train estimator, autoencoder and meta-classifier")
    add_common(p)
    add_generator(p)
    p.add_argument("--data", help="dataset directory (generated from flags when absent)")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--all", action="store_true", help="score every window, not just the test split")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-render the table from a report directory")
    p.add_argument("dir")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="train and evaluate in one go")
    add_common(p)
    add_generator(p)
    p.add_argument("--data")
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, DatasetError, exp.StageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
