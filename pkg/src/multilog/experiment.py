"""Staged training and evaluation of the full detector plus the aggregation baselines."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from . import baselines
from .cluster import MetaClassifier, ProbAutoencoder, encode, predict_windows, train_autoencoder, train_meta
from .drain import TemplateRegistry
from .embeddings import FileWordVectors, HashWordVectors, preprocess_event, semantic_table
from .generator import CROSS_NODE_TYPES, GeneratorConfig, simulate
from .logcore import ClusterDataset, load_dataset
from .metrics import ConfusionCounts, prf1
from .neural import TrainConfig, TrainingError, load_state, read_checkpoint, save_checkpoint
from .standalone import StandaloneModel, group_matrix, predict_proba, train_standalone
from .windowing import Window, WindowSpec, expand_labels, iter_groups, make_windows

logger = logging.getLogger(__name__)

METHODS = ("MultiLog", "Single-Point", "Vote-Based", "Best-Node")
LABEL_SCOPES = ("affected", "injected")


@dataclass
class ExperimentConfig:
    data: str | None = None  # dataset directory; the generator runs when unset
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    window_ms: int = 5000
    group_len: int = 20
    beta: int = 128
    mu: int = 32
    split: float = 0.7
    seed: int = 0
    label_scope: str = "affected"
    word_dim: int = 300
    word_vectors: str | None = None
    event_dim: int = 32
    hidden_dim: int = 64
    proj_dim: int = 64
    shared_estimator: bool = True
    lr: float = 1e-3
    batch_size: int = 64
    standalone_epochs: int = 8
    ae_epochs: int = 150
    meta_epochs: int = 150

    def __post_init__(self):
        if not 0.0 <= self.split < 1.0:
            raise ValueError("split must lie in [0, 1)")
        if self.label_scope not in LABEL_SCOPES:
            raise ValueError(f"label_scope must be one of {LABEL_SCOPES}")

    @property
    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.window_ms, self.group_len)

    def train_config(self, epochs: int, salt: int) -> TrainConfig:
        return TrainConfig(self.lr, epochs, self.batch_size, self.seed * 1000 + salt)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        gen = d.pop("generator", None) or {}
        if "anomaly_set" in gen:
            gen["anomaly_set"] = tuple(gen["anomaly_set"])
        return cls(generator=GeneratorConfig(**gen), **d)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


@dataclass
class Pipeline:
    """Everything learned in training: parser, semantic table, models."""
    cfg: ExperimentConfig
    n_nodes: int
    registry: TemplateRegistry
    semantic: np.ndarray
    estimators: list[StandaloneModel]
    ae: ProbAutoencoder
    meta: MetaClassifier
    curves: dict[str, list[float]] = field(default_factory=dict)

    def estimator(self, node: int) -> StandaloneModel:
        return self.estimators[0] if len(self.estimators) == 1 else self.estimators[node]


@dataclass
class Prepared:
    ds: ClusterDataset
    windows: list[Window]
    split_idx: int  # first test window


@dataclass
class Report:
    cluster: dict[str, ConfusionCounts]
    node_window: list[ConfusionCounts]
    node_group: list[ConfusionCounts]
    best_node: int
    curves: dict[str, list[float]]
    timings: dict[str, float]
    rows: list[dict]

    def metrics(self, method: str) -> tuple[float, float, float]:
        return prf1(self.cluster[method])


# -- preparation ----------------------------------------------------------------

def load_or_generate(cfg: ExperimentConfig) -> ClusterDataset:
    return load_dataset(cfg.data) if cfg.data else simulate(cfg.generator)


def split_index(n_windows: int, split: float) -> int:
    return int(n_windows * split)


def assign_ids(ds: ClusterDataset, registry: TemplateRegistry) -> list[list[int]]:
    cache: dict[str, int] = {}
    out = []
    for stream in ds.entries:
        ids = []
        for e in stream:
            tid = cache.get(e.message)
            if tid is None:
                tid = cache[e.message] = registry.parse(e.message)
            ids.append(tid)
        out.append(ids)
    return out


def mine_registry(ds: ClusterDataset, until_ts: int | None) -> TemplateRegistry:
    reg = TemplateRegistry()
    for stream in ds.entries:
        for e in stream:
            if until_ts is None or e.ts < until_ts:
                reg.parse(e.message)
    return reg.freeze()


def prepare(ds: ClusterDataset, registry: TemplateRegistry, cfg: ExperimentConfig) -> Prepared:
    ids = assign_ids(ds, registry)
    labels = ds.labels
    if cfg.label_scope == "affected":
        labels = expand_labels(ds.labels, ds.n_nodes, CROSS_NODE_TYPES)
    windows = make_windows(ds, ids, cfg.window_spec, registry.pad_id, group_labels=labels)
    return Prepared(ds, windows, split_index(len(windows), cfg.split))


def word_provider(cfg: ExperimentConfig, vocab: Sequence[str]):
    if cfg.word_vectors:
        return FileWordVectors(cfg.word_vectors, vocab)
    return HashWordVectors(cfg.word_dim, seed=cfg.seed)


def probability_lists(pipe: Pipeline, windows: Sequence[Window]) -> list[list[list[float]]]:
    """P[w][node] for every window."""
    out = [[[] for _ in range(pipe.n_nodes)] for _ in windows]
    for node in range(pipe.n_nodes):
        groups = [g for w in windows for g in w.groups[node]]
        probs = predict_proba(pipe.estimator(node), group_matrix(groups))
        for g, p in zip(groups, probs):
            out[g.window_idx - windows[0].idx][node].append(float(p))
    return out


def latents_for(pipe: Pipeline, plists: Sequence[Sequence[Sequence[float]]]) -> np.ndarray:
    flat = [p for w in plists for p in w]
    z = encode(pipe.ae, flat) if flat else np.zeros((0, pipe.cfg.mu))
    return z.reshape(len(plists), pipe.n_nodes, pipe.cfg.mu)


# -- training -------------------------------------------------------------------

def _stage(name: str, timings: dict[str, float]):
    class _Timer:
        def __enter__(self):
            self.t = time.perf_counter()
            logger.info("stage %s", name)

        def __exit__(self, exc_type, exc, tb):
            timings[name] = timings.get(name, 0.0) + time.perf_counter() - self.t
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
    return _Timer()


def fit(cfg: ExperimentConfig, ds: ClusterDataset, timings: dict[str, float] | None = None
        ) -> tuple[Pipeline, Prepared]:
    timings = {} if timings is None else timings
    torch.manual_seed(cfg.seed)
    lo, hi = ds.time_range
    n_windows = (hi - lo) // cfg.window_ms + 1
    split_ts = lo + split_index(n_windows, cfg.split) * cfg.window_ms

    with _stage("parse", timings):
        registry = mine_registry(ds, split_ts)
        prep = prepare(ds, registry, cfg)
    train_windows = prep.windows[: prep.split_idx]

    with _stage("embed", timings):
        words = [preprocess_event(t) for t in registry.templates]
        provider = word_provider(cfg, {w for ws in words for w in ws})
        semantic = semantic_table(registry.templates, provider)

    def new_estimator(salt: int) -> StandaloneModel:
        return StandaloneModel(len(registry), semantic, cfg.event_dim, cfg.hidden_dim, cfg.proj_dim,
                               seed=cfg.seed * 1000 + salt)

    curves: dict[str, list[float]] = {}
    with _stage("standalone", timings):
        estimators = []
        pools = [None] if cfg.shared_estimator else list(range(ds.n_nodes))
        for i, node in enumerate(pools):
            groups = [g for g in iter_groups(train_windows) if node is None or g.node == node]
            model = new_estimator(i)
            ids = group_matrix(groups)
            y = np.array([g.label for g in groups])
            key = "standalone" if node is None else f"standalone_node{node}"
            curves[key] = train_standalone(model, ids, y, cfg.train_config(cfg.standalone_epochs, 1 + i))
            estimators.append(model)

    ae = ProbAutoencoder(cfg.beta, cfg.mu, seed=cfg.seed * 1000 + 101)
    meta = MetaClassifier(ds.n_nodes, cfg.mu, seed=cfg.seed * 1000 + 102)
    pipe = Pipeline(cfg, ds.n_nodes, registry, semantic, estimators, ae, meta, curves)

    with _stage("autoencoder", timings):
        plists = probability_lists(pipe, train_windows)
        flat = [p for w in plists for p in w]
        curves["autoencoder"] = train_autoencoder(ae, flat, cfg.train_config(cfg.ae_epochs, 201))

    with _stage("meta", timings):
        z = latents_for(pipe, plists)
        y = [w.label for w in train_windows]
        curves["meta"] = train_meta(meta, z, y, cfg.train_config(cfg.meta_epochs, 301))
    return pipe, prep


# -- evaluation -----------------------------------------------------------------

def evaluate(pipe: Pipeline, prep: Prepared, timings: dict[str, float] | None = None,
             start_idx: int | None = None) -> Report:
    timings = {} if timings is None else timings
    start = prep.split_idx if start_idx is None else start_idx
    windows = prep.windows[start:]
    if not windows:
        raise ValueError("no windows to evaluate")
    n = pipe.n_nodes
    with _stage("evaluate", timings):
        plists = probability_lists(pipe, windows)
        z = latents_for(pipe, plists)
        p_anom = predict_windows(pipe.meta, z)
        truth = [w.label for w in windows]
        node_streams = np.array([[baselines.node_label(p) for p in w] for w in plists], dtype=int)
        preds = {
            "MultiLog": (p_anom > 0.5).astype(int),
            "Single-Point": np.array([baselines.single_point(r) for r in node_streams]),
            "Vote-Based": np.array([baselines.vote_based(r) for r in node_streams]),
        }
        preds["Best-Node"], best = baselines.best_node(node_streams, truth)
        cluster = {m: ConfusionCounts.from_labels(truth, preds[m].astype(bool)) for m in METHODS}
        node_window = [ConfusionCounts.from_labels(truth, node_streams[:, i].astype(bool)) for i in range(n)]
        node_group = []
        for i in range(n):
            gt, gp = [], []
            for w, pl in zip(windows, plists):
                gt.extend(g.label for g in w.groups[i])
                gp.extend(p >= baselines.THRESHOLD for p in pl[i])
            node_group.append(ConfusionCounts.from_labels(gt, gp))
        rows = []
        for k, w in enumerate(windows):
            row = dict(window=w.idx, t0=w.t0, t1=w.t1, label=int(w.label),
                       p_anomalous=round(float(p_anom[k]), 6))
            row.update({m: int(preds[m][k]) for m in METHODS})
            row.update({f"node{i}_max": round(max(plists[k][i], default=0.0), 6) for i in range(n)})
            row.update({f"node{i}_groups": len(plists[k][i]) for i in range(n)})
            rows.append(row)
    return Report(cluster, node_window, node_group, best, dict(pipe.curves), dict(timings), rows)


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None) -> Report:
    timings: dict[str, float] = {}
    with _stage("load", timings):
        ds = load_or_generate(cfg)
    pipe, prep = fit(cfg, ds, timings)
    report = evaluate(pipe, prep, timings)
    if out_dir is not None:
        write_report(report, out_dir)
    return report


# -- checkpoints ----------------------------------------------------------------

def save_pipeline(pipe: Pipeline, out_dir: str | os.PathLike) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    pipe.registry.save(root / "registry.txt")
    (root / "config.json").write_text(json.dumps(pipe.cfg.to_dict(), indent=2, sort_keys=True))
    meta = dict(n_nodes=pipe.n_nodes, n_templates=len(pipe.registry), curves=pipe.curves)
    modules = {f"estimator{i}": m for i, m in enumerate(pipe.estimators)}
    save_checkpoint(root / "standalone.npz", modules, dict(meta, n_estimators=len(pipe.estimators)))
    save_checkpoint(root / "autoencoder.npz", {"ae": pipe.ae}, dict(beta=pipe.ae.beta, mu=pipe.ae.mu))
    save_checkpoint(root / "meta.npz", {"meta": pipe.meta}, dict(n_nodes=pipe.n_nodes, mu=pipe.meta.mu))
    return root


def load_pipeline(ckpt_dir: str | os.PathLike, n_nodes: int | None = None) -> Pipeline:
    root = Path(ckpt_dir)
    cfg = ExperimentConfig.from_dict(json.loads((root / "config.json").read_text()))
    registry = TemplateRegistry.load(root / "registry.txt")
    meta_info, states, _ = read_checkpoint(root / "standalone.npz")
    if n_nodes is not None and n_nodes != meta_info["n_nodes"]:
        raise ValueError(f"checkpoint was trained for {meta_info['n_nodes']} nodes, dataset has {n_nodes}")
    n = meta_info["n_nodes"]
    estimators = []
    for i in range(meta_info["n_estimators"]):
        state = states[f"estimator{i}"]
        model = StandaloneModel(len(registry), state["semantic"], cfg.event_dim, cfg.hidden_dim, cfg.proj_dim)
        estimators.append(load_state(model, state))
    ae_info, ae_states, _ = read_checkpoint(root / "autoencoder.npz")
    ae = load_state(ProbAutoencoder(ae_info["beta"], ae_info["mu"]), ae_states["ae"])
    mc_info, mc_states, _ = read_checkpoint(root / "meta.npz")
    if mc_info["n_nodes"] != n:
        raise ValueError("meta-classifier and estimator checkpoints disagree on cluster size")
    meta = load_state(MetaClassifier(n, mc_info["mu"]), mc_states["meta"])
    semantic = estimators[0].semantic.numpy()
    return Pipeline(cfg, n, registry, semantic, estimators, ae, meta, meta_info.get("curves", {}))


# -- reports --------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _csv(rows: Sequence[Sequence], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _counts_row(c: ConfusionCounts) -> list:
    p, r, f = prf1(c)
    return [c.tp, c.fp, c.tn, c.fn, _fmt(p), _fmt(r), _fmt(f)]


COUNT_COLS = ["tp", "fp", "tn", "fn", "precision", "recall", "f1"]


def report_csvs(report: Report) -> dict[str, str]:
    files = {}
    files["cluster_metrics.csv"] = _csv(
        [[m] + _counts_row(report.cluster[m]) + [report.best_node if m == "Best-Node" else ""]
         for m in METHODS], ["method"] + COUNT_COLS + ["selected_node"])
    node_rows = [["window", i] + _counts_row(c) for i, c in enumerate(report.node_window)]
    node_rows += [["group", i] + _counts_row(c) for i, c in enumerate(report.node_group)]
    files["node_metrics.csv"] = _csv(node_rows, ["granularity", "node"] + COUNT_COLS)
    curve_rows = [[stage, epoch + 1, _fmt(v)] for stage, vals in sorted(report.curves.items())
                  for epoch, v in enumerate(vals)]
    files["loss_curves.csv"] = _csv(curve_rows, ["stage", "epoch", "loss"])
    if report.rows:
        header = list(report.rows[0])
        files["window_predictions.csv"] = _csv([[r[h] for h in header] for r in report.rows], header)
    return files


def render_table(cluster_rows: Sequence[dict], node_rows: Sequence[dict]) -> str:
    out = ["Cluster (per window)",
           f"{'method':<20}{'tp':>6}{'fp':>6}{'tn':>6}{'fn':>6}{'P':>9}{'R':>9}{'F1':>9}"]
    for r in cluster_rows:
        name = r["method"] + (f" (node {r['selected_node']})" if r.get("selected_node") not in ("", None) else "")
        out.append(f"{name:<20}{r['tp']:>6}{r['fp']:>6}{r['tn']:>6}{r['fn']:>6}"
                   f"{float(r['precision']):>9.4f}{float(r['recall']):>9.4f}{float(r['f1']):>9.4f}")
    for gran in ("window", "group"):
        out += ["", f"Per node ({gran} level)",
                f"{'node':<20}{'tp':>6}{'fp':>6}{'tn':>6}{'fn':>6}{'P':>9}{'R':>9}{'F1':>9}"]
        for r in node_rows:
            if r["granularity"] != gran:
                continue
            out.append(f"{'node ' + str(r['node']):<20}{r['tp']:>6}{r['fp']:>6}{r['tn']:>6}{r['fn']:>6}"
                       f"{float(r['precision']):>9.4f}{float(r['recall']):>9.4f}{float(r['f1']):>9.4f}")
    return "\n".join(out) + "\n"


def read_csv_rows(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_report_dir(report_dir: str | os.PathLike) -> str:
    root = Path(report_dir)
    return render_table(read_csv_rows(root / "cluster_metrics.csv"), read_csv_rows(root / "node_metrics.csv"))


def write_report(report: Report, out_dir: str | os.PathLike) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for name, text in report_csvs(report).items():
        (root / name).write_text(text, encoding="utf-8")
    timing = "\n".join(f"  {k:<12}{v:8.2f} s" for k, v in report.timings.items())
    text = render_report_dir(root) + "\nTimings\n" + timing + "\n"
    (root / "report.txt").write_text(text, encoding="utf-8")
    return root
