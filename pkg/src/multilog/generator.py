"""Deterministic multi-node log simulator with labeled anomaly injection.

The cluster cycles normal -> injected -> normal.  Each episode picks an
anomaly type (a seeded shuffle of ``anomaly_set``, reshuffled every round)
and target node(s) according to the scenario.  Log families arrive as
Poisson processes with per-second rates; an active anomaly rescales normal
families, adds its own templates on the injected node(s) and, for the
network / workload types, perturbs the peers as well.

Optional transient noise ("glitches") replays one second of an anomaly's
local signature on a single node during a normal period.  Glitches are not
labeled; they model the short self-resolving spikes that trip per-node
detectors.
"""

from __future__ import annotations

import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .logcore import SCENARIOS, AnomalyLabel, ClusterDataset, LogEntry, write_dataset

DEFAULT_START_MS = 1_704_067_200_000  # 2024-01-01T00:00:00Z


@dataclass(frozen=True)
class Family:
    template: str
    level: str = "INFO"

    @property
    def pattern(self) -> str:
        """The template as the parser sees it, parameters shown as [*]."""
        return re.sub(r"\S*\{\w+\}\S*", "[*]", self.template)


# normal workload, base rates in lines per second before scaling to base_rate
NORMAL: dict[str, tuple[Family, float]] = {
    "hb_send": (Family("Send heartbeat to node {peer} term {n}"), 1.0),
    "hb_recv": (Family("Receive heartbeat from node {peer} term {n}"), 1.0),
    "query": (Family("Query {qid} served in {ms} ms rows {n}"), 2.0),
    "insert": (Family("Insert {n} points into region {r} cost {ms} ms"), 2.0),
    "memtable": (Family("Create memtable for region {r} size {kb} KB"), 0.25),
    "flush": (Family("Flush memtable of region {r} to file seq-{n}.tsfile"), 0.25),
    "compact_start": (Family("Start compaction task {id} for region {r} with {n} files"), 0.08),
    "compact_end": (Family("Compaction task {id} finished in {ms} ms"), 0.08),
    "snapshot": (Family("Take snapshot of region {r} at index {n}"), 0.05),
    "wal": (Family("Write ahead log rolled to segment {n}"), 0.15),
    "session_open": (Family("Client session {id} opened from {ip}"), 0.3),
    "session_close": (Family("Client session {id} closed"), 0.3),
    "mem_usage": (Family("Memory usage {pct} % of {mb} MB"), 0.2),
    "lease": (Family("Region {r} leader lease renewed for term {n}"), 0.2),
}

EXTRA: dict[str, Family] = {
    "cpu_high": Family("CPU usage reached {pct} % on {n} cores", "WARN"),
    "pool_busy": Family("Thread pool query-executor is busy with queue size {n}", "WARN"),
    "io_wait": Family("Disk IO wait {ms} ms exceeds threshold", "WARN"),
    "wal_slow": Family("Slow write to WAL segment {n} took {ms} ms", "WARN"),
    "mem_low": Family("Insufficient memory free {mb} MB below threshold", "WARN"),
    "mem_reject": Family("Reject write request because memory pressure is high", "ERROR"),
    "throttled": Family("Transfer to node {peer} throttled at {kb} KB/s", "WARN"),
    "refused": Family("Connection to node {peer} refused", "ERROR"),
    "hb_delayed": Family("Heartbeat from node {peer} delayed {ms} ms", "WARN"),
    "hb_timeout": Family("Heartbeat to node {peer} timed out after {ms} ms", "ERROR"),
    "retry": Family("Retry sending request to node {peer} attempt {n}", "WARN"),
    "node_unknown": Family("Node {peer} is marked as Unknown status", "WARN"),
    "slow_query": Family("Slow query {qid} cost {ms} ms exceeds threshold", "WARN"),
    "export_start": Family("Start export task {id} to external storage"),
    "export_data": Family("Currently {n} data"),
    "export_progress": Family("Export task {id} progress {pct} %"),
    "import_start": Family("Start import task {id} from file import-{n}.csv"),
    "import_load": Family("Load {n} points from import file"),
    "import_progress": Family("Import task {id} progress {pct} %"),
    "compact_select": Family("Compaction selected {n} files from level {r}"),
}

FAMILIES: dict[str, Family] = {**{k: f for k, (f, _) in NORMAL.items()}, **EXTRA}
STARTUP = Family("Node {node} started with {n} regions")
SEQUENCE_STEP_MS = 40


@dataclass(frozen=True)
class AnomalyEffect:
    """How one anomaly type shows up in the logs.

    ``local_rates`` add families on the injected node, ``rate_multipliers``
    rescale its normal families, ``sequences`` emit ordered line runs at the
    given start rate, and ``peer_rates`` / ``peer_multipliers`` apply to every
    other node.  ``cluster_wide`` applies the local signature to all nodes;
    ``silent`` mutes the injected node entirely.
    """
    anomaly_no: int
    name: str
    cause: str
    description: str
    local_rates: dict[str, float] = field(default_factory=dict)
    rate_multipliers: dict[str, float] = field(default_factory=dict)
    sequences: tuple[tuple[float, tuple[str, ...]], ...] = ()
    peer_rates: dict[str, float] = field(default_factory=dict)
    peer_multipliers: dict[str, float] = field(default_factory=dict)
    cluster_wide: bool = False
    silent: bool = False

    @property
    def cross_node(self) -> bool:
        return bool(self.peer_rates or self.peer_multipliers or self.cluster_wide)

    @property
    def extra_templates(self) -> list[str]:
        keys = list(self.local_rates) + [k for _, seq in self.sequences for k in seq] + list(self.peer_rates)
        seen = dict.fromkeys(keys)
        return [FAMILIES[k].pattern for k in seen]


_CATALOG = (
    AnomalyEffect(1, "CPU Saturation", "System", "No CPU headroom left for request handling.",
                  local_rates={"cpu_high": 1.5, "pool_busy": 1.0},
                  rate_multipliers={"query": 0.7}),
    AnomalyEffect(2, "IO Saturation", "System", "Disk bandwidth is used up by competing writes.",
                  local_rates={"io_wait": 1.5, "wal_slow": 1.0},
                  rate_multipliers={"insert": 0.6}),
    AnomalyEffect(3, "Memory Saturation", "System", "Free memory runs low and writes get rejected.",
                  local_rates={"mem_low": 1.2, "mem_reject": 1.0},
                  rate_multipliers={"mem_usage": 5.0}),
    AnomalyEffect(4, "Network Bandwidth Limited", "System",
                  "Inter-node links are throttled.",
                  local_rates={"throttled": 1.5},
                  rate_multipliers={"hb_recv": 0.5},
                  peer_rates={"hb_delayed": 0.8, "retry": 0.6},
                  peer_multipliers={"hb_recv": 0.7}),
    AnomalyEffect(5, "Network Partition", "System", "A node loses connectivity to its peers.",
                  local_rates={"refused": 1.5},
                  rate_multipliers={"hb_send": 0.2, "hb_recv": 0.1},
                  peer_rates={"hb_timeout": 0.8, "retry": 0.6},
                  peer_multipliers={"hb_recv": 0.8}),
    AnomalyEffect(6, "Machine Down", "System",
                  "A node stops and writes nothing until it returns.",
                  silent=True,
                  peer_rates={"hb_timeout": 1.0, "node_unknown": 0.3, "retry": 0.6},
                  peer_multipliers={"hb_recv": 0.8}),
    AnomalyEffect(7, "Slow Query Load", "Database", "Query load high enough that queries run slow.",
                  local_rates={"slow_query": 1.5},
                  rate_multipliers={"query": 1.5},
                  cluster_wide=True),
    AnomalyEffect(8, "Export Operations", "Database", "Bulk export of stored data.",
                  sequences=((0.4, ("export_start", "export_data", "export_data", "export_progress")),),
                  peer_rates={"hb_delayed": 0.6, "retry": 0.4}),
    AnomalyEffect(9, "Import Operations", "Database", "Bulk load of data from files.",
                  sequences=((0.6, ("import_start", "import_load", "import_progress")),),
                  rate_multipliers={"insert": 1.5},
                  peer_rates={"hb_delayed": 0.4, "retry": 0.4}),
    AnomalyEffect(10, "Heavy Compaction", "Database",
                  "Compaction runs far more often than usual.",
                  local_rates={"compact_select": 1.0},
                  rate_multipliers={"compact_start": 15.0, "compact_end": 15.0}),
    AnomalyEffect(11, "Frequent Flushes", "Database",
                  "Memtables are flushed to disk at a very short interval.",
                  rate_multipliers={"flush": 12.0, "memtable": 12.0}),
)


def describe_anomalies() -> tuple[AnomalyEffect, ...]:
    return _CATALOG


def effect(anomaly_no: int) -> AnomalyEffect:
    return _CATALOG[anomaly_no - 1]


CROSS_NODE_TYPES = frozenset(e.anomaly_no for e in _CATALOG if e.cross_node)


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_nodes: int = 6
    duration_s: int = 3600
    base_rate: float = 8.0
    scenario: str = "Multi2Multi"
    anomaly_set: tuple[int, ...] = tuple(range(1, 12))
    inject_len_s: int = 30
    rest_len_s: int = 50
    noise_per_hour: float = 0.0  # glitches per node per hour
    noise_len_s: int = 1
    start_ms: int = DEFAULT_START_MS

    def __post_init__(self):
        object.__setattr__(self, "anomaly_set", tuple(sorted(set(self.anomaly_set))))
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if not self.anomaly_set or not all(1 <= a <= 11 for a in self.anomaly_set):
            raise ValueError("anomaly_set must be a non-empty subset of 1..11")
        single_type = self.scenario.startswith("Single2")
        if single_type and len(self.anomaly_set) != 1:
            raise ValueError(f"{self.scenario} needs exactly one anomaly type")
        if not single_type and len(self.anomaly_set) < 2:
            raise ValueError(f"{self.scenario} needs at least two anomaly types")
        if self.base_rate <= 0 or self.n_nodes < 1 or self.duration_s <= 0:
            raise ValueError("base_rate, n_nodes and duration_s must be positive")
        if self.inject_len_s <= 0 or self.rest_len_s <= 0 or self.noise_len_s <= 0:
            raise ValueError("interval lengths must be positive")
        if self.noise_per_hour < 0:
            raise ValueError("noise_per_hour must be non-negative")


@dataclass(frozen=True)
class Episode:
    start_s: int
    end_s: int  # exclusive
    anomaly_no: int
    nodes: tuple[int, ...]


def schedule(cfg: GeneratorConfig, rng: np.random.Generator) -> list[Episode]:
    """rest / inject / rest / ... / inject / rest, ending on a normal period."""
    multi_node = cfg.scenario.endswith("2Multi") and cfg.n_nodes > 1
    fixed_target = int(rng.integers(cfg.n_nodes))
    episodes: list[Episode] = []
    queue: list[int] = []
    t = cfg.rest_len_s
    while t + cfg.inject_len_s + cfg.rest_len_s <= cfg.duration_s:
        if not queue:
            queue = [int(a) for a in rng.permutation(cfg.anomaly_set)]
        kind = queue.pop(0)
        if multi_node:
            k = int(rng.integers(2, max(2, cfg.n_nodes // 2) + 1))
            nodes = tuple(sorted(int(n) for n in rng.choice(cfg.n_nodes, size=k, replace=False)))
        else:
            nodes = (fixed_target,)
        episodes.append(Episode(t, t + cfg.inject_len_s, kind, nodes))
        t += cfg.inject_len_s + cfg.rest_len_s
    return episodes


def _glitches(cfg: GeneratorConfig, episodes: Sequence[Episode], rng: np.random.Generator):
    """(node, start second, anomaly type) for unlabeled transient glitches."""
    kinds = [a for a in cfg.anomaly_set if not effect(a).silent]
    if cfg.noise_per_hour == 0 or not kinds:
        return []
    busy = np.zeros(cfg.duration_s, dtype=bool)
    for ep in episodes:
        busy[max(0, ep.start_s - 1): ep.end_s + 1] = True
    free = [s for s in range(cfg.duration_s - cfg.noise_len_s)
            if not busy[s: s + cfg.noise_len_s].any()]
    out = []
    for node in range(cfg.n_nodes):
        count = int(rng.poisson(cfg.noise_per_hour * cfg.duration_s / 3600))
        if not free or count == 0:
            continue
        starts = np.sort(rng.choice(free, size=min(count, len(free)), replace=False))
        for s in starts:
            out.append((node, int(s), int(rng.choice(kinds))))
    return out


def _rate_tables(cfg: GeneratorConfig, episodes: Sequence[Episode], glitches):
    """Per-node {family: per-second rate array} and sequence start rates."""
    scale = cfg.base_rate / sum(r for _, r in NORMAL.values())
    tables = []
    seqs: list[list[tuple[np.ndarray, tuple[str, ...]]]] = []
    for _ in range(cfg.n_nodes):
        tables.append({k: np.full(cfg.duration_s, r * scale) for k, (_, r) in NORMAL.items()})
        seqs.append([])

    def apply_local(node, eff, sl):
        rates = tables[node]
        for fam, mult in eff.rate_multipliers.items():
            rates[fam][sl] *= mult
        for fam, r in eff.local_rates.items():
            rates.setdefault(fam, np.zeros(cfg.duration_s))[sl] += r
        for r, seq in eff.sequences:
            arr = np.zeros(cfg.duration_s)
            arr[sl] = r
            seqs[node].append((arr, seq))

    for ep in episodes:
        eff = effect(ep.anomaly_no)
        sl = slice(ep.start_s, ep.end_s)
        for node in range(cfg.n_nodes):
            if node in ep.nodes or eff.cluster_wide:
                apply_local(node, eff, sl)
            else:
                rates = tables[node]
                for fam, mult in eff.peer_multipliers.items():
                    rates[fam][sl] *= mult
                for fam, r in eff.peer_rates.items():
                    rates.setdefault(fam, np.zeros(cfg.duration_s))[sl] += r
        if eff.silent:
            for node in ep.nodes:
                for arr in tables[node].values():
                    arr[sl] = 0.0
                for arr, _ in seqs[node]:
                    arr[sl] = 0.0

    for node, s, kind in glitches:
        apply_local(node, effect(kind), slice(s, s + cfg.noise_len_s))
    return tables, seqs


def _render(family: Family, count: int, node: int, peers: np.ndarray, rng: np.random.Generator):
    fields = {
        "peer": peers,
        "n": rng.integers(1, 100_000, count),
        "ms": rng.integers(1, 5_000, count),
        "r": rng.integers(1, 64, count),
        "id": rng.integers(1, 1_000_000, count),
        "pct": rng.integers(1, 100, count),
        "mb": rng.integers(64, 16_384, count),
        "kb": rng.integers(16, 65_536, count),
        "port": rng.integers(20_000, 60_000, count),
    }
    out = []
    for i in range(count):
        vals = {k: v[i] for k, v in fields.items()}
        vals["qid"] = f"q{vals['id']}"
        vals["ip"] = f"10.0.0.{vals['r']}:{vals['port']}"
        out.append(family.template.format(node=node, **vals))
    return out


def _peer_ids(cfg, node, count, episodes_by_second, seconds, rng):
    others = [n for n in range(cfg.n_nodes) if n != node] or [node]
    peers = np.asarray(others)[rng.integers(len(others), size=count)]
    # lines about a troubled peer name one of the injected nodes
    for i, s in enumerate(seconds):
        ep = episodes_by_second[s]
        if ep is not None and node not in ep.nodes:
            peers[i] = ep.nodes[i % len(ep.nodes)]
    return peers


def simulate(cfg: GeneratorConfig) -> ClusterDataset:
    """Generate the labeled cluster dataset in memory."""
    root = np.random.default_rng(cfg.seed)
    episodes = schedule(cfg, root)
    glitches = _glitches(cfg, episodes, root)
    tables, seqs = _rate_tables(cfg, episodes, glitches)
    by_second: list[Episode | None] = [None] * cfg.duration_s
    for ep in episodes:
        for s in range(ep.start_s, ep.end_s):
            by_second[s] = ep

    node_rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.n_nodes)]
    entries = []
    for node, rng in enumerate(node_rngs):
        events: list[tuple[int, int, str, str]] = []  # (ts, order, level, message)
        start_msg = STARTUP.template.format(node=node, n=int(rng.integers(1, 64)))
        events.append((cfg.start_ms, -1, "INFO", start_msg))
        order = 0
        for fam_key in sorted(tables[node]):
            counts = rng.poisson(tables[node][fam_key])
            seconds = np.repeat(np.arange(cfg.duration_s), counts)
            if not len(seconds):
                continue
            stamps = cfg.start_ms + seconds * 1000 + rng.integers(0, 1000, len(seconds))
            fam = FAMILIES[fam_key]
            peers = _peer_ids(cfg, node, len(seconds), by_second, seconds, rng)
            for ts, msg in zip(stamps, _render(fam, len(seconds), node, peers, rng)):
                events.append((int(ts), order, fam.level, msg))
                order += 1
        for arr, seq in seqs[node]:
            counts = rng.poisson(arr)
            seconds = np.repeat(np.arange(cfg.duration_s), counts)
            span = SEQUENCE_STEP_MS * len(seq)
            starts = cfg.start_ms + seconds * 1000 + rng.integers(0, 1000 - span, len(seconds))
            peers = _peer_ids(cfg, node, len(seconds), by_second, seconds, rng)
            for j, key in enumerate(seq):
                fam = FAMILIES[key]
                msgs = _render(fam, len(seconds), node, peers, rng)
                for ts, msg in zip(starts + j * SEQUENCE_STEP_MS, msgs):
                    events.append((int(ts), order, fam.level, msg))
                    order += 1
        events.sort(key=lambda e: (e[0], e[1]))
        entries.append([LogEntry(node, ts, level, msg) for ts, _, level, msg in events])

    labels = [AnomalyLabel(cfg.start_ms + ep.start_s * 1000, cfg.start_ms + ep.end_s * 1000 - 1,
                           ep.anomaly_no, frozenset(ep.nodes)) for ep in episodes]
    return ClusterDataset(cfg.n_nodes, entries, labels, cfg.scenario)


def summarize(cfg: GeneratorConfig, ds: ClusterDataset) -> str:
    kinds = Counter(l.anomaly_no for l in ds.labels)
    hit = Counter(n for l in ds.labels for n in l.nodes)
    lines = [
        f"scenario        {cfg.scenario}",
        f"seed            {cfg.seed}",
        f"nodes           {cfg.n_nodes}",
        f"duration        {cfg.duration_s} s",
        f"episodes        {len(ds.labels)} ({cfg.inject_len_s} s injected / {cfg.rest_len_s} s rest)",
        f"glitches/node/h {cfg.noise_per_hour:g}",
        f"log lines       {ds.n_entries()}",
        "per node        " + " ".join(f"{i}:{len(s)}" for i, s in enumerate(ds.entries)),
        "anomaly types   " + " ".join(f"{k}x{v}" for k, v in sorted(kinds.items())),
        "injected nodes  " + " ".join(f"{k}x{v}" for k, v in sorted(hit.items())),
    ]
    return "\n".join(lines) + "\n"


def generate(cfg: GeneratorConfig, out_dir: str | os.PathLike) -> tuple[ClusterDataset, str]:
    """Simulate, write the dataset directory plus summary.txt, return both."""
    root = Path(out_dir)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {root}: {exc}") from exc
    if not os.access(root, os.W_OK):
        raise PermissionError(f"output directory {root} is not writable")
    ds = simulate(cfg)
    write_dataset(ds, root)
    summary = summarize(cfg, ds)
    (root / "summary.txt").write_text(summary, encoding="utf-8")
    return ds, summary
