"""Time windows of span T, split per node into fixed-length event groups."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .logcore import AnomalyLabel, ClusterDataset, cluster_anomalous_at, is_anomalous_at


@dataclass(frozen=True)
class WindowSpec:
    span_ms: int = 5000
    group_len: int = 20

    def __post_init__(self):
        if self.span_ms <= 0:
            raise ValueError("span_ms must be positive")
        if self.group_len < 2:
            raise ValueError("group_len must be at least 2")


@dataclass
class Group:
    node: int
    window_idx: int
    events: np.ndarray  # length group_len; PAD only as a suffix
    t0: int
    t1: int
    label: bool
    n_real: int = 0


@dataclass
class Window:
    idx: int
    t0: int
    t1: int
    label: bool
    groups: list[list[Group]] = field(default_factory=list)  # indexed by node


def chunk(events: Sequence[int], stamps: Sequence[int], group_len: int, pad_id: int):
    """Yield (padded event array, first ts, last ts, real count) per chunk."""
    for start in range(0, len(events), group_len):
        part = events[start:start + group_len]
        arr = np.full(group_len, pad_id, dtype=np.int64)
        arr[: len(part)] = part
        yield arr, int(stamps[start]), int(stamps[start + len(part) - 1]), len(part)


def make_windows(
    ds: ClusterDataset,
    event_ids: Sequence[Sequence[int]],
    spec: WindowSpec,
    pad_id: int,
    group_labels: Sequence[AnomalyLabel] | None = None,
) -> list[Window]:
    """Tile the dataset's time range into windows and group each node's events.

    ``event_ids[node][k]`` is the event id of ``ds.entries[node][k]``.  Group
    labels come from ``group_labels`` (default: the dataset labels); the
    window label always uses the dataset labels on any node.
    """
    if len(event_ids) != ds.n_nodes:
        raise ValueError("event_ids must have one sequence per node")
    labels = ds.labels if group_labels is None else list(group_labels)
    lo, hi = ds.time_range
    n_windows = (hi - lo) // spec.span_ms + 1
    windows = []
    for k in range(n_windows):
        t0 = lo + k * spec.span_ms
        t1 = t0 + spec.span_ms - 1
        windows.append(Window(k, t0, t1, cluster_anomalous_at(ds.labels, t0, t1),
                              [[] for _ in range(ds.n_nodes)]))

    for node in range(ds.n_nodes):
        stream = ds.entries[node]
        ids = np.asarray(event_ids[node], dtype=np.int64)
        if len(ids) != len(stream):
            raise ValueError(f"node {node}: {len(ids)} event ids for {len(stream)} entries")
        stamps = np.fromiter((e.ts for e in stream), dtype=np.int64, count=len(stream))
        which = (stamps - lo) // spec.span_ms
        bounds = np.searchsorted(which, np.arange(n_windows + 1))
        for k in range(n_windows):
            a, b = bounds[k], bounds[k + 1]
            if a == b:
                continue
            for arr, g0, g1, n_real in chunk(ids[a:b], stamps[a:b], spec.group_len, pad_id):
                label = is_anomalous_at(labels, node, g0, g1)
                windows[k].groups[node].append(Group(node, k, arr, g0, g1, label, n_real))
    return windows


def iter_groups(windows: Sequence[Window]):
    for w in windows:
        for node_groups in w.groups:
            yield from node_groups


def expand_labels(labels: Sequence[AnomalyLabel], n_nodes: int,
                  cluster_wide: frozenset[int]) -> list[AnomalyLabel]:
    """Widen labels whose anomaly type is in ``cluster_wide`` to every node."""
    everyone = frozenset(range(n_nodes))
    return [AnomalyLabel(l.start_ts, l.end_ts, l.anomaly_no, everyone)
            if l.anomaly_no in cluster_wide else l for l in labels]
