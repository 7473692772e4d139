"""Domain types and on-disk format for multi-node cluster logs.

A dataset lives in a directory::

    manifest.txt   key=value lines (n_nodes, scenario)
    node_<i>.log   one ``<ISO8601> <LEVEL> <message...>`` line per entry
    labels.csv     start_ts_ms,end_ts_ms,anomaly_no,node_ids  (node ids ';'-separated)
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)

SCENARIOS = ("Single2Single", "Single2Multi", "Multi2Single", "Multi2Multi")
N_ANOMALY_TYPES = 11
LABELS_HEADER = ["start_ts_ms", "end_ts_ms", "anomaly_no", "node_ids"]


class DatasetError(Exception):
    """Raised when a dataset directory cannot be loaded."""


@dataclass(frozen=True)
class LogEntry:
    node: int
    ts: int
    level: str
    message: str

    def __post_init__(self):
        if self.ts < 0:
            raise ValueError(f"negative timestamp {self.ts}")
        if not self.message.strip():
            raise ValueError("empty log message")


@dataclass(frozen=True)
class AnomalyLabel:
    start_ts: int
    end_ts: int
    anomaly_no: int
    nodes: frozenset[int]

    def __post_init__(self):
        if self.start_ts >= self.end_ts:
            raise ValueError(f"label interval [{self.start_ts}, {self.end_ts}] is empty")
        if not 1 <= self.anomaly_no <= N_ANOMALY_TYPES:
            raise ValueError(f"anomaly number {self.anomaly_no} outside 1..{N_ANOMALY_TYPES}")
        if not self.nodes:
            raise ValueError("label without nodes")
        object.__setattr__(self, "nodes", frozenset(self.nodes))

    def overlaps(self, t0: int, t1: int) -> bool:
        return self.start_ts <= t1 and t0 <= self.end_ts


@dataclass
class ClusterDataset:
    n_nodes: int
    entries: list[list[LogEntry]]
    labels: list[AnomalyLabel]
    scenario: str
    skipped: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("a cluster needs at least one node")
        if len(self.entries) != self.n_nodes:
            raise ValueError(f"expected {self.n_nodes} node streams, got {len(self.entries)}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        for label in self.labels:
            bad = [n for n in label.nodes if not 0 <= n < self.n_nodes]
            if bad:
                raise ValueError(f"label references nodes {bad} outside cluster of {self.n_nodes}")

    @property
    def time_range(self) -> tuple[int, int]:
        stamps = [e.ts for stream in self.entries for e in (stream[:1] + stream[-1:])]
        if not stamps:
            raise ValueError("dataset has no log entries")
        return min(stamps), max(stamps)

    def n_entries(self) -> int:
        return sum(len(s) for s in self.entries)


def is_anomalous_at(labels: Iterable[AnomalyLabel], node: int, t0: int, t1: int) -> bool:
    """True iff some label covering ``node`` intersects the closed span [t0, t1]."""
    if t0 > t1:
        raise ValueError(f"query span [{t0}, {t1}] is reversed")
    return any(node in lab.nodes and lab.overlaps(t0, t1) for lab in labels)


def cluster_anomalous_at(labels: Iterable[AnomalyLabel], t0: int, t1: int) -> bool:
    """True iff any label on any node intersects [t0, t1]."""
    return any(lab.overlaps(t0, t1) for lab in labels)


# -- timestamps ---------------------------------------------------------------

def format_ts(ts_ms: int) -> str:
    dt = datetime.fromtimestamp(ts_ms // 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{ts_ms % 1000:03d}+00:00"


def parse_ts(text: str) -> int:
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    # integer arithmetic avoids float rounding of the millisecond part
    delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
    return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000


def format_line(entry: LogEntry) -> str:
    return f"{format_ts(entry.ts)} {entry.level} {entry.message}"


def parse_line(node: int, line: str) -> LogEntry | None:
    parts = line.rstrip("\r\n").split(" ", 2)
    if len(parts) < 3 or not parts[2].strip():
        return None
    try:
        return LogEntry(node=node, ts=parse_ts(parts[0]), level=parts[1], message=parts[2])
    except ValueError:
        return None


# -- loading --------------------------------------------------------------------

def read_manifest(path: Path) -> dict[str, str]:
    out = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DatasetError(f"{path}: malformed manifest line {raw!r}")
        out[key.strip()] = value.strip()
    return out


def read_node_log(path: Path, node: int) -> tuple[list[LogEntry], int]:
    """Parse one node file; returns (time-sorted entries, skipped line count)."""
    entries: list[LogEntry] = []
    skipped = 0
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line in fh:
            if not line.strip():
                continue
            entry = parse_line(node, line)
            if entry is None:
                skipped += 1
            else:
                entries.append(entry)
    inversions = sum(1 for a, b in zip(entries, entries[1:]) if b.ts < a.ts)
    if inversions:
        logger.warning("%s: %d out-of-order timestamps, re-sorting", path.name, inversions)
        entries.sort(key=lambda e: e.ts)  # stable: ties keep file order
    if skipped:
        logger.warning("%s: skipped %d unparseable lines", path.name, skipped)
    return entries, skipped


def read_labels(path: Path) -> list[AnomalyLabel]:
    labels = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (row_no == 1 and row[0].strip() == LABELS_HEADER[0]):
                continue
            try:
                if len(row) != 4:
                    raise ValueError(f"expected 4 columns, got {len(row)}")
                nodes = frozenset(int(x) for x in row[3].split(";") if x.strip())
                labels.append(AnomalyLabel(int(row[0]), int(row[1]), int(row[2]), nodes))
            except ValueError as exc:
                raise DatasetError(f"{path.name} row {row_no}: {exc}") from exc
    return labels


def load_dataset(manifest_path: str | os.PathLike) -> ClusterDataset:
    root = Path(manifest_path)
    if root.is_file():
        root = root.parent
    manifest = root / "manifest.txt"
    if not manifest.is_file():
        raise DatasetError(f"no manifest.txt under {root}")
    meta = read_manifest(manifest)
    try:
        n_nodes = int(meta["n_nodes"])
        scenario = meta["scenario"]
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"{manifest}: needs integer n_nodes and scenario") from exc

    entries, skipped = [], 0
    for node in range(n_nodes):
        path = root / f"node_{node}.log"
        if not path.is_file():
            raise DatasetError(f"missing {path.name}")
        stream, bad = read_node_log(path, node)
        entries.append(stream)
        skipped += bad

    labels_path = root / "labels.csv"
    if not labels_path.is_file():
        raise DatasetError(f"missing {labels_path.name}")
    labels = read_labels(labels_path)
    try:
        return ClusterDataset(n_nodes, entries, labels, scenario, skipped=skipped)
    except ValueError as exc:
        raise DatasetError(str(exc)) from exc


# -- writing --------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def labels_to_csv(labels: Sequence[AnomalyLabel]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(LABELS_HEADER)
    for lab in labels:
        nodes = ";".join(str(n) for n in sorted(lab.nodes))
        writer.writerow([lab.start_ts, lab.end_ts, lab.anomaly_no, nodes])
    return buf.getvalue()


def write_dataset(ds: ClusterDataset, out_dir: str | os.PathLike) -> Path:
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    _atomic_write(root / "manifest.txt", f"n_nodes={ds.n_nodes}\nscenario={ds.scenario}\n")
    for node, stream in enumerate(ds.entries):
        text = "".join(format_line(e) + "\n" for e in stream)
        _atomic_write(root / f"node_{node}.log", text)
    _atomic_write(root / "labels.csv", labels_to_csv(ds.labels))
    return root
