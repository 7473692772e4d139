"""Label aggregation strategies that combine independent per-node verdicts."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .metrics import ConfusionCounts, prf1

THRESHOLD = 0.5


def node_label(probs: Sequence[float], threshold: float = THRESHOLD) -> int:
    """1 iff the node's highest group probability in the window reaches the threshold."""
    return int(len(probs) > 0 and max(probs) >= threshold)


def single_point(labels: Sequence[int]) -> int:
    return int(any(labels))


def vote_based(labels: Sequence[int]) -> int:
    return int(sum(labels) > len(labels) / 2)


def select_best_node(node_streams: np.ndarray, truth: Sequence[bool]) -> int:
    """Index of the node whose label stream has the highest F1; ties go to the lowest id."""
    streams = np.asarray(node_streams)
    scores = [prf1(ConfusionCounts.from_labels(truth, streams[:, i].astype(bool)))[2]
              for i in range(streams.shape[1])]
    return int(np.argmax(scores))  # argmax returns the first maximum


def best_node(node_streams: np.ndarray, truth: Sequence[bool]) -> tuple[np.ndarray, int]:
    """Cluster labels copied from the best node; ``node_streams`` is (windows, nodes)."""
    streams = np.asarray(node_streams)
    idx = select_best_node(streams, truth)
    return streams[:, idx].astype(int), idx
