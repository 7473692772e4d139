"""Per-node estimator: three attention-enhanced LSTM branches over the
sequential, quantitative and semantic views of a group, fused into one
anomaly probability."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .embeddings import EventEmbeddingTable, running_counts
from .neural import LstmCell, TrainConfig, TrainingError, init_params, softmax, train_epochs
from .windowing import Group

MAX_POS_WEIGHT = 20.0


class AttentionHead(nn.Module):
    """score(h_m, h_M) = h_m^T W h_M over the hidden states of one branch."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.W = nn.Parameter(torch.empty(hidden_dim, hidden_dim))
        bound = 1.0 / math.sqrt(hidden_dim)
        nn.init.uniform_(self.W, -bound, bound)

    def weights(self, H: torch.Tensor) -> torch.Tensor:
        last = H[..., -1, :]
        scores = torch.einsum("...md,de,...e->...m", H, self.W, last)
        return softmax(scores, dim=-1)

    def forward(self, H: torch.Tensor) -> torch.Tensor:
        alpha = self.weights(H)
        context = torch.einsum("...m,...md->...d", alpha, H)
        return torch.cat([context, H[..., -1, :]], dim=-1)


def attend(H: torch.Tensor, attn: AttentionHead) -> torch.Tensor:
    """Enhanced vector [c; h_M] of size 2*d_h for an (M, d_h) or (B, M, d_h) input."""
    if H.shape[-2] < 1:
        raise ValueError("attention needs at least one hidden state")
    return attn(H)


class Branch(nn.Module):
    def __init__(self, name: str, input_dim: int, hidden_dim: int, proj_dim: int | None):
        super().__init__()
        self.name = name
        self.proj = nn.Linear(input_dim, proj_dim) if proj_dim else None
        self.lstm = LstmCell(proj_dim or input_dim, hidden_dim)
        self.attn = AttentionHead(hidden_dim)
        self.input_dim = input_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"{self.name} branch expects input dim {self.input_dim}, got {x.shape[-1]}")
        if self.proj is not None:
            x = self.proj(x)
        return self.attn(self.lstm(x))


class StandaloneModel(nn.Module):
    """Maps a (B, M) tensor of event ids to (B,) anomaly logits."""

    def __init__(self, n_templates: int, semantic: np.ndarray, event_dim: int = 32,
                 hidden_dim: int = 64, proj_dim: int = 64, head_dim: int = 64, seed: int = 0):
        super().__init__()
        if semantic.shape[0] != n_templates + 2:
            raise ValueError(f"semantic table has {semantic.shape[0]} rows, expected {n_templates + 2}")
        self.n_templates = n_templates
        self.hparams = dict(event_dim=event_dim, hidden_dim=hidden_dim, proj_dim=proj_dim, head_dim=head_dim)
        self.register_buffer("semantic", torch.as_tensor(semantic, dtype=torch.get_default_dtype()))
        self.event_table = EventEmbeddingTable(n_templates, event_dim)
        self.seq = Branch("sequential", event_dim, hidden_dim, None)
        self.quant = Branch("quantitative", n_templates + 1, hidden_dim, proj_dim)
        self.sem = Branch("semantic", semantic.shape[1], hidden_dim, proj_dim)
        self.head = nn.Sequential(nn.Linear(6 * hidden_dim, head_dim), nn.ReLU(), nn.Linear(head_dim, 1))
        gen = torch.Generator().manual_seed(seed)
        init_params(self, gen)
        for branch in (self.seq, self.quant, self.sem):
            bound = 1.0 / math.sqrt(hidden_dim)
            with torch.no_grad():
                branch.attn.W.uniform_(-bound, bound, generator=gen)

    @property
    def pad_id(self) -> int:
        return self.n_templates + 1

    def enhanced(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.min() < 0 or ids.max() > self.pad_id:
            raise ValueError(f"sequential branch: event ids must lie in 0..{self.pad_id}")
        ec_e = self.seq(self.event_table(ids))
        ec_c = self.quant(running_counts(ids, self.n_templates).to(self.semantic.dtype))
        ec_v = self.sem(self.semantic[ids])
        return torch.cat([ec_e, ec_c, ec_v], dim=-1)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.head(self.enhanced(ids)).squeeze(-1)


def group_matrix(groups: Sequence[Group]) -> np.ndarray:
    if not groups:
        return np.zeros((0, 0), dtype=np.int64)
    return np.stack([g.events for g in groups])


@torch.no_grad()
def predict_proba(model: StandaloneModel, ids: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    model.eval()
    if len(ids) == 0:
        return np.zeros(0)
    out = []
    for start in range(0, len(ids), batch_size):
        chunk = torch.as_tensor(ids[start:start + batch_size], dtype=torch.long)
        out.append(torch.sigmoid(model(chunk)).double().numpy())
    return np.concatenate(out)


def estimate_group(model: StandaloneModel, events: Sequence[int] | Group) -> float:
    if isinstance(events, Group):
        events = events.events
    return float(predict_proba(model, np.asarray(events, dtype=np.int64)[None, :])[0])


def probability_list(model: StandaloneModel, groups: Sequence[Group]) -> list[float]:
    """P_i for one node and window, in group order."""
    return predict_proba(model, group_matrix(groups)).tolist() if groups else []


def positive_weight(labels: np.ndarray) -> float:
    pos = float(labels.sum())
    neg = float(len(labels) - pos)
    if pos == 0 or neg == 0:
        raise TrainingError("standalone training needs both normal and anomalous groups")
    return min(neg / pos, MAX_POS_WEIGHT)


def train_standalone(model: StandaloneModel, ids: np.ndarray | Sequence[Group],
                     labels: np.ndarray | None = None, cfg: TrainConfig | None = None) -> list[float]:
    """Weighted binary cross-entropy training; returns the per-epoch loss curve."""
    cfg = cfg or TrainConfig()
    if labels is None:
        groups = list(ids)
        ids = group_matrix(groups)
        labels = np.array([g.label for g in groups])
    labels = np.asarray(labels, dtype=np.float64)
    pos_weight = torch.tensor(positive_weight(labels), dtype=model.semantic.dtype)

    def loss_fn(logits, target):
        return F.binary_cross_entropy_with_logits(logits, target, pos_weight=pos_weight)

    x = torch.as_tensor(ids, dtype=torch.long)
    y = torch.as_tensor(labels, dtype=model.semantic.dtype)
    return train_epochs(model, [x], y, loss_fn, cfg)
