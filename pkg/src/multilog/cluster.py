"""Autoencoder standardization of per-node probability lists and the
meta-classifier that labels a whole time window."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .neural import TrainConfig, TrainingError, init_params, softmax, train_epochs


def fix_length(probs: Sequence[float], beta: int = 128) -> np.ndarray:
    """Keep the most recent ``beta`` probabilities, left-padding with 0.0."""
    if beta < 1:
        raise ValueError("beta must be positive")
    p = np.asarray(probs, dtype=np.float64)[-beta:]
    out = np.zeros(beta)
    if len(p):
        out[beta - len(p):] = p
    return out


class ProbAutoencoder(nn.Module):
    def __init__(self, beta: int = 128, mu: int = 32, widths: tuple[int, int] = (96, 64), seed: int = 0):
        super().__init__()
        self.beta = beta
        self.mu = mu
        w1, w2 = widths
        self.encoder = nn.Sequential(nn.Linear(beta, w1), nn.ReLU(), nn.Linear(w1, w2), nn.ReLU(),
                                     nn.Linear(w2, mu))
        self.decoder = nn.Sequential(nn.Linear(mu, w2), nn.ReLU(), nn.Linear(w2, w1), nn.ReLU(),
                                     nn.Linear(w1, beta))
        init_params(self, torch.Generator().manual_seed(seed))

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return self.encoder(x)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return self.decoder(z)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.decoder(self.encoder(x))


def _dtype(module: nn.Module) -> torch.dtype:
    return next(module.parameters()).dtype


def stack_lists(lists: Sequence[Sequence[float]], beta: int) -> np.ndarray:
    if not lists:
        return np.zeros((0, beta))
    return np.stack([fix_length(p, beta) for p in lists])


@torch.no_grad()
def encode(ae: ProbAutoencoder, probs: Sequence[float] | Sequence[Sequence[float]]) -> np.ndarray:
    """Latent Z for one probability list, or (K, mu) latents for a list of lists."""
    ae.eval()
    single = len(probs) == 0 or np.isscalar(probs[0])
    batch = stack_lists([probs] if single else probs, ae.beta)
    z = ae.encode(torch.as_tensor(batch, dtype=_dtype(ae))).double().numpy()
    return z[0] if single else z


@torch.no_grad()
def reconstruct(ae: ProbAutoencoder, probs: Sequence[float]) -> np.ndarray:
    x = torch.as_tensor(fix_length(probs, ae.beta)[None, :], dtype=_dtype(ae))
    return ae(x)[0].double().numpy()


def train_autoencoder(ae: ProbAutoencoder, lists: Sequence[Sequence[float]],
                      cfg: TrainConfig | None = None) -> list[float]:
    """MSE between fix_length(P_i) and its reconstruction; returns the loss curve."""
    cfg = cfg or TrainConfig()
    if not lists:
        raise TrainingError("autoencoder training needs at least one probability list")
    x = torch.as_tensor(stack_lists(lists, ae.beta), dtype=_dtype(ae))
    return train_epochs(ae, [x], x, F.mse_loss, cfg)


@torch.no_grad()
def reconstruction_mse(ae: ProbAutoencoder, lists: Sequence[Sequence[float]]) -> float:
    ae.eval()
    x = torch.as_tensor(stack_lists(lists, ae.beta), dtype=_dtype(ae))
    return F.mse_loss(ae(x), x).item()


class MetaClassifier(nn.Module):
    """One hidden layer over the concatenated node latents, two output logits."""

    def __init__(self, n_nodes: int, mu: int = 32, hidden: int = 64, seed: int = 0):
        super().__init__()
        self.n_nodes = n_nodes
        self.mu = mu
        self.hidden = nn.Linear(n_nodes * mu, hidden)
        self.output = nn.Linear(hidden, 2)
        init_params(self, torch.Generator().manual_seed(seed))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[-1] != self.n_nodes * self.mu:
            z = z.reshape(*z.shape[:-2], -1)
        if z.shape[-1] != self.n_nodes * self.mu:
            raise ValueError(f"meta-classifier expects {self.n_nodes} x {self.mu} latents")
        return self.output(torch.relu(self.hidden(z)))


@dataclass(frozen=True)
class ClusterVerdict:
    p_normal: float
    p_anomalous: float

    @property
    def label(self) -> bool:
        return self.p_anomalous > self.p_normal


def concat_latents(latents: Sequence[np.ndarray | None], n_nodes: int, mu: int) -> np.ndarray:
    if len(latents) != n_nodes:
        raise ValueError(f"expected {n_nodes} node latents, got {len(latents)}")
    rows = [np.zeros(mu) if z is None else np.asarray(z, dtype=np.float64) for z in latents]
    for i, z in enumerate(rows):
        if z.shape != (mu,):
            raise ValueError(f"node {i} latent has shape {z.shape}, expected ({mu},)")
    return np.concatenate(rows)


@torch.no_grad()
def classify_cluster(meta: MetaClassifier, latents: Sequence[np.ndarray | None]) -> ClusterVerdict:
    """Verdict for one window; ``None`` stands for a node absent from the window."""
    meta.eval()
    z = torch.as_tensor(concat_latents(latents, meta.n_nodes, meta.mu), dtype=_dtype(meta))
    p = softmax(meta(z[None, :]))[0].double()
    return ClusterVerdict(float(p[0]), float(p[1]))


@torch.no_grad()
def predict_windows(meta: MetaClassifier, latents: np.ndarray) -> np.ndarray:
    """Anomalous-class probability for a (W, N, mu) latent array."""
    meta.eval()
    if len(latents) == 0:
        return np.zeros(0)
    z = torch.as_tensor(latents.reshape(len(latents), -1), dtype=_dtype(meta))
    return softmax(meta(z))[:, 1].double().numpy()


def train_meta(meta: MetaClassifier, latents: np.ndarray, labels: Sequence[bool],
               cfg: TrainConfig | None = None) -> list[float]:
    """Cross-entropy on window labels given frozen (W, N, mu) latents."""
    cfg = cfg or TrainConfig()
    y = torch.as_tensor(np.asarray(labels, dtype=np.int64))
    if len(torch.unique(y)) < 2:
        raise TrainingError("meta-classifier training needs both normal and anomalous windows")
    x = torch.as_tensor(np.asarray(latents).reshape(len(y), -1), dtype=_dtype(meta))
    return train_epochs(meta, [x], y, F.cross_entropy, cfg)
