"""Shared neural building blocks, training loop and checkpoint IO."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        # lr == 0 is accepted so a run can be replayed without moving parameters
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


def init_params(module: nn.Module, generator: torch.Generator | None = None) -> nn.Module:
    """Fan-in scaled uniform weights and zero biases for every submodule."""
    for sub in module.modules():
        if isinstance(sub, nn.Linear):
            bound = 1.0 / math.sqrt(sub.in_features)
            with torch.no_grad():
                sub.weight.uniform_(-bound, bound, generator=generator)
                if sub.bias is not None:
                    sub.bias.zero_()
        elif isinstance(sub, nn.LSTM):
            with torch.no_grad():
                for name, p in sub.named_parameters():
                    if name.startswith("weight_ih"):
                        p.uniform_(-1 / math.sqrt(sub.input_size), 1 / math.sqrt(sub.input_size),
                                   generator=generator)
                    elif name.startswith("weight_hh"):
                        p.uniform_(-1 / math.sqrt(sub.hidden_size), 1 / math.sqrt(sub.hidden_size),
                                   generator=generator)
                    else:
                        p.zero_()
        elif isinstance(sub, nn.Embedding):
            with torch.no_grad():
                sub.weight.uniform_(-1.0, 1.0, generator=generator)
                if sub.padding_idx is not None:
                    sub.weight[sub.padding_idx].zero_()
    return module


class LstmCell(nn.Module):
    """Single-layer LSTM run from a zero state; returns every hidden state."""

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.rnn = nn.LSTM(input_dim, hidden_dim, batch_first=True)

    def forward(self, inputs: torch.Tensor) -> torch.Tensor:
        if inputs.shape[-1] != self.input_dim:
            raise ValueError(f"LSTM expects input dim {self.input_dim}, got {inputs.shape[-1]}")
        H, _ = self.rnn(inputs)
        return H


def lstm_forward(cell: LstmCell, inputs: torch.Tensor) -> torch.Tensor:
    """Hidden states for an (M, d) or (B, M, d) input sequence."""
    if inputs.dim() == 2:
        return cell(inputs.unsqueeze(0)).squeeze(0)
    return cell(inputs)


def softmax(scores: torch.Tensor, dim: int = -1) -> torch.Tensor:
    z = scores - scores.max(dim=dim, keepdim=True).values
    e = torch.exp(z)
    return e / e.sum(dim=dim, keepdim=True)


LOSSES: dict[str, Callable[..., torch.Tensor]] = {
    "cross_entropy": F.cross_entropy,
    "bce": F.binary_cross_entropy_with_logits,
    "mse": F.mse_loss,
}


def make_optimizer(model: nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    params = [p for p in model.parameters() if p.requires_grad]
    return torch.optim.Adam(params, lr=cfg.learning_rate)


def train_step(model: nn.Module, optimizer: torch.optim.Optimizer,
               loss_fn: Callable[[torch.Tensor, torch.Tensor], torch.Tensor],
               inputs: Sequence[torch.Tensor], targets: torch.Tensor,
               clip_norm: float = 5.0) -> float:
    """One clipped Adam update; returns the pre-update loss."""
    optimizer.zero_grad()
    loss = loss_fn(model(*inputs), targets)
    if not torch.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss.item()} in {type(model).__name__}")
    loss.backward()
    if clip_norm:
        nn.utils.clip_grad_norm_(model.parameters(), clip_norm)
    optimizer.step()
    return loss.item()


def train_epochs(model: nn.Module, inputs: Sequence[torch.Tensor], targets: torch.Tensor,
                 loss_fn: Callable, cfg: TrainConfig) -> list[float]:
    """Shuffled minibatch training; returns the sample-weighted mean loss per epoch."""
    n = len(targets)
    gen = torch.Generator().manual_seed(cfg.seed)
    optimizer = make_optimizer(model, cfg)
    curve = []
    model.train()
    for _ in range(cfg.epochs):
        order = torch.randperm(n, generator=gen)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch = [x[idx] for x in inputs]
            total += train_step(model, optimizer, loss_fn, batch, targets[idx], cfg.clip_norm) * len(idx)
        curve.append(total / n)
    model.eval()
    return curve


# -- checkpoints -------------------------------------------------------------------

def save_checkpoint(path: str | os.PathLike, modules: Mapping[str, nn.Module],
                    meta: Mapping | None = None, arrays: Mapping[str, np.ndarray] | None = None) -> None:
    """Write named parameter/buffer arrays plus a JSON metadata blob to an .npz file."""
    payload = {}
    for prefix, module in modules.items():
        for name, tensor in module.state_dict().items():
            payload[f"{prefix}/{name}"] = tensor.detach().cpu().numpy()
    for name, arr in (arrays or {}).items():
        payload[f"@{name}"] = np.asarray(arr)
    payload["__meta__"] = np.frombuffer(json.dumps(dict(meta or {}), sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def read_checkpoint(path: str | os.PathLike) -> tuple[dict, dict[str, dict[str, np.ndarray]], dict[str, np.ndarray]]:
    """Returns (meta, {module prefix: state arrays}, extra arrays)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        states: dict[str, dict[str, np.ndarray]] = {}
        extras = {}
        for key in data.files:
            if key == "__meta__":
                continue
            if key.startswith("@"):
                extras[key[1:]] = data[key]
                continue
            prefix, _, name = key.partition("/")
            states.setdefault(prefix, {})[name] = data[key]
    return meta, states, extras


def load_state(module: nn.Module, state: Mapping[str, np.ndarray]) -> nn.Module:
    module.load_state_dict({k: torch.from_numpy(np.array(v)) for k, v in state.items()})
    return module


def config_dict(cfg) -> dict:
    return asdict(cfg)
