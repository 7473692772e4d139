"""Central finite-difference check of every trainable component against autograd.

The numerical side only ever calls forward passes under ``torch.no_grad`` so it
stays independent of the autograd graph it is checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .cluster import MetaClassifier, ProbAutoencoder
from .neural import LstmCell, init_params
from .standalone import AttentionHead, StandaloneModel

STEP = 1e-4  # float64: truncation ~h^2 and roundoff ~1e-16/h both stay far below tolerance
TOLERANCE = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_error: float
    n_checked: int

    @property
    def ok(self) -> bool:
        return self.max_rel_error < TOLERANCE


def rel_error(a: float, b: float, floor: float = 1e-7) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def numeric_grad(f: Callable[[], float], t: torch.Tensor, step: float = STEP) -> np.ndarray:
    """(f(x+h) - f(x-h)) / 2h for every entry of ``t``, perturbed in place."""
    out = np.zeros(t.numel())
    flat = t.data.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        out[i] = (up - down) / (2 * step)
    return out.reshape(t.shape)


def compare(name: str, loss: Callable[[], torch.Tensor], tensors: Iterable[torch.Tensor],
            views: list | None = None) -> CheckResult:
    """Max relative error between autograd and central differences; ``views`` can
    restrict the comparison to a slice of each tensor."""
    tensors = list(tensors)
    views = views or [None] * len(tensors)
    for t in tensors:
        t.grad = None
    loss().backward()
    analytic = [t.grad.detach().numpy().copy() for t in tensors]

    def value() -> float:
        with torch.no_grad():
            return float(loss())

    worst, n = 0.0, 0
    for t, g, view in zip(tensors, analytic, views):
        num = numeric_grad(value, t)
        if view is not None:
            g, num = view(g), view(num)
        for a, b in zip(g.ravel(), num.ravel()):
            worst = max(worst, rel_error(float(a), float(b)))
        n += g.size
    return CheckResult(name, worst, n)


def _gen(seed: int) -> torch.Generator:
    return torch.Generator().manual_seed(seed)


def _randn(*shape, gen, requires_grad=True) -> torch.Tensor:
    return torch.randn(*shape, generator=gen, dtype=torch.float64).requires_grad_(requires_grad)


def check_dense(seed: int = 0) -> CheckResult:
    g = _gen(seed)
    layer = init_params(nn.Linear(5, 3), g).double()
    x = _randn(4, 5, gen=g)
    w = _randn(4, 3, gen=g, requires_grad=False)
    return compare("dense", lambda: (layer(x) * w).sum(), [layer.weight, layer.bias, x])


def check_lstm(seed: int = 0) -> CheckResult:
    g = _gen(seed)
    cell = init_params(LstmCell(4, 3), g).double()
    with torch.no_grad():
        for name, p in cell.rnn.named_parameters():
            if name.startswith("bias"):
                p.uniform_(-0.5, 0.5, generator=g)
    x = _randn(2, 5, 4, gen=g)
    w = _randn(2, 5, 3, gen=g, requires_grad=False)
    params = [p for _, p in cell.rnn.named_parameters()]
    return compare("lstm", lambda: (cell(x) * w).sum(), params + [x])


def check_attention(seed: int = 0) -> CheckResult:
    g = _gen(seed)
    head = AttentionHead(3).double()
    with torch.no_grad():
        head.W.copy_(torch.randn(3, 3, generator=g, dtype=torch.float64))
    H = _randn(2, 6, 3, gen=g)
    w = _randn(2, 6, gen=g, requires_grad=False)
    return compare("attention", lambda: (head(H) * w).sum(), [head.W, H])


def check_losses(seed: int = 0) -> list[CheckResult]:
    g = _gen(seed)
    logits = _randn(5, 2, gen=g)
    cls = torch.tensor([0, 1, 1, 0, 1])
    z = _randn(6, gen=g)
    y = torch.tensor([0.0, 1.0, 1.0, 0.0, 0.0, 1.0], dtype=torch.float64)
    pw = torch.tensor(3.0, dtype=torch.float64)
    pred, target = _randn(4, 3, gen=g), _randn(4, 3, gen=g, requires_grad=False)
    return [
        compare("cross_entropy", lambda: F.cross_entropy(logits, cls), [logits]),
        compare("bce", lambda: F.binary_cross_entropy_with_logits(z, y, pos_weight=pw), [z]),
        compare("mse", lambda: F.mse_loss(pred, target), [pred]),
    ]


def check_autoencoder(seed: int = 0) -> CheckResult:
    ae = ProbAutoencoder(beta=8, mu=3, widths=(6, 5), seed=seed).double()
    g = _gen(seed + 1)
    with torch.no_grad():
        for m in ae.modules():
            if isinstance(m, nn.Linear):
                m.bias.uniform_(0.05, 0.3, generator=g)  # keeps ReLUs away from their kink
    x = torch.rand(4, 8, generator=g, dtype=torch.float64)
    return compare("autoencoder", lambda: F.mse_loss(ae(x), x), list(ae.parameters()))


def check_meta(seed: int = 0) -> CheckResult:
    meta = MetaClassifier(n_nodes=3, mu=2, hidden=4, seed=seed).double()
    g = _gen(seed + 1)
    with torch.no_grad():
        meta.hidden.bias.uniform_(0.1, 0.4, generator=g)
    z = _randn(5, 6, gen=g)
    y = torch.tensor([0, 1, 0, 1, 1])
    return compare("meta_classifier", lambda: F.cross_entropy(meta(z), y), list(meta.parameters()) + [z])


def check_standalone(seed: int = 0) -> CheckResult:
    g = _gen(seed + 1)
    semantic = np.random.default_rng(seed).normal(size=(6, 5))
    semantic[-2:] = 0.0
    model = StandaloneModel(4, semantic, event_dim=3, hidden_dim=3, proj_dim=3, head_dim=4, seed=seed).double()
    with torch.no_grad():
        model.head[0].bias.uniform_(0.1, 0.4, generator=g)
    ids = torch.tensor([[0, 1, 2, 3, 5, 5], [3, 3, 1, 4, 0, 2], [5, 5, 5, 5, 5, 5]])
    y = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    # padding_idx freezes the PAD row by construction, so it is left out
    skip = {"event_table.weight": lambda a: a[:model.pad_id]}
    return compare("standalone", lambda: F.binary_cross_entropy_with_logits(model(ids), y),
                   [p for _, p in model.named_parameters()],
                   views=[skip.get(n) for n, _ in model.named_parameters()])


def run_all(seed: int = 0) -> list[CheckResult]:
    results = [check_dense(seed), check_lstm(seed), check_attention(seed)]
    results += check_losses(seed)
    results += [check_autoencoder(seed), check_meta(seed), check_standalone(seed)]
    return results


def format_results(results: Iterable[CheckResult]) -> str:
    lines = [f"{r.name:<16} params={r.n_checked:<5} max_rel_err={r.max_rel_error:.2e} "
             f"{'ok' if r.ok else 'FAIL'}" for r in results]
    return "\n".join(lines)
