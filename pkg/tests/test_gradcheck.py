import time

import numpy as np
import torch

from multilog import gradcheck


def test_oracle_catches_a_wrong_gradient():
    x = torch.tensor([0.3, -1.2], dtype=torch.float64, requires_grad=True)

    class Bad(torch.autograd.Function):
        @staticmethod
        def forward(ctx, v):
            ctx.save_for_backward(v)
            return (v ** 3).sum()

        @staticmethod
        def backward(ctx, g):
            (v,) = ctx.saved_tensors
            return g * 2 * v ** 2  # should be 3 v^2

    assert not gradcheck.compare("bad", lambda: Bad.apply(x), [x]).ok
    assert gradcheck.compare("good", lambda: (x ** 3).sum(), [x]).ok


def test_numeric_grad_restores_values():
    t = torch.tensor([1.0, 2.0], dtype=torch.float64)
    g = gradcheck.numeric_grad(lambda: float((t ** 2).sum()), t)
    assert np.allclose(g, [2.0, 4.0]) and t.tolist() == [1.0, 2.0]


def test_every_component_passes_quickly():
    start = time.perf_counter()
    results = gradcheck.run_all()
    assert time.perf_counter() - start < 30
    names = {r.name for r in results}
    assert {"dense", "lstm", "attention", "autoencoder", "meta_classifier", "standalone"} <= names
    assert all(r.ok for r in results), gradcheck.format_results(results)
