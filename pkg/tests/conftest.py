import numpy as np
import pytest

from flexcast.autodiff import Tape, Tensor, backward
from flexcast.data import PreparedData, SplitSpec
from flexcast.graph import build_proximity_graph, khop_subgraph
from flexcast.synthetic import generate_synthetic


def finite_difference(f, params, h=1e-5):
    """Central-difference gradient of scalar f() w.r.t. each Tensor in params.

    Independent of the tape: f is re-evaluated with perturbed entries.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = float(f())
            flat[j] = orig - h
            down = float(f())
            flat[j] = orig
            gflat[j] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def analytic_grads(make_loss, params):
    """Run one taped forward/backward; returns grads aligned with params."""
    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = make_loss(tape)
    backward(loss, tape)
    return [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]


def assert_grads_close(make_loss, params, rtol=1e-6, h=1e-5):
    """Relative comparison with a scale floor at 1% of the dominant entry.

    The floor reflects the oracle's own precision, not the engine's: central
    differences carry roundoff noise ~eps*|loss|/h, so entries far below the
    gradient's scale cannot be resolved to 1e-6 relative by any h.  A wrong
    backward rule still fails loudly (errors land on dominant entries)."""
    ana = analytic_grads(make_loss, params)
    num = finite_difference(lambda: make_loss(None).data, params, h=h)
    for p, a, n in zip(params, ana, num):
        floor = max(1e-2 * max(np.max(np.abs(a)), np.max(np.abs(n))), 1e-6)
        scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        rel = np.max(np.abs(a - n) / scale)
        assert rel < rtol, f"gradient mismatch for shape {p.shape}: {rel}"


@pytest.fixture(scope="session")
def tiny_world():
    """20 stations, 400 steps, sparsified graph, 2-hop records, prepared data."""
    stations, series = generate_synthetic(20, 400, seed=7)
    graph = build_proximity_graph(stations, 6.0, 4)
    records = {i: khop_subgraph(graph, sid, 2) for i, sid in enumerate(graph.ids)}
    data = PreparedData(stations, series, {"k": 2}, SplitSpec(seed=1))
    return data, graph, records


def make_tensor(rng, *shape):
    return Tensor(rng.standard_normal(shape))
