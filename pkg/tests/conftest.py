import numpy as np
import pytest

from smoothadv.network import NetworkSpec, init_network, unpack

ACCEPTANCE_RESULTS = []


class QuadraticModel:
    """Test surrogate: every sample's loss is ``0.5 * theta^T A theta``."""

    def __init__(self, A, scale=1.0):
        self.A = np.asarray(A, dtype=np.float64)
        self.scale = scale

    def sample_losses(self, params, inputs, labels):
        val = 0.5 * self.scale * float(params @ self.A @ params)
        return np.full(len(labels), val)

    def mean_grad(self, params, inputs, labels):
        return self.scale * (self.A @ params)

    def sample_slopes(self, params, inputs, labels, direction):
        return np.full(len(labels), self.scale * float(direction @ self.A @ params))


class ScaledModel:
    """Wraps a network spec and multiplies its loss by ``k``."""

    def __init__(self, spec, k):
        self.spec = spec
        self.k = k

    def sample_losses(self, params, inputs, labels):
        return self.k * self.spec.sample_losses(params, inputs, labels)

    def mean_grad(self, params, inputs, labels):
        return self.k * self.spec.mean_grad(params, inputs, labels)

    def sample_slopes(self, params, inputs, labels, direction):
        return self.k * self.spec.sample_slopes(params, inputs, labels, direction)


def dummy_batch(n=1):
    return np.zeros((n, 1)), np.zeros(n, dtype=int)


def random_net(sizes, seed):
    """Network with random (nonzero) biases so every parameter matters."""
    spec = NetworkSpec(tuple(sizes), seed)
    params = init_network(spec)
    rng = np.random.default_rng(seed + 1000)
    for _, b in unpack(params, spec):
        b[:] = 0.3 * rng.standard_normal(b.shape)
    return spec, params


def random_batch(spec, n, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, size=(n, spec.n_inputs)), rng.integers(0, spec.n_classes, size=n)


def logistic_net(w, b=0.0):
    """Two-logit linear model whose logit difference is ``w . x + b``."""
    w = np.asarray(w, dtype=np.float64)
    spec = NetworkSpec((w.size, 2))
    params = np.concatenate([np.zeros(w.size), w, [0.0, b]])
    return spec, params


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def fd_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture
def record_criterion():
    def record(number, name, passed, detail=""):
        ACCEPTANCE_RESULTS.append((number, name, bool(passed), detail))
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {name}: {detail}")
