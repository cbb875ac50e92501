import numpy as np
import pytest

from marginsphere.network import Layer, Network, init_network
from marginsphere.sphere import ABNORMAL, NORMAL


def random_network(rng, in_dim=None, hidden=None, unit_w=False):
    """A random small network; unit_w rescales final_w onto w^T w = 4."""
    if in_dim is None:
        in_dim = int(rng.integers(1, 6))
    if hidden is None:
        depth = int(rng.integers(1, 4))
        hidden = tuple(int(rng.integers(1, 9)) for _ in range(depth))
    net = init_network(in_dim, hidden, rng)
    # perturb away from the fresh-init special points (b = 0, rho_bar = 1)
    for layer in net.layers:
        layer.bias += rng.normal(scale=0.3, size=layer.bias.shape)
    net.final_b = float(rng.normal(scale=0.5))
    net.rho_bar = float(rng.normal(loc=1.0, scale=0.5))
    if not unit_w:
        net.final_w = rng.normal(size=net.phi_dim)
        if np.linalg.norm(net.final_w) < 1e-6:
            net.final_w[0] = 1.0
    return net


def random_labels(rng, n):
    """Labels with at least one normal row (batch precondition)."""
    y = rng.choice([NORMAL, ABNORMAL], size=n)
    y[int(rng.integers(0, n))] = NORMAL
    return y


def flatten_params(net):
    parts = []
    for layer in net.layers:
        parts.append(layer.weight.ravel())
        parts.append(layer.bias.ravel())
    parts.append(net.final_w.ravel())
    parts.append(np.array([net.final_b, net.rho_bar]))
    return np.concatenate(parts)


def set_params(net, theta):
    pos = 0
    for layer in net.layers:
        for arr in (layer.weight, layer.bias):
            size = arr.size
            arr[...] = theta[pos:pos + size].reshape(arr.shape)
            pos += size
    size = net.final_w.size
    net.final_w[...] = theta[pos:pos + size]
    pos += size
    net.final_b = float(theta[pos])
    net.rho_bar = float(theta[pos + 1])


def flatten_grads(grads):
    parts = []
    for w, b in zip(grads.weights, grads.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    parts.append(grads.final_w.ravel())
    parts.append(np.array([grads.final_b, grads.rho_bar]))
    return np.concatenate(parts)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one PASS/FAIL line per acceptance criterion, shown after the test summary
CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
