"""Fixed-architecture MLP with analytic reverse-mode gradients and Adam.

The network is a stack of fully connected hidden layers producing the
representation phi(x), followed by a single linear output unit
g(x) = w^T phi(x) + b. A scalar rho_bar (squared margin) rides along as an
extra trainable parameter so the whole model is one parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError

LEAKY_SLOPE = 0.01
ACTIVATIONS = ("relu", "leaky_relu", "identity")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _activate(z, tag):
    if tag == "relu":
        return np.maximum(z, 0.0)
    if tag == "leaky_relu":
        return np.where(z > 0.0, z, LEAKY_SLOPE * z)
    if tag == "identity":
        return z
    raise ValueError(f"unknown activation {tag!r}")


def _activate_grad(z, tag):
    # Kink convention: the one-sided derivative from the left at z == 0.
    if tag == "relu":
        return (z > 0.0).astype(z.dtype)
    if tag == "leaky_relu":
        return np.where(z > 0.0, 1.0, LEAKY_SLOPE)
    if tag == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {tag!r}")


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "leaky_relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ShapeError("layer weight must be 2-D and bias 1-D")
        if self.weight.shape[1] != self.bias.shape[0]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != fan_out {self.weight.shape[1]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class Network:
    layers: list[Layer]
    final_w: np.ndarray  # (p,)
    final_b: float
    rho_bar: float

    def __post_init__(self):
        self.final_w = np.asarray(self.final_w, dtype=np.float64)
        if not self.layers:
            raise ShapeError("network needs at least one hidden layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ShapeError(
                    f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        if self.final_w.shape != (self.layers[-1].weight.shape[1],):
            raise ShapeError(
                f"final_w length {self.final_w.shape} != representation dim "
                f"{self.layers[-1].weight.shape[1]}"
            )

    @property
    def in_dim(self):
        return self.layers[0].weight.shape[0]

    @property
    def phi_dim(self):
        return self.layers[-1].weight.shape[1]

    def copy(self):
        return Network(
            layers=[Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            final_w=self.final_w.copy(),
            final_b=self.final_b,
            rho_bar=self.rho_bar,
        )


def init_network(in_dim, hidden_dims, rng, activation="leaky_relu"):
    """Build a freshly initialized network.

    Hidden weights are uniform in +-sqrt(6/fan_in); the last hidden layer uses
    the identity activation so the representation spans all of R^p. The output
    weight w starts on the sphere w^T w = 4 (a feasible point of the training
    constraint), b at 0 and rho_bar at 1.
    """
    if in_dim < 1 or not hidden_dims:
        raise ShapeError("need in_dim >= 1 and at least one hidden width")
    layers = []
    fan_in = in_dim
    for i, width in enumerate(hidden_dims):
        bound = np.sqrt(6.0 / fan_in)
        weight = rng.uniform(-bound, bound, size=(fan_in, width))
        act = "identity" if i == len(hidden_dims) - 1 else activation
        layers.append(Layer(weight, np.zeros(width), act))
        fan_in = width
    direction = rng.normal(size=fan_in)
    direction /= np.linalg.norm(direction)
    return Network(layers=layers, final_w=2.0 * direction, final_b=0.0, rho_bar=1.0)


def _forward_cached(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("X must be 2-D (rows are samples)")
    if X.shape[1] != net.in_dim:
        raise ShapeError(f"input dim {X.shape[1]} != network in_dim {net.in_dim}")
    caches = []
    a = X
    for layer in net.layers:
        z = a @ layer.weight + layer.bias
        caches.append((a, z))
        a = _activate(z, layer.activation)
    g = a @ net.final_w + net.final_b
    return a, g, caches


def forward_batch(net, X):
    """Representations and output values for every row of X."""
    phi, g, _ = _forward_cached(net, X)
    return phi, g


def forward(net, x):
    """Single-sample forward pass: (phi(x), g(x))."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("x must be 1-D")
    phi, g = forward_batch(net, x[None, :])
    return phi[0], float(g[0])


@dataclass
class HeadGradients:
    """Loss value and its partials at the network head.

    d_phi excludes the path through g; the backward pass adds d_g * w itself.
    d_final_w / d_final_b are the direct contributions only (terms that touch
    w or b outside of g). weight_decay is the coefficient lambda applied to
    hidden-layer weight matrices.
    """

    loss: float
    d_phi: np.ndarray
    d_g: np.ndarray
    d_final_w: np.ndarray
    d_final_b: float
    d_rho_bar: float
    weight_decay: float = 0.0


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    final_w: np.ndarray
    final_b: float
    rho_bar: float

    @classmethod
    def zeros_like(cls, net):
        return cls(
            weights=[np.zeros_like(l.weight) for l in net.layers],
            biases=[np.zeros_like(l.bias) for l in net.layers],
            final_w=np.zeros_like(net.final_w),
            final_b=0.0,
            rho_bar=0.0,
        )


def backward(net, X, y, loss_spec):
    """Analytic gradient of a scalar loss over a batch.

    loss_spec is any object exposing head(net, Phi, g, y) -> HeadGradients;
    the loss definitions live in the sphere module. Returns (loss, Gradients).
    """
    phi, g, caches = _forward_cached(net, X)
    head = loss_spec.head(net, phi, g, y)
    loss = head.loss
    lam = head.weight_decay
    if lam:
        decay = 0.5 * lam * sum(float(np.sum(l.weight**2)) for l in net.layers)
        if not np.isfinite(decay):
            raise NumericError("weight decay term is non-finite")
        loss += decay
    if not np.isfinite(loss):
        raise NumericError("total loss is non-finite")

    grads = Gradients.zeros_like(net)
    grads.final_w = phi.T @ head.d_g + head.d_final_w
    grads.final_b = float(np.sum(head.d_g)) + head.d_final_b
    grads.rho_bar = head.d_rho_bar

    delta = head.d_phi + head.d_g[:, None] * net.final_w[None, :]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        a_in, z = caches[i]
        dz = delta * _activate_grad(z, layer.activation)
        grads.weights[i] = a_in.T @ dz
        if lam:
            grads.weights[i] += lam * layer.weight
        grads.biases[i] = dz.sum(axis=0)
        delta = dz @ layer.weight.T
    return loss, grads


@dataclass
class AdamState:
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]
    m_final_w: np.ndarray
    v_final_w: np.ndarray
    m_final_b: float = 0.0
    v_final_b: float = 0.0
    m_rho_bar: float = 0.0
    v_rho_bar: float = 0.0
    t: int = 0

    @classmethod
    def for_network(cls, net):
        return cls(
            m_weights=[np.zeros_like(l.weight) for l in net.layers],
            v_weights=[np.zeros_like(l.weight) for l in net.layers],
            m_biases=[np.zeros_like(l.bias) for l in net.layers],
            v_biases=[np.zeros_like(l.bias) for l in net.layers],
            m_final_w=np.zeros_like(net.final_w),
            v_final_w=np.zeros_like(net.final_w),
        )


def _adam_delta(m, v, grad, t, lr):
    m_new = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
    v_new = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m_new / (1.0 - ADAM_BETA1**t)
    v_hat = v_new / (1.0 - ADAM_BETA2**t)
    return m_new, v_new, -lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def adam_step(net, grads, state, lr):
    """One in-place Adam update (bias-corrected, beta1=0.9, beta2=0.999)."""
    if lr <= 0.0:
        raise ValueError("lr must be positive")
    state.t += 1
    t = state.t
    for i, layer in enumerate(net.layers):
        if grads.weights[i].shape != layer.weight.shape:
            raise ShapeError(f"gradient shape mismatch at layer {i}")
        state.m_weights[i], state.v_weights[i], dw = _adam_delta(
            state.m_weights[i], state.v_weights[i], grads.weights[i], t, lr
        )
        layer.weight += dw
        state.m_biases[i], state.v_biases[i], db = _adam_delta(
            state.m_biases[i], state.v_biases[i], grads.biases[i], t, lr
        )
        layer.bias += db
    if grads.final_w.shape != net.final_w.shape:
        raise ShapeError("gradient shape mismatch on final_w")
    state.m_final_w, state.v_final_w, dfw = _adam_delta(
        state.m_final_w, state.v_final_w, grads.final_w, t, lr
    )
    net.final_w += dfw
    state.m_final_b, state.v_final_b, dfb = _adam_delta(
        state.m_final_b, state.v_final_b, grads.final_b, t, lr
    )
    net.final_b += dfb
    state.m_rho_bar, state.v_rho_bar, drho = _adam_delta(
        state.m_rho_bar, state.v_rho_bar, grads.rho_bar, t, lr
    )
    net.rho_bar += drho
