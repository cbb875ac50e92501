"""The detection head: hypersphere/final-layer equivalence, losses, scores.

The final linear layer doubles as the hypersphere: center c = -w/2 and
squared radius R_bar = 1 - b once w^T w = 4 is enforced. All loss functions
are exposed both as plain evaluators and as loss-spec objects consumed by
network.backward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstraintError,
    DomainError,
    InvalidBatchError,
    NuBoundError,
    NumericError,
)
from .network import HeadGradients, forward, forward_batch

NORMAL = 1
ABNORMAL = -1

W_NORM_TARGET = 4.0  # required squared norm of the final-layer weight


@dataclass(frozen=True)
class NuParams:
    nu: float
    nu1: float
    nu2: float
    weight_decay: float = 5e-6


@dataclass
class Multipliers:
    """Lagrangian state: alpha is sign-free, beta and gamma stay >= 0."""

    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0


@dataclass(frozen=True)
class HypersphereView:
    """Geometry read out of the final layer.

    R_bar and rho_bar are reported raw (possibly negative mid-training); T is
    computed with both clamped at zero inside the square roots.
    """

    c: np.ndarray
    R_bar: float
    rho_bar: float
    T: float

    @property
    def clamped(self):
        return self.R_bar < 0.0 or self.rho_bar < 0.0


def validate_nu(params):
    """Reject (nu, nu1, nu2) combinations outside the admissible region."""
    if params.nu < 0.0:
        raise NuBoundError(f"nu must be >= 0, got {params.nu}")
    if params.nu1 <= 0.0 or params.nu2 <= 0.0:
        raise NuBoundError(f"nu1 and nu2 must be positive, got {params.nu1}, {params.nu2}")
    limit1 = 1.0 / (params.nu + 1.0)
    if params.nu1 > limit1:
        raise NuBoundError(f"nu1 = {params.nu1} exceeds 1/(nu+1) = {limit1}")
    if params.nu > 0.0:
        limit2 = 1.0 / params.nu
        if params.nu2 > limit2:
            raise NuBoundError(f"nu2 = {params.nu2} exceeds 1/nu = {limit2}")
    if params.weight_decay < 0.0:
        raise DomainError(f"weight_decay must be >= 0, got {params.weight_decay}")


def decision_radius(R_bar, rho_bar):
    """T = R_bar + (sqrt(R_bar + rho_bar) - sqrt(R_bar)) / 2, clamped inputs."""
    r = max(R_bar, 0.0)
    rho = max(rho_bar, 0.0)
    return r + (math.sqrt(r + rho) - math.sqrt(r)) / 2.0


def view_hypersphere(net):
    c = -0.5 * net.final_w
    R_bar = 1.0 - net.final_b
    rho_bar = net.rho_bar
    return HypersphereView(c=c, R_bar=R_bar, rho_bar=rho_bar,
                           T=decision_radius(R_bar, rho_bar))


def equivalence_residual(net, x):
    """|(||phi - c||^2 - R_bar) - (g + ||phi||^2)| for one input.

    Valid only on the constraint surface w^T w = 4; off it the two sides
    genuinely differ, so the deviation is reported instead of a meaningless
    residual.
    """
    w_sq = float(net.final_w @ net.final_w)
    if abs(w_sq - W_NORM_TARGET) > 1e-9:
        raise ConstraintError(
            f"||w||^2 = {w_sq!r} deviates from 4 by {w_sq - W_NORM_TARGET!r}"
        )
    view = view_hypersphere(net)
    phi, g = forward(net, x)
    lhs = float(np.sum((phi - view.c) ** 2)) - view.R_bar
    rhs = g + float(np.sum(phi**2))
    return abs(lhs - rhs)


def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise NumericError(f"{name} term is non-finite")
    return value


def _split_labels(y, n):
    y = np.asarray(y)
    if y.shape != (n,):
        raise InvalidBatchError(f"label vector shape {y.shape} != ({n},)")
    normal = y == NORMAL
    abnormal = y == ABNORMAL
    if not np.all(normal | abnormal):
        raise InvalidBatchError("labels must be +1 (normal) or -1 (abnormal)")
    return normal, abnormal


class ImdadLoss:
    """Full Lagrangian objective over a labeled batch.

    value = 1 - b - nu*rho_bar
            + (1 / (nu1 * m_b)) sum_normal  max{0, ||phi||^2 + g}
            + (1 / (nu2 * n_b)) sum_abnormal max{0, rho_bar - ||phi||^2 - g}
            + alpha (w^T w - 4) + beta (b - 1) - gamma rho_bar
            [+ weight decay, added by backward]

    m_b and n_b are the within-batch class counts; a batch without abnormal
    rows simply drops the abnormal hinge.
    """

    def __init__(self, nu_params, multipliers):
        self.nu_params = nu_params
        self.multipliers = multipliers

    def head(self, net, phi, g, y):
        p = self.nu_params
        mult = self.multipliers
        n = phi.shape[0]
        normal, abnormal = _split_labels(y, n)
        m_b = int(normal.sum())
        n_b = int(abnormal.sum())
        if m_b == 0:
            raise InvalidBatchError("batch has no normal rows")

        norm_sq = np.sum(phi**2, axis=1)
        loss = _check_finite("volume", 1.0 - net.final_b - p.nu * net.rho_bar)

        d_phi = np.zeros_like(phi)
        d_g = np.zeros(n)
        d_rho = -p.nu

        h_normal = norm_sq + g
        act_n = normal & (h_normal > 0.0)
        coef_n = 1.0 / (p.nu1 * m_b)
        loss += _check_finite("normal hinge", coef_n * float(np.sum(h_normal[act_n])))
        d_phi[act_n] += coef_n * 2.0 * phi[act_n]
        d_g[act_n] += coef_n

        if n_b > 0:
            h_abn = net.rho_bar - norm_sq - g
            act_a = abnormal & (h_abn > 0.0)
            coef_a = 1.0 / (p.nu2 * n_b)
            loss += _check_finite("abnormal hinge", coef_a * float(np.sum(h_abn[act_a])))
            d_phi[act_a] -= coef_a * 2.0 * phi[act_a]
            d_g[act_a] -= coef_a
            d_rho += coef_a * int(np.sum(act_a))

        w_sq = float(net.final_w @ net.final_w)
        loss += _check_finite(
            "multiplier",
            mult.alpha * (w_sq - W_NORM_TARGET)
            + mult.beta * (net.final_b - 1.0)
            - mult.gamma * net.rho_bar,
        )
        return HeadGradients(
            loss=loss,
            d_phi=d_phi,
            d_g=d_g,
            d_final_w=2.0 * mult.alpha * net.final_w,
            d_final_b=-1.0 + mult.beta,
            d_rho_bar=d_rho - mult.gamma,
            weight_decay=p.weight_decay,
        )


class ExplicitSphereLoss:
    """Margin objective with explicit, non-trained sphere parameters.

    value = R_bar - nu*rho_bar
            + (1 / (nu1 * m_b)) sum_normal  max{0, ||phi - c||^2 - R_bar}
            + (1 / (nu2 * n_b)) sum_abnormal max{0, R_bar + rho_bar - ||phi - c||^2}
            [+ weight decay]

    Only the hidden weights receive gradients; (c, R_bar, rho_bar) are inputs.
    """

    def __init__(self, nu_params, c, R_bar, rho_bar):
        if R_bar <= 0.0:
            raise DomainError(f"R_bar must be > 0, got {R_bar}")
        if rho_bar <= 0.0:
            raise DomainError(f"rho_bar must be > 0, got {rho_bar}")
        self.nu_params = nu_params
        self.c = np.asarray(c, dtype=np.float64)
        self.R_bar = float(R_bar)
        self.rho_bar = float(rho_bar)

    def head(self, net, phi, g, y):
        p = self.nu_params
        n = phi.shape[0]
        normal, abnormal = _split_labels(y, n)
        m_b = int(normal.sum())
        n_b = int(abnormal.sum())
        if m_b == 0:
            raise InvalidBatchError("batch has no normal rows")

        diff = phi - self.c
        dist_sq = np.sum(diff**2, axis=1)
        loss = _check_finite("volume", self.R_bar - p.nu * self.rho_bar)
        d_phi = np.zeros_like(phi)

        act_n = normal & (dist_sq - self.R_bar > 0.0)
        coef_n = 1.0 / (p.nu1 * m_b)
        loss += _check_finite(
            "normal hinge", coef_n * float(np.sum(dist_sq[act_n] - self.R_bar))
        )
        d_phi[act_n] += coef_n * 2.0 * diff[act_n]

        if n_b > 0:
            h_abn = self.R_bar + self.rho_bar - dist_sq
            act_a = abnormal & (h_abn > 0.0)
            coef_a = 1.0 / (p.nu2 * n_b)
            loss += _check_finite("abnormal hinge", coef_a * float(np.sum(h_abn[act_a])))
            d_phi[act_a] -= coef_a * 2.0 * diff[act_a]

        return HeadGradients(
            loss=loss,
            d_phi=d_phi,
            d_g=np.zeros(n),
            d_final_w=np.zeros_like(net.final_w),
            d_final_b=0.0,
            d_rho_bar=0.0,
            weight_decay=p.weight_decay,
        )


class DeepSVDDLoss:
    """Soft-boundary one-class objective with a fixed heuristic sphere.

    value = R_sq + (1 / (nu * n_b)) sum_i max{0, ||phi_i - c||^2 - R_sq}
            [+ weight decay]

    Every row is treated as normal; labels are ignored.
    """

    def __init__(self, nu, c, R_sq, weight_decay=5e-6):
        if R_sq < 0.0:
            raise DomainError(f"R_sq must be >= 0, got {R_sq}")
        if nu <= 0.0:
            raise DomainError(f"nu must be > 0, got {nu}")
        self.nu = float(nu)
        self.c = np.asarray(c, dtype=np.float64)
        self.R_sq = float(R_sq)
        self.weight_decay = weight_decay

    def head(self, net, phi, g, y):
        n = phi.shape[0]
        if n == 0:
            raise InvalidBatchError("empty batch")
        diff = phi - self.c
        dist_sq = np.sum(diff**2, axis=1)
        act = dist_sq - self.R_sq > 0.0
        coef = 1.0 / (self.nu * n)
        loss = _check_finite(
            "svdd hinge", self.R_sq + coef * float(np.sum(dist_sq[act] - self.R_sq))
        )
        d_phi = np.zeros_like(phi)
        d_phi[act] = coef * 2.0 * diff[act]
        return HeadGradients(
            loss=loss,
            d_phi=d_phi,
            d_g=np.zeros(n),
            d_final_w=np.zeros_like(net.final_w),
            d_final_b=0.0,
            d_rho_bar=0.0,
            weight_decay=self.weight_decay,
        )


class SVDDWithAnomaliesLoss:
    """Deep SVDD plus the abnormal hinge at zero margin (the D-AD ablation).

    value = R_sq + (1 / (nu * m_b)) sum_normal  max{0, ||phi - c||^2 - R_sq}
            + (1 / (nu2 * n_b)) sum_abnormal max{0, R_sq - ||phi - c||^2}
            [+ weight decay]

    With no abnormal rows this is exactly DeepSVDDLoss over the batch.
    """

    def __init__(self, nu, nu2, c, R_sq, weight_decay=5e-6):
        if R_sq < 0.0:
            raise DomainError(f"R_sq must be >= 0, got {R_sq}")
        self.nu = float(nu)
        self.nu2 = float(nu2)
        self.c = np.asarray(c, dtype=np.float64)
        self.R_sq = float(R_sq)
        self.weight_decay = weight_decay

    def head(self, net, phi, g, y):
        n = phi.shape[0]
        normal, abnormal = _split_labels(y, n)
        m_b = int(normal.sum())
        n_b = int(abnormal.sum())
        if m_b == 0:
            raise InvalidBatchError("batch has no normal rows")
        diff = phi - self.c
        dist_sq = np.sum(diff**2, axis=1)
        d_phi = np.zeros_like(phi)

        act_n = normal & (dist_sq - self.R_sq > 0.0)
        coef_n = 1.0 / (self.nu * m_b)
        loss = _check_finite(
            "svdd hinge", self.R_sq + coef_n * float(np.sum(dist_sq[act_n] - self.R_sq))
        )
        d_phi[act_n] = coef_n * 2.0 * diff[act_n]

        if n_b > 0:
            h_abn = self.R_sq - dist_sq
            act_a = abnormal & (h_abn > 0.0)
            coef_a = 1.0 / (self.nu2 * n_b)
            loss += _check_finite("abnormal hinge", coef_a * float(np.sum(h_abn[act_a])))
            d_phi[act_a] -= coef_a * 2.0 * diff[act_a]

        return HeadGradients(
            loss=loss,
            d_phi=d_phi,
            d_g=np.zeros(n),
            d_final_w=np.zeros_like(net.final_w),
            d_final_b=0.0,
            d_rho_bar=0.0,
            weight_decay=self.weight_decay,
        )


LOSSES = {
    "imdad": ImdadLoss,
    "explicit_sphere": ExplicitSphereLoss,
    "deepsvdd": DeepSVDDLoss,
    "svdd_with_anomalies": SVDDWithAnomaliesLoss,
}


def _evaluate(net, X, y, spec):
    phi, g = forward_batch(net, X)
    head = spec.head(net, phi, g, y)
    decay = 0.5 * head.weight_decay * sum(float(np.sum(l.weight**2)) for l in net.layers)
    return head.loss + decay


def imdad_loss(net, X, y, nu_params, multipliers):
    """Evaluate the full Lagrangian (including weight decay) on a batch."""
    return _evaluate(net, X, y, ImdadLoss(nu_params, multipliers))


def explicit_sphere_loss(net, X, y, nu_params, c, R_bar, rho_bar):
    """Evaluate the explicit-sphere margin objective on a batch."""
    return _evaluate(net, X, y, ExplicitSphereLoss(nu_params, c, R_bar, rho_bar))


def deepsvdd_loss(net, X, c, R_sq, nu, weight_decay=5e-6):
    """Evaluate the soft-boundary Deep SVDD objective on a (normals) batch."""
    X = np.asarray(X, dtype=np.float64)
    return _evaluate(net, X, np.full(X.shape[0], NORMAL),
                     DeepSVDDLoss(nu, c, R_sq, weight_decay))


def imdad_score(net, X):
    """Anomaly scores s(x) = ||phi(x) - c||^2 - T^2 (s > 0 means abnormal)."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    view = view_hypersphere(net)
    phi, _ = forward_batch(net, X)
    scores = np.sum((phi - view.c) ** 2, axis=1) - view.T**2
    return float(scores[0]) if single else scores


def deepsvdd_score(net, X, c, R_sq):
    """Anomaly scores s(x) = ||phi(x) - c||^2 - R_sq."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    phi, _ = forward_batch(net, X)
    scores = np.sum((phi - np.asarray(c)) ** 2, axis=1) - float(R_sq)
    return float(scores[0]) if single else scores


def explicit_sphere_score(net, X, c, R_bar, rho_bar):
    """Scores against an explicit sphere using the mid-margin radius T."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    T = decision_radius(R_bar, rho_bar)
    phi, _ = forward_batch(net, X)
    scores = np.sum((phi - np.asarray(c)) ** 2, axis=1) - T**2
    return float(scores[0]) if single else scores
