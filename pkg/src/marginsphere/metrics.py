"""Metrics, margin-bound auditing and visualization-data export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DomainError, ShapeError
from .network import forward_batch
from .sphere import ABNORMAL, NORMAL, view_hypersphere

# membership tolerance is exact: strict comparisons throughout


def _tied_ranks(values):
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # average of 1-based ranks i+1 .. j+1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores, labels):
    """Probability a random abnormal sample outranks a random normal one.

    Ties count one half (rank-sum formulation); higher score means more
    abnormal.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError("scores and labels must be equal-length vectors")
    abn = labels == ABNORMAL
    n_abn = int(abn.sum())
    n_norm = len(labels) - n_abn
    if n_abn == 0 or n_norm == 0:
        raise DomainError("auc needs both classes present")
    ranks = _tied_ranks(scores)
    rank_sum = float(ranks[abn].sum())
    u = rank_sum - n_abn * (n_abn + 1) / 2.0
    return u / (n_abn * n_norm)


def accuracy(scores, labels, threshold=0.0):
    """Fraction of correct sign decisions: score > threshold means abnormal."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pred_abnormal = scores > threshold
    actual_abnormal = labels == ABNORMAL
    return float(np.mean(pred_abnormal == actual_abnormal))


@dataclass
class NuAuditReport:
    """Empirical outside/inside counts versus their hyperparameter bounds."""

    n_out_normal: int
    n_normal: int
    n_in_abnormal: int
    n_abnormal: int
    bound_normal: float  # (nu + 1) * nu1
    bound_abnormal: float  # nu * nu2
    ratio_normal: float
    ratio_abnormal: float
    satisfied_normal: bool
    satisfied_abnormal: bool

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def nu_audit(net, X, y, nu_params):
    """Count boundary violations against the (nu+1)nu1 / nu*nu2 bounds.

    Membership is tested against the inner sphere (squared distance vs R_bar)
    and the outer sphere (vs R_bar + rho_bar); both bounds are strict.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    view = view_hypersphere(net)
    phi, _ = forward_batch(net, X)
    dist_sq = np.sum((phi - view.c) ** 2, axis=1)
    normal = y == NORMAL
    abnormal = y == ABNORMAL
    m = int(normal.sum())
    n_abn = int(abnormal.sum())
    n_out = int(np.sum(dist_sq[normal] > view.R_bar))
    n_in = int(np.sum(dist_sq[abnormal] < view.R_bar + view.rho_bar))
    bound_n = (nu_params.nu + 1.0) * nu_params.nu1
    bound_a = nu_params.nu * nu_params.nu2
    ratio_n = n_out / m if m else 0.0
    ratio_a = n_in / n_abn if n_abn else 0.0
    return NuAuditReport(
        n_out_normal=n_out,
        n_normal=m,
        n_in_abnormal=n_in,
        n_abnormal=n_abn,
        bound_normal=bound_n,
        bound_abnormal=bound_a,
        ratio_normal=ratio_n,
        ratio_abnormal=ratio_a,
        satisfied_normal=ratio_n < bound_n,
        satisfied_abnormal=ratio_a < bound_a,
    )


@dataclass
class BoundaryGrid:
    """Dense score field over a 2-D box plus circle overlays for plotting."""

    xs: np.ndarray  # (resolution,)
    ys: np.ndarray  # (resolution,)
    scores: np.ndarray  # (resolution, resolution), row i = ys[i]
    center: np.ndarray
    radius_inner: float  # sqrt(max(R_bar, 0))
    radius_outer: float  # sqrt(max(R_bar, 0) + max(rho_bar, 0))
    decision_radius: float  # T
    space: str  # "input" or "representation"

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "y", "score"])
            for i, yv in enumerate(self.ys):
                for j, xv in enumerate(self.xs):
                    writer.writerow([repr(float(xv)), repr(float(yv)),
                                     repr(float(self.scores[i, j]))])


def export_boundary(net, ds, resolution=100, margin=0.5):
    """Score field for visualization.

    Works in input space when the data is 2-D (grid points are forwarded
    through the network) or in representation space when phi is 2-D.
    """
    if resolution < 2:
        raise DomainError("resolution must be >= 2")
    view = view_hypersphere(net)
    if ds.d == 2:
        lo = ds.X.min(axis=0) - margin
        hi = ds.X.max(axis=0) + margin
        xs = np.linspace(lo[0], hi[0], resolution)
        ys = np.linspace(lo[1], hi[1], resolution)
        gx, gy = np.meshgrid(xs, ys)
        points = np.column_stack([gx.ravel(), gy.ravel()])
        phi, _ = forward_batch(net, points)
        space = "input"
    elif net.phi_dim == 2:
        rep, _ = forward_batch(net, ds.X)
        lo = rep.min(axis=0) - margin
        hi = rep.max(axis=0) + margin
        xs = np.linspace(lo[0], hi[0], resolution)
        ys = np.linspace(lo[1], hi[1], resolution)
        gx, gy = np.meshgrid(xs, ys)
        phi = np.column_stack([gx.ravel(), gy.ravel()])
        space = "representation"
    else:
        raise DomainError(
            f"boundary export needs 2-D inputs or a 2-D representation "
            f"(d={ds.d}, p={net.phi_dim})"
        )
    scores = np.sum((phi - view.c) ** 2, axis=1) - view.T**2
    r_inner = np.sqrt(max(view.R_bar, 0.0))
    r_outer = np.sqrt(max(view.R_bar, 0.0) + max(view.rho_bar, 0.0))
    return BoundaryGrid(
        xs=xs,
        ys=ys,
        scores=scores.reshape(resolution, resolution),
        center=view.c.copy(),
        radius_inner=float(r_inner),
        radius_outer=float(r_outer),
        decision_radius=view.T,
        space=space,
    )


@dataclass
class DistanceHistogram:
    """Per-class histograms of squared distance to the center."""

    epoch_tag: str
    bin_edges: np.ndarray
    counts_normal: np.ndarray
    counts_abnormal: np.ndarray

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_left", "bin_right", "count_normal", "count_abnormal"])
            for i in range(len(self.counts_normal)):
                writer.writerow([
                    repr(float(self.bin_edges[i])),
                    repr(float(self.bin_edges[i + 1])),
                    int(self.counts_normal[i]),
                    int(self.counts_abnormal[i]),
                ])


def export_distance_density(net, X, y, epoch_tag=""):
    """Histogram of squared center distances per class (Freedman-Diaconis
    bins fitted on the pooled distances so both classes share edges)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    view = view_hypersphere(net)
    phi, _ = forward_batch(net, X)
    dist_sq = np.sum((phi - view.c) ** 2, axis=1)
    edges = np.histogram_bin_edges(dist_sq, bins="fd")
    if len(edges) < 2:
        edges = np.array([dist_sq.min(), dist_sq.max() + 1.0])
    counts_n, _ = np.histogram(dist_sq[y == NORMAL], bins=edges)
    counts_a, _ = np.histogram(dist_sq[y == ABNORMAL], bins=edges)
    return DistanceHistogram(
        epoch_tag=epoch_tag,
        bin_edges=edges,
        counts_normal=counts_n,
        counts_abnormal=counts_a,
    )
