"""Training loops: Adam descent with periodic projected multiplier ascent,
step-decay learning rate and early stopping, plus the ablation variants."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceError, DomainError, NumericError
from .metrics import auc
from .network import AdamState, adam_step, backward, forward_batch, init_network
from .sphere import (
    ABNORMAL,
    NORMAL,
    DeepSVDDLoss,
    ExplicitSphereLoss,
    ImdadLoss,
    Multipliers,
    NuParams,
    SVDDWithAnomaliesLoss,
    W_NORM_TARGET,
    deepsvdd_score,
    explicit_sphere_score,
    imdad_loss,
    imdad_score,
    validate_nu,
    view_hypersphere,
)

VARIANTS = ("imdad", "mdad", "dad", "deepsvdd")

# floors for per-epoch re-estimated sphere parameters in the mdad variant;
# the explicit-sphere loss requires strictly positive values
_SPHERE_FLOOR = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    nu_params: NuParams = NuParams(nu=0.2, nu1=0.5, nu2=0.5)
    lr: float = 1e-4
    max_epochs: int = 200
    batch_size: int = 50
    multiplier_period: int = 5
    early_stop_patience: int = 5
    lr_milestones: tuple = (0.5, 0.75)
    lr_decay: float = 0.1
    seed: int = 0
    variant: str = "imdad"
    hidden_dims: tuple | None = None  # default picked from the input dim
    # Ascent rate for the dual update. None shares the current descent lr;
    # the fixed default exists because at lr = 1e-4 the duals move too slowly
    # to pull ||w||^2 back to 4 within a 200-epoch run.
    multiplier_lr: float | None = 0.1

    def validate(self):
        if self.lr <= 0.0:
            raise DomainError("lr must be > 0")
        for name in ("max_epochs", "batch_size", "multiplier_period", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if list(self.lr_milestones) != sorted(self.lr_milestones) or any(
            not 0.0 < m < 1.0 for m in self.lr_milestones
        ) or len(set(self.lr_milestones)) != len(self.lr_milestones):
            raise DomainError("lr_milestones must be strictly increasing in (0, 1)")
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}")
        if self.multiplier_lr is not None and self.multiplier_lr <= 0.0:
            raise DomainError("multiplier_lr must be > 0 (or None to share lr)")
        validate_nu(self.nu_params)


def default_hidden_dims(in_dim):
    # 2-D representation for 2-D data so the boundary stays plottable
    return (64, 64, 2) if in_dim == 2 else (64, 64, 32)


def effective_lr(cfg, epoch):
    """Step-decay schedule: lr shrinks by lr_decay after each milestone epoch."""
    passed = sum(1 for m in cfg.lr_milestones if epoch > math.floor(m * cfg.max_epochs))
    return cfg.lr * cfg.lr_decay**passed


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    alpha: float
    beta: float
    gamma: float
    w_norm_sq: float
    b: float
    rho_bar: float
    R_bar: float
    train_auc: float
    val_auc: float

    FIELDS = (
        "epoch", "train_loss", "val_loss", "alpha", "beta", "gamma",
        "w_norm_sq", "b", "rho_bar", "R_bar", "train_auc", "val_auc",
    )


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    stop_epoch: int = 0
    stop_reason: str = ""

    @property
    def final(self):
        return self.records[-1]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EpochRecord.FIELDS)
            for rec in self.records:
                writer.writerow([repr(getattr(rec, f)) if f != "epoch" else rec.epoch
                                 for f in EpochRecord.FIELDS])

    def summary(self):
        rec = self.final
        return {
            "stop_epoch": self.stop_epoch,
            "stop_reason": self.stop_reason,
            **{f: getattr(rec, f) for f in EpochRecord.FIELDS},
        }


def _safe_auc(scores, labels):
    labels = np.asarray(labels)
    if np.all(labels == NORMAL) or np.all(labels == ABNORMAL) or len(labels) == 0:
        return float("nan")
    return auc(scores, labels)


def _stratified_batches(rng, y, batch_size):
    """Batch index lists whose abnormal fraction tracks the split's."""
    normal_idx = rng.permutation(np.flatnonzero(y == NORMAL))
    abnormal_idx = rng.permutation(np.flatnonzero(y == ABNORMAL))
    n_batches = max(1, math.ceil(len(y) / batch_size))
    batches = []
    for part_n, part_a in zip(
        np.array_split(normal_idx, n_batches), np.array_split(abnormal_idx, n_batches)
    ):
        batch = np.concatenate([part_n, part_a])
        batches.append(rng.permutation(batch))
    return [b for b in batches if len(b)]


def update_multipliers(net, mult, r):
    """Projected gradient ascent on the dual variables at rate r."""
    if r <= 0.0:
        raise DomainError("ascent rate must be > 0")
    w_sq = float(net.final_w @ net.final_w)
    return Multipliers(
        alpha=mult.alpha + r * (w_sq - W_NORM_TARGET),
        beta=max(0.0, mult.beta + r * (net.final_b - 1.0)),
        gamma=max(0.0, mult.gamma - r * net.rho_bar),
    )


class _EarlyStopper:
    """Fires after `patience` consecutive epochs without a new strict minimum."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.stale = 0

    def update(self, value):
        if value < self.best:
            self.best = value
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def _run_epochs(cfg, rng, net, y_train, step_fn, epoch_start_fn, metrics_fn):
    """Shared epoch loop: minibatch descent, per-epoch records, early stop."""
    adam = AdamState.for_network(net)
    stopper = _EarlyStopper(cfg.early_stop_patience)
    report = TrainReport(stop_reason="max_epochs")
    for epoch in range(1, cfg.max_epochs + 1):
        lr = effective_lr(cfg, epoch)
        epoch_start_fn(epoch)
        for batch in _stratified_batches(rng, y_train, cfg.batch_size):
            try:
                _, grads = step_fn(batch)
            except NumericError as exc:
                raise DivergenceError(epoch, str(exc)) from exc
            adam_step(net, grads, adam, lr)
        record = metrics_fn(epoch, lr)
        report.records.append(record)
        report.stop_epoch = epoch
        if stopper.update(record.val_loss):
            report.stop_reason = "early_stop"
            break
    return report


def _aim_final_w(net, X_normals):
    """Point the sphere center c = -w/2 at the normals' mean representation.

    The head constrains c to the unit sphere, so only its direction is free;
    a random direction can leave c a couple of units away from the data, a
    gap the small fixed learning rate cannot close within the epoch budget.
    The data-driven direction mirrors the baseline's mean-of-representations
    center initialization.
    """
    phi, _ = forward_batch(net, X_normals)
    mu = phi.mean(axis=0)
    norm = float(np.linalg.norm(mu))
    if norm > 1e-12:
        net.final_w = -2.0 * mu / norm


def train_imdad(split, cfg):
    """End-to-end constrained training; returns (net, multipliers, report)."""
    cfg.validate()
    X_train, y_train = split.train
    X_val, y_val = split.val
    if not np.any(y_train == NORMAL) or not np.any(y_train == ABNORMAL):
        raise DomainError("training split needs at least one row of each class")
    has_val = len(y_val) > 0

    rng = np.random.default_rng(cfg.seed)
    hidden = cfg.hidden_dims or default_hidden_dims(X_train.shape[1])
    net = init_network(X_train.shape[1], hidden, rng)
    _aim_final_w(net, X_train[y_train == NORMAL])
    mult = Multipliers()
    state = {"mult": mult}

    def step(batch):
        return backward(net, X_train[batch], y_train[batch],
                        ImdadLoss(cfg.nu_params, state["mult"]))

    def epoch_start(epoch):
        pass

    def metrics(epoch, lr):
        if epoch % cfg.multiplier_period == 0:
            rate = cfg.multiplier_lr if cfg.multiplier_lr is not None else lr
            state["mult"] = update_multipliers(net, state["mult"], rate)
        mult = state["mult"]
        view = view_hypersphere(net)
        train_scores = imdad_score(net, X_train)
        train_loss = imdad_loss(net, X_train, y_train, cfg.nu_params, mult)
        if has_val:
            val_loss = imdad_loss(net, X_val, y_val, cfg.nu_params, mult)
            val_auc = _safe_auc(imdad_score(net, X_val), y_val)
        else:
            val_loss, val_auc = train_loss, float("nan")
        return EpochRecord(
            epoch=epoch,
            train_loss=train_loss,
            val_loss=val_loss,
            alpha=mult.alpha,
            beta=mult.beta,
            gamma=mult.gamma,
            w_norm_sq=float(net.final_w @ net.final_w),
            b=net.final_b,
            rho_bar=net.rho_bar,
            R_bar=view.R_bar,
            train_auc=_safe_auc(train_scores, y_train),
            val_auc=val_auc,
        )

    report = _run_epochs(cfg, rng, net, y_train, step, epoch_start, metrics)
    return net, state["mult"], report


def _heuristic_center(net, X_normals):
    phi, _ = forward_batch(net, X_normals)
    return phi.mean(axis=0)


def _center_distances(net, X, c):
    phi, _ = forward_batch(net, X)
    return np.sum((phi - c) ** 2, axis=1)


def _svdd_record(epoch, net, c, R_sq, train_loss, val_loss, train_scores, y_train,
                 val_scores, y_val):
    return EpochRecord(
        epoch=epoch,
        train_loss=train_loss,
        val_loss=val_loss,
        alpha=0.0,
        beta=0.0,
        gamma=0.0,
        w_norm_sq=float(net.final_w @ net.final_w),
        b=net.final_b,
        rho_bar=net.rho_bar,
        R_bar=float(R_sq),
        train_auc=_safe_auc(train_scores, y_train),
        val_auc=_safe_auc(val_scores, y_val) if len(y_val) else float("nan"),
    )


def train_deepsvdd(split, cfg):
    """Heuristic-sphere baseline; returns (net, c, R_sq, report).

    The center is the mean representation of the training normals after the
    initialization forward pass (then frozen); R_sq is re-estimated at the
    start of every epoch as the (1 - nu)-quantile of the training normals'
    squared center distances.
    """
    cfg.validate()
    X_train, y_train = split.train
    X_val, y_val = split.val
    normals = y_train == NORMAL
    X_normals = X_train[normals]
    if len(X_normals) == 0:
        raise DomainError("training split needs at least one normal row")

    rng = np.random.default_rng(cfg.seed)
    hidden = cfg.hidden_dims or default_hidden_dims(X_train.shape[1])
    net = init_network(X_train.shape[1], hidden, rng)
    c = _heuristic_center(net, X_normals)
    nu = cfg.nu_params.nu
    lam = cfg.nu_params.weight_decay
    state = {"R_sq": 0.0}

    def epoch_start(epoch):
        state["R_sq"] = float(np.quantile(_center_distances(net, X_normals, c), 1.0 - nu))

    def step(batch):
        return backward(net, X_normals[batch], None,
                        DeepSVDDLoss(nu, c, state["R_sq"], lam))

    def metrics(epoch, lr):
        spec = DeepSVDDLoss(nu, c, state["R_sq"], lam)
        phi_t, g_t = forward_batch(net, X_normals)
        decay = 0.5 * lam * sum(float(np.sum(l.weight**2)) for l in net.layers)
        train_loss = spec.head(net, phi_t, g_t, None).loss + decay
        X_val_normals = X_val[y_val == NORMAL] if len(y_val) else X_val
        if len(X_val_normals):
            phi_v, g_v = forward_batch(net, X_val_normals)
            val_loss = spec.head(net, phi_v, g_v, None).loss + decay
        else:
            val_loss = train_loss
        return _svdd_record(
            epoch, net, c, state["R_sq"], train_loss, val_loss,
            deepsvdd_score(net, X_train, c, state["R_sq"]), y_train,
            deepsvdd_score(net, X_val, c, state["R_sq"]) if len(y_val) else np.array([]),
            y_val,
        )

    y_batch_source = np.full(len(X_normals), NORMAL)
    report = _run_epochs(cfg, rng, net, y_batch_source, step, epoch_start, metrics)
    R_sq = float(np.quantile(_center_distances(net, X_normals, c), 1.0 - nu))
    return net, c, R_sq, report


def train_ablation(split, cfg):
    """The two intermediate ablation variants.

    dad:  heuristic sphere as in train_deepsvdd plus the abnormal hinge at
          zero margin; with no abnormal rows this reproduces train_deepsvdd
          exactly.
    mdad: explicit-sphere margin objective with frozen heuristic center,
          per-epoch R_bar = (1 - nu1)-quantile of normal squared distances
          and rho_bar = max{0, nu2-quantile of abnormal squared distances
          - R_bar}; only the hidden weights are trained.

    Returns (net, sphere_params dict, report).
    """
    cfg.validate()
    if cfg.variant not in ("dad", "mdad"):
        raise DomainError("train_ablation handles variants 'dad' and 'mdad'")
    X_train, y_train = split.train
    X_val, y_val = split.val
    normals = y_train == NORMAL
    abnormals = y_train == ABNORMAL
    X_normals = X_train[normals]
    X_abnormals = X_train[abnormals]
    if len(X_normals) == 0:
        raise DomainError("training split needs at least one normal row")

    rng = np.random.default_rng(cfg.seed)
    hidden = cfg.hidden_dims or default_hidden_dims(X_train.shape[1])
    net = init_network(X_train.shape[1], hidden, rng)
    c = _heuristic_center(net, X_normals)
    p = cfg.nu_params

    if cfg.variant == "dad":
        state = {"R_sq": 0.0}

        def epoch_start(epoch):
            state["R_sq"] = float(
                np.quantile(_center_distances(net, X_normals, c), 1.0 - p.nu)
            )

        def spec():
            return SVDDWithAnomaliesLoss(p.nu, p.nu2, c, state["R_sq"], p.weight_decay)

        def step(batch):
            return backward(net, X_train[batch], y_train[batch], spec())

        def metrics(epoch, lr):
            train_loss = _full_loss(net, spec(), X_train, y_train, p.weight_decay)
            val_loss = (
                _full_loss(net, spec(), X_val, y_val, p.weight_decay)
                if len(y_val) else train_loss
            )
            return _svdd_record(
                epoch, net, c, state["R_sq"], train_loss, val_loss,
                deepsvdd_score(net, X_train, c, state["R_sq"]), y_train,
                deepsvdd_score(net, X_val, c, state["R_sq"]) if len(y_val) else np.array([]),
                y_val,
            )

        report = _run_epochs(cfg, rng, net, y_train, step, epoch_start, metrics)
        R_sq = float(np.quantile(_center_distances(net, X_normals, c), 1.0 - p.nu))
        return net, {"c": c, "R_sq": R_sq}, report

    # mdad
    state = {"R_bar": 1.0, "rho_bar": 1.0}

    def reestimate(epoch=None):
        d_norm = _center_distances(net, X_normals, c)
        R_bar = max(float(np.quantile(d_norm, 1.0 - p.nu1)), _SPHERE_FLOOR)
        if len(X_abnormals):
            d_abn = _center_distances(net, X_abnormals, c)
            rho_bar = max(float(np.quantile(d_abn, p.nu2)) - R_bar, _SPHERE_FLOOR)
        else:
            rho_bar = _SPHERE_FLOOR
        state["R_bar"], state["rho_bar"] = R_bar, rho_bar

    def spec():
        return ExplicitSphereLoss(p, c, state["R_bar"], state["rho_bar"])

    def step(batch):
        return backward(net, X_train[batch], y_train[batch], spec())

    def metrics(epoch, lr):
        train_loss = _full_loss(net, spec(), X_train, y_train, p.weight_decay)
        val_loss = (
            _full_loss(net, spec(), X_val, y_val, p.weight_decay)
            if len(y_val) else train_loss
        )
        scores_t = explicit_sphere_score(net, X_train, c, state["R_bar"], state["rho_bar"])
        scores_v = (
            explicit_sphere_score(net, X_val, c, state["R_bar"], state["rho_bar"])
            if len(y_val) else np.array([])
        )
        rec = _svdd_record(epoch, net, c, state["R_bar"], train_loss, val_loss,
                           scores_t, y_train, scores_v, y_val)
        rec.rho_bar = state["rho_bar"]
        return rec

    report = _run_epochs(cfg, rng, net, y_train, step, reestimate, metrics)
    reestimate()
    return net, {"c": c, "R_bar": state["R_bar"], "rho_bar": state["rho_bar"]}, report


def _full_loss(net, spec, X, y, lam):
    phi, g = forward_batch(net, X)
    decay = 0.5 * lam * sum(float(np.sum(l.weight**2)) for l in net.layers)
    return spec.head(net, phi, g, y).loss + decay


@dataclass
class FittedModel:
    """A trained detector of any variant with a uniform scoring interface."""

    variant: str
    net: object
    c: np.ndarray | None = None
    R_sq: float | None = None
    R_bar: float | None = None
    rho_bar: float | None = None

    def scores(self, X):
        if self.variant == "imdad":
            return imdad_score(self.net, X)
        if self.variant == "deepsvdd" or self.variant == "dad":
            return deepsvdd_score(self.net, X, self.c, self.R_sq)
        if self.variant == "mdad":
            return explicit_sphere_score(self.net, X, self.c, self.R_bar, self.rho_bar)
        raise DomainError(f"unknown variant {self.variant!r}")


def fit(split, cfg):
    """Train whichever variant cfg names; returns (FittedModel, TrainReport)."""
    if cfg.variant == "imdad":
        net, _, report = train_imdad(split, cfg)
        return FittedModel(variant="imdad", net=net), report
    if cfg.variant == "deepsvdd":
        net, c, R_sq, report = train_deepsvdd(split, cfg)
        return FittedModel(variant="deepsvdd", net=net, c=c, R_sq=R_sq), report
    net, params, report = train_ablation(split, cfg)
    if cfg.variant == "dad":
        return FittedModel(variant="dad", net=net, c=params["c"], R_sq=params["R_sq"]), report
    return FittedModel(
        variant="mdad", net=net, c=params["c"],
        R_bar=params["R_bar"], rho_bar=params["rho_bar"],
    ), report
