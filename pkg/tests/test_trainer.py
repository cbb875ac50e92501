import dataclasses

import numpy as np
import pytest

from marginsphere.data import generate_moons, make_split
from marginsphere.errors import DivergenceError, DomainError
from marginsphere.network import Layer, Network
from marginsphere.sphere import ABNORMAL, NORMAL, Multipliers, NuParams
from marginsphere.trainer import (
    TrainConfig,
    _EarlyStopper,
    _stratified_batches,
    default_hidden_dims,
    effective_lr,
    fit,
    train_deepsvdd,
    train_imdad,
    update_multipliers,
)


@pytest.fixture(scope="module")
def moons_split():
    return make_split(generate_moons(200, seed=0), seed=0)


def _quick(**kw):
    kw.setdefault("max_epochs", 8)
    return TrainConfig(hidden_dims=(8, 4), **kw)


# --- config validation ------------------------------------------------------

def test_train_config_validation():
    TrainConfig().validate()
    with pytest.raises(DomainError):
        TrainConfig(lr=0.0).validate()
    with pytest.raises(DomainError):
        TrainConfig(max_epochs=0).validate()
    with pytest.raises(DomainError):
        TrainConfig(lr_milestones=(0.75, 0.5)).validate()
    with pytest.raises(DomainError):
        TrainConfig(lr_milestones=(0.5, 1.0)).validate()
    with pytest.raises(DomainError):
        TrainConfig(variant="svm").validate()
    with pytest.raises(DomainError):
        TrainConfig(multiplier_lr=-1.0).validate()
    TrainConfig(multiplier_lr=None).validate()


def test_default_hidden_dims():
    assert default_hidden_dims(2) == (64, 64, 2)
    assert default_hidden_dims(30) == (64, 64, 32)


# --- learning-rate schedule -------------------------------------------------

def test_effective_lr_step_decay_exact():
    cfg = TrainConfig(lr=1e-4, max_epochs=200, lr_milestones=(0.5, 0.75), lr_decay=0.1)
    assert effective_lr(cfg, 1) == 1e-4
    assert effective_lr(cfg, 100) == 1e-4
    assert effective_lr(cfg, 101) == pytest.approx(1e-5)
    assert effective_lr(cfg, 150) == pytest.approx(1e-5)
    assert effective_lr(cfg, 151) == pytest.approx(1e-6)
    assert effective_lr(cfg, 200) == pytest.approx(1e-6)


# --- early stopping ---------------------------------------------------------

def test_early_stopper_strict_minimum_semantics():
    stopper = _EarlyStopper(patience=3)
    assert not stopper.update(1.0)
    assert not stopper.update(0.9)   # new minimum resets
    assert not stopper.update(0.9)   # equal is not a strict improvement
    assert not stopper.update(0.95)
    assert stopper.update(0.91)      # third consecutive non-improvement
    stopper = _EarlyStopper(patience=2)
    stopper.update(1.0)
    stopper.update(2.0)
    assert stopper.update(2.0)


# --- multiplier ascent ------------------------------------------------------

def test_update_multipliers_projection():
    net = Network(layers=[Layer(np.eye(2), np.zeros(2), "identity")],
                  final_w=np.array([3.0, 0.0]), final_b=0.5, rho_bar=2.0)
    mult = update_multipliers(net, Multipliers(alpha=1.0, beta=0.1, gamma=0.3), r=0.1)
    assert mult.alpha == pytest.approx(1.0 + 0.1 * (9.0 - 4.0))  # sign-free
    assert mult.beta == pytest.approx(max(0.0, 0.1 + 0.1 * (0.5 - 1.0)))
    assert mult.gamma == pytest.approx(max(0.0, 0.3 - 0.1 * 2.0))
    # beta and gamma project onto the nonnegative orthant
    mult = update_multipliers(net, Multipliers(), r=10.0)
    assert mult.beta == 0.0 and mult.gamma == 0.0
    with pytest.raises(DomainError):
        update_multipliers(net, Multipliers(), r=0.0)


# --- batching ---------------------------------------------------------------

def test_stratified_batches_cover_and_stratify():
    rng = np.random.default_rng(0)
    y = np.array([NORMAL] * 90 + [ABNORMAL] * 10)
    batches = _stratified_batches(rng, y, batch_size=25)
    covered = np.sort(np.concatenate(batches))
    np.testing.assert_array_equal(covered, np.arange(100))
    for batch in batches:
        # every batch carries its share of both classes
        assert np.sum(y[batch] == ABNORMAL) in (2, 3)
        assert np.sum(y[batch] == NORMAL) in (22, 23)


# --- training loops ---------------------------------------------------------

def test_train_imdad_smoke_and_records(moons_split):
    cfg = _quick()
    net, mult, report = train_imdad(moons_split, cfg)
    assert 1 <= report.stop_epoch <= cfg.max_epochs
    assert report.stop_reason in ("max_epochs", "early_stop")
    assert [r.epoch for r in report.records] == list(range(1, report.stop_epoch + 1))
    assert mult.beta >= 0.0 and mult.gamma >= 0.0
    final = report.final
    assert np.isfinite(final.train_loss) and np.isfinite(final.val_loss)


def test_train_imdad_requires_both_classes():
    ds = generate_moons(100, seed=0)
    split = make_split(ds, seed=0)
    only_normal = dataclasses.replace(
        split, train_idx=split.train_idx[split.dataset.y[split.train_idx] == NORMAL]
    )
    with pytest.raises(DomainError):
        train_imdad(only_normal, _quick())


def test_training_is_deterministic(moons_split):
    cfg = _quick(seed=7)
    m1, r1 = fit(moons_split, cfg)
    m2, r2 = fit(moons_split, cfg)
    X_test, _ = moons_split.test
    np.testing.assert_array_equal(m1.scores(X_test), m2.scores(X_test))
    assert [rec.train_loss for rec in r1.records] == [rec.train_loss for rec in r2.records]
    m3, _ = fit(moons_split, dataclasses.replace(cfg, seed=8))
    assert not np.array_equal(m1.scores(X_test), m3.scores(X_test))


@pytest.mark.parametrize("variant", ["imdad", "deepsvdd", "dad", "mdad"])
def test_fit_all_variants_score(moons_split, variant):
    cfg = _quick(variant=variant)
    model, report = fit(moons_split, cfg)
    assert model.variant == variant
    X_test, y_test = moons_split.test
    scores = model.scores(X_test)
    assert scores.shape == (len(y_test),)
    assert np.all(np.isfinite(scores))


def test_dad_equals_deepsvdd_without_train_abnormals():
    ds = generate_moons(200, seed=1)
    split = make_split(ds, seed=1)
    normal_train = split.train_idx[split.dataset.y[split.train_idx] == NORMAL]
    split = dataclasses.replace(split, train_idx=normal_train)
    m_svdd, _ = fit(split, _quick(variant="deepsvdd", seed=2))
    m_dad, _ = fit(split, _quick(variant="dad", seed=2))
    X_test, _ = split.test
    np.testing.assert_array_equal(m_svdd.scores(X_test), m_dad.scores(X_test))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_divergence_raises(moons_split):
    cfg = _quick(lr=1e100, max_epochs=3)
    with pytest.raises(DivergenceError):
        train_imdad(moons_split, cfg)


def test_report_csv_and_summary(tmp_path, moons_split):
    _, _, report = train_imdad(moons_split, _quick())
    path = tmp_path / "epochs.csv"
    report.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].split(",")[0] == "epoch"
    assert len(lines) == len(report.records) + 1
    summary = report.summary()
    assert summary["stop_epoch"] == report.stop_epoch
    assert summary["val_loss"] == report.final.val_loss


def test_deepsvdd_radius_is_quantile(moons_split):
    cfg = _quick(variant="deepsvdd")
    net, c, R_sq, report = train_deepsvdd(moons_split, cfg)
    from marginsphere.network import forward_batch
    X_train, y_train = moons_split.train
    phi, _ = forward_batch(net, X_train[y_train == NORMAL])
    d = np.sum((phi - c) ** 2, axis=1)
    assert R_sq == pytest.approx(np.quantile(d, 1.0 - cfg.nu_params.nu))
