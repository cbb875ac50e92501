"""Flat key=value run configuration files with dotted section prefixes.

Example::

    # two-moons run
    dataset.kind = moons
    dataset.n = 1000
    train.nu = 0.2
    model.hidden = 64,64,2
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import generate_moons, generate_spiral, load_csv, make_split, kfold
from .errors import ConfigError
from .sphere import NuParams
from .trainer import TrainConfig, VARIANTS


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def read_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def _get(values, key, default=None, convert=str):
    if key not in values:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return convert(values[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: {exc}") from exc


def _floats(text):
    return tuple(float(v) for v in text.split(","))


def _ints(text):
    return tuple(int(v) for v in text.split(","))


@dataclass
class RunConfig:
    """Everything one training run needs: data, split, model, training."""

    dataset_kind: str
    dataset_args: dict
    anomaly_fraction: float
    val_fraction: float
    test_fraction: float
    folds: int
    hidden_dims: tuple | None
    train: TrainConfig
    sweep_nu: tuple
    sweep_nu1: tuple
    sweep_nu2: tuple

    @classmethod
    def from_values(cls, values):
        known_prefixes = ("dataset.", "split.", "model.", "train.", "sweep.")
        for key in values:
            if not key.startswith(known_prefixes):
                raise ConfigError(f"unknown key {key!r}")

        kind = _get(values, "dataset.kind")
        if kind == "moons":
            dataset_args = {
                "n": _get(values, "dataset.n", 1000, int),
                "noise_std": _get(values, "dataset.noise_std", 0.1, float),
                "seed": _get(values, "dataset.seed", 0, int),
            }
        elif kind == "spiral":
            dataset_args = {
                "n": _get(values, "dataset.n", 1000, int),
                "noise_std": _get(values, "dataset.noise_std", 0.13, float),
                "turns": _get(values, "dataset.turns", 1.0, float),
                "seed": _get(values, "dataset.seed", 0, int),
            }
        elif kind == "csv":
            label_column = _get(values, "dataset.label_column")
            if label_column.lstrip("-").isdigit():
                label_column = int(label_column)
            dataset_args = {
                "path": _get(values, "dataset.path"),
                "label_column": label_column,
                "normal_label": _get(values, "dataset.normal_label"),
            }
        else:
            raise ConfigError(f"dataset.kind must be moons, spiral or csv, got {kind!r}")

        variant = _get(values, "train.variant", "imdad")
        if variant not in VARIANTS:
            raise ConfigError(f"train.variant must be one of {VARIANTS}")
        nu_params = NuParams(
            nu=_get(values, "train.nu", 0.2, float),
            nu1=_get(values, "train.nu1", 0.5, float),
            nu2=_get(values, "train.nu2", 0.5, float),
            weight_decay=_get(values, "train.weight_decay", 5e-6, float),
        )
        train = TrainConfig(
            nu_params=nu_params,
            lr=_get(values, "train.lr", 1e-4, float),
            max_epochs=_get(values, "train.max_epochs", 200, int),
            batch_size=_get(values, "train.batch_size", 50, int),
            multiplier_period=_get(values, "train.multiplier_period", 5, int),
            multiplier_lr=_get(values, "train.multiplier_lr", 0.1, float),
            early_stop_patience=_get(values, "train.patience", 5, int),
            lr_milestones=_get(values, "train.milestones", (0.5, 0.75), _floats),
            lr_decay=_get(values, "train.lr_decay", 0.1, float),
            seed=_get(values, "train.seed", 0, int),
            variant=variant,
            hidden_dims=_get(values, "model.hidden", (), _ints) or None,
        )
        default_grid = tuple(round(0.1 * i, 1) for i in range(1, 10))
        return cls(
            dataset_kind=kind,
            dataset_args=dataset_args,
            anomaly_fraction=_get(values, "split.anomaly_fraction", 0.10, float),
            val_fraction=_get(values, "split.val_fraction", 0.15, float),
            test_fraction=_get(values, "split.test_fraction", 0.2, float),
            folds=_get(values, "split.folds", 5, int),
            hidden_dims=train.hidden_dims,
            train=train,
            sweep_nu=_get(values, "sweep.nu", default_grid, _floats),
            sweep_nu1=_get(values, "sweep.nu1", default_grid, _floats),
            sweep_nu2=_get(values, "sweep.nu2", default_grid, _floats),
        )

    @classmethod
    def from_file(cls, path):
        return cls.from_values(read_config(path))

    def load_dataset(self):
        if self.dataset_kind == "moons":
            return generate_moons(**self.dataset_args)
        if self.dataset_kind == "spiral":
            return generate_spiral(**self.dataset_args)
        return load_csv(**self.dataset_args)

    def split(self, seed=None):
        return make_split(
            self.load_dataset(),
            anomaly_fraction=self.anomaly_fraction,
            val_fraction=self.val_fraction,
            test_fraction=self.test_fraction,
            seed=self.train.seed if seed is None else seed,
        )

    def folds_of(self, seed=None):
        return kfold(
            self.load_dataset(),
            k=self.folds,
            anomaly_fraction=self.anomaly_fraction,
            val_fraction=self.val_fraction,
            seed=self.train.seed if seed is None else seed,
        )
