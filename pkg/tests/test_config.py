import pytest

from marginsphere.config import RunConfig, parse_config_text
from marginsphere.errors import ConfigError


def test_parse_config_text_basics():
    values = parse_config_text(
        "# comment\n"
        "dataset.kind = moons  # trailing comment\n"
        "\n"
        "train.nu = 0.3\n"
    )
    assert values == {"dataset.kind": "moons", "train.nu": "0.3"}


@pytest.mark.parametrize("text", [
    "dataset.kind moons",       # no equals sign
    "= moons",                  # empty key
    "dataset.kind =",           # empty value
    "a.b = 1\na.b = 2",         # duplicate
])
def test_parse_config_text_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_run_config_defaults():
    cfg = RunConfig.from_values({"dataset.kind": "moons"})
    assert cfg.dataset_args == {"n": 1000, "noise_std": 0.1, "seed": 0}
    assert cfg.train.lr == 1e-4
    assert cfg.train.max_epochs == 200
    assert cfg.train.batch_size == 50
    assert cfg.train.nu_params.nu == 0.2
    assert cfg.train.nu_params.weight_decay == 5e-6
    assert cfg.train.lr_milestones == (0.5, 0.75)
    assert cfg.anomaly_fraction == 0.10
    assert cfg.folds == 5
    assert cfg.sweep_nu == tuple(round(0.1 * i, 1) for i in range(1, 10))


def test_run_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        RunConfig.from_values({"dataset.kind": "moons", "bogus.key": "1"})
    with pytest.raises(ConfigError):
        RunConfig.from_values({"dataset.kind": "images"})
    with pytest.raises(ConfigError):
        RunConfig.from_values({"dataset.kind": "moons", "train.variant": "svm"})
    with pytest.raises(ConfigError):
        RunConfig.from_values({"dataset.kind": "moons", "dataset.n": "many"})
    with pytest.raises(ConfigError):
        RunConfig.from_values({"dataset.kind": "csv"})  # csv needs path etc.


def test_run_config_csv_and_overrides(tmp_path):
    csv_path = tmp_path / "d.csv"
    csv_path.write_text("a,b,label\n1,2,ok\n3,4,bad\n5,6,ok\n7,8,ok\n")
    cfg = RunConfig.from_values({
        "dataset.kind": "csv",
        "dataset.path": str(csv_path),
        "dataset.label_column": "label",
        "dataset.normal_label": "ok",
        "model.hidden": "16,8",
        "train.max_epochs": "3",
        "train.variant": "deepsvdd",
    })
    ds = cfg.load_dataset()
    assert ds.n == 4 and ds.d == 2
    assert cfg.train.hidden_dims == (16, 8)
    assert cfg.train.variant == "deepsvdd"
    assert cfg.train.max_epochs == 3


def test_run_config_split_and_folds():
    cfg = RunConfig.from_values({
        "dataset.kind": "moons",
        "dataset.n": "120",
        "split.folds": "3",
    })
    split = cfg.split()
    assert split.dataset.n == 120
    assert len(cfg.folds_of()) == 3


def test_run_config_from_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("dataset.kind = spiral\ndataset.turns = 1.5\n")
    cfg = RunConfig.from_file(str(path))
    assert cfg.dataset_kind == "spiral"
    assert cfg.dataset_args["turns"] == 1.5
    assert cfg.dataset_args["noise_std"] == 0.13
