from pathlib import Path

import pytest

from diu_hfr.config import ExperimentConfig
from diu_hfr.errors import ConfigurationError
from diu_hfr.seeding import derive_seed, make_rng


def test_defaults():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.train.diu_cutoff == 4
    assert cfg.loss.gamma == 0.75
    assert cfg.network.input_height == cfg.data.image_size == 32
    assert cfg.data.n_identities == 40 and cfg.data.n_samples == 20


def test_child_seeds_are_labeled_and_independent():
    a = ExperimentConfig.from_dict({"seed": 5})
    assert a.data.seed == derive_seed(5, "data")
    assert len({a.data.seed, a.network.seed, a.teacher.seed, a.train.seed}) == 4
    assert ExperimentConfig.from_dict({"seed": 6}).data.seed != a.data.seed


def test_derive_seed_stable():
    assert derive_seed(0, "data") == derive_seed(0, "data")
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)
    assert make_rng(3, "x").integers(1 << 30) == make_rng(3, "x").integers(1 << 30)


@pytest.mark.parametrize(
    "doc",
    [
        {"loss": {"gama": 0.5}},
        {"trian": {}},
        {"data": {"target": {"blur": 1.0}}},
        {"train": {"diu_cutoff": 9}},
        {"loss": {"gamma": 2.0}},
        {"train": {"learning_rate": "fast"}},
    ],
)
def test_rejects(doc):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(doc)


def test_overrides_and_nested_tables(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        'seed = 1\noutput_dir = "a"\n[data]\nn_identities = 20\n[data.target]\nblur_sigma = 0.5\n'
        "[train]\nbeta1 = 0.8\n[network]\nnum_blocks = 4\n"
    )
    cfg = ExperimentConfig.load(path, seed=9, output_dir="b")
    assert cfg.seed == 9 and cfg.output_dir == "b"
    assert cfg.data.target.blur_sigma == 0.5 and cfg.data.target.name == "target"
    assert cfg.train.optimizer.beta1 == 0.8
    assert cfg.train.diu_cutoff == 2


def test_load_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[data\n")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.load(bad)


def test_resolved_digest():
    a = ExperimentConfig.from_dict({})
    assert a.digest() == ExperimentConfig.from_dict({}).digest()
    assert a.digest() != ExperimentConfig.from_dict({"loss": {"gamma": 0.5}}).digest()
    assert a.resolved()["train"]["loss"]["gamma"] == 0.75


def test_shipped_default_config_matches_builtin():
    path = Path(__file__).parent.parent / "configs" / "default.toml"
    assert ExperimentConfig.load(path).digest() == ExperimentConfig.from_dict({}).digest()
