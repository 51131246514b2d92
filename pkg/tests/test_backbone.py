import json

import numpy as np
import pytest
import torch

from diu_hfr.backbone import (
    NetworkConfig,
    build_network,
    clone_as_student,
    forward,
    parameter_digest,
    replicate_channels,
)
from diu_hfr.checkpoint import load_checkpoint, save_checkpoint
from diu_hfr.errors import CheckpointError, ConfigurationError, DataError, ShapeError


@pytest.fixture(scope="module")
def net():
    return build_network(NetworkConfig(seed=7))


def images(n, seed=0):
    return np.random.default_rng(seed).uniform(size=(n, 32, 32, 3)).astype(np.float32)


def test_build_is_deterministic(net):
    other = build_network(NetworkConfig(seed=7))
    for (na, a), (nb, b) in zip(net.named_parameters(), other.named_parameters()):
        assert na == nb
        assert torch.equal(a, b)


def test_different_seed_differs(net):
    assert parameter_digest(net) != parameter_digest(build_network(NetworkConfig(seed=8)))


def test_forward_shape(net):
    assert forward(net, images(5)).shape == (5, 64)


def test_forward_zeros_finite(net):
    out = forward(net, np.zeros((3, 32, 32, 3)))
    assert out.shape == (3, 64) and np.all(np.isfinite(out))


def test_forward_pure(net):
    x = images(4, 1)
    assert np.array_equal(forward(net, x), forward(net, x))


def test_forward_rejects_bad_input(net):
    with pytest.raises(ShapeError):
        forward(net, np.zeros((2, 16, 16, 3)))
    bad = images(2)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(DataError):
        forward(net, bad)


@pytest.mark.parametrize(
    "kwargs", [{"num_blocks": 0}, {"embedding_dim": 0}, {"num_blocks": 3, "channels_per_block": (8, 8)}]
)
def test_invalid_config(kwargs):
    with pytest.raises(ConfigurationError):
        NetworkConfig(**kwargs)


def test_configurable_resolution():
    big = build_network(NetworkConfig(input_height=112, input_width=112, num_blocks=4))
    assert forward(big, np.zeros((1, 112, 112, 3))).shape == (1, 64)


class TestPartition:
    @pytest.mark.parametrize("k", range(0, 9))
    def test_complete_and_disjoint(self, net, k):
        _, part = clone_as_student(net, k)
        names = {n for n, _ in net.named_parameters()}
        assert part.trainable_ids | part.frozen_ids == names
        assert not part.trainable_ids & part.frozen_ids

    def test_zero_is_all_frozen(self, net):
        student, part = clone_as_student(net, 0)
        assert part.trainable_ids == frozenset()
        assert not any(p.requires_grad for p in student.parameters())

    def test_full_keeps_head_frozen(self, net):
        _, part = clone_as_student(net, net.num_blocks)
        assert set(net.head_parameter_names()) <= part.frozen_ids
        assert part.frozen_ids == set(net.head_parameter_names())

    def test_three_of_eight(self, net):
        _, part = clone_as_student(net, 3)
        expected = {n for i in (1, 2, 3) for n in net.block_parameter_names(i)}
        assert part.trainable_ids == expected

    def test_out_of_range(self, net):
        with pytest.raises(ConfigurationError):
            clone_as_student(net, 9)

    def test_init_identity(self, net):
        student, _ = clone_as_student(net, 4)
        x = images(6, 3)
        assert np.array_equal(forward(student, x), forward(net, x))

    def test_teacher_not_shared(self, net):
        student, _ = clone_as_student(net, 2)
        before = parameter_digest(net)
        with torch.no_grad():
            next(student.parameters()).add_(1.0)
        assert parameter_digest(net) == before


class TestReplicate:
    def test_single_channel(self):
        out = replicate_channels(np.full((2, 2, 1), 0.5))
        assert out.shape == (2, 2, 3) and np.all(out == 0.5)

    def test_passthrough(self):
        x = np.random.default_rng(0).uniform(size=(4, 4, 3))
        assert replicate_channels(x) is x

    def test_two_channels(self):
        with pytest.raises(DataError):
            replicate_channels(np.zeros((2, 2, 2)))


class TestCheckpoint:
    def test_roundtrip(self, net, tmp_path):
        save_checkpoint(net, tmp_path / "ck", diu_cutoff=3, hyperparameters={"lr": 1e-3})
        loaded, meta = load_checkpoint(tmp_path / "ck")
        assert parameter_digest(loaded) == parameter_digest(net)
        assert meta["diu_cutoff"] == 3 and meta["format_version"] == 1

    def test_layout(self, net, tmp_path):
        save_checkpoint(net, tmp_path / "ck")
        manifest = json.loads((tmp_path / "ck" / "manifest.json").read_text())
        total = sum(int(np.prod(e["shape"])) for e in manifest)
        assert (tmp_path / "ck" / "params.bin").stat().st_size == 4 * total
        assert manifest[0]["name"].startswith("blocks.0.") and manifest[-1]["name"].startswith("head.")
        offsets = [e["offset"] for e in manifest]
        assert offsets == sorted(offsets) and offsets[0] == 0

    def test_version_mismatch(self, net, tmp_path):
        save_checkpoint(net, tmp_path / "ck")
        meta_path = tmp_path / "ck" / "meta.json"
        meta = json.loads(meta_path.read_text())
        meta["format_version"] = 99
        meta_path.write_text(json.dumps(meta))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(tmp_path / "ck")

    def test_shape_mismatch(self, net, tmp_path):
        save_checkpoint(net, tmp_path / "ck")
        path = tmp_path / "ck" / "manifest.json"
        manifest = json.loads(path.read_text())
        manifest[0]["shape"] = [1, 2, 3, 4]
        path.write_text(json.dumps(manifest))
        with pytest.raises(CheckpointError, match="shape"):
            load_checkpoint(tmp_path / "ck")

    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nothing")
