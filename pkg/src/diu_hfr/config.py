"""Experiment configuration: a TOML document with strict keys.

Layout::

    seed = 0
    output_dir = "runs/default"
    [data]      # DataConfig fields except seed; [data.source] / [data.target] tables
    [network]   # NetworkConfig fields except seed
    [teacher]   # TeacherConfig fields except seed
    [train]     # TrainConfig scalars plus beta1 / beta2 / adam_eps
    [loss]      # LossConfig fields

Child seeds for data, network initialization, teacher batches and pair
sampling are derived from the root ``seed`` by labeled hashing.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .backbone import NetworkConfig
from .errors import ConfigurationError
from .losses import LossConfig
from .seeding import derive_seed
from .synthdata import DataConfig, ModalitySpec
from .trainer import AdamConfig, TeacherConfig, TrainConfig

TOP_LEVEL = {"seed", "output_dir", "data", "network", "teacher", "train", "loss"}


def _check_keys(table: dict, allowed, where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def _fields(cls, exclude=()) -> list[str]:
    return [f.name for f in dataclasses.fields(cls) if f.name not in exclude]


def _construct(cls, kwargs: dict, where: str):
    try:
        return cls(**kwargs)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{where}]: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def loss(self) -> LossConfig:
        return self.train.loss

    @classmethod
    def from_dict(cls, doc: dict, *, seed: int | None = None, output_dir: str | None = None) -> ExperimentConfig:
        _check_keys(doc, TOP_LEVEL, "top level")
        root = int(doc.get("seed", 0) if seed is None else seed)
        out = str(doc.get("output_dir", "runs/default") if output_dir is None else output_dir)

        data_doc = dict(doc.get("data", {}))
        _check_keys(data_doc, _fields(DataConfig, ("seed",)), "data")
        for name in ("source", "target"):
            if name in data_doc:
                sub = dict(data_doc[name])
                _check_keys(sub, _fields(ModalitySpec, ("name",)), f"data.{name}")
                base = getattr(DataConfig(), name).to_dict() | sub
                data_doc[name] = _construct(ModalitySpec, base, f"data.{name}")
        data = _construct(DataConfig, {**data_doc, "seed": derive_seed(root, "data")}, "data")

        net_doc = dict(doc.get("network", {}))
        _check_keys(net_doc, _fields(NetworkConfig, ("seed",)), "network")
        net_doc.setdefault("input_height", data.image_size)
        net_doc.setdefault("input_width", data.image_size)
        network = _construct(NetworkConfig, {**net_doc, "seed": derive_seed(root, "network")}, "network")

        teacher_doc = dict(doc.get("teacher", {}))
        _check_keys(teacher_doc, _fields(TeacherConfig, ("seed",)), "teacher")
        teacher = _construct(TeacherConfig, {**teacher_doc, "seed": derive_seed(root, "teacher")}, "teacher")

        loss_doc = dict(doc.get("loss", {}))
        _check_keys(loss_doc, _fields(LossConfig), "loss")
        loss = _construct(LossConfig, loss_doc, "loss")

        train_doc = dict(doc.get("train", {}))
        adam_keys = _fields(AdamConfig)
        _check_keys(train_doc, _fields(TrainConfig, ("loss", "optimizer", "seed")) + adam_keys, "train")
        adam = _construct(AdamConfig, {k: train_doc.pop(k) for k in adam_keys if k in train_doc}, "train")
        train_doc.setdefault("diu_cutoff", network.num_blocks // 2)
        if train_doc["diu_cutoff"] is not None and train_doc["diu_cutoff"] > network.num_blocks:
            raise ConfigurationError(
                f"[train] diu_cutoff={train_doc['diu_cutoff']} exceeds network.num_blocks={network.num_blocks}"
            )
        train = _construct(
            TrainConfig, {**train_doc, "loss": loss, "optimizer": adam, "seed": derive_seed(root, "train")}, "train"
        )
        return cls(root, out, data, network, teacher, train)

    @classmethod
    def load(cls, path, **overrides) -> ExperimentConfig:
        try:
            doc = tomli.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"malformed config {path}: {exc}") from exc
        return cls.from_dict(doc, **overrides)

    def resolved(self) -> dict:
        """Every setting with defaults and derived seeds expanded."""
        train = dataclasses.asdict(self.train)
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "data": self.data.to_dict(),
            "network": self.network.to_dict(),
            "teacher": dataclasses.asdict(self.teacher),
            "train": train,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.resolved(), sort_keys=True).encode()).hexdigest()
