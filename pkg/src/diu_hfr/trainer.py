"""Teacher pretraining and the DIU adaptation loop, plus ablation sweeps.

Each DIU step embeds a pair batch with the student (both modalities) and the
teacher (source only). Embedding gradients come from :mod:`diu_hfr.losses`
and are pushed through the student with autograd; Adam then updates the
trainable blocks only.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .backbone import EmbeddingNetwork, NetworkConfig, build_network, clone_as_student, to_tensor
from .checkpoint import save_checkpoint
from .errors import ConfigurationError, ShapeError, TrainingDivergedError
from .evaluation import METRICS, EvalReport, aggregate_folds, evaluate
from .losses import LossConfig, loss_gradients, total_loss
from .seeding import make_rng
from .synthdata import Fold, SyntheticDataset, SyntheticProtocol, sample_pairs


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict, config: AdamConfig = AdamConfig()) -> AdamState:
        def zero(p):
            return torch.zeros_like(p) if isinstance(p, torch.Tensor) else np.zeros_like(p)

        return cls(
            m={k: zero(p) for k, p in params.items()},
            v={k: zero(p) for k, p in params.items()},
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.adam_eps,
        )


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update; works on numpy arrays or torch tensors.

    ``state`` is advanced in place and also returned.
    """
    if set(params) != set(grads):
        raise ShapeError("params and grads have different keys")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    updated = {}
    for name, p in params.items():
        g = grads[name]
        if tuple(g.shape) != tuple(p.shape):
            raise ShapeError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {name}")
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        updated[name] = p - lr * m_hat / (v_hat**0.5 + state.eps)
    return updated, state


@dataclass(frozen=True)
class TeacherConfig:
    learning_rate: float = 1e-3
    epochs: int = 60
    batch_size: int = 64
    # Mean embedding norm the head is rescaled to after pretraining.
    embedding_norm: float = 0.03
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError(f"teacher learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 2:
            raise ConfigurationError("teacher epochs must be >= 1 and batch_size >= 2")
        if self.embedding_norm <= 0:
            raise ConfigurationError(f"teacher embedding_norm must be > 0, got {self.embedding_norm}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 48
    diu_cutoff: int | None = None  # None -> num_blocks // 2
    loss: LossConfig = LossConfig()
    optimizer: AdamConfig = AdamConfig()
    seed: int = 0
    steps_per_epoch: int | None = None  # None -> ceil(train identities * samples / batch_size)
    genuine_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.diu_cutoff is not None and self.diu_cutoff < 0:
            raise ConfigurationError(f"diu_cutoff must be >= 0, got {self.diu_cutoff}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigurationError(f"steps_per_epoch must be >= 1, got {self.steps_per_epoch}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)
    epoch_snapshots: list[dict] = field(default_factory=list)
    wall_clock: float = 0.0
    checkpoint: str | None = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())

    def epoch_mean(self, key: str, epoch: int) -> float:
        values = [r[key] for r in self.records if r["epoch"] == epoch]
        return float(np.mean(values))


def _finite_or_raise(value: float, step: int, what: str, log: TrainLog) -> None:
    if not math.isfinite(value):
        err = TrainingDivergedError(step, f"{what}={value}")
        err.log = log
        raise err


def train_teacher(
    dataset: SyntheticDataset,
    fold: Fold,
    network: NetworkConfig = NetworkConfig(),
    config: TeacherConfig = TeacherConfig(),
    checkpoint_dir=None,
) -> tuple[EmbeddingNetwork, TrainLog]:
    """Pretrain an embedding network by identity classification on source images.

    Only the fold's training identities are used. The temporary softmax head
    is discarded afterwards.
    """
    ids = np.asarray(fold.train_ids)
    if ids.size < 2:
        raise ConfigurationError("teacher training needs at least 2 identities")
    net = build_network(network)
    images = dataset.images["source"][ids]  # (n_id, n_samples, H, W, 3)
    n_id, n_samples = images.shape[:2]
    x_all = to_tensor(images.reshape(-1, *images.shape[2:]))
    y_all = torch.from_numpy(np.repeat(np.arange(n_id), n_samples))

    head = torch.nn.Linear(network.embedding_dim, n_id)
    bound = 1.0 / math.sqrt(network.embedding_dim)
    with torch.no_grad():
        w = make_rng(config.seed, "teacher-head").uniform(-bound, bound, size=(n_id, network.embedding_dim))
        head.weight.copy_(torch.from_numpy(w.astype(np.float32)))
        head.bias.zero_()
    params = {f"net.{n}": p for n, p in net.named_parameters()} | {f"head.{n}": p for n, p in head.named_parameters()}
    state = AdamState.zeros_like({k: p.detach() for k, p in params.items()})
    rng = make_rng(config.seed, "teacher-batches")
    log = TrainLog()
    started = time.perf_counter()
    n = x_all.shape[0]
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = torch.from_numpy(order[start : start + config.batch_size])
            logits = head(net(x_all[idx]))
            loss = torch.nn.functional.cross_entropy(logits, y_all[idx])
            step += 1
            _finite_or_raise(loss.item(), step, "cross_entropy", log)
            for p in params.values():
                p.grad = None
            loss.backward()
            grads = {k: p.grad for k, p in params.items()}
            new, state = adam_step({k: p.detach() for k, p in params.items()}, grads, state, config.learning_rate)
            with torch.no_grad():
                for k, p in params.items():
                    p.copy_(new[k])
            log.records.append({"step": step, "epoch": epoch, "cross_entropy": loss.item()})
    for p in net.parameters():
        p.grad = None
        p.requires_grad_(False)
    scale = _normalize_embedding_scale(net, x_all, config.embedding_norm)
    log.wall_clock = time.perf_counter() - started
    if checkpoint_dir is not None:
        hyper = {"teacher": asdict(config), "fold": fold.index, "head_rescale": scale}
        save_checkpoint(net, checkpoint_dir, hyperparameters=hyper)
        log.checkpoint = str(checkpoint_dir)
    return net, log


def _normalize_embedding_scale(net: EmbeddingNetwork, images: torch.Tensor, target: float) -> float:
    """Rescale the head so embeddings of ``images`` have mean norm ``target``.

    Cosine scores are unaffected. The scale sets how hard the (unsquared)
    distillation distance pulls against the cosine terms. Returns the factor.
    """
    with torch.no_grad():
        factor = target / float(net(images).norm(dim=1).mean())
        net.head.weight.mul_(factor)
        net.head.bias.mul_(factor)
    return factor


def resolve_steps_per_epoch(config: TrainConfig, fold: Fold, n_samples: int) -> int:
    if config.steps_per_epoch is not None:
        return config.steps_per_epoch
    return math.ceil(len(fold.train_ids) * n_samples / config.batch_size)


def train_diu(
    teacher: EmbeddingNetwork,
    dataset: SyntheticDataset,
    fold: Fold,
    config: TrainConfig = TrainConfig(),
    checkpoint_dir=None,
    on_epoch=None,
) -> tuple[EmbeddingNetwork, TrainLog]:
    """Adapt the lower ``diu_cutoff`` blocks of a copy of ``teacher``.

    ``on_epoch(epoch, student)`` may return a dict that is stored as that
    epoch's snapshot.
    """
    k = teacher.num_blocks // 2 if config.diu_cutoff is None else config.diu_cutoff
    if k > teacher.num_blocks:
        raise ConfigurationError(f"diu_cutoff={k} exceeds num_blocks={teacher.num_blocks}")
    expected = (teacher.config.input_height, teacher.config.input_width)
    if expected != (dataset.config.image_size, dataset.config.image_size):
        raise ConfigurationError(f"teacher input {expected} does not match dataset image_size {dataset.config.image_size}")
    student, partition = clone_as_student(teacher, k)
    trainable = {n: p for n, p in student.named_parameters() if n in partition.trainable_ids}
    state = AdamState.zeros_like({n: p.detach() for n, p in trainable.items()}, config.optimizer)
    rng = make_rng(config.seed, "pairs", fold.index)
    steps_per_epoch = resolve_steps_per_epoch(config, fold, dataset.config.n_samples)
    cfg = config.loss
    log = TrainLog()
    started = time.perf_counter()
    step = 0
    for epoch in range(config.epochs):
        for _ in range(steps_per_epoch):
            step += 1
            batch = sample_pairs(dataset, fold, config.batch_size, config.genuine_fraction, rng)
            b = config.batch_size
            x = to_tensor(np.concatenate([batch.source, batch.target]))
            with torch.set_grad_enabled(bool(trainable)):
                emb = student(x)
            with torch.no_grad():
                e_teacher = teacher(x[:b]).numpy().astype(np.float64)
            e = emb.detach().numpy().astype(np.float64)
            e_s, e_t = e[:b], e[b:]
            parts = total_loss(e_s, e_t, e_teacher, batch.labels, cfg)
            _finite_or_raise(parts.total, step, "total", log)
            log.records.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "contrastive": parts.contrastive,
                    "distillation": parts.distillation,
                    "total": parts.total,
                }
            )
            if not trainable:
                continue
            g_s, g_t = loss_gradients(e_s, e_t, e_teacher, batch.labels, cfg)
            for p in trainable.values():
                p.grad = None
            emb.backward(torch.from_numpy(np.concatenate([g_s, g_t]).astype(np.float32)))
            grads = {n: p.grad for n, p in trainable.items()}
            new, state = adam_step({n: p.detach() for n, p in trainable.items()}, grads, state, config.learning_rate)
            with torch.no_grad():
                for n, p in trainable.items():
                    p.copy_(new[n])
        if on_epoch is not None:
            snapshot = on_epoch(epoch, student)
            if snapshot is not None:
                log.epoch_snapshots.append({"epoch": epoch, **snapshot})
    for p in student.parameters():
        p.grad = None
        p.requires_grad_(False)
    log.wall_clock = time.perf_counter() - started
    if checkpoint_dir is not None:
        hyper = {"train": config.to_dict(), "fold": fold.index, "steps_per_epoch": steps_per_epoch}
        save_checkpoint(student, checkpoint_dir, diu_cutoff=k, hyperparameters=hyper)
        log.checkpoint = str(checkpoint_dir)
    return student, log


def evaluate_fold(net: EmbeddingNetwork, dataset: SyntheticDataset, fold: Fold) -> EvalReport:
    """Cross-modal evaluation: source enrollment against target probes."""
    return evaluate(net, dataset, fold.enrollment, fold.probe)


CSV_COLUMNS = ["value"] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]


@dataclass
class AblationRow:
    value: float
    reports: list[EvalReport]

    @property
    def stats(self) -> dict[str, tuple[float, float]]:
        return aggregate_folds(self.reports)

    def csv_row(self) -> dict:
        row = {"value": self.value}
        for name, (mean, std) in self.stats.items():
            row[f"{name}_mean"] = mean
            row[f"{name}_std"] = std
        return row


@dataclass
class AblationTable:
    axis: str
    rows: list[AblationRow]

    def write_csv(self, path) -> None:
        write_stats_csv(path, [r.csv_row() for r in self.rows])

    def summary(self) -> str:
        label = "k" if self.axis == "layers" else "gamma"
        lines = [f"{label:>6}  {'AUC':>14}  {'EER':>14}  {'Rank-1':>14}  {'VR@0.1%':>14}  {'VR@1%':>14}"]
        for r in self.rows:
            cells = [f"{100 * m:6.2f}±{100 * s:5.2f}" for m, s in (r.stats[n] for n in METRICS)]
            lines.append(f"{r.value:>6g}  " + "  ".join(f"{c:>14}" for c in cells))
        return "\n".join(lines)


def write_stats_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def ablation_config(axis: str, value: float, base: TrainConfig, num_blocks: int) -> TrainConfig:
    if axis == "layers":
        k = int(value)
        if k != value or not 0 <= k <= num_blocks:
            raise ConfigurationError(f"layer count must be an integer in [0, {num_blocks}], got {value}")
        return replace(base, diu_cutoff=k)
    if axis == "gamma":
        return replace(base, loss=replace(base.loss, gamma=float(value)))
    raise ConfigurationError(f"unknown ablation axis {axis!r}; expected 'layers' or 'gamma'")


def run_ablation(
    axis: str,
    values,
    base: TrainConfig,
    dataset: SyntheticDataset,
    protocol: SyntheticProtocol,
    teachers: dict[int, EmbeddingNetwork],
    folds=None,
) -> AblationTable:
    """Train and evaluate one student per (value, fold); one row per value."""
    folds = list(protocol.folds if folds is None else folds)
    num_blocks = next(iter(teachers.values())).num_blocks
    configs = [ablation_config(axis, v, base, num_blocks) for v in values]  # validate everything up front
    rows = []
    for value, cfg in zip(values, configs):
        reports = []
        for fold in folds:
            student, _ = train_diu(teachers[fold.index], dataset, fold, cfg)
            reports.append(evaluate_fold(student, dataset, fold))
        rows.append(AblationRow(float(value), reports))
    return AblationTable(axis, rows)
