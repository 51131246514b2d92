"""In-process orchestration of a full experiment from an :class:`ExperimentConfig`."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .backbone import EmbeddingNetwork
from .config import ExperimentConfig
from .evaluation import EvalReport, aggregate_folds
from .synthdata import SyntheticDataset, SyntheticProtocol, build_protocol, generate_dataset
from .trainer import AblationTable, TrainConfig, evaluate_fold, run_ablation, train_diu, train_teacher


def protocol_for(config: ExperimentConfig) -> SyntheticProtocol:
    d = config.data
    return build_protocol(d.seed, d.n_identities, d.n_samples, d.n_folds)


@dataclass
class Experiment:
    """Lazily generated data and per-fold teachers for one configuration."""

    config: ExperimentConfig
    dataset: SyntheticDataset | None = None
    protocol: SyntheticProtocol | None = None
    teachers: dict[int, EmbeddingNetwork] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dataset is None:
            self.dataset = generate_dataset(self.config.data)
        if self.protocol is None:
            self.protocol = protocol_for(self.config)

    @property
    def folds(self):
        return self.protocol.folds

    def teacher(self, fold_index: int) -> EmbeddingNetwork:
        if fold_index not in self.teachers:
            fold = self.folds[fold_index]
            self.teachers[fold_index], _ = train_teacher(
                self.dataset, fold, self.config.network, self.config.teacher
            )
        return self.teachers[fold_index]

    def train_student(self, fold_index: int, train: TrainConfig | None = None):
        cfg = self.config.train if train is None else train
        return train_diu(self.teacher(fold_index), self.dataset, self.folds[fold_index], cfg)

    def evaluate(self, net: EmbeddingNetwork, fold_index: int) -> EvalReport:
        return evaluate_fold(net, self.dataset, self.folds[fold_index])

    def teacher_reports(self) -> list[EvalReport]:
        return [self.evaluate(self.teacher(f.index), f.index) for f in self.folds]

    def student_reports(self, train: TrainConfig | None = None) -> list[EvalReport]:
        return [self.evaluate(self.train_student(f.index, train)[0], f.index) for f in self.folds]

    def ablate(self, axis: str, values) -> AblationTable:
        teachers = {f.index: self.teacher(f.index) for f in self.folds}
        return run_ablation(axis, values, self.config.train, self.dataset, self.protocol, teachers)

    def with_gamma(self, gamma: float) -> TrainConfig:
        return replace(self.config.train, loss=replace(self.config.train.loss, gamma=gamma))

    def with_cutoff(self, k: int) -> TrainConfig:
        return replace(self.config.train, diu_cutoff=k)


def summarize(reports) -> dict[str, tuple[float, float]]:
    return aggregate_folds(reports)
