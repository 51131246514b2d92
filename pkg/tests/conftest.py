import pytest

from diu_hfr.synthdata import DataConfig, build_protocol, generate_dataset
from diu_hfr.trainer import TeacherConfig, train_teacher

TINY_DATA = DataConfig(seed=1, n_identities=10, n_samples=4, n_folds=5)
TINY_TEACHER = TeacherConfig(epochs=2, batch_size=16)


@pytest.fixture(scope="session")
def tiny():
    """Small dataset, protocol and fold-0 teacher for fast trainer tests."""
    dataset = generate_dataset(TINY_DATA)
    protocol = build_protocol(TINY_DATA.seed, TINY_DATA.n_identities, TINY_DATA.n_samples, TINY_DATA.n_folds)
    teacher, _ = train_teacher(dataset, protocol.folds[0], config=TINY_TEACHER)
    return dataset, protocol, teacher


class Benchmark:
    """Default seed-0 experiment with per-variant fold reports computed once."""

    def __init__(self):
        from diu_hfr.config import ExperimentConfig
        from diu_hfr.experiment import Experiment

        self.experiment = Experiment(ExperimentConfig())
        self._reports = {}
        self.logs = {}

    def _train(self, variant):
        exp = self.experiment
        if variant == "default":
            return exp.config.train
        axis, value = variant
        return exp.with_gamma(value) if axis == "gamma" else exp.with_cutoff(value)

    def reports(self, variant):
        if variant not in self._reports:
            exp = self.experiment
            if variant == "teacher":
                self._reports[variant] = exp.teacher_reports()
            else:
                runs = [exp.train_student(f.index, self._train(variant)) for f in exp.folds]
                self.logs[variant] = [log for _, log in runs]
                self._reports[variant] = [exp.evaluate(net, i) for i, (net, _) in enumerate(runs)]
        return self._reports[variant]


@pytest.fixture(scope="session")
def benchmark():
    return Benchmark()


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
