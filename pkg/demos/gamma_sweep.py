"""
Sweeping the loss blend on one fold
===================================

"""

# gamma = 0 is pure contrastive adaptation and gamma = 1 is pure
# distillation. At gamma = 1 the student starts at zero distillation loss
# with a zero gradient, so it never leaves the teacher.
from diu_hfr.config import ExperimentConfig
from diu_hfr.experiment import Experiment
from diu_hfr.trainer import run_ablation

config = ExperimentConfig.from_dict({"teacher": {"epochs": 30}, "train": {"epochs": 10}})
exp = Experiment(config)
folds = exp.folds[:1]

teachers = {0: exp.teacher(0)}
table = run_ablation("gamma", [0.0, 0.5, 0.75, 1.0], config.train, exp.dataset, exp.protocol, teachers, folds=folds)
print(table.summary())
