"""Command-line entry point: ``diu-hfr {gen-data,train,eval,ablate} CONFIG ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

Output layout under ``output_dir``::

    dataset/            index.json, images/*.f32, protocol.json, run.json
    folds/<N>/teacher/  checkpoint/, log.jsonl, run.json
    folds/<N>/diu/      checkpoint/, log.jsonl, run.json
    eval/<label>/       fold<N>.json, aggregate.csv, run.json
    ablation/           <axis>.csv, <axis>.txt, run.json
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import ExperimentConfig
from .errors import ConfigurationError, DIUError, TrainingDivergedError
from .evaluation import EvalReport, aggregate_folds
from .synthdata import generate_dataset, load_dataset, load_protocol, save_dataset, save_protocol
from .trainer import ablation_config, evaluate_fold, run_ablation, train_diu, train_teacher, write_stats_csv
from .experiment import protocol_for


class CommandError(DIUError):
    """Runtime failure reported to the user with exit code 1."""


def _content_hash(config: ExperimentConfig, inputs) -> str:
    h = hashlib.sha256()
    h.update(config.digest().encode())
    for path in sorted(Path(p) for p in inputs):
        if path.is_file():
            h.update(str(path.name).encode())
            h.update(hashlib.sha256(path.read_bytes()).digest())
    return h.hexdigest()


def _write_run(directory: Path, command: str, argv, config: ExperimentConfig, inputs=()) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    run = {
        "command": command,
        "argv": list(argv),
        "config": config.resolved(),
        "inputs_sha256": _content_hash(config, inputs),
    }
    (directory / "run.json").write_text(json.dumps(run, indent=2, sort_keys=True) + "\n")


def _paths(config: ExperimentConfig):
    root = Path(config.output_dir)
    return root, root / "dataset"


def _load_data(config: ExperimentConfig):
    _, data_dir = _paths(config)
    if not (data_dir / "index.json").exists():
        raise CommandError(f"dataset not found at {data_dir}; run gen-data first")
    dataset = load_dataset(data_dir)
    if dataset.config.to_dict() != config.data.to_dict():
        raise CommandError(f"dataset at {data_dir} was generated with a different [data] config; rerun gen-data")
    return dataset, load_protocol(data_dir / "protocol.json")


def _fold(protocol, index: int):
    if not 0 <= index < len(protocol.folds):
        raise ConfigurationError(f"fold {index} outside 0..{len(protocol.folds) - 1}")
    return protocol.folds[index]


def _stage_dir(config: ExperimentConfig, fold: int, stage: str) -> Path:
    return Path(config.output_dir) / "folds" / str(fold) / stage


def _load_teacher(config: ExperimentConfig, fold: int):
    ckpt = _stage_dir(config, fold, "teacher") / "checkpoint"
    if not (ckpt / "meta.json").exists():
        raise CommandError(f"teacher checkpoint not found for fold {fold} (expected {ckpt}); run `train --stage teacher --fold {fold}` first")
    net, _ = load_checkpoint(ckpt)
    return net, ckpt


def cmd_gen_data(config: ExperimentConfig, args) -> int:
    _, data_dir = _paths(config)
    dataset = generate_dataset(config.data)
    save_dataset(dataset, data_dir)
    save_protocol(protocol_for(config), data_dir / "protocol.json")
    _write_run(data_dir, "gen-data", args.argv, config)
    print(f"wrote {len(dataset.index_entries())} images and {config.data.n_folds} folds to {data_dir}")
    return 0


def _train_one(config: ExperimentConfig, args, dataset, protocol, fold_index: int) -> None:
    fold = _fold(protocol, fold_index)
    out = _stage_dir(config, fold_index, args.stage)
    out.mkdir(parents=True, exist_ok=True)
    data_inputs = [Path(config.output_dir) / "dataset" / "index.json"]
    try:
        if args.stage == "teacher":
            _, log = train_teacher(dataset, fold, config.network, config.teacher, checkpoint_dir=out / "checkpoint")
            inputs = data_inputs
        else:
            teacher, ckpt = _load_teacher(config, fold_index)
            if teacher.config.to_dict() != config.network.to_dict():
                raise ConfigurationError("teacher checkpoint network config differs from [network]")
            _, log = train_diu(teacher, dataset, fold, config.train, checkpoint_dir=out / "checkpoint")
            inputs = data_inputs + [ckpt / "params.bin"]
    except TrainingDivergedError as exc:
        exc.log.write(out / "log.jsonl")
        raise
    log.write(out / "log.jsonl")
    _write_run(out, f"train --stage {args.stage} --fold {fold_index}", args.argv, config, inputs)
    last = log.records[-1] if log.records else {}
    print(f"fold {fold_index} {args.stage}: {len(log.records)} steps, last {json.dumps(last, sort_keys=True)}")


def cmd_train(config: ExperimentConfig, args) -> int:
    dataset, protocol = _load_data(config)
    folds = range(len(protocol.folds)) if args.all_folds else [args.fold]
    for f in folds:
        _train_one(config, args, dataset, protocol, f)
    return 0


def cmd_eval(config: ExperimentConfig, args) -> int:
    dataset, protocol = _load_data(config)
    folds = list(range(len(protocol.folds))) if args.all_folds else [args.fold]
    label = args.label or (args.stage if args.checkpoint is None else Path(args.checkpoint).name)
    out = Path(config.output_dir) / "eval" / label
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    inputs = []
    for f in folds:
        fold = _fold(protocol, f)
        if args.checkpoint is not None:
            ckpt = Path(args.checkpoint.replace("{fold}", str(f)))
        else:
            ckpt = _stage_dir(config, f, args.stage) / "checkpoint"
        if not (ckpt / "meta.json").exists():
            raise CommandError(f"checkpoint not found: {ckpt}")
        net, _ = load_checkpoint(ckpt)
        report = evaluate_fold(net, dataset, fold)
        (out / f"fold{f}.json").write_text(report.to_json())
        if args.roc_csv:
            report.dump_roc_csv(out / f"fold{f}_roc.csv")
        reports.append(report)
        inputs.append(ckpt / "params.bin")
        print(f"fold {f}: EER {report.eer:.4f}  AUC {report.auc:.4f}  Rank-1 {report.rank1:.4f}  VR@1% {report.vr_at_far[1e-2]:.4f}")
    if args.all_folds:
        row = {"value": label}
        for name, (mean, std) in aggregate_folds(reports).items():
            row[f"{name}_mean"] = mean
            row[f"{name}_std"] = std
        write_stats_csv(out / "aggregate.csv", [row])
        print(f"aggregate written to {out / 'aggregate.csv'}")
    _write_run(out, "eval", args.argv, config, inputs)
    return 0


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"--values must be a comma-separated list of numbers, got {text!r}") from None


def cmd_ablate(config: ExperimentConfig, args) -> int:
    values = _parse_values(args.values)
    if not values:
        raise ConfigurationError("--values is empty")
    for v in values:  # reject illegal values before any work happens
        ablation_config(args.axis, v, config.train, config.network.num_blocks)
    dataset, protocol = _load_data(config)
    teachers = {}
    for fold in protocol.folds:
        ckpt = _stage_dir(config, fold.index, "teacher") / "checkpoint"
        if (ckpt / "meta.json").exists():
            teachers[fold.index], _ = load_checkpoint(ckpt)
        else:
            teachers[fold.index], _ = train_teacher(dataset, fold, config.network, config.teacher, checkpoint_dir=ckpt)
    table = run_ablation(args.axis, values, config.train, dataset, protocol, teachers)
    out = Path(config.output_dir) / "ablation"
    out.mkdir(parents=True, exist_ok=True)
    table.write_csv(out / f"{args.axis}.csv")
    summary = table.summary()
    (out / f"{args.axis}.txt").write_text(summary + "\n")
    _write_run(out, f"ablate --axis {args.axis}", args.argv, config)
    print(summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diu-hfr", description="Domain-invariant unit training on synthetic paired-modality data.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="TOML experiment config (may be empty for all defaults)")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--out", default=None, help="override output_dir")

    common(sub.add_parser("gen-data", help="render the synthetic dataset and fold protocol"))

    p = sub.add_parser("train", help="train a teacher or a DIU student")
    common(p)
    p.add_argument("--stage", choices=["teacher", "diu"], required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fold", type=int, default=0)
    g.add_argument("--all-folds", action="store_true")

    p = sub.add_parser("eval", help="evaluate checkpoints cross-modally")
    common(p)
    p.add_argument("--checkpoint", default=None, help="checkpoint directory; '{fold}' is substituted")
    p.add_argument("--stage", choices=["teacher", "diu"], default="diu", help="checkpoint to use when --checkpoint is absent")
    p.add_argument("--label", default=None, help="name of the eval output directory")
    p.add_argument("--roc-csv", action="store_true", help="also dump ROC points as CSV")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--fold", type=int, default=0)
    g.add_argument("--all-folds", action="store_true")

    p = sub.add_parser("ablate", help="sweep DIU depth or gamma across all folds")
    common(p)
    p.add_argument("--axis", choices=["layers", "gamma"], required=True)
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 0,0.25,0.5,0.75,1")
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        config = ExperimentConfig.load(args.config, seed=args.seed, output_dir=args.out)
        return COMMANDS[args.command](config, args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DIUError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
