"""Command-line surface: synth | train | eval | gradcheck | sweep.

Every run is driven by a JSON config (see `RunConfig`) plus flag
overrides, takes a mandatory seed, and writes a frozen manifest (the fully
resolved config plus the git hash) beside its outputs, so any artifact can
be regenerated. In deterministic mode (the default; there is no parallel
mode) identical config + seed reproduce byte-identical outputs.

Exit codes: 0 success, 2 config error, 3 data/parse error, 4 numeric
error, 5 usage error, 6 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import subprocess
import sys
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import training as training_mod
from .errors import AdfuseError, ConfigError, DataError, NumericError, UsageError
from .model import ModelConfig, build

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_USAGE = 5
EXIT_IO = 6

CURVE_COLUMNS = [
    "epoch",
    "lr",
    "loss_total",
    "loss_share",
    "loss_topic",
    "loss_sentiment",
    "val_topic_map",
    "val_sentiment_map",
]


@dataclass
class RunConfig:
    """Everything a train/eval/sweep run needs; JSON-serializable."""

    seed: int
    dataset: str = ""
    out_dir: str = "runs/run"
    batch_size: int = 64
    base_lr: float = 0.001
    weight_decay: float = 0.0001
    alpha: float = 200.0
    beta: float = 50.0
    epochs: int = 45
    decay_every: int = 15
    decay_factor: float = 0.1
    split_fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    split_seed: int | None = None  # defaults to seed
    threshold: float = 0.5
    deterministic: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    def resolved_split_seed(self) -> int:
        return self.seed if self.split_seed is None else self.split_seed

    def to_dict(self) -> dict:
        out = asdict(self)
        out["split_fractions"] = list(self.split_fractions)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        obj = dict(obj)
        if "seed" not in obj:
            raise ConfigError("run config must set a seed")
        model = obj.pop("model", {})
        if isinstance(model, dict):
            try:
                model = ModelConfig(**model)
            except TypeError as exc:
                raise ConfigError(f"bad model config: {exc}") from exc
        if "split_fractions" in obj:
            obj["split_fractions"] = tuple(obj["split_fractions"])
        try:
            cfg = cls(model=model, **obj)
        except TypeError as exc:
            raise ConfigError(f"bad run config: {exc}") from exc
        cfg.model.validate()
        return cfg


def git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=10, check=False
        )
        return out.stdout.strip() or "unknown"
    except OSError:
        return "unknown"


def write_manifest(out_dir: Path, config: dict, command: str) -> None:
    manifest = {"command": command, "git_hash": git_hash(), "config": config}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _fmt(value: float) -> str:
    return "nan" if isinstance(value, float) and math.isnan(value) else repr(float(value))


def write_curve_csv(path: Path, history: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"]] + [_fmt(row[c]) for c in CURVE_COLUMNS[1:]])


def load_run_config(args) -> RunConfig:
    obj: dict = {}
    if args.config:
        try:
            obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    overrides = {
        "seed": args.seed,
        "dataset": getattr(args, "dataset", None),
        "out_dir": getattr(args, "out_dir", None),
        "batch_size": getattr(args, "batch_size", None),
        "base_lr": getattr(args, "lr", None),
        "alpha": getattr(args, "alpha", None),
        "beta": getattr(args, "beta", None),
        "epochs": getattr(args, "epochs", None),
    }
    for key, value in overrides.items():
        if value is not None:
            obj[key] = value
    model = obj.setdefault("model", {})
    if getattr(args, "single_task", None) is not None:
        model["single_task"] = args.single_task
    if getattr(args, "no_autoencoder", False):
        model["no_autoencoder"] = True
    if getattr(args, "no_hier_attention", False):
        model["no_hier_attention"] = True
    if getattr(args, "dropout", None) is not None:
        model["dropout_rate"] = args.dropout
    return RunConfig.from_dict(obj)


# ------------------------------------------------------------------- verbs


def cmd_synth(args) -> int:
    obj: dict = {}
    if args.config:
        obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        obj["seed"] = args.seed
    if args.n_records is not None:
        obj["n_records"] = args.n_records
    try:
        cfg = data_mod.SynthConfig(**obj)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}") from exc
    header, records = data_mod.synth_generate(cfg)
    if not records:
        print("warning: generating an empty dataset (n_records=0)", file=sys.stderr)
    try:
        data_mod.save_dataset(args.out, header, records)
    except OSError as exc:
        raise _IoFailure(f"cannot write {args.out}: {exc}") from exc
    print(
        f"wrote {header.n_records} records to {args.out} "
        f"(d_img={header.d_img}, d_obj={header.d_obj}, d_word={header.d_word}, "
        f"topics={header.n_topics}, sentiments={header.n_sentiments})"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    if not cfg.dataset:
        raise ConfigError("train needs a dataset path (config key 'dataset' or --dataset)")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, cfg.to_dict(), "train")

    header, records = data_mod.load_dataset(cfg.dataset)
    _check_dims(cfg.model, header)
    train_recs, val_recs, test_recs = data_mod.split(records, cfg.split_fractions, cfg.resolved_split_seed())
    if not train_recs or not val_recs:
        raise UsageError(f"empty split: train={len(train_recs)}, val={len(val_recs)}")

    model = build(cfg.model, cfg.seed)
    print(f"model: {model.num_params} trainable parameters "
          f"(alpha={cfg.alpha}, beta={cfg.beta}, batch_size={cfg.batch_size}, seed={cfg.seed})")
    weights = training_mod.LossWeights(alpha=cfg.alpha, beta=cfg.beta)
    schedule = training_mod.Schedule(
        decay_factor=cfg.decay_factor, decay_every=cfg.decay_every, total_epochs=cfg.epochs
    )
    result = training_mod.fit(
        model,
        train_recs,
        val_recs,
        weights=weights,
        schedule=schedule,
        batch_size=cfg.batch_size,
        seed=cfg.seed,
        base_lr=cfg.base_lr,
        weight_decay=cfg.weight_decay,
        log=print,
    )
    write_curve_csv(out_dir / "curve.csv", result.history)
    model.load_state(result.best_state)
    optimizer = training_mod.Adamax(model.params, lr=cfg.base_lr, weight_decay=cfg.weight_decay)
    if result.best_opt_state is not None:
        optimizer.load_state(result.best_opt_state)
    training_mod.save_checkpoint(out_dir / "checkpoint.json", model, optimizer, epoch=result.best_epoch)
    print(f"best epoch {result.best_epoch} (mean val mAP {result.best_score:.4f}); "
          f"outputs in {out_dir}")
    return EXIT_OK


def _check_dims(model_cfg: ModelConfig, header: data_mod.DatasetHeader) -> None:
    pairs = [
        ("d_img", model_cfg.d_img, header.d_img),
        ("d_obj", model_cfg.d_obj, header.d_obj),
        ("d_word", model_cfg.d_word, header.d_word),
        ("n_topics", model_cfg.n_topics, header.n_topics),
        ("n_sentiments", model_cfg.n_sentiments, header.n_sentiments),
    ]
    for name, m, h in pairs:
        if m != h:
            raise ConfigError(f"model {name}={m} does not match dataset header {name}={h}")


def cmd_eval(args) -> int:
    model, _, epoch = training_mod.load_checkpoint(args.checkpoint)
    header, records = data_mod.load_dataset(args.dataset)
    _check_dims(model.config, header)
    if args.split == "all":
        subset = records
    else:
        fractions = tuple(args.split_fractions)
        train_recs, val_recs, test_recs = data_mod.split(records, fractions, args.split_seed)
        subset = {"train": train_recs, "val": val_recs, "test": test_recs}[args.split]
    if not subset:
        raise UsageError(f"split {args.split!r} is empty")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    topic_scores, sent_scores = training_mod.predict_scores(model, subset)
    topic_labels = np.stack([r.topic_labels for r in subset])
    sent_labels = np.stack([r.sentiment_labels for r in subset])
    for task, scores, labels in (
        ("topic", topic_scores, topic_labels),
        ("sentiment", sent_scores, sent_labels),
    ):
        report = metrics_mod.evaluate_predictions(task, scores, labels, threshold=args.threshold)
        (out_dir / f"report_{task}.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (out_dir / f"report_{task}.txt").write_text(report.to_text(), encoding="utf-8")
        print(f"{task}: mAP {report.map:.4f}  F1-C {report.f1_c:.4f}  F1-O {report.f1_o:.4f}")
    write_manifest(out_dir, {"checkpoint": str(args.checkpoint), "dataset": str(args.dataset),
                             "split": args.split, "split_seed": args.split_seed,
                             "threshold": args.threshold, "epoch": epoch}, "eval")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    failed = False
    reports: list[tuple[str, training_mod.GradCheckReport]] = []
    if args.scope in ("layers", "all"):
        reports += training_mod.gradcheck_layers(seed=args.seed, tolerance=1e-6)
    if args.scope in ("attention", "all"):
        reports += training_mod.gradcheck_attention(seed=args.seed, tolerance=1e-6)
    if args.scope in ("full", "all"):
        reports.append(("full_model", training_mod.gradcheck_full(seed=args.seed, tolerance=1e-5)))
    for name, report in reports:
        print(f"{name:>14}: {report.summary()}")
        failed = failed or not report.passed
    return EXIT_NUMERIC if failed else EXIT_OK


SWEEPABLE = ("lr", "dropout", "d_shared", "alpha")


def cmd_sweep(args) -> int:
    cfg = load_run_config(args)
    if not cfg.dataset:
        raise ConfigError("sweep needs a dataset path (config key 'dataset' or --dataset)")
    values = [float(v) for v in args.values.split(",")]
    if len(values) < 2:
        raise UsageError("sweep needs at least 2 values")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, {**cfg.to_dict(), "sweep_param": args.param, "sweep_values": values}, "sweep")

    header, records = data_mod.load_dataset(cfg.dataset)
    train_recs, val_recs, test_recs = data_mod.split(records, cfg.split_fractions, cfg.resolved_split_seed())

    rows = []
    for value in values:
        run_cfg = RunConfig.from_dict(cfg.to_dict())
        if args.param == "lr":
            run_cfg.base_lr = value
        elif args.param == "dropout":
            run_cfg.model.dropout_rate = value
        elif args.param == "alpha":
            run_cfg.alpha = value
        elif args.param == "d_shared":
            d = int(value)
            if d % 2:
                raise ConfigError(f"d_shared sweep values must be even (BLSTM halves them), got {d}")
            run_cfg.model.d_shared = d
            run_cfg.model.lstm_hidden = d // 2
            run_cfg.model.mlp_hidden = None
        _check_dims(run_cfg.model, header)
        model = build(run_cfg.model, run_cfg.seed)
        result = training_mod.fit(
            model,
            train_recs,
            val_recs,
            weights=training_mod.LossWeights(alpha=run_cfg.alpha, beta=run_cfg.beta),
            schedule=training_mod.Schedule(
                decay_factor=run_cfg.decay_factor, decay_every=run_cfg.decay_every, total_epochs=run_cfg.epochs
            ),
            batch_size=run_cfg.batch_size,
            seed=run_cfg.seed,
            base_lr=run_cfg.base_lr,
            weight_decay=run_cfg.weight_decay,
        )
        model.load_state(result.best_state)
        topic_scores, sent_scores = training_mod.predict_scores(model, test_recs)
        topic_map = metrics_mod.mean_average_precision(
            topic_scores, np.stack([r.topic_labels for r in test_recs])
        ).map
        sent_map = metrics_mod.mean_average_precision(
            sent_scores, np.stack([r.sentiment_labels for r in test_recs])
        ).map
        rows.append([args.param, value, topic_map, sent_map, result.best_epoch])
        print(f"{args.param}={value:g}: test topic mAP {topic_map:.4f}, sentiment mAP {sent_map:.4f}")

    with open(out_dir / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "test_topic_map", "test_sentiment_map", "best_epoch"])
        for row in rows:
            writer.writerow([row[0], _fmt(row[1]), _fmt(row[2]), _fmt(row[3]), row[4]])
    return EXIT_OK


class _IoFailure(AdfuseError):
    pass


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adfuse",
        description="Train and evaluate the multimodal multitask topic/sentiment model.",
        epilog=(
            "Learning-curve CSV columns: " + ", ".join(CURVE_COLUMNS) + ". "
            "Sweep CSV columns: param, value, test_topic_map, test_sentiment_map, best_epoch. "
            "Exit codes: 0 ok, 2 config, 3 data, 4 numeric, 5 usage, 6 I/O."
        ),
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset (JSON lines)")
    p.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-records", type=int, default=None)
    p.add_argument("--out", required=True, help="output dataset path (.jsonl or .jsonl.gz)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a dataset, write curve.csv + checkpoint.json")
    _add_run_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint, write metric reports")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--split-seed", type=int, default=0, help="seed the dataset was split with")
    p.add_argument("--split-fractions", type=float, nargs=3, default=(0.7, 0.1, 0.2))
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out-dir", default="runs/eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--scope", choices=("layers", "attention", "full", "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="train once per hyperparameter value, write sweep.csv")
    p.add_argument("--param", choices=SWEEPABLE, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    _add_run_args(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="RunConfig JSON file (flags override)")
    p.add_argument("--seed", type=int, default=None, help="run seed (mandatory here or in config)")
    p.add_argument("--dataset", default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--single-task", choices=("off", "topic", "sentiment"), default=None)
    p.add_argument("--no-autoencoder", action="store_true")
    p.add_argument("--no-hier-attention", action="store_true")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:  # includes ParseError
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _IoFailure as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
