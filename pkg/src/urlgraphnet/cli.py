"""Command-line entry point: encode, train, evaluate, predict, report.

Config resolution is layered: built-in defaults, then a flat JSON config
file (``--config``), then explicit command-line flags.  The fully resolved
config is persisted next to each command's outputs (``<command>_config.json``,
plain ``config.json`` for train) so every artifact records its provenance.
Machine-readable output goes to stdout; progress and diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import data as datamod
from .data import CLASS_NAMES, Corpus, DatasetSplit, load_csv
from .encoder import DEFAULT_CHARSET, canonicalize, url_to_graph
from .errors import EmptyUrlError, IncompatibleCheckpointError, UrlGraphNetError
from .metrics import evaluate_model, write_report
from .model import ModelConfig, load_checkpoint, predict
from .synth import generate_corpus
from .trainer import TrainLog, train

SYNTHETIC_DATASET = re.compile(r"synthetic:(\d+)\Z")


@dataclass
class RunConfig:
    """Flat, fully resolved settings for every subcommand."""

    # data
    dataset: str | None = None
    split_ratio: float = 0.8
    split_seed: int = 42
    stratified: bool = True
    augment: bool = False
    augment_class: int = 2
    augment_fraction: float = 0.2
    oversample: bool = False
    # model
    input_dim: int = 69
    hidden: int = 64
    gat1_heads: int = 4
    gat2_heads: int = 1
    lstm_layers: int = 2
    aggregation: str = "sym_norm"
    readout: str = "lstm"
    # training
    epochs: int = 10
    batch_size: int = 32
    seed: int = 42
    lr: float = 0.001
    gamma: float = 0.5
    lr_step: int = 5
    # orchestration
    out_dir: str = "runs/latest"
    threads: int = 1
    checkpoint: str | None = None
    split: str = "test"

    def validate(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError(f"split_ratio must be in (0, 1), got {self.split_ratio}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.split not in ("train", "test", "all"):
            raise ValueError(f"split must be train, test, or all, got {self.split!r}")
        if self.augment_class not in range(len(CLASS_NAMES)):
            raise ValueError(f"augment_class must be 0..3, got {self.augment_class}")
        # Model-field combinations are validated by ModelConfig itself.
        self.model_config()

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            input_dim=self.input_dim,
            hidden=self.hidden,
            gat1_heads=self.gat1_heads,
            gat2_heads=self.gat2_heads,
            lstm_layers=self.lstm_layers,
            aggregation=self.aggregation,
            readout=self.readout,
            seed=self.seed,
        )


def load_config_file(path) -> dict:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ValueError(f"config file {path} has unknown keys: {', '.join(unknown)}")
    return payload


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            values[f.name] = flag_value
    config = RunConfig(**values)
    config.validate()
    return config


def persist_config(config: RunConfig, out_dir: Path, name: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(
        json.dumps(asdict(config), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return path


def _load_checkpoint_named(path):
    """load_checkpoint with the offending file named in any failure."""
    try:
        return load_checkpoint(path)
    except IncompatibleCheckpointError as exc:
        raise IncompatibleCheckpointError(f"checkpoint {path}: {exc}") from exc


def load_dataset(config: RunConfig) -> Corpus:
    if config.dataset is None:
        raise FileNotFoundError("no dataset configured (set --dataset or the config file)")
    match = SYNTHETIC_DATASET.match(config.dataset)
    if match:
        return generate_corpus(int(match.group(1)), seed=42)
    path = Path(config.dataset)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return load_csv(path)


# ----------------------------------------------------------------------
# Subcommands


def cmd_encode(config: RunConfig, args: argparse.Namespace) -> int:
    corpus = load_dataset(replace(config, dataset=str(args.input)))
    charset = DEFAULT_CHARSET
    lengths: dict[int, int] = {}
    edge_counts: dict[int, int] = {}
    oov_chars = 0
    total_chars = 0
    samples = []
    for k, record in enumerate(corpus.records):
        url = canonicalize(record.url)
        graph = url_to_graph(record.url, charset, extended=config.input_dim == 72)
        lengths[len(url)] = lengths.get(len(url), 0) + 1
        edge_counts[graph.num_edges] = edge_counts.get(graph.num_edges, 0) + 1
        total_chars += len(url)
        oov_chars += sum(1 for ch in url if ch not in charset.index)
        if k < args.sample:
            samples.append(
                {
                    "url": record.url,
                    "label": CLASS_NAMES[record.label],
                    "num_nodes": graph.num_nodes,
                    "num_edges": graph.num_edges,
                    "edges": np.asarray(graph.edges).tolist(),
                    "graph_features": list(graph.graph_features),
                }
            )
    summary = {
        "count": len(corpus.records),
        "skipped": corpus.skipped,
        "class_counts": dict(zip(CLASS_NAMES, corpus.class_counts)),
        "length_histogram": {str(k): v for k, v in sorted(lengths.items())},
        "edge_histogram": {str(k): v for k, v in sorted(edge_counts.items())},
        "oov_char_rate": (oov_chars / total_chars) if total_chars else 0.0,
        "input_dim": config.input_dim,
    }
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "encode_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if samples:
        (out_dir / "graph_samples.json").write_text(
            json.dumps(samples, indent=2) + "\n", encoding="utf-8"
        )
    persist_config(config, out_dir, "encode_config.json")
    print(json.dumps(summary, sort_keys=True))
    return 0


def _balanced_training_view(
    corpus: Corpus, split_: DatasetSplit, config: RunConfig
) -> tuple[Corpus, DatasetSplit]:
    """Apply train-only balancing and re-index so test records are untouched."""
    train_corpus = datamod.subset(corpus, split_.train_indices)
    test_corpus = datamod.subset(corpus, split_.test_indices)
    if config.augment:
        train_corpus = datamod.augment_minority(
            train_corpus,
            config.augment_class,
            config.augment_fraction,
            seed=config.seed,
        )
    if config.oversample:
        train_corpus = datamod.oversample(train_corpus, seed=config.seed)
    combined = Corpus(train_corpus.records + test_corpus.records)
    n_train = len(train_corpus.records)
    view = DatasetSplit(
        np.arange(n_train, dtype=np.int64),
        np.arange(n_train, len(combined.records), dtype=np.int64),
        split_.seed,
    )
    return combined, view


def cmd_train(config: RunConfig) -> int:
    corpus = load_dataset(config)
    split_ = datamod.split(
        corpus, config.split_ratio, config.split_seed, config.stratified
    )
    combined, view = _balanced_training_view(corpus, split_, config)
    out_dir = Path(config.out_dir)
    persist_config(config, out_dir, "config.json")

    def progress(entry) -> None:
        print(
            f"epoch {entry.epoch}: loss={entry.loss:.4f}"
            f" train_acc={entry.train_acc:.4f} test_acc={entry.test_acc:.4f}"
            f" lr={entry.lr:g} ({entry.seconds:.1f}s)",
            file=sys.stderr,
        )

    params, log = train(
        combined,
        view,
        config.model_config(),
        epochs=config.epochs,
        batch_size=config.batch_size,
        seed=config.seed,
        base_lr=config.lr,
        gamma=config.gamma,
        lr_step=config.lr_step,
        checkpoint_dir=out_dir / "checkpoints",
        progress=progress,
    )
    (out_dir / "trainlog.csv").write_text(log.to_csv(), encoding="utf-8")
    print(f"final checkpoint: {out_dir / 'checkpoints' / 'final.ckpt'}")
    if log.entries:
        last = log.entries[-1]
        print(
            f"final: loss={last.loss!r} train_acc={last.train_acc!r}"
            f" test_acc={last.test_acc!r}"
        )
    return 0


def _split_indices(corpus: Corpus, config: RunConfig) -> np.ndarray:
    split_ = datamod.split(
        corpus, config.split_ratio, config.split_seed, config.stratified
    )
    if config.split == "train":
        return split_.train_indices
    if config.split == "test":
        return split_.test_indices
    return np.arange(len(corpus.records), dtype=np.int64)


def cmd_evaluate(config: RunConfig) -> int:
    if config.checkpoint is None:
        raise FileNotFoundError("no checkpoint given (set --checkpoint)")
    params = _load_checkpoint_named(config.checkpoint)
    corpus = load_dataset(config)
    indices = _split_indices(corpus, config)
    report = evaluate_model(params, corpus, indices, batch_size=config.batch_size)
    out_dir = Path(config.out_dir)
    write_report(report, out_dir, split=config.split)
    persist_config(config, out_dir, "evaluate_config.json")
    macro = "none" if report.macro_auc is None else repr(report.macro_auc)
    print(f"split={config.split} n={len(indices)} accuracy={report.accuracy!r} macro_auc={macro}")
    return 0


def cmd_predict(config: RunConfig, args: argparse.Namespace) -> int:
    if config.checkpoint is None:
        raise FileNotFoundError("no checkpoint given (set --checkpoint)")
    params = _load_checkpoint_named(config.checkpoint)
    urls: list[str] = list(args.urls)
    if args.input:
        path = Path(args.input)
        if not path.exists():
            raise FileNotFoundError(f"URL file not found: {path}")
        urls.extend(path.read_text(encoding="utf-8").splitlines())
    if not urls:
        raise EmptyUrlError("no URLs given (pass them as arguments or via --input)")
    failures = 0
    for url in urls:
        try:
            class_id, probs = predict(url, params)
        except EmptyUrlError:
            # Non-fatal: flag the line and keep going.
            failures += 1
            print(f"{url},invalid,0.000000,0.000000,0.000000,0.000000")
            print(f"skipping empty URL line {url!r}", file=sys.stderr)
            continue
        print(
            f"{url},{CLASS_NAMES[class_id]},"
            + ",".join(f"{p:.6f}" for p in probs)
        )
    if failures:
        print(f"{failures} of {len(urls)} lines were empty", file=sys.stderr)
    return 0


def cmd_report(config: RunConfig) -> int:
    """Render an existing run directory's report as a text table."""
    out_dir = Path(config.out_dir)
    report_path = out_dir / "report.json"
    if not report_path.exists():
        raise FileNotFoundError(f"no report.json in {out_dir} (run evaluate first)")
    payload = json.loads(report_path.read_text(encoding="utf-8"))

    lines = [
        f"split: {payload.get('split', '?')}",
        f"accuracy: {payload['accuracy']:.4f}",
        "",
        f"{'class':<12} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>9}",
    ]
    for entry in payload["classes"]:
        lines.append(
            f"{entry['name']:<12} {entry['precision']:>9.4f} {entry['recall']:>9.4f}"
            f" {entry['f1']:>9.4f} {entry['support']:>9d}"
        )
    total = sum(entry["support"] for entry in payload["classes"])
    for name, avg in (("macro avg", payload["macro_avg"]), ("weighted avg", payload["weighted_avg"])):
        lines.append(
            f"{name:<12} {avg['precision']:>9.4f} {avg['recall']:>9.4f}"
            f" {avg['f1']:>9.4f} {total:>9d}"
        )
    if payload.get("macro_auc") is not None:
        lines.append("")
        lines.append(f"macro AUC: {payload['macro_auc']:.4f}")
        for name, curve in sorted((payload.get("roc") or {}).items()):
            lines.append(f"AUC[{name}]: {curve['auc']:.4f}")
    trainlog = out_dir / "trainlog.csv"
    if trainlog.exists():
        log = TrainLog.from_csv(trainlog.read_text(encoding="utf-8"))
        if log.entries:
            last = log.entries[-1]
            lines.append("")
            lines.append(
                f"training: {len(log.entries)} epochs,"
                f" final loss {last.loss:.4f}, final test_acc {last.test_acc:.4f}"
            )
    print("\n".join(lines))
    return 0


# ----------------------------------------------------------------------
# Parser


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with flat RunConfig keys")
    parser.add_argument("--seed", type=int, help="training / balancing seed")
    parser.add_argument("--out-dir", dest="out_dir", help="artifact directory")
    parser.add_argument(
        "--threads", type=int, help="worker cap (this build always runs serially)"
    )
    parser.add_argument(
        "--input-dim", dest="input_dim", type=int, choices=(69, 72),
        help="node feature width: 69 base or 72 with engineered URL features",
    )
    parser.add_argument("--readout", choices=("lstm", "mean"))
    parser.add_argument("--aggregation", choices=("sym_norm", "mean"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="urlgraphnet",
        description="Character-graph URL classifier: encode, train, evaluate, predict.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode a URL CSV and write a graph summary")
    p.add_argument("input", help="url,type CSV file")
    p.add_argument("--sample", type=int, default=0, help="dump the first N graphs")
    _add_common(p)

    p = sub.add_parser("train", help="train a model and write checkpoints + log")
    p.add_argument("--dataset", help="url,type CSV or synthetic:<size>")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--lr-step", dest="lr_step", type=int)
    p.add_argument("--split-ratio", dest="split_ratio", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--stratified", action=argparse.BooleanOptionalAction)
    p.add_argument("--augment", action=argparse.BooleanOptionalAction)
    p.add_argument("--augment-class", dest="augment_class", type=int)
    p.add_argument("--augment-fraction", dest="augment_fraction", type=float)
    p.add_argument("--oversample", action=argparse.BooleanOptionalAction)
    p.add_argument("--hidden", type=int)
    p.add_argument("--gat1-heads", dest="gat1_heads", type=int)
    p.add_argument("--gat2-heads", dest="gat2_heads", type=int)
    p.add_argument("--lstm-layers", dest="lstm_layers", type=int)
    _add_common(p)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint and write reports")
    p.add_argument("--checkpoint", help="checkpoint file from train")
    p.add_argument("--dataset", help="url,type CSV or synthetic:<size>")
    p.add_argument("--split", choices=("train", "test", "all"))
    p.add_argument("--split-ratio", dest="split_ratio", type=float)
    p.add_argument("--split-seed", dest="split_seed", type=int)
    p.add_argument("--stratified", action=argparse.BooleanOptionalAction)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    _add_common(p)

    p = sub.add_parser("predict", help="classify URLs with a trained checkpoint")
    p.add_argument("urls", nargs="*", help="raw URLs")
    p.add_argument("--checkpoint", help="checkpoint file from train")
    p.add_argument("--input", help="file with one URL per line")
    _add_common(p)

    p = sub.add_parser("report", help="print the text report for a run directory")
    _add_common(p)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        if args.command == "encode":
            return cmd_encode(config, args)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "predict":
            return cmd_predict(config, args)
        return cmd_report(config)
    except (UrlGraphNetError, OSError, ValueError) as exc:
        print(f"urlgraphnet {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
