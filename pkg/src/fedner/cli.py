"""Command-line entry point: ``fedner <command> [options]``.

Every command reads one JSON experiment config (``--config``), applies flag
overrides, and writes its outputs under the config's ``out`` directory.
Everything except ``timing.json`` is a deterministic function of the config.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import (
    ENTITY_TYPES,
    Corpus,
    Vocabulary,
    build_vocabulary,
    combine,
    embedding_matrix,
    lookup_forms,
    normalize_to_bio2,
    read_conll,
    read_embeddings,
    tag_totals,
)
from .evaluation import ConvergenceLog, evaluate_model
from .federation import SHARED_ALL, SHARED_STRICT, FederationConfig, run_federation
from .partition import PartitionPlan, check_cover, load_manifest, make_partitions, partition_stats, save_manifest
from .synthetic import bundled_embeddings, load_synthetic
from .tagger import ModelConfig, checkpoint
from .trainer import TrainConfig, train_centralized

log = logging.getLogger("fedner")

SHARED_SETS = {"all": SHARED_ALL, "strict": SHARED_STRICT}
MODEL_KEYS = ("word_dim", "char_dim", "char_hidden", "word_hidden", "dropout_rate")
TRAIN_KEYS = ("learning_rate", "batch_size", "epochs", "eval_every")
FEDERATION_KEYS = ("rounds", "local_epochs", "shared", "workers")
PARTITION_KEYS = ("scheme", "n_clients", "min_size", "max_size")
DATA_KEYS = ("train", "test", "embeddings")

# flag dest -> (section, key); section None means top level
OVERRIDES = {
    "seed": (None, "seed"),
    "clients": ("partition", "n_clients"),
    "scheme": ("partition", "scheme"),
    "rounds": ("federation", "rounds"),
    "local_epochs": ("federation", "local_epochs"),
    "lr": ("train", "learning_rate"),
    "batch_size": ("train", "batch_size"),
    "epochs": ("train", "epochs"),
    "out": (None, "out"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  Null data paths select the bundled synthetic corpus and vectors."""

    train_paths: tuple[str, ...] | None = None
    test_path: str | None = None
    embeddings_path: str | None = None
    seed: int = 1990
    model: dict = field(default_factory=dict)
    train: TrainConfig = TrainConfig()
    rounds: int = 200
    local_epochs: int = 4
    shared: str = "all"
    workers: int = 1
    partition: PartitionPlan = PartitionPlan()
    out: str = "runs/default"

    def __post_init__(self):
        unknown = set(self.model) - set(MODEL_KEYS)
        if unknown:
            raise ValueError(f"unknown model keys {sorted(unknown)}")
        if self.shared not in SHARED_SETS:
            raise ValueError(f"shared must be one of {sorted(SHARED_SETS)}, got {self.shared!r}")
        if self.train.seed != self.seed or self.partition.seed != self.seed:
            raise ValueError("nested seeds must equal the experiment seed")
        self.model_config(2, 2)
        self.federation_config()

    def model_config(self, n_words: int, n_chars: int) -> ModelConfig:
        return ModelConfig(n_words, n_chars, **self.model)

    @property
    def word_dim(self) -> int:
        return self.model.get("word_dim", ModelConfig(2, 2).word_dim)

    def federation_config(self) -> FederationConfig:
        return FederationConfig(
            self.partition.n_clients, self.rounds, self.local_epochs, SHARED_SETS[self.shared], self.workers
        )

    @classmethod
    def from_json(cls, obj: dict) -> ExperimentConfig:
        _check_keys(obj, ("seed", "data", "model", "train", "federation", "partition", "out"), "config")
        seed = obj.get("seed", 1990)
        data = obj.get("data", {})
        train = obj.get("train", {})
        fed = obj.get("federation", {})
        part = obj.get("partition", {})
        _check_keys(data, DATA_KEYS, "data")
        _check_keys(train, TRAIN_KEYS, "train")
        _check_keys(fed, FEDERATION_KEYS, "federation")
        _check_keys(part, PARTITION_KEYS, "partition")
        train_paths = data.get("train")
        if isinstance(train_paths, str):
            train_paths = [train_paths]
        return cls(
            train_paths=tuple(train_paths) if train_paths is not None else None,
            test_path=data.get("test"),
            embeddings_path=data.get("embeddings"),
            seed=seed,
            model=dict(obj.get("model", {})),
            train=TrainConfig(seed=seed, **train),
            partition=PartitionPlan(seed=seed, **part),
            out=obj.get("out", cls.out),
            **fed,
        )

    def to_json(self) -> dict:
        train = asdict(self.train)
        del train["seed"]
        partition = asdict(self.partition)
        del partition["seed"]
        return {
            "seed": self.seed,
            "data": {
                "train": list(self.train_paths) if self.train_paths is not None else None,
                "test": self.test_path,
                "embeddings": self.embeddings_path,
            },
            "model": {k: self.model[k] for k in MODEL_KEYS if k in self.model},
            "train": train,
            "federation": {
                "rounds": self.rounds, "local_epochs": self.local_epochs, "shared": self.shared,
                "workers": self.workers,
            },
            "partition": partition,
            "out": self.out,
        }


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValueError(f"{where} must be a JSON object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ValueError(f"unknown {where} keys {sorted(unknown)}")


def apply_overrides(obj: dict, overrides) -> dict:
    obj = json.loads(json.dumps(obj))
    for dest, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = OVERRIDES[dest]
        if section is None:
            obj[key] = value
        else:
            obj.setdefault(section, {})[key] = value
    return obj


def load_config(path=None, overrides=None) -> ExperimentConfig:
    obj = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    return ExperimentConfig.from_json(apply_overrides(obj, overrides))


@dataclass
class Data:
    train: Corpus
    test: Corpus
    vocab: Vocabulary
    word_vectors: object


def load_train_corpus(config: ExperimentConfig) -> Corpus:
    if config.train_paths is None:
        return normalize_to_bio2(load_synthetic("train"))
    return normalize_to_bio2(combine(*(read_conll(p, "train") for p in config.train_paths)))


def load_test_corpus(config: ExperimentConfig) -> Corpus:
    if config.test_path is None:
        return normalize_to_bio2(load_synthetic("test"))
    return normalize_to_bio2(read_conll(config.test_path, "test"))


def load_data(config: ExperimentConfig) -> Data:
    train = load_train_corpus(config)
    test = load_test_corpus(config)
    if config.embeddings_path is None:
        table = bundled_embeddings(dim=config.word_dim)
    else:
        table = read_embeddings(config.embeddings_path, config.word_dim, keep=lookup_forms([train, test]))
    vocab = build_vocabulary([train, test])
    return Data(train, test, vocab, embedding_matrix(vocab, table))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _write_json(path: Path, obj) -> None:
    _write(path, json.dumps(obj, indent=1) + "\n")


def _record_json(record):
    return None if record is None else asdict(record)


def _metrics(history: ConvergenceLog) -> dict:
    return {"index": history.index_name, "final": _record_json(history.last), "best": _record_json(history.best)}


def _save_run(out: Path, kind: str, config: ExperimentConfig, data: Data, params, history, extra=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out / "model.ckpt", params)
    _write_json(out / "vocab.json", data.vocab.to_json())
    _write(out / "convergence.csv", history.to_csv())
    _write_json(out / "metrics.json", _metrics(history))
    run = {"kind": kind, "config": config.to_json(), "n_params": sum(int(v.size) for v in params.values())}
    run.update(extra or {})
    _write_json(out / "run.json", run)


def cmd_partition(config: ExperimentConfig, args) -> int:
    train = load_train_corpus(config)
    parts = make_partitions(train, config.partition)
    check_cover(parts, len(train))
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(out / "manifest.json", config.partition, parts)
    stats = partition_stats(train, parts)
    _write(out / "clients.csv", stats.clients_csv())
    _write(out / "cooccurrence.csv", stats.cooccurrence_csv())
    print(f"{len(parts)} partitions of {len(train)} sentences, sizes {[len(p) for p in parts]}")
    return 0


def corpus_stats_csv(corpora) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["split", "sentences", "tokens"] + [t.lower() for t in ENTITY_TYPES])
    for name, corpus in corpora:
        totals = tag_totals(corpus)
        writer.writerow([name, len(corpus), sum(len(s) for s in corpus.sentences)] + [totals[t] for t in ENTITY_TYPES])
    return buf.getvalue()


def cmd_stats(config: ExperimentConfig, args) -> int:
    train = load_train_corpus(config)
    test = load_test_corpus(config)
    out = Path(config.out)
    text = corpus_stats_csv([("train", train), ("test", test)])
    _write(out / "corpus_stats.csv", text)
    sys.stdout.write(text)
    if args.manifest is not None:
        _, parts = load_manifest(args.manifest)
        check_cover(parts, len(train))
        stats = partition_stats(train, parts)
        _write(out / "clients.csv", stats.clients_csv())
        _write(out / "cooccurrence.csv", stats.cooccurrence_csv())
    return 0


def cmd_train(config: ExperimentConfig, args) -> int:
    started = time.perf_counter()
    data = load_data(config)
    model_config = config.model_config(data.vocab.n_words, data.vocab.n_chars)
    params, history = train_centralized(
        data.train, data.test, config.train, model_config, data.vocab, data.word_vectors
    )
    out = Path(config.out)
    _save_run(out, "centralized", config, data, params, history)
    _write_json(out / "timing.json", {"seconds": time.perf_counter() - started})
    _print_summary(history)
    return 0


def cmd_federate(config: ExperimentConfig, args) -> int:
    started = time.perf_counter()
    data = load_data(config)
    if args.manifest is not None:
        plan, parts = load_manifest(args.manifest)
        if plan.n_clients != config.partition.n_clients:
            raise ValueError(f"{args.manifest}: {plan.n_clients} clients, config says {config.partition.n_clients}")
    else:
        plan, parts = config.partition, make_partitions(data.train, config.partition)
    check_cover(parts, len(data.train))
    model_config = config.model_config(data.vocab.n_words, data.vocab.n_chars)
    params, server = run_federation(
        data.train, parts, config.federation_config(), config.train, model_config, data.test, data.vocab,
        data.word_vectors,
    )
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(out / "manifest.json", plan, parts)
    history = server.convergence_log()
    _save_run(out, "federated", config, data, params, history)
    _write_json(out / "timing.json", {
        "seconds": time.perf_counter() - started, "rounds": [r.duration for r in server.history],
    })
    _print_summary(history)
    return 0


def _print_summary(history: ConvergenceLog) -> None:
    if history.last is None:
        print("no evaluations")
        return
    best, last = history.best, history.last
    print(f"final {history.index_name} {last.index}: F1 {last.f1:.2f}; best {best.f1:.2f} at {best.index}")


def cmd_eval(config: ExperimentConfig, args) -> int:
    run_dir = Path(args.run)
    params = checkpoint.load(args.checkpoint or run_dir / "model.ckpt")
    with open(run_dir / "vocab.json", encoding="utf-8") as f:
        vocab = Vocabulary.from_json(json.load(f))
    test = load_test_corpus(config)
    report = evaluate_model(test, params, vocab)
    text = json.dumps(report.to_json(), indent=1) + "\n"
    if args.out is not None:
        _write(Path(args.out) / "eval.json", text)
    sys.stdout.write(text)
    return 0


@dataclass
class RunSummary:
    label: str
    kind: str
    history: ConvergenceLog


def load_run(directory) -> RunSummary:
    directory = Path(directory)
    if not (directory / "run.json").is_file():
        raise FileNotFoundError(f"no completed run in {directory} (run.json missing)")
    with open(directory / "run.json", encoding="utf-8") as f:
        run = json.load(f)
    with open(directory / "convergence.csv", encoding="utf-8") as f:
        history = ConvergenceLog.from_csv(f.read())
    if run["kind"] == "centralized":
        label = "Centralized"
    else:
        part = run["config"]["partition"]
        label = f"Federated {part['scheme']} N={part['n_clients']}"
        if run["config"]["federation"]["shared"] != "all":
            label += f" ({run['config']['federation']['shared']})"
    return RunSummary(label, run["kind"], history)


def report_table(runs) -> tuple[str, str]:
    """Best-F1 evaluation of each run as CSV and as an aligned text table."""
    rows = []
    for run in runs:
        best = run.history.best
        if best is None:
            rows.append([run.label, "-", "-", "-"])
        else:
            rows.append([run.label, f"{best.precision:.2f}", f"{best.recall:.2f}", f"{best.f1:.2f}"])
    header = ["Environment", "Precision", "Recall", "F1"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(4)]
    lines = [
        "  ".join(cell.ljust(w) if i == 0 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths))).rstrip()
        for r in [header] + rows
    ]
    return buf.getvalue(), "\n".join(lines) + "\n"


PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def convergence_svg(runs, width: int = 640, height: int = 400) -> str:
    """F1 against round for every federated run; centralized best F1 as horizontal lines."""
    left, right, top, bottom = 50, 180, 20, 40
    plot_w, plot_h = width - left - right, height - top - bottom
    federated = [r for r in runs if r.kind == "federated"]
    max_x = max([r.history.records[-1].index for r in federated if r.history.records] + [1])

    def px(x):
        return left + plot_w * x / max_x

    def py(f1):
        return top + plot_h * (1 - f1 / 100)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<path d="M{left},{top} V{top + plot_h} H{left + plot_w}" fill="none" stroke="black"/>',
    ]
    for f1 in range(0, 101, 20):
        out.append(f'<text x="{left - 6}" y="{py(f1) + 4:.1f}" font-size="11" text-anchor="end">{f1}</text>')
    out.append(f'<text x="{left}" y="{height - 10}" font-size="11">0</text>')
    out.append(f'<text x="{left + plot_w}" y="{height - 10}" font-size="11" text-anchor="end">{max_x}</text>')
    out.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 10}" font-size="12" text-anchor="middle">round</text>')
    out.append(f'<text x="14" y="{top + plot_h / 2:.1f}" font-size="12" transform="rotate(-90 14 {top + plot_h / 2:.1f})"'
               ' text-anchor="middle">F1</text>')
    legend_y = top + 10
    for i, run in enumerate(runs):
        color = PALETTE[i % len(PALETTE)]
        if run.kind == "federated":
            points = " ".join(f"{px(r.index):.2f},{py(r.f1):.2f}" for r in run.history.records)
            out.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        elif run.history.best is not None:
            y = py(run.history.best_f1)
            out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + plot_w}" y2="{y:.2f}" stroke="{color}"'
                       ' stroke-dasharray="6 4"/>')
        else:
            continue
        out.append(f'<text x="{left + plot_w + 10}" y="{legend_y}" font-size="11" fill="{color}">{run.label}</text>')
        legend_y += 16
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_report(config: ExperimentConfig, args) -> int:
    if not args.runs:
        raise ValueError("report needs at least one run directory")
    runs = [load_run(d) for d in args.runs]
    table_csv, table_txt = report_table(runs)
    out = Path(config.out)
    _write(out / "table.csv", table_csv)
    _write(out / "table.txt", table_txt)
    _write(out / "convergence.svg", convergence_svg(runs))
    sys.stdout.write(table_txt)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: UsageError: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="seed for partitioning, initialization and shuffling")
    common.add_argument("--clients", type=int, help="number of clients")
    common.add_argument("--scheme", choices=("uniform", "skewed"), help="partitioning scheme")
    common.add_argument("--rounds", type=int, help="federation rounds")
    common.add_argument("--local-epochs", type=int, help="local epochs per round")
    common.add_argument("--lr", type=float, help="SGD learning rate")
    common.add_argument("--batch-size", type=int, help="mini-batch size")
    common.add_argument("--epochs", type=int, help="centralized training epochs")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="fedner", description="Federated BiLSTM-CRF named entity recognition experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("partition", parents=[common], help="split the training corpus across clients").set_defaults(
        func=cmd_partition
    )
    p = sub.add_parser("stats", parents=[common], help="corpus and per-client statistics")
    p.add_argument("--manifest", help="partition manifest to describe")
    p.set_defaults(func=cmd_stats)
    sub.add_parser("train", parents=[common], help="centralized training").set_defaults(func=cmd_train)
    p = sub.add_parser("federate", parents=[common], help="federated training")
    p.add_argument("--manifest", help="use this partition manifest instead of generating one")
    p.set_defaults(func=cmd_federate)
    p = sub.add_parser("eval", parents=[common], help="score a trained model on the test corpus")
    p.add_argument("run", help="run directory holding model.ckpt and vocab.json")
    p.add_argument("--checkpoint", help="checkpoint to score instead of RUN/model.ckpt")
    p.set_defaults(func=cmd_eval)
    p = sub.add_parser("report", parents=[common], help="comparison table and convergence plot")
    p.add_argument("runs", nargs="*", help="run directories")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {dest: getattr(args, dest) for dest in OVERRIDES}
    if args.command == "eval":
        overrides.pop("out")  # eval writes to --out only when given
    try:
        if args.command == "eval" and args.config is None:
            with open(Path(args.run) / "run.json", encoding="utf-8") as f:
                config = ExperimentConfig.from_json(apply_overrides(json.load(f)["config"], overrides))
        else:
            config = load_config(args.config, overrides)
        return args.func(config, args)
    except Exception as e:  # noqa: BLE001 - every failure is reported on one line
        message = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
