"""Command-line surface: train, eval, bench, stats, ecoc-train, mlp-train.

Every command is deterministic given its flags (seeds included). Flags may
also come from a ``--config`` file of ``key=value`` lines (flag spelling
without the leading dashes); explicit flags win. Exit codes: 0 success,
1 usage, 2 data error, 3 numeric failure.

Datasets are svmlight paths (gzip for ``*.gz``) or an inline synthetic spec
``blobs:K=32,n=16,per=100,spread=0.1[,seed=7]``.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, hamming, serialize, trainer
from .data import Dataset, load_svmlight, make_blobs, split_dataset
from .errors import DataError, NumericError
from .model import encode_probs_batch, init_model, threshold_bits
from .codes import pack_bits_many, unpack_bits_many


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _read_config_file(path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read config file {path}: {e}") from None
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


class Options:
    """Flag values merged over config-file values merged over defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.config = _read_config_file(args.config) if args.config else {}
        self.resolved: dict[str, object] = {}

    def get(self, name: str, default, cast=None):
        key = name.replace("_", "-")
        value = self.args.get(name)
        if value is None:
            raw = self.config.get(key)
            if raw is None:
                value = default
            else:
                caster = cast or (type(default) if default is not None else str)
                if caster is bool:
                    caster = _bool
                try:
                    value = caster(raw)
                except ValueError as e:
                    raise DataError(f"config value {key}={raw!r}: {e}") from None
        self.resolved[key] = value
        return value

    def require(self, parser: argparse.ArgumentParser, name: str, cast=None):
        value = self.get(name, None, cast=cast)
        if value is None:
            parser.error(f"missing required option --{name.replace('_', '-')}")
        return value


def load_data(spec: str, seed: int) -> Dataset:
    """Load a dataset path or build an inline ``blobs:`` corpus."""
    if spec.startswith("blobs:"):
        params = {"seed": seed}
        for item in spec[len("blobs:"):].split(","):
            if not item:
                continue
            if "=" not in item:
                raise DataError(f"bad blobs parameter {item!r}")
            key, value = item.split("=", 1)
            params[key.strip()] = value.strip()
        try:
            return make_blobs(
                k=int(params["K"]), n=int(params["n"]), per_class=int(params["per"]),
                spread=float(params.get("spread", 0.1)), seed=int(params["seed"]),
            )
        except KeyError as e:
            raise DataError(f"blobs spec needs K, n, per (missing {e.args[0]})") from None
        except ValueError as e:
            raise DataError(f"bad blobs spec {spec!r}: {e}") from None
    path = Path(spec)
    if not path.exists():
        raise DataError(f"dataset not found: {spec}")
    return load_svmlight(path)


def _out_paths(out: str) -> tuple[Path, Path, Path]:
    base = Path(out)
    stem = base.with_suffix("") if base.suffix else base
    return base, stem.with_name(stem.name + ".metrics.csv"), stem.with_name(stem.name + ".report.txt")


def _report_text(sections: list[tuple[str, dict]]) -> str:
    lines = []
    for prefix, values in sections:
        for key, value in values.items():
            lines.append(f"{prefix}.{key}={value}" if prefix else f"{key}={value}")
    return "\n".join(lines) + "\n"


def _dataset_summary(dataset: Dataset, split=None) -> dict:
    out = {"n_features": dataset.n_features, "n_classes": dataset.n_classes,
           "examples": len(dataset)}
    if split is not None:
        out.update(train=len(split.train), validation=len(split.validation),
                   test=len(split.test))
    return out


def _train_config(opts: Options, parser) -> trainer.TrainConfig:
    return trainer.TrainConfig(
        code_size=opts.require(parser, "code_size", cast=int),
        epochs=opts.get("epochs", 30),
        batch_size=opts.get("batch_size", 256),
        lr=opts.get("lr", 1e-3),
        estimator=opts.get("estimator", "ste"),
        reinforce_samples=opts.get("reinforce_samples", 1),
        seed=opts.get("seed", 0),
        beta=opts.get("beta", 0.01),
        gamma=opts.get("gamma", 0.01),
        regularization=not opts.get("no_reg", False),
        val_cadence=opts.get("val_cadence", 1),
        log_timing=opts.get("log_timing", False),
    )


def cmd_train(args, mlp: bool = False) -> int:
    parser = args.parser
    opts = Options(args)
    data_spec = opts.require(parser, "data")
    out = opts.require(parser, "out")
    threads = opts.get("threads", 1)
    config = _train_config(opts, parser)
    try:
        config.validate(for_mlp=mlp)
    except ValueError as e:
        parser.error(str(e))
    with_index = not opts.get("no_index", False) and not mlp

    dataset = load_data(data_spec, config.seed)
    split = split_dataset(dataset, config.seed)
    t0 = time.perf_counter()
    if mlp:
        model, metrics = baselines.train_mlp(split, config)
    else:
        model0 = init_model(dataset.n_features, config.code_size,
                            dataset.n_classes, seed=config.seed)
        model, metrics = trainer.fit(model0, split, config)
    train_wall_s = time.perf_counter() - t0

    index = hamming.build_index(model, split.train) if with_index else None
    model_path, metrics_path, report_path = _out_paths(out)
    serialize.save_model(model, model_path, index=index)
    trainer.write_metrics_csv(metrics, metrics_path)

    accuracies = {"linear": trainer.evaluate(model, split.test, "linear")}
    if index is not None:
        mih = hamming.build_mih(index)
        accuracies["nn"] = trainer.evaluate(model, split.test, "nn",
                                            index=index, threads=threads)
        accuracies["mih"] = trainer.evaluate(model, split.test, "mih",
                                             index=index, mih=mih, threads=threads)
    stats = trainer.code_stats(model, split.train, seed=config.seed)
    report = _report_text([
        ("config", opts.resolved),
        ("data", _dataset_summary(dataset, split)),
        ("accuracy.test", accuracies),
        ("stats.train", _stats_dict(stats)),
        ("timing", {"train_wall_s": f"{train_wall_s:.3f}", "epochs_run": len(metrics)}),
    ])
    report_path.write_text(report)
    sys.stdout.write(report)
    return 0


def _stats_dict(stats: trainer.CodeStats) -> dict:
    fmt = lambda v: "absent" if v is None else f"{v:.4f}"
    return {"intra_mean": fmt(stats.intra_mean), "intra_std": fmt(stats.intra_std),
            "inter_mean": fmt(stats.inter_mean), "inter_std": fmt(stats.inter_std),
            "distinct_codes": stats.distinct_codes}


def _load_model_and_index(model_path, split):
    """Load a model; fall back to indexing the train split when no index is embedded."""
    model, index = serialize.load_model(model_path)
    if index is None and model.kind == "dsnc" and split is not None:
        index = hamming.build_index(model, split.train)
    return model, index


def _select_part(split, which: str, dataset: Dataset) -> Dataset:
    return {"train": split.train, "val": split.validation,
            "test": split.test, "all": dataset}[which]


def cmd_eval(args) -> int:
    parser = args.parser
    opts = Options(args)
    model_path = opts.require(parser, "model")
    data_spec = opts.require(parser, "data")
    seed = opts.get("seed", 0)
    threads = opts.get("threads", 1)
    which = opts.get("split", "test")
    decoders = [d.strip() for d in opts.get("decoder", "linear,nn").split(",") if d.strip()]

    dataset = load_data(data_spec, seed)
    split = split_dataset(dataset, seed)
    model, index = _load_model_and_index(model_path, split)
    part = _select_part(split, which, dataset)

    if model.kind == "ecoc":
        acc = baselines.ecoc_accuracy(model, part)
        report = _report_text([("config", opts.resolved),
                               ("data", _dataset_summary(dataset, split)),
                               (f"accuracy.{which}", {"ecoc": f"{acc:.6f}"})])
        return _emit(opts, args, report)

    accuracies = {}
    timing = {}
    candidates = {}
    mih = None
    for decoder in decoders:
        t0 = time.perf_counter()
        if decoder == "linear":
            acc = trainer.evaluate(model, part, "linear")
            candidates[decoder] = model.n_classes  # classes scored per query
        elif decoder in ("nn", "mih"):
            if model.kind != "dsnc":
                raise DataError(f"{decoder} decoding applies only to code models")
            probs, _ = encode_probs_batch(model, part.x)
            words = pack_bits_many(threshold_bits(probs))
            if decoder == "nn":
                pred, _ = hamming.nn_decode_many(index, words, threads=threads)
                candidates[decoder] = len(index)
            else:
                if mih is None:
                    mih = hamming.build_mih(index)
                pred, _, cands = hamming.mih_query_many(mih, index, words,
                                                        threads=threads)
                candidates[decoder] = f"{float(cands.mean()):.1f}"
            acc = float((pred == part.y).mean())
        elif decoder == "table":
            table = hamming.enumerate_table(model)
            acc = trainer.evaluate(model, part, "table", table=table)
            candidates[decoder] = 0  # pure lookup
        else:
            parser.error(f"unknown decoder {decoder!r}")
        dt = time.perf_counter() - t0
        accuracies[decoder] = f"{acc:.6f}"
        timing[f"{decoder}_mean_us"] = f"{dt / max(len(part), 1) * 1e6:.2f}"
    stats = trainer.code_stats(model, part, seed=seed) if len(part) >= 2 else None
    sections = [("config", opts.resolved),
                ("data", _dataset_summary(dataset, split)),
                (f"accuracy.{which}", accuracies),
                ("candidates", candidates)]
    if stats is not None:
        sections.append((f"stats.{which}", _stats_dict(stats)))
    sections.append(("timing", timing))
    return _emit(opts, args, _report_text(sections))


def _emit(opts: Options, args, text: str) -> int:
    out = opts.get("out", None, cast=str)
    if out:
        Path(out).write_text(text)
    sys.stdout.write(text)
    return 0


BENCH_HEADER = "decoder,queries,mean_candidates,queries_per_s,mean_latency_us"


def cmd_bench(args) -> int:
    parser = args.parser
    opts = Options(args)
    model_path = opts.require(parser, "model")
    data_spec = opts.require(parser, "data")
    seed = opts.get("seed", 0)
    threads = opts.get("threads", 1)
    n_queries = opts.get("queries", 1000)
    decoders = [d.strip() for d in
                opts.get("decoder", "linear,nn,mih,table").split(",") if d.strip()]

    dataset = load_data(data_spec, seed)
    split = split_dataset(dataset, seed)
    model, index = _load_model_and_index(model_path, split)
    if model.kind != "dsnc":
        raise DataError("bench applies only to code models")

    probs, _ = encode_probs_batch(model, dataset.x)
    words = pack_bits_many(threshold_bits(probs))
    pick = np.random.default_rng([seed, 7]).choice(
        len(dataset), size=min(n_queries, len(dataset)), replace=False)
    queries = words[pick]
    mih = hamming.build_mih(index)

    rows = []
    for decoder in decoders:
        if decoder == "table" and model.code_size > hamming.TABLE_LIMIT:
            continue
        t0 = time.perf_counter()
        if decoder == "linear":
            queries_bits = unpack_bits_many(queries, model.code_size).astype(np.float64)
            (queries_bits @ model.w_dec.T + model.b_dec).argmax(axis=1)
            mean_cand = float(model.n_classes)
        elif decoder == "nn":
            hamming.nn_decode_many(index, queries, threads=threads)
            mean_cand = float(len(index))
        elif decoder == "mih":
            _, _, cands = hamming.mih_query_many(mih, index, queries, threads=threads)
            mean_cand = float(cands.mean())
        elif decoder == "table":
            table = hamming.enumerate_table(model)
            t0 = time.perf_counter()  # lookup time only, not table construction
            table.classes[queries[:, 0]]
            mean_cand = 0.0
        else:
            parser.error(f"unknown decoder {decoder!r}")
        dt = time.perf_counter() - t0
        q = len(queries)
        rows.append(f"{decoder},{q},{mean_cand:.2f},{q / dt:.1f},{dt / q * 1e6:.2f}")

    text = BENCH_HEADER + "\n" + "\n".join(rows) + "\n"
    return _emit(opts, args, text)


def cmd_stats(args) -> int:
    parser = args.parser
    opts = Options(args)
    model_path = opts.require(parser, "model")
    data_spec = opts.require(parser, "data")
    seed = opts.get("seed", 0)
    which = opts.get("split", "train")
    dataset = load_data(data_spec, seed)
    split = split_dataset(dataset, seed)
    model, _ = serialize.load_model(model_path)
    part = _select_part(split, which, dataset)
    stats = trainer.code_stats(model, part, seed=seed)
    return _emit(opts, args, _report_text([(f"stats.{which}", _stats_dict(stats))]))


def cmd_ecoc_train(args) -> int:
    parser = args.parser
    opts = Options(args)
    data_spec = opts.require(parser, "data")
    out = opts.require(parser, "out")
    seed = opts.get("seed", 0)
    c = opts.require(parser, "code_size", cast=int)
    epochs = opts.get("epochs", 30)
    lr = opts.get("lr", 1e-3)
    batch_size = opts.get("batch_size", 256)

    dataset = load_data(data_spec, seed)
    split = split_dataset(dataset, seed)
    model = baselines.train_ecoc(split, c=c, seed=seed, epochs=epochs,
                                 lr=lr, batch_size=batch_size)
    model_path, _, report_path = _out_paths(out)
    serialize.save_model(model, model_path)
    acc = baselines.ecoc_accuracy(model, split.test)
    report = _report_text([("config", opts.resolved),
                           ("data", _dataset_summary(dataset, split)),
                           ("accuracy.test", {"ecoc": f"{acc:.6f}"})])
    report_path.write_text(report)
    sys.stdout.write(report)
    return 0


def _add_shared(sub: argparse.ArgumentParser):
    sub.add_argument("--data", help="svmlight path or blobs:K=..,n=..,per=..,spread=..")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--out", help="output path")
    sub.add_argument("--threads", type=int, help="worker cap for query evaluation (default 1)")
    sub.add_argument("--config", help="key=value file merged under flags")


def _add_train_flags(sub: argparse.ArgumentParser):
    sub.add_argument("--code-size", type=int, dest="code_size")
    sub.add_argument("--batch-size", type=int, dest="batch_size")
    sub.add_argument("--epochs", type=int)
    sub.add_argument("--lr", type=float)
    sub.add_argument("--estimator", choices=["ste", "reinforce"])
    sub.add_argument("--reinforce-samples", type=int, dest="reinforce_samples")
    sub.add_argument("--beta", type=float)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--no-reg", action="store_true", dest="no_reg", default=None)
    sub.add_argument("--val-cadence", type=int, dest="val_cadence")
    sub.add_argument("--log-timing", action="store_true", dest="log_timing", default=None)
    sub.add_argument("--no-index", action="store_true", dest="no_index", default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="dsnc", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    train = subs.add_parser("train", help="train a stochastic-code model")
    _add_shared(train)
    _add_train_flags(train)
    train.set_defaults(func=cmd_train)

    mlp = subs.add_parser("mlp-train", help="train the MLP baseline")
    _add_shared(mlp)
    _add_train_flags(mlp)
    mlp.set_defaults(func=lambda a: cmd_train(a, mlp=True))

    ecoc = subs.add_parser("ecoc-train", help="train the ECOC baseline")
    _add_shared(ecoc)
    ecoc.add_argument("--code-size", type=int, dest="code_size")
    ecoc.add_argument("--epochs", type=int)
    ecoc.add_argument("--lr", type=float)
    ecoc.add_argument("--batch-size", type=int, dest="batch_size")
    ecoc.set_defaults(func=cmd_ecoc_train)

    ev = subs.add_parser("eval", help="evaluate a model file")
    _add_shared(ev)
    ev.add_argument("--model")
    ev.add_argument("--decoder", help="comma list from linear,nn,mih,table")
    ev.add_argument("--split", choices=["train", "val", "test", "all"])
    ev.set_defaults(func=cmd_eval)

    bench = subs.add_parser("bench", help="decoder throughput and candidate counts")
    _add_shared(bench)
    bench.add_argument("--model")
    bench.add_argument("--decoder", help="comma list from linear,nn,mih,table")
    bench.add_argument("--queries", type=int)
    bench.set_defaults(func=cmd_bench)

    stats = subs.add_parser("stats", help="latent-space statistics of a model")
    _add_shared(stats)
    stats.add_argument("--model")
    stats.add_argument("--split", choices=["train", "val", "test", "all"])
    stats.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    args.parser = parser
    try:
        return args.func(args)
    except SystemExit as e:  # parser.error inside a command
        return int(e.code or 0)
    except (DataError, FileNotFoundError) as e:
        print(f"dsnc: data error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"dsnc: numeric failure: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"dsnc: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
