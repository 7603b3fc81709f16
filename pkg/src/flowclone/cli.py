"""Command-line entry point: ``flowclone <command> [options]``.

Option values resolve as command-line flag, then ``FLOWCLONE_<NAME>``
environment variable, then the ``--config`` file (YAML or JSON), then the
built-in default.  Exit codes: 0 ok, 1 usage/config, 2 data, 3 numeric.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from collections import Counter
from pathlib import Path

import yaml
from threadpoolctl import threadpool_limits

from . import __version__, fa_ast, gmn, metrics
from .dataset import format_pairs, load_corpus, load_pairs, split_pairs, type_breakdown
from .errors import ConfigError, DataError, FlowCloneError, ModelKindMismatch, NumericError
from .pipeline import CloneModel, ModelKind, TrainConfig, atomic_write, predict, score_pairs, train
from .synth import gen_synthetic_corpus, manifest_json

log = logging.getLogger("flowclone")

ENV_PREFIX = "FLOWCLONE_"


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (type, default, help)
OPTIONS = {
    "input": (str, None, "fragment source: .java file, directory of .java files, or JSONL records"),
    "pairs": (str, None, "tab-separated pair list (id1, id2, label, clone type)"),
    "valid": (str, None, "validation pair list; without it --pairs is split 8:1:1"),
    "out": (str, None, "output file or directory"),
    "checkpoint": (str, None, "model checkpoint file"),
    "format": (str, "json", "graph export format: dot or json"),
    "granularity": (str, "auto", "fragment granularity: method, class or auto"),
    "model": (str, "gmn", "model kind: ggnn or gmn"),
    "dim": (int, 100, "hidden and embedding size"),
    "steps": (int, 4, "propagation steps"),
    "lr": (float, 0.001, "Adam learning rate"),
    "batch": (int, 32, "pairs per minibatch"),
    "epochs": (int, 10, "training epochs"),
    "balance": (float, 1.0, "non-clone pairs sampled per clone pair each epoch"),
    "min_count": (int, 1, "minimum label frequency for the vocabulary"),
    "seed": (int, 0, "random seed"),
    "threshold": (float, None, "similarity threshold; defaults to the checkpoint's tuned value"),
    "workers": (int, 1, "maximum numeric threads"),
    "deterministic": (_bool, False, "single-threaded numerics for bit-identical reruns"),
    "functionalities": (int, 6, "synthetic corpus: number of functionalities"),
    "variants": (int, 10, "synthetic corpus: variants per functionality"),
    "k": (int, 10, "attention export: number of top cells"),
    "plots": (_bool, False, "also render sweep and ROC plots"),
}

COMMANDS = {
    "graph": ("build flow graphs and export them", ["input", "out", "format", "granularity"]),
    "synth": ("generate a synthetic clone corpus", ["out", "functionalities", "variants", "seed"]),
    "train": ("train a similarity model", ["input", "pairs", "valid", "out", "model", "dim", "steps", "lr", "batch",
                                           "epochs", "balance", "min_count", "seed", "workers", "deterministic",
                                           "granularity"]),
    "tune": ("tune the similarity threshold on validation pairs",
             ["input", "pairs", "checkpoint", "out", "model", "workers", "deterministic", "granularity"]),
    "eval": ("evaluate a checkpoint on labeled pairs",
             ["input", "pairs", "checkpoint", "out", "model", "threshold", "plots", "workers", "deterministic",
              "granularity"]),
    "predict": ("classify pairs with a checkpoint",
                ["input", "pairs", "checkpoint", "out", "model", "threshold", "workers", "deterministic",
                 "granularity"]),
    "attention": ("export top cross-graph attention cells",
                  ["input", "pairs", "checkpoint", "out", "k", "workers", "deterministic", "granularity"]),
}

REQUIRED = {
    "graph": ["input", "out"],
    "synth": ["out"],
    "train": ["input", "pairs", "out"],
    "tune": ["input", "pairs", "checkpoint"],
    "eval": ["input", "pairs", "checkpoint"],
    "predict": ["input", "pairs", "checkpoint", "out"],
    "attention": ["input", "pairs", "checkpoint", "out"],
}


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError([message])


def _default(command: str, key: str):
    # outside training, --model only guards against loading the wrong checkpoint kind
    if key == "model" and command != "train":
        return None
    return OPTIONS[key][1]


def build_parser() -> argparse.ArgumentParser:
    parser = UsageParser(prog="flowclone", description="Code clone detection over flow-augmented syntax trees.")
    parser.add_argument("--version", action="version", version=f"flowclone {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=UsageParser)
    for name, (help_text, keys) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="YAML or JSON file of option values", default=None)
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for key in keys:
            typ, default, text = OPTIONS[key]
            default = _default(name, key)
            flag = "--" + key.replace("_", "-")
            help_text = f"{text} (default: {default})"
            if typ is _bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None, help=help_text)
            else:
                p.add_argument(flag, dest=key, type=str, default=None, help=help_text)
    return parser


def resolve(args: argparse.Namespace, environ=os.environ) -> dict:
    """Merge flags, environment, config file and defaults; report every problem at once."""
    keys = COMMANDS[args.command][1]
    problems = []
    file_values = {}
    if args.config:
        try:
            file_values = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([f"cannot read config file: {exc}"]) from None
        if not isinstance(file_values, dict):
            raise ConfigError(["config file must hold a mapping of option names to values"])
        file_values = {str(k).replace("-", "_"): v for k, v in file_values.items()}
        for k in sorted(set(file_values) - set(keys)):
            problems.append(f"unknown config key {k!r} for command {args.command}")
    cfg = {}
    for key in keys:
        typ, _, _ = OPTIONS[key]
        default = _default(args.command, key)
        for source, raw in (("flag", getattr(args, key)), ("env", environ.get(ENV_PREFIX + key.upper())),
                            ("config", file_values.get(key))):
            if raw is not None:
                try:
                    cfg[key] = typ(raw)
                except (TypeError, ValueError):
                    problems.append(f"{key}: cannot read {raw!r} from {source} as {typ.__name__.lstrip('_')}")
                    cfg[key] = default
                break
        else:
            cfg[key] = default
    for key in REQUIRED[args.command]:
        if cfg.get(key) is None:
            problems.append(f"--{key.replace('_', '-')} is required")
    if "format" in cfg and cfg["format"] not in ("dot", "json"):
        problems.append("--format must be dot or json")
    if cfg.get("model") is not None and cfg["model"] not in ("ggnn", "gmn"):
        problems.append("--model must be ggnn or gmn")
    for key in ("dim", "steps", "batch", "epochs", "workers", "functionalities", "variants", "k", "min_count"):
        if key in cfg and cfg[key] is not None and cfg[key] < 1:
            problems.append(f"--{key.replace('_', '-')} must be >= 1")
    if cfg.get("lr") is not None and cfg["lr"] < 0:
        problems.append("--lr must be >= 0")
    if cfg.get("balance") is not None and cfg["balance"] <= 0:
        problems.append("--balance must be > 0")
    if problems:
        raise ConfigError(problems)
    return cfg


def _limits(cfg: dict):
    if "workers" not in cfg:
        return contextlib.nullcontext()
    return threadpool_limits(1 if cfg.get("deterministic") else cfg["workers"])


def _store(cfg):
    store = load_corpus(cfg["input"], granularity=cfg.get("granularity"))
    for s in store.skipped:
        log.warning("skipped %s: %s: %s", s["id"], s["error"], s["message"])
    return store


def _model(cfg) -> CloneModel:
    return CloneModel.load(cfg["checkpoint"], expect=cfg.get("model"))


def _threshold(cfg, model: CloneModel) -> float:
    sigma = cfg.get("threshold")
    if sigma is None:
        sigma = model.threshold
    if sigma is None:
        raise ConfigError(["no --threshold given and the checkpoint has no tuned threshold"])
    return float(sigma)


def cmd_graph(cfg) -> int:
    store = load_corpus(cfg["input"], granularity=cfg["granularity"])
    out = Path(cfg["out"])
    total: Counter = Counter()
    for fid in store.ids():
        g = store.graph(fid)
        total.update(g.histogram())
        atomic_write(out / f"{fid}.{cfg['format']}", fa_ast.export_graph(g, cfg["format"]))
    hist = " ".join(f"{e.value}={total.get(e.value, 0)}" for e in fa_ast.EdgeType)
    print(f"{len(store)} graphs written to {out}; edges: {hist}")
    for s in store.skipped:
        print(f"error: {s['source']}: {s['error']}: {s['message']}", file=sys.stderr)
    return 2 if store.skipped else 0


def cmd_synth(cfg) -> int:
    corpus = gen_synthetic_corpus(cfg["functionalities"], cfg["variants"], cfg["seed"])
    out = Path(cfg["out"])
    atomic_write(out / "fragments.jsonl", corpus.store.to_records())
    atomic_write(out / "pairs.tsv", format_pairs(corpus.pairs))
    for name, part in zip(("train", "valid", "test"), split_pairs(corpus.pairs, (8, 1, 1), cfg["seed"])):
        atomic_write(out / f"{name}.tsv", format_pairs(part))
    atomic_write(out / "manifest.json", manifest_json(corpus))
    counts = type_breakdown(corpus.pairs)
    print(f"{len(corpus.store)} fragments, {len(corpus.pairs)} pairs -> {out}")
    print("  " + " ".join(f"{t}={n}" for t, (n, _) in counts.items()))
    return 0


def cmd_train(cfg) -> int:
    store = _store(cfg)
    pairs = load_pairs(cfg["pairs"])
    out = Path(cfg["out"])
    atomic_write(out / "config.json", json.dumps({"command": "train", **cfg}, indent=2, sort_keys=True) + "\n")
    if cfg["valid"]:
        train_pairs, valid_pairs = pairs, load_pairs(cfg["valid"])
    else:
        train_pairs, valid_pairs, test_pairs = split_pairs(pairs, (8, 1, 1), cfg["seed"])
        for name, part in (("train", train_pairs), ("valid", valid_pairs), ("test", test_pairs)):
            atomic_write(out / f"{name}.tsv", format_pairs(part))
    config = TrainConfig(model=cfg["model"], d=cfg["dim"], T=cfg["steps"], lr=cfg["lr"], batch_size=cfg["batch"],
                         epochs=cfg["epochs"], seed=cfg["seed"], balance=cfg["balance"], min_count=cfg["min_count"])
    records = []

    def on_epoch(rec):
        records.append(json.dumps(rec, sort_keys=True))
        log.info("epoch %d loss %.4f valid F1 %s", rec["epoch"], rec["train_loss"], rec["valid_F1"])

    result = train(config, train_pairs, valid_pairs, store, log=on_epoch)
    result.model.save(out / "model.json")
    atomic_write(out / "train_log.jsonl", "".join(r + "\n" for r in records))
    best = result.log[result.best_epoch - 1]
    print(f"best epoch {result.best_epoch}: valid F1 {best['valid_F1']} at sigma {best['sigma']}; "
          f"checkpoint {out / 'model.json'}")
    return 0


def _labeled(cfg):
    store = _store(cfg)
    pairs = load_pairs(cfg["pairs"])
    return store, pairs, [p.label for p in pairs]


def cmd_tune(cfg) -> int:
    model = _model(cfg)
    store, pairs, labels = _labeled(cfg)
    sigma, r = metrics.tune_threshold(score_pairs(model, pairs, store), labels)
    model.threshold = sigma
    target = cfg["out"] or cfg["checkpoint"]
    model.save(target)
    print(json.dumps({"sigma": sigma, "precision": r.precision, "recall": r.recall, "f1": r.f1}, sort_keys=True))
    return 0


def cmd_eval(cfg) -> int:
    model = _model(cfg)
    store, pairs, labels = _labeled(cfg)
    sigma = _threshold(cfg, model)
    scores = score_pairs(model, pairs, store)
    types = [p.clone_type for p in pairs]
    report = metrics.evaluate(scores, labels, sigma, types if all(t for t in types) else None)
    print(report.to_table(), end="")
    if cfg["out"]:
        out = Path(cfg["out"])
        atomic_write(out / "report.json", report.to_json())
        atomic_write(out / "report.txt", report.to_table())
        atomic_write(out / "sweep.csv", report.sweep_csv())
        atomic_write(out / "roc.csv", report.roc_csv())
        if cfg["plots"]:
            metrics.plot_curves(report, out / "sweep.png", out / "roc.png")
    return 0


def cmd_predict(cfg) -> int:
    model = _model(cfg)
    store = _store(cfg)
    pairs = load_pairs(cfg["pairs"])
    rows = predict(model, _threshold(cfg, model), pairs, store)
    lines = ["id1\tid2\tscore\tverdict"]
    lines += [f"{r['id1']}\t{r['id2']}\t{r['score']!r}\t{int(r['verdict'])}" for r in rows]
    atomic_write(cfg["out"], "\n".join(lines) + "\n")
    print(f"{sum(r['verdict'] for r in rows)} of {len(rows)} pairs predicted clones -> {cfg['out']}")
    return 0


def cmd_attention(cfg) -> int:
    model = _model(cfg)
    if model.kind is not ModelKind.GMN:
        raise ModelKindMismatch("attention export needs a gmn checkpoint")
    store = _store(cfg)
    net = gmn.GmnConfig(model.config.d, model.config.T, match_sign=model.config.match_sign)
    lines = []
    for p in load_pairs(cfg["pairs"]):
        g1, g2 = store.graph(p.id1), store.graph(p.id2)
        result = gmn.embed_pair(g1, g2, net, model.vocab, model.params)
        for rec in gmn.export_attention(result, g1, g2, cfg["k"]):
            lines.append(json.dumps({"id1": p.id1, "id2": p.id2, **rec}, sort_keys=True))
    atomic_write(cfg["out"], "".join(line + "\n" for line in lines))
    print(f"{len(lines)} attention records -> {cfg['out']}")
    return 0


HANDLERS = {
    "graph": cmd_graph,
    "synth": cmd_synth,
    "train": cmd_train,
    "tune": cmd_tune,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "attention": cmd_attention,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    log.info("resolved config: %s", json.dumps({"command": args.command, **cfg}, sort_keys=True))
    try:
        with _limits(cfg):
            return HANDLERS[args.command](cfg)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"error: {p}", file=sys.stderr)
        return 1
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (NumericError, FlowCloneError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
