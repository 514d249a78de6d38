"""Command-line entry point: ``keqi <subcommand> [options]``.

Every tunable lives in :class:`RunConfig`. A flat JSON file passed with
``--config`` sets any of its keys; flags given on the command line win over
the file, and the file wins over the defaults. Unknown keys are an error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .corpus import load_articles, load_pages, save_articles, save_pages
from .embed_pretrain import SgnsConfig, WalkConfig, load_embeddings, pretrain, save_embeddings
from .entity_graph import build_article_graph, build_corpus_graph, check_alpha, load_graph, save_graph
from .label_pipeline import (
    TreeConfig,
    auto_label,
    feature_importances,
    fit_tree,
    importance_table,
    load_tree,
    save_tree,
    tree_accuracy,
    tree_to_text,
)
from .quality_model import ModelConfig, QualityModel
from .synth import SynthConfig, generate
from .train_eval import (
    VARIANTS,
    Dataset,
    TrainConfig,
    ablate,
    ablation_table,
    build_model,
    evaluate,
    examples_for,
    metrics_table,
    train,
    write_manifest,
    write_metrics_log,
)

log = logging.getLogger("keqi")


@dataclass
class RunConfig:
    """Merged settings for every subcommand (defaults shown)."""

    seed: int = 0
    # graph walks and skip-gram pretraining
    alpha: float = 0.8
    walk_length: int = 10
    walks_per_node: int = 10
    p: float = 1.0
    q: float = 1.0
    dim: int = 64
    window: int = 5
    negatives: int = 5
    sgns_epochs: int = 5
    sgns_lr: float = 0.025
    # classifier and training
    gcn_layers: int = 3
    epochs: int = 5
    batch_size: int = 16
    lr: float = 2e-4
    dropout: float = 0.5
    weight_decay: float = 0.01
    node_init: str = "random"
    fusion: str = "gate"
    head: str = "softmax"
    min_freq: int = 2
    # decision-tree labeler
    max_depth: int = 4
    min_samples_leaf: int = 5
    holdout: int = 0
    # synthetic corpus sizes
    n_train: int = 800
    n_valid: int = 100
    n_test: int = 100
    n_unlabeled: int = 3000

    def walk_config(self) -> WalkConfig:
        return WalkConfig(self.walk_length, self.walks_per_node, self.p, self.q, self.alpha, self.seed)

    def sgns_config(self) -> SgnsConfig:
        return SgnsConfig(dim=self.dim, window=self.window, negatives=self.negatives, epochs=self.sgns_epochs,
                          learning_rate=self.sgns_lr, seed=self.seed)

    def model_config(self) -> ModelConfig:
        return ModelConfig(hidden_dim=self.dim, gcn_layers=self.gcn_layers, dropout_rate=self.dropout,
                           node_init=self.node_init, fusion=self.fusion, head=self.head)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.lr, self.dropout, self.weight_decay, self.seed,
                           self.node_init)

    def tree_config(self) -> TreeConfig:
        return TreeConfig(self.max_depth, self.min_samples_leaf)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(n_train=self.n_train, n_valid=self.n_valid, n_test=self.n_test,
                           n_unlabeled=self.n_unlabeled, seed=self.seed)


_FIELDS = {f.name: f for f in fields(RunConfig)}
_CHOICES = {"node_init": ("random", "pretrained"), "fusion": ("gate", "concat"), "head": ("softmax", "sigmoid")}


def _coerce(key: str, value):
    kind = type(getattr(RunConfig(), key))
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ValueError(f"config key {key!r} expects {kind.__name__}, got {value!r}")
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ValueError(f"config key {key!r} must be one of {_CHOICES[key]}, got {value!r}")
    return value


def load_config(path) -> dict:
    """Read a flat JSON object of RunConfig keys; unknown keys are rejected."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ValueError(f"config {path}: expected a JSON object")
    unknown = sorted(set(raw) - set(_FIELDS))
    if unknown:
        raise ValueError(f"config {path}: unknown key(s) {', '.join(unknown)}")
    return {k: _coerce(k, v) for k, v in raw.items()}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = replace(cfg, **load_config(args.config))
    overrides = {k: getattr(args, k) for k in _FIELDS if hasattr(args, k)}
    cfg = replace(cfg, **overrides)
    check_alpha(cfg.alpha)
    return cfg


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _options(*names: str) -> argparse.ArgumentParser:
    """Parent parser with flags for the given RunConfig keys (absent unless given)."""
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("run settings (also settable with --config)")
    defaults = RunConfig()
    for name in names:
        flag = "--" + name.replace("_", "-")
        default = getattr(defaults, name)
        kw = {"dest": name, "default": argparse.SUPPRESS, "help": f"default {default}"}
        if name in _CHOICES:
            kw["choices"] = _CHOICES[name]
        else:
            kw["type"] = type(default)
        group.add_argument(flag, **kw)
    return parent


COMMON = ("seed",)
WALK = ("alpha", "walk_length", "walks_per_node", "p", "q", "dim", "window", "negatives", "sgns_epochs", "sgns_lr")
MODEL = ("dim", "gcn_layers", "epochs", "batch_size", "lr", "dropout", "weight_decay", "node_init", "fusion",
         "head", "min_freq")
TREE = ("max_depth", "min_samples_leaf", "holdout")
SYNTH = ("n_train", "n_valid", "n_test", "n_unlabeled")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="keqi", description="Knowledge-enhanced article quality pipeline.")
    top.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = top.add_subparsers(dest="command", metavar="command")
    sub.required = True
    base = argparse.ArgumentParser(add_help=False)
    base.add_argument("--config", metavar="PATH", help="flat JSON file of run settings")

    def command(name, help, *groups):
        keys = list(dict.fromkeys(k for g in (COMMON,) + groups for k in g))
        return sub.add_parser(name, help=help, parents=[base, _options(*keys)])

    p = command("synth", "write a synthetic planted-signal corpus", SYNTH)
    p.add_argument("--out", required=True, metavar="DIR")

    p = sub.add_parser("label", help="fit or apply the decision-tree labeler")
    lsub = p.add_subparsers(dest="label_command", metavar="action")
    lsub.required = True
    tree_opts = [base, _options(*COMMON, *TREE)]
    fit = lsub.add_parser("fit", help="fit a tree on scored, labeled articles", parents=tree_opts)
    fit.add_argument("--articles", required=True)
    fit.add_argument("--tree-out", required=True)
    fit.add_argument("--importances-out")
    app = lsub.add_parser("apply", help="fill missing labels from a fitted tree", parents=[base, _options(*COMMON)])
    app.add_argument("--tree", required=True)
    app.add_argument("--articles", required=True)
    app.add_argument("--out", required=True)

    p = command("build-graph", "build an article graph or the corpus graph")
    p.add_argument("--articles", required=True)
    p.add_argument("--pages", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--second-order", action="store_true", help="add second-order edges")
    p.add_argument("--count-repeats", action="store_true", help="count repeated mention pairs")
    p.add_argument("--article-id", help="emit only this article's first-order graph")

    p = command("pretrain", "random walks plus skip-gram over a corpus graph", WALK)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)

    p = command("train", "train the quality classifier", MODEL)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--pages", required=True)
    p.add_argument("--embeddings", help="embedding file, required for --node-init pretrained")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--log", help="per-epoch metrics log (default: next to the checkpoint)")
    p.add_argument("--manifest", help="run manifest (default: next to the checkpoint)")

    p = command("evaluate", "score predictions or a checkpoint")
    p.add_argument("--pred", help="predicted labels, one 'id<TAB>label' per line")
    p.add_argument("--gold", help="gold labels: same format, or an articles .jsonl file")
    p.add_argument("--checkpoint")
    p.add_argument("--articles")
    p.add_argument("--pages")
    p.add_argument("--pred-out", help="write the checkpoint's predictions here")
    p.add_argument("--log", help="append the metrics as one JSON line")

    p = command("ablate", "compare node init and fusion variants on the same data", MODEL)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--pages", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--repeats", type=int, default=1, help="paired seeds seed, seed+1, ...")
    p.add_argument("--variants", nargs="+", choices=list(VARIANTS), default=list(VARIANTS))

    command("config", "print the effective settings as a config file", WALK, MODEL, TREE, SYNTH)
    return top


# ---------------------------------------------------------------------------
# label files
# ---------------------------------------------------------------------------


def read_labels(path) -> dict[str, int]:
    """``id<TAB>label`` lines, or the labels of an articles ``.jsonl`` file."""
    path = Path(path)
    if path.suffix == ".jsonl":
        out = {}
        for a in load_articles(path):
            if a.label is None:
                raise ValueError(f"{path}: article {a.id!r} has no label")
            out[a.id] = a.label
        return out
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or parts[1].strip() not in ("0", "1"):
            raise ValueError(f"{path}: line {lineno}: expected 'id<TAB>0|1'")
        if parts[0] in out:
            raise ValueError(f"{path}: line {lineno}: duplicate id {parts[0]!r}")
        out[parts[0]] = int(parts[1])
    return out


def write_labels(path, labels: dict[str, int]) -> None:
    Path(path).write_text("".join(f"{k}\t{v}\n" for k, v in labels.items()), encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg: RunConfig) -> None:
    corpus = generate(cfg.synth_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "valid", "test", "unlabeled"):
        save_articles(getattr(corpus, name), out / f"{name}.jsonl")
    save_pages(corpus.pages, out / "pages.jsonl")
    write_manifest(out / "manifest.json", command="synth", config=cfg, synth=cfg.synth_config())
    print(f"wrote {len(corpus.train)}/{len(corpus.valid)}/{len(corpus.test)} labeled and "
          f"{len(corpus.unlabeled)} unlabeled articles, {len(corpus.pages)} pages to {out}")


def cmd_label(args, cfg: RunConfig) -> None:
    articles = load_articles(args.articles)
    if args.label_command == "apply":
        out = auto_label(load_tree(args.tree), articles)
        save_articles(out, args.out)
        filled = sum(a.label is None for a in articles)
        print(f"labeled {filled} article(s); {sum(a.label == 1 for a in out)} of {len(out)} high quality")
        return
    rows = [a for a in articles if a.scores is not None and a.label is not None]
    if not rows:
        raise ValueError(f"{args.articles}: no article has both scores and a label")
    order = np.random.default_rng(cfg.seed).permutation(len(rows)) if cfg.holdout else np.arange(len(rows))
    if cfg.holdout >= len(rows):
        raise ValueError(f"holdout {cfg.holdout} leaves no training rows out of {len(rows)}")
    fit_rows = [rows[i] for i in order[: len(rows) - cfg.holdout]]
    held = [rows[i] for i in order[len(rows) - cfg.holdout:]]
    xs, ys = [a.scores for a in fit_rows], [a.label for a in fit_rows]
    tree = fit_tree(xs, ys, cfg.tree_config())
    save_tree(tree, args.tree_out)
    imp = feature_importances(tree, xs, ys)
    print(tree_to_text(tree), end="")
    print(f"training accuracy {tree_accuracy(tree, xs, ys):.4f} on {len(fit_rows)} articles")
    if held:
        acc = tree_accuracy(tree, [a.scores for a in held], [a.label for a in held])
        print(f"held-out accuracy {acc:.4f} on {len(held)} articles")
    print(importance_table(imp), end="")
    if args.importances_out:
        Path(args.importances_out).write_text(importance_table(imp), encoding="utf-8")


def cmd_build_graph(args, cfg: RunConfig) -> None:
    articles = load_articles(args.articles)
    pages = load_pages(args.pages)
    if args.article_id:
        match = [a for a in articles if a.id == args.article_id]
        if not match:
            raise ValueError(f"{args.articles}: no article with id {args.article_id!r}")
        g = build_article_graph(match[0], pages, args.count_repeats)
    else:
        g = build_corpus_graph(articles, pages, args.second_order, args.count_repeats)
    save_graph(g, args.out)
    n_so = sum(e.order == "SO" for e in g.edges)
    print(f"graph: {len(g)} nodes, {len(g.edges) - n_so} FO edges, {n_so} SO edges -> {args.out}")


def cmd_pretrain(args, cfg: RunConfig) -> None:
    g = load_graph(args.graph)
    table = pretrain(g, cfg.walk_config(), cfg.sgns_config())
    save_embeddings(table, args.out)
    print(f"embeddings: {len(table)} entities x {table.dim} -> {args.out}")


def _load_embeddings_for(cfg: RunConfig, path: Optional[str]):
    if cfg.node_init == "pretrained" and not path:
        raise ValueError("--node-init pretrained needs --embeddings")
    if not path:
        return None
    table = load_embeddings(path)
    if table.dim != cfg.dim:
        raise ValueError(f"embedding dim {table.dim} differs from model dim {cfg.dim}")
    return table


def _sidecar(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


def cmd_train(args, cfg: RunConfig) -> None:
    emb = _load_embeddings_for(cfg, args.embeddings)
    pages = load_pages(args.pages)
    data = Dataset.build(load_articles(args.train), load_articles(args.valid), [], pages)
    extra = emb.names if (emb is not None and cfg.node_init == "pretrained") else ()
    model = build_model(data, cfg.model_config(), cfg.seed, emb, cfg.min_freq, extra)
    tr = examples_for(model, data.train, data.graphs)
    va = examples_for(model, data.valid, data.graphs)
    result = train(model, tr, va, cfg.train_config())
    result.model.save(args.out, {"best_epoch": result.best_epoch})
    log_path = Path(args.log) if args.log else _sidecar(args.out, ".metrics.jsonl")
    write_metrics_log(log_path, result.history)
    man_path = Path(args.manifest) if args.manifest else _sidecar(args.out, ".manifest.json")
    write_manifest(man_path, command="train", checkpoint=Path(args.out), metrics_log=log_path, config=cfg,
                   inputs={"train": args.train, "valid": args.valid, "pages": args.pages,
                           "embeddings": args.embeddings},
                   best_epoch=result.best_epoch, best_valid=result.best_valid)
    for h in result.history:
        v = h.get("valid", {})
        print(f"epoch {h['epoch']}: train loss {h['train_loss']:.4f}  valid F1 {v.get('f1', float('nan')):.4f}")
    print(f"best epoch {result.best_epoch}; checkpoint -> {args.out}")


def cmd_evaluate(args, cfg: RunConfig) -> None:
    if args.checkpoint:
        if not (args.articles and args.pages):
            raise ValueError("--checkpoint needs --articles and --pages")
        model = QualityModel.load(args.checkpoint)
        articles = load_articles(args.articles)
        data = Dataset.build([], [], articles, load_pages(args.pages))
        pred_arr = model.predict(examples_for(model, articles, data.graphs))
        pred = {a.id: int(p) for a, p in zip(articles, pred_arr)}
        if args.pred_out:
            write_labels(args.pred_out, pred)
        gold = read_labels(args.gold) if args.gold else {a.id: a.label for a in articles}
        if any(v is None for v in gold.values()):
            if args.pred_out:
                print(f"wrote {len(pred)} predictions to {args.pred_out} (no gold labels to score)")
                return
            raise ValueError("articles lack labels; pass --gold or --pred-out")
    elif args.pred and args.gold:
        pred, gold = read_labels(args.pred), read_labels(args.gold)
    else:
        raise ValueError("evaluate needs --pred and --gold, or --checkpoint with --articles and --pages")
    missing = sorted(set(gold) ^ set(pred))
    if missing:
        raise ValueError(f"prediction and gold ids differ (e.g. {missing[0]!r})")
    ids = list(gold)
    m = evaluate([pred[i] for i in ids], [gold[i] for i in ids])
    print(metrics_table({"model": m}), end="")
    if args.log:
        with Path(args.log).open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(m.to_dict(), sort_keys=True) + "\n")


def cmd_ablate(args, cfg: RunConfig) -> None:
    emb = load_embeddings(args.embeddings)
    if emb.dim != cfg.dim:
        raise ValueError(f"embedding dim {emb.dim} differs from model dim {cfg.dim}")
    if args.repeats < 1:
        raise ValueError("--repeats must be >= 1")
    pages = load_pages(args.pages)
    data = Dataset.build(load_articles(args.train), load_articles(args.valid), load_articles(args.test), pages)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for r in range(args.repeats):
        seed = cfg.seed + r
        outcomes = ablate(data, cfg.model_config(), replace(cfg.train_config(), seed=seed), emb, args.variants)
        print(f"seed {seed}")
        print(ablation_table(outcomes), end="")
        for name, o in outcomes.items():
            records.append({"seed": seed, "variant": name, "best_epoch": o.result.best_epoch,
                            "valid": o.valid.to_dict(), "test": o.test.to_dict()})
    write_metrics_log(out / "metrics.jsonl", records)
    write_manifest(out / "manifest.json", command="ablate", config=cfg, variants=args.variants,
                   repeats=args.repeats, metrics_log=out / "metrics.jsonl",
                   inputs={"train": args.train, "valid": args.valid, "test": args.test, "pages": args.pages,
                           "embeddings": args.embeddings})


def cmd_config(args, cfg: RunConfig) -> None:
    print(json.dumps(asdict(cfg), indent=2))


COMMANDS = {
    "synth": cmd_synth,
    "label": cmd_label,
    "build-graph": cmd_build_graph,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "config": cmd_config,
}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except (OSError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"keqi {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


def config_template() -> str:
    """Every config key with its default, as a JSON document."""
    return json.dumps(asdict(RunConfig()), indent=2) + "\n"
