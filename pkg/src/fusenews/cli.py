"""Command-line interface.

Subcommands: features, train, eval, predict, explain. Runs are driven by a
JSON config file plus flags; flags take precedence over file values, which
take precedence over built-in defaults. All randomness flows from the single
seed in the resolved config, and every output file embeds the config hash
and seed in a comment header.

Exit codes (stable scripting contract):
    0  success
    2  malformed input (dataset, config, lexicon, embedding file)
    3  degenerate data (single class, class smaller than k, too few rows)
    4  model/weights mismatch (bad weights file, wrong embedding dimension)
    5  unsupported explanation for this model configuration
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace

from .encoding import load_precomputed
from .errors import (
    DegenerateDataError,
    DimensionError,
    ExplainModeError,
    FuseNewsError,
    InputFormatError,
    NonFiniteError,
    NotTrainedError,
    WeightsFormatError,
)
from .explain import attention_heatmap, exact_shapley, sampled_shapley
from .features import (
    FEATURE_NAMES,
    Article,
    default_lexicon,
    extract_stat_features,
    load_dataset,
)
from .model import (
    ENCODER_BUILTIN,
    ENCODER_PRECOMPUTED,
    ModelConfig,
    load_model,
    save_model,
)
from .reports import (
    header_comment,
    metrics_text,
    write_ablation_csv,
    write_heatmap_csv,
    write_heatmap_svg,
    write_history_csv,
    write_metrics_csv,
    write_metrics_text,
    write_shapley_csv,
    write_shapley_text,
    write_timings_csv,
)
from .training import (
    ABLATION_LADDER,
    TrainConfig,
    cross_validate,
    predict_prepared,
    prepare_articles,
    run_ablation,
    train,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_WEIGHTS = 4
EXIT_EXPLAIN = 5


@dataclass
class RunConfig:
    """Fully resolved run settings (defaults < config file < flags)."""

    dataset: str | None = None
    label_fake: int = 1
    encoder: str = ENCODER_BUILTIN
    embeddings: str | None = None
    output_dir: str = "out"
    seed: int = 42
    folds: int = 5
    threads: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def resolved_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "label_fake": self.label_fake,
            "encoder": self.encoder,
            "embeddings": self.embeddings,
            "output_dir": self.output_dir,
            "seed": self.seed,
            "folds": self.folds,
            "threads": self.threads,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
        }

    @property
    def config_hash(self) -> str:
        # output_dir and threads never influence computed values, so they
        # stay out of the hash and identical runs into different directories
        # still produce byte-identical artifacts
        hashed = self.resolved_dict()
        del hashed["output_dir"], hashed["threads"]
        canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise InputFormatError("config file not found", path=path) from None
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"config is not valid JSON ({exc})", path=path) from None
    if not isinstance(doc, dict):
        raise InputFormatError("config root must be a JSON object", path=path)
    return doc


_ABLATION_FLAGS = dict(ABLATION_LADDER)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, optional config file and command-line overrides."""
    doc: dict = {}
    if getattr(args, "config", None):
        doc = _load_config_file(args.config)
    try:
        model = ModelConfig.from_dict({**ModelConfig().to_dict(), **doc.get("model", {})})
        train_cfg = TrainConfig.from_dict({**TrainConfig().to_dict(), **doc.get("train", {})})
    except (TypeError, ValueError, DimensionError) as exc:
        raise InputFormatError(f"bad model/train config: {exc}") from None
    cfg = RunConfig(
        dataset=doc.get("dataset"),
        label_fake=int(doc.get("label_fake", 1)),
        encoder=doc.get("encoder", ENCODER_BUILTIN),
        embeddings=doc.get("embeddings"),
        output_dir=doc.get("output_dir", "out"),
        seed=int(doc.get("seed", 42)),
        folds=int(doc.get("folds", 5)),
        threads=int(doc.get("threads", 1)),
        model=model,
        train=train_cfg,
    )
    if getattr(args, "dataset", None):
        cfg.dataset = args.dataset
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "label_fake", None) is not None:
        cfg.label_fake = args.label_fake
    if getattr(args, "encoder", None):
        cfg.encoder = args.encoder
    if getattr(args, "embeddings", None):
        cfg.embeddings = args.embeddings
        if not getattr(args, "encoder", None):
            cfg.encoder = ENCODER_PRECOMPUTED
    if getattr(args, "folds", None) is not None:
        cfg.folds = args.folds
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "lr", None) is not None:
        cfg.train = replace(cfg.train, learning_rate=args.lr)
    if getattr(args, "epochs", None) is not None:
        cfg.train = replace(cfg.train, max_epochs=args.epochs)
    if getattr(args, "batch_size", None) is not None:
        cfg.train = replace(cfg.train, batch_size=args.batch_size)
    if getattr(args, "ablate", None):
        cfg.model = replace(cfg.model, **_ABLATION_FLAGS[args.ablate])
    if cfg.encoder not in (ENCODER_BUILTIN, ENCODER_PRECOMPUTED):
        raise InputFormatError(f"unknown encoder '{cfg.encoder}'")
    if cfg.threads < 1:
        raise InputFormatError("--threads must be >= 1")
    # all work currently runs on one worker, which respects any cap
    cfg.train = replace(cfg.train, seed=cfg.seed)
    return cfg


def _require_dataset(cfg: RunConfig) -> list[Article]:
    if not cfg.dataset:
        raise InputFormatError("no dataset given (config 'dataset' or --dataset)")
    return load_dataset(cfg.dataset, label_fake=cfg.label_fake)


def _store_for(cfg: RunConfig):
    if cfg.encoder != ENCODER_PRECOMPUTED:
        return None
    if not cfg.embeddings:
        raise InputFormatError(
            "encoder 'precomputed' needs an embedding file (config 'embeddings' or --embeddings)"
        )
    return load_precomputed(cfg.embeddings)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_features(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    articles = _require_dataset(cfg)
    lexicon = default_lexicon()
    out_path = args.out or "features.csv"
    parent = os.path.dirname(out_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_comment("features", cfg.config_hash, cfg.seed))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id"] + list(FEATURE_NAMES) + ["label"])
        for a in articles:
            vec = extract_stat_features(a, lexicon)
            writer.writerow([a.id] + [repr(float(v)) for v in vec] + [a.label])
    if not articles:
        print("warning: dataset has no rows, wrote header only", file=sys.stderr)
    print(f"wrote {len(articles)} feature rows to {out_path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    articles = _require_dataset(cfg)
    store = _store_for(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    result = train(
        articles, cfg.model, cfg.train, encoder=cfg.encoder, store=store, fitted_tag="train"
    )
    meta = {"config_hash": cfg.config_hash}
    weights_path = os.path.join(cfg.output_dir, "weights.json")
    save_model(result.model, weights_path, meta=meta)
    write_history_csv(
        result.history, os.path.join(cfg.output_dir, "history.csv"), cfg.config_hash, cfg.seed
    )
    last = result.history[result.best_epoch - 1]
    print(
        f"trained {result.model.parameter_count} parameters, best epoch {result.best_epoch} "
        f"(val_loss {last.val_loss:.4f}, val_f1 {last.val_f1:.4f})"
    )
    print(f"weights: {weights_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    articles = _require_dataset(cfg)
    store = _store_for(cfg)
    os.makedirs(cfg.output_dir, exist_ok=True)
    if args.ablation:
        rows = run_ablation(
            articles, cfg.folds, cfg.model, cfg.train, encoder=cfg.encoder, store=store
        )
        path = os.path.join(cfg.output_dir, "ablation.csv")
        write_ablation_csv(rows, path, cfg.config_hash, cfg.seed)
        for name, report in rows:
            print(f"{name}: F1 {report.mean('f1'):.4f} +/- {report.std('f1'):.4f}")
        print(f"ablation table: {path}")
        return EXIT_OK
    report = cross_validate(
        articles, cfg.folds, cfg.model, cfg.train, encoder=cfg.encoder, store=store
    )
    write_metrics_csv(report, os.path.join(cfg.output_dir, "metrics.csv"), cfg.config_hash)
    write_timings_csv(report, os.path.join(cfg.output_dir, "timings.csv"), cfg.config_hash)
    write_metrics_text(
        report,
        os.path.join(cfg.output_dir, "report.txt"),
        cfg.config_hash,
        f"{cfg.folds}-fold cross-validation",
    )
    print(metrics_text(report, f"{cfg.folds}-fold cross-validation"), end="")
    print(f"reports in {cfg.output_dir}/")
    return EXIT_OK


def _adhoc_or_dataset_articles(args: argparse.Namespace, cfg: RunConfig) -> list[Article]:
    if getattr(args, "title", None) is not None or getattr(args, "text", None) is not None:
        return [
            Article(
                id=getattr(args, "id", None) or "adhoc",
                title=args.title or "",
                body=args.text or "",
                label=0,
            )
        ]
    if getattr(args, "input", None):
        return load_dataset(args.input, label_fake=cfg.label_fake, require_label=False)
    raise InputFormatError("need --input CSV or --title/--text")


def cmd_predict(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    model = load_model(args.weights)
    store = None
    if model.encoder == ENCODER_PRECOMPUTED:
        if not (args.embeddings or cfg.embeddings):
            raise WeightsFormatError(
                "model was trained on precomputed embeddings; pass --embeddings",
                field="encoder",
            )
        store = load_precomputed(args.embeddings or cfg.embeddings)
        if store.dim != model.config.d_t:
            raise WeightsFormatError(
                f"embedding file dim={store.dim} but model expects d_t={model.config.d_t}",
                field="config.d_t",
            )
    articles = _adhoc_or_dataset_articles(args, cfg)
    prepared = prepare_articles(articles)
    probs, _ = predict_prepared(model, prepared, store)
    lines = []
    for pa, p in zip(prepared, probs):
        verdict = "fake" if p >= 0.5 else "real"
        lines.append(f"{pa.id},{repr(float(p))},{verdict}")
    print("\n".join(lines))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "predictions.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(header_comment("predictions", cfg.config_hash, model.seed))
            fh.write("id,fake_probability,verdict\n")
            fh.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    cfg = build_run_config(args)
    model = load_model(args.weights)
    store = None
    if model.encoder == ENCODER_PRECOMPUTED:
        if not (args.embeddings or cfg.embeddings):
            raise WeightsFormatError(
                "model was trained on precomputed embeddings; pass --embeddings",
                field="encoder",
            )
        store = load_precomputed(args.embeddings or cfg.embeddings)
    articles = _adhoc_or_dataset_articles(args, cfg)
    if getattr(args, "id", None) and getattr(args, "input", None):
        matches = [a for a in articles if a.id == args.id]
        if not matches:
            raise InputFormatError(f"article id '{args.id}' not found in {args.input}")
        articles = matches
    article = articles[0]
    os.makedirs(args.out, exist_ok=True)
    written = []
    if args.method in ("attention", "both"):
        export = attention_heatmap(model, article, store=store)
        csv_path = os.path.join(args.out, "heatmap.csv")
        svg_path = os.path.join(args.out, "heatmap.svg")
        write_heatmap_csv(export, csv_path, cfg.config_hash, model.seed)
        write_heatmap_svg(export, svg_path, cfg.config_hash, model.seed)
        written += [csv_path, svg_path]
    if args.method in ("shapley", "both"):
        if args.permutations:
            report = sampled_shapley(
                model, article, permutations=args.permutations, seed=cfg.seed, store=store
            )
        else:
            report = exact_shapley(model, article, store=store)
        csv_path = os.path.join(args.out, "shapley.csv")
        txt_path = os.path.join(args.out, "shapley.txt")
        write_shapley_csv(report, csv_path, cfg.config_hash, model.seed)
        write_shapley_text(report, txt_path, cfg.config_hash, model.seed)
        print(f"shapley efficiency residual: {report.efficiency_residual:.3e}")
        written += [csv_path, txt_path]
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run-config file")
    p.add_argument("--dataset", help="dataset CSV (id,title,text,label)")
    p.add_argument("--out", help="output directory (features: output CSV path)")
    p.add_argument("--seed", type=int, help="seed overriding the config value")
    p.add_argument(
        "--label-fake", dest="label_fake", type=int, choices=(0, 1),
        help="which raw label value means fake (default 1)",
    )
    p.add_argument("--threads", type=int, help="worker cap, default 1 for reproducibility")


def _add_train_like(p: argparse.ArgumentParser) -> None:
    p.add_argument("--encoder", choices=(ENCODER_BUILTIN, ENCODER_PRECOMPUTED))
    p.add_argument("--embeddings", help="embedding interchange file (precomputed encoder)")
    p.add_argument("--lr", type=float, help="learning rate")
    p.add_argument("--epochs", type=int, help="max training epochs")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument(
        "--ablate", choices=tuple(name for name, _ in ABLATION_LADDER),
        help="train a reduced configuration",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusenews",
        description="Feature-fusion fake news classifier: train, evaluate, explain.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="extract the raw statistical feature table")
    _add_common(p)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("train", help="train a model and persist weights")
    _add_common(p)
    _add_train_like(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="stratified k-fold cross-validation")
    _add_common(p)
    _add_train_like(p)
    p.add_argument("--folds", type=int, help="number of folds (default 5)")
    p.add_argument("--ablation", action="store_true", help="run the component ladder")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("predict", help="score articles with saved weights")
    _add_common(p)
    p.add_argument("--weights", required=True, help="weights file from 'train'")
    p.add_argument("--input", help="articles CSV to score")
    p.add_argument("--title", help="ad-hoc article title")
    p.add_argument("--text", help="ad-hoc article body")
    p.add_argument("--id", help="id for the ad-hoc article")
    p.add_argument("--embeddings", help="embedding file for precomputed-encoder models")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("explain", help="attention heatmap and Shapley attribution")
    _add_common(p)
    p.add_argument("--weights", required=True)
    p.add_argument("--input", help="articles CSV containing the article")
    p.add_argument("--id", help="article id inside --input")
    p.add_argument("--title", help="ad-hoc article title")
    p.add_argument("--text", help="ad-hoc article body")
    p.add_argument(
        "--method", choices=("attention", "shapley", "both"), default="both"
    )
    p.add_argument(
        "--permutations", type=int, default=0,
        help="use the sampled Shapley estimator with this many permutations",
    )
    p.add_argument("--embeddings", help="embedding file for precomputed-encoder models")
    p.set_defaults(fn=cmd_explain)
    return parser


_EXIT_BY_ERROR: tuple[tuple[type, int], ...] = (
    (ExplainModeError, EXIT_EXPLAIN),
    (WeightsFormatError, EXIT_WEIGHTS),
    (NotTrainedError, EXIT_WEIGHTS),
    (DegenerateDataError, EXIT_DEGENERATE),
    (InputFormatError, EXIT_INPUT),
    (DimensionError, EXIT_WEIGHTS),
    (NonFiniteError, EXIT_WEIGHTS),
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # explain defaults its output dir like the other commands
    if getattr(args, "out", None) is None and args.command in ("explain",):
        args.out = "out"
    try:
        return args.fn(args)
    except FuseNewsError as exc:
        for err_type, code in _EXIT_BY_ERROR:
            if isinstance(exc, err_type):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
