"""Command line entry point: ``dorclass <subcommand> ...``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import models
from .clean import DEDUP_KEYS, DEFAULT_ENGLISH_THRESHOLD
from .ingest import DEFAULT_METADATA_PREFIX, IngestError
from .models import ConfigError, TrainConfig
from .pipeline import (STAGES, MissingArtifact, PipelineConfig, WorkspaceLocked, clean_file, evaluate_artifacts,
                       harvest_to, predict_texts, run_pipeline, split_file, stats_csv, train_artifact,
                       vectorize_file)
from .vectorize import SIZE_CLASSES

log = logging.getLogger("dorclass")


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _load_train_config(path: str | None) -> TrainConfig:
    if not path:
        return TrainConfig()
    try:
        return TrainConfig.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def cmd_harvest(args) -> int:
    stats = harvest_to(args.endpoint, args.out, args.from_date, args.until_date,
                       args.metadata_prefix, args.cursor_file)
    _print_json(dataclasses.asdict(stats))
    return 0


def cmd_clean(args) -> int:
    stats = clean_file(args.input, args.out, args.mapping, args.dedup_key, args.english_threshold)
    _print_json(dataclasses.asdict(stats))
    return 0


def cmd_stats(args) -> int:
    sys.stdout.write(stats_csv(args.input))
    return 0


def cmd_split(args) -> int:
    n_train, n_holdout = split_file(args.input, args.train_out, args.holdout_out, args.ratio, args.seed)
    _print_json({"train": n_train, "holdout": n_holdout})
    return 0


def cmd_vectorize(args) -> int:
    if args.model_in:
        selection = args.selection_in or f"{args.model_in}.selection-{args.size}.json"
        shape = vectorize_file(args.input, args.matrix_out, size_class=args.size,
                               model_in=args.model_in, selection_in=selection)
    else:
        if not args.model_out:
            raise ConfigError("vectorize needs --model-out (fit) or --model-in (apply)")
        selection = args.selection_out or f"{args.model_out}.selection-{args.size}.json"
        shape = vectorize_file(args.input, args.matrix_out, args.model_out, selection, args.size)
    _print_json({"rows": shape[0], "features": shape[1]})
    return 0


def cmd_train(args) -> int:
    cfg = _load_train_config(args.config).replace(family=args.family)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    selection = args.selection or f"{args.vectorizer}.selection-{args.size}.json"
    if args.grid:
        cfg = _grid_search(args, cfg)
    out = train_artifact(args.matrix, args.input, cfg, args.out, args.vectorizer, selection, args.size,
                         args.ratio)
    _print_json({"artifact": str(out), "config": cfg.to_json()})
    return 0


def _grid_search(args, cfg: TrainConfig) -> TrainConfig:
    from .clean import read_payloads
    from .sample import SplitConfig, assign_best_labels, label_matrix, train_validation_split
    from .vectorize import read_csr

    plan = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    if isinstance(plan, dict):
        plan = plan.get("plan", [])
    X = read_csr(args.matrix)
    payloads = read_payloads(args.input)
    Y = label_matrix(p.labels for p in payloads)
    fit_idx, val_idx = train_validation_split(payloads, assign_best_labels(payloads),
                                              SplitConfig(args.ratio, cfg.seed))
    result = models.sequential_grid_search(cfg.family, plan, (X[fit_idx], Y[fit_idx]), (X[val_idx], Y[val_idx]),
                                           base=cfg, beta=cfg.beta)
    for row, score in result.trace:
        log.info("grid %s -> %.4f", json.dumps(row, sort_keys=True), score)
    return result.config


def cmd_evaluate(args) -> int:
    bundle = evaluate_artifacts(args.model, args.matrix, args.truth, args.out_dir, args.stats_in, args.average)
    sys.stdout.write(bundle.table_aggregate_csv())
    return 0


def cmd_predict(args) -> int:
    texts = list(args.text or [])
    if args.input:
        texts += [line.rstrip("\n") for line in open(args.input, encoding="utf-8") if line.strip()]
    if not texts:
        raise ConfigError("predict needs --text or --in")
    for text, row in zip(texts, predict_texts(args.model, texts)):
        print(json.dumps({"text": text[:80], **row}))
    return 0


def cmd_serve(args) -> int:
    from .serve import make_server

    server, _ = make_server(args.model, args.host, args.port)
    log.info("serving on http://%s:%d/classify", args.host, server.server_address[1])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_run(args) -> int:
    cfg = PipelineConfig.load(args.config)
    for stage in args.stages:
        if stage not in STAGES:
            raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    _print_json(run_pipeline(cfg, args.stages or None))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dorclass", description="Classify research-data metadata by discipline.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harvest", help="harvest DataCite records over OAI-PMH")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--from", dest="from_date")
    p.add_argument("--until", dest="until_date")
    p.add_argument("--out", required=True)
    p.add_argument("--cursor-file")
    p.add_argument("--metadata-prefix", default=DEFAULT_METADATA_PREFIX)
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("clean", help="map subjects, deduplicate and build payloads")
    p.add_argument("--in", dest="input", required=True, help="harvested records (.jsonl) or a ListRecords .xml file")
    p.add_argument("--out", required=True)
    p.add_argument("--mapping", help="mapping table (default: bundled table)")
    p.add_argument("--dedup-key", choices=DEDUP_KEYS, default="payload+labels")
    p.add_argument("--english-threshold", type=float, default=DEFAULT_ENGLISH_THRESHOLD)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("stats", help="per-discipline dataset statistics as CSV")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="stratified train/holdout split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-out", required=True)
    p.add_argument("--holdout-out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("vectorize", help="tf-idf vectors with ANOVA feature selection")
    p.add_argument("--size", choices=sorted(SIZE_CLASSES), default="s")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model-out", help="fit a vectorizer on --in and write it here")
    p.add_argument("--selection-out")
    p.add_argument("--model-in", help="apply an existing vectorizer instead of fitting")
    p.add_argument("--selection-in")
    p.add_argument("--matrix-out", required=True)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("train", help="train one model family")
    p.add_argument("--family", choices=models.FAMILIES, required=True)
    p.add_argument("--size", choices=sorted(SIZE_CLASSES), default="s")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON training config")
    p.add_argument("--grid", help="JSON grid-search plan: a list of {parameter: [values]} grids")
    p.add_argument("--matrix", required=True)
    p.add_argument("--in", dest="input", required=True, help="payload file aligned with --matrix")
    p.add_argument("--vectorizer", required=True)
    p.add_argument("--selection")
    p.add_argument("--ratio", type=float, default=0.1, help="validation share of the training set")
    p.add_argument("--out", required=True, help="artifact directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score model artifacts on a holdout matrix")
    p.add_argument("--model", nargs="+", required=True, help="artifact directories")
    p.add_argument("--matrix", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stats-in", help="payloads for the correlation annex (default: --truth)")
    p.add_argument("--average", choices=("f", "pr"), default="f")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="per-label probabilities for raw text")
    p.add_argument("--model", required=True)
    p.add_argument("--text", action="append")
    p.add_argument("--in", dest="input", help="one text per line")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("serve", help="HTTP classify endpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run", help="run pipeline stages in a workspace from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("stages", nargs="*", help=f"subset of {', '.join(STAGES)} (default: all)")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (MissingArtifact, ConfigError, WorkspaceLocked, IngestError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
