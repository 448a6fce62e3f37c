"""Pipeline stages over a workspace directory.

Each stage reads the artifacts of the stages before it and writes its own
through a temporary file that is renamed into place, so an interrupted stage
never leaves a partial file under the final name.  ``manifest.json`` records
the sha256 of every artifact together with the seed and configuration that
produced it.
"""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import models
from .clean import DEDUP_KEYS, DEFAULT_ENGLISH_THRESHOLD, CleanStats, clean, read_payloads, write_payloads
from .evaluate import ReportBundle, build_report
from .ingest import DEFAULT_METADATA_PREFIX, HarvestStats, JsonlSink, harvest, load_raw
from .models import ConfigError, TrainConfig
from .sample import SplitConfig, assign_best_labels, dataset_stats, label_matrix, stratified_split, train_validation_split
from .scheme_map import load_mapping_table
from .vectorize import SIZE_CLASSES, FeatureSelection, VectorizerModel, fit_tfidf, read_csr, select_features, transform, write_csr

log = logging.getLogger(__name__)

STAGES = ("harvest", "clean", "stats", "split", "vectorize", "train", "evaluate")
# stage seeds are the master seed plus a fixed offset
SEED_OFFSETS = {"split": 0, "train": 1000}


class MissingArtifact(FileNotFoundError):
    pass


class WorkspaceLocked(RuntimeError):
    pass


class ArtifactCorrupted(ValueError):
    pass


# --- configuration -------------------------------------------------------

@dataclass
class PipelineConfig:
    workspace: str = "workspace"
    seed: int = 0
    raw: str | None = None
    endpoint: str | None = None
    metadata_prefix: str = DEFAULT_METADATA_PREFIX
    from_date: str | None = None
    until_date: str | None = None
    mapping: str | None = None
    dedup_key: str = "payload+labels"
    english_threshold: float = DEFAULT_ENGLISH_THRESHOLD
    split_ratio: float = 0.1
    size_class: str = "s"
    models: dict[str, dict] = field(default_factory=lambda: {"mlp": {}})
    threshold: float = 0.5
    port: int = 8080

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 63:
            raise ConfigError("seed must be a non-negative 64-bit integer")
        if self.size_class not in SIZE_CLASSES:
            raise ConfigError(f"size_class must be one of {sorted(SIZE_CLASSES)}")
        if self.dedup_key not in DEDUP_KEYS:
            raise ConfigError(f"dedup_key must be one of {DEDUP_KEYS}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must lie in (0, 1)")
        for family in self.models:
            if family not in models.FAMILIES:
                raise ConfigError(f"unknown model family {family!r}")

    def stage_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    def train_config(self, family: str) -> TrainConfig:
        overrides = dict(self.models.get(family, {}))
        overrides.update(family=family, seed=self.stage_seed("train"), threshold=self.threshold)
        return TrainConfig.from_json(overrides)

    def path(self, *parts: str) -> Path:
        return Path(self.workspace).joinpath(*parts)

    @property
    def raw_path(self) -> Path:
        return Path(self.raw) if self.raw else self.path("raw.jsonl")

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | os.PathLike | None = None) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**obj)
        if base_dir is not None:
            # relative paths in a config file are relative to that file
            for name in ("workspace", "raw", "mapping"):
                value = getattr(cfg, name)
                if value and not os.path.isabs(value):
                    setattr(cfg, name, str(Path(base_dir) / value))
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PipelineConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_json(obj, base_dir=Path(path).parent)


# --- file helpers --------------------------------------------------------

@contextlib.contextmanager
def atomic_path(path: str | os.PathLike) -> Iterator[Path]:
    """Yield a temporary path next to ``path``; rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def atomic_write(path: str | os.PathLike, data: bytes | str) -> None:
    with atomic_path(path) as tmp:
        if isinstance(data, str):
            tmp.write_text(data, encoding="utf-8")
        else:
            tmp.write_bytes(data)


def sha256_file(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def require(*paths: str | os.PathLike) -> None:
    for p in paths:
        if not Path(p).exists():
            raise MissingArtifact(f"required input is missing: {p}")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# --- stage functions on explicit paths -----------------------------------

def harvest_to(endpoint: str, out: str | os.PathLike, from_date=None, until_date=None,
               metadata_prefix: str = DEFAULT_METADATA_PREFIX, cursor_file=None, client=None) -> HarvestStats:
    """Harvest into ``<out>.partial`` and rename once the token chain is exhausted.

    An interrupted run leaves the partial file and the cursor behind; calling
    again with the same cursor file continues where it stopped.
    """
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    partial = Path(f"{out}.partial")
    if cursor_file is None or not Path(cursor_file).exists():
        partial.unlink(missing_ok=True)
    with JsonlSink(partial) as sink:
        stats = harvest(endpoint, sink, from_date, until_date, metadata_prefix, cursor_file, client)
    os.replace(partial, out)
    return stats


def clean_file(src, out, mapping=None, dedup_key="payload+labels",
               english_threshold=DEFAULT_ENGLISH_THRESHOLD) -> CleanStats:
    require(src)
    table = load_mapping_table(mapping)
    payloads, stats = clean(load_raw(src), table, dedup_key, english_threshold)
    with atomic_path(out) as tmp, open(tmp, "w", encoding="utf-8") as fh:
        write_payloads(payloads, fh)
    return stats


def stats_csv(src) -> str:
    require(src)
    return dataset_stats(read_payloads(src)).to_csv()


def split_file(src, train_out, holdout_out, ratio=0.1, seed=0) -> tuple[int, int]:
    require(src)
    payloads = read_payloads(src)
    train_idx, holdout_idx = stratified_split(payloads, assign_best_labels(payloads), SplitConfig(ratio, seed))
    for path, idx in ((train_out, train_idx), (holdout_out, holdout_idx)):
        with atomic_path(path) as tmp, open(tmp, "w", encoding="utf-8") as fh:
            write_payloads([payloads[i] for i in idx], fh)
    return len(train_idx), len(holdout_idx)


def vectorize_file(src, matrix_out, model_out=None, selection_out=None, size_class="s",
                   model_in=None, selection_in=None) -> tuple[int, int]:
    """Fit the vectorizer and feature selection on ``src`` or, given
    ``model_in`` and ``selection_in``, apply existing ones.  Returns the shape
    of the written matrix."""
    require(src)
    payloads = read_payloads(src)
    texts = [p.payload for p in payloads]
    if model_in is not None:
        require(model_in, selection_in)
        vec = VectorizerModel.load(model_in)
        selection = load_selection(selection_in)
        X = transform(vec, texts)
    else:
        vec = fit_tfidf(texts)
        X = transform(vec, texts)
        selection = select_features(X, assign_best_labels(payloads), size_class)
        with atomic_path(model_out) as tmp:
            vec.save(tmp)
        atomic_write(selection_out, json.dumps(selection.to_json(), sort_keys=True))
    X = selection.apply(X)
    with atomic_path(matrix_out) as tmp:
        write_csr(X, tmp)
    return X.shape


def load_selection(path) -> FeatureSelection:
    return FeatureSelection.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def train_artifact(matrix, payloads_path, cfg: TrainConfig, out_dir, vectorizer, selection,
                   size_class: str = "s", split_ratio: float = 0.1) -> Path:
    """Train one model and write a self-contained artifact directory.

    The MLP holds back a validation split (seeded with ``cfg.seed + 1``) for
    early stopping; tree models use the full training matrix.
    """
    require(matrix, payloads_path, vectorizer, selection)
    X = read_csr(matrix)
    payloads = read_payloads(payloads_path)
    if X.shape[0] != len(payloads):
        raise ValueError(f"{matrix} has {X.shape[0]} rows but {payloads_path} has {len(payloads)} records")
    sel = load_selection(selection)
    if sel.size_class != size_class:
        raise ConfigError(f"selection was built for size {sel.size_class!r}, not {size_class!r}")
    Y = label_matrix(p.labels for p in payloads)
    if cfg.family == "mlp":
        fit_idx, val_idx = train_validation_split(payloads, assign_best_labels(payloads),
                                                  SplitConfig(split_ratio, cfg.seed))
        model = models.fit(X[fit_idx], Y[fit_idx], cfg, val=(X[val_idx], Y[val_idx]))
    else:
        model = models.fit(X, Y, cfg)
    return write_artifact(out_dir, model, cfg, vectorizer, selection, size_class)


@dataclass
class ModelArtifact:
    directory: Path
    model: object
    config: TrainConfig
    vectorizer: VectorizerModel
    selection: FeatureSelection
    manifest: dict

    @property
    def model_id(self) -> str:
        return self.manifest.get("model_id", self.config.family)

    def predict_proba_texts(self, texts: Sequence[str]) -> np.ndarray:
        X = self.selection.apply(transform(self.vectorizer, texts))
        return models.predict_proba(self.model, X)


ARTIFACT_FILES = ("model.bin", "vectorizer.bin", "selection.json")


def write_artifact(out_dir, model, cfg: TrainConfig, vectorizer, selection, size_class="s") -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write(out_dir / "model.bin", models.dumps_model(model, cfg))
    for src, name in ((vectorizer, "vectorizer.bin"), (selection, "selection.json")):
        with atomic_path(out_dir / name) as tmp:
            shutil.copyfile(src, tmp)
    manifest = {
        "model_id": f"{cfg.family}-{size_class}",
        "family": cfg.family,
        "size_class": size_class,
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "files": {name: sha256_file(out_dir / name) for name in ARTIFACT_FILES},
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    atomic_write(out_dir / "manifest.json", _json(manifest))
    return out_dir


def load_artifact(directory) -> ModelArtifact:
    """Load an artifact directory after checking every file against its manifest hash."""
    directory = Path(directory)
    require(directory / "manifest.json", *(directory / n for n in ARTIFACT_FILES))
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    for name, digest in manifest["files"].items():
        if sha256_file(directory / name) != digest:
            raise ArtifactCorrupted(f"{directory / name}: hash does not match manifest")
    model, cfg = models.load_model(directory / "model.bin")
    cfg = cfg or TrainConfig.from_json(manifest["config"])
    return ModelArtifact(directory, model, cfg, VectorizerModel.load(directory / "vectorizer.bin"),
                         load_selection(directory / "selection.json"), manifest)


def evaluate_artifacts(artifact_dirs, matrix, truth_path, out_dir, stats_path=None,
                       average: str = "f") -> ReportBundle:
    """Score every artifact on ``matrix`` against ``truth_path`` and write the report files."""
    require(matrix, truth_path)
    X = read_csr(matrix)
    truth_payloads = read_payloads(truth_path)
    Y = label_matrix(p.labels for p in truth_payloads)
    runs = []
    for d in artifact_dirs:
        art = load_artifact(d)
        runs.append((art.config.family, art.manifest.get("size_class", "-"),
                     models.predict(art.model, X, art.config.threshold)))
    stats = dataset_stats(read_payloads(stats_path) if stats_path else truth_payloads)
    seed = None
    if artifact_dirs:
        seed = load_artifact(artifact_dirs[0]).config.seed
    bundle = build_report(runs, Y, stats if stats.defined else None, seed, average)
    out = Path(out_dir)
    atomic_write(out / "aggregate.csv", bundle.table_aggregate_csv())
    atomic_write(out / "per_label.csv", bundle.table_per_label_csv())
    atomic_write(out / "correlations.csv", bundle.correlations_csv())
    atomic_write(out / "report.md", bundle.markdown())
    return bundle


def predict_texts(artifact_dir, texts: Sequence[str]) -> list[dict]:
    art = load_artifact(artifact_dir)
    probs = art.predict_proba_texts(texts)
    return [{"probabilities": [round(float(p), 6) for p in row],
             "labels": [int(i) for i in np.flatnonzero(row >= art.config.threshold)]} for row in probs]


# --- workspace runner ----------------------------------------------------

@contextlib.contextmanager
def workspace_lock(workspace: str | os.PathLike):
    """One stage at a time per workspace."""
    Path(workspace).mkdir(parents=True, exist_ok=True)
    lock = Path(workspace) / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise WorkspaceLocked(f"{lock} exists; another stage is running or a run crashed") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _update_manifest(cfg: PipelineConfig, stage: str, outputs: Sequence[Path], extra: dict | None = None) -> None:
    path = cfg.path("manifest.json")
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {"artifacts": {}}
    manifest["seed"] = cfg.seed
    manifest["config"] = cfg.to_json()
    for out in outputs:
        files = sorted(p for p in out.rglob("*") if p.is_file()) if out.is_dir() else [out]
        for f in files:
            rel = os.path.relpath(f, cfg.workspace)
            manifest["artifacts"][rel] = {"sha256": sha256_file(f), "stage": stage, "seed": cfg.seed}
    if extra:
        manifest.setdefault("stages", {})[stage] = extra
    atomic_write(path, _json(manifest))


def run_stage(stage: str, cfg: PipelineConfig, client=None) -> dict:
    """Run one stage inside the workspace; returns a summary dict."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}")
    ws = cfg.path
    with workspace_lock(cfg.workspace):
        if stage == "harvest":
            if not cfg.endpoint:
                raise ConfigError("harvest needs an endpoint")
            st = harvest_to(cfg.endpoint, cfg.raw_path, cfg.from_date, cfg.until_date,
                            cfg.metadata_prefix, ws("harvest.cursor"), client)
            summary, outputs = dataclasses.asdict(st), [cfg.raw_path]
        elif stage == "clean":
            st = clean_file(cfg.raw_path, ws("cleaned.jsonl"), cfg.mapping, cfg.dedup_key, cfg.english_threshold)
            summary, outputs = dataclasses.asdict(st), [ws("cleaned.jsonl")]
        elif stage == "stats":
            atomic_write(ws("reports", "stats.csv"), stats_csv(ws("cleaned.jsonl")))
            summary, outputs = {}, [ws("reports", "stats.csv")]
        elif stage == "split":
            n_train, n_holdout = split_file(ws("cleaned.jsonl"), ws("splits", "train.jsonl"),
                                            ws("splits", "holdout.jsonl"), cfg.split_ratio,
                                            cfg.stage_seed("split"))
            summary, outputs = {"train": n_train, "holdout": n_holdout}, [ws("splits")]
        elif stage == "vectorize":
            size = cfg.size_class
            vec, sel = ws("vectors", "vectorizer.bin"), ws("vectors", f"selection-{size}.json")
            shape = vectorize_file(ws("splits", "train.jsonl"), ws("vectors", f"train-{size}.csr"), vec, sel, size)
            vectorize_file(ws("splits", "holdout.jsonl"), ws("vectors", f"holdout-{size}.csr"),
                           size_class=size, model_in=vec, selection_in=sel)
            summary, outputs = {"train_shape": list(shape)}, [ws("vectors")]
        elif stage == "train":
            size = cfg.size_class
            outputs = []
            for family in cfg.models:
                out = train_artifact(ws("vectors", f"train-{size}.csr"), ws("splits", "train.jsonl"),
                                     cfg.train_config(family), ws("models", f"{family}-{size}"),
                                     ws("vectors", "vectorizer.bin"), ws("vectors", f"selection-{size}.json"),
                                     size, cfg.split_ratio)
                outputs.append(out)
            summary = {"models": [os.path.relpath(o, cfg.workspace) for o in outputs]}
        else:
            size = cfg.size_class
            dirs = [ws("models", f"{family}-{size}") for family in cfg.models]
            bundle = evaluate_artifacts(dirs, ws("vectors", f"holdout-{size}.csr"), ws("splits", "holdout.jsonl"),
                                        ws("reports"), ws("cleaned.jsonl"))
            summary = {rep.model_id: {f"f{b:g}": rep.macro[b] for b in rep.macro} for rep in bundle.reports}
            outputs = [ws("reports", n) for n in ("aggregate.csv", "per_label.csv", "correlations.csv", "report.md")]
        _update_manifest(cfg, stage, outputs, summary)
    log.info("stage %s done: %s", stage, summary)
    return summary


def run_pipeline(cfg: PipelineConfig, stages: Sequence[str] | None = None, client=None) -> dict:
    if stages is None:
        stages = [s for s in STAGES if s != "harvest" or cfg.endpoint]
    return {stage: run_stage(stage, cfg, client) for stage in stages}
