"""Run configuration and the end-to-end experiment drivers used by the CLI."""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .groups import (
    GroupIndex,
    Instance,
    PartitionPolicy,
    build_group_index,
    build_support_set,
    expected_support_size,
    index_to_json,
    load_index,
    read_corpus,
    restrict_index,
)
from .lexicon import Lexicon, load_lexicon
from .model import TrainConfig, loss_trace_csv, model_to_json, train
from .parser import extract_concepts
from .retrieval import corpus_groups, evaluate_bidirectional, nn_baseline
from .sampler import SamplerConfig
from .synth import SynthConfig

log = logging.getLogger(__name__)


# (section, key, type, default). Attribute name is the key with '-' -> '_';
# CLI flags are '--' + key.
CONFIG_KEYS: list[tuple[str, str, type, Any]] = [
    ("paths", "corpus", str, ""),
    ("paths", "lexicon", str, ""),
    ("paths", "index", str, ""),
    ("paths", "model", str, ""),
    ("paths", "output-dir", str, ""),
    ("run", "seed", int, 0),
    ("run", "seeds", str, "0,1,2,3,4"),
    ("run", "train-split", str, "train"),
    ("run", "eval-split", str, "test"),
    ("run", "head-groups", int, 10),
    ("partition", "partition-mode", str, "top_n"),
    ("partition", "partition-value", int, 20),
    ("partition", "allow-stale-index", bool, False),
    ("sampler", "batch-size", int, 8),
    ("sampler", "ratio", float, 0.375),
    ("sampler", "shuffle", bool, False),
    ("sampler", "num-batches", int, 1000),
    ("train", "sampling", str, "selective"),
    ("train", "epochs", int, 5),
    ("train", "learning-rate", float, 0.25),
    ("train", "embed-dim", int, 16),
    ("train", "temperature", float, 0.07),
    ("train", "momentum", float, 0.0),
    ("train", "n-buckets", int, 32),
    ("fewshot", "k", int, 10),
    ("fewshot", "recalibrate", bool, True),
    ("fewshot", "recalibrate-threshold", int, 5),
    ("synth", "n-instances", int, 2000),
    ("synth", "n-groups", int, 50),
    ("synth", "zipf-exponent", float, 1.2),
    ("synth", "dim", int, 32),
    ("synth", "signal", float, 0.8),
    ("synth", "noise", float, 0.3),
    ("synth", "negated-sentence-rate", float, 0.3),
    ("synth", "val-fraction", float, 0.1),
    ("synth", "test-fraction", float, 0.2),
    ("synth", "synth-seed", int, 0),
]

PATH_KEYS = {key for section, key, _, _ in CONFIG_KEYS if section == "paths"}


def attr(key: str) -> str:
    return key.replace("-", "_")


def parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def coerce(key: str, kind: type, value: Any) -> Any:
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    try:
        return parse_bool(value) if kind is bool else kind(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot read {value!r} as {kind.__name__}") from exc


class RunConfig:
    """Flat key/value run settings grouped into sections."""

    def __init__(self, **values: Any):
        known = {attr(k): (k, t, d) for _, k, t, d in CONFIG_KEYS}
        for name, (key, kind, default) in known.items():
            setattr(self, name, default)
        for name, value in values.items():
            if name not in known:
                raise ConfigError(f"unknown config key {name!r}")
            key, kind, _ = known[name]
            setattr(self, name, coerce(key, kind, value))

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"RunConfig({self.to_dict()!r})"

    def to_dict(self, include_paths: bool = True) -> dict:
        return {
            key: getattr(self, attr(key))
            for _, key, _, _ in CONFIG_KEYS
            if include_paths or key not in PATH_KEYS
        }

    def replace(self, **values: Any) -> "RunConfig":
        merged = {attr(k): v for k, v in self.to_dict().items()}
        merged.update(values)
        return RunConfig(**merged)

    # file format ------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        section = None
        for sec, key, kind, _ in CONFIG_KEYS:
            if sec != section:
                lines.append(("\n" if lines else "") + f"[{sec}]")
                section = sec
            value = getattr(self, attr(key))
            if kind is bool:
                value = str(value).lower()
            elif kind is float:
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        sections = {k: s for s, k, _, _ in CONFIG_KEYS}
        values = {}
        for section in parser.sections():
            for key, value in parser.items(section):
                if key not in sections:
                    raise ConfigError(f"[{section}] unknown key {key!r}")
                if sections[key] != section:
                    raise ConfigError(f"key {key!r} belongs in [{sections[key]}], not [{section}]")
                values[attr(key)] = value
        return cls(**values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_text(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    # derived objects --------------------------------------------------

    def policy(self) -> PartitionPolicy:
        try:
            return PartitionPolicy(self.partition_mode, self.partition_value)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sampler_config(self, seed: Optional[int] = None) -> SamplerConfig:
        return SamplerConfig(
            batch_size=self.batch_size,
            ratio=self.ratio,
            shuffle_after_sampling=self.shuffle,
            seed=self.seed if seed is None else seed,
        )

    def train_config(self, seed: Optional[int] = None, sampling: Optional[str] = None) -> TrainConfig:
        seed = self.seed if seed is None else seed
        try:
            return TrainConfig(
                epochs=self.epochs,
                learning_rate=self.learning_rate,
                embed_dim=self.embed_dim,
                temperature=self.temperature,
                momentum=self.momentum,
                n_buckets=self.n_buckets,
                seed=seed,
                sampling=sampling or self.sampling,
                sampler=self.sampler_config(seed),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_instances=self.n_instances,
            n_groups=self.n_groups,
            zipf_exponent=self.zipf_exponent,
            dim=self.dim,
            signal=self.signal,
            noise=self.noise,
            negated_sentence_rate=self.negated_sentence_rate,
            val_fraction=self.val_fraction,
            test_fraction=self.test_fraction,
            seed=self.synth_seed,
        )

    def seed_list(self) -> list[int]:
        try:
            return [int(s) for s in self.seeds.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"seeds must be comma-separated integers: {self.seeds!r}") from exc


# --------------------------------------------------------------------------
# helpers


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def require_path(cfg: RunConfig, key: str) -> Path:
    value = getattr(cfg, attr(key))
    if not value:
        raise ConfigError(f"--{key} is required")
    path = Path(value)
    if not path.exists():
        raise ConfigError(f"--{key} {path} does not exist")
    return path


def load_inputs(cfg: RunConfig) -> tuple[list[Instance], Lexicon]:
    corpus, _ = read_corpus(require_path(cfg, "corpus"))
    lexicon = load_lexicon(require_path(cfg, "lexicon") if cfg.lexicon else None)
    return corpus, lexicon


def split_of(corpus: Sequence[Instance], split: str) -> list[Instance]:
    return [inst for inst in corpus if inst.split == split]


def train_index(cfg: RunConfig, corpus: Sequence[Instance], lexicon: Lexicon) -> GroupIndex:
    """Load --index when given, else build over the training split."""
    if cfg.index and Path(cfg.index).exists():
        return load_index(cfg.index, lexicon, allow_stale=cfg.allow_stale_index)
    return build_group_index(split_of(corpus, cfg.train_split), lexicon, cfg.policy())


class OutputDir:
    """Stage files in a temp dir and move them into place only on success."""

    def __init__(self, target):
        self.target = Path(target)
        self.files: dict[str, str] = {}

    def __enter__(self):
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.target.parent))
        return self

    def write(self, name: str, text: str) -> str:
        (self.stage / name).write_text(text, encoding="utf-8")
        digest = sha256_text(text)
        self.files[name] = digest
        return digest

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.target.mkdir(parents=True, exist_ok=True)
                for name in self.files:
                    os.replace(self.stage / name, self.target / name)
        finally:
            shutil.rmtree(self.stage, ignore_errors=True)
        return False


def input_hashes(cfg: RunConfig, lexicon: Lexicon) -> dict:
    return {
        "corpus_sha256": sha256_file(cfg.corpus),
        "lexicon_sha256": lexicon.version_hash,
    }


def finish_manifest(manifest: dict) -> dict:
    manifest = dict(manifest)
    manifest.pop("manifest_hash", None)
    manifest["manifest_hash"] = sha256_text(dumps(manifest))
    return manifest


# --------------------------------------------------------------------------
# drivers


def run_extract(cfg: RunConfig) -> list[dict]:
    corpus, lexicon = load_inputs(cfg)
    rows = []
    for inst in corpus:
        concepts = extract_concepts(inst.report_text, lexicon)
        rows.append({"id": inst.instance_id, "concepts": concepts.to_list()})
    return rows


def partition_summary(index: GroupIndex) -> dict:
    return {
        "policy": str(index.policy),
        "n_groups": index.M,
        "n_frequent": len(index.frequent),
        "n_rare": len(index.rare),
        "n_instances": index.n_instances,
    }


def _metrics_payload(i2r, r2i, nn) -> dict:
    return {"metrics": [i2r.to_dict(), r2i.to_dict()], "nn_baseline": nn.to_dict()}


def run_experiment(cfg: RunConfig, mode: str = "full") -> dict:
    """Train + evaluate, writing model, loss trace, metrics and manifest.

    ``full`` trains on the whole training split under the configured
    partition. ``fewshot`` trains on a K-per-group support set, re-partitioned
    with min_count(recalibrate-threshold) unless ``recalibrate`` is off.
    Returns the manifest.
    """
    if mode not in ("full", "fewshot"):
        raise ConfigError(f"unknown mode {mode!r}")
    if not cfg.output_dir:
        raise ConfigError("--output-dir is required")
    corpus, lexicon = load_inputs(cfg)
    index = train_index(cfg, corpus, lexicon)
    manifest: dict = {"mode": mode}
    if mode == "fewshot":
        support = build_support_set(index, cfg.k, cfg.seed)
        policy = (
            PartitionPolicy.min_count(cfg.recalibrate_threshold)
            if cfg.recalibrate
            else cfg.policy()
        )
        manifest["support_set"] = {
            "k": cfg.k,
            "size": len(support),
            "expected_size": expected_support_size(index.frequencies, cfg.k),
            "recalibrated": cfg.recalibrate,
            "full_partition": partition_summary(index),
        }
        index = restrict_index(index, support, policy)
    manifest["partition"] = partition_summary(index)

    tcfg = cfg.train_config()
    params, trace = train(corpus, index, tcfg, lexicon)
    eval_corpus = split_of(corpus, cfg.eval_split)
    i2r, r2i = evaluate_bidirectional(params, eval_corpus, lexicon)
    nn = nn_baseline(eval_corpus, corpus_groups(eval_corpus, lexicon))

    with OutputDir(cfg.output_dir) as out:
        manifest["outputs"] = {
            "index.json": out.write("index.json", index_to_json(index)),
            "model.json": out.write("model.json", model_to_json(params)),
            "loss_trace.csv": out.write("loss_trace.csv", loss_trace_csv(trace)),
            "metrics.json": out.write("metrics.json", dumps(_metrics_payload(i2r, r2i, nn))),
        }
        manifest["config"] = cfg.to_dict(include_paths=False)
        manifest["train_config"] = tcfg.to_dict()
        manifest["inputs"] = input_hashes(cfg, lexicon)
        manifest["recall"] = {
            i2r.direction: i2r.to_dict()["recall"],
            r2i.direction: r2i.to_dict()["recall"],
        }
        manifest = finish_manifest(manifest)
        out.write("manifest.json", dumps(manifest))
    return manifest


def run_baseline_compare(cfg: RunConfig) -> dict:
    """Selective vs uniform-random batches, identical otherwise, over ``seeds``.

    Reports all-query, head-query and tail-query recall; head groups are the
    ``head-groups`` most frequent training groups.
    """
    corpus, lexicon = load_inputs(cfg)
    index = train_index(cfg, corpus, lexicon)
    ranked = index.ranked_groups()
    head = set(ranked[: cfg.head_groups])
    eval_corpus = split_of(corpus, cfg.eval_split)
    group_of = corpus_groups(eval_corpus, lexicon)
    head_q = [i for i, g in group_of.items() if g in head]
    tail_q = [i for i, g in group_of.items() if g not in head]

    per_seed = []
    for seed in cfg.seed_list():
        row: dict = {"seed": seed}
        for sampling in ("selective", "random"):
            params, trace = train(corpus, index, cfg.train_config(seed, sampling), lexicon)
            reports = evaluate_bidirectional(params, eval_corpus, lexicon, group_of=group_of)
            row[sampling] = {
                rep.direction: {
                    "all": rep.recall_at,
                    "head": rep.restrict(head_q).recall_at,
                    "tail": rep.restrict(tail_q).recall_at,
                }
                for rep in reports
            }
            row[sampling]["final_epoch_loss"] = float(
                np.mean([t.loss for t in trace if t.epoch == cfg.epochs - 1])
            )
        per_seed.append(row)

    def mean_of(sampling, direction, subset, k):
        return float(np.mean([r[sampling][direction][subset][k] for r in per_seed]))

    summary = {}
    for sampling in ("selective", "random"):
        summary[sampling] = {
            direction: {
                subset: {str(k): mean_of(sampling, direction, subset, k) for k in (1, 5, 10)}
                for subset in ("all", "head", "tail")
            }
            for direction in ("image_to_report", "report_to_image")
        }
    result = {
        "config": cfg.to_dict(include_paths=False),
        "inputs": input_hashes(cfg, lexicon),
        "n_eval_queries": {"all": len(group_of), "head": len(head_q), "tail": len(tail_q)},
        "head_groups": sorted(head),
        "per_seed": [_stringify_ks(r) for r in per_seed],
        "mean": summary,
        "tail_report_to_image_r10_gain": (
            summary["selective"]["report_to_image"]["tail"]["10"]
            - summary["random"]["report_to_image"]["tail"]["10"]
        ),
    }
    return result


def _stringify_ks(obj):
    if isinstance(obj, dict):
        return {str(k): _stringify_ks(v) for k, v in obj.items()}
    return obj
