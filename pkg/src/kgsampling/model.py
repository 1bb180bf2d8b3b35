"""Two-tower linear encoder trained with a symmetric InfoNCE loss.

A desk-scale stand-in for a vision-language model: image features and report
features are each projected linearly into a shared space and L2-normalized.
Gradients are analytic so they can be checked against finite differences.
"""

from __future__ import annotations

import hashlib
import json
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DataError,
    DivergenceError,
    NormalizationContractError,
    ZeroNormError,
)
from .groups import GroupIndex, Instance
from .lexicon import Lexicon
from .parser import extract_concepts, positive_clauses
from .sampler import SamplerConfig, epoch_batches, make_rng, random_batches

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
DEFAULT_BUCKETS = 32
NORM_TOL = 1e-4


def featurize_text(report: str, lexicon: Lexicon, n_buckets: int = DEFAULT_BUCKETS) -> np.ndarray:
    """Concept indicators followed by hashed token counts over positive clauses."""
    concept_ids = lexicon.concept_ids
    vec = np.zeros(len(concept_ids) + n_buckets)
    for cid in extract_concepts(report, lexicon):
        vec[concept_ids.index(cid)] = 1.0
    if n_buckets:
        for clause in positive_clauses(report, lexicon):
            for token in clause.split():
                vec[len(concept_ids) + zlib.crc32(token.encode("utf-8")) % n_buckets] += 1.0
    return vec


def text_dim(lexicon: Lexicon, n_buckets: int = DEFAULT_BUCKETS) -> int:
    return len(lexicon.entries) + n_buckets


@dataclass
class EncoderParams:
    w_img: np.ndarray  # D x E
    w_txt: np.ndarray  # V x E
    temperature: float = 0.07
    n_buckets: int = DEFAULT_BUCKETS
    lexicon_hash: str = ""

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.w_img.shape[1] != self.w_txt.shape[1]:
            raise ValueError("image and text projections must share the embedding dim")

    @property
    def embed_dim(self) -> int:
        return self.w_img.shape[1]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            self.w_img.copy(), self.w_txt.copy(), self.temperature, self.n_buckets, self.lexicon_hash
        )

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "dims": {
                "image": int(self.w_img.shape[0]),
                "text": int(self.w_txt.shape[0]),
                "embed": int(self.w_img.shape[1]),
            },
            "temperature": self.temperature,
            "n_buckets": self.n_buckets,
            "lexicon_hash": self.lexicon_hash,
            "w_img": [float(x) for x in self.w_img.ravel()],
            "w_txt": [float(x) for x in self.w_txt.ravel()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderParams":
        if data.get("format_version") != MODEL_FORMAT_VERSION:
            raise DataError(f"unsupported model format {data.get('format_version')!r}")
        dims = data["dims"]
        return cls(
            w_img=np.asarray(data["w_img"], dtype=np.float64).reshape(dims["image"], dims["embed"]),
            w_txt=np.asarray(data["w_txt"], dtype=np.float64).reshape(dims["text"], dims["embed"]),
            temperature=data["temperature"],
            n_buckets=data["n_buckets"],
            lexicon_hash=data["lexicon_hash"],
        )


def init_params(
    image_dim: int,
    txt_dim: int,
    embed_dim: int,
    seed: int,
    temperature: float = 0.07,
    n_buckets: int = DEFAULT_BUCKETS,
    lexicon_hash: str = "",
) -> EncoderParams:
    """Uniform init in +-1/sqrt(fan_in)."""
    rng = make_rng(seed)
    w_img = rng.uniform(-1, 1, size=(image_dim, embed_dim)) / np.sqrt(image_dim)
    w_txt = rng.uniform(-1, 1, size=(txt_dim, embed_dim)) / np.sqrt(txt_dim)
    return EncoderParams(w_img, w_txt, temperature, n_buckets, lexicon_hash)


def model_to_json(params: EncoderParams) -> str:
    return json.dumps(params.to_dict(), sort_keys=True) + "\n"


def save_model(params: EncoderParams, path: Union[str, Path]) -> None:
    Path(path).write_text(model_to_json(params), encoding="utf-8")


def load_model(path: Union[str, Path]) -> EncoderParams:
    try:
        return EncoderParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc


def model_fingerprint(params: EncoderParams) -> str:
    return hashlib.sha256(model_to_json(params).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# forward


def _normalize_rows(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroNormError("cannot normalize a zero vector: direction undefined")
    return u / norms, norms


def encode_images(params: EncoderParams, features: np.ndarray) -> np.ndarray:
    return _normalize_rows(np.atleast_2d(features) @ params.w_img)[0]


def encode_texts(params: EncoderParams, txt_features: np.ndarray) -> np.ndarray:
    return _normalize_rows(np.atleast_2d(txt_features) @ params.w_txt)[0]


def encode_image(params: EncoderParams, features: np.ndarray) -> np.ndarray:
    return encode_images(params, features)[0]


def encode_text(params: EncoderParams, txt_features: np.ndarray) -> np.ndarray:
    return encode_texts(params, txt_features)[0]


def _log_softmax(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def contrastive_loss(
    img_embs: np.ndarray, txt_embs: np.ndarray, temperature: float
) -> tuple[float, np.ndarray]:
    """Symmetric InfoNCE: mean of image->text and text->image cross-entropies."""
    for name, emb in (("image", img_embs), ("text", txt_embs)):
        dev = np.abs(np.linalg.norm(emb, axis=1) - 1.0)
        if dev.size and dev.max() > NORM_TOL:
            raise NormalizationContractError(
                f"{name} embeddings must be unit-norm (max deviation {dev.max():.2e})"
            )
    if img_embs.shape != txt_embs.shape:
        raise ValueError(f"shape mismatch {img_embs.shape} vs {txt_embs.shape}")
    logits = img_embs @ txt_embs.T / temperature
    diag = np.arange(len(logits))
    row_ce = -_log_softmax(logits, axis=1)[diag, diag].mean()
    col_ce = -_log_softmax(logits, axis=0)[diag, diag].mean()
    return float(0.5 * row_ce + 0.5 * col_ce), logits


def loss_gradients(
    params: EncoderParams, img_features: np.ndarray, txt_features: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and its analytic gradients w.r.t. ``w_img`` and ``w_txt``."""
    tau = params.temperature
    zi, ni = _normalize_rows(img_features @ params.w_img)
    zt, nt = _normalize_rows(txt_features @ params.w_txt)
    loss, logits = contrastive_loss(zi, zt, tau)
    B = len(logits)
    eye = np.eye(B)
    p_row = np.exp(_log_softmax(logits, axis=1))
    p_col = np.exp(_log_softmax(logits, axis=0))
    g_logits = 0.5 / B * ((p_row - eye) + (p_col - eye))
    g_zi = g_logits @ zt / tau
    g_zt = g_logits.T @ zi / tau
    # back through u -> u / |u|
    g_ui = (g_zi - zi * np.sum(zi * g_zi, axis=1, keepdims=True)) / ni
    g_ut = (g_zt - zt * np.sum(zt * g_zt, axis=1, keepdims=True)) / nt
    return loss, img_features.T @ g_ui, txt_features.T @ g_ut


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 5
    learning_rate: float = 0.25
    embed_dim: int = 16
    temperature: float = 0.07
    momentum: float = 0.0
    n_buckets: int = DEFAULT_BUCKETS
    seed: int = 0
    sampling: str = "selective"  # or "random"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    loss_trace_path: Optional[str] = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning rate must be non-negative")
        if self.sampling not in ("selective", "random"):
            raise ValueError(f"unknown sampling {self.sampling!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "embed_dim": self.embed_dim,
            "temperature": self.temperature,
            "momentum": self.momentum,
            "n_buckets": self.n_buckets,
            "seed": self.seed,
            "sampling": self.sampling,
            "sampler": self.sampler.to_dict(),
        }


@dataclass(frozen=True)
class TraceRow:
    batch_index: int
    epoch: int
    loss: float


def text_feature_matrix(
    corpus: Sequence[Instance], lexicon: Lexicon, n_buckets: int
) -> dict[str, np.ndarray]:
    feats = {}
    for inst in corpus:
        vec = featurize_text(inst.report_text, lexicon, n_buckets)
        if not vec.any():
            raise DataError(
                f"instance {inst.instance_id!r}: report has no positive content to encode"
            )
        feats[inst.instance_id] = vec
    return feats


def train(
    corpus: Sequence[Instance],
    index: GroupIndex,
    cfg: TrainConfig,
    lexicon: Lexicon,
    init: Optional[EncoderParams] = None,
) -> tuple[EncoderParams, list[TraceRow]]:
    """SGD over selective (or random) batches drawn from ``index``."""
    by_id = {inst.instance_id: inst for inst in corpus}
    missing = [iid for iid in index.group_map if iid not in by_id]
    if missing:
        raise DataError(f"index references {len(missing)} ids absent from corpus, e.g. {missing[0]!r}")
    members = [by_id[iid] for iid in sorted(index.group_map)]
    txt = text_feature_matrix(members, lexicon, cfg.n_buckets)
    img = {inst.instance_id: inst.image_features for inst in members}
    if any(not v.any() for v in img.values()):
        raise DataError("an image feature vector is all zeros")

    if init is None:
        params = init_params(
            image_dim=len(members[0].image_features),
            txt_dim=text_dim(lexicon, cfg.n_buckets),
            embed_dim=cfg.embed_dim,
            seed=cfg.seed,
            temperature=cfg.temperature,
            n_buckets=cfg.n_buckets,
            lexicon_hash=lexicon.version_hash,
        )
    else:
        params = init.copy()
    vel_img = np.zeros_like(params.w_img)
    vel_txt = np.zeros_like(params.w_txt)

    rng = make_rng(cfg.sampler.seed)
    trace: list[TraceRow] = []
    step = 0
    for epoch in range(cfg.epochs):
        if cfg.sampling == "selective":
            batches = epoch_batches(index, cfg.sampler, index.n_instances, rng)
        else:
            batches = random_batches(index, cfg.sampler.batch_size, index.n_instances, rng)
        for batch in batches:
            ids = batch.instance_ids
            X_img = np.stack([img[i] for i in ids])
            X_txt = np.stack([txt[i] for i in ids])
            loss, g_img, g_txt = loss_gradients(params, X_img, X_txt)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {step}")
            vel_img = cfg.momentum * vel_img - cfg.learning_rate * g_img
            vel_txt = cfg.momentum * vel_txt - cfg.learning_rate * g_txt
            params.w_img = params.w_img + vel_img
            params.w_txt = params.w_txt + vel_txt
            if not (np.all(np.isfinite(params.w_img)) and np.all(np.isfinite(params.w_txt))):
                raise DivergenceError(f"non-finite parameters at epoch {epoch}, batch {step}")
            trace.append(TraceRow(step, epoch, loss))
            step += 1
        log.debug("epoch %d mean loss %.4f", epoch, epoch_means(trace)[-1])
    if cfg.loss_trace_path:
        write_loss_trace(trace, cfg.loss_trace_path)
    return params, trace


def epoch_means(trace: Sequence[TraceRow]) -> list[float]:
    sums: dict[int, list[float]] = {}
    for row in trace:
        sums.setdefault(row.epoch, []).append(row.loss)
    return [float(np.mean(sums[e])) for e in sorted(sums)]


def loss_trace_csv(trace: Sequence[TraceRow]) -> str:
    lines = ["batch_index,epoch,loss"]
    lines += [f"{row.batch_index},{row.epoch},{row.loss!r}" for row in trace]
    return "\n".join(lines) + "\n"


def write_loss_trace(trace: Sequence[TraceRow], path: Union[str, Path]) -> None:
    Path(path).write_text(loss_trace_csv(trace), encoding="utf-8")
