"""Cosine ranking and group-aware Recall@K in both retrieval directions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import DataError, MissingGroupLabelError
from .groups import Instance, corpus_fingerprint, group_id_of
from .lexicon import Lexicon
from .model import (
    EncoderParams,
    encode_images,
    encode_texts,
    model_fingerprint,
    text_feature_matrix,
)
from .parser import extract_concepts

IMAGE_TO_REPORT = "image_to_report"
REPORT_TO_IMAGE = "report_to_image"
DEFAULT_KS = (1, 5, 10)


@dataclass(frozen=True)
class Ranking:
    query_id: str
    candidate_ids: tuple[str, ...]


def _scores(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    # Row-wise reductions instead of a BLAS matmul: a candidate's score must not
    # depend on its position, or exact ties could break differently.
    return (queries[:, None, :] * candidates[None, :, :]).sum(axis=-1)


def _order(scores: np.ndarray, ids: Sequence[str]) -> list[str]:
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [ids[i] for i in order]


def rank(query: np.ndarray, candidates: Sequence[tuple[str, np.ndarray]], query_id: str = "") -> Ranking:
    """Candidates by descending dot product, ties by ascending id."""
    if not candidates:
        raise ValueError("cannot rank against an empty candidate list")
    ids = [cid for cid, _ in candidates]
    mat = np.stack([np.asarray(v, dtype=np.float64) for _, v in candidates])
    scores = _scores(np.asarray(query, dtype=np.float64)[None, :], mat)[0]
    return Ranking(query_id, tuple(_order(scores, ids)))


def rank_all(
    query_ids: Sequence[str],
    queries: np.ndarray,
    candidate_ids: Sequence[str],
    candidates: np.ndarray,
) -> list[Ranking]:
    if len(candidate_ids) == 0:
        raise ValueError("cannot rank against an empty candidate list")
    scores = _scores(queries, candidates)
    ids = list(candidate_ids)
    return [Ranking(q, tuple(_order(row, ids))) for q, row in zip(query_ids, scores)]


def hits_at_k(
    rankings: Sequence[Ranking], group_of: Mapping[str, str], K: int, exclude_self: bool = True
) -> np.ndarray:
    """Per query: does the top-K contain another item from the query's group?"""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    hits = np.zeros(len(rankings), dtype=bool)
    for qi, r in enumerate(rankings):
        if r.query_id not in group_of:
            raise MissingGroupLabelError(f"no group label for query {r.query_id!r}")
        target = group_of[r.query_id]
        top = [c for c in r.candidate_ids if not (exclude_self and c == r.query_id)][:K]
        for cid in top:
            if cid not in group_of:
                raise MissingGroupLabelError(f"no group label for candidate {cid!r}")
            if group_of[cid] == target:
                hits[qi] = True
                break
    return hits


def recall_at_k(
    rankings: Sequence[Ranking], group_of: Mapping[str, str], K: int, exclude_self: bool = True
) -> float:
    if not rankings:
        return 0.0
    return float(hits_at_k(rankings, group_of, K, exclude_self).mean())


@dataclass
class MetricsReport:
    direction: str
    recall_at: dict[int, float]
    n_queries: int
    model_hash: str = ""
    corpus_hash: str = ""
    query_ids: list[str] = field(default_factory=list, repr=False)
    hits: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "recall": {str(k): v for k, v in sorted(self.recall_at.items())},
            "n_queries": self.n_queries,
            "model_hash": self.model_hash,
            "corpus_hash": self.corpus_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def restrict(self, keep: Iterable[str]) -> "MetricsReport":
        """Metrics over the subset of queries whose ids are in ``keep``."""
        keep = set(keep)
        mask = np.array([q in keep for q in self.query_ids], dtype=bool)
        hits = {k: h[mask] for k, h in self.hits.items()}
        n = int(mask.sum())
        recall = {k: float(h.mean()) if n else 0.0 for k, h in hits.items()}
        return MetricsReport(
            self.direction,
            recall,
            n,
            self.model_hash,
            self.corpus_hash,
            [q for q, m in zip(self.query_ids, mask) if m],
            hits,
        )


def _report(direction, rankings, group_of, Ks, model_hash, corpus_hash) -> MetricsReport:
    hits = {k: hits_at_k(rankings, group_of, k) for k in sorted(Ks)}
    return MetricsReport(
        direction=direction,
        recall_at={k: float(h.mean()) if len(h) else 0.0 for k, h in hits.items()},
        n_queries=len(rankings),
        model_hash=model_hash,
        corpus_hash=corpus_hash,
        query_ids=[r.query_id for r in rankings],
        hits=hits,
    )


def corpus_groups(corpus: Sequence[Instance], lexicon: Lexicon) -> dict[str, str]:
    return {
        inst.instance_id: group_id_of(
            inst.concept_set if inst.concept_set is not None
            else extract_concepts(inst.report_text, lexicon)
        )
        for inst in corpus
    }


def evaluate_bidirectional(
    params: EncoderParams,
    corpus: Sequence[Instance],
    lexicon: Lexicon,
    Ks: Sequence[int] = DEFAULT_KS,
    group_of: Optional[Mapping[str, str]] = None,
) -> tuple[MetricsReport, MetricsReport]:
    """Image->report and report->image metrics over ``corpus``.

    Each instance is a query once per direction; its own paired item is
    excluded from the candidates.
    """
    if not corpus:
        raise DataError("cannot evaluate on an empty corpus")
    if group_of is None:
        group_of = corpus_groups(corpus, lexicon)
    ids = [inst.instance_id for inst in corpus]
    txt_feats = text_feature_matrix(corpus, lexicon, params.n_buckets)
    img = encode_images(params, np.stack([inst.image_features for inst in corpus]))
    txt = encode_texts(params, np.stack([txt_feats[i] for i in ids]))
    mh, ch = model_fingerprint(params), corpus_fingerprint(corpus)
    i2r = _report(IMAGE_TO_REPORT, rank_all(ids, img, ids, txt), group_of, Ks, mh, ch)
    r2i = _report(REPORT_TO_IMAGE, rank_all(ids, txt, ids, img), group_of, Ks, mh, ch)
    return i2r, r2i


def nn_baseline(
    corpus: Sequence[Instance],
    group_of: Mapping[str, str],
    Ks: Sequence[int] = DEFAULT_KS,
) -> MetricsReport:
    """Image->report retrieval by raw image-feature cosine, no learned encoder.

    Each query image retrieves its nearest other images; a hit is scored when
    a retrieved image's paired report is in the query's group.
    """
    if not corpus:
        raise DataError("cannot evaluate on an empty corpus")
    ids = [inst.instance_id for inst in corpus]
    feats = np.stack([inst.image_features for inst in corpus])
    norms = np.linalg.norm(feats, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise DataError("nn baseline: zero image feature vector")
    unit = feats / norms
    rankings = rank_all(ids, unit, ids, unit)
    return _report(IMAGE_TO_REPORT, rankings, group_of, Ks, "nn_baseline", corpus_fingerprint(corpus))
