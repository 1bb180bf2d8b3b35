"""Seeded long-tail paired corpora: templated reports plus centroid-noise features.

Random draws happen in a fixed order so tests can replay them:
group counts first, then concept sets, centroids, instance order, and
finally per-instance text and noise.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, LexiconError
from .groups import Instance, group_id_of
from .lexicon import Lexicon
from .parser import ConceptSet, extract_concepts
from .sampler import make_rng

DENSITY_CATEGORY = "breast_composition"

_DENSITY_TEMPLATES = ("the breasts are {p}", "breast composition {p}", "the breast tissue is {p}")
_FINDING_TEMPLATES = (
    "there is {p} in the {side} breast",
    "{side} breast {p} is noted",
    "{p} seen in the {side} breast at {hour} o'clock",
)
_NEGATED_TEMPLATES = (
    "there is no {p} in the {side} breast",
    "no {p} is seen",
    "the {side} breast is free of {p}",
)
_UNCERTAIN_TAIL = ", which may obscure small masses"


@dataclass(frozen=True)
class SynthConfig:
    n_instances: int = 2000
    n_groups: int = 50
    zipf_exponent: float = 1.2
    dim: int = 32
    signal: float = 0.8
    noise: float = 0.3
    negated_sentence_rate: float = 0.3
    val_fraction: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n_groups < 2:
            raise ConfigError("n_groups must be >= 2")
        if self.n_instances < self.n_groups:
            raise ConfigError("n_instances must be >= n_groups")
        if not self.zipf_exponent > 0:
            raise ConfigError("zipf_exponent must be positive")
        if not 0.0 <= self.signal <= 1.0:
            raise ConfigError("signal must lie in [0, 1]")
        if self.noise < 0:
            raise ConfigError("noise must be non-negative")
        if not 0.0 <= self.negated_sentence_rate <= 1.0:
            raise ConfigError("negated_sentence_rate must lie in [0, 1]")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if not (0 <= self.val_fraction and 0 <= self.test_fraction
                and self.val_fraction + self.test_fraction < 1):
            raise ConfigError("val_fraction + test_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


def zipf_probabilities(n_groups: int, s: float) -> np.ndarray:
    weights = np.arange(1, n_groups + 1, dtype=np.float64) ** -s
    return weights / weights.sum()


def group_counts(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """One instance per group, the remainder multinomial over Zipf weights."""
    p = zipf_probabilities(cfg.n_groups, cfg.zipf_exponent)
    return 1 + rng.multinomial(cfg.n_instances - cfg.n_groups, p)


def candidate_concept_sets(lexicon: Lexicon) -> tuple[list[ConceptSet], list[ConceptSet]]:
    """(density-only sets, density plus one or two findings)."""
    density = sorted(e.concept_id for e in lexicon.entries if e.category == DENSITY_CATEGORY)
    findings = sorted(e.concept_id for e in lexicon.entries if e.category != DENSITY_CATEGORY)
    if not density:
        raise LexiconError("synthetic corpora need at least one breast_composition concept")
    singles = [ConceptSet([d]) for d in density]
    combos = [
        ConceptSet((d,) + extra)
        for k in (1, 2)
        for d in density
        for extra in itertools.combinations(findings, k)
    ]
    return singles, combos


def choose_concept_sets(cfg: SynthConfig, lexicon: Lexicon, rng: np.random.Generator) -> list[ConceptSet]:
    """Distinct concept sets in rank order; density-only groups take the head."""
    singles, combos = candidate_concept_sets(lexicon)
    if len(singles) + len(combos) < cfg.n_groups:
        raise LexiconError(
            f"lexicon supports {len(singles) + len(combos)} distinct groups, "
            f"{cfg.n_groups} requested"
        )
    head = [singles[i] for i in rng.permutation(len(singles))][: cfg.n_groups]
    n_rest = cfg.n_groups - len(head)
    tail = [combos[i] for i in rng.choice(len(combos), size=n_rest, replace=False)] if n_rest else []
    return head + tail


def _stratified_splits(labels: np.ndarray, cfg: SynthConfig) -> list[str]:
    splits = ["train"] * len(labels)
    for g in np.unique(labels):
        positions = np.flatnonzero(labels == g)
        c = len(positions)
        n_test = int(round(c * cfg.test_fraction))
        n_val = int(round(c * cfg.val_fraction))
        while n_test + n_val > c - 1 and (n_test or n_val):
            if n_val >= n_test and n_val:
                n_val -= 1
            else:
                n_test -= 1
        for pos in positions[:n_test]:
            splits[pos] = "test"
        for pos in positions[n_test : n_test + n_val]:
            splits[pos] = "val"
    return splits


def _render_report(
    concepts: ConceptSet, lexicon: Lexicon, cfg: SynthConfig, rng: np.random.Generator
) -> str:
    sentences = []
    for cid in concepts:
        entry = lexicon.entry(cid)
        pattern = entry.patterns[int(rng.integers(len(entry.patterns)))]
        if entry.category == DENSITY_CATEGORY:
            text = _DENSITY_TEMPLATES[int(rng.integers(len(_DENSITY_TEMPLATES)))].format(p=pattern)
            if rng.random() < 0.5:
                text += _UNCERTAIN_TAIL
        else:
            text = _FINDING_TEMPLATES[int(rng.integers(len(_FINDING_TEMPLATES)))].format(
                p=pattern, side=("left", "right")[int(rng.integers(2))], hour=int(rng.integers(1, 13))
            )
        sentences.append(text)
    sentences = [sentences[i] for i in rng.permutation(len(sentences))]
    if rng.random() < cfg.negated_sentence_rate:
        others = [e for e in lexicon.entries if e.concept_id not in concepts
                  and e.category != DENSITY_CATEGORY]
        if others:
            entry = others[int(rng.integers(len(others)))]
            pattern = entry.patterns[int(rng.integers(len(entry.patterns)))]
            template = _NEGATED_TEMPLATES[int(rng.integers(len(_NEGATED_TEMPLATES)))]
            sentences.append(template.format(p=pattern, side=("left", "right")[int(rng.integers(2))]))
    return ". ".join(sentences) + "."


def generate_corpus(cfg: SynthConfig, lexicon: Lexicon) -> list[Instance]:
    """Instances carry their generating ConceptSet in ``concept_set``."""
    rng = make_rng(cfg.seed)
    counts = group_counts(cfg, rng)
    concept_sets = choose_concept_sets(cfg, lexicon, rng)
    centroids = rng.standard_normal((cfg.n_groups, cfg.dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
    labels = np.repeat(np.arange(cfg.n_groups), counts)
    labels = labels[rng.permutation(len(labels))]
    splits = _stratified_splits(labels, cfg)

    corpus = []
    for idx, (g, split) in enumerate(zip(labels, splits)):
        concepts = concept_sets[g]
        report = _render_report(concepts, lexicon, cfg, rng)
        noise = rng.standard_normal(cfg.dim) * cfg.noise
        feats = cfg.signal * centroids[g] + (1.0 - cfg.signal) * noise
        corpus.append(
            Instance(f"syn{idx:05d}", report, feats, split=split, concept_set=concepts)
        )
    return corpus


@dataclass
class CorpusStats:
    histogram: list[tuple[str, int]]  # descending count, ties by group id
    n_instances: int

    def top_mass(self, n: int) -> float:
        if not self.n_instances:
            return 0.0
        return sum(c for _, c in self.histogram[:n]) / self.n_instances

    @property
    def counts(self) -> list[int]:
        return [c for _, c in self.histogram]

    def to_dict(self, tops: Sequence[int] = (1, 5, 10, 20)) -> dict:
        return {
            "n_instances": self.n_instances,
            "n_groups": len(self.histogram),
            "histogram": [[g, c] for g, c in self.histogram],
            "top_mass": {str(n): self.top_mass(n) for n in tops},
        }


def describe_corpus(corpus: Sequence[Instance], lexicon: Optional[Lexicon] = None) -> CorpusStats:
    """Group histogram; uses stored concept sets, else extracts with ``lexicon``."""
    labels = []
    for inst in corpus:
        concepts = inst.concept_set
        if concepts is None:
            if lexicon is None:
                raise ValueError("corpus is not annotated; pass a lexicon")
            concepts = extract_concepts(inst.report_text, lexicon)
        labels.append(group_id_of(concepts))
    counts = Counter(labels)
    histogram = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return CorpusStats(histogram, len(labels))
