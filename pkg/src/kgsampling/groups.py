"""Knowledge-grounded grouping: instances, corpus files, and the group index."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    DataError,
    DimensionMismatchError,
    DuplicateIdError,
    IndexVersionError,
    LexiconHashMismatchError,
)
from .lexicon import Lexicon
from .parser import ConceptSet, extract_concepts

NO_FINDING = "no_finding"
SPLITS = ("train", "val", "test")
CORPUS_SCHEMA = 1
INDEX_FORMAT_VERSION = 1


class PartitionError(DataError):
    pass


@dataclass
class Instance:
    instance_id: str
    report_text: str
    image_features: np.ndarray
    split: str = "train"
    concept_set: Optional[ConceptSet] = None

    def __post_init__(self):
        self.image_features = np.asarray(self.image_features, dtype=np.float64)
        if self.split not in SPLITS:
            raise DataError(f"instance {self.instance_id!r}: unknown split {self.split!r}")

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.instance_id == other.instance_id
            and self.report_text == other.report_text
            and self.split == other.split
            and np.array_equal(self.image_features, other.image_features)
        )


def group_id_of(concepts: Iterable[str]) -> str:
    concepts = sorted(set(concepts))
    return "+".join(concepts) if concepts else NO_FINDING


# --------------------------------------------------------------------------
# corpus files (JSON lines, header first)


def corpus_to_jsonl(corpus: Sequence[Instance], dim: Optional[int] = None) -> str:
    if dim is None:
        dim = len(corpus[0].image_features) if corpus else 0
    lines = [json.dumps({"dim": dim, "schema": CORPUS_SCHEMA}, sort_keys=True)]
    for inst in corpus:
        record = {
            "features": [float(x) for x in inst.image_features],
            "id": inst.instance_id,
            "report": inst.report_text,
            "split": inst.split,
        }
        lines.append(json.dumps(record, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_corpus(corpus: Sequence[Instance], path: Union[str, Path], dim: Optional[int] = None) -> None:
    Path(path).write_text(corpus_to_jsonl(corpus, dim), encoding="utf-8")


def corpus_fingerprint(corpus: Sequence[Instance]) -> str:
    return hashlib.sha256(corpus_to_jsonl(corpus).encode("utf-8")).hexdigest()


def read_corpus(path: Union[str, Path]) -> tuple[list[Instance], int]:
    """Read a corpus file, returning the instances and the declared dimension."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    if not lines:
        raise DataError(f"{path}: empty file, expected a header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: malformed header: {exc.msg}") from exc
    if header.get("schema") != CORPUS_SCHEMA or not isinstance(header.get("dim"), int):
        raise DataError(f"{path}:1: header must be {{'schema': 1, 'dim': D}}")
    dim = header["dim"]
    corpus = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            inst = Instance(
                instance_id=str(rec["id"]),
                report_text=rec["report"],
                image_features=np.asarray(rec["features"], dtype=np.float64),
                split=rec.get("split", "train"),
            )
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad record: {exc}") from exc
        corpus.append(inst)
    validate_corpus(corpus, dim)
    return corpus, dim


def validate_corpus(corpus: Sequence[Instance], dim: Optional[int] = None) -> int:
    if dim is None and corpus:
        dim = len(corpus[0].image_features)
    seen = set()
    for inst in corpus:
        if inst.instance_id in seen:
            raise DuplicateIdError(f"duplicate instance id {inst.instance_id!r}")
        seen.add(inst.instance_id)
        feats = inst.image_features
        if feats.ndim != 1 or len(feats) != dim:
            raise DimensionMismatchError(
                f"instance {inst.instance_id!r}: feature length {feats.size}, expected {dim}"
            )
        if not np.all(np.isfinite(feats)):
            raise DataError(f"instance {inst.instance_id!r}: non-finite feature value")
    return dim or 0


def annotate(corpus: Sequence[Instance], lexicon: Lexicon) -> None:
    """Fill ``concept_set`` on every instance in place."""
    for inst in corpus:
        inst.concept_set = extract_concepts(inst.report_text, lexicon)


# --------------------------------------------------------------------------
# partition policy and index


@dataclass(frozen=True)
class PartitionPolicy:
    mode: str  # "top_n" or "min_count"
    value: int

    def __post_init__(self):
        if self.mode not in ("top_n", "min_count"):
            raise ValueError(f"unknown partition mode {self.mode!r}")
        if not isinstance(self.value, int) or self.value < 1:
            raise ValueError(f"{self.mode} needs a positive integer, got {self.value!r}")

    @classmethod
    def top_n(cls, n: int) -> "PartitionPolicy":
        return cls("top_n", n)

    @classmethod
    def min_count(cls, threshold: int) -> "PartitionPolicy":
        return cls("min_count", threshold)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "value": self.value}

    def __str__(self):
        return f"{self.mode}({self.value})"


@dataclass(frozen=True)
class GroupIndex:
    groups: dict[str, list[str]]
    frequencies: dict[str, int]
    frequent: frozenset
    rare: frozenset
    lexicon_hash: str
    policy: PartitionPolicy
    _group_of: dict[str, str] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "_group_of",
            {iid: gid for gid, members in self.groups.items() for iid in members},
        )

    @property
    def M(self) -> int:
        return len(self.groups)

    @property
    def n_instances(self) -> int:
        return sum(self.frequencies.values())

    def group_of(self, instance_id: str) -> str:
        return self._group_of[instance_id]

    @property
    def group_map(self) -> dict[str, str]:
        return dict(self._group_of)

    def ranked_groups(self) -> list[str]:
        """Groups by descending count; ties by ascending GroupId."""
        return sorted(self.groups, key=lambda g: (-self.frequencies[g], g))

    def check(self) -> None:
        """Raise PartitionError if a structural invariant is broken."""
        if not self.frequent.isdisjoint(self.rare):
            raise PartitionError("frequent and rare groups overlap")
        if self.frequent | self.rare != set(self.groups):
            raise PartitionError("partition does not cover every group")
        if sum(len(m) for m in self.groups.values()) != len(self._group_of):
            raise PartitionError("an instance id appears in more than one group")
        if any(self.frequencies.get(g) != len(m) for g, m in self.groups.items()):
            raise PartitionError("frequencies disagree with group membership")
        if set(self.frequencies) != set(self.groups):
            raise PartitionError("frequency table and group table differ")

    def to_dict(self) -> dict:
        return {
            "format_version": INDEX_FORMAT_VERSION,
            "frequencies": dict(self.frequencies),
            "frequent": sorted(self.frequent),
            "groups": {g: list(m) for g, m in self.groups.items()},
            "lexicon_hash": self.lexicon_hash,
            "policy": self.policy.to_dict(),
            "rare": sorted(self.rare),
        }


def partition_frequent_rare(
    frequencies: Union[GroupIndex, dict[str, int]], policy: PartitionPolicy
) -> tuple[frozenset, frozenset]:
    if isinstance(frequencies, GroupIndex):
        frequencies = frequencies.frequencies
    if policy.mode == "top_n":
        if policy.value >= len(frequencies):
            raise PartitionError(
                f"top_n({policy.value}) needs more than {policy.value} groups, "
                f"index has {len(frequencies)}; the rare set would be empty"
            )
        ranked = sorted(frequencies, key=lambda g: (-frequencies[g], g))
        frequent = frozenset(ranked[: policy.value])
    else:
        frequent = frozenset(g for g, c in frequencies.items() if c >= policy.value)
    return frequent, frozenset(frequencies) - frequent


def _index_from_groups(
    members: dict[str, list[str]], lexicon_hash: str, policy: PartitionPolicy
) -> GroupIndex:
    groups = {g: sorted(ids) for g, ids in sorted(members.items())}
    freqs = {g: len(ids) for g, ids in groups.items()}
    frequent, rare = partition_frequent_rare(freqs, policy)
    index = GroupIndex(groups, freqs, frequent, rare, lexicon_hash, policy)
    index.check()
    return index


def build_group_index(
    corpus: Sequence[Instance],
    lexicon: Lexicon,
    policy: PartitionPolicy,
    dim: Optional[int] = None,
) -> GroupIndex:
    if not corpus:
        raise DataError("cannot index an empty corpus")
    validate_corpus(corpus, dim)
    annotate(corpus, lexicon)
    members: dict[str, list[str]] = {}
    for inst in corpus:
        members.setdefault(group_id_of(inst.concept_set), []).append(inst.instance_id)
    return _index_from_groups(members, lexicon.version_hash, policy)


def restrict_index(
    index: GroupIndex, instance_ids: Iterable[str], policy: Optional[PartitionPolicy] = None
) -> GroupIndex:
    """Sub-index over ``instance_ids`` re-partitioned under ``policy``."""
    members: dict[str, list[str]] = {}
    for iid in instance_ids:
        members.setdefault(index.group_of(iid), []).append(iid)
    return _index_from_groups(members, index.lexicon_hash, policy or index.policy)


def build_support_set(index: GroupIndex, K: int, seed: int) -> list[str]:
    """Up to K instances per group, sampled uniformly without replacement."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    rng = np.random.default_rng(seed)
    support = []
    for gid in sorted(index.groups):
        members = index.groups[gid]
        take = min(K, len(members))
        picked = rng.choice(len(members), size=take, replace=False)
        support.extend(members[i] for i in sorted(picked))
    return support


def expected_support_size(frequencies: dict[str, int], K: int) -> int:
    return sum(min(K, c) for c in frequencies.values())


# --------------------------------------------------------------------------
# persistence


def index_to_json(index: GroupIndex) -> str:
    return json.dumps(index.to_dict(), sort_keys=True, indent=1) + "\n"


def save_index(index: GroupIndex, path: Union[str, Path]) -> None:
    Path(path).write_text(index_to_json(index), encoding="utf-8")


def load_index(
    path: Union[str, Path], lexicon: Optional[Lexicon] = None, allow_stale: bool = False
) -> GroupIndex:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read index {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed index JSON: {exc.msg}") from exc
    version = data.get("format_version")
    if version != INDEX_FORMAT_VERSION:
        raise IndexVersionError(
            f"{path}: index format version {version!r}, expected {INDEX_FORMAT_VERSION}"
        )
    if lexicon is not None and not allow_stale and data["lexicon_hash"] != lexicon.version_hash:
        raise LexiconHashMismatchError(
            f"{path}: built with lexicon {data['lexicon_hash'][:12]}, "
            f"current lexicon is {lexicon.version_hash[:12]}"
        )
    index = GroupIndex(
        groups={g: list(m) for g, m in data["groups"].items()},
        frequencies={g: int(c) for g, c in data["frequencies"].items()},
        frequent=frozenset(data["frequent"]),
        rare=frozenset(data["rare"]),
        lexicon_hash=data["lexicon_hash"],
        policy=PartitionPolicy(**data["policy"]),
    )
    index.check()
    return index

