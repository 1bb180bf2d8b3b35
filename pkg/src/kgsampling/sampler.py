"""Selective mini-batch sampling over a frequent/rare group partition.

Each batch holds ``B - b`` instances from distinct frequent groups followed by
``b`` instances from distinct rare groups, so no two slots share a group and
every in-batch negative is a true negative.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from .errors import ConfigError, InsufficientGroupsError
from .groups import GroupIndex

FREQUENT = "frequent"
RARE = "rare"
RANDOM = "random"


def compute_boundary(B: int, R: float) -> int:
    """Number of rare slots, ``ceil(B * R)``."""
    if B < 2:
        raise ConfigError(f"batch size must be >= 2, got {B}")
    if not 0.0 <= R < 1.0:
        raise ConfigError(f"ratio R must lie in [0, 1), got {R}")
    b = math.ceil(B * R)
    if b >= B:  # only reachable through float rounding for R just below 1
        raise ConfigError(f"boundary {b} is not below batch size {B} for R={R}")
    return b


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int = 8
    ratio: float = 0.375
    shuffle_after_sampling: bool = False
    seed: int = 0
    boundary: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "boundary", compute_boundary(self.batch_size, self.ratio))

    @property
    def n_frequent(self) -> int:
        return self.batch_size - self.boundary

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "ratio": self.ratio,
            "boundary": self.boundary,
            "shuffle_after_sampling": self.shuffle_after_sampling,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Slot:
    instance_id: str
    group_id: str
    stratum: str


@dataclass(frozen=True)
class MiniBatch:
    slots: tuple[Slot, ...]

    def __len__(self):
        return len(self.slots)

    @property
    def instance_ids(self) -> list[str]:
        return [s.instance_id for s in self.slots]

    @property
    def group_ids(self) -> list[str]:
        return [s.group_id for s in self.slots]

    def to_dict(self) -> dict:
        return {"slots": [[s.instance_id, s.group_id, s.stratum] for s in self.slots]}


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _pick_groups(groups: list[str], k: int, rng: np.random.Generator) -> list[str]:
    if k == 0:
        return []
    return [groups[i] for i in rng.choice(len(groups), size=k, replace=False)]


def sample_batch(
    index: GroupIndex, cfg: SamplerConfig, rng: Optional[np.random.Generator] = None
) -> MiniBatch:
    """Draw one selective batch, advancing ``rng`` (a fresh one seeded from cfg if None)."""
    if rng is None:
        rng = make_rng(cfg.seed)
    frequent = sorted(index.frequent)
    rare = sorted(index.rare)
    if len(frequent) < cfg.n_frequent:
        raise InsufficientGroupsError(FREQUENT, cfg.n_frequent, len(frequent))
    if len(rare) < cfg.boundary:
        raise InsufficientGroupsError(RARE, cfg.boundary, len(rare))

    chosen = [(g, FREQUENT) for g in _pick_groups(frequent, cfg.n_frequent, rng)]
    chosen += [(g, RARE) for g in _pick_groups(rare, cfg.boundary, rng)]
    slots = []
    for gid, stratum in chosen:
        members = index.groups[gid]
        slots.append(Slot(members[int(rng.integers(len(members)))], gid, stratum))
    if cfg.shuffle_after_sampling:
        slots = [slots[i] for i in rng.permutation(len(slots))]
    return MiniBatch(tuple(slots))


def n_batches(n_instances: int, batch_size: int) -> int:
    return -(-n_instances // batch_size)


def epoch_batches(
    index: GroupIndex,
    cfg: SamplerConfig,
    n_instances: int,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[MiniBatch]:
    """``ceil(n_instances / B)`` selective batches from one evolving generator.

    Groups may recur across batches of the same epoch.
    """
    if rng is None:
        rng = make_rng(cfg.seed)
    for _ in range(n_batches(n_instances, cfg.batch_size)):
        yield sample_batch(index, cfg, rng)


def random_batches(
    index: GroupIndex,
    batch_size: int,
    n_instances: int,
    rng: np.random.Generator,
) -> Iterator[MiniBatch]:
    """Conventional baseline: B instances uniformly without replacement, no group constraint."""
    ids = sorted(index.group_map)
    group_of = index.group_map
    size = min(batch_size, len(ids))
    for _ in range(n_batches(n_instances, batch_size)):
        picked = rng.choice(len(ids), size=size, replace=False)
        yield MiniBatch(tuple(Slot(ids[i], group_of[ids[i]], RANDOM) for i in picked))


@dataclass
class BatchReport:
    ok: bool
    violations: list[str]


def validate_batch(batch: MiniBatch, index: GroupIndex, cfg: SamplerConfig) -> BatchReport:
    problems = []
    B, b = cfg.batch_size, cfg.boundary
    if len(batch) != B:
        problems.append(f"size: batch has {len(batch)} slots, expected {B}")
    strata = Counter(s.stratum for s in batch.slots)
    if strata[RARE] != b or strata[FREQUENT] != B - b:
        problems.append(
            f"stratum-count: {strata[FREQUENT]} frequent + {strata[RARE]} rare, "
            f"expected {B - b} + {b}"
        )
    for gid, count in Counter(batch.group_ids).items():
        if count > 1:
            problems.append(f"duplicate-group: {gid} appears {count} times")
    for pos, slot in enumerate(batch.slots):
        if slot.group_id not in index.groups:
            problems.append(f"unknown-group: slot {pos} claims {slot.group_id}")
            continue
        if slot.instance_id not in index.groups[slot.group_id]:
            problems.append(
                f"membership: slot {pos} instance {slot.instance_id} not in {slot.group_id}"
            )
        expected = FREQUENT if slot.group_id in index.frequent else RARE
        if slot.stratum != expected:
            problems.append(
                f"stratum-label: slot {pos} labelled {slot.stratum}, group is {expected}"
            )
    if not cfg.shuffle_after_sampling:
        labels = [s.stratum for s in batch.slots]
        if labels != [FREQUENT] * (len(labels) - strata[RARE]) + [RARE] * strata[RARE]:
            problems.append("order: frequent block must precede rare block when unshuffled")
    return BatchReport(ok=not problems, violations=problems)
