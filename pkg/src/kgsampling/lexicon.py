"""Key-concept lexicon: loading, validation and the shipped default."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Union

from .errors import LexiconError

CATEGORIES = frozenset(
    {
        "breast_composition",
        "calcification",
        "asymmetry",
        "mass",
        "architectural_distortion",
        "surgical_change",
        "other",
    }
)

_PHRASE_RE = re.compile(r"^[a-z0-9]+( [a-z0-9]+)*$")
_ID_RE = re.compile(r"^[a-z0-9_]+$")
_SECTIONS = ("concepts", "negation", "uncertainty")


@dataclass(frozen=True)
class LexiconEntry:
    concept_id: str
    category: str
    patterns: tuple[str, ...]


@dataclass(frozen=True)
class Lexicon:
    entries: tuple[LexiconEntry, ...]
    negation_cues: tuple[str, ...]
    uncertainty_cues: tuple[str, ...]
    version_hash: str

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.concept_id in seen:
                raise LexiconError(f"duplicate concept_id {entry.concept_id!r}")
            seen.add(entry.concept_id)
            if not _ID_RE.match(entry.concept_id):
                raise LexiconError(f"invalid concept_id {entry.concept_id!r}")
            if entry.category not in CATEGORIES:
                raise LexiconError(
                    f"concept {entry.concept_id!r}: unknown category {entry.category!r}"
                )
            if not entry.patterns:
                raise LexiconError(f"concept {entry.concept_id!r} has no patterns")
            for p in entry.patterns:
                _check_phrase(p, f"pattern of {entry.concept_id!r}")
        for cue in self.negation_cues + self.uncertainty_cues:
            _check_phrase(cue, "cue")

    @property
    def concept_ids(self) -> tuple[str, ...]:
        """Concept ids in sorted order; this is the canonical column order."""
        return tuple(sorted(e.concept_id for e in self.entries))

    def entry(self, concept_id: str) -> LexiconEntry:
        for e in self.entries:
            if e.concept_id == concept_id:
                return e
        raise KeyError(concept_id)

    def category_of(self, concept_id: str) -> str:
        return self.entry(concept_id).category


def _check_phrase(phrase: str, what: str) -> None:
    if not _PHRASE_RE.match(phrase):
        raise LexiconError(
            f"{what} {phrase!r} must be lowercase words separated by single spaces"
        )


def parse_lexicon(text: str) -> Lexicon:
    """Parse lexicon file contents. The checksum covers the exact text given."""
    section: Optional[str] = None
    entries: list[LexiconEntry] = []
    cues: dict[str, list[str]] = {"negation": [], "uncertainty": []}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SECTIONS:
                raise LexiconError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            raise LexiconError(f"line {lineno}: content before any section header")
        if section == "concepts":
            fields = [f.strip() for f in line.split("|")]
            if len(fields) < 3:
                raise LexiconError(
                    f"line {lineno}: expected 'concept_id | category | pattern ...'"
                )
            entries.append(LexiconEntry(fields[0], fields[1], tuple(fields[2:])))
        else:
            cues[section].append(" ".join(line.split()))
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Lexicon(
        entries=tuple(entries),
        negation_cues=tuple(cues["negation"]),
        uncertainty_cues=tuple(cues["uncertainty"]),
        version_hash=digest,
    )


def load_lexicon(path: Union[str, Path, None] = None) -> Lexicon:
    """Load a lexicon file, or the packaged default when ``path`` is None."""
    if path is None:
        text = resources.files("kgsampling").joinpath("data/default_lexicon.txt").read_text(
            encoding="utf-8"
        )
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise LexiconError(f"cannot read lexicon {path}: {exc}") from exc
    return parse_lexicon(text)


def default_lexicon() -> Lexicon:
    return load_lexicon(None)


def format_lexicon(
    entries: Iterable[LexiconEntry],
    negation_cues: Iterable[str],
    uncertainty_cues: Iterable[str],
) -> str:
    """Render entries back into the file format (used to write custom lexicons)."""
    lines = ["[concepts]"]
    for e in entries:
        lines.append(" | ".join((e.concept_id, e.category) + tuple(e.patterns)))
    lines += ["", "[negation]", *negation_cues, "", "[uncertainty]", *uncertainty_cues]
    return "\n".join(lines) + "\n"
