"""Rule-based extraction of positively asserted key concepts from report text.

Pipeline: normalize -> sentences -> clauses -> polarity -> phrase matching.
Polarity is decided per clause. A negated or uncertain clause carries its
polarity forward over comma-joined continuation clauses of the same sentence
("no masses, calcifications, or other findings"), stopping at ';' / ':' or at
a clause that opens with a contrast word.
"""

from __future__ import annotations

import enum
from typing import Iterable, Iterator

from .lexicon import Lexicon

SENTENCE_TERMINATOR = "."
CLAUSE_SEPARATORS = ",;:"
_KEEP = SENTENCE_TERMINATOR + CLAUSE_SEPARATORS
_TO_TERMINATOR = "!?"
_DELETE = "'’‘`´"
# A clause opening with one of these ends an inherited negation/uncertainty.
SCOPE_TERMINATORS = frozenset(
    {"but", "however", "although", "though", "except", "yet", "whereas", "there"}
)
PLURAL_SUFFIXES = ("", "s", "es")


class ClausePolarity(str, enum.Enum):
    POSITIVE = "positive"
    NEGATED = "negated"
    UNCERTAIN = "uncertain"


class ConceptSet(frozenset):
    """Immutable set of concept ids that always iterates in sorted order."""

    def __new__(cls, concepts: Iterable[str] = ()):
        return super().__new__(cls, concepts)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(frozenset.__iter__(self)))

    def __repr__(self) -> str:
        return f"ConceptSet({sorted(self)!r})"

    def to_list(self) -> list[str]:
        return sorted(self)


def normalize_text(raw: str) -> str:
    out = []
    for ch in raw.lower():
        if ch in _KEEP:
            out.append(ch)
        elif ch in _TO_TERMINATOR:
            out.append(SENTENCE_TERMINATOR)
        elif ch in _DELETE:
            continue
        elif ch.isalnum():
            out.append(ch)
        else:
            out.append(" ")
    return " ".join("".join(out).split())


def split_sentences(text: str) -> list[str]:
    return [s.strip() for s in text.split(SENTENCE_TERMINATOR) if s.strip()]


def _clauses_with_separators(sentence: str) -> list[tuple[str, str]]:
    """Clauses paired with the separator that preceded them ('' for the first)."""
    result = []
    buf: list[str] = []
    seen_seps = ""
    for ch in sentence + ";":
        if ch not in CLAUSE_SEPARATORS:
            buf.append(ch)
            continue
        clause = "".join(buf).strip()
        buf = []
        if clause:
            # ';' or ':' anywhere between two clauses is the stronger boundary
            strong = [s for s in seen_seps if s != ","]
            result.append((clause, strong[-1] if strong else seen_seps[-1:]))
            seen_seps = ""
        seen_seps += ch
    return result


def split_clauses(sentence: str) -> list[str]:
    return [clause for clause, _ in _clauses_with_separators(sentence)]


def _find_phrase(tokens: list[str], phrase: tuple[str, ...], plural: bool) -> list[int]:
    """Start positions where ``phrase`` occurs as whole tokens."""
    n = len(phrase)
    starts = []
    for i in range(len(tokens) - n + 1):
        if tokens[i : i + n - 1] != list(phrase[:-1]):
            continue
        last = tokens[i + n - 1]
        if plural:
            if any(last == phrase[-1] + suf for suf in PLURAL_SUFFIXES):
                starts.append(i)
        elif last == phrase[-1]:
            starts.append(i)
    return starts


def _contains_cue(tokens: list[str], cues: Iterable[str]) -> bool:
    return any(_find_phrase(tokens, tuple(c.split()), plural=False) for c in cues)


def classify_clause(clause: str, lexicon: Lexicon) -> ClausePolarity:
    tokens = clause.split()
    if _contains_cue(tokens, lexicon.negation_cues):
        return ClausePolarity.NEGATED
    if _contains_cue(tokens, lexicon.uncertainty_cues):
        return ClausePolarity.UNCERTAIN
    return ClausePolarity.POSITIVE


def clause_polarities(text: str, lexicon: Lexicon) -> list[tuple[str, ClausePolarity]]:
    """Every clause of an already-normalized text with its effective polarity."""
    out = []
    for sentence in split_sentences(text):
        carried = ClausePolarity.POSITIVE
        for clause, sep in _clauses_with_separators(sentence):
            polarity = classify_clause(clause, lexicon)
            inherits = (
                polarity is ClausePolarity.POSITIVE
                and carried is not ClausePolarity.POSITIVE
                and sep == ","
                and clause.split()[0] not in SCOPE_TERMINATORS
            )
            if inherits:
                polarity = carried
            out.append((clause, polarity))
            carried = polarity
    return out


def positive_clauses(report: str, lexicon: Lexicon) -> list[str]:
    return [
        clause
        for clause, pol in clause_polarities(normalize_text(report), lexicon)
        if pol is ClausePolarity.POSITIVE
    ]


def _pattern_table(lexicon: Lexicon) -> list[tuple[tuple[str, ...], str]]:
    table = [
        (tuple(p.split()), e.concept_id) for e in lexicon.entries for p in e.patterns
    ]
    # longest first; ties by pattern text so the order never depends on file order
    table.sort(key=lambda item: (-len(" ".join(item[0])), item[0], item[1]))
    return table


def match_concepts(clause: str, lexicon: Lexicon) -> set[str]:
    """Longest-first, non-overlapping whole-word matching within one clause."""
    tokens = clause.split()
    taken = [False] * len(tokens)
    found = set()
    for phrase, concept_id in _pattern_table(lexicon):
        n = len(phrase)
        for start in _find_phrase(tokens, phrase, plural=True):
            if any(taken[start : start + n]):
                continue
            taken[start : start + n] = [True] * n
            found.add(concept_id)
    return found


def extract_concepts(report: str, lexicon: Lexicon) -> ConceptSet:
    found: set[str] = set()
    for clause in positive_clauses(report, lexicon):
        found |= match_concepts(clause, lexicon)
    return ConceptSet(found)
