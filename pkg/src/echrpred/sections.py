"""Segment judgment bodies into named sections via heading-line markers.

Heading matching is case-sensitive on trimmed whole lines. The two facts
subsections (circumstances, relevant law) tolerate an optional Roman-numeral
prefix ("I. ", "II. "), and the relevant-law heading matches by prefix so
drafting variants like "RELEVANT DOMESTIC LAW AND PRACTICE" are accepted.
Unrecognized headings stay inside their enclosing section.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass

from .corpus import DocType, RawDocument


class SectionKind(str, enum.Enum):
    PROCEDURE = "procedure"
    FACTS = "facts"
    CIRCUMSTANCES = "circumstances"
    RELEVANT_LAW = "relevant_law"
    LAW = "law"
    VERDICT = "verdict"
    # derived from procedure + facts, never stored
    PROCEDURE_PLUS_FACTS = "procedure_plus_facts"


STORED_KINDS = (
    SectionKind.PROCEDURE,
    SectionKind.FACTS,
    SectionKind.CIRCUMSTANCES,
    SectionKind.RELEVANT_LAW,
    SectionKind.LAW,
    SectionKind.VERDICT,
)

# subsections of facts: Roman prefix optional, relevant_law matched by prefix
_SUBSECTIONS = {SectionKind.CIRCUMSTANCES, SectionKind.RELEVANT_LAW}
_PREFIX_KINDS = {SectionKind.RELEVANT_LAW}

DEFAULT_HEADINGS: dict[SectionKind, tuple[str, ...]] = {
    SectionKind.PROCEDURE: ("PROCEDURE",),
    SectionKind.FACTS: ("THE FACTS",),
    SectionKind.CIRCUMSTANCES: ("THE CIRCUMSTANCES OF THE CASE",),
    SectionKind.RELEVANT_LAW: ("RELEVANT DOMESTIC LAW",),
    SectionKind.LAW: ("THE LAW",),
    SectionKind.VERDICT: ("FOR THESE REASONS, THE COURT",),
}

_ROMAN_PREFIX = re.compile(r"^[IVXLCDM]+\.\s+")


class StructureError(Exception):
    """Judgment does not have the required section structure."""

    def __init__(self, doc_id: str, missing: list[SectionKind]):
        self.doc_id = doc_id
        self.missing = list(missing)
        names = ", ".join(k.value for k in self.missing)
        super().__init__(f"document {doc_id!r}: headings missing or out of order: {names}")


@dataclass(frozen=True)
class ParsedJudgment:
    doc_id: str
    sections: dict[SectionKind, str]
    spans: dict[SectionKind, tuple[int, int]]  # line index ranges, heading excluded
    metadata: dict

    def section_order_ok(self) -> bool:
        p, f = self.spans[SectionKind.PROCEDURE], self.spans[SectionKind.FACTS]
        l, v = self.spans[SectionKind.LAW], self.spans[SectionKind.VERDICT]
        return p[0] <= p[1] <= f[0] and f[1] <= l[0] <= l[1] <= v[0]


def load_heading_config(path: str) -> dict[SectionKind, tuple[str, ...]]:
    """Read a JSON file mapping section kind to accepted heading strings."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    config = dict(DEFAULT_HEADINGS)
    for key, values in raw.items():
        kind = SectionKind(key)
        if kind not in STORED_KINDS:
            raise ValueError(f"heading config for non-stored kind {key!r}")
        if not isinstance(values, list) or not all(isinstance(v, str) for v in values):
            raise ValueError(f"heading config for {key!r} must be a list of strings")
        config[kind] = tuple(values)
    return config


def _matches(line: str, kind: SectionKind, accepted: tuple[str, ...]) -> bool:
    stripped = line.strip()
    if kind in _SUBSECTIONS:
        stripped = _ROMAN_PREFIX.sub("", stripped)
    for heading in accepted:
        core = _ROMAN_PREFIX.sub("", heading) if kind in _SUBSECTIONS else heading
        if kind in _PREFIX_KINDS:
            if stripped.startswith(core):
                return True
        elif stripped == core:
            return True
    return False


def segment(
    doc: RawDocument, headings: dict[SectionKind, tuple[str, ...]] | None = None
) -> ParsedJudgment:
    """Locate the six stored sections; raises StructureError if any heading
    is absent or out of order. Section text excludes the heading line itself."""
    if doc.doc_type != DocType.JUDGMENT:
        raise ValueError(f"document {doc.doc_id!r} is a {doc.doc_type.value}, not a judgment")
    config = DEFAULT_HEADINGS if headings is None else headings
    lines = doc.body.split("\n")

    positions: dict[SectionKind, int] = {}
    missing: list[SectionKind] = []
    cursor = 0
    for kind in STORED_KINDS:
        found = -1
        for i in range(cursor, len(lines)):
            if _matches(lines[i], kind, config[kind]):
                found = i
                break
        if found < 0:
            missing.append(kind)
        else:
            positions[kind] = found
            cursor = found + 1
    if missing:
        raise StructureError(doc.doc_id, missing)

    end = len(lines)
    bounds = {
        SectionKind.PROCEDURE: (positions[SectionKind.PROCEDURE] + 1, positions[SectionKind.FACTS]),
        SectionKind.FACTS: (positions[SectionKind.FACTS] + 1, positions[SectionKind.LAW]),
        SectionKind.CIRCUMSTANCES: (
            positions[SectionKind.CIRCUMSTANCES] + 1,
            positions[SectionKind.RELEVANT_LAW],
        ),
        SectionKind.RELEVANT_LAW: (positions[SectionKind.RELEVANT_LAW] + 1, positions[SectionKind.LAW]),
        SectionKind.LAW: (positions[SectionKind.LAW] + 1, positions[SectionKind.VERDICT]),
        SectionKind.VERDICT: (positions[SectionKind.VERDICT] + 1, end),
    }
    sections = {kind: "\n".join(lines[a:b]) for kind, (a, b) in bounds.items()}
    metadata = {
        "articles": sorted(doc.articles),
        "violation_by_article": dict(doc.violation_by_article),
        "decision_date": doc.decision_date,
        "doc_type": doc.doc_type.value,
    }
    return ParsedJudgment(doc.doc_id, sections, bounds, metadata)


def try_segment(
    doc: RawDocument, headings: dict[SectionKind, tuple[str, ...]] | None = None
) -> ParsedJudgment | StructureError:
    try:
        return segment(doc, headings)
    except StructureError as err:
        return err


def is_standard(result: ParsedJudgment | StructureError) -> bool:
    """True iff segmentation succeeded and all six stored sections are non-empty."""
    if not isinstance(result, ParsedJudgment):
        return False
    return all(result.sections[kind].strip() for kind in STORED_KINDS)


def section_text(judgment: ParsedJudgment, kind: SectionKind) -> str:
    if kind == SectionKind.PROCEDURE_PLUS_FACTS:
        return (
            judgment.sections[SectionKind.PROCEDURE] + " " + judgment.sections[SectionKind.FACTS]
        )
    if kind in judgment.sections:
        return judgment.sections[kind]
    raise KeyError(f"unknown section kind {kind!r}")


def strip_outcome_text(judgment: ParsedJudgment) -> str:
    """Pre-outcome text only: procedure and facts, never law or verdict spans."""
    return section_text(judgment, SectionKind.PROCEDURE_PLUS_FACTS)
