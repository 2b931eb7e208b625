"""Document collections: canonical JSONL persistence and synthetic corpus generation.

The corpus file format is one JSON object per line (UTF-8) with exactly the
keys doc_id, doc_type, articles, violation_by_article, decision_date, body.
Serialization is canonical (fixed key order, sorted article lists, ASCII
escapes) so that saving the same collection twice yields byte-identical files.

The synthetic generator stands in for live court-database ingestion: it emits
judgments with the standard section structure, plants outcome-correlated
"signal" tokens in the circumstances subsection, and plants marker tokens that
occur only in the law / verdict sections (used to verify that no outcome text
leaks into features or embeddings). Generation is driven by a single
Mersenne-Twister stream (random.Random) seeded from the spec, so the same
spec always produces the identical collection.
"""

from __future__ import annotations

import datetime as _dt
import enum
import json
import random
from dataclasses import dataclass, field


class DocType(str, enum.Enum):
    JUDGMENT = "judgment"
    DECISION = "decision"
    COMMUNICATED_CASE = "communicated_case"
    LEGAL_SUMMARY = "legal_summary"
    RESOLUTION = "resolution"
    OTHER = "other"


class CorpusError(Exception):
    """Malformed corpus file or violated document invariant."""


_RECORD_KEYS = ("doc_id", "doc_type", "articles", "violation_by_article", "decision_date", "body")


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    doc_type: DocType
    articles: frozenset[str]
    violation_by_article: dict[str, bool]
    decision_date: str
    body: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise CorpusError("doc_id must be non-empty")
        if self.doc_type == DocType.JUDGMENT and not self.body:
            raise CorpusError(f"document {self.doc_id!r}: judgment body must be non-empty")
        extra = set(self.violation_by_article) - set(self.articles)
        if extra:
            raise CorpusError(
                f"document {self.doc_id!r}: violation keys {sorted(extra)} not in articles"
            )
        try:
            _dt.date.fromisoformat(self.decision_date)
        except ValueError as exc:
            raise CorpusError(f"document {self.doc_id!r}: bad decision_date: {exc}") from exc


@dataclass(frozen=True)
class DocumentCollection:
    documents: tuple[RawDocument, ...]
    provenance: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)


def _record_dict(doc: RawDocument) -> dict:
    return {
        "doc_id": doc.doc_id,
        "doc_type": doc.doc_type.value,
        "articles": sorted(doc.articles),
        "violation_by_article": {k: doc.violation_by_article[k] for k in sorted(doc.violation_by_article)},
        "decision_date": doc.decision_date,
        "body": doc.body,
    }


def save_corpus(collection: DocumentCollection, path: str) -> None:
    """Write the collection as canonical JSONL; saving twice is byte-identical."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in collection.documents:
            fh.write(json.dumps(_record_dict(doc), ensure_ascii=True, separators=(",", ":")))
            fh.write("\n")


def _parse_record(obj: dict, lineno: int) -> RawDocument:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: record is not a JSON object")
    unknown = set(obj) - set(_RECORD_KEYS)
    if unknown:
        raise CorpusError(f"line {lineno}: unknown keys {sorted(unknown)}")
    missing = set(_RECORD_KEYS) - set(obj)
    if missing:
        raise CorpusError(f"line {lineno}: missing keys {sorted(missing)}")
    try:
        doc_type = DocType(obj["doc_type"])
    except ValueError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from exc
    articles = obj["articles"]
    vmap = obj["violation_by_article"]
    if not isinstance(articles, list) or not all(isinstance(a, str) for a in articles):
        raise CorpusError(f"line {lineno}: articles must be an array of strings")
    if not isinstance(vmap, dict) or not all(isinstance(v, bool) for v in vmap.values()):
        raise CorpusError(f"line {lineno}: violation_by_article must map article to bool")
    try:
        return RawDocument(
            doc_id=obj["doc_id"],
            doc_type=doc_type,
            articles=frozenset(articles),
            violation_by_article=dict(vmap),
            decision_date=obj["decision_date"],
            body=obj["body"],
        )
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from exc


def load_corpus(path: str) -> DocumentCollection:
    """Load a JSONL corpus file, preserving record order."""
    docs: list[RawDocument] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON: {exc}") from exc
            doc = _parse_record(obj, lineno)
            if doc.doc_id in seen:
                raise CorpusError(f"line {lineno}: duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            docs.append(doc)
    return DocumentCollection(tuple(docs), provenance=str(path))


# ---------------------------------------------------------------------------
# Synthetic corpus generation
# ---------------------------------------------------------------------------

# Judgments carry 5 payload sections (procedure, circumstances, relevant law,
# law, verdict); facts is the two subsections plus their headings.
_PAYLOAD_SECTIONS = 5
_TOKENS_PER_LINE = 12
_MARKER_RATE = 0.10  # fraction of law / verdict tokens drawn from marker pools

HEADING_PROCEDURE = "PROCEDURE"
HEADING_FACTS = "THE FACTS"
HEADING_CIRCUMSTANCES = "I. THE CIRCUMSTANCES OF THE CASE"
HEADING_RELEVANT_LAW = "II. RELEVANT DOMESTIC LAW"
HEADING_LAW = "THE LAW"
HEADING_VERDICT = "FOR THESE REASONS, THE COURT"


@dataclass(frozen=True)
class SyntheticSpec:
    articles: tuple[str, ...]
    docs_per_article_per_label: int
    background_vocab_size: int = 400
    signal_tokens_per_label: int = 20
    signal_rate: float = 0.05
    tokens_per_section: int = 60
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.articles:
            raise ValueError("articles must be non-empty")
        if self.docs_per_article_per_label < 1:
            raise ValueError("docs_per_article_per_label must be >= 1")
        if self.background_vocab_size < 1 or self.signal_tokens_per_label < 1:
            raise ValueError("vocabulary counts must be >= 1")
        if self.tokens_per_section < 1:
            raise ValueError("tokens_per_section must be >= 1")
        if not 0.0 <= self.signal_rate <= 1.0:
            raise ValueError("signal_rate must be in [0, 1]")
        # signal_rate is a whole-body fraction but all signal lands in the
        # circumstances section, which holds 1/5 of the payload tokens
        if self.signal_rate * _PAYLOAD_SECTIONS > 1.0:
            raise ValueError(
                f"signal_rate {self.signal_rate} not realizable: circumstances holds "
                f"1/{_PAYLOAD_SECTIONS} of body tokens, so signal_rate must be <= "
                f"{1.0 / _PAYLOAD_SECTIONS}"
            )


def _letters(i: int) -> str:
    """Encode a non-negative integer as lowercase letters (a, b, ..., aa, ...)."""
    digits = []
    i += 1
    while i > 0:
        i, rem = divmod(i - 1, 26)
        digits.append(chr(ord("a") + rem))
    return "".join(reversed(digits))


@dataclass(frozen=True)
class GeneratedCorpus:
    """generate_synthetic output plus the bookkeeping tests rely on."""

    collection: DocumentCollection
    section_tokens: dict[str, dict[str, list[str]]]  # doc_id -> payload section -> tokens
    signal_pools: dict[tuple[str, bool], tuple[str, ...]]  # (article, violation) -> tokens
    law_markers: tuple[str, ...]
    verdict_markers: tuple[str, ...]


def _wrap(tokens: list[str]) -> str:
    lines = []
    for i in range(0, len(tokens), _TOKENS_PER_LINE):
        lines.append(" ".join(tokens[i : i + _TOKENS_PER_LINE]))
    return "\n".join(lines)


def generate_with_payloads(spec: SyntheticSpec) -> GeneratedCorpus:
    rng = random.Random(spec.seed)
    background = [f"bg{_letters(i)}" for i in range(spec.background_vocab_size)]
    signal_pools: dict[tuple[str, bool], tuple[str, ...]] = {}
    for a_idx, article in enumerate(spec.articles):
        for violation in (True, False):
            tag = "v" if violation else "n"
            pool = tuple(
                f"sig{_letters(a_idx)}{tag}{_letters(i)}"
                for i in range(spec.signal_tokens_per_label)
            )
            signal_pools[(article, violation)] = pool
    law_markers = tuple(f"lawmark{_letters(i)}" for i in range(5))
    verdict_markers = tuple(f"verdictmark{_letters(i)}" for i in range(5))

    p_signal = spec.signal_rate * _PAYLOAD_SECTIONS

    def background_tokens(n: int) -> list[str]:
        return [background[rng.randrange(len(background))] for _ in range(n)]

    def mixed_tokens(n: int, pool: tuple[str, ...], rate: float) -> list[str]:
        out = []
        for _ in range(n):
            if rng.random() < rate:
                out.append(pool[rng.randrange(len(pool))])
            else:
                out.append(background[rng.randrange(len(background))])
        return out

    docs: list[RawDocument] = []
    section_tokens: dict[str, dict[str, list[str]]] = {}
    counter = 0
    for article in spec.articles:
        for violation in (True, False):
            pool = signal_pools[(article, violation)]
            for i in range(spec.docs_per_article_per_label):
                n = spec.tokens_per_section
                procedure = background_tokens(n)
                circumstances = mixed_tokens(n, pool, p_signal)
                relevant = background_tokens(n)
                law = mixed_tokens(n, law_markers, _MARKER_RATE)
                outcome = ["holds", "violation"] if violation else ["holds", "no", "violation"]
                verdict = outcome + mixed_tokens(n - len(outcome), verdict_markers, _MARKER_RATE)
                doc_id = f"{article}-{'v' if violation else 'nv'}-{i:04d}"
                body = "\n".join(
                    [
                        HEADING_PROCEDURE,
                        _wrap(procedure),
                        HEADING_FACTS,
                        HEADING_CIRCUMSTANCES,
                        _wrap(circumstances),
                        HEADING_RELEVANT_LAW,
                        _wrap(relevant),
                        HEADING_LAW,
                        _wrap(law),
                        HEADING_VERDICT,
                        _wrap(verdict),
                    ]
                )
                date = _dt.date(2000, 1, 1) + _dt.timedelta(days=counter % 7000)
                counter += 1
                docs.append(
                    RawDocument(
                        doc_id=doc_id,
                        doc_type=DocType.JUDGMENT,
                        articles=frozenset({article}),
                        violation_by_article={article: violation},
                        decision_date=date.isoformat(),
                        body=body,
                    )
                )
                section_tokens[doc_id] = {
                    "procedure": procedure,
                    "circumstances": circumstances,
                    "relevant_law": relevant,
                    "law": law,
                    "verdict": verdict,
                }
    collection = DocumentCollection(tuple(docs), provenance=f"synthetic(seed={spec.seed})")
    return GeneratedCorpus(collection, section_tokens, signal_pools, law_markers, verdict_markers)


def generate_synthetic(spec: SyntheticSpec) -> DocumentCollection:
    """Generate |articles| x 2 x docs_per_article_per_label standard-structure judgments."""
    return generate_with_payloads(spec).collection
