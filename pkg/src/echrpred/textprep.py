"""Text normalization, tokenization and stop-word filtering."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources

_NON_LETTER = re.compile(r"[^a-z\s]")
_WHITESPACE = re.compile(r"\s+")

_TOKEN = re.compile(r"^[a-z]+$")


def normalize(text: str) -> str:
    """Lowercase, strip everything that is not an a-z letter, collapse whitespace.

    Digits, punctuation and any letter outside a-z become spaces, so
    "Art. 6 1" collapses to "art". Idempotent.
    """
    lowered = text.lower()
    lettered = _NON_LETTER.sub(" ", lowered)
    return _WHITESPACE.sub(" ", lettered).strip()


@dataclass(frozen=True)
class TokenSource:
    """Where a token sequence came from: document, section, filtering state."""

    doc_id: str = ""
    section: str | None = None
    stopwords_removed: bool = False


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    source: TokenSource = field(default_factory=TokenSource, compare=False)

    def __post_init__(self) -> None:
        for tok in self.tokens:
            if not _TOKEN.match(tok):
                raise ValueError(f"token {tok!r} is not lowercase alphabetic")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def tokenize(text: str, doc_id: str = "", section: str | None = None) -> TokenSequence:
    """Split normalized text on single spaces. Input must already be normalized."""
    if text == "":
        return TokenSequence((), TokenSource(doc_id, section, False))
    return TokenSequence(tuple(text.split(" ")), TokenSource(doc_id, section, False))


def load_stopwords(path: str | None = None) -> frozenset[str]:
    """Load a stop-word file: one lowercase token per line, '#' comments allowed.

    With no path, returns the bundled frozen English list.
    """
    if path is None:
        raw = resources.files("echrpred.data").joinpath("stopwords.txt").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    words = set()
    for line in raw.splitlines():
        word = line.split("#", 1)[0].strip()
        if word:
            words.add(word)
    return frozenset(words)


_BUNDLED: frozenset[str] | None = None


def bundled_stopwords() -> frozenset[str]:
    global _BUNDLED
    if _BUNDLED is None:
        _BUNDLED = load_stopwords()
    return _BUNDLED


def remove_stopwords(seq: TokenSequence, stopwords: frozenset[str] | None = None) -> TokenSequence:
    """Drop stop-word tokens, preserving order. Idempotent."""
    words = bundled_stopwords() if stopwords is None else stopwords
    kept = tuple(tok for tok in seq.tokens if tok not in words)
    return TokenSequence(kept, replace(seq.source, stopwords_removed=True))
