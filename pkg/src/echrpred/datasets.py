"""Per-article labeling, balanced training sets and ratio-matched test sets.

A split reserves a seed-sampled holdout of the minority class (fraction rho),
pads it with majority cases until the test set's violation share matches the
historical target ratio, and uses equal counts of what remains per label as
the training set. Sampling is Fisher-Yates shuffling of doc_id-sorted case
lists under a Mersenne-Twister stream, so a (pool, seed) pair always yields
the identical split regardless of input file order.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass

from .corpus import DocType, DocumentCollection


class Label(str, enum.Enum):
    VIOLATION = "violation"
    NONVIOLATION = "nonviolation"


class SplitError(Exception):
    """Pool cannot produce a valid split for the requested parameters."""


@dataclass(frozen=True)
class LabeledCase:
    doc_id: str
    article: str
    label: Label


@dataclass(frozen=True)
class ArticlePool:
    article: str
    cases: tuple[LabeledCase, ...]

    @property
    def v_count(self) -> int:
        return sum(1 for c in self.cases if c.label == Label.VIOLATION)

    @property
    def nv_count(self) -> int:
        return len(self.cases) - self.v_count


@dataclass(frozen=True)
class DatasetSplit:
    article: str
    train: tuple[LabeledCase, ...]
    test: tuple[LabeledCase, ...]
    r_target: float
    seed: int

    def __post_init__(self) -> None:
        train_ids = {c.doc_id for c in self.train}
        test_ids = {c.doc_id for c in self.test}
        if train_ids & test_ids:
            raise SplitError(f"article {self.article}: train and test overlap")
        if len(train_ids) != len(self.train) or len(test_ids) != len(self.test):
            raise SplitError(f"article {self.article}: duplicate case in split")
        train_v = sum(1 for c in self.train if c.label == Label.VIOLATION)
        if 2 * train_v != len(self.train):
            raise SplitError(f"article {self.article}: training set is not balanced")
        if not self.test:
            raise SplitError(f"article {self.article}: empty test set")
        ratio = sum(1 for c in self.test if c.label == Label.VIOLATION) / len(self.test)
        if abs(ratio - self.r_target) > 1.0 / len(self.test) + 1e-12:
            raise SplitError(
                f"article {self.article}: test ratio {ratio:.4f} misses target "
                f"{self.r_target:.4f} by more than 1/|test|"
            )


def label_cases(collection: DocumentCollection, article: str) -> ArticlePool:
    """One labeled case per judgment tagged with the article."""
    cases: list[LabeledCase] = []
    for doc in collection:
        if doc.doc_type != DocType.JUDGMENT or article not in doc.articles:
            continue
        if article not in doc.violation_by_article:
            raise SplitError(
                f"document {doc.doc_id!r} is tagged with article {article} "
                "but has no violation entry for it"
            )
        label = Label.VIOLATION if doc.violation_by_article[article] else Label.NONVIOLATION
        cases.append(LabeledCase(doc.doc_id, article, label))
    return ArticlePool(article, tuple(cases))


def historical_ratio(pool: ArticlePool) -> float:
    """Violation share of the pool; callers may override with an external ratio."""
    if not pool.cases:
        raise SplitError(f"article {pool.article}: empty pool")
    return pool.v_count / len(pool.cases)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def make_split(
    pool: ArticlePool, r_target: float, rho: float = 0.10, seed: int = 0
) -> DatasetSplit:
    """Balanced train / ratio-matched test split (deterministic in pool, seed).

    h = round(rho * minority count) minority cases go to test, padded with
    k = round(h * q / (1 - q)) majority cases (q = the majority side's share
    under r_target, k capped by what training leaves over); the remaining
    minority count is the per-label training size.
    """
    if not 0.0 < r_target < 1.0:
        raise SplitError(f"article {pool.article}: degenerate historical ratio {r_target}")
    v_cases = sorted((c for c in pool.cases if c.label == Label.VIOLATION), key=lambda c: c.doc_id)
    nv_cases = sorted(
        (c for c in pool.cases if c.label == Label.NONVIOLATION), key=lambda c: c.doc_id
    )
    if len(v_cases) < 2 or len(nv_cases) < 2:
        raise SplitError(f"article {pool.article}: need at least 2 cases of each label")

    # tie -> nonviolation is the minority
    if len(nv_cases) <= len(v_cases):
        minority, majority = nv_cases, v_cases
        majority_share = r_target
    else:
        minority, majority = v_cases, nv_cases
        majority_share = 1.0 - r_target

    h = max(1, _round_half_up(rho * len(minority)))
    train_per_class = len(minority) - h
    if train_per_class < 1:
        raise SplitError(
            f"article {pool.article}: pool too small for a holdout and at least "
            "one training case per class"
        )
    k = _round_half_up(h * majority_share / (1.0 - majority_share))
    k = min(k, len(majority) - train_per_class)
    if k < 1:
        raise SplitError(f"article {pool.article}: no majority cases left for the test set")

    rng = random.Random(seed)
    minority = list(minority)
    majority = list(majority)
    rng.shuffle(minority)
    rng.shuffle(majority)

    test = tuple(majority[:k]) + tuple(minority[:h])
    train = tuple(majority[k : k + train_per_class]) + tuple(minority[h : h + train_per_class])
    return DatasetSplit(pool.article, train, test, r_target, seed)


def save_manifest(split: DatasetSplit, rho: float, path: str) -> None:
    """Replayable record of a split: article, seed, target ratio, doc_id lists."""
    payload = {
        "article": split.article,
        "seed": split.seed,
        "r_target": split.r_target,
        "rho": rho,
        "train": [c.doc_id for c in split.train],
        "test": [c.doc_id for c in split.test],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def split_from_manifest(pool: ArticlePool, manifest: dict) -> DatasetSplit:
    """Rebuild a DatasetSplit from a manifest against the same pool."""
    by_id = {c.doc_id: c for c in pool.cases}
    try:
        train = tuple(by_id[d] for d in manifest["train"])
        test = tuple(by_id[d] for d in manifest["test"])
    except KeyError as exc:
        raise SplitError(f"manifest references unknown doc_id {exc}") from exc
    return DatasetSplit(manifest["article"], train, test, manifest["r_target"], manifest["seed"])
