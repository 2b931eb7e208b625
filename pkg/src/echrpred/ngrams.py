"""Top-k n-gram vocabulary, count vectorization and min-max scaling."""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .textprep import TokenSequence

N_MIN = 1
N_MAX = 4
CAPACITY = 2000

Ngram = tuple[str, ...]


def _doc_ngrams(tokens: Sequence[str], n_min: int = N_MIN, n_max: int = N_MAX) -> Iterable[Ngram]:
    for n in range(n_min, n_max + 1):
        for i in range(len(tokens) - n + 1):
            yield tuple(tokens[i : i + n])


@dataclass(frozen=True)
class NgramVocabulary:
    """The capacity most frequent n-grams of the training documents.

    Entries are ordered by (count descending, n-gram lexicographic ascending);
    counts are total occurrences summed over documents, with no n-grams
    crossing document boundaries.
    """

    entries: tuple[tuple[Ngram, int], ...]
    n_min: int = N_MIN
    n_max: int = N_MAX
    capacity: int = CAPACITY

    def __post_init__(self) -> None:
        if len(self.entries) > self.capacity:
            raise ValueError("vocabulary exceeds capacity")
        if len({ng for ng, _ in self.entries}) != len(self.entries):
            raise ValueError("duplicate n-grams in vocabulary")

    def __len__(self) -> int:
        return len(self.entries)

    def index(self) -> dict[Ngram, int]:
        return {ng: i for i, (ng, _) in enumerate(self.entries)}

    def column_names(self) -> tuple[str, ...]:
        return tuple(" ".join(ng) for ng, _ in self.entries)


def build_vocab(
    train_docs: Sequence[TokenSequence],
    capacity: int = CAPACITY,
    n_min: int = N_MIN,
    n_max: int = N_MAX,
) -> NgramVocabulary:
    """Count all contiguous n-grams in the training documents and keep the
    capacity highest-count entries (ties broken lexicographically)."""
    if not train_docs:
        raise ValueError("train_docs must be non-empty")
    counts: Counter[Ngram] = Counter()
    for doc in train_docs:
        counts.update(_doc_ngrams(doc.tokens, n_min, n_max))
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return NgramVocabulary(tuple(ranked[:capacity]), n_min, n_max, capacity)


def count_vector(doc: TokenSequence, vocab: NgramVocabulary) -> np.ndarray:
    """Occurrence count of each vocabulary n-gram in the document."""
    row = np.zeros(len(vocab), dtype=np.float64)
    index = vocab.index()
    for ngram, c in Counter(_doc_ngrams(doc.tokens, vocab.n_min, vocab.n_max)).items():
        pos = index.get(ngram)
        if pos is not None:
            row[pos] = c
    return row


@dataclass(eq=False)
class FeatureMatrix:
    """Dense cases-by-features matrix with row (doc) and column labels."""

    row_ids: tuple[str, ...]
    column_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.row_ids), len(self.column_names)):
            raise ValueError(
                f"matrix shape {self.values.shape} does not match "
                f"{len(self.row_ids)} rows x {len(self.column_names)} columns"
            )
        if self.values.size and not np.all(np.isfinite(self.values)):
            raise ValueError("matrix contains NaN or Inf")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.row_ids == other.row_ids
            and self.column_names == other.column_names
            and np.array_equal(self.values, other.values)
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def count_matrix(
    docs: Sequence[TokenSequence], vocab: NgramVocabulary, row_ids: Sequence[str]
) -> FeatureMatrix:
    if len(docs) != len(row_ids):
        raise ValueError("docs and row_ids must align")
    values = np.zeros((len(docs), len(vocab)), dtype=np.float64)
    index = vocab.index()
    for r, doc in enumerate(docs):
        for ngram, c in Counter(_doc_ngrams(doc.tokens, vocab.n_min, vocab.n_max)).items():
            pos = index.get(ngram)
            if pos is not None:
                values[r, pos] = c
    return FeatureMatrix(tuple(row_ids), vocab.column_names(), values)


@dataclass(frozen=True)
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self) -> None:
        if self.mins.shape != self.maxs.shape:
            raise ValueError("min/max shape mismatch")
        if np.any(self.mins > self.maxs):
            raise ValueError("column min exceeds max")


def fit_scaler(train: FeatureMatrix) -> MinMaxScaler:
    """Record column-wise min and max of the training matrix only."""
    if train.values.shape[0] == 0:
        raise ValueError("cannot fit scaler on an empty matrix")
    return MinMaxScaler(train.values.min(axis=0), train.values.max(axis=0))


def transform(matrix: FeatureMatrix, scaler: MinMaxScaler) -> FeatureMatrix:
    """Map values through (v - min) / (max - min); constant columns become 0.

    Values outside the training range are not clipped, so test rows may fall
    outside [0, 1].
    """
    if matrix.values.shape[1] != scaler.mins.shape[0]:
        raise ValueError(
            f"matrix has {matrix.values.shape[1]} columns, scaler fitted on "
            f"{scaler.mins.shape[0]}"
        )
    span = scaler.maxs - scaler.mins
    safe = np.where(span > 0, span, 1.0)
    scaled = (matrix.values - scaler.mins) / safe
    scaled[:, span == 0] = 0.0
    return FeatureMatrix(matrix.row_ids, matrix.column_names, scaled)


def save_matrix(matrix: FeatureMatrix, path: str) -> None:
    """CSV with a doc_id-keyed header row; floats carry 9 significant digits."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("doc_id",) + matrix.column_names)
        for doc_id, row in zip(matrix.row_ids, matrix.values):
            writer.writerow([doc_id] + [f"{v:.9g}" for v in row])


def load_matrix(path: str) -> FeatureMatrix:
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "doc_id":
            raise ValueError("feature matrix file must start with a doc_id header")
        columns = tuple(header[1:])
        row_ids: list[str] = []
        rows: list[list[float]] = []
        for record in reader:
            row_ids.append(record[0])
            rows.append([float(v) for v in record[1:]])
    values = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, len(columns)))
    return FeatureMatrix(tuple(row_ids), columns, values)
