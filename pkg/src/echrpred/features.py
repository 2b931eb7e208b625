"""Feature construction shared by cross-validation, final fits and the CLI.

A FeatureStore owns the parsed judgments plus any extra (non-judgment)
documents, trains word/paragraph embeddings once per dimension on
leakage-safe text (procedure+facts of judgments, full body of other
documents), and materializes per-configuration feature matrices. N-gram
features are deliberately NOT cached at the store level: their vocabulary
and scaler depend on the training subset in play, so they are rebuilt from
the relevant training documents via ngram_features (inside every CV fold,
and once on the full training set for the final model).
"""

from __future__ import annotations

import enum

import numpy as np

from . import embeddings as emb
from . import ngrams
from .ngrams import FeatureMatrix
from .sections import ParsedJudgment, SectionKind, section_text, strip_outcome_text
from .textprep import TokenSequence, bundled_stopwords, normalize, remove_stopwords, tokenize


class FeatureType(str, enum.Enum):
    NGRAM = "ngram"
    GLOVE = "glove"
    LAW2VEC = "law2vec"
    ECHR2VEC = "echr2vec"
    DOC2VEC = "doc2vec"


# canonical axis orders (used for deterministic tie-breaking in selection)
FEATURE_TYPE_ORDER = (
    FeatureType.NGRAM,
    FeatureType.GLOVE,
    FeatureType.LAW2VEC,
    FeatureType.ECHR2VEC,
    FeatureType.DOC2VEC,
)
SECTION_ORDER = (
    SectionKind.PROCEDURE_PLUS_FACTS,
    SectionKind.PROCEDURE,
    SectionKind.FACTS,
    SectionKind.CIRCUMSTANCES,
    SectionKind.RELEVANT_LAW,
)

NGRAM_DIMENSION = 2000
EMBEDDING_DIMENSIONS = (100, 200)

PRETRAINED_TYPES = (FeatureType.GLOVE, FeatureType.LAW2VEC)
TRAINED_TYPES = (FeatureType.ECHR2VEC, FeatureType.DOC2VEC)


class FeatureStoreError(Exception):
    pass


def _dim_columns(dim: int) -> tuple[str, ...]:
    return tuple(f"d{i:03d}" for i in range(dim))


class FeatureStore:
    def __init__(
        self,
        judgments: dict[str, ParsedJudgment],
        extra_documents: list[tuple[str, str]] | None = None,
        pretrained: dict[tuple[FeatureType, int], emb.WordEmbedding] | None = None,
        preloaded_doc2vec: dict[int, emb.Doc2VecModel] | None = None,
        word2vec_overrides: dict | None = None,
        doc2vec_overrides: dict | None = None,
        stopwords: frozenset[str] | None = None,
        seed: int = 0,
    ):
        self.judgments = judgments
        self.extra_documents = list(extra_documents or [])  # (doc_id, raw body text)
        self.pretrained = dict(pretrained or {})
        self.word2vec_overrides = dict(word2vec_overrides or {})
        self.doc2vec_overrides = dict(doc2vec_overrides or {})
        self.seed = seed
        self.stopwords = bundled_stopwords() if stopwords is None else stopwords
        self._tokens: dict[tuple[str, SectionKind, bool], TokenSequence] = {}
        self._word_embeddings: dict[tuple[FeatureType, int], emb.WordEmbedding] = {}
        self._doc2vec: dict[int, emb.Doc2VecModel] = dict(preloaded_doc2vec or {})
        self._matrices: dict[tuple, FeatureMatrix] = {}
        self._train_corpus: list[tuple[str, TokenSequence]] | None = None

    def preload_tokens(self, table: dict[str, dict[str, dict[str, list[str]]]]) -> None:
        """Seed the token cache from a features-stage artifact:
        doc_id -> section value -> {"kept"|"removed"} -> token list."""
        from .textprep import TokenSource

        for doc_id, sections in table.items():
            for section_value, variants in sections.items():
                kind = SectionKind(section_value)
                for variant, tokens in variants.items():
                    removed = variant == "removed"
                    self._tokens[(doc_id, kind, removed)] = TokenSequence(
                        tuple(tokens), TokenSource(doc_id, section_value, removed)
                    )

    # -- token access --------------------------------------------------

    def tokens(self, doc_id: str, section: SectionKind, stopwords_removed: bool) -> TokenSequence:
        key = (doc_id, section, stopwords_removed)
        cached = self._tokens.get(key)
        if cached is not None:
            return cached
        if stopwords_removed:
            seq = remove_stopwords(self.tokens(doc_id, section, False), self.stopwords)
        else:
            judgment = self.judgments.get(doc_id)
            if judgment is None:
                raise FeatureStoreError(f"unknown doc_id {doc_id!r}")
            seq = tokenize(normalize(section_text(judgment, section)), doc_id, section.value)
        self._tokens[key] = seq
        return seq

    # -- embedding corpora and models -----------------------------------

    def embedding_corpus(self) -> list[tuple[str, TokenSequence]]:
        """Leakage-safe training text: judgments contribute procedure+facts
        only; non-judgment documents contribute their full body."""
        if self._train_corpus is None:
            docs: list[tuple[str, TokenSequence]] = []
            for doc_id in sorted(self.judgments):
                text = strip_outcome_text(self.judgments[doc_id])
                docs.append((doc_id, tokenize(normalize(text), doc_id)))
            for doc_id, body in self.extra_documents:
                docs.append((doc_id, tokenize(normalize(body), doc_id)))
            self._train_corpus = docs
        return self._train_corpus

    def word_embedding(self, feature_type: FeatureType, dim: int) -> emb.WordEmbedding:
        key = (feature_type, dim)
        if key in self._word_embeddings:
            return self._word_embeddings[key]
        loaded = self.pretrained.get(key)
        if loaded is not None:
            if loaded.dim != dim:
                raise FeatureStoreError(
                    f"{feature_type.value} embedding file has dim {loaded.dim}, expected {dim}"
                )
            self._word_embeddings[key] = loaded
            return loaded
        if feature_type in PRETRAINED_TYPES:
            raise FeatureStoreError(
                f"no pretrained {feature_type.value} embedding of dimension {dim} configured"
            )
        if feature_type != FeatureType.ECHR2VEC:
            raise FeatureStoreError(f"{feature_type.value} is not a word embedding")
        params = emb.EmbeddingParams(dim=dim, seed=self.seed, **self.word2vec_overrides)
        trained = emb.train_word_embedding([seq for _, seq in self.embedding_corpus()], params)
        self._word_embeddings[key] = trained
        return trained

    def doc2vec_model(self, dim: int) -> emb.Doc2VecModel:
        if dim not in self._doc2vec:
            params = emb.doc2vec_params(dim=dim, seed=self.seed, **self.doc2vec_overrides)
            self._doc2vec[dim] = emb.train_doc2vec(self.embedding_corpus(), params)
        return self._doc2vec[dim]

    # -- feature matrices -----------------------------------------------

    def case_matrix(
        self,
        feature_type: FeatureType,
        dim: int,
        section: SectionKind,
        stopwords_removed: bool,
        doc_ids: tuple[str, ...],
    ) -> FeatureMatrix:
        """Embedding-derived features for the given cases (row order = doc_ids).

        Not valid for ngram features, whose vocabulary depends on the
        training subset; use ngram_features instead.
        """
        if feature_type == FeatureType.NGRAM:
            raise FeatureStoreError("ngram matrices are training-set dependent; use ngram_features")
        cache_key = (feature_type, dim, section, stopwords_removed)
        full = self._matrices.get(cache_key)
        if full is None:
            ids = tuple(sorted(self.judgments))
            rows = np.zeros((len(ids), dim), dtype=np.float64)
            if feature_type == FeatureType.DOC2VEC:
                model = self.doc2vec_model(dim)
                for r, doc_id in enumerate(ids):
                    rows[r] = emb.infer_doc_vector(model, self.tokens(doc_id, section, stopwords_removed))
            else:
                embedding = self.word_embedding(feature_type, dim)
                for r, doc_id in enumerate(ids):
                    rows[r] = emb.average_doc_vector(
                        self.tokens(doc_id, section, stopwords_removed), embedding
                    )
            full = FeatureMatrix(ids, _dim_columns(dim), rows)
            self._matrices[cache_key] = full
        index = {doc_id: r for r, doc_id in enumerate(full.row_ids)}
        try:
            take = [index[d] for d in doc_ids]
        except KeyError as exc:
            raise FeatureStoreError(f"unknown doc_id {exc}") from exc
        return FeatureMatrix(tuple(doc_ids), full.column_names, full.values[take])


def ngram_features(
    train_docs: list[TokenSequence],
    train_ids: tuple[str, ...],
    eval_docs: list[TokenSequence],
    eval_ids: tuple[str, ...],
    capacity: int = NGRAM_DIMENSION,
) -> tuple[FeatureMatrix, FeatureMatrix, ngrams.NgramVocabulary]:
    """Vocabulary and scaler from the training documents only, applied to both
    sides; returns min-max scaled (train, eval) matrices plus the vocabulary."""
    vocab = ngrams.build_vocab(train_docs, capacity=capacity)
    train_m = ngrams.count_matrix(train_docs, vocab, train_ids)
    scaler = ngrams.fit_scaler(train_m)
    train_scaled = ngrams.transform(train_m, scaler)
    if eval_ids:
        eval_m = ngrams.count_matrix(eval_docs, vocab, eval_ids)
        eval_scaled = ngrams.transform(eval_m, scaler)
    else:
        eval_scaled = FeatureMatrix((), vocab.column_names(), np.zeros((0, len(vocab))))
    return train_scaled, eval_scaled, vocab
