"""Word and paragraph vectors: skip-gram negative sampling, distributed-memory
doc2vec, pretrained-file loading and document averaging.

Both trainers are single-threaded numba loops driven by a 64-bit LCG (MMIX
constants) for negative draws, with vectors initialized from a seeded PCG64
stream, so the same (corpus, params) pair always produces bit-identical
models. The learning rate decays linearly from lr_start to lr_end across the
exact number of updates (skip-gram: center/context pairs; doc2vec: center
positions). Negatives are drawn from the unigram distribution raised to 0.75
via a 10^7-slot table and redrawn on collision with the positive target.
No frequent-word subsampling is applied, and the context window is the full
radius (no random shrinking), keeping the update sequence reproducible.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numba import njit

from .textprep import TokenSequence

NEG_TABLE_SIZE = 10_000_000

_LCG_MULT = np.uint64(6364136223846793005)
_LCG_INC = np.uint64(1442695040888963407)


class EmbeddingError(Exception):
    """Empty vocabulary or malformed embedding file."""


@dataclass(frozen=True)
class EmbeddingParams:
    dim: int
    window: int = 5
    min_count: int = 10
    epochs: int = 5
    negatives: int = 5
    lr_start: float = 0.025
    lr_end: float = 0.0001
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1 or self.window < 1 or self.min_count < 1:
            raise ValueError("dim, window and min_count must be >= 1")
        if self.epochs < 1 or self.negatives < 1:
            raise ValueError("epochs and negatives must be >= 1")
        if not self.lr_start > self.lr_end > 0:
            raise ValueError("need lr_start > lr_end > 0")


def doc2vec_params(dim: int, seed: int = 0, **overrides) -> EmbeddingParams:
    """Paragraph-vector defaults: 15-token window, min count 10, 20 epochs."""
    args = {"window": 15, "min_count": 10, "epochs": 20}
    args.update(overrides)
    return EmbeddingParams(dim=dim, seed=seed, **args)


@dataclass
class WordEmbedding:
    dim: int
    vectors: dict[str, np.ndarray]
    params: EmbeddingParams | None = None
    corpus_token_count: int = 0

    def __post_init__(self) -> None:
        for token, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise EmbeddingError(f"token {token!r} has vector of length {vec.shape}")
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"token {token!r} has non-finite components")


# ---------------------------------------------------------------------------
# Training objective (exposed for gradient verification)
# ---------------------------------------------------------------------------


def _log_sigmoid(x: float) -> float:
    return -float(np.logaddexp(0.0, -x))


def _sigmoid(x: float) -> float:
    return float(1.0 / (1.0 + np.exp(-np.clip(x, -500, 500))))


def sgns_loss(center_vec, context_vec, negative_vecs) -> float:
    """Negative sampling loss -[log s(u_ctx.v) + sum log s(-u_neg.v)]."""
    v = np.asarray(center_vec, dtype=np.float64)
    u = np.asarray(context_vec, dtype=np.float64)
    loss = -_log_sigmoid(float(u @ v))
    for neg in negative_vecs:
        loss -= _log_sigmoid(-float(np.asarray(neg, dtype=np.float64) @ v))
    return loss


def sgns_loss_grads(center_vec, context_vec, negative_vecs):
    """Loss plus analytic gradients w.r.t. center, context and each negative."""
    v = np.asarray(center_vec, dtype=np.float64)
    u = np.asarray(context_vec, dtype=np.float64)
    negs = [np.asarray(n, dtype=np.float64) for n in negative_vecs]
    s_pos = _sigmoid(float(u @ v))
    g_center = -(1.0 - s_pos) * u
    g_context = -(1.0 - s_pos) * v
    g_negs = []
    for neg in negs:
        s_neg = _sigmoid(float(neg @ v))
        g_center = g_center + s_neg * neg
        g_negs.append(s_neg * v)
    return sgns_loss(v, u, negs), g_center, g_context, g_negs


# ---------------------------------------------------------------------------
# Vocabulary and sampling table
# ---------------------------------------------------------------------------


def _build_vocab(token_lists: Sequence[Sequence[str]], min_count: int):
    counts: Counter[str] = Counter()
    total = 0
    for tokens in token_lists:
        counts.update(tokens)
        total += len(tokens)
    kept = sorted(
        ((tok, c) for tok, c in counts.items() if c >= min_count),
        key=lambda item: (-item[1], item[0]),
    )
    if not kept:
        raise EmbeddingError(
            f"no token reaches min_count={min_count} (corpus has {total} tokens)"
        )
    vocab = [tok for tok, _ in kept]
    vocab_counts = np.asarray([c for _, c in kept], dtype=np.float64)
    index = {tok: i for i, tok in enumerate(vocab)}
    return vocab, vocab_counts, index, total


def _negative_table(vocab_counts: np.ndarray, size: int = NEG_TABLE_SIZE) -> np.ndarray:
    weights = vocab_counts**0.75
    cum = np.cumsum(weights)
    cum /= cum[-1]
    slots = (np.arange(size, dtype=np.float64) + 0.5) / size
    return np.searchsorted(cum, slots).astype(np.int32)


def _encode_corpus(token_lists, index) -> tuple[np.ndarray, np.ndarray]:
    """Concatenate in-vocabulary token ids; out-of-vocabulary tokens are
    dropped before windowing (contexts close over the gap)."""
    docs = []
    for tokens in token_lists:
        docs.append(np.asarray([index[t] for t in tokens if t in index], dtype=np.int32))
    offsets = np.zeros(len(docs) + 1, dtype=np.int64)
    for i, d in enumerate(docs):
        offsets[i + 1] = offsets[i] + len(d)
    flat = np.concatenate(docs) if docs else np.zeros(0, dtype=np.int32)
    return flat, offsets


def _count_pairs(offsets: np.ndarray, window: int) -> int:
    total = 0
    for i in range(len(offsets) - 1):
        n = int(offsets[i + 1] - offsets[i])
        if n < 2:
            continue
        pos = np.arange(n)
        total += int(np.sum(np.minimum(pos, window) + np.minimum(n - 1 - pos, window)))
    return total


def _init_matrix(rng: np.random.Generator, rows: int, dim: int) -> np.ndarray:
    return (rng.random((rows, dim)) - 0.5) / dim


# ---------------------------------------------------------------------------
# numba training loops
# ---------------------------------------------------------------------------


@njit(cache=True)
def _sgns_kernel(tokens, offsets, w_in, w_out, neg_table, window, k_neg,
                 epochs, lr_start, lr_end, total_updates, seed):
    dim = w_in.shape[1]
    table_size = np.uint64(len(neg_table))
    state = np.uint64(seed)
    for _ in range(3):
        state = state * _LCG_MULT + _LCG_INC
    denom = float(total_updates - 1) if total_updates > 1 else 1.0
    acc = np.zeros(dim, np.float64)
    u = 0
    for _ in range(epochs):
        for di in range(len(offsets) - 1):
            start = offsets[di]
            end = offsets[di + 1]
            for i in range(start, end):
                c = tokens[i]
                j0 = i - window
                if j0 < start:
                    j0 = start
                j1 = i + window
                if j1 > end - 1:
                    j1 = end - 1
                for j in range(j0, j1 + 1):
                    if j == i:
                        continue
                    o = tokens[j]
                    lr = lr_start + (lr_end - lr_start) * (u / denom)
                    u += 1
                    for f in range(dim):
                        acc[f] = 0.0
                    # positive pair
                    dot = 0.0
                    for f in range(dim):
                        dot += w_out[o, f] * w_in[c, f]
                    if dot > 35.0:
                        s = 1.0
                    elif dot < -35.0:
                        s = 0.0
                    else:
                        s = 1.0 / (1.0 + np.exp(-dot))
                    g = (1.0 - s) * lr
                    for f in range(dim):
                        acc[f] += g * w_out[o, f]
                        w_out[o, f] += g * w_in[c, f]
                    # negatives from the unigram^0.75 table, redrawn on
                    # collision with the positive target
                    for _n in range(k_neg):
                        cand = o
                        while cand == o:
                            state = state * _LCG_MULT + _LCG_INC
                            cand = neg_table[np.int64((state >> np.uint64(33)) % table_size)]
                        dot = 0.0
                        for f in range(dim):
                            dot += w_out[cand, f] * w_in[c, f]
                        if dot > 35.0:
                            s = 1.0
                        elif dot < -35.0:
                            s = 0.0
                        else:
                            s = 1.0 / (1.0 + np.exp(-dot))
                        g = -s * lr
                        for f in range(dim):
                            acc[f] += g * w_out[cand, f]
                            w_out[cand, f] += g * w_in[c, f]
                    for f in range(dim):
                        w_in[c, f] += acc[f]
    return u


@njit(cache=True)
def _dm_kernel(tokens, offsets, w_in, w_out, d_vecs, doc_rows, neg_table, window,
               k_neg, epochs, lr_start, lr_end, total_updates, seed, freeze_words):
    """Distributed-memory pass: hidden = mean(doc vector, context word vectors),
    predicting each center word against sampled negatives. With freeze_words
    only the doc vectors learn (used for inference)."""
    dim = w_in.shape[1]
    table_size = np.uint64(len(neg_table))
    state = np.uint64(seed)
    for _ in range(3):
        state = state * _LCG_MULT + _LCG_INC
    denom = float(total_updates - 1) if total_updates > 1 else 1.0
    hidden = np.zeros(dim, np.float64)
    acc = np.zeros(dim, np.float64)
    ctx = np.empty(2 * window, np.int64)
    u = 0
    for _ in range(epochs):
        for di in range(len(offsets) - 1):
            start = offsets[di]
            end = offsets[di + 1]
            drow = doc_rows[di]
            for i in range(start, end):
                c = tokens[i]
                j0 = i - window
                if j0 < start:
                    j0 = start
                j1 = i + window
                if j1 > end - 1:
                    j1 = end - 1
                n_ctx = 0
                for j in range(j0, j1 + 1):
                    if j == i:
                        continue
                    ctx[n_ctx] = tokens[j]
                    n_ctx += 1
                lr = lr_start + (lr_end - lr_start) * (u / denom)
                u += 1
                m = float(n_ctx + 1)
                for f in range(dim):
                    hidden[f] = d_vecs[drow, f]
                for t in range(n_ctx):
                    row = ctx[t]
                    for f in range(dim):
                        hidden[f] += w_in[row, f]
                for f in range(dim):
                    hidden[f] /= m
                    acc[f] = 0.0
                # positive: the center word
                dot = 0.0
                for f in range(dim):
                    dot += w_out[c, f] * hidden[f]
                if dot > 35.0:
                    s = 1.0
                elif dot < -35.0:
                    s = 0.0
                else:
                    s = 1.0 / (1.0 + np.exp(-dot))
                g = (1.0 - s) * lr
                for f in range(dim):
                    acc[f] += g * w_out[c, f]
                if freeze_words == 0:
                    for f in range(dim):
                        w_out[c, f] += g * hidden[f]
                for _n in range(k_neg):
                    cand = c
                    while cand == c:
                        state = state * _LCG_MULT + _LCG_INC
                        cand = neg_table[np.int64((state >> np.uint64(33)) % table_size)]
                    dot = 0.0
                    for f in range(dim):
                        dot += w_out[cand, f] * hidden[f]
                    if dot > 35.0:
                        s = 1.0
                    elif dot < -35.0:
                        s = 0.0
                    else:
                        s = 1.0 / (1.0 + np.exp(-dot))
                    g = -s * lr
                    for f in range(dim):
                        acc[f] += g * w_out[cand, f]
                    if freeze_words == 0:
                        for f in range(dim):
                            w_out[cand, f] += g * hidden[f]
                # the full error vector goes to every contributor
                for f in range(dim):
                    d_vecs[drow, f] += acc[f]
                if freeze_words == 0:
                    for t in range(n_ctx):
                        row = ctx[t]
                        for f in range(dim):
                            w_in[row, f] += acc[f]
    return u


# ---------------------------------------------------------------------------
# Public training / inference
# ---------------------------------------------------------------------------


def train_word_embedding(corpus: Sequence[TokenSequence], params: EmbeddingParams) -> WordEmbedding:
    """Skip-gram with negative sampling over leakage-safe token sequences."""
    if not corpus:
        raise EmbeddingError("corpus must be non-empty")
    token_lists = [seq.tokens for seq in corpus]
    vocab, vocab_counts, index, total = _build_vocab(token_lists, params.min_count)
    table = _negative_table(vocab_counts)
    tokens, offsets = _encode_corpus(token_lists, index)
    rng = np.random.default_rng(params.seed)
    w_in = _init_matrix(rng, len(vocab), params.dim)
    w_out = np.zeros((len(vocab), params.dim), dtype=np.float64)
    total_updates = _count_pairs(offsets, params.window) * params.epochs
    if total_updates:
        _sgns_kernel(
            tokens, offsets, w_in, w_out, table, params.window, params.negatives,
            params.epochs, params.lr_start, params.lr_end, total_updates, params.seed,
        )
    vectors = {tok: w_in[i].copy() for i, tok in enumerate(vocab)}
    return WordEmbedding(params.dim, vectors, params, total)


@dataclass
class Doc2VecModel:
    dim: int
    params: EmbeddingParams
    vocab: tuple[str, ...]
    vocab_counts: np.ndarray
    word_matrix: np.ndarray  # input word vectors, row per vocab entry
    output_weights: np.ndarray
    doc_ids: tuple[str, ...]
    doc_matrix: np.ndarray
    neg_table: np.ndarray
    corpus_token_count: int = 0

    @property
    def word_vectors(self) -> dict[str, np.ndarray]:
        return {tok: self.word_matrix[i] for i, tok in enumerate(self.vocab)}

    @property
    def doc_vectors(self) -> dict[str, np.ndarray]:
        return {doc: self.doc_matrix[i] for i, doc in enumerate(self.doc_ids)}

    def token_index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.vocab)}


def train_doc2vec(
    corpus: Sequence[tuple[str, TokenSequence]], params: EmbeddingParams
) -> Doc2VecModel:
    """Distributed-memory paragraph vectors over (doc_id, tokens) pairs."""
    if not corpus:
        raise EmbeddingError("corpus must be non-empty")
    doc_ids = tuple(doc_id for doc_id, _ in corpus)
    if len(set(doc_ids)) != len(doc_ids):
        raise EmbeddingError("duplicate doc_id in doc2vec corpus")
    token_lists = [seq.tokens for _, seq in corpus]
    vocab, vocab_counts, index, total = _build_vocab(token_lists, params.min_count)
    table = _negative_table(vocab_counts)
    tokens, offsets = _encode_corpus(token_lists, index)
    rng = np.random.default_rng(params.seed)
    w_in = _init_matrix(rng, len(vocab), params.dim)
    d_vecs = _init_matrix(rng, len(doc_ids), params.dim)
    w_out = np.zeros((len(vocab), params.dim), dtype=np.float64)
    doc_rows = np.arange(len(doc_ids), dtype=np.int64)
    total_updates = int(offsets[-1]) * params.epochs  # one update per center position
    if total_updates:
        _dm_kernel(
            tokens, offsets, w_in, w_out, d_vecs, doc_rows, table, params.window,
            params.negatives, params.epochs, params.lr_start, params.lr_end,
            total_updates, params.seed, 0,
        )
    return Doc2VecModel(
        params.dim, params, tuple(vocab), vocab_counts, w_in, w_out, doc_ids, d_vecs, table, total
    )


def infer_doc_vector(
    model: Doc2VecModel,
    doc: TokenSequence,
    epochs: int | None = None,
    seed: int | None = None,
) -> np.ndarray:
    """Descend a fresh paragraph vector against frozen word/output weights."""
    n_epochs = model.params.epochs if epochs is None else epochs
    init_seed = model.params.seed if seed is None else seed
    index = model.token_index()
    ids = np.asarray([index[t] for t in doc.tokens if t in index], dtype=np.int32)
    rng = np.random.default_rng(init_seed)
    dvec = _init_matrix(rng, 1, model.dim)
    if len(ids) == 0:
        return dvec[0].copy()
    offsets = np.asarray([0, len(ids)], dtype=np.int64)
    total_updates = len(ids) * n_epochs
    _dm_kernel(
        ids, offsets, model.word_matrix, model.output_weights, dvec,
        np.zeros(1, dtype=np.int64), model.neg_table, model.params.window,
        model.params.negatives, n_epochs, model.params.lr_start,
        model.params.lr_end, total_updates, init_seed, 1,
    )
    return dvec[0].copy()


def average_doc_vector(doc: TokenSequence, emb: WordEmbedding) -> np.ndarray:
    """Mean of in-vocabulary token vectors (with multiplicity); all-OOV -> zero."""
    total = np.zeros(emb.dim, dtype=np.float64)
    n = 0
    for tok in doc.tokens:
        vec = emb.vectors.get(tok)
        if vec is not None:
            total += vec
            n += 1
    return total / n if n else total


def save_doc2vec(model: Doc2VecModel, path: str) -> None:
    """JSON snapshot; floats survive the round trip exactly (repr precision).
    The negative-sampling table is rebuilt from the vocabulary counts on load."""
    import json
    from dataclasses import asdict

    doc = {
        "dim": model.dim,
        "params": asdict(model.params),
        "vocab": list(model.vocab),
        "vocab_counts": model.vocab_counts.tolist(),
        "word_matrix": model.word_matrix.tolist(),
        "output_weights": model.output_weights.tolist(),
        "doc_ids": list(model.doc_ids),
        "doc_matrix": model.doc_matrix.tolist(),
        "corpus_token_count": model.corpus_token_count,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_doc2vec(path: str) -> Doc2VecModel:
    import json

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    counts = np.asarray(doc["vocab_counts"], dtype=np.float64)
    return Doc2VecModel(
        dim=doc["dim"],
        params=EmbeddingParams(**doc["params"]),
        vocab=tuple(doc["vocab"]),
        vocab_counts=counts,
        word_matrix=np.asarray(doc["word_matrix"], dtype=np.float64),
        output_weights=np.asarray(doc["output_weights"], dtype=np.float64),
        doc_ids=tuple(doc["doc_ids"]),
        doc_matrix=np.asarray(doc["doc_matrix"], dtype=np.float64),
        neg_table=_negative_table(counts),
        corpus_token_count=doc["corpus_token_count"],
    )


# ---------------------------------------------------------------------------
# Text vector file format
# ---------------------------------------------------------------------------


def write_embedding(emb: WordEmbedding, path: str) -> None:
    """word2vec-style text format with a "<vocab_size> <dim>" header line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(emb.vectors)} {emb.dim}\n")
        for token in sorted(emb.vectors):
            comps = " ".join(repr(float(x)) for x in emb.vectors[token])
            fh.write(f"{token} {comps}\n")


def load_pretrained(path: str) -> WordEmbedding:
    """Read a text vector file, with or without the header line."""
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise EmbeddingError(f"{path}: empty embedding file")
        parts = first.split()
        start_line = 2
        pending: list[tuple[int, list[str]]] = []
        if len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
            dim = int(parts[1])
        else:
            pending.append((1, parts))
        for lineno, line in enumerate(fh, start=start_line):
            if line.strip():
                pending.append((lineno, line.split()))
        for lineno, parts in pending:
            if len(parts) < 2:
                raise EmbeddingError(f"{path} line {lineno}: no vector components")
            token = parts[0]
            if dim is None:
                dim = len(parts) - 1
            if len(parts) - 1 != dim:
                raise EmbeddingError(
                    f"{path} line {lineno}: expected {dim} components, got {len(parts) - 1}"
                )
            if token in vectors:
                raise EmbeddingError(f"{path} line {lineno}: duplicate token {token!r}")
            try:
                vec = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise EmbeddingError(f"{path} line {lineno}: {exc}") from exc
            vectors[token] = vec
    if dim is None or not vectors:
        raise EmbeddingError(f"{path}: no vectors found")
    return WordEmbedding(dim, vectors, params=None, corpus_token_count=0)
