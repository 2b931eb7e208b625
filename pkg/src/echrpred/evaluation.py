"""Cross-validated grid search, test-set metrics and weighted reporting.

Fold assignment is stratified and shared across every configuration of a
search so their CV accuracies are comparable. N-gram vocabularies and
scalers are refit inside each fold's training portion (no leakage);
embedding-based matrices are built once per configuration and sliced per
fold, mirroring how the embeddings themselves are trained once on the
leakage-safe corpus. Ties everywhere break toward the canonical config
ordering (feature type, dimension, section, stop-word axis, algorithm),
which also makes search results independent of the order the configuration
space was enumerated in.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import DatasetSplit, Label, LabeledCase
from .features import (
    EMBEDDING_DIMENSIONS,
    FEATURE_TYPE_ORDER,
    NGRAM_DIMENSION,
    SECTION_ORDER,
    FeatureStore,
    FeatureType,
    ngram_features,
)
from .models import (
    AlgorithmId,
    HyperSetting,
    TrainedModel,
    fit,
    fit_heuristic,
    predict,
)
from .ngrams import FeatureMatrix
from .sections import SectionKind


class CVError(Exception):
    pass


class GridSearchError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    article: str
    feature_type: FeatureType
    dimension: int
    section: SectionKind
    stopwords_removed: bool
    hyper: HyperSetting

    def __post_init__(self) -> None:
        if self.feature_type == FeatureType.NGRAM:
            if self.dimension != NGRAM_DIMENSION:
                raise ValueError(f"ngram features use dimension {NGRAM_DIMENSION}")
        elif self.dimension not in EMBEDDING_DIMENSIONS:
            raise ValueError(
                f"embedding features use dimensions {EMBEDDING_DIMENSIONS}, got {self.dimension}"
            )
        if self.section not in SECTION_ORDER:
            raise ValueError(f"section {self.section} is not a feature section")

    def sort_key(self) -> tuple:
        return (
            FEATURE_TYPE_ORDER.index(self.feature_type),
            self.dimension,
            SECTION_ORDER.index(self.section),
            self.stopwords_removed,
            list(AlgorithmId).index(self.hyper.algorithm),
            self.hyper.key(),
        )

    def axes_key(self) -> tuple:
        return (self.feature_type, self.dimension, self.section, self.stopwords_removed)

    def label(self) -> str:
        sw = "stopwords_removed" if self.stopwords_removed else "stopwords_kept"
        return (
            f"{self.feature_type.value}/{self.dimension}/{self.section.value}/{sw}/"
            f"{self.hyper.label()}"
        )

    def to_json(self) -> dict:
        return {
            "article": self.article,
            "feature_type": self.feature_type.value,
            "dimension": self.dimension,
            "section": self.section.value,
            "stopwords": "removed" if self.stopwords_removed else "kept",
            "hyper": self.hyper.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "ExperimentConfig":
        return ExperimentConfig(
            article=obj["article"],
            feature_type=FeatureType(obj["feature_type"]),
            dimension=obj["dimension"],
            section=SectionKind(obj["section"]),
            stopwords_removed=obj["stopwords"] == "removed",
            hyper=HyperSetting.from_json(obj["hyper"]),
        )


@dataclass(frozen=True)
class CVResult:
    config: ExperimentConfig
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float

    def __post_init__(self) -> None:
        if not all(0.0 <= a <= 1.0 for a in self.fold_accuracies):
            raise ValueError("fold accuracies must lie in [0, 1]")
        if abs(self.mean_accuracy - sum(self.fold_accuracies) / len(self.fold_accuracies)) > 1e-12:
            raise ValueError("mean_accuracy does not match fold accuracies")


def kfold(n: int, k: int = 10, seed: int = 0, labels=None) -> list[np.ndarray]:
    """Stratified k folds: disjoint, sizes differ by <= 1, and each class is
    spread so per-fold class counts differ by <= 1 from proportional."""
    if n < k:
        raise ValueError(f"cannot split {n} cases into {k} folds")
    if labels is None:
        labels = [0] * n
    if len(labels) != n:
        raise ValueError("labels length must equal n")
    rng = random.Random(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in sorted({str(v) for v in labels}):
        idx = [i for i in range(n) if str(labels[i]) == cls]
        rng.shuffle(idx)
        for j, i in enumerate(idx):
            folds[(offset + j) % k].append(i)
        offset = (offset + len(idx)) % k
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def label_array(cases) -> np.ndarray:
    """LabeledCase sequence (or Label/int sequence) to a 0/1 array."""
    out = []
    for c in cases:
        if isinstance(c, LabeledCase):
            c = c.label
        if isinstance(c, Label):
            out.append(1 if c == Label.VIOLATION else 0)
        else:
            out.append(int(c))
    return np.asarray(out, dtype=np.int64)


def _fold_accuracies_for_group(
    axes: tuple,
    hypers: list[HyperSetting],
    cases: list[LabeledCase],
    store: FeatureStore,
    folds: list[np.ndarray],
    y: np.ndarray,
) -> tuple[dict[tuple, list[float]], dict[tuple, str]]:
    """Evaluate every hyper-setting of one feature configuration across all
    folds, building the fold features only once."""
    feature_type, dimension, section, stopwords_removed = axes
    ids = tuple(c.doc_id for c in cases)
    accs: dict[tuple, list[float]] = {h.key(): [] for h in hypers}
    failures: dict[tuple, str] = {}

    if feature_type == FeatureType.NGRAM:
        docs = [store.tokens(doc_id, section, stopwords_removed) for doc_id in ids]
        full_matrix = None
    else:
        full_matrix = store.case_matrix(feature_type, dimension, section, stopwords_removed, ids)

    n = len(cases)
    for fold_i, eval_idx in enumerate(folds):
        mask = np.ones(n, dtype=bool)
        mask[eval_idx] = False
        train_idx = np.nonzero(mask)[0]
        if full_matrix is None:
            X_tr, X_ev, _ = ngram_features(
                [docs[i] for i in train_idx],
                tuple(ids[i] for i in train_idx),
                [docs[i] for i in eval_idx],
                tuple(ids[i] for i in eval_idx),
                capacity=dimension,
            )
        else:
            X_tr = full_matrix.values[train_idx]
            X_ev = full_matrix.values[eval_idx]
        y_tr = y[train_idx]
        y_ev = y[eval_idx]
        for hyper in hypers:
            key = hyper.key()
            if key in failures:
                continue
            try:
                model = fit(hyper, X_tr, y_tr)
                pred = predict(model, X_ev)
            except Exception as exc:
                failures[key] = f"fold {fold_i}: {exc}"
                continue
            accs[key].append(float(np.mean(pred == y_ev)))
    return accs, failures


def cv_mean_accuracy(
    config: ExperimentConfig,
    train_cases: list[LabeledCase],
    store: FeatureStore,
    k: int = 10,
    seed: int = 0,
) -> CVResult:
    """10-fold cross-validation accuracy of one configuration."""
    y = label_array(train_cases)
    folds = kfold(len(train_cases), k, seed, [c.label for c in train_cases])
    accs, failures = _fold_accuracies_for_group(
        config.axes_key(), [config.hyper], train_cases, store, folds, y
    )
    key = config.hyper.key()
    if key in failures:
        raise CVError(f"{config.label()}: {failures[key]}")
    fold_accs = tuple(accs[key])
    return CVResult(config, fold_accs, sum(fold_accs) / len(fold_accs))


@dataclass
class GridSearchResult:
    best: ExperimentConfig
    results: list[CVResult]
    failures: dict[str, str]  # config label -> cause


def grid_search(
    article: str,
    config_space: list[ExperimentConfig],
    train_cases: list[LabeledCase],
    store: FeatureStore,
    k: int = 10,
    seed: int = 0,
) -> GridSearchResult:
    """Exhaustive CV over the configuration space; the best configuration is
    the accuracy argmax with ties broken by canonical config order."""
    if not config_space:
        raise GridSearchError("empty configuration space")
    configs = sorted(config_space, key=lambda c: c.sort_key())
    y = label_array(train_cases)
    folds = kfold(len(train_cases), k, seed, [c.label for c in train_cases])

    groups: dict[tuple, list[ExperimentConfig]] = {}
    for cfg in configs:
        if cfg.article != article:
            raise GridSearchError(f"config for article {cfg.article!r} in search for {article!r}")
        groups.setdefault(cfg.axes_key(), []).append(cfg)

    results: list[CVResult] = []
    failures: dict[str, str] = {}
    for axes, members in groups.items():
        try:
            accs, member_failures = _fold_accuracies_for_group(
                axes, [m.hyper for m in members], train_cases, store, folds, y
            )
        except Exception as exc:  # feature construction failed for the group
            for m in members:
                failures[m.label()] = str(exc)
            continue
        for m in members:
            key = m.hyper.key()
            if key in member_failures:
                failures[m.label()] = member_failures[key]
                continue
            fold_accs = tuple(accs[key])
            results.append(CVResult(m, fold_accs, sum(fold_accs) / len(fold_accs)))

    if not results:
        causes = "; ".join(f"{label}: {cause}" for label, cause in sorted(failures.items()))
        raise GridSearchError(f"every configuration failed: {causes}")
    results.sort(key=lambda r: r.config.sort_key())
    best = min(results, key=lambda r: (-r.mean_accuracy, r.config.sort_key())).config
    return GridSearchResult(best, results, failures)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float | None  # null when tp + fp == 0
    recall: float | None  # null when tp + fn == 0

    @staticmethod
    def from_counts(tp: int, fp: int, tn: int, fn: int) -> "Metrics":
        total = tp + fp + tn + fn
        if total == 0:
            raise ValueError("empty evaluation set")
        return Metrics(
            tp=tp,
            fp=fp,
            tn=tn,
            fn=fn,
            accuracy=(tp + tn) / total,
            precision=tp / (tp + fp) if tp + fp else None,
            recall=tp / (tp + fn) if tp + fn else None,
        )

    def to_json(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
        }

    @staticmethod
    def from_json(obj: dict) -> "Metrics":
        return Metrics(
            obj["tp"], obj["fp"], obj["tn"], obj["fn"],
            obj["accuracy"], obj["precision"], obj["recall"],
        )


def evaluate(model: TrainedModel, test_X, test_y) -> Metrics:
    """Confusion counts and metrics with violation as the positive class."""
    y = label_array(test_y)
    pred = predict(model, test_X)
    if len(pred) != len(y):
        raise ValueError("prediction/label length mismatch")
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    return Metrics.from_counts(tp, fp, tn, fn)


def weighted_average(values: dict[str, float | None], weights: dict[str, float]) -> float | None:
    """Sum(v_a * w_a) / Sum(w_a); null values are excluded together with
    their weight; returns None if every value is null."""
    if set(values) != set(weights):
        raise ValueError("values and weights must cover the same articles")
    num = 0.0
    den = 0.0
    for article, value in values.items():
        if value is None:
            continue
        w = weights[article]
        if w <= 0:
            raise ValueError(f"weight for article {article} must be positive")
        num += value * w
        den += w
    return num / den if den else None


# ---------------------------------------------------------------------------
# Report assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArticleReport:
    article: str
    best_config: ExperimentConfig
    cv_mean_accuracy: float
    model: Metrics
    heuristic: Metrics
    test_size: int
    heuristic_reference: tuple[int, int]
    r_target: float

    def to_json(self) -> dict:
        return {
            "article": self.article,
            "best_config": self.best_config.to_json(),
            "cv_mean_accuracy": self.cv_mean_accuracy,
            "model": self.model.to_json(),
            "heuristic": self.heuristic.to_json(),
            "test_size": self.test_size,
            "heuristic_reference": list(self.heuristic_reference),
            "r_target": self.r_target,
        }

    @staticmethod
    def from_json(obj: dict) -> "ArticleReport":
        return ArticleReport(
            article=obj["article"],
            best_config=ExperimentConfig.from_json(obj["best_config"]),
            cv_mean_accuracy=obj["cv_mean_accuracy"],
            model=Metrics.from_json(obj["model"]),
            heuristic=Metrics.from_json(obj["heuristic"]),
            test_size=obj["test_size"],
            heuristic_reference=tuple(obj["heuristic_reference"]),
            r_target=obj["r_target"],
        )


_WEIGHTED_FIELDS = (
    ("model_accuracy", lambda a: a.model.accuracy),
    ("model_precision", lambda a: a.model.precision),
    ("model_recall", lambda a: a.model.recall),
    ("heuristic_accuracy", lambda a: a.heuristic.accuracy),
    ("heuristic_precision", lambda a: a.heuristic.precision),
    ("heuristic_recall", lambda a: a.heuristic.recall),
)


@dataclass(frozen=True)
class MetricsReport:
    articles: tuple[ArticleReport, ...]
    weighted: dict[str, float | None]

    @staticmethod
    def build(articles: list[ArticleReport]) -> "MetricsReport":
        ordered = tuple(sorted(articles, key=lambda a: _article_sort_key(a.article)))
        weights = {a.article: float(a.test_size) for a in ordered}
        weighted = {
            name: weighted_average({a.article: getter(a) for a in ordered}, weights)
            for name, getter in _WEIGHTED_FIELDS
        }
        return MetricsReport(ordered, weighted)

    def to_json(self) -> dict:
        return {
            "articles": [a.to_json() for a in self.articles],
            "weighted": dict(self.weighted),
        }

    @staticmethod
    def from_json(obj: dict) -> "MetricsReport":
        return MetricsReport(
            tuple(ArticleReport.from_json(a) for a in obj["articles"]),
            dict(obj["weighted"]),
        )


def _article_sort_key(article: str) -> tuple:
    return (0, int(article)) if article.isdigit() else (1, article)


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def render_report(report: MetricsReport, out_dir: str) -> dict[str, str]:
    """Emit report.json (machine), report.txt (human) and report.csv (per-
    article model vs heuristic accuracy, plus a weighted-average row)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    csv_path = out / "report.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["article", "model_accuracy", "heuristic_accuracy", "precision", "recall", "test_size"]
        )
        for a in report.articles:
            writer.writerow(
                [
                    a.article,
                    _fmt(a.model.accuracy),
                    _fmt(a.heuristic.accuracy),
                    _fmt(a.model.precision),
                    _fmt(a.model.recall),
                    a.test_size,
                ]
            )
        writer.writerow(
            [
                "weighted_average",
                _fmt(report.weighted["model_accuracy"]),
                _fmt(report.weighted["heuristic_accuracy"]),
                _fmt(report.weighted["model_precision"]),
                _fmt(report.weighted["model_recall"]),
                sum(a.test_size for a in report.articles),
            ]
        )

    txt_path = out / "report.txt"
    lines = [
        f"{'article':>16} {'model_acc':>10} {'heur_acc':>10} {'precision':>10} "
        f"{'recall':>10} {'test_n':>7}  best configuration"
    ]
    for a in report.articles:
        lines.append(
            f"{a.article:>16} {a.model.accuracy:>10.4f} {a.heuristic.accuracy:>10.4f} "
            f"{(_fmt(a.model.precision) or 'n/a'):>10} {(_fmt(a.model.recall) or 'n/a'):>10} "
            f"{a.test_size:>7}  {a.best_config.label()}"
        )
    wa = report.weighted
    lines.append(
        f"{'weighted_average':>16} {wa['model_accuracy']:>10.4f} {wa['heuristic_accuracy']:>10.4f} "
        f"{(_fmt(wa['model_precision']) or 'n/a'):>10} {(_fmt(wa['model_recall']) or 'n/a'):>10} "
        f"{sum(a.test_size for a in report.articles):>7}"
    )
    with open(txt_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    return {"json": str(json_path), "csv": str(csv_path), "txt": str(txt_path)}


# ---------------------------------------------------------------------------
# Per-article orchestration: search, final retrain, test metrics
# ---------------------------------------------------------------------------


def final_fit(
    config: ExperimentConfig,
    split: DatasetSplit,
    store: FeatureStore,
) -> tuple[TrainedModel, FeatureMatrix, FeatureMatrix]:
    """Retrain the chosen configuration on the entire training set and build
    the matching test matrix."""
    train_ids = tuple(c.doc_id for c in split.train)
    test_ids = tuple(c.doc_id for c in split.test)
    if config.feature_type == FeatureType.NGRAM:
        train_docs = [store.tokens(d, config.section, config.stopwords_removed) for d in train_ids]
        test_docs = [store.tokens(d, config.section, config.stopwords_removed) for d in test_ids]
        X_tr, X_te, _ = ngram_features(
            train_docs, train_ids, test_docs, test_ids, capacity=config.dimension
        )
    else:
        X_tr = store.case_matrix(
            config.feature_type, config.dimension, config.section, config.stopwords_removed, train_ids
        )
        X_te = store.case_matrix(
            config.feature_type, config.dimension, config.section, config.stopwords_removed, test_ids
        )
    model = fit(config.hyper, X_tr, label_array(split.train))
    return model, X_tr, X_te


def evaluate_article(
    article: str,
    split: DatasetSplit,
    store: FeatureStore,
    config_space: list[ExperimentConfig],
    heuristic_reference: tuple[int, int],
    k: int = 10,
    seed: int = 0,
) -> tuple[ArticleReport, GridSearchResult, TrainedModel]:
    """Grid search, final retrain on the full training set, and test metrics
    for both the selected model and the majority-class heuristic."""
    search = grid_search(article, config_space, list(split.train), store, k, seed)
    best_result = next(r for r in search.results if r.config == search.best)
    model, _, X_te = final_fit(search.best, split, store)
    y_test = label_array(split.test)
    model_metrics = evaluate(model, X_te, y_test)
    heuristic_metrics = evaluate(fit_heuristic(heuristic_reference), X_te, y_test)
    report = ArticleReport(
        article=article,
        best_config=search.best,
        cv_mean_accuracy=best_result.mean_accuracy,
        model=model_metrics,
        heuristic=heuristic_metrics,
        test_size=len(split.test),
        heuristic_reference=heuristic_reference,
        r_target=split.r_target,
    )
    return report, search, model
