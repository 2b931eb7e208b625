"""Classifier zoo behind one fit/predict contract.

Every learner is deterministic given (X, y, hyper-setting incl. seed), never
emits NaN scores, and breaks prediction ties toward the violation label
(encoded 1; non-violation is 0). The majority-class heuristic is fitted on a
reference (violation, non-violation) count pair, not on the feature matrix.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.linalg import solve_triangular

from . import _treekernels as tk
from .ngrams import FeatureMatrix

VIOLATION = 1
NONVIOLATION = 0


class AlgorithmId(str, enum.Enum):
    HEURISTIC_MAJORITY = "heuristic_majority"
    SGD_LINEAR = "sgd_linear"
    LINEAR_SVM = "linear_svm"
    DECISION_TREE = "decision_tree"
    RANDOM_FOREST = "random_forest"
    ADABOOST = "adaboost"
    GRADIENT_BOOSTING = "gradient_boosting"
    QDA = "qda"


# grid enumeration order; also the canonical tie-break order in selection
LEARNING_ALGORITHMS = (
    AlgorithmId.SGD_LINEAR,
    AlgorithmId.LINEAR_SVM,
    AlgorithmId.DECISION_TREE,
    AlgorithmId.RANDOM_FOREST,
    AlgorithmId.ADABOOST,
    AlgorithmId.GRADIENT_BOOSTING,
    AlgorithmId.QDA,
)


class FitError(Exception):
    """Degenerate training input or numerically unusable model."""


@dataclass(frozen=True)
class HyperSetting:
    algorithm: AlgorithmId
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def key(self) -> tuple:
        """Stable ordering/identity key."""
        return (self.algorithm.value, tuple(sorted((k, repr(v)) for k, v in self.params.items())), self.seed)

    def label(self) -> str:
        inner = ",".join(f"{k}={v}" for k, v in sorted(self.params.items()))
        return f"{self.algorithm.value}({inner})"

    def to_json(self) -> dict:
        return {"algorithm": self.algorithm.value, "params": dict(self.params), "seed": self.seed}

    @staticmethod
    def from_json(obj: dict) -> "HyperSetting":
        return HyperSetting(AlgorithmId(obj["algorithm"]), dict(obj["params"]), obj["seed"])


def default_hyper_grid(seed: int = 0) -> list[HyperSetting]:
    """The fixed, transparent hyper-parameter grid searched per article."""
    grid: list[HyperSetting] = []
    for lam in (1e-4, 1e-3):
        grid.append(HyperSetting(AlgorithmId.SGD_LINEAR, {"lam": lam, "epochs": 20, "eta0": 0.1}, seed))
    for lam in (1e-4, 1e-3):
        grid.append(HyperSetting(AlgorithmId.LINEAR_SVM, {"lam": lam, "epochs": 20}, seed))
    for depth in (3, 6, None):
        grid.append(
            HyperSetting(AlgorithmId.DECISION_TREE, {"max_depth": depth, "min_samples_leaf": 2}, seed)
        )
    grid.append(
        HyperSetting(
            AlgorithmId.RANDOM_FOREST,
            {"n_trees": 100, "max_depth": None, "max_features": "sqrt", "bootstrap": True},
            seed,
        )
    )
    for rounds in (50, 100):
        grid.append(HyperSetting(AlgorithmId.ADABOOST, {"n_rounds": rounds}, seed))
    grid.append(
        HyperSetting(AlgorithmId.GRADIENT_BOOSTING, {"n_trees": 100, "depth": 3, "shrinkage": 0.1}, seed)
    )
    for gamma in (0.1, 0.5):
        grid.append(HyperSetting(AlgorithmId.QDA, {"gamma": gamma, "eps": 1e-6}, seed))
    return grid


@dataclass
class TrainedModel:
    algorithm: AlgorithmId
    hyper: HyperSetting
    n_features: int
    payload: dict[str, Any]
    column_names: tuple[str, ...] | None = None
    positive_label: int = VIOLATION


def _as_array(X) -> tuple[np.ndarray, tuple[str, ...] | None]:
    if isinstance(X, FeatureMatrix):
        return np.ascontiguousarray(X.values, dtype=np.float64), X.column_names
    arr = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if arr.ndim != 2:
        raise FitError("feature matrix must be 2-D")
    return arr, None


def _check_labels(y) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise FitError("labels must be 1-D")
    if not np.all(np.isin(arr, (0, 1))):
        raise FitError("labels must be 0 (non-violation) or 1 (violation)")
    return arr.astype(np.float64)


_DEPTH_SENTINEL = tk.NO_DEPTH_LIMIT


def _depth(value) -> int:
    return _DEPTH_SENTINEL if value is None else int(value)


def _tree_payload(arrays) -> dict:
    feat, thr, left, right, value = arrays
    return {
        "feature": feat.astype(np.int64),
        "threshold": thr,
        "left": left.astype(np.int64),
        "right": right.astype(np.int64),
        "value": value,
    }


def _tree_eval(X: np.ndarray, tree: dict) -> np.ndarray:
    return tk.tree_predict(
        X, tree["feature"], tree["threshold"], tree["left"], tree["right"], tree["value"]
    )


def fit_heuristic(reference_counts: tuple[int, int], seed: int = 0) -> TrainedModel:
    """Constant predictor of the majority outcome in the reference counts
    (historical violation / non-violation totals); ties predict violation."""
    v, nv = reference_counts
    if v < 0 or nv < 0 or v + nv < 1:
        raise FitError("reference counts must be non-negative and sum to >= 1")
    prediction = VIOLATION if v >= nv else NONVIOLATION
    hyper = HyperSetting(
        AlgorithmId.HEURISTIC_MAJORITY, {"reference_counts": [int(v), int(nv)]}, seed
    )
    payload = {"prediction": prediction, "reference_v": int(v), "reference_nv": int(nv)}
    return TrainedModel(AlgorithmId.HEURISTIC_MAJORITY, hyper, 0, payload)


def fit(hyper: HyperSetting, X, y) -> TrainedModel:
    """Train one model; deterministic in (X, y, hyper)."""
    alg = hyper.algorithm
    if alg == AlgorithmId.HEURISTIC_MAJORITY:
        counts = hyper.params.get("reference_counts")
        if counts is None:
            raise FitError("heuristic_majority needs reference_counts in its hyper-setting")
        return fit_heuristic((int(counts[0]), int(counts[1])), hyper.seed)

    arr, columns = _as_array(X)
    yv = _check_labels(y)
    if arr.shape[0] != yv.shape[0]:
        raise FitError(f"{arr.shape[0]} rows but {yv.shape[0]} labels")
    if arr.shape[1] == 0:
        raise FitError("feature matrix has zero columns")
    if len(np.unique(yv)) < 2:
        raise FitError(f"{alg.value} requires both labels in the training data")

    p = hyper.params
    if alg == AlgorithmId.SGD_LINEAR:
        w, b = tk.sgd_logistic_fit(
            arr, yv, float(p["lam"]), float(p.get("eta0", 0.1)), int(p["epochs"]), hyper.seed
        )
        payload = {"weights": w, "bias": b}
    elif alg == AlgorithmId.LINEAR_SVM:
        ypm = 2.0 * yv - 1.0
        w, b = tk.pegasos_svm_fit(arr, ypm, float(p["lam"]), int(p.get("epochs", 20)), hyper.seed)
        payload = {"weights": w, "bias": b}
    elif alg == AlgorithmId.DECISION_TREE:
        order, vals = tk.presort(arr)
        tree = tk.build_tree_presorted(
            order, vals, yv, np.ones(len(yv)), _depth(p.get("max_depth")), int(p.get("min_samples_leaf", 1))
        )
        payload = {"tree": _tree_payload(tree)}
    elif alg == AlgorithmId.RANDOM_FOREST:
        payload = _fit_forest(arr, yv, hyper)
    elif alg == AlgorithmId.ADABOOST:
        payload = _fit_adaboost(arr, yv, hyper)
    elif alg == AlgorithmId.GRADIENT_BOOSTING:
        payload = _fit_gradient_boosting(arr, yv, hyper)
    elif alg == AlgorithmId.QDA:
        payload = _fit_qda(arr, yv, hyper)
    else:
        raise FitError(f"unknown algorithm {alg}")

    return TrainedModel(alg, hyper, arr.shape[1], payload, columns)


def _fit_forest(arr: np.ndarray, yv: np.ndarray, hyper: HyperSetting) -> dict:
    p = hyper.params
    d = arr.shape[1]
    if p.get("max_features", "sqrt") == "sqrt":
        m = max(1, int(math.floor(math.sqrt(d))))
    else:
        m = d
    trees = []
    for t in range(int(p["n_trees"])):
        tree = tk.build_forest_tree(
            arr,
            yv,
            hyper.seed + t,
            1 if p.get("bootstrap", True) else 0,
            m,
            _depth(p.get("max_depth")),
            int(p.get("min_samples_leaf", 1)),
        )
        trees.append(_tree_payload(tree))
    return {"trees": trees}


def _stump_eval(arr: np.ndarray, stump: dict) -> np.ndarray:
    if stump["feature"] < 0:
        return np.full(arr.shape[0], stump["left"])
    side = arr[:, stump["feature"]] <= stump["threshold"]
    return np.where(side, stump["left"], stump["right"])


def _fit_adaboost(arr: np.ndarray, yv: np.ndarray, hyper: HyperSetting) -> dict:
    n = arr.shape[0]
    order0, vals0 = tk.presort(arr)
    w = np.full(n, 1.0 / n)
    stumps: list[dict] = []
    alphas: list[float] = []
    for _ in range(int(hyper.params["n_rounds"])):
        found, f, thr, lv, rv = tk.weighted_stump(order0, vals0, yv, w)
        stump = {"feature": int(f) if found else -1, "threshold": float(thr),
                 "left": float(lv), "right": float(rv)}
        pred = _stump_eval(arr, stump)
        mistakes = pred != yv
        err = float(w[mistakes].sum())
        if err >= 0.5:
            break
        if err <= 0.0:
            stumps.append(stump)
            alphas.append(math.log((1.0 - 1e-10) / 1e-10))
            break
        alpha = math.log((1.0 - err) / err)
        stumps.append(stump)
        alphas.append(alpha)
        w = w * np.exp(alpha * mistakes)
        w /= w.sum()
    majority = VIOLATION if yv.sum() * 2 >= len(yv) else NONVIOLATION
    return {"stumps": stumps, "alphas": alphas, "fallback": majority}


def _fit_gradient_boosting(arr: np.ndarray, yv: np.ndarray, hyper: HyperSetting) -> dict:
    p = hyper.params
    base_rate = float(yv.mean())
    f0 = math.log(base_rate / (1.0 - base_rate))
    scores = np.full(len(yv), f0)
    order0, vals0 = tk.presort(arr)
    nu = float(p["shrinkage"])
    # a depth beyond log2(n) cannot produce more leaves than samples
    depth = min(int(p["depth"]), int(math.ceil(math.log2(max(2, len(yv))))) + 1)
    trees = []
    for _ in range(int(p["n_trees"])):
        prob = 1.0 / (1.0 + np.exp(-scores))
        grad = yv - prob
        hess = prob * (1.0 - prob)
        tree = _tree_payload(
            tk.build_regression_tree_levelwise(order0, vals0, arr, grad, hess, depth)
        )
        trees.append(tree)
        scores = scores + nu * _tree_eval(arr, tree)
    return {"trees": trees, "f0": f0, "shrinkage": nu}


def _fit_qda(arr: np.ndarray, yv: np.ndarray, hyper: HyperSetting) -> dict:
    """Per-class Gaussians with shrinkage Sigma <- (1-g)S + g diag(S) + eps I.

    For wide matrices (d > class size) the shrunk covariance is kept in
    factored form A + U U^T (A = the diagonal part) and handled through the
    Woodbury identity, which is exact and avoids d x d factorizations.
    """
    gamma = float(hyper.params["gamma"])
    eps = float(hyper.params.get("eps", 1e-6))
    payload: dict[str, Any] = {"means": [], "logdet": [], "logprior": [], "classes": []}
    n = len(yv)
    for cls in (NONVIOLATION, VIOLATION):
        rows = arr[yv == cls]
        n_c = len(rows)
        if n_c < 2:
            raise FitError("qda needs at least 2 samples per class")
        mu = rows.mean(axis=0)
        centered = rows - mu
        var = np.einsum("ij,ij->j", centered, centered) / (n_c - 1)
        payload["means"].append(mu)
        payload["logprior"].append(math.log(n_c / n))
        if arr.shape[1] <= n_c:
            cov = centered.T @ centered / (n_c - 1)
            reg = (1.0 - gamma) * cov + gamma * np.diag(var) + eps * np.eye(arr.shape[1])
            try:
                chol = np.linalg.cholesky(reg)
            except np.linalg.LinAlgError as exc:
                raise FitError(f"qda covariance singular after regularization: {exc}") from exc
            payload["classes"].append({"kind": "dense", "chol": chol})
            payload["logdet"].append(2.0 * float(np.sum(np.log(np.diag(chol)))))
        else:
            # Sigma = A + U U^T with A = gamma*diag(S) + eps*I (always PD)
            a_diag = gamma * var + eps
            u = centered.T * math.sqrt((1.0 - gamma) / (n_c - 1))
            core = np.eye(n_c) + (u / a_diag[:, None]).T @ u
            chol_core = np.linalg.cholesky(core)
            payload["classes"].append({"kind": "woodbury", "a_diag": a_diag, "u": u, "chol_core": chol_core})
            payload["logdet"].append(
                float(np.sum(np.log(a_diag))) + 2.0 * float(np.sum(np.log(np.diag(chol_core))))
            )
    return payload


def _qda_mahalanobis(arr: np.ndarray, mean: np.ndarray, factor: dict) -> np.ndarray:
    diff = arr - mean
    if factor["kind"] == "dense":
        z = solve_triangular(factor["chol"], diff.T, lower=True)
        return np.sum(z * z, axis=0)
    a_diag = factor["a_diag"]
    u = factor["u"]
    da = diff / a_diag
    q = np.einsum("ij,ij->i", diff, da)
    b = da @ u
    z = solve_triangular(factor["chol_core"], b.T, lower=True)
    return q - np.sum(z * z, axis=0)


def predict(model: TrainedModel, X) -> np.ndarray:
    """One 0/1 label per row; refuses matrices that do not match the fit."""
    if model.algorithm == AlgorithmId.HEURISTIC_MAJORITY:
        arr, _ = _as_array(X)
        return np.full(arr.shape[0], model.payload["prediction"], dtype=np.int64)

    arr, columns = _as_array(X)
    if arr.shape[1] != model.n_features:
        raise FitError(
            f"model fitted on {model.n_features} columns, matrix has {arr.shape[1]}"
        )
    if model.column_names is not None and columns is not None and columns != model.column_names:
        raise FitError("feature column names do not match the fitted model")

    alg = model.algorithm
    payload = model.payload
    if alg in (AlgorithmId.SGD_LINEAR, AlgorithmId.LINEAR_SVM):
        scores = arr @ payload["weights"] + payload["bias"]
        return (scores >= 0.0).astype(np.int64)
    if alg == AlgorithmId.DECISION_TREE:
        return _tree_eval(arr, payload["tree"]).astype(np.int64)
    if alg == AlgorithmId.RANDOM_FOREST:
        votes = np.zeros(arr.shape[0])
        for tree in payload["trees"]:
            votes += _tree_eval(arr, tree)
        return (2.0 * votes >= len(payload["trees"])).astype(np.int64)
    if alg == AlgorithmId.ADABOOST:
        if not payload["stumps"]:
            return np.full(arr.shape[0], payload["fallback"], dtype=np.int64)
        score = np.zeros(arr.shape[0])
        for stump, alpha in zip(payload["stumps"], payload["alphas"]):
            score += alpha * (2.0 * _stump_eval(arr, stump) - 1.0)
        return (score >= 0.0).astype(np.int64)
    if alg == AlgorithmId.GRADIENT_BOOSTING:
        score = np.full(arr.shape[0], payload["f0"])
        for tree in payload["trees"]:
            score += payload["shrinkage"] * _tree_eval(arr, tree)
        return (score >= 0.0).astype(np.int64)
    if alg == AlgorithmId.QDA:
        scores = np.empty((arr.shape[0], 2))
        for c in range(2):
            maha = _qda_mahalanobis(arr, payload["means"][c], payload["classes"][c])
            scores[:, c] = payload["logprior"][c] - 0.5 * payload["logdet"][c] - 0.5 * maha
        return (scores[:, VIOLATION] >= scores[:, NONVIOLATION]).astype(np.int64)
    raise FitError(f"unknown algorithm {alg}")


# ---------------------------------------------------------------------------
# Model persistence (self-describing JSON)
# ---------------------------------------------------------------------------


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.asarray(obj["__array__"], dtype=obj["dtype"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def save_model(model: TrainedModel, path: str) -> None:
    doc = {
        "algorithm": model.algorithm.value,
        "hyper": model.hyper.to_json(),
        "n_features": model.n_features,
        "column_names": list(model.column_names) if model.column_names else None,
        "positive_label": model.positive_label,
        "payload": _encode(model.payload),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> TrainedModel:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return TrainedModel(
        algorithm=AlgorithmId(doc["algorithm"]),
        hyper=HyperSetting.from_json(doc["hyper"]),
        n_features=doc["n_features"],
        payload=_decode(doc["payload"]),
        column_names=tuple(doc["column_names"]) if doc["column_names"] else None,
        positive_label=doc["positive_label"],
    )
