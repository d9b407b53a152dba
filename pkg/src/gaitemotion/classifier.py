"""One-vs-rest RBF support-vector classifier trained with SMO.

Each binary machine solves the C-SVM dual

    min  1/2 a^T Q a - sum(a)    s.t.  0 <= a_i <= C,  y^T a = 0

with ``Q_ij = y_i y_j K(x_i, x_j)`` by sequential minimal optimization,
choosing the working pair with second-order information. Optimization
stops when the maximal KKT violation drops below ``tol``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateModelError, ModelVersionError, ParseError
from .features import N_FEATURES, NormalizationBounds, fit_normalization, normalize
from .gea import EMOTIONS, Emotion

MODEL_FORMAT = "gaitemotion-svm"
MODEL_VERSION = 1
_TAU = 1e-12


@dataclass(frozen=True)
class TrainingConfig:
    C: float = 1.0
    gamma: float = 1.0 / N_FEATURES
    tol: float = 1e-3
    max_iter: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not (self.C > 0 and self.gamma > 0 and self.tol > 0 and self.max_iter > 0):
            raise ValueError("C, gamma, tol and max_iter must be positive")


@dataclass(frozen=True)
class BinaryMachine:
    """Decision ``f(x) = sum_i coef_i K(sv_i, x) + bias``; ``coef_i = alpha_i y_i``."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    kkt_violation: float = 0.0
    iterations: int = 0


@dataclass(frozen=True)
class SvmModel:
    machines: tuple  # one BinaryMachine per entry of ``classes``
    classes: tuple  # Emotion order
    gamma: float
    C: float
    bounds: NormalizationBounds | None = None


@dataclass
class ConfusionMatrix:
    """Counts indexed ``[predicted, actual]`` over ``EMOTIONS``."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((len(EMOTIONS), len(EMOTIONS)), dtype=np.int64))

    def add(self, predicted: Emotion, actual: Emotion) -> None:
        self.counts[int(predicted), int(actual)] += 1

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def to_csv(self) -> str:
        names = [e.name for e in EMOTIONS]
        lines = ["predicted\\actual," + ",".join(names)]
        for e in EMOTIONS:
            lines.append(e.name + "," + ",".join(str(int(c)) for c in self.counts[int(e)]))
        return "\n".join(lines) + "\n"


def rbf_kernel(x, y, gamma: float) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_kernel_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    return np.exp(-gamma * np.maximum(sq, 0.0))


def solve_smo(K: np.ndarray, y: np.ndarray, C: float, tol: float = 1e-3, max_iter: int = 100_000):
    """Solve the binary dual for a precomputed kernel matrix.

    Returns ``(alpha, bias, kkt_violation, iterations)``.
    """
    n = len(y)
    y = y.astype(np.float64)
    alpha = np.zeros(n)
    G = -np.ones(n)  # gradient Q a - e
    QD = np.diag(K).copy()
    violation = np.inf
    it = 0
    while it < max_iter:
        up = np.where(y > 0, alpha < C, alpha > 0)
        low = np.where(y > 0, alpha > 0, alpha < C)
        score = -y * G
        if not up.any() or not low.any():
            violation = 0.0
            break
        s_up = np.where(up, score, -np.inf)
        i = int(np.argmax(s_up))
        g_max = s_up[i]
        s_low = np.where(low, score, np.inf)
        violation = g_max - float(np.min(s_low))
        if violation < tol:
            break
        b = g_max - score
        cand = low & (b > 0)
        if not cand.any():
            break
        a = QD[i] + QD - 2.0 * K[i]
        a = np.where(a > 0, a, _TAU)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))

        Qi = y[i] * y * K[i]
        Qj = y[j] * y * K[j]
        old_i, old_j = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = QD[i] + QD[j] + 2.0 * Qi[j]
            quad = quad if quad > 0 else _TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            elif alpha[j] > C:
                alpha[j] = C
                alpha[i] = C + diff
        else:
            quad = QD[i] + QD[j] - 2.0 * Qi[j]
            quad = quad if quad > 0 else _TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            elif alpha[j] < 0:
                alpha[j] = 0.0
                alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = total
        G += Qi * (alpha[i] - old_i) + Qj * (alpha[j] - old_j)
        it += 1

    score = -y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = -float(np.mean(score[free]))
    else:
        up = np.where(y > 0, alpha < C, alpha > 0)
        low = np.where(y > 0, alpha > 0, alpha < C)
        hi = np.max(score[up]) if up.any() else 0.0
        lo = np.min(score[low]) if low.any() else 0.0
        rho = -0.5 * (hi + lo)
    return alpha, -rho, float(violation), it


def kkt_violation(K: np.ndarray, y: np.ndarray, alpha: np.ndarray, C: float) -> float:
    """Maximal violating-pair gap of a dual solution."""
    y = y.astype(np.float64)
    G = (y[:, None] * y[None, :] * K) @ alpha - 1.0
    score = -y * G
    up = np.where(y > 0, alpha < C, alpha > 0)
    low = np.where(y > 0, alpha > 0, alpha < C)
    if not up.any() or not low.any():
        return 0.0
    return float(np.max(score[up]) - np.min(score[low]))


def _as_labels(labels) -> np.ndarray:
    return np.array([int(Emotion.parse(e)) for e in labels], dtype=np.int64)


def train(X, labels, config: TrainingConfig = TrainingConfig(), bounds: NormalizationBounds | None = None) -> SvmModel:
    """Fit one binary machine per emotion present in ``labels``.

    ``X`` holds already-normalized feature rows. ``bounds`` is stored on the
    model for later use by ``predict_raw``.
    """
    X = np.asarray(X, dtype=np.float64)
    y_all = _as_labels(labels)
    if X.ndim != 2 or X.shape[0] != len(y_all):
        raise DataError("feature matrix and labels disagree in length")
    classes = tuple(e for e in EMOTIONS if np.any(y_all == int(e)))
    if len(classes) < 2:
        raise DegenerateModelError(f"training needs at least 2 classes, got {[e.name for e in classes]}")
    K = rbf_kernel_matrix(X, X, config.gamma)
    machines = []
    for e in classes:
        y = np.where(y_all == int(e), 1.0, -1.0)
        alpha, bias, viol, it = solve_smo(K, y, config.C, config.tol, config.max_iter)
        sv = alpha > 0
        machines.append(
            BinaryMachine(X[sv].copy(), (alpha[sv] * y[sv]).copy(), float(bias), viol, it)
        )
    return SvmModel(tuple(machines), classes, float(config.gamma), float(config.C), bounds)


def decision_values(model: SvmModel, Z) -> np.ndarray:
    """Per-class decision values for normalized rows, shape ``(n, n_classes)``."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    dim = model.machines[0].support_vectors.shape[1]
    if Z.shape[1] != dim:
        raise DataError(f"expected {dim}-d feature vectors, got {Z.shape[1]}")
    out = np.empty((Z.shape[0], len(model.machines)))
    for k, m in enumerate(model.machines):
        out[:, k] = rbf_kernel_matrix(Z, m.support_vectors, model.gamma) @ m.dual_coef + m.bias
    return out


def predict(model: SvmModel, z):
    """Classify one normalized feature vector.

    Returns ``(emotion, scores)`` with ``scores`` keyed by emotion. Ties
    favor the earlier class.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise DataError("predict takes a single feature vector")
    scores = decision_values(model, z)[0]
    best = int(np.argmax(scores))
    return model.classes[best], {e: float(s) for e, s in zip(model.classes, scores)}


def predict_many(model: SvmModel, Z) -> list:
    scores = decision_values(model, Z)
    return [model.classes[int(k)] for k in np.argmax(scores, axis=1)]


def predict_raw(model: SvmModel, v):
    """Normalize with the model's bounds, then ``predict``."""
    if model.bounds is None:
        raise DataError("model carries no normalization bounds")
    return predict(model, normalize(v, model.bounds))


def stratified_folds(labels, k: int, seed: int) -> list:
    """Assign sample indices to ``k`` folds, dealing each class round-robin after a seeded shuffle."""
    y = _as_labels(labels)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    slot = 0
    for e in EMOTIONS:
        idx = np.flatnonzero(y == int(e))
        rng.shuffle(idx)
        for i in idx:
            folds[slot % k].append(int(i))
            slot += 1
    return [sorted(f) for f in folds]


def cross_validate(X, labels, k: int = 10, config: TrainingConfig = TrainingConfig()):
    """Stratified k-fold CV on raw (unnormalized) features.

    Normalization bounds are fitted on each training split only. Returns
    ``(mean_fold_accuracy, ConfusionMatrix)``.
    """
    if k < 2:
        raise DataError("cross-validation needs k >= 2")
    X = np.asarray(X, dtype=np.float64)
    y = _as_labels(labels)
    if len(y) < k:
        raise DataError(f"cross-validation needs at least k={k} samples, got {len(y)}")
    confusion = ConfusionMatrix()
    accuracies = []
    for test_idx in stratified_folds(y, k, config.seed):
        if not test_idx:
            continue
        mask = np.ones(len(y), dtype=bool)
        mask[test_idx] = False
        bounds = fit_normalization(X[mask])
        model = train(normalize(X[mask], bounds), [EMOTIONS[i] for i in y[mask]], config, bounds)
        pred = predict_many(model, normalize(X[test_idx], bounds))
        hits = 0
        for p, actual in zip(pred, y[test_idx]):
            confusion.add(p, EMOTIONS[actual])
            hits += int(p) == int(actual)
        accuracies.append(hits / len(test_idx))
    return float(np.mean(accuracies)), confusion


# --------------------------------------------------------------------------
# persistence


def dumps_model(model: SvmModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kernel": "rbf",
        "gamma": model.gamma,
        "C": model.C,
        "classes": [e.name for e in model.classes],
        "bounds": None
        if model.bounds is None
        else {"min": model.bounds.lo.tolist(), "max": model.bounds.hi.tolist()},
        "machines": [
            {
                "bias": m.bias,
                "dual_coef": m.dual_coef.tolist(),
                "support_vectors": m.support_vectors.tolist(),
            }
            for m in model.machines
        ],
    }
    return json.dumps(doc, indent=1) + "\n"


def loads_model(text: str) -> SvmModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid model file: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError("not a gaitemotion model file", field="format")
    if doc.get("version") != MODEL_VERSION:
        raise ModelVersionError(f"model version {doc.get('version')!r}, expected {MODEL_VERSION}")
    try:
        bounds = None
        if doc["bounds"] is not None:
            bounds = NormalizationBounds(np.array(doc["bounds"]["min"]), np.array(doc["bounds"]["max"]))
        machines = tuple(
            BinaryMachine(
                np.array(m["support_vectors"], dtype=np.float64).reshape(len(m["dual_coef"]), -1),
                np.array(m["dual_coef"], dtype=np.float64),
                float(m["bias"]),
            )
            for m in doc["machines"]
        )
        classes = tuple(Emotion.parse(c) for c in doc["classes"])
        model = SvmModel(machines, classes, float(doc["gamma"]), float(doc["C"]), bounds)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model file: {exc}") from None
    if len(machines) != len(classes):
        raise ParseError("model has mismatched classes and machines")
    return model


def save_model(model: SvmModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> SvmModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
