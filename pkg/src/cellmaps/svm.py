"""Multiclass linear SVM: one-vs-rest hinge loss trained by per-sample SGD.

Each class c gets an independent binary problem minimizing

    lam/2 * ||w||^2 + mean_i max(0, 1 - y_i (w . x_i + b))

with y_i = +1 for class c else -1 and the bias unregularized. The step size
decays as eta_t = eta0 / (1 + lam * t) over a global per-sample step counter t
starting at 0; epochs reshuffle the data with a seeded stream, so training is
bit-reproducible. Raw margins serve as ranking scores; argmax (lowest class
index wins ties) gives the label.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .rng import SplitMix64, derive_seed
from .splits import GROWTH_PATTERNS, GrowthPattern

STD_EPS = 1e-8


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray  # clamped to >= STD_EPS

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError(f"expected non-empty 2-d feature matrix, got {X.shape}")
        mean = X.mean(axis=0)
        std = np.maximum(X.std(axis=0), STD_EPS)
        return cls(mean, std)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std


@dataclass(frozen=True)
class SvmHyperparams:
    epochs: int = 200
    eta0: float = 0.1
    lam: float = 1e-3

    def __post_init__(self):
        if self.epochs < 0 or self.eta0 <= 0 or self.lam < 0:
            raise ValueError(f"invalid hyperparameters: {self}")


@dataclass
class LinearSvmModel:
    weights: np.ndarray  # (6, n_features)
    biases: np.ndarray  # (6,)
    params: SvmHyperparams
    seed: int
    classes: tuple[GrowthPattern, ...] = GROWTH_PATTERNS
    # Per-class full-data objective after each epoch; diagnostic, not persisted.
    history: tuple[tuple[float, ...], ...] | None = field(default=None, compare=False)


def hinge_objective(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float
) -> float:
    """lam/2 ||w||^2 + mean hinge over the batch; y in {-1, +1}."""
    margins = 1.0 - y * (X @ w + b)
    return float(lam / 2.0 * np.dot(w, w) + np.maximum(margins, 0.0).mean())


def hinge_subgradient(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, lam: float
) -> tuple[np.ndarray, float]:
    """Batch subgradient of hinge_objective; hinge active where 1 - y f > 0."""
    active = (1.0 - y * (X @ w + b)) > 0.0
    g_w = lam * w - (y[active, None] * X[active]).sum(axis=0) / len(y)
    g_b = -float(y[active].sum()) / len(y)
    return g_w, g_b


def _labels_to_signs(labels: list[GrowthPattern], cls: GrowthPattern) -> np.ndarray:
    return np.where(np.array([lab is cls for lab in labels]), 1.0, -1.0)


def _fit_binary(
    X_rows: list[tuple[float, ...]],
    y: np.ndarray,
    params: SvmHyperparams,
    rng: SplitMix64,
    X_mat: np.ndarray,
) -> tuple[np.ndarray, float, tuple[float, ...]]:
    n = len(X_rows)
    d = len(X_rows[0])
    w = [0.0] * d
    b = 0.0
    eta0, lam = params.eta0, params.lam
    order = list(range(n))
    ys = y.tolist()
    t = 0
    history = []
    for _ in range(params.epochs):
        rng.shuffle(order)
        for i in order:
            eta = eta0 / (1.0 + lam * t)
            t += 1
            x = X_rows[i]
            yi = ys[i]
            margin = yi * (sum(wj * xj for wj, xj in zip(w, x)) + b)
            decay = 1.0 - eta * lam
            if margin < 1.0:
                step = eta * yi
                for j in range(d):
                    w[j] = w[j] * decay + step * x[j]
                b += step
            else:
                for j in range(d):
                    w[j] *= decay
        history.append(hinge_objective(np.asarray(w), b, X_mat, y, lam))
    return np.asarray(w, dtype=np.float64), b, tuple(history)


def fit(
    X: np.ndarray,
    labels: list[GrowthPattern],
    params: SvmHyperparams = SvmHyperparams(),
    seed: int = 0,
) -> LinearSvmModel:
    """Train six one-vs-rest hinge classifiers on standardized features.

    Each class trains on its own RNG stream derived from (seed, class index),
    so results are independent of any parallel scheduling of the six problems.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels) or X.shape[0] == 0:
        raise ValueError(f"feature matrix {X.shape} does not match {len(labels)} labels")
    if not np.isfinite(X).all():
        raise DataError("non-finite feature values in training set")
    if len(set(labels)) < 2:
        raise DataError("one-vs-rest training needs at least 2 distinct labels")

    X_rows = [tuple(row) for row in X.tolist()]
    weights = np.zeros((len(GROWTH_PATTERNS), X.shape[1]))
    biases = np.zeros(len(GROWTH_PATTERNS))
    histories = []
    for ci, cls in enumerate(GROWTH_PATTERNS):
        y = _labels_to_signs(labels, cls)
        rng = SplitMix64(derive_seed(seed, ci))
        w, b, hist = _fit_binary(X_rows, y, params, rng, X)
        weights[ci] = w
        biases[ci] = b
        histories.append(hist)
    return LinearSvmModel(weights, biases, params, seed, history=tuple(histories))


def score(model: LinearSvmModel, x: np.ndarray) -> np.ndarray:
    """Six raw margins w_c . x + b_c for one standardized feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.weights.shape[1],):
        raise ValueError(f"expected shape ({model.weights.shape[1]},), got {x.shape}")
    if not np.isfinite(x).all():
        raise DataError("non-finite input to score()")
    return model.weights @ x + model.biases


def score_batch(model: LinearSvmModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise DataError("non-finite input to score_batch()")
    return X @ model.weights.T + model.biases


def predict(model: LinearSvmModel, x: np.ndarray) -> GrowthPattern:
    """Argmax margin; ties resolve to the lowest class index."""
    return model.classes[int(np.argmax(score(model, x)))]


# --- persistence: flat text, exact round-trip via repr/float ------------------

_MODEL_MAGIC = "cellmaps-svm v1"


def save_model(path: str | Path, model: LinearSvmModel, standardizer: Standardizer) -> None:
    lines = [
        _MODEL_MAGIC,
        "classes " + " ".join(c.value for c in model.classes),
        f"epochs {model.params.epochs}",
        f"eta0 {model.params.eta0!r}",
        f"lam {model.params.lam!r}",
        f"seed {model.seed}",
        "mean " + " ".join(repr(float(v)) for v in standardizer.mean),
        "std " + " ".join(repr(float(v)) for v in standardizer.std),
    ]
    for ci, cls in enumerate(model.classes):
        row = " ".join(repr(float(v)) for v in model.weights[ci])
        lines.append(f"weights {cls.value} {row} {float(model.biases[ci])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> tuple[LinearSvmModel, Standardizer]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _MODEL_MAGIC:
        raise DataError(f"{path}: not a {_MODEL_MAGIC} file")
    fields: dict[str, str] = {}
    weight_lines = []
    for line in lines[1:]:
        key, _, rest = line.partition(" ")
        if key == "weights":
            weight_lines.append(rest)
        elif key:
            fields[key] = rest
    classes = tuple(GrowthPattern(v) for v in fields["classes"].split())
    params = SvmHyperparams(
        epochs=int(fields["epochs"]), eta0=float(fields["eta0"]), lam=float(fields["lam"])
    )
    mean = np.array([float(v) for v in fields["mean"].split()])
    std = np.array([float(v) for v in fields["std"].split()])
    weights = np.zeros((len(classes), len(mean)))
    biases = np.zeros(len(classes))
    if len(weight_lines) != len(classes):
        raise DataError(f"{path}: expected {len(classes)} weight rows")
    for line in weight_lines:
        parts = line.split()
        ci = classes.index(GrowthPattern(parts[0]))
        vals = [float(v) for v in parts[1:]]
        weights[ci] = vals[:-1]
        biases[ci] = vals[-1]
    model = LinearSvmModel(weights, biases, params, int(fields["seed"]), classes)
    return model, Standardizer(mean, std)


# --- score CSV: the rank-metric interface shared with any other classifier ----

SCORES_CSV_HEADER = ["tile_id", *(f"score_{c.value}" for c in GROWTH_PATTERNS), "pred_label"]


def write_scores_csv(
    path: str | Path, rows: list[tuple[str, np.ndarray, GrowthPattern]]
) -> None:
    """Rows are (tile_id, six margins in class order, predicted label)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_CSV_HEADER)
        for tile_id, margins, pred in rows:
            writer.writerow([tile_id, *(repr(float(v)) for v in margins), pred.value])


def read_scores_csv(path: str | Path) -> list[tuple[str, np.ndarray, GrowthPattern]]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORES_CSV_HEADER:
            raise DataError(f"{path}: unexpected scores header {header}")
        for row in reader:
            tile_id = row[0]
            margins = np.array([float(v) for v in row[1:-1]])
            rows.append((tile_id, margins, GrowthPattern(row[-1])))
    return rows
