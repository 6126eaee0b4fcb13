"""Linear readout: ridge pseudo-inverse and softmax-gradient training,
evaluation, SVD projection, and shot-budget sweeps.

The only trained component of the reservoir computer.  Scores are
y = [x, 1] @ W with the bias folded into the last row of W; the predicted
class is the argmax (ties toward the lower class index).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NonFiniteLoss, SingularSystem
from .rng import generator

RIDGE_GRID = tuple(10.0 ** k for k in range(-6, 3))  # 1e-6 .. 1e2, 9 points


@dataclass
class ReadoutModel:
    """Trained weights, shape (R+1, C); last row is the bias."""

    w: np.ndarray
    classes: list

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 2 or self.w.shape[1] != len(self.classes):
            raise ValueError("weight shape does not match classes")
        if not np.all(np.isfinite(self.w)):
            raise ValueError("non-finite weights")
        if len(self.classes) < 2:
            raise ValueError("need at least 2 classes")

    def scores(self, x: np.ndarray) -> np.ndarray:
        return design_matrix(x) @ self.w

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.classes)[np.argmax(self.scores(x), axis=1)]


@dataclass
class TrainConfig:
    """Training hyperparameters.

    method: 'pinv', 'softmax', or 'best' (train both, keep the higher
    validation accuracy, mirroring the reported best-of-two).  ridge_eps
    may be a single value or a sweep list selected on a validation split.
    """

    method: str = "best"
    ridge_eps: tuple = RIDGE_GRID
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epochs: int = 2000
    seed: int = 0
    standardize: bool = True
    val_fraction: float = 0.2

    def __post_init__(self):
        if self.method not in ("pinv", "softmax", "best"):
            raise ValueError("method must be pinv|softmax|best")
        eps = self.ridge_eps
        self.ridge_eps = tuple(np.atleast_1d(np.asarray(eps, dtype=float)))
        if any(e <= 0 for e in self.ridge_eps):
            raise ValueError("ridge_eps values must be positive")


def design_matrix(x: np.ndarray) -> np.ndarray:
    """Append the constant-one column."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.hstack([x, np.ones((len(x), 1))])


def one_hot(labels, classes) -> np.ndarray:
    lut = {c: i for i, c in enumerate(classes)}
    y = np.zeros((len(labels), len(classes)))
    for n, lab in enumerate(labels):
        y[n, lut[int(lab)]] = 1.0
    return y


def train_pseudoinverse(x_design: np.ndarray, y_onehot: np.ndarray,
                        eps: float, classes=None) -> ReadoutModel:
    """Ridge solution W = (X^T X + eps I)^-1 X^T Y via Cholesky.

    x_design is the N x (R+1) design matrix with the ones column appended.
    """
    x_design = np.asarray(x_design, dtype=float)
    y_onehot = np.atleast_2d(np.asarray(y_onehot, dtype=float))
    n, rp1 = x_design.shape
    if n < y_onehot.shape[1]:
        raise ValueError("need at least C training rows")
    a = x_design.T @ x_design + eps * np.eye(rp1)
    try:
        w = cho_solve(cho_factor(a), x_design.T @ y_onehot)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"normal equations not factorizable: {exc}") from exc
    return ReadoutModel(w, classes if classes is not None
                        else list(range(y_onehot.shape[1])))


def train_softmax(x_design: np.ndarray, y_onehot: np.ndarray,
                  cfg: TrainConfig, classes=None) -> ReadoutModel:
    """Full-batch minimization of MSE(softmax(XW), Y) with adaptive moments.

    First/second moment accumulators with bias correction at rates
    (beta1, beta2); deterministic under cfg.seed.  Stops early once the
    loss improves by less than 1e-10 for 50 consecutive epochs.
    """
    x = np.asarray(x_design, dtype=float)
    y = np.atleast_2d(np.asarray(y_onehot, dtype=float))
    n, rp1 = x.shape
    c = y.shape[1]
    rng = generator(cfg.seed, stream=0x50f7)
    w = 0.01 * rng.standard_normal((rp1, c))
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    best_loss, stall = np.inf, 0
    for t in range(1, cfg.epochs + 1):
        z = x @ w
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        s = e / e.sum(axis=1, keepdims=True)
        diff = s - y
        loss = float(np.mean(np.sum(diff ** 2, axis=1)))
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"loss diverged at epoch {t}")
        d = 2.0 * diff / n
        dz = s * (d - np.sum(d * s, axis=1, keepdims=True))
        g = x.T @ dz
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1 ** t)
        v_hat = v / (1 - cfg.beta2 ** t)
        w -= cfg.lr * m_hat / (np.sqrt(v_hat) + 1e-8)
        if loss < best_loss - 1e-10:
            best_loss, stall = loss, 0
        else:
            stall += 1
            if stall >= 50:
                break
    return ReadoutModel(w, classes if classes is not None else list(range(c)))


def evaluate(model: ReadoutModel, x: np.ndarray, labels) -> tuple:
    """(accuracy, C x C confusion matrix); confusion[i][j] counts
    true class i predicted as class j."""
    labels = np.asarray(labels, dtype=int)
    pred = model.predict(x)
    c = len(model.classes)
    lut = {cl: i for i, cl in enumerate(model.classes)}
    confusion = np.zeros((c, c), dtype=int)
    for t, p in zip(labels, pred):
        confusion[lut[int(t)], lut[int(p)]] += 1
    accuracy = float(np.trace(confusion)) / len(labels)
    return accuracy, confusion


def svd_project(x: np.ndarray, k: int) -> np.ndarray:
    """Projection of column-centered data onto the top-k right singular
    vectors; output column variances are non-increasing."""
    x = np.asarray(x, dtype=float)
    if len(x) < k:
        raise ValueError("need at least k rows")
    xc = x - x.mean(axis=0)
    u, s, _vt = np.linalg.svd(xc, full_matrices=False)
    return u[:, :k] * s[:k]


# ---------------------------------------------------------------------------
# training pipeline (standardization + hyperparameter selection)
# ---------------------------------------------------------------------------

@dataclass
class ReadoutPipeline:
    """Feature standardization folded together with the trained readout."""

    model: ReadoutModel
    mean: np.ndarray
    scale: np.ndarray
    method: str = "pinv"
    ridge_eps: float = None
    val_accuracy: float = None

    def transform(self, x):
        return (np.atleast_2d(np.asarray(x, dtype=float)) - self.mean) / self.scale

    def predict(self, x):
        return self.model.predict(self.transform(x))

    def evaluate(self, x, labels):
        return evaluate(self.model, self.transform(x), labels)


def train_val_split(n: int, val_fraction: float, seed: int):
    """Disjoint, seed-stable shuffle split of range(n)."""
    order = generator(seed, stream=0x5711).permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    return order[n_val:], order[:n_val]


def fit_readout(features: np.ndarray, labels, cfg: TrainConfig,
                classes=None) -> ReadoutPipeline:
    """Standardize, sweep ridge_eps (and method when 'best') on a
    validation split, then refit the winner on the full training set."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    labels = np.asarray(labels, dtype=int)
    classes = sorted(set(labels.tolist())) if classes is None else list(classes)
    if len(classes) == 1:
        # degenerate single-class data: train against a phantom class that
        # never occurs, so the model always predicts the real one
        classes = [classes[0], classes[0] + 1]
    if cfg.standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale[scale < 1e-12] = 1.0
    else:
        mean = np.zeros(x.shape[1])
        scale = np.ones(x.shape[1])
    xs = (x - mean) / scale
    y = one_hot(labels, classes)

    candidates = []
    if cfg.method in ("pinv", "best"):
        candidates += [("pinv", e) for e in cfg.ridge_eps]
    if cfg.method in ("softmax", "best"):
        candidates += [("softmax", None)]

    def train_one(xd, yd, method, eps):
        if method == "pinv":
            return train_pseudoinverse(xd, yd, eps, classes)
        return train_softmax(xd, yd, cfg, classes)

    if len(candidates) == 1:
        method, eps = candidates[0]
        model = train_one(design_matrix(xs), y, method, eps)
        return ReadoutPipeline(model, mean, scale, method, eps)

    idx_fit, idx_val = train_val_split(len(xs), cfg.val_fraction, cfg.seed)
    xd_fit = design_matrix(xs[idx_fit])
    best = None
    for method, eps in candidates:
        model = train_one(xd_fit, y[idx_fit], method, eps)
        acc, _ = evaluate(model, xs[idx_val], labels[idx_val])
        if best is None or acc > best[0]:
            best = (acc, method, eps)
    val_acc, method, eps = best
    model = train_one(design_matrix(xs), y, method, eps)
    return ReadoutPipeline(model, mean, scale, method, eps, val_acc)


def shots_sweep(feature_source, labels, idx_train, idx_test, budgets,
                cfg: TrainConfig):
    """Accuracy curve over shot budgets.

    feature_source(budget) must return the feature matrix built from
    exactly `budget` fresh shots per example.  Returns a list of
    (budget, accuracy, n_train, n_test) rows, budgets ascending.
    """
    budgets = list(budgets)
    if budgets != sorted(budgets):
        raise ValueError("budgets must be ascending")
    labels = np.asarray(labels, dtype=int)
    rows = []
    for budget in budgets:
        feats = np.asarray(feature_source(budget), dtype=float)
        pipe = fit_readout(feats[idx_train], labels[idx_train], cfg)
        acc, _ = pipe.evaluate(feats[idx_test], labels[idx_test])
        rows.append((int(budget), float(acc), len(idx_train), len(idx_test)))
    return rows


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

def save_model(path, model: ReadoutModel) -> None:
    with open(path, "w") as fh:
        json.dump({
            "classes": [int(c) for c in model.classes],
            "shape": list(model.w.shape),
            "weights": [float(v) for v in model.w.reshape(-1)],  # row-major
        }, fh)


def load_model(path) -> ReadoutModel:
    with open(path) as fh:
        obj = json.load(fh)
    w = np.array(obj["weights"], dtype=float).reshape(obj["shape"])
    return ReadoutModel(w, obj["classes"])
