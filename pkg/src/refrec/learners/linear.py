"""Ridge regression with an unpenalized intercept, solved in closed form."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_L2 = 1e-3


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    l2: float
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]

    def to_json(self) -> dict:
        return {
            "kind": "linear",
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "l2": self.l2,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LinearModel":
        return cls(np.array(obj["weights"], dtype=float), float(obj["intercept"]), float(obj["l2"]),
                   dict(obj.get("meta", {})))


def fit_linear(X, y, l2: float = DEFAULT_L2) -> LinearModel:
    """Minimize ||Xw + b - y||^2 + l2 * ||w||^2.

    Centering removes the intercept from the penalized problem; the rest is a
    least-squares solve on the design stacked with sqrt(l2) * I, which falls
    back to the minimum-norm solution when the system is singular.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n < 1:
        raise ValueError("need at least one training row")
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    if l2 < 0:
        raise ValueError("l2 must be non-negative")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise ValueError("training data must be finite")

    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    if l2 > 0:
        A = np.vstack([Xc, np.sqrt(l2) * np.eye(d)])
        b = np.concatenate([yc, np.zeros(d)])
    else:
        A, b = Xc, yc
    w, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    intercept = float(y_mean - x_mean @ w)
    meta = {"rank": int(rank), "singular": bool(rank < d), "n": n}
    return LinearModel(w, intercept, float(l2), meta)


def predict_linear(model: LinearModel, x) -> float:
    """Raw score w.x + b; use :func:`clamp_f1` only for display."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dimension:
        raise ValueError(f"expected {model.dimension} features, got {x.shape[-1]}")
    return x @ model.weights + model.intercept


def clamp_f1(value):
    return np.clip(value, 0.0, 1.0)
