"""L2-regularized logistic regression trained by damped Newton or gradient descent."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    l2: float = 1.0
    max_iter: int = 100
    tol: float = 1e-8
    step_rule: str = "newton"  # or "gd"

    def __post_init__(self):
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.step_rule not in ("newton", "gd"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    l2: float
    converged: bool
    iterations: int
    losses: List[float] = field(default_factory=list, compare=False)

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]

    def to_json(self) -> dict:
        return {
            "kind": "logistic",
            "weights": [float(w) for w in self.weights],
            "intercept": float(self.intercept),
            "l2": self.l2,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LogisticModel":
        return cls(np.array(obj["weights"], dtype=float), float(obj["intercept"]), float(obj["l2"]),
                   bool(obj["converged"]), int(obj["iterations"]))


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def penalized_loss(theta: np.ndarray, Xa: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Negative log-likelihood plus (l2/2)||theta||^2; theta = (weights, intercept)."""
    z = Xa @ theta
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * theta @ theta)


def penalized_gradient(theta: np.ndarray, Xa: np.ndarray, y: np.ndarray, l2: float) -> np.ndarray:
    return Xa.T @ (sigmoid(Xa @ theta) - y) + l2 * theta


def fit_logistic(X, y, config: TrainConfig = TrainConfig()) -> LogisticModel:
    """Fit from zero initialization.

    The intercept is penalized together with the weights so a single-class
    label vector still yields a finite model.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n, d = X.shape
    if n < 1:
        raise ValueError("need at least one training row")
    if y.shape[0] != n:
        raise ValueError(f"X has {n} rows but y has {y.shape[0]}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")

    Xa = _augment(X)
    l2 = config.l2
    theta = np.zeros(d + 1)
    loss = penalized_loss(theta, Xa, y, l2)
    losses = [loss]
    converged = False
    iterations = 0
    step = 1.0 / (0.25 * np.linalg.norm(Xa, 2) ** 2 + l2 + 1e-12)
    # grad = Xa^T (p - y) is bounded, and rounded, on the scale of the largest column L1 norm
    gtol = config.tol * max(1.0, float(np.abs(Xa).sum(axis=0).max()))
    for iterations in range(1, config.max_iter + 1):
        grad = penalized_gradient(theta, Xa, y, l2)
        if np.linalg.norm(grad) < gtol:
            converged = True
            iterations -= 1
            break
        if config.step_rule == "newton":
            p = sigmoid(Xa @ theta)
            H = (Xa * (p * (1 - p))[:, None]).T @ Xa + (l2 + 1e-12) * np.eye(d + 1)
            direction = -np.linalg.lstsq(H, grad, rcond=None)[0]
            t = 1.0
        else:
            direction = -grad
            t = step
        # Armijo backtracking keeps the objective non-increasing
        slope = grad @ direction
        while True:
            candidate = theta + t * direction
            new_loss = penalized_loss(candidate, Xa, y, l2)
            if new_loss <= loss + 1e-4 * t * slope or t < 1e-12:
                break
            t *= 0.5
        if new_loss > loss:
            break
        theta, loss = candidate, new_loss
        losses.append(loss)
    else:
        converged = np.linalg.norm(penalized_gradient(theta, Xa, y, l2)) < gtol

    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("logistic fit diverged")
    return LogisticModel(theta[:-1].copy(), float(theta[-1]), float(l2), bool(converged), iterations, losses)


def predict_proba(model: LogisticModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dimension:
        raise ValueError(f"expected {model.dimension} features, got {x.shape[-1]}")
    p = sigmoid(np.atleast_1d(x @ model.weights + model.intercept))
    # keep strictly inside (0, 1) even when the score saturates double precision
    p = np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return p if x.ndim > 1 else p[0]
