"""Starting points for the search mean.

``init_from_input`` starts at the benign input's own seed. A
``RegressionInitializer`` additionally predicts the seed-space offset to an
adversarial example, learned by ridge regression from earlier successful
attacks.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .geometry import SeedMap
from .models import ModelFormatError
from .nattack import DistParams

RIDGE_LAMBDA = 1e-3
FORMAT_VERSION = 1
MIN_PAIRS = 10


def init_from_input(x, jitter_sigma: float = 0.0, seed=0, sigma: float = 0.1,
                    seed_map: SeedMap | None = None) -> DistParams:
    """``mu0 = g0^-1(artanh(2x - 1))`` plus optional Gaussian jitter."""
    if jitter_sigma < 0:
        raise ValueError(f"jitter_sigma must be non-negative, got {jitter_sigma}")
    seed_map = seed_map or SeedMap()
    mu = seed_map.from_input(x)
    if jitter_sigma > 0:
        mu = mu + jitter_sigma * np.random.default_rng(seed).standard_normal(mu.shape)
    return DistParams(mu, sigma)


class RegressionInitializer:
    """Affine predictor ``x -> offset`` in seed space.

    Any object with ``predict(x)`` returning an offset of the seed dimension
    can stand in for it.
    """

    def __init__(self, weights, intercept, seed_map: SeedMap | None = None, lam: float = RIDGE_LAMBDA):
        self.weights = np.asarray(weights, dtype=float)
        self.intercept = np.asarray(intercept, dtype=float)
        self.seed_map = seed_map or SeedMap()
        self.lam = lam

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.weights + self.intercept

    def init(self, x, sigma: float = 0.1) -> DistParams:
        return DistParams(self.seed_map.from_input(x) + self.predict(x), sigma)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "kind": "ridge_initializer",
            "lambda": self.lam,
            "seed_shape": list(self.seed_map.seed_shape) if self.seed_map.seed_shape else None,
            "input_shape": list(self.seed_map.input_shape) if self.seed_map.input_shape else None,
            "weights": self.weights.tolist(),
            "intercept": self.intercept.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RegressionInitializer":
        if not isinstance(doc, dict):
            raise ModelFormatError("initializer file must hold a JSON object")
        for key in ("version", "weights", "intercept"):
            if key not in doc:
                raise ModelFormatError(f"missing field {key!r}")
        if doc["version"] != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported version {doc['version']} (expected {FORMAT_VERSION})")
        seed_shape, input_shape = doc.get("seed_shape"), doc.get("input_shape")
        seed_map = SeedMap(tuple(seed_shape) if seed_shape else None, tuple(input_shape) if input_shape else None)
        W = np.asarray(doc["weights"], dtype=float)
        c = np.asarray(doc["intercept"], dtype=float)
        if W.ndim != 2 or c.shape != (W.shape[1],):
            raise ModelFormatError(f"field 'intercept' of shape {c.shape} does not fit weights {W.shape}")
        return cls(W, c, seed_map, float(doc.get("lambda", RIDGE_LAMBDA)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "RegressionInitializer":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
        return cls.from_dict(doc)


def regression_targets(X, X_adv, seed_map: SeedMap | None = None) -> np.ndarray:
    seed_map = seed_map or SeedMap()
    return seed_map.from_input(X_adv) - seed_map.from_input(X)


def fit_regression_initializer(pairs, seed_map: SeedMap | None = None,
                               lam: float = RIDGE_LAMBDA) -> RegressionInitializer:
    """Closed-form ridge regression from ``x`` to the seed-space offset of ``x_adv``.

    The intercept is not penalized, so constant offsets are recovered exactly.
    """
    if len(pairs) < MIN_PAIRS:
        raise ValueError(f"need at least {MIN_PAIRS} (x, x_adv) pairs, got {len(pairs)}")
    X = np.array([p[0] for p in pairs], dtype=float)
    X_adv = np.array([p[1] for p in pairs], dtype=float)
    Y = regression_targets(X, X_adv, seed_map)
    x_mean, y_mean = X.mean(axis=0), Y.mean(axis=0)
    Xc, Yc = X - x_mean, Y - y_mean
    gram = Xc.T @ Xc + lam * np.eye(X.shape[1])
    W = np.linalg.solve(gram, Xc.T @ Yc)
    return RegressionInitializer(W, y_mean - x_mean @ W, seed_map, lam)
