"""Seeded synthetic datasets living in the unit box."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import upsample


@dataclass
class LabeledDataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    num_classes: int
    image_shape: tuple | None = None

    @property
    def dim(self) -> int:
        return self.X_train.shape[1]

    def split(self, name: str):
        if name == "train":
            return self.X_train, self.y_train
        if name == "test":
            return self.X_test, self.y_test
        raise ValueError(f"unknown split {name!r}")


def _split(X, y, n_train, num_classes, image_shape=None):
    return LabeledDataset(X[:n_train], y[:n_train], X[n_train:], y[n_train:], num_classes, image_shape)


def make_blobs(dim=2, num_classes=2, n_train=1000, n_test=500, spread=0.08, separation=0.3, seed=0):
    """Isotropic Gaussian clusters, centers uniform in ``[0.5 - separation, 0.5 + separation]^dim``."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.5 - separation, 0.5 + separation, size=(num_classes, dim))
    n = n_train + n_test
    y = rng.integers(num_classes, size=n)
    X = np.clip(centers[y] + rng.normal(0.0, spread, size=(n, dim)), 0.0, 1.0)
    return _split(X, y, n_train, num_classes)


def make_moons(n_train=1000, n_test=500, noise=0.05, seed=0):
    """Two interleaved half circles rescaled into the unit square."""
    rng = np.random.default_rng(seed)
    n = n_train + n_test
    y = rng.integers(2, size=n)
    t = rng.uniform(0.0, np.pi, size=n)
    pts = np.where(
        y[:, None] == 0,
        np.stack([np.cos(t), np.sin(t)], axis=1),
        np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1),
    )
    pts = pts + rng.normal(0.0, noise, size=pts.shape)
    X = np.clip((pts + np.array([1.2, 0.8])) / np.array([4.4, 2.6]), 0.0, 1.0)
    return _split(X, y, n_train, 2)


def make_image_blobs(num_classes=10, n_train=3000, n_test=1000, spread=0.2, side=8, seed=0):
    """``side x side`` grayscale "images": smooth class prototypes plus pixel noise.

    Prototypes are random 4x4 patterns bilinearly upsampled, so classes differ
    in low-frequency structure the way natural image classes do.
    """
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(0.15, 0.85, size=(num_classes, 16))
    protos = upsample(coarse, (4, 4, 1), (side, side, 1))
    n = n_train + n_test
    y = rng.integers(num_classes, size=n)
    X = np.clip(protos[y] + rng.normal(0.0, spread, size=(n, side * side)), 0.0, 1.0)
    return _split(X, y, n_train, num_classes, (side, side, 1))


DATASETS = {"blobs": make_blobs, "moons": make_moons, "image_blobs": make_image_blobs}


def make_dataset(name: str, seed: int = 0, **kwargs) -> LabeledDataset:
    if name not in DATASETS:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(DATASETS)}")
    return DATASETS[name](seed=seed, **kwargs)
