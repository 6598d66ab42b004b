"""Attack losses over softmax outputs.

Every function takes probabilities of shape ``(C,)`` or ``(n, C)`` and a true
label, and returns a scalar or an ``(n,)`` array accordingly.
"""
from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12


def _check_label(probs: np.ndarray, label: int):
    n_classes = probs.shape[-1]
    if not 0 <= label < n_classes:
        raise IndexError(f"label {label} out of range for {n_classes} classes")


def _out(values: np.ndarray, probs: np.ndarray):
    return float(values) if probs.ndim == 1 else values


def cw_loss(probs, true_label: int):
    """Hinge on the log-probability margin of the true class over the best other class."""
    probs = np.asarray(probs, dtype=float)
    _check_label(probs, true_label)
    logp = np.log(np.maximum(probs, PROB_FLOOR))
    others = np.delete(logp, true_label, axis=-1)
    margin = logp[..., true_label] - others.max(axis=-1)
    return _out(np.maximum(margin, 0.0), probs)


def neg_prob_loss(probs, true_label: int):
    probs = np.asarray(probs, dtype=float)
    _check_label(probs, true_label)
    return _out(-probs[..., true_label], probs)


def true_prob_loss(probs, true_label: int):
    """``F(x')_y``; descending it is the untargeted use of :func:`neg_prob_loss`."""
    probs = np.asarray(probs, dtype=float)
    _check_label(probs, true_label)
    return _out(probs[..., true_label], probs)


def is_adversarial(probs, true_label: int):
    """True where the predicted class (argmax, lowest index on ties) differs from the label."""
    probs = np.asarray(probs, dtype=float)
    _check_label(probs, true_label)
    flags = np.argmax(probs, axis=-1) != true_label
    return bool(flags) if probs.ndim == 1 else flags


LOSSES = {"cw": cw_loss, "neg_prob": neg_prob_loss, "true_prob": true_prob_loss}
