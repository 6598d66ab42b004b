"""Change of variables and l_p clipping.

A seed ``z`` is mapped into the input box by ``squash(upsample(z))`` and the
result is pulled into the feasible set around the benign input with
``project_to_S``. All functions accept a single vector of shape ``(d,)`` or a
batch of shape ``(n, d)``; norms are taken along the last axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

L2 = "l2"
LINF = "linf"

UNSQUASH_EPS = 1e-6


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class NormBudget:
    p: str
    tau: float

    def __post_init__(self):
        if self.p not in (L2, LINF):
            raise ValueError(f"unsupported norm {self.p!r}, expected 'l2' or 'linf'")
        # tau == 0 is allowed: it pins the feasible set to the benign input.
        if not self.tau >= 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")


@lru_cache(maxsize=64)
def _interp_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights (corner-aligned) from ``n_in`` to ``n_out`` points."""
    A = np.zeros((n_out, n_in))
    if n_in == 1:
        A[:, 0] = 1.0
        return A
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_in - 2)
    w = pos - lo
    A[np.arange(n_out), lo] = 1.0 - w
    A[np.arange(n_out), lo + 1] += w
    A.setflags(write=False)
    return A


@lru_cache(maxsize=64)
def _left_inverse(n_in: int, n_out: int) -> np.ndarray:
    P = np.linalg.pinv(_interp_matrix(n_in, n_out))
    P.setflags(write=False)
    return P


def _check_shapes(seed_shape, target_shape):
    if len(seed_shape) != 3 or len(target_shape) != 3:
        raise ShapeError(f"shapes must be (height, width, channels), got {seed_shape} and {target_shape}")
    h, w, c = seed_shape
    H, W, C = target_shape
    if min(h, w, c) < 1 or c != C or H < h or W < w:
        raise ShapeError(f"cannot interpolate seed grid {seed_shape} onto {target_shape}")


def upsample(z, seed_shape=None, target_shape=None) -> np.ndarray:
    """Per-channel bilinear interpolation of a seed grid onto the input grid.

    With no shapes (or equal shapes) this is the identity map.
    """
    z = np.asarray(z, dtype=float)
    if seed_shape is None and target_shape is None:
        return z
    seed_shape, target_shape = tuple(seed_shape), tuple(target_shape)
    _check_shapes(seed_shape, target_shape)
    h, w, c = seed_shape
    H, W, _ = target_shape
    if z.shape[-1] != h * w * c:
        raise ShapeError(f"seed of length {z.shape[-1]} does not match grid {seed_shape}")
    if seed_shape == target_shape:
        return z
    grid = z.reshape(-1, h, w, c)
    out = np.einsum("Hh,nhwc,Ww->nHWc", _interp_matrix(h, H), grid, _interp_matrix(w, W))
    return out.reshape(z.shape[:-1] + (H * W * c,))


def downsample(x, seed_shape=None, target_shape=None) -> np.ndarray:
    """Least-squares left inverse of :func:`upsample`: ``downsample(upsample(z)) == z``."""
    x = np.asarray(x, dtype=float)
    if seed_shape is None and target_shape is None:
        return x
    seed_shape, target_shape = tuple(seed_shape), tuple(target_shape)
    _check_shapes(seed_shape, target_shape)
    h, w, c = seed_shape
    H, W, _ = target_shape
    if x.shape[-1] != H * W * c:
        raise ShapeError(f"input of length {x.shape[-1]} does not match grid {target_shape}")
    if seed_shape == target_shape:
        return x
    grid = x.reshape(-1, H, W, c)
    out = np.einsum("hH,nHWc,wW->nhwc", _left_inverse(h, H), grid, _left_inverse(w, W))
    return out.reshape(x.shape[:-1] + (h * w * c,))


def squash(v) -> np.ndarray:
    return 0.5 * (np.tanh(np.asarray(v, dtype=float)) + 1.0)


def unsquash(x, eps: float = UNSQUASH_EPS) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=float), eps, 1.0 - eps)
    return np.arctanh(2.0 * x - 1.0)


def clip_l2(delta, tau: float) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    norm = np.linalg.norm(delta, axis=-1, keepdims=True)
    outside = norm > tau
    scale = np.where(outside, tau / np.where(outside, norm, 1.0), 1.0)
    return delta * scale


def clip_linf(delta, tau: float) -> np.ndarray:
    return np.clip(np.asarray(delta, dtype=float), -tau, tau)


def clip(delta, budget: NormBudget) -> np.ndarray:
    if budget.p == L2:
        return clip_l2(delta, budget.tau)
    return clip_linf(delta, budget.tau)


def project_to_S(x, candidate, budget: NormBudget) -> np.ndarray:
    """``x + clip_p(candidate - x)``, then clamped to the unit box."""
    x = np.asarray(x, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if x.shape[-1] != candidate.shape[-1]:
        raise ShapeError(f"dimension mismatch: {x.shape[-1]} vs {candidate.shape[-1]}")
    out = np.clip(x + clip(candidate - x, budget), 0.0, 1.0)
    return _tighten(x, out, budget)


def _tighten(x, out, budget: NormBudget, max_rounds: int = 8) -> np.ndarray:
    """Undo the last-ulp overshoot of ``x + delta`` so the budget holds as computed.

    For l2 a relative margin of 2^-40 absorbs the differing roundings of
    norm implementations.
    """
    x = np.broadcast_to(x, out.shape)
    if budget.p == L2:
        limit = budget.tau * (1.0 - 2.0 ** -40)
        for k in range(max_rounds):
            norm = perturbation_norm(x, out, L2)
            over = norm > limit
            if not np.any(over):
                break
            factor = limit / np.where(over, norm, 1.0) * (1.0 - 2.0 ** (4 * k - 52))
            out = np.where(over[..., None], x + (out - x) * factor[..., None], out)
        return out
    for _ in range(max_rounds):
        over = np.abs(out - x) > budget.tau
        if not np.any(over):
            break
        out = np.where(over, np.nextafter(out, x), out)
    return out


def perturbation_norm(x, x_adv, p: str) -> np.ndarray:
    d = np.asarray(x_adv, dtype=float) - np.asarray(x, dtype=float)
    if p == L2:
        return np.linalg.norm(d, axis=-1)
    return np.max(np.abs(d), axis=-1)


@dataclass(frozen=True)
class SeedMap:
    """The ``g0`` stage: identity, or bilinear upsampling from a coarser seed grid."""

    seed_shape: tuple | None = None
    input_shape: tuple | None = None

    def __post_init__(self):
        if (self.seed_shape is None) != (self.input_shape is None):
            raise ShapeError("seed_shape and input_shape must be given together")
        if self.seed_shape is not None:
            _check_shapes(tuple(self.seed_shape), tuple(self.input_shape))

    def seed_dim(self, input_dim: int) -> int:
        if self.seed_shape is None:
            return input_dim
        return int(np.prod(self.seed_shape))

    def up(self, z) -> np.ndarray:
        return upsample(z, self.seed_shape, self.input_shape)

    def down(self, v) -> np.ndarray:
        return downsample(v, self.seed_shape, self.input_shape)

    def to_input(self, z) -> np.ndarray:
        """The full seed-to-box transform ``g``."""
        return squash(self.up(z))

    def from_input(self, x) -> np.ndarray:
        return self.down(unsquash(x))
