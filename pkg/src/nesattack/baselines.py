"""Projected-sign NES attack in input space, and the ladder of variants between it and NAttack.

Three switches separate the two attacks:

* ``projection_in_objective``: evaluate the loss at ``proj_S`` of each sample
  instead of projecting the iterate after the step;
* ``use_transform_g``: search over tanh seeds rather than raw pixels;
* ``use_zscore``: replace the signed step on the raw NES estimate with the
  z-scored update used by NAttack.

With every switch on, candidate generation and updates coincide with
:func:`nesattack.nattack.run_nattack` at equal seeds.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .geometry import project_to_S
from .nattack import (
    AttackConfig,
    AttackOutcome,
    DistParams,
    default_init,
    model_objective,
    nes_gradient,
    query_seed,
    sample_noise,
    zscore,
)

_PROBE_STREAM = 2

# bandwidth of the original QL method, in pixel units; opt-in via ``ql_sigma``
QL_SIGMA = 1e-3


@dataclass(frozen=True)
class AblationFlags:
    projection_in_objective: bool = False
    use_transform_g: bool = False
    use_zscore: bool = False

    @classmethod
    def all_on(cls):
        return cls(True, True, True)

    @classmethod
    def ladder(cls):
        """Flags added one at a time, QL first and NAttack last."""
        return [cls(), cls(True), cls(True, True), cls(True, True, True)]

    @property
    def label(self) -> str:
        names = [n for n, on in (("proj", self.projection_in_objective), ("g", self.use_transform_g),
                                 ("zscore", self.use_zscore)) if on]
        return "+".join(names) if names else "ql"


def ql_config(config: AttackConfig, sigma: float | None = None) -> AttackConfig:
    """QL's own settings: probability loss and antithetic sampling.

    The bandwidth mirrors ``config.sigma`` unless ``sigma`` is given.
    ``-F(x')_y`` is the targeted form of the loss; an untargeted attack
    descends on ``F(x')_y`` itself.
    """
    return replace(config, loss="true_prob", antithetic=True, sigma=config.sigma if sigma is None else sigma)


class _Variant:
    def __init__(self, x, y, model, config: AttackConfig, flags: AblationFlags):
        self.x = np.asarray(x, dtype=float)
        self.config = config
        self.flags = flags
        self.seed_map = config.seed_map
        self.objective = model_objective(model, y, config.loss)

    def image(self, point):
        """Search-space point to input space (before any projection)."""
        if self.flags.use_transform_g:
            return self.seed_map.to_input(point)
        return point

    def candidates(self, point, eps):
        raw = self.image(point + self.config.sigma * eps)
        if self.flags.projection_in_objective:
            return project_to_S(self.x, raw, self.config.budget)
        return np.clip(raw, 0.0, 1.0)

    def step(self, point, t):
        cfg = self.config
        eps = sample_noise(cfg, t, point.shape[-1])
        cands = self.candidates(point, eps)
        losses, adversarial = self.objective(cands, query_seed(cfg.sample_seed, t))
        if self.flags.use_zscore:
            point = point - cfg.eta / (cfg.b * cfg.sigma) * (zscore(losses) @ eps)
        else:
            grad = nes_gradient(losses, eps, cfg.sigma, antithetic=cfg.antithetic)
            point = point - cfg.eta * np.sign(grad)
        if not self.flags.projection_in_objective:
            projected = project_to_S(self.x, self.image(point), cfg.budget)
            point = self.seed_map.from_input(projected) if self.flags.use_transform_g else projected
        return point, cands, np.asarray(losses, dtype=float), np.asarray(adversarial)

    def init(self):
        if self.flags.use_transform_g:
            return default_init(self.x, self.config).mu
        return self.x.copy()


def ql_step(x_t, x, y, model, config: AttackConfig, t: int = 0, sigma: float | None = None) -> np.ndarray:
    """``proj_S(x_t - eta * sign(g_hat))`` with an antithetic NES estimate of the
    gradient of the true-class probability."""
    variant = _Variant(x, y, model, ql_config(config, sigma), AblationFlags())
    point, _, _, _ = variant.step(np.asarray(x_t, dtype=float), t)
    return point


def run_ablation(x, y, model, config: AttackConfig, flags: AblationFlags, callback=None,
                 ql_sigma: float | None = None) -> AttackOutcome:
    """Run the variant selected by ``flags``.

    Pixel-space variants (``use_transform_g`` off) search with QL's settings,
    see :func:`ql_config`; seed-space variants use ``config`` as given.
    Variants that evaluate projected samples use the batch as the success
    probe. The others probe the projected iterate once per iteration, so their
    query count is ``(b + 1) * iterations``.
    """
    start = time.perf_counter()
    if not flags.use_transform_g:
        config = ql_config(config, ql_sigma)
    variant = _Variant(x, y, model, config, flags)
    point = variant.init()
    trace = []
    queries = 0
    adversarial = None
    first = None
    t = 0
    for t in range(config.T):
        point, cands, losses, adv = variant.step(point, t)
        queries += config.b
        trace.append(float(np.mean(losses)))
        if flags.projection_in_objective:
            hits = np.flatnonzero(adv)
            found = cands[hits[0]] if hits.size else None
        else:
            probe = project_to_S(variant.x, variant.image(point), config.budget)
            _, probe_adv = variant.objective(probe[None], [int(config.sample_seed), t, _PROBE_STREAM])
            queries += 1
            found = probe if probe_adv[0] else None
        if callback is not None:
            callback(t, cands)
        if first is None and found is not None:
            first = t + 1
            adversarial = found.copy()
            if config.early_stop:
                break
    iterations = t + 1
    final = DistParams(point, config.sigma) if flags.use_transform_g else None
    return AttackOutcome(
        success=first is not None,
        adversarial=adversarial,
        queries=queries,
        first_success_iter=first,
        loss_trace=trace,
        final_params=final,
        iterations=iterations,
        seconds=time.perf_counter() - start,
    )


def run_ql(x, y, model, config: AttackConfig, callback=None, sigma: float | None = None) -> AttackOutcome:
    return run_ablation(x, y, model, config, AblationFlags(), callback=callback, ql_sigma=sigma)
