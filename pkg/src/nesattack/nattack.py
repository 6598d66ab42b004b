"""Distribution-learning black-box attack.

Learns the mean of an isotropic Gaussian over seeds ``z`` such that
``project_to_S(x, g(z))`` is adversarial, using z-scored NES updates of the
smoothed loss ``J(mu) = E f(proj(g(mu + sigma * eps)))``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import NormBudget, SeedMap, project_to_S
from .loss import LOSSES, is_adversarial

# z-scores are snapped to this dyadic grid so that positive affine transforms
# of the loss give bit-identical updates despite float rounding
ZSCORE_GRID = 2.0 ** -20

_NOISE_STREAM = 0
_QUERY_STREAM = 1


@dataclass
class DistParams:
    mu: np.ndarray
    sigma: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float)
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not np.all(np.isfinite(self.mu)):
            raise ValueError("mu has non-finite entries")


@dataclass
class AttackConfig:
    budget: NormBudget = field(default_factory=lambda: NormBudget("linf", 0.031))
    T: int = 600
    b: int = 300
    eta: float = 0.008
    sigma: float = 0.1
    sample_seed: int = 0
    early_stop: bool = True
    antithetic: bool = False
    loss: str = "cw"
    seed_shape: tuple | None = None
    input_shape: tuple | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.b < 2:
            raise ValueError(f"batch size must be >= 2 for z-scoring, got {self.b}")
        if self.antithetic and self.b % 2:
            raise ValueError("antithetic sampling needs an even batch size")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")

    @property
    def seed_map(self) -> SeedMap:
        return SeedMap(self.seed_shape, self.input_shape)


@dataclass
class BatchStats:
    candidates: np.ndarray
    losses: np.ndarray
    adversarial: np.ndarray
    queries: int

    @property
    def mean_loss(self) -> float:
        return float(np.mean(self.losses))


@dataclass
class AttackOutcome:
    success: bool
    adversarial: np.ndarray | None
    queries: int
    first_success_iter: int | None
    loss_trace: list
    final_params: DistParams | None
    iterations: int
    seconds: float = 0.0

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")


def iteration_rng(sample_seed: int, t: int, stream: int = _NOISE_STREAM):
    return np.random.default_rng([int(sample_seed), int(t), stream])


def query_seed(sample_seed: int, t: int):
    """Seed for the model queries of iteration ``t``; row ``i`` of the batch is sample ``i``."""
    return [int(sample_seed), int(t), _QUERY_STREAM]


def sample_noise(config: AttackConfig, t: int, dim: int) -> np.ndarray:
    rng = iteration_rng(config.sample_seed, t)
    if config.antithetic:
        half = rng.standard_normal((config.b // 2, dim))
        return np.concatenate([half, -half])
    return rng.standard_normal((config.b, dim))


def zscore(losses) -> np.ndarray:
    """``(f - mean) / std`` with the population std; all zeros when the std vanishes."""
    f = np.asarray(losses, dtype=float)
    std = f.std()
    if std == 0 or not np.isfinite(std):
        return np.zeros_like(f)
    return np.round((f - f.mean()) / std / ZSCORE_GRID) * ZSCORE_GRID


def nes_gradient(losses, eps, sigma: float, antithetic: bool = False) -> np.ndarray:
    """Search-gradient estimate ``(1 / (b sigma)) sum_i f_i eps_i``.

    With antithetic batches (second half is the negated first half) the sum is
    formed from paired differences, so an even loss gives exactly zero.
    """
    f = np.asarray(losses, dtype=float)
    eps = np.asarray(eps, dtype=float)
    b = len(f)
    if antithetic:
        half = b // 2
        return ((f[:half] - f[half:]) @ eps[:half]) / (b * sigma)
    return (f @ eps) / (b * sigma)


def model_objective(model, y: int, loss: str = "cw"):
    """Wrap a black-box model as ``objective(candidates, seed) -> (losses, adversarial)``."""
    loss_fn = LOSSES[loss]

    def objective(candidates, seed):
        probs = model.query(candidates, seed)
        return loss_fn(probs, y), is_adversarial(probs, y)

    return objective


def candidate_transform(x, config: AttackConfig):
    """Seeds to feasible inputs: ``project_to_S(x, g(z))``."""
    seed_map = config.seed_map

    def transform(z):
        return project_to_S(x, seed_map.to_input(z), config.budget)

    return transform


def nattack_step(params: DistParams, x, y, model, config: AttackConfig, t: int,
                 objective=None, transform=None):
    """One iteration: sample seeds, evaluate projected candidates, move the mean.

    ``objective`` and ``transform`` default to the model's C&W loss and the
    squash-and-project pipeline; tests swap them for analytic surrogates.
    """
    objective = objective or model_objective(model, y, config.loss)
    transform = transform or candidate_transform(x, config)
    eps = sample_noise(config, t, params.mu.shape[-1])
    candidates = transform(params.mu + params.sigma * eps)
    losses, adversarial = objective(candidates, query_seed(config.sample_seed, t))
    f_hat = zscore(losses)
    mu = params.mu - config.eta / (config.b * params.sigma) * (f_hat @ eps)
    stats = BatchStats(candidates, np.asarray(losses, dtype=float), np.asarray(adversarial), config.b)
    return DistParams(mu, params.sigma), stats


def default_init(x, config: AttackConfig) -> DistParams:
    return DistParams(config.seed_map.from_input(x), config.sigma)


def run_nattack(x, y, model, config: AttackConfig, init: DistParams | None = None,
                objective=None, transform=None, callback=None) -> AttackOutcome:
    """Run up to ``config.T`` iterations from ``init``.

    With ``early_stop`` the run halts at the first iteration whose batch holds
    an adversarial candidate, and that candidate is returned; the batch doubles
    as the success probe so ``queries == b * iterations``.
    """
    start = time.perf_counter()
    x = np.asarray(x, dtype=float)
    params = init if init is not None else default_init(x, config)
    objective = objective or model_objective(model, y, config.loss)
    transform = transform or candidate_transform(x, config)
    trace = []
    adversarial = None
    first = None
    t = 0
    for t in range(config.T):
        params, stats = nattack_step(params, x, y, model, config, t, objective, transform)
        trace.append(stats.mean_loss)
        if callback is not None:
            callback(t, stats)
        hits = np.flatnonzero(stats.adversarial)
        if first is None and hits.size:
            first = t + 1
            adversarial = stats.candidates[hits[0]].copy()
            if config.early_stop:
                break
    iterations = t + 1
    return AttackOutcome(
        success=first is not None,
        adversarial=adversarial,
        queries=config.b * iterations,
        first_success_iter=first,
        loss_trace=trace,
        final_params=params,
        iterations=iterations,
        seconds=time.perf_counter() - start,
    )


def smoothed_objective(params: DistParams, x, y, model, budget: NormBudget, n_samples: int,
                       seed: int = 0, seed_map: SeedMap | None = None, objective=None,
                       transform=None) -> float:
    """Monte-Carlo estimate of ``E f(proj(g(z)))`` for ``z ~ N(mu, sigma^2 I)``."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    seed_map = seed_map or SeedMap()
    x = np.asarray(x, dtype=float)
    if transform is None:
        def transform(z):
            return project_to_S(x, seed_map.to_input(z), budget)
    if objective is None:
        objective = model_objective(model, y)
    rng = np.random.default_rng([int(seed), _NOISE_STREAM])
    z = params.mu + params.sigma * rng.standard_normal((n_samples, params.mu.shape[-1]))
    losses, _ = objective(transform(z), [int(seed), _QUERY_STREAM])
    return float(np.mean(losses))
