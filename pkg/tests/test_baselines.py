import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nesattack.baselines import QL_SIGMA, AblationFlags, ql_config, ql_step, run_ablation, run_ql
from nesattack.geometry import NormBudget
from nesattack.models import ConstantModel, MlpModel, init_mlp
from nesattack.nattack import AttackConfig, run_nattack


@pytest.fixture(scope="module")
def victim():
    return MlpModel(init_mlp([16, 32, 4], seed=3))


def _input(victim, seed):
    x = np.random.default_rng(seed).random(16)
    return x, int(victim.predict(x))


def test_ladder_order_and_labels():
    ladder = AblationFlags.ladder()
    assert ladder[0] == AblationFlags()
    assert ladder[-1] == AblationFlags.all_on()
    assert [f.label for f in ladder] == ["ql", "proj", "proj+g", "proj+g+zscore"]


def test_ql_config_uses_own_settings():
    cfg = ql_config(AttackConfig(b=10, sigma=0.2))
    assert cfg.loss == "true_prob" and cfg.antithetic and cfg.sigma == 0.2
    assert ql_config(cfg, QL_SIGMA).sigma == QL_SIGMA


@pytest.mark.parametrize("seed", range(5))
def test_all_flags_reproduce_nattack(victim, seed):
    x, y = _input(victim, seed)
    config = AttackConfig(budget=NormBudget("linf", 0.2), T=15, b=20, sample_seed=seed, early_stop=False)
    seen_a, seen_b = [], []
    a = run_nattack(x, y, victim, config, callback=lambda t, s: seen_a.append(s.candidates))
    b = run_ablation(x, y, victim, config, AblationFlags.all_on(), callback=lambda t, c: seen_b.append(c))
    assert all(np.array_equal(u, v) for u, v in zip(seen_a, seen_b))
    assert np.array_equal(a.final_params.mu, b.final_params.mu)
    assert a.queries == b.queries


@settings(max_examples=20, deadline=None)
@given(st.sampled_from(["l2", "linf"]), st.floats(0.01, 0.4), st.integers(0, 1000))
def test_ql_step_stays_in_feasible_set(victim, p, tau, seed):
    x, y = _input(victim, seed)
    config = AttackConfig(budget=NormBudget(p, tau), b=10, eta=0.05)
    start = np.clip(x + np.random.default_rng(seed + 1).uniform(-1, 1, 16), 0, 1)
    out = ql_step(start, x, y, victim, config, t=seed)
    assert np.all((out >= 0) & (out <= 1))
    d = out - x
    norm = np.linalg.norm(d) if p == "l2" else np.abs(d).max()
    assert norm <= tau


def test_ql_counts_probe_queries(victim):
    x, y = _input(victim, 0)
    config = AttackConfig(budget=NormBudget("linf", 0.0), T=7, b=10)
    out = run_ql(x, y, victim, config)
    assert not out.success
    assert out.queries == 7 * 11


def test_ql_breaks_an_easy_input(victim):
    hits = 0
    for seed in range(10):
        x, y = _input(victim, seed)
        out = run_ql(x, y, victim, AttackConfig(budget=NormBudget("linf", 0.3), T=100, b=20, eta=0.01),
                     sigma=QL_SIGMA)
        if out.success:
            hits += 1
            assert victim.predict(out.adversarial) != y
            assert np.abs(out.adversarial - x).max() <= 0.3
    assert hits >= 5


def test_ablation_constant_model():
    model = ConstantModel([0.7, 0.3], 4)
    x = np.full(4, 0.5)
    for flags in AblationFlags.ladder():
        out = run_ablation(x, 0, model, AttackConfig(T=3, b=4), flags)
        assert not out.success


def test_ablation_is_deterministic(victim):
    x, y = _input(victim, 2)
    config = AttackConfig(budget=NormBudget("linf", 0.2), T=10, b=10, sample_seed=4, early_stop=False)
    for flags in AblationFlags.ladder():
        a = run_ablation(x, y, victim, config, flags)
        b = run_ablation(x, y, victim, config, flags)
        assert a.loss_trace == b.loss_trace
