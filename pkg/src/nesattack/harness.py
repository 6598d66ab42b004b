"""Benchmarks, success curves, query efficiency and transfer matrices."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .baselines import AblationFlags, run_ablation, run_ql
from .datasets import LabeledDataset
from .geometry import NormBudget, project_to_S
from .models import MlpModel, train_mlp, wrap_defense
from .nattack import AttackConfig, run_nattack

log = logging.getLogger(__name__)

# Desk-scale defaults: 8x8 image blobs, linf budget calibrated so the vanilla
# victim is >= 95% attackable (CIFAR's 0.031 is far below this data's spread).
DESK_TAU_LINF = 0.15
DESK_TAU_L2 = 0.8
DESK_T = 200
DESK_B = 100

DESK_WIDTHS = [64, 64, 10]
DESK_LIGHT_WIDTHS = [64, 32, 10]
DESK_EPOCHS = 30
DESK_LR = 0.05
DESK_LEVELS = 8
DESK_NOISE = 0.1

EVAL_DRAWS = 16
CSV_COLUMNS = ["input_id", "success", "queries", "first_success_iter", "final_loss"]

ATTACKS = ("nattack", "ql", "ablation")


class ProtocolError(RuntimeError):
    pass


def derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def canonical_probs(model, x, eval_seed: int = 0, draws: int = EVAL_DRAWS) -> np.ndarray:
    """Class probabilities used for bookkeeping outside an attack.

    Deterministic models are queried once. Randomized models are averaged over
    ``draws`` realizations; the point is replicated within a single batch so
    the result does not depend on where it sat in some other batch.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return np.stack([canonical_probs(model, row, eval_seed, draws) for row in x])
    if not model.stochastic:
        return model.query(x, [eval_seed])
    return model.query(np.tile(x, (draws, 1)), [eval_seed]).mean(axis=0)


def canonical_predict(model, x, eval_seed: int = 0, draws: int = EVAL_DRAWS):
    return np.argmax(canonical_probs(model, x, eval_seed, draws), axis=-1)


@dataclass
class OutcomeRecord:
    input_id: int
    label: int
    success: bool
    queries: int
    first_success_iter: int | None
    final_loss: float
    iterations: int
    seconds: float = 0.0
    adversarial: list | None = None


@dataclass
class BenchmarkReport:
    attack: str
    outcomes: list
    config: dict
    T: int
    seconds: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return len(self.outcomes)

    @property
    def success_rate(self) -> float:
        if not self.outcomes:
            return 0.0
        return sum(o.success for o in self.outcomes) / len(self.outcomes)

    @property
    def total_queries(self) -> int:
        return sum(o.queries for o in self.outcomes)

    def curve(self) -> np.ndarray:
        """Fraction of inputs broken within ``t`` iterations, ``t = 1..T``."""
        n = max(len(self.outcomes), 1)
        counts = np.zeros(self.T + 1)
        for o in self.outcomes:
            if o.success:
                counts[o.first_success_iter] += 1
        return np.cumsum(counts)[1:] / n

    def successful_queries(self) -> np.ndarray:
        return np.array(sorted(o.queries for o in self.outcomes if o.success), dtype=float)

    def query_percentiles(self, q=(10, 50, 90)) -> dict:
        qs = self.successful_queries()
        if qs.size == 0:
            return {int(p): None for p in q}
        return {int(p): float(np.percentile(qs, p)) for p in q}

    def mean_queries_per_success(self) -> float | None:
        qs = self.successful_queries()
        return float(qs.mean()) if qs.size else None

    def summary(self) -> dict:
        return {
            "attack": self.attack,
            "inputs": self.n_inputs,
            "success_rate": self.success_rate,
            "total_queries": self.total_queries,
            "mean_queries_per_success": self.mean_queries_per_success(),
            "query_percentiles": self.query_percentiles(),
        }

    def to_dict(self, include_timing: bool = False) -> dict:
        outcomes = []
        for o in self.outcomes:
            d = asdict(o)
            if not include_timing:
                d.pop("seconds")
            outcomes.append(d)
        doc = {
            "attack": self.attack,
            "T": self.T,
            "config": self.config,
            "notes": self.notes,
            "summary": self.summary(),
            "curve": self.curve().tolist(),
            "outcomes": outcomes,
        }
        if include_timing:
            doc["seconds"] = self.seconds
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "BenchmarkReport":
        outcomes = [OutcomeRecord(**o) for o in doc["outcomes"]]
        return cls(doc["attack"], outcomes, doc["config"], doc["T"], doc.get("seconds", 0.0),
                   list(doc.get("notes", [])))


def config_echo(config: AttackConfig) -> dict:
    d = asdict(config)
    d["budget"] = {"p": config.budget.p, "tau": config.budget.tau}
    for key in ("seed_shape", "input_shape"):
        if d[key] is not None:
            d[key] = list(d[key])
    return d


def config_from_echo(doc: dict) -> AttackConfig:
    """Inverse of :func:`config_echo`; benchmark-level keys such as ``master_seed`` are ignored."""
    names = {f.name for f in fields(AttackConfig)}
    doc = {k: v for k, v in doc.items() if k in names}
    doc["budget"] = NormBudget(**doc["budget"])
    for key in ("seed_shape", "input_shape"):
        if doc.get(key) is not None:
            doc[key] = tuple(doc[key])
    return AttackConfig(**doc)


def run_attack(attack: str, x, y, model, config: AttackConfig, flags: AblationFlags | None = None,
               initializer=None, ql_sigma: float | None = None):
    if attack == "nattack":
        init = initializer.init(x, config.sigma) if initializer is not None else None
        return run_nattack(x, y, model, config, init=init)
    if attack == "ql":
        return run_ql(x, y, model, config, sigma=ql_sigma)
    if attack == "ablation":
        return run_ablation(x, y, model, config, flags or AblationFlags.all_on(), ql_sigma=ql_sigma)
    raise ValueError(f"unknown attack {attack!r}; choose from {ATTACKS}")


def _attack_job(job):
    attack, input_id, x, y, model, config, flags, initializer, ql_sigma = job
    out = run_attack(attack, x, y, model, config, flags, initializer, ql_sigma)
    return OutcomeRecord(
        input_id=int(input_id),
        label=int(y),
        success=bool(out.success),
        queries=int(out.queries),
        first_success_iter=out.first_success_iter,
        final_loss=float(out.final_loss),
        iterations=int(out.iterations),
        seconds=out.seconds,
        adversarial=out.adversarial.tolist() if out.adversarial is not None else None,
    )


def _map(fn, jobs, workers: int):
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def correctly_classified(model, X, y, eval_seed: int = 0) -> np.ndarray:
    """Indices of inputs the model gets right."""
    pred = canonical_predict(model, X, eval_seed)
    return np.flatnonzero(pred == np.asarray(y))


def run_benchmark(model, X, y, attack: str = "nattack", config: AttackConfig | None = None,
                  master_seed: int = 0, max_inputs: int | None = None, workers: int = 1,
                  flags: AblationFlags | None = None, initializer=None,
                  ql_sigma: float | None = None) -> BenchmarkReport:
    """Attack every correctly classified input (up to ``max_inputs``) and aggregate.

    Input ``i`` is attacked with ``sample_seed = derive_seed(master_seed, i)``,
    so results do not depend on the worker count or scheduling. ``ql_sigma``
    overrides the pixel-space bandwidth of QL and the pixel-space ablation
    variants, which otherwise mirror ``config.sigma``.
    """
    config = config or AttackConfig(budget=NormBudget("linf", DESK_TAU_LINF), T=DESK_T, b=DESK_B)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(X) == 0:
        raise ProtocolError("empty input set")
    keep = correctly_classified(model, X, y, eval_seed=master_seed)
    if keep.size == 0:
        raise ProtocolError("no correctly classified inputs to attack")
    labels_left = np.unique(y[keep])
    if len(labels_left) < 2 and len(np.unique(y)) > 1 and len(keep) < len(y) // 2:
        raise ProtocolError("victim only classifies a single class correctly; it ignores its input")
    if max_inputs is not None:
        keep = keep[:max_inputs]
    start = time.perf_counter()
    jobs = [
        (attack, i, X[i], y[i], model, replace(config, sample_seed=derive_seed(master_seed, i)), flags, initializer,
         ql_sigma)
        for i in keep
    ]
    outcomes = _map(_attack_job, jobs, workers)
    echo = config_echo(config)
    echo["master_seed"] = master_seed
    if flags is not None:
        echo["flags"] = asdict(flags)
    if ql_sigma is not None:
        echo["ql_sigma"] = ql_sigma
    report = BenchmarkReport(attack, outcomes, echo, config.T, time.perf_counter() - start)
    log.info("%s: %d inputs, success %.3f", attack, report.n_inputs, report.success_rate)
    return report


def query_efficiency(report: BenchmarkReport, levels=None) -> list:
    """``(success_level, mean_queries)`` pairs: the mean query count over the
    fastest successful inputs needed to reach each success-rate level."""
    qs = report.successful_queries()
    n = report.n_inputs
    if levels is None:
        levels = np.arange(1, qs.size + 1) / max(n, 1)
    pairs = []
    for level in levels:
        k = math.ceil(level * n - 1e-9)
        if k < 1 or k > qs.size:
            continue
        pairs.append((float(level), float(qs[:k].mean())))
    return pairs


def sweep_sigma(model, X, y, sigmas, config: AttackConfig, master_seed: int = 0,
                max_inputs: int | None = None, workers: int = 1):
    """Success rate per bandwidth at a fixed query budget; returns ``(best_sigma, {sigma: rate})``."""
    rates = {}
    for s in sigmas:
        rep = run_benchmark(model, X, y, "nattack", replace(config, sigma=float(s)), master_seed,
                            max_inputs, workers)
        rates[float(s)] = rep.success_rate
    best = max(rates, key=lambda s: (rates[s], -s))
    return best, rates


# --- transfer -------------------------------------------------------------

def desk_victim(data: LabeledDataset, seed: int = 0, widths=None) -> MlpModel:
    widths = list(widths or DESK_WIDTHS)
    widths[0], widths[-1] = data.dim, data.num_classes
    return MlpModel(train_mlp(data.X_train, data.y_train, widths, DESK_EPOCHS, DESK_LR, seed=seed))


def desk_zoo(data: LabeledDataset, seed: int = 0) -> dict:
    """Two vanilla networks (a light one and a wider one) and the three
    defenses, all wrapped around the wider network."""
    light = desk_victim(data, derive_seed(seed, 1), DESK_LIGHT_WIDTHS)
    base = desk_victim(data, derive_seed(seed, 2))
    return {
        "vanilla-1": light,
        "vanilla-2": base,
        "quantize": wrap_defense(base, "quantize", levels=DESK_LEVELS),
        "sap": wrap_defense(base, "sap"),
        "input_noise": wrap_defense(base, "input_noise", amplitude=DESK_NOISE),
    }


@dataclass
class PoolEntry:
    input_id: int
    x: np.ndarray
    label: int
    adversarial: np.ndarray


def _harvest(model, x, y, outcome, config: AttackConfig, eval_seed: int, resample: int, rng_seed):
    """First candidate misclassified under canonical evaluation: the attack's own
    adversarial, else samples drawn from the learned distribution."""
    if outcome.success and canonical_predict(model, outcome.adversarial, eval_seed) != y:
        return outcome.adversarial
    params = outcome.final_params
    if params is None or resample <= 0:
        return None
    rng = np.random.default_rng(rng_seed)
    z = params.mu + params.sigma * rng.standard_normal((resample, params.mu.shape[-1]))
    cands = project_to_S(x, config.seed_map.to_input(z), config.budget)
    for c in cands:
        if canonical_predict(model, c, eval_seed) != y:
            return c
    return None


def build_pool(model, X, y, config: AttackConfig, count: int = 200, master_seed: int = 0,
               resample: int = 64) -> tuple:
    """Adversarial examples of ``count`` inputs the model classifies correctly and
    misclassifies after the attack. Returns ``(entries, warnings)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    cfg = replace(config, early_stop=not model.stochastic)
    entries = []
    for i in correctly_classified(model, X, y, eval_seed=master_seed):
        if len(entries) >= count:
            break
        out = run_nattack(X[i], y[i], model, replace(cfg, sample_seed=derive_seed(master_seed, i)))
        adv = _harvest(model, X[i], y[i], out, cfg, master_seed, resample, [master_seed, int(i), 9])
        if adv is not None:
            entries.append(PoolEntry(int(i), X[i], int(y[i]), np.asarray(adv)))
    warnings = []
    if len(entries) < count:
        warnings.append(f"pool holds {len(entries)} of {count} requested examples")
    return entries, warnings


@dataclass
class TransferMatrix:
    names: list
    rates: np.ndarray
    counts: np.ndarray
    warnings: list = field(default_factory=list)

    def column_means(self, exclude_diagonal: bool = True) -> np.ndarray:
        R = self.rates.copy()
        if exclude_diagonal:
            np.fill_diagonal(R, np.nan)
        return np.nanmean(R, axis=0)

    def to_dict(self) -> dict:
        rates = [[None if np.isnan(v) else float(v) for v in row] for row in self.rates]
        return {"names": self.names, "rates": rates, "counts": self.counts.tolist(), "warnings": self.warnings}


def build_transfer_matrix(models: dict, pools: dict, eval_seed: int = 0, pool_warnings: dict | None = None
                          ) -> TransferMatrix:
    """Cell ``(i, j)``: share of source ``i``'s adversarial examples that target ``j``
    misclassifies, among those whose clean input ``j`` gets right."""
    names = list(models)
    k = len(names)
    rates = np.full((k, k), np.nan)
    counts = np.zeros((k, k), dtype=int)
    warnings = []
    for src, msgs in (pool_warnings or {}).items():
        warnings.extend(f"{src}: {m}" for m in msgs)
    for a, src in enumerate(names):
        entries = pools.get(src, [])
        if not entries:
            warnings.append(f"{src}: empty pool, row marked absent")
            continue
        X = np.stack([e.x for e in entries])
        A = np.stack([e.adversarial for e in entries])
        labels = np.array([e.label for e in entries])
        for b, tgt in enumerate(names):
            clean_ok = canonical_predict(models[tgt], X, eval_seed) == labels
            fooled = canonical_predict(models[tgt], A, eval_seed) != labels
            counts[a, b] = int(clean_ok.sum())
            if counts[a, b]:
                rates[a, b] = float(np.mean(fooled[clean_ok]))
    return TransferMatrix(names, rates, counts, warnings)


# --- export ---------------------------------------------------------------

def report_csv(report: BenchmarkReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for o in report.outcomes:
        fsi = "" if o.first_success_iter is None else o.first_success_iter
        w.writerow([o.input_id, int(o.success), o.queries, fsi, repr(float(o.final_loss))])
    return buf.getvalue()


def curve_svg(curves: dict, T: int, width: int = 480, height: int = 320) -> str:
    """Cumulative success curves, iteration on x and success rate on y."""
    pad = 40
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">iteration</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" '
        'text-anchor="middle">success rate</text>',
    ]
    span_x, span_y = width - 2 * pad, height - 2 * pad
    for k, (name, curve) in enumerate(curves.items()):
        pts = [(pad, height - pad)]
        for t, v in enumerate(curve, start=1):
            pts.append((pad + span_x * t / max(T, 1), height - pad - span_y * float(v)))
        path = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
        color = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" points="{path}"><title>{name}</title></polyline>')
        parts.append(f'<text x="{width - pad - 4}" y="{pad + 14 * (k + 1)}" text-anchor="end" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_report(report: BenchmarkReport, path, fmt: str = "csv", include_timing: bool = False) -> Path:
    path = Path(path)
    fmt = fmt.lower()
    if fmt == "csv":
        text = report_csv(report)
    elif fmt == "json":
        text = json.dumps(report.to_dict(include_timing), indent=1) + "\n"
    elif fmt == "svg":
        text = curve_svg({report.attack: report.curve()}, report.T)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def load_report(path) -> BenchmarkReport:
    return BenchmarkReport.from_dict(json.loads(Path(path).read_text()))
