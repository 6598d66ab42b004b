"""Query-only victim classifiers.

The victim is a small fully connected network trained in numpy. Defenses wrap
a network and change how it is evaluated; none of them expose anything but
``query``.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

RELU = "relu"
QUANTIZED_RELU = "quantized_relu"
ACT_MAX = 6.0
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class MlpSpec:
    widths: list
    activation: str = RELU
    weights: list = field(default_factory=list)  # (in, out) per layer
    biases: list = field(default_factory=list)
    levels: int = 16
    act_max: float = ACT_MAX

    def __post_init__(self):
        self.widths = [int(w) for w in self.widths]
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"need at least input and output widths, got {self.widths}")
        if self.activation not in (RELU, QUANTIZED_RELU):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.levels < 2:
            raise ValueError(f"quantization needs at least 2 levels, got {self.levels}")
        self.weights = [np.asarray(W, dtype=float) for W in self.weights]
        self.biases = [np.asarray(b, dtype=float) for b in self.biases]
        if len(self.weights) != len(self.widths) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("number of weight/bias arrays does not match widths")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.widths[k], self.widths[k + 1]) or b.shape != (self.widths[k + 1],):
                raise ValueError(f"layer {k} has shapes {W.shape}, {b.shape}")

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def num_classes(self) -> int:
        return self.widths[-1]


def zero_mlp(widths, activation=RELU) -> MlpSpec:
    return MlpSpec(
        widths,
        activation,
        [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
        [np.zeros(b) for b in widths[1:]],
    )


def init_mlp(widths, seed=0, activation=RELU) -> MlpSpec:
    rng = np.random.default_rng(seed)
    weights = [rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)) for a, b in zip(widths[:-1], widths[1:])]
    return MlpSpec(widths, activation, weights, [np.zeros(b) for b in widths[1:]])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def quantize(a, levels: int, act_max: float = ACT_MAX) -> np.ndarray:
    """Round onto ``levels`` evenly spaced values covering ``[0, act_max]``."""
    step = act_max / (levels - 1)
    return np.round(np.clip(a, 0.0, act_max) / step) * step


def forward(spec: MlpSpec, x, activation=None, hidden_hook=None) -> np.ndarray:
    """Softmax output of the network for ``x`` of shape ``(d,)`` or ``(n, d)``.

    ``hidden_hook(layer, activations)`` may rewrite each hidden activation
    matrix (after the nonlinearity); stochastic defenses plug in here.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {spec.input_dim}")
    activation = activation or spec.activation
    h = x.reshape(-1, spec.input_dim)
    n_layers = len(spec.weights)
    for k, (W, b) in enumerate(zip(spec.weights, spec.biases)):
        h = h @ W + b
        if k < n_layers - 1:
            h = np.maximum(h, 0.0)
            if activation == QUANTIZED_RELU:
                h = quantize(h, spec.levels, spec.act_max)
            if hidden_hook is not None:
                h = hidden_hook(k, h)
    probs = softmax(h)
    return probs[0] if x.ndim == 1 else probs


def _forward_cache(spec: MlpSpec, X):
    acts = [X]
    h = X
    for k, (W, b) in enumerate(zip(spec.weights, spec.biases)):
        h = h @ W + b
        if k < len(spec.weights) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def train_mlp(X, y, widths, epochs=30, lr=0.1, seed=0, batch_size=32, momentum=0.9,
              weight_decay=0.0) -> MlpSpec:
    """Minibatch SGD with momentum on softmax cross-entropy.

    Deterministic given ``seed``. ``widths`` is the layer template; the input
    and output widths must match ``X`` and the label range.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(X) == 0:
        raise ValueError("empty training set")
    widths = list(widths)
    if widths[0] != X.shape[1]:
        raise ValueError(f"input width {widths[0]} does not match data dimension {X.shape[1]}")
    if y.max() >= widths[-1]:
        raise ValueError(f"labels exceed output width {widths[-1]}")
    rng = np.random.default_rng(seed)
    spec = init_mlp(widths, seed=rng.integers(2**32), activation=RELU)
    Ws, bs = spec.weights, spec.biases
    vW = [np.zeros_like(W) for W in Ws]
    vb = [np.zeros_like(b) for b in bs]
    onehot = np.eye(widths[-1])[y]
    for _ in range(epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), batch_size):
            idx = order[start:start + batch_size]
            acts = _forward_cache(spec, X[idx])
            delta = (softmax(acts[-1]) - onehot[idx]) / len(idx)
            for k in range(len(Ws) - 1, -1, -1):
                gW = acts[k].T @ delta + weight_decay * Ws[k]
                gb = delta.sum(axis=0)
                if k > 0:
                    delta = (delta @ Ws[k].T) * (acts[k] > 0)
                vW[k] = momentum * vW[k] - lr * gW
                vb[k] = momentum * vb[k] - lr * gb
                Ws[k] += vW[k]
                bs[k] += vb[k]
    acc = accuracy(MlpModel(spec), X, y)
    log.info("trained %s for %d epochs: train accuracy %.4f", widths, epochs, acc)
    if epochs > 0 and acc < 1.5 / widths[-1]:
        warnings.warn(f"training did not converge: train accuracy {acc:.3f}", ConvergenceWarning)
    return spec


def accuracy(model, X, y, seed=0) -> float:
    probs = model.query(np.asarray(X, dtype=float), seed)
    return float(np.mean(np.argmax(probs, axis=-1) == np.asarray(y)))


class BlackboxModel:
    """A classifier seen only through ``query``.

    ``query(x, seed)`` maps ``(d,)`` or ``(n, d)`` inputs in the unit box to
    softmax probabilities. Randomized models draw every random number from
    ``numpy.random.default_rng(seed)``, so a fixed ``(x, seed)`` always gives
    the same output; row ``i`` of a batch is driven by ``(seed, i)``.
    """

    input_dim: int
    num_classes: int
    stochastic = False

    def query(self, x, seed=None) -> np.ndarray:
        raise NotImplementedError

    def predict(self, x, seed=None):
        return np.argmax(self.query(x, seed), axis=-1)


class MlpModel(BlackboxModel):
    def __init__(self, spec: MlpSpec):
        self.spec = spec
        self.input_dim = spec.input_dim
        self.num_classes = spec.num_classes

    def query(self, x, seed=None):
        return forward(self.spec, x)


class ConstantModel(BlackboxModel):
    """Ignores its input; handy as an unattackable victim."""

    def __init__(self, probs, input_dim: int):
        self.probs = np.asarray(probs, dtype=float)
        self.input_dim = input_dim
        self.num_classes = len(self.probs)

    def query(self, x, seed=None):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.probs.copy()
        return np.tile(self.probs, (len(x), 1))


class QuantizedModel(BlackboxModel):
    """Hidden activations rounded onto a few levels: piecewise-constant logits."""

    def __init__(self, inner: MlpModel, levels: int):
        if levels < 2:
            raise ValueError(f"levels must be >= 2, got {levels}")
        self.inner = inner
        self.spec = replace(inner.spec, activation=QUANTIZED_RELU, levels=levels)
        self.input_dim = inner.input_dim
        self.num_classes = inner.num_classes

    def query(self, x, seed=None):
        return forward(self.spec, x)


def _row_seed(seed, *extra):
    if seed is None:
        seed = 0
    base = list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]
    return base + list(extra)


class SapModel(BlackboxModel):
    """Stochastic activation pruning.

    In each hidden layer neuron ``i`` is sampled with probability
    ``r_i = |a_i| / sum_j |a_j|`` in ``k = width`` draws with replacement, so it
    survives with ``p_i = 1 - (1 - r_i)**k``; survivors are divided by ``p_i``.
    """

    stochastic = True

    def __init__(self, inner: MlpModel):
        self.inner = inner
        self.input_dim = inner.input_dim
        self.num_classes = inner.num_classes

    def query(self, x, seed=None):
        def prune(layer, a):
            rng = np.random.default_rng(_row_seed(seed, layer))
            mag = np.abs(a)
            total = mag.sum(axis=1, keepdims=True)
            r = np.divide(mag, total, out=np.zeros_like(mag), where=total > 0)
            keep_p = 1.0 - (1.0 - r) ** a.shape[1]
            u = rng.random(a.shape)
            kept = u < keep_p
            return np.where(kept, a / np.where(kept, keep_p, 1.0), 0.0)

        return forward(self.inner.spec, x, hidden_hook=prune)


class InputNoiseModel(BlackboxModel):
    """Uniform noise in ``[-amplitude, amplitude]`` added to the input before the inner query."""

    def __init__(self, inner: BlackboxModel, amplitude: float):
        if amplitude < 0:
            raise ValueError(f"amplitude must be non-negative, got {amplitude}")
        self.inner = inner
        self.amplitude = float(amplitude)
        self.stochastic = amplitude > 0 or inner.stochastic
        self.input_dim = inner.input_dim
        self.num_classes = inner.num_classes

    def query(self, x, seed=None):
        if self.amplitude == 0:
            return self.inner.query(x, seed)
        x = np.asarray(x, dtype=float)
        rng = np.random.default_rng(_row_seed(seed, 0))
        noise = rng.uniform(-self.amplitude, self.amplitude, size=x.shape)
        return self.inner.query(np.clip(x + noise, 0.0, 1.0), _row_seed(seed, 1))


DEFENSES = ("none", "quantize", "sap", "input_noise")


def wrap_defense(inner: BlackboxModel, kind: str, levels: int = 8, amplitude: float = 0.05) -> BlackboxModel:
    if kind == "none":
        return inner
    if kind == "input_noise":
        return InputNoiseModel(inner, amplitude)
    if kind in ("quantize", "sap"):
        if not isinstance(inner, MlpModel):
            raise TypeError(f"{kind} defense needs direct access to an MlpModel")
        return QuantizedModel(inner, levels) if kind == "quantize" else SapModel(inner)
    raise ValueError(f"unknown defense {kind!r}; choose from {DEFENSES}")


def _require(doc, key, kind):
    if key not in doc:
        raise ModelFormatError(f"missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ModelFormatError(f"field {key!r} has type {type(value).__name__}")
    return value


def spec_to_dict(spec: MlpSpec) -> dict:
    return {
        "version": FORMAT_VERSION,
        "kind": "mlp",
        "widths": spec.widths,
        "activation": spec.activation,
        "levels": spec.levels,
        "act_max": spec.act_max,
        "weights": [W.tolist() for W in spec.weights],
        "biases": [b.tolist() for b in spec.biases],
    }


def spec_from_dict(doc: dict) -> MlpSpec:
    if not isinstance(doc, dict):
        raise ModelFormatError("model file must hold a JSON object")
    version = _require(doc, "version", int)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported version {version} (expected {FORMAT_VERSION})")
    widths = _require(doc, "widths", list)
    activation = _require(doc, "activation", str)
    weights = _require(doc, "weights", list)
    biases = _require(doc, "biases", list)
    try:
        return MlpSpec(widths, activation, weights, biases,
                       levels=int(doc.get("levels", 16)), act_max=float(doc.get("act_max", ACT_MAX)))
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"field 'weights'/'biases' inconsistent with 'widths': {exc}") from exc


def save_model(spec: MlpSpec, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly
    Path(path).write_text(json.dumps(spec_to_dict(spec)))


def load_model(path) -> MlpSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    return spec_from_dict(doc)
