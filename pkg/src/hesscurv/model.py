"""Dense feed-forward network as a pure function of a flat parameter vector.

Layer ``l`` (for ``l = 2..L``) maps ``a_{l-1}`` to ``sigma_l(W a_{l-1} + b)``
with ``W`` of shape ``(T_l, T_{l-1})``. The flat parameter vector stores, per
layer in order, the rows of ``W`` followed by ``b``.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from .errors import ContractError, ShapeError

SOFTMAX_CE = "softmax_cross_entropy"
RAW_MEAN = "raw_mean_output"
OUTPUT_MODES = (SOFTMAX_CE, RAW_MEAN)


# Each activation supplies (value, first derivative, second derivative) as
# functions of the pre-activation z. relu uses derivative 0 at exactly z = 0.
def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _sigmoid_d1(z):
    s = _sigmoid(z)
    return s * (1.0 - s)


def _sigmoid_d2(z):
    s = _sigmoid(z)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


def _tanh_d1(z):
    t = np.tanh(z)
    return 1.0 - t * t


def _tanh_d2(z):
    t = np.tanh(z)
    return -2.0 * t * (1.0 - t * t)


ACTIVATIONS = {
    "identity": (lambda z: z, np.ones_like, np.zeros_like),
    "sigmoid": (_sigmoid, _sigmoid_d1, _sigmoid_d2),
    "tanh": (np.tanh, _tanh_d1, _tanh_d2),
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(np.float64), np.zeros_like),
}


@dataclass(frozen=True)
class ModelSpec:
    layer_widths: tuple
    hidden_activation: str = "tanh"
    output_mode: str = SOFTMAX_CE

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ContractError("need at least an input and an output layer")
        if min(widths) < 1:
            raise ContractError(f"layer widths must be >= 1, got {widths}")
        if self.hidden_activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.hidden_activation!r}")
        if self.output_mode not in OUTPUT_MODES:
            raise ContractError(f"unknown output mode {self.output_mode!r}")
        if self.output_mode == RAW_MEAN and widths[-1] != 1:
            raise ContractError("raw_mean_output requires a single output unit")

    @property
    def n_inputs(self):
        return self.layer_widths[0]

    @property
    def n_outputs(self):
        return self.layer_widths[-1]

    @property
    def n_params(self):
        return param_count(self)

    def layer_shapes(self):
        w = self.layer_widths
        return [(w[i + 1], w[i]) for i in range(len(w) - 1)]

    def to_dict(self):
        return {"layer_widths": list(self.layer_widths),
                "hidden_activation": self.hidden_activation,
                "output_mode": self.output_mode}

    @classmethod
    def from_dict(cls, d):
        return cls(layer_widths=tuple(d["layer_widths"]),
                   hidden_activation=d.get("hidden_activation", "tanh"),
                   output_mode=d.get("output_mode", SOFTMAX_CE))

    def to_json(self):
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class Batch:
    """N input rows ``x`` and matching target rows ``y``.

    In ``raw_mean_output`` mode the targets are unused; pass ``y=None`` to get
    a zero column.
    """
    x: np.ndarray
    y: np.ndarray = field(default=None)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        y = np.zeros((x.shape[0], 1)) if self.y is None else np.atleast_2d(
            np.asarray(self.y, dtype=np.float64))
        if x.shape[0] < 1:
            raise ContractError("batch must hold at least one example")
        if y.shape[0] != x.shape[0]:
            raise ShapeError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, idx):
        if isinstance(idx, int):
            idx = slice(idx, idx + 1)
        return Batch(self.x[idx], self.y[idx])

    def split(self, batch_size):
        """Consecutive mini-batches; N must be a multiple of ``batch_size``."""
        n = len(self)
        if batch_size < 1:
            raise ContractError("batch size must be >= 1")
        if n % batch_size:
            raise ContractError(
                f"dataset size {n} is not divisible by batch size {batch_size}; "
                f"{n % batch_size} trailing examples would be dropped")
        return [self[b * batch_size:(b + 1) * batch_size] for b in range(n // batch_size)]


def param_count(spec):
    return sum(r * c + r for r, c in spec.layer_shapes())


def layer_offsets(spec):
    """Start index in the flat vector of each layer's weight and bias block."""
    out = []
    pos = 0
    for r, c in spec.layer_shapes():
        out.append((pos, pos + r * c))
        pos += r * c + r
    return out


def flatten(weights, biases):
    if len(weights) != len(biases):
        raise ShapeError("need one bias per weight matrix")
    parts = []
    prev = None
    for W, b in zip(weights, biases):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64).ravel()
        if W.ndim != 2 or b.size != W.shape[0]:
            raise ShapeError(f"weight {W.shape} and bias ({b.size},) do not match")
        if prev is not None and W.shape[1] != prev:
            raise ShapeError(f"weight {W.shape} does not follow a layer of width {prev}")
        prev = W.shape[0]
        parts.append(W.ravel(order="C"))
        parts.append(b)
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten(spec, params):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != param_count(spec):
        raise ShapeError(
            f"parameter vector has shape {params.shape}, expected ({param_count(spec)},)")
    weights, biases = [], []
    pos = 0
    for r, c in spec.layer_shapes():
        weights.append(params[pos:pos + r * c].reshape(r, c))
        pos += r * c
        biases.append(params[pos:pos + r])
        pos += r
    return weights, biases


def init_params(spec, seed=0):
    """Uniform(-r, r) weights with r = sqrt(6 / (fan_in + fan_out)); zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for r, c in spec.layer_shapes():
        lim = np.sqrt(6.0 / (r + c))
        weights.append(rng.uniform(-lim, lim, size=(r, c)))
        biases.append(np.zeros(r))
    return flatten(weights, biases)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    m = np.max(z, axis=-1, keepdims=True)
    return z - m - np.log(np.sum(np.exp(z - m), axis=-1, keepdims=True))


def _check_inputs(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.n_inputs:
        raise ShapeError(f"input has {x.shape[-1]} features, model expects {spec.n_inputs}")
    return x


def logits(spec, params, x):
    """Pre-activation of the output layer for a single row or a batch of rows."""
    x = _check_inputs(spec, x)
    act = ACTIVATIONS[spec.hidden_activation][0]
    weights, biases = unflatten(spec, params)
    a = x
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W.T + b
        a = act(z) if i < len(weights) - 1 else z
    return a


def forward(spec, params, x):
    z = logits(spec, params, x)
    if spec.output_mode == RAW_MEAN:
        return z
    return softmax(z)


def check_targets(spec, y):
    if spec.output_mode != SOFTMAX_CE:
        return
    if y.shape[1] != spec.n_outputs:
        raise ShapeError(f"targets have {y.shape[1]} columns, model has {spec.n_outputs} outputs")
    ones = np.sum(y == 1.0, axis=1)
    zeros = np.sum(y == 0.0, axis=1)
    if np.any(ones != 1) or np.any(ones + zeros != y.shape[1]):
        raise ContractError("softmax cross-entropy needs one-hot target rows")


def cost(spec, params, batch):
    """Batch-averaged cost: softmax cross-entropy, or the mean raw output."""
    check_targets(spec, batch.y)
    z = logits(spec, params, batch.x)
    if spec.output_mode == RAW_MEAN:
        return float(np.mean(z))
    return float(-np.mean(np.sum(batch.y * log_softmax(z), axis=1)))
