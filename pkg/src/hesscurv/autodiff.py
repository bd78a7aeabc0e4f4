"""Reverse-mode gradients and exact Hessian-vector products.

The HVP is Pearlmutter's R-operator: the directional derivative along ``v``
is pushed forward through the network alongside the activations, and then
backward alongside the ordinary deltas. One product costs about two
backprop passes and needs O(N * width + P) memory; nothing P x P is formed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .model import ACTIVATIONS, RAW_MEAN, Batch, check_targets, param_count, softmax, unflatten


@dataclass(frozen=True)
class GradResult:
    grad_total: np.ndarray
    n: int

    @property
    def mean(self):
        """Gradient of the batch-averaged cost."""
        return self.grad_total / self.n


def _forward(spec, weights, biases, x):
    act = ACTIVATIONS[spec.hidden_activation][0]
    inputs, pre = [x], []
    a = x
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W.T + b
        pre.append(z)
        if i < last:
            a = act(z)
            inputs.append(a)
    return inputs, pre


def _output_delta(spec, z_out, y):
    """Per-example derivative of C_n with respect to the output logits."""
    if spec.output_mode == RAW_MEAN:
        return np.ones_like(z_out)
    return softmax(z_out) - y


def _backward(spec, weights, pre, delta):
    """Deltas (dC/dz) for every layer, given the output-layer delta."""
    d1 = ACTIVATIONS[spec.hidden_activation][1]
    deltas = [None] * len(weights)
    deltas[-1] = delta
    for i in range(len(weights) - 1, 0, -1):
        deltas[i - 1] = (deltas[i] @ weights[i]) * d1(pre[i - 1])
    return deltas


def _prepare(spec, params, batch):
    if not isinstance(batch, Batch):
        raise ContractError("expected a Batch")
    if batch.x.shape[1] != spec.n_inputs:
        raise ShapeError(f"inputs have {batch.x.shape[1]} features, model expects {spec.n_inputs}")
    check_targets(spec, batch.y)
    return unflatten(spec, params)


def per_example_grads(spec, params, batch):
    """N x P matrix whose row n is the gradient of C_n (one backprop pass)."""
    weights, biases = _prepare(spec, params, batch)
    inputs, pre = _forward(spec, weights, biases, batch.x)
    deltas = _backward(spec, weights, pre, _output_delta(spec, pre[-1], batch.y))
    n = len(batch)
    parts = []
    for a, d in zip(inputs, deltas):
        parts.append(np.einsum("ni,nj->nij", d, a).reshape(n, -1))
        parts.append(d)
    return np.concatenate(parts, axis=1)


def per_example_grad(spec, params, x, y=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("per_example_grad takes a single input vector")
    yy = None if y is None else np.asarray(y, dtype=np.float64)[None, :]
    return per_example_grads(spec, params, Batch(x[None, :], yy))[0]


def grad_batch(spec, params, batch):
    """Sum over the batch of per-example gradients, from a single backward pass."""
    weights, biases = _prepare(spec, params, batch)
    inputs, pre = _forward(spec, weights, biases, batch.x)
    deltas = _backward(spec, weights, pre, _output_delta(spec, pre[-1], batch.y))
    parts = []
    for a, d in zip(inputs, deltas):
        parts.append((d.T @ a).ravel())
        parts.append(d.sum(axis=0))
    return GradResult(np.concatenate(parts), len(batch))


def hvp(spec, params, batch, v):
    """Hessian of the batch-averaged cost applied to ``v``.

    ``v`` is a fixed direction: it enters only through the R-operator and is
    never differentiated.
    """
    weights, biases = _prepare(spec, params, batch)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (param_count(spec),):
        raise ShapeError(f"direction has shape {v.shape}, expected ({param_count(spec)},)")
    vw, vb = unflatten(spec, v)
    _, d1, d2 = ACTIVATIONS[spec.hidden_activation]
    n = len(batch)
    last = len(weights) - 1

    # forward pass carrying R{z} and R{a}
    inputs, pre, r_inputs, r_pre = [batch.x], [], [np.zeros_like(batch.x)], []
    a, ra = batch.x, r_inputs[0]
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W.T + b
        rz = ra @ W.T + a @ vw[i].T + vb[i]
        pre.append(z)
        r_pre.append(rz)
        if i < last:
            a = ACTIVATIONS[spec.hidden_activation][0](z)
            ra = d1(z) * rz
            inputs.append(a)
            r_inputs.append(ra)

    if spec.output_mode == RAW_MEAN:
        delta = np.full_like(pre[-1], 1.0 / n)
        r_delta = np.zeros_like(pre[-1])
    else:
        p = softmax(pre[-1])
        delta = (p - batch.y) / n
        rz = r_pre[-1]
        r_delta = p * (rz - np.sum(p * rz, axis=1, keepdims=True)) / n

    out_w, out_b = [None] * len(weights), [None] * len(weights)
    for i in range(last, -1, -1):
        out_w[i] = r_delta.T @ inputs[i] + delta.T @ r_inputs[i]
        out_b[i] = r_delta.sum(axis=0)
        if i > 0:
            back = delta @ weights[i]
            r_back = r_delta @ weights[i] + delta @ vw[i]
            z = pre[i - 1]
            delta = back * d1(z)
            r_delta = r_back * d1(z) + back * d2(z) * r_pre[i - 1]

    parts = []
    for w, b in zip(out_w, out_b):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


@dataclass(frozen=True)
class HvpOperator:
    """``v -> H v`` over a whole dataset, averaged over equal mini-batches.

    Holds only references to the model, the parameters and the data, so
    ``apply`` can be called concurrently from several threads.
    """
    spec: object
    params: np.ndarray
    data: Batch
    batch_size: int = None

    def __post_init__(self):
        bs = len(self.data) if self.batch_size is None else int(self.batch_size)
        object.__setattr__(self, "batch_size", bs)
        object.__setattr__(self, "_batches", tuple(self.data.split(bs)))

    @property
    def n_params(self):
        return param_count(self.spec)

    @property
    def shape(self):
        return (self.n_params, self.n_params)

    def apply(self, v):
        out = np.zeros(self.n_params)
        for b in self._batches:
            out += hvp(self.spec, self.params, b, v)
        return out / len(self._batches)

    __call__ = apply
