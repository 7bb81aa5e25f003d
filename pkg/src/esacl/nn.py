"""Small multi-head MLP over a flat parameter vector.

Every parameter of the network (weights and biases, trunk and heads) lives
in one float64 vector. Layer views are cut out of it with
:meth:`NetworkSpec.unpack`. A binary mask of the same length selects the
effective weights ``mask * params``; masked coordinates behave exactly like
zeros and always receive a zero gradient.

Layout: trunk layers in order, each as ``W`` (in x out, row-major) followed by
``b`` (out), then one final layer per head in head order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ConfigurationError",
    "NetworkSpec",
    "Batch",
    "effective_params",
    "forward",
    "loss",
    "per_example_losses",
    "grad",
    "per_example_grad_norms",
    "finite_diff",
    "finite_diff_grad",
    "init_params",
    "max_relative_error",
]

ACTIVATIONS = ("relu", "tanh")


class ConfigurationError(ValueError):
    """Raised when shapes, masks or specs do not fit together."""


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a Task-IL MLP.

    ``layer_dims`` runs from the input dimension through the hidden widths to
    the per-head output dimension. With two entries there is no shared trunk
    and every head is a plain linear classifier.
    """

    layer_dims: tuple[int, ...]
    activation: str = "relu"
    heads: int = 1

    def __post_init__(self):
        dims = tuple(int(x) for x in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ConfigurationError("layer_dims needs at least input and output dims")
        if any(x < 1 for x in dims):
            raise ConfigurationError(f"layer_dims entries must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}")
        if self.heads < 1:
            raise ConfigurationError("heads must be >= 1")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_trunk(self) -> int:
        return len(self.layer_dims) - 2

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of every stored layer: trunk first, then heads."""
        dims = self.layer_dims
        trunk = [(dims[i], dims[i + 1]) for i in range(self.n_trunk)]
        return trunk + [(dims[-2], dims[-1])] * self.heads

    def layer_offsets(self) -> list[int]:
        offsets, pos = [], 0
        for fan_in, fan_out in self.layer_shapes():
            offsets.append(pos)
            pos += fan_in * fan_out + fan_out
        return offsets

    @property
    def size(self) -> int:
        return sum(i * o + o for i, o in self.layer_shapes())

    def path_layers(self, head: int) -> list[int]:
        """Indices (into layer_shapes) of the layers used by ``head``."""
        if not 0 <= head < self.heads:
            raise ConfigurationError(f"head {head} out of range for {self.heads} heads")
        return list(range(self.n_trunk)) + [self.n_trunk + head]

    def unpack(self, vec: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views ``(W, b)`` per stored layer. Writes go through to ``vec``."""
        out = []
        for (fan_in, fan_out), off in zip(self.layer_shapes(), self.layer_offsets()):
            w = vec[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
            b = vec[off + fan_in * fan_out:off + fan_in * fan_out + fan_out]
            out.append((w, b))
        return out

    def layer_of_coordinate(self) -> np.ndarray:
        """Stored-layer index for every coordinate of the flat vector."""
        idx = np.empty(self.size, dtype=np.int64)
        for k, ((fan_in, fan_out), off) in enumerate(zip(self.layer_shapes(), self.layer_offsets())):
            idx[off:off + fan_in * fan_out + fan_out] = k
        return idx

    def weight_coordinates(self) -> np.ndarray:
        """Boolean vector, True on weight-matrix entries, False on biases."""
        is_w = np.zeros(self.size, dtype=bool)
        for (fan_in, fan_out), off in zip(self.layer_shapes(), self.layer_offsets()):
            is_w[off:off + fan_in * fan_out] = True
        return is_w


@dataclass(frozen=True, eq=False)
class Batch:
    """Labeled examples for one task. Also used as a whole dataset."""

    inputs: np.ndarray
    labels: np.ndarray
    task_id: int = 0

    def __post_init__(self):
        x = np.ascontiguousarray(self.inputs, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ConfigurationError(f"inputs must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ConfigurationError(f"labels shape {y.shape} does not match {x.shape[0]} inputs")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "task_id", int(self.task_id))

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Batch):
            return NotImplemented
        return (
            self.task_id == other.task_id
            and np.array_equal(self.inputs, other.inputs)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, idx) -> "Batch":
        idx = np.asarray(idx, dtype=np.int64)
        return Batch(self.inputs[idx], self.labels[idx], self.task_id)


def _check(spec: NetworkSpec, params: np.ndarray, mask: np.ndarray, batch: Batch) -> None:
    if params.shape != (spec.size,):
        raise ConfigurationError(f"params length {params.shape} != spec size {spec.size}")
    if mask.shape != params.shape:
        raise ConfigurationError(f"mask length {mask.shape} != params length {params.shape}")
    if batch.inputs.shape[1] != spec.input_dim:
        raise ConfigurationError(
            f"batch input dim {batch.inputs.shape[1]} != network input dim {spec.input_dim}")
    if not 0 <= batch.task_id < spec.heads:
        raise ConfigurationError(f"task_id {batch.task_id} has no head (heads={spec.heads})")


def effective_params(params: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``mask * params`` with masked slots set to +0.0 regardless of value."""
    return np.where(np.asarray(mask, dtype=bool), params, 0.0)


def _activate(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_backward(dout, z, a, kind):
    if kind == "relu":
        return dout * (z > 0)
    return dout * (1.0 - a * a)


def _forward_cache(spec, weights, x, head):
    layers = spec.path_layers(head)
    cache = []
    a = x
    for k in layers[:-1]:
        w, b = weights[k]
        z = a @ w + b
        out = _activate(z, spec.activation)
        cache.append((a, z, out))
        a = out
    w, b = weights[layers[-1]]
    return a @ w + b, cache


def forward(spec: NetworkSpec, params, mask, batch: Batch) -> np.ndarray:
    """Logits ``[n, classes]`` of head ``batch.task_id`` with masked weights."""
    params = np.asarray(params, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    _check(spec, params, mask, batch)
    weights = spec.unpack(effective_params(params, mask))
    logits, _ = _forward_cache(spec, weights, batch.inputs, batch.task_id)
    return logits


def _log_softmax(logits):
    shift = logits - logits.max(axis=1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))


def per_example_losses(logits, labels) -> np.ndarray:
    """Cross-entropy of every row, computed through a stabilized log-softmax."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.shape[0] == 0:
        raise ValueError("empty batch")
    if labels.shape[0] != logits.shape[0]:
        raise ConfigurationError("labels and logits disagree on batch size")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ConfigurationError(f"labels must lie in [0, {logits.shape[1]})")
    logp = _log_softmax(logits)
    return -logp[np.arange(labels.shape[0]), labels]


def loss(logits, labels) -> float:
    """Mean cross-entropy over the batch."""
    return float(np.mean(per_example_losses(logits, labels)))


def batch_loss(spec: NetworkSpec, params, mask, batch: Batch) -> float:
    return loss(forward(spec, params, mask, batch), batch.labels)


def grad(spec: NetworkSpec, params, mask, batch: Batch) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the flat parameter vector.

    Reverse-mode pass through the head selected by ``batch.task_id``. Masked
    coordinates and layers off the active path get exactly zero.
    """
    params = np.asarray(params, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    _check(spec, params, mask, batch)
    if len(batch) == 0:
        raise ValueError("empty batch")
    weights = spec.unpack(effective_params(params, mask))
    logits, cache = _forward_cache(spec, weights, batch.inputs, batch.task_id)

    n = len(batch)
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(n), batch.labels] -= 1.0
    delta = probs / n

    out = np.zeros(spec.size)
    grads = spec.unpack(out)
    layers = spec.path_layers(batch.task_id)
    a_in = cache[-1][2] if cache else batch.inputs
    gw, gb = grads[layers[-1]]
    gw[...] = a_in.T @ delta
    gb[...] = delta.sum(axis=0)
    upstream = delta @ weights[layers[-1]][0].T
    for k, (a, z, act) in zip(reversed(layers[:-1]), reversed(cache)):
        dz = _activate_backward(upstream, z, act, spec.activation)
        gw, gb = grads[k]
        gw[...] = a.T @ dz
        gb[...] = dz.sum(axis=0)
        upstream = dz @ weights[k][0].T
    out[~mask] = 0.0
    return out


def per_example_grad_norms(spec: NetworkSpec, params, mask, batch: Batch) -> np.ndarray:
    """L2 norm of every single-example gradient (one backward pass per row)."""
    return np.array([
        np.linalg.norm(grad(spec, params, mask, batch.subset([i])))
        for i in range(len(batch))
    ])


def finite_diff(fn: Callable[[np.ndarray], float], theta, h: float = 1e-5, mask=None) -> np.ndarray:
    """Central differences of a scalar function, coordinate by coordinate."""
    if h <= 0:
        raise ValueError("h must be positive")
    theta = np.array(theta, dtype=np.float64, ndmin=1)
    mask = np.ones(theta.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    out = np.zeros_like(theta)
    for i in np.flatnonzero(mask):
        old = theta[i]
        theta[i] = old + h
        up = fn(theta)
        theta[i] = old - h
        down = fn(theta)
        theta[i] = old
        out[i] = (up - down) / (2.0 * h)
    return out


def finite_diff_grad(spec: NetworkSpec, params, mask, batch: Batch, h: float = 1e-5) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    return finite_diff(lambda p: batch_loss(spec, p, mask, batch), params, h, mask)


def max_relative_error(a, b, floor: float = 1e-6) -> float:
    """max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def init_params(spec: NetworkSpec, rng: np.random.Generator, where: Sequence[bool] | None = None,
                params: np.ndarray | None = None) -> np.ndarray:
    """Draw U(-1/sqrt(fan_in), 1/sqrt(fan_in)) per layer.

    With ``where`` given only those coordinates are redrawn in a copy of
    ``params``; the draw still consumes one value per coordinate of the whole
    vector so the stream position does not depend on the mask.
    """
    bounds = np.empty(spec.size)
    for (fan_in, fan_out), off in zip(spec.layer_shapes(), spec.layer_offsets()):
        bounds[off:off + fan_in * fan_out + fan_out] = 1.0 / np.sqrt(fan_in)
    fresh = rng.uniform(-1.0, 1.0, size=spec.size) * bounds
    if where is None:
        return fresh
    out = np.array(params, dtype=np.float64, copy=True)
    where = np.asarray(where, dtype=bool)
    out[where] = fresh[where]
    return out
