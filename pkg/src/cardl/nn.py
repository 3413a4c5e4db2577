"""Dense MLP arithmetic with analytic gradients, plus the numeric primitives
built on top of it: stable softmax, doubly-averaged cross-entropy, Adam, and
a central-difference gradient oracle for testing.

Everything here is float64, pure, and deterministic: functions never mutate
their inputs and hold no global state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, DimensionError, NumericError, UsageError

LOG_FLOOR = 1e-12


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, x)


@dataclass
class LinearLayer:
    """One affine layer.  weight has shape (out_dim, in_dim), bias (out_dim,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise DimensionError(f"layer weight must be 2-D, got shape {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match weight rows "
                f"({self.weight.shape[0]})"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpParams:
    """A rectifier MLP: ReLU after every layer except the last (linear) one."""

    layers: list[LinearLayer]

    def __post_init__(self):
        if not self.layers:
            raise UsageError("an MLP needs at least one layer")
        for k in range(1, len(self.layers)):
            prev, cur = self.layers[k - 1], self.layers[k]
            if cur.in_dim != prev.out_dim:
                raise DimensionError(
                    f"layer {k} expects input dim {cur.in_dim} but layer {k - 1} "
                    f"produces {prev.out_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def copy(self) -> "MlpParams":
        return MlpParams([LinearLayer(l.weight.copy(), l.bias.copy()) for l in self.layers])


def init_mlp(dims: Sequence[int], rng: np.random.Generator) -> MlpParams:
    """Build an MLP with the given layer widths, e.g. dims=[128, 256, 64].

    Weights are uniform in +/- sqrt(6 / (fan_in + fan_out)); biases start at
    zero.  Draw order is fixed (layer by layer) so a given generator state
    always yields the same parameters.
    """
    if len(dims) < 2:
        raise UsageError(f"need at least input and output dims, got {list(dims)}")
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(LinearLayer(w, np.zeros(fan_out)))
    return MlpParams(layers)


# Cache entries: (layer_input, preactivation) per layer, in forward order.
ForwardCache = list[tuple[np.ndarray, np.ndarray]]


def mlp_forward(params: MlpParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass over a batch (rows are samples).

    Returns the output batch and the cache mlp_backward needs.  ReLU is
    applied after every layer except the last.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise DimensionError(f"batch must be 2-D (rows are samples), got shape {batch.shape}")
    if batch.shape[1] != params.input_dim:
        raise DimensionError(
            f"batch has {batch.shape[1]} columns but the first layer expects "
            f"{params.input_dim}"
        )
    cache: ForwardCache = []
    a = batch
    last = len(params.layers) - 1
    for k, layer in enumerate(params.layers):
        z = a @ layer.weight.T + layer.bias
        cache.append((a, z))
        a = z if k == last else relu(z)
    return a, cache


# Gradients mirror MlpParams: one (weight_grad, bias_grad) pair per layer.
GradientSet = list[tuple[np.ndarray, np.ndarray]]


def mlp_backward(params: MlpParams, cache: ForwardCache, grad_out: np.ndarray) -> GradientSet:
    """Backpropagate d(loss)/d(output) through the network.

    `cache` must come from the matching mlp_forward call.  ReLU passes zero
    gradient exactly where the forward pass clamped (preactivation <= 0).
    """
    if not cache:
        raise UsageError("mlp_backward needs the cache from mlp_forward")
    if len(cache) != len(params.layers):
        raise UsageError(
            f"cache has {len(cache)} layers but params has {len(params.layers)}"
        )
    grad_out = np.asarray(grad_out, dtype=np.float64)
    n_rows = cache[0][0].shape[0]
    expected = (n_rows, params.output_dim)
    if grad_out.shape != expected:
        raise DimensionError(f"grad_out shape {grad_out.shape} does not match output {expected}")

    grads: GradientSet = [None] * len(params.layers)  # type: ignore[list-item]
    dz = grad_out
    for k in range(len(params.layers) - 1, -1, -1):
        layer_input, preact = cache[k]
        if k < len(params.layers) - 1:
            dz = dz * (preact > 0)
        grads[k] = (dz.T @ layer_input, dz.sum(axis=0))
        if k > 0:
            dz = dz @ params.layers[k].weight
    return grads


def stable_softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax over `axis`, computed with the max-shift trick.

    Accepts vectors or batches of rows; output sums to 1 along `axis`.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise UsageError("softmax of an empty input is undefined")
    if not np.all(np.isfinite(logits)):
        raise NumericError("softmax input contains non-finite values")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(targets: np.ndarray, probs: np.ndarray) -> float:
    """Cross-entropy between row distributions, averaged over rows *and* columns.

    For an n x m pair of matrices this returns
        -(1/n) * sum_i (1/m) * sum_j  y_ij * log p_ij
    i.e. a 1/(n*m) normalization.  The 1/m factor is kept even for one-hot
    targets so reported values are comparable across runs; it rescales the
    loss by a constant and leaves the minimizer unchanged. log is floored at
    1e-12, applied only where the target mass is positive.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if targets.shape != probs.shape:
        raise DimensionError(
            f"targets shape {targets.shape} does not match probs shape {probs.shape}"
        )
    if np.any(targets < 0):
        raise DataError("targets contain negative entries")
    if np.any(probs < 0):
        raise DataError("probs contain negative entries")
    n, m = targets.shape
    mask = targets > 0
    if not mask.any():
        return 0.0
    logp = np.log(np.maximum(probs[mask], LOG_FLOOR))
    return float(-(targets[mask] * logp).sum() / (n * m))


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class AdamState:
    """Per-parameter moment estimates; shapes mirror the MlpParams exactly."""

    first_moment: GradientSet
    second_moment: GradientSet
    step_count: int = 0

    @classmethod
    def zeros_like(cls, params: MlpParams) -> "AdamState":
        zeros = lambda: [
            (np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in params.layers
        ]
        return cls(first_moment=zeros(), second_moment=zeros(), step_count=0)


def adam_step(
    params: MlpParams,
    grads: GradientSet,
    state: AdamState,
    config: AdamConfig = AdamConfig(),
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update.  Pure: returns fresh params and state."""
    if len(grads) != len(params.layers):
        raise DimensionError(
            f"got {len(grads)} gradient layers for {len(params.layers)} parameter layers"
        )
    t = state.step_count + 1
    b1, b2 = config.beta1, config.beta2
    new_layers = []
    new_m: GradientSet = []
    new_v: GradientSet = []
    for k, (layer, (gw, gb)) in enumerate(zip(params.layers, grads)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(f"non-finite gradient at layer {k}")
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise DimensionError(
                f"layer {k}: gradient shapes {gw.shape}/{gb.shape} do not match "
                f"parameter shapes {layer.weight.shape}/{layer.bias.shape}"
            )
        mw, mb = state.first_moment[k]
        vw, vb = state.second_moment[k]
        mw = b1 * mw + (1 - b1) * gw
        mb = b1 * mb + (1 - b1) * gb
        vw = b2 * vw + (1 - b2) * gw**2
        vb = b2 * vb + (1 - b2) * gb**2
        mw_hat = mw / (1 - b1**t)
        mb_hat = mb / (1 - b1**t)
        vw_hat = vw / (1 - b2**t)
        vb_hat = vb / (1 - b2**t)
        w = layer.weight - config.learning_rate * mw_hat / (np.sqrt(vw_hat) + config.epsilon)
        b = layer.bias - config.learning_rate * mb_hat / (np.sqrt(vb_hat) + config.epsilon)
        new_layers.append(LinearLayer(w, b))
        new_m.append((mw, mb))
        new_v.append((vw, vb))
    return MlpParams(new_layers), AdamState(new_m, new_v, t)


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function: (f(x+h*e_i) - f(x-h*e_i)) / 2h."""
    if h <= 0:
        raise UsageError(f"step h must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        fp = f(xp)
        fm = f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"function returned non-finite value near coordinate {i}")
        grad.flat[i] = (fp - fm) / (2 * h)
    return grad


# --- flat-vector views, used by the finite-difference checks -----------------

def flatten_params(params: MlpParams) -> np.ndarray:
    parts = []
    for layer in params.layers:
        parts.append(layer.weight.ravel())
        parts.append(layer.bias.ravel())
    return np.concatenate(parts)


def unflatten_params(template: MlpParams, vec: np.ndarray) -> MlpParams:
    vec = np.asarray(vec, dtype=np.float64)
    layers = []
    i = 0
    for layer in template.layers:
        wn = layer.weight.size
        w = vec[i : i + wn].reshape(layer.weight.shape)
        i += wn
        bn = layer.bias.size
        b = vec[i : i + bn].copy()
        i += bn
        layers.append(LinearLayer(w, b))
    if i != vec.size:
        raise DimensionError(f"vector has {vec.size} entries, template needs {i}")
    return MlpParams(layers)


def flatten_grads(grads: GradientSet) -> np.ndarray:
    parts = []
    for gw, gb in grads:
        parts.append(gw.ravel())
        parts.append(gb.ravel())
    return np.concatenate(parts)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
