"""Relevance scoring for a pair of same-space embeddings.

Two embeddings X and Y are joined into the feature [X, Y, |X-Y|, max(X, Y)]
and a small sigmoid-output MLP scores how likely the pair is a true match.
This runs over frozen embeddings from any external encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, NumericError, UsageError
from .nn import (
    AdamState,
    MlpParams,
    adam_step,
    init_mlp,
    mlp_backward,
    mlp_forward,
    sigmoid,
)
from .alignment import TrainConfig, _SEED_MASK


def combine_pair(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Joint pair feature: [x || y || |x-y| || max(x, y)], dimension 4d."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(f"x and y must be 1-D vectors of equal dim, got {x.shape} and {y.shape}")
    return np.concatenate([x, y, np.abs(x - y), np.maximum(x, y)])


@dataclass
class PairExample:
    x: np.ndarray
    y: np.ndarray
    relevant: bool

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise DimensionError(
                f"pair vectors must be 1-D and equal dim, got {self.x.shape} and {self.y.shape}"
            )


@dataclass
class PairHead:
    """Sigmoid-output MLP over the 4d joint feature."""

    mlp: MlpParams

    def __post_init__(self):
        if self.mlp.input_dim % 4 != 0:
            raise DimensionError(
                f"pair head input dim must be 4*d, got {self.mlp.input_dim}"
            )
        if self.mlp.output_dim != 1:
            raise DimensionError(f"pair head must output a scalar, got {self.mlp.output_dim}")

    @property
    def embedding_dim(self) -> int:
        return self.mlp.input_dim // 4


def pair_loss_and_grads(mlp: MlpParams, features: np.ndarray, targets: np.ndarray):
    """Mean binary cross-entropy on sigmoid scores, plus analytic gradients.

    Uses the logits form of BCE (never exponentiates a large positive value),
    whose gradient w.r.t. the logits is (sigmoid(z) - t) / N.
    """
    logits, cache = mlp_forward(mlp, features)
    z = logits[:, 0]
    t = np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))))
    dz = (sigmoid(z) - t) / z.size
    grads = mlp_backward(mlp, cache, dz[:, None])
    return loss, grads


def fit_pair_head(examples: list[PairExample], config: TrainConfig) -> PairHead:
    """Train the relevance head; needs at least one positive and one negative."""
    if not examples:
        raise DataError("no training examples")
    n_pos = sum(e.relevant for e in examples)
    if n_pos == 0 or n_pos == len(examples):
        raise DataError(
            f"need both classes to train: got {n_pos} positives out of {len(examples)}"
        )
    dims = {e.x.size for e in examples}
    if len(dims) > 1:
        raise DimensionError(f"examples mix embedding dims {sorted(dims)}")
    d = dims.pop()

    features = np.stack([combine_pair(e.x, e.y) for e in examples])
    targets = np.array([float(e.relevant) for e in examples])

    seed = config.seed & _SEED_MASK
    mlp = init_mlp([4 * d, 2 * d, 1], np.random.default_rng(seed))
    state = AdamState.zeros_like(mlp)
    adam = config.adam()
    n = len(examples)
    for epoch in range(config.epochs):
        perm = np.random.default_rng([seed, epoch]).permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start : start + config.batch_size]
            loss, grads = pair_loss_and_grads(mlp, features[idx], targets[idx])
            if not np.isfinite(loss):
                raise NumericError(f"non-finite pair loss at epoch {epoch}, batch {b}")
            mlp, state = adam_step(mlp, grads, state, adam)
    return PairHead(mlp)


def predict_pair(head: PairHead, x: np.ndarray, y: np.ndarray) -> float:
    """Relevance probability in [0, 1] for one pair."""
    feat = combine_pair(x, y)
    if feat.size != head.mlp.input_dim:
        raise DimensionError(
            f"pair feature has dim {feat.size}, head expects {head.mlp.input_dim}"
        )
    logits, _ = mlp_forward(head.mlp, feat[None, :])
    return float(sigmoid(logits[0, 0]))


def pair_accuracy(head: PairHead, examples: list[PairExample]) -> float:
    """Fraction of examples classified correctly at the 0.5 threshold."""
    if not examples:
        raise UsageError("no examples to score")
    hits = sum(
        (predict_pair(head, e.x, e.y) > 0.5) == e.relevant for e in examples
    )
    return hits / len(examples)
