"""Differentially private SGD: per-sample clipping, noised aggregation, training loop.

The mechanism per step: clip each per-sample gradient to L2 norm C, sum, add
Normal(0, (sigma C)^2 I), divide by the batch size. Batches are fixed-size
(shuffle-then-partition per epoch, short remainder dropped) so the accountant's
constant sampling rate q = B/n is the truth, not an approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import accountant
from .randmat import SeededRng, derive_seed


class DivergenceError(RuntimeError):
    """Training produced non-finite loss/parameters."""


@dataclass(frozen=True)
class DpSgdConfig:
    clip_bound: float  # C, gradient L2 units
    noise_multiplier: float  # sigma, in multiples of C
    learning_rate: float
    batch_size: int
    epochs: int
    seed: int

    def __post_init__(self):
        if self.clip_bound <= 0:
            raise ValueError(f"clip_bound must be positive, got {self.clip_bound}")
        if self.noise_multiplier < 0:
            raise ValueError(f"noise_multiplier must be nonnegative, got {self.noise_multiplier}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class TrainedModel:
    parameters: np.ndarray
    privacy: accountant.PrivacyReport
    training_log: list  # per-epoch mean loss


def clip_gradient(g: np.ndarray, clip_bound: float) -> np.ndarray:
    """g * min(1, C/||g||_2); the zero vector passes through."""
    if clip_bound <= 0:
        raise ValueError(f"clip_bound must be positive, got {clip_bound}")
    g = np.asarray(g, dtype=np.float64)
    norm = float(np.linalg.norm(g))
    if norm <= clip_bound:
        return g.copy()
    return g * (clip_bound / norm)


def _clip_rows(G: np.ndarray, clip_bound: float) -> np.ndarray:
    norms = np.linalg.norm(G, axis=1)
    scale = np.minimum(1.0, clip_bound / np.maximum(norms, 1e-300))
    return G * scale[:, None]


def private_step(per_sample_grads, config: DpSgdConfig, rng: SeededRng) -> np.ndarray:
    """(sum_i clip(g_i, C) + Normal(0, sigma^2 C^2 I)) / B — the noised mean update."""
    G = np.asarray(per_sample_grads, dtype=np.float64)
    if G.ndim == 1:
        G = G.reshape(1, -1)
    if G.ndim != 2 or G.dtype == object:
        raise ValueError("per-sample gradients must share one dimension")
    if G.shape[0] == 0:
        raise ValueError("empty batch")
    total = _clip_rows(G, config.clip_bound).sum(axis=0)
    if config.noise_multiplier > 0:
        total = total + rng.gen.normal(
            0.0, config.noise_multiplier * config.clip_bound, size=total.shape
        )
    return total / G.shape[0]


def train_private(
    model_spec,
    dataset,
    config: DpSgdConfig,
    phi: float,
    orders=None,
    sample_weight_fn=None,
    record_log: bool = True,
) -> TrainedModel:
    """DP-SGD training of a model spec (logistic or MLP) on a Dataset.

    sample_weight_fn(params, idx) -> per-sample weights lets a caller reweight
    gradients before clipping (the GroupDRO hook); sensitivity stays C because
    weighting happens upstream of the clip.
    """
    X = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty dataset")
    B = min(config.batch_size, n)
    steps_per_epoch = n // B
    total_steps = config.epochs * steps_per_epoch
    q = B / n
    if config.noise_multiplier > 0:
        privacy = accountant.account(config.noise_multiplier, total_steps, q, phi, orders)
    else:
        # no noise -> no finite privacy guarantee
        privacy = accountant.PrivacyReport(math.inf, phi, 0.0, total_steps, q)

    rng_init = SeededRng(derive_seed(config.seed, 0))
    rng_shuffle = SeededRng(derive_seed(config.seed, 1))
    rng_noise = SeededRng(derive_seed(config.seed, 2))
    params = model_spec.init_params(rng_init)
    log = []
    step = 0
    for _epoch in range(config.epochs):
        perm = rng_shuffle.gen.permutation(n)
        for b in range(steps_per_epoch):
            idx = perm[b * B : (b + 1) * B]
            grads = model_spec.per_sample_grads(params, X[idx], y[idx])
            if sample_weight_fn is not None:
                w = np.asarray(sample_weight_fn(params, idx), dtype=np.float64)
                grads = grads * w[:, None]
            update = private_step(grads, config, rng_noise)
            params = params - config.learning_rate * update
            if not np.all(np.isfinite(params)):
                raise DivergenceError(f"non-finite parameters at step {step}")
            step += 1
        if record_log:
            mean_loss = model_spec.mean_loss(params, X, y)
            if not math.isfinite(mean_loss):
                raise DivergenceError(f"non-finite loss at step {step - 1}")
            log.append(mean_loss)
    return TrainedModel(parameters=params, privacy=privacy, training_log=log)
