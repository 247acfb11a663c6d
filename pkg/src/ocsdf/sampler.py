"""Negative-sample generation: uniform draws on a bounded box refined by
Newton steps toward the classifier's target level set.

Each sample gets its own step scale eta ~ U([0,1]) so the batch spreads out
along the path to the level set instead of collapsing onto it.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned sampling domain; projection onto it is exact clamping."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(self.high, dtype=np.float64))
        if low.shape != high.shape or low.ndim != 1:
            raise ValueError("low/high must be 1-D vectors of equal length")
        if not np.all(low < high):
            raise ValueError("box must have positive width on every axis")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self):
        return self.low.shape[0]

    @classmethod
    def cube(cls, half_width, dim):
        return cls(low=np.full(dim, -float(half_width)),
                   high=np.full(dim, float(half_width)))

    def clamp(self, X):
        return np.clip(X, self.low, self.high)

    def contains(self, X):
        return bool(np.all(X >= self.low) and np.all(X <= self.high))


@dataclass(frozen=True)
class SamplerConfig:
    steps_T: int = 4
    level_eps: float = 0.05
    grad_norm_floor: float = 1e-6

    def __post_init__(self):
        if self.steps_T < 0:
            raise ValueError("steps_T must be >= 0")
        if not self.grad_norm_floor > 0:
            raise ValueError("grad_norm_floor must be positive")


def uniform_in_box(box, rng, n):
    """n i.i.d. uniform points in the box, shape (n, dim)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.uniform(box.low, box.high, size=(n, box.dim))


def newton_descent(net, z0, eta, box, cfg):
    """Run the T refinement steps from explicit starts and step scales.

    One step per sample and iteration:
        z <- clamp(z - (eta/T) * (f(z) + eps) * grad f(z) / max(|grad|^2, floor))

    The squared-gradient denominator makes the step an exact Newton step on
    the locally affine pieces of the network; the floor guards the division
    early in training when the gradient norm is not yet close to one.
    """
    z = np.array(z0, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    if cfg.steps_T == 0:
        return box.clamp(z)
    scale = eta / cfg.steps_T
    for _ in range(cfg.steps_T):
        scores, grads = net.scores_and_input_gradients(z)
        denom = np.maximum(np.sum(grads * grads, axis=1), cfg.grad_norm_floor)
        step = (scale * (scores + cfg.level_eps) / denom)[:, None] * grads
        z = box.clamp(z - step)
    return z


def newton_raphson_negatives(net, box, cfg, rng, batch):
    """Draw a batch from the current complementary-distribution proposal.

    With T=0 this degenerates to plain uniform sampling (warm-start mode).
    Every output lies in the box. Deterministic for a fixed generator state.
    """
    if box.dim != net.input_dim:
        raise ValueError(f"box dim {box.dim} != net input dim {net.input_dim}")
    eta = rng.uniform(0.0, 1.0, size=batch)
    z0 = uniform_in_box(box, rng, batch)
    return newton_descent(net, z0, eta, box, cfg)
