"""Hinge Kantorovich-Rubinstein loss, the BCE baseline loss, and RMSprop.

All functions accept scalars or numpy arrays for the score arguments and
broadcast in the usual numpy way.
"""

from dataclasses import dataclass

import numpy as np

# Declared explicitly so runs are reproducible; "default hyperparameters"
# differs between frameworks.
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_DECAY_RHO = 0.9
DEFAULT_EPSILON_NUM = 1e-7


@dataclass(frozen=True)
class HKRParams:
    """Margin m and regularization weight of the hinge-KR loss."""

    margin: float = 0.05
    lam: float = 100.0

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError(f"margin must be positive, got {self.margin}")
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")


def hkr_loss(y, f_value, params):
    """lam * max(0, m - y*f) - y*f for labels y in {-1, +1}."""
    yf = y * np.asarray(f_value, dtype=np.float64)
    return params.lam * np.maximum(0.0, params.margin - yf) - yf


def hkr_grad(y, f_value, params):
    """Derivative of hkr_loss w.r.t. f.

    On the hinge kink (m - y*f == 0) the inactive branch is used, so the
    result is always in {-y, -y*(lam+1)}.
    """
    yf = y * np.asarray(f_value, dtype=np.float64)
    active = params.margin - yf > 0
    return -y * (params.lam * active + 1.0)


def hkr_batch_risk(pos_scores, neg_scores, params):
    """Mean loss over positives plus mean loss over negatives."""
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if pos_scores.size == 0 or neg_scores.size == 0:
        raise ValueError("batch risk needs at least one score on each side")
    return float(
        np.mean(hkr_loss(1.0, pos_scores, params))
        + np.mean(hkr_loss(-1.0, neg_scores, params))
    )


def hkr_hinge_term(pos_scores, neg_scores, params):
    """Hinge part of the batch risk alone; exactly zero once every positive
    scores >= m and every negative scores <= -m."""
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    return float(params.lam * (np.mean(np.maximum(0.0, params.margin - pos))
                               + np.mean(np.maximum(0.0, params.margin + neg))))


def bce_loss(y, logit):
    """Binary cross entropy with labels in {0, 1}, computed stably."""
    sign = 2.0 * y - 1.0
    return np.logaddexp(0.0, -sign * np.asarray(logit, dtype=np.float64))


def bce_grad(y, logit):
    """Derivative of bce_loss w.r.t. the logit: sigmoid(logit) - y."""
    z = np.asarray(logit, dtype=np.float64)
    # expit without the scipy import; stable for both signs
    out = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                   np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    return out - y


@dataclass
class RMSPropState:
    """Squared-gradient accumulator plus the optimizer constants."""

    acc: np.ndarray
    learning_rate: float = DEFAULT_LEARNING_RATE
    decay_rho: float = DEFAULT_DECAY_RHO
    epsilon_num: float = DEFAULT_EPSILON_NUM

    @classmethod
    def zeros(cls, n_params, learning_rate=DEFAULT_LEARNING_RATE,
              decay_rho=DEFAULT_DECAY_RHO, epsilon_num=DEFAULT_EPSILON_NUM):
        return cls(acc=np.zeros(n_params, dtype=np.float64),
                   learning_rate=learning_rate, decay_rho=decay_rho,
                   epsilon_num=epsilon_num)

    def __post_init__(self):
        if not 0.0 < self.decay_rho < 1.0:
            raise ValueError(f"decay_rho must be in (0,1), got {self.decay_rho}")
        if np.any(self.acc < 0):
            raise ValueError("accumulator must be non-negative")


def rmsprop_step(state, params, grads):
    """One RMSprop update; mutates state.acc, returns the new parameters."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.acc.shape:
        raise ValueError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"acc {state.acc.shape}")
    state.acc *= state.decay_rho
    state.acc += (1.0 - state.decay_rho) * grads * grads
    return params - state.learning_rate * grads / (np.sqrt(state.acc) + state.epsilon_num)
