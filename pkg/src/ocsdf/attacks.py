"""Empirical l2 projected-gradient attacks on a trained scorer, and the
attacked-AUROC evaluation that is compared against the certificates.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .metrics import ScorePair, auroc

GRAD_FLOOR = 1e-12


@dataclass(frozen=True)
class AttackConfig:
    radius_eps: float
    steps: int = 40
    step_size_factor: float = 0.025
    restarts: int = 3

    def __post_init__(self):
        if not self.radius_eps > 0:
            raise ValueError("radius_eps must be positive")
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")

    @property
    def step_size(self):
        return self.step_size_factor * self.radius_eps


def _project_ball(X, centers, eps):
    delta = X - centers
    norms = np.linalg.norm(delta, axis=1)
    over = norms > eps
    if np.any(over):
        delta[over] *= (eps / norms[over])[:, None]
    return centers + delta


def _uniform_in_ball(rng, n, dim, eps):
    direction = rng.standard_normal((n, dim))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True),
                            GRAD_FLOOR)
    radius = eps * rng.uniform(0.0, 1.0, size=n) ** (1.0 / dim)
    return radius[:, None] * direction


def _pgd_batch(net, X, cfg, direction, rng):
    """Attack every row of X; returns (worst_scores, perturbations).

    direction "decrease" minimizes the score, "increase" maximizes it. The
    first restart starts at the clean point (so a linear scorer saturates the
    ball exactly); the remaining restarts start uniformly inside the ball.
    The clean point itself always stays a candidate, hence the returned score
    is never worse than doing nothing.
    """
    if direction not in ("decrease", "increase"):
        raise ValueError(f"unknown direction {direction!r}")
    sign = -1.0 if direction == "decrease" else 1.0
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    eps, zeta = cfg.radius_eps, cfg.step_size

    best_scores = net.forward_batch(X).copy()
    best_delta = np.zeros_like(X)
    for restart in range(cfg.restarts):
        if restart == 0:
            Xa = X.copy()
        else:
            Xa = X + _uniform_in_ball(rng, n, X.shape[1], eps)
        for _ in range(cfg.steps):
            _, grads = net.scores_and_input_gradients(Xa)
            norms = np.linalg.norm(grads, axis=1)
            ok = norms > GRAD_FLOOR
            step = np.zeros_like(Xa)
            step[ok] = grads[ok] / norms[ok, None]
            Xa = _project_ball(Xa + sign * zeta * step, X, eps)
        scores = net.forward_batch(Xa)
        better = sign * scores > sign * best_scores
        best_scores[better] = scores[better]
        best_delta[better] = Xa[better] - X[better]
    return best_scores, best_delta


def pgd_l2(net, x, cfg, direction, rng):
    """Worst score reachable from x within the l2 ball, and the perturbation
    achieving it. ||perturbation|| <= radius_eps up to float rounding."""
    x = np.asarray(x, dtype=np.float64)
    scores, deltas = _pgd_batch(net, x[None, :], cfg, direction, rng)
    return float(scores[0]), deltas[0]


def auroc_under_attack(net, pos_points, neg_points, cfg, rng):
    """AUROC after symmetric attacks: positives pushed down, negatives up.

    For a 1-Lipschitz scorer this can never fall below the certified AUROC
    at the same radius, whatever the attack seeds.
    """
    pos_points = np.asarray(pos_points, dtype=np.float64)
    neg_points = np.asarray(neg_points, dtype=np.float64)
    if pos_points.size == 0 or neg_points.size == 0:
        raise ValueError("both point sets must be non-empty")
    pos_scores, _ = _pgd_batch(net, pos_points, cfg, "decrease", rng)
    neg_scores, _ = _pgd_batch(net, neg_points, cfg, "increase", rng)
    return auroc(ScorePair(pos_scores, neg_scores))


def write_attack_report(path, rows):
    """CSV with one (epsilon, clean_auroc, certified_auroc, attacked_auroc)
    row per attack radius."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "clean_auroc", "certified_auroc",
                         "attacked_auroc"])
        for eps, clean, certified, attacked in rows:
            writer.writerow([repr(float(eps)), repr(float(clean)),
                             repr(float(certified)), repr(float(attacked))])
