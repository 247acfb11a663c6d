"""Ranking metrics for one-class scoring: AUROC, its certified lower bound
under l2 perturbations of a 1-Lipschitz scorer, local-Lipschitz-constant
lower bounds, and score histograms.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class ScorePair:
    """Scores of in-distribution samples (pos) and negatives/anomalies (neg)."""

    pos_scores: np.ndarray
    neg_scores: np.ndarray

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.pos_scores, dtype=np.float64))
        neg = np.atleast_1d(np.asarray(self.neg_scores, dtype=np.float64))
        if pos.size == 0 or neg.size == 0:
            raise ValueError("both score sides must be non-empty")
        object.__setattr__(self, "pos_scores", pos)
        object.__setattr__(self, "neg_scores", neg)


def auroc(scores):
    """Mann-Whitney statistic: P(pos > neg) with ties counted 0.5.

    Computed from average ranks of the pooled sample, which is exactly the
    pairwise count for empirical distributions (rank sums are sums of
    integers and halves, so no rounding enters before the final division).
    """
    pos, neg = scores.pos_scores, scores.neg_scores
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    n_pos = pos.size
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * neg.size))


def certified_auroc(scores, eps):
    """Provable AUROC lower bound under any l2 attack of radius eps.

    Valid only when the scores come from a 1-Lipschitz model: an attacker can
    move a positive score down by at most eps and a negative score up by at
    most eps, which is equivalent to shifting the positive scores down by
    2*eps before ranking.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return auroc(ScorePair(scores.pos_scores - 2.0 * eps, scores.neg_scores))


def certified_auroc_curve(scores, eps_list):
    """certified_auroc at each radius; non-increasing for non-decreasing eps."""
    eps_list = np.asarray(eps_list, dtype=np.float64)
    if eps_list.ndim != 1 or eps_list.size == 0:
        raise ValueError("eps_list must be a non-empty vector")
    if np.any(np.diff(eps_list) < 0):
        raise ValueError("eps_list must be non-decreasing")
    return np.array([certified_auroc(scores, e) for e in eps_list])


def llc_lower_bound(net, points):
    """Lower bound on the local Lipschitz constant: max gradient norm over
    the given points."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        raise ValueError("points must be non-empty")
    grads = net.input_gradients(points)
    return float(np.max(np.linalg.norm(grads, axis=1)))


def score_histogram(scores, bins):
    """Counts per side on shared bin edges spanning the pooled score range.

    Returns (edges, pos_counts, neg_counts); counts sum to the sample sizes.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    pooled = np.concatenate([scores.pos_scores, scores.neg_scores])
    lo, hi = float(pooled.min()), float(pooled.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, bins + 1)
    pos_counts, _ = np.histogram(scores.pos_scores, bins=edges)
    neg_counts, _ = np.histogram(scores.neg_scores, bins=edges)
    return edges, pos_counts, neg_counts


def write_certified_curve(path, eps_list, values):
    """CSV report with one (epsilon, certified_auroc) row per radius."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "certified_auroc"])
        for eps, val in zip(eps_list, values):
            writer.writerow([repr(float(eps)), repr(float(val))])


def write_histogram(path, edges, pos_counts, neg_counts):
    """CSV report with one (bin_lo, bin_hi, pos_count, neg_count) row per bin."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "pos_count", "neg_count"])
        for i in range(len(pos_counts)):
            writer.writerow([repr(float(edges[i])), repr(float(edges[i + 1])),
                             int(pos_counts[i]), int(neg_counts[i])])
