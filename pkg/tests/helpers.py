"""Independent oracles used by the test suite.

These intentionally avoid the library's own code paths: the SVD is a
from-scratch one-sided Jacobi, AUROC is the O(n*m) pairwise count, and
derivatives come from central differences.
"""

import numpy as np


def jacobi_svd(A, sweeps=100, tol=1e-14):
    """One-sided Jacobi SVD (brute force). Returns (U, s, Vt) with singular
    values sorted descending; only valid for full-column-rank input."""
    A = np.array(A, dtype=np.float64)
    transposed = A.shape[0] < A.shape[1]
    if transposed:
        A = A.T
    n = A.shape[1]
    V = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                ap, aq = A[:, p], A[:, q]
                alpha, beta, gamma = ap @ ap, aq @ aq, ap @ aq
                off = max(off, abs(gamma) / np.sqrt(alpha * beta))
                if gamma == 0.0:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                rot = np.array([[c, s], [-s, c]])
                A[:, [p, q]] = A[:, [p, q]] @ rot
                V[:, [p, q]] = V[:, [p, q]] @ rot
        if off < tol:
            break
    s = np.sqrt(np.sum(A * A, axis=0))
    order = np.argsort(-s)
    s = s[order]
    U = A[:, order] / s
    Vt = V[:, order].T
    if transposed:
        return Vt.T, s, U.T
    return U, s, Vt


def polar_factor(A):
    """Nearest orthogonal matrix of A via the brute-force SVD: U @ Vt."""
    U, _, Vt = jacobi_svd(A)
    return U @ Vt


def auroc_pairwise(pos, neg):
    """O(n*m) Mann-Whitney count, ties worth one half."""
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def central_diff_input_gradient(score_fn, x, h=1e-5):
    """Central finite differences of a scalar function of a vector."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        grad[i] = (score_fn(xp) - score_fn(xm)) / (2.0 * h)
    return grad


def random_orthogonal(rows, cols, rng):
    A = rng.standard_normal((max(rows, cols), min(rows, cols)))
    Q, _ = np.linalg.qr(A)
    return Q if rows >= cols else Q.T
