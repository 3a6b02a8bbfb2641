"""Soft-margin SVM with a polynomial kernel, solved in the dual by SMO.

Dual problem::

    min_a  1/2 a^T Q a - e^T a    s.t.  0 <= a_i <= C_i,  y^T a = 0,
    Q_ij = y_i y_j K(x_i, x_j),   K(u, v) = (gamma * u.v + coef0) ** degree

Working pairs are picked with second-order information (maximal violating
``i``, then the ``j`` giving the largest objective decrease), as in LIBSVM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

TAU = 1e-12
DEFAULT_EPS = 1e-4
DEFAULT_MAX_ITER = 200_000


def poly_kernel(A, B, degree=2, gamma=1.0, coef0=1.0) -> np.ndarray:
    A = sparse.csr_matrix(A)
    B = sparse.csr_matrix(B)
    gram = (A @ B.T).toarray()
    return (gamma * gram + coef0) ** degree


@dataclass
class DualSolution:
    alpha: np.ndarray
    rho: float
    iterations: int
    converged: bool
    gap: float


def solve_dual(K: np.ndarray, y: np.ndarray, C: np.ndarray, eps: float = DEFAULT_EPS,
               max_iter: int = DEFAULT_MAX_ITER) -> DualSolution:
    """SMO on a precomputed kernel matrix; ``y`` in {-1, +1}, ``C`` per sample."""
    y = np.asarray(y, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    n = len(y)
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    it = 0
    converged = False
    gap = np.inf
    while it < max_iter:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        score = -y * G
        if not up.any() or not low.any():
            converged, gap = True, 0.0
            break
        up_scores = np.where(up, score, -np.inf)
        i = int(np.argmax(up_scores))
        m = up_scores[i]
        low_scores = np.where(low, score, np.inf)
        gap = float(m - low_scores.min())
        if gap < eps:
            converged = True
            break
        b = m - score
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        obj = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(obj))
        it += 1

        # analytic two-variable update (LIBSVM's clipping rules)
        yi, yj = y[i], y[j]
        Ci, Cj = C[i], C[j]
        old_ai, old_aj = alpha[i], alpha[j]
        quad = diag[i] + diag[j] - 2.0 * K[i, j]
        if quad <= 0:
            quad = TAU
        if yi != yj:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            ai, aj = alpha[i] + delta, alpha[j] + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            ai, aj = alpha[i] - delta, alpha[j] + delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        dai, daj = ai - old_ai, aj - old_aj
        # column i of Q is y_i * y * K[:, i]
        G += y * (yi * dai * K[i] + yj * daj * K[j])
    rho = _rho(alpha, y, G, C)
    return DualSolution(alpha, rho, it, converged, gap)


def _rho(alpha, y, G, C) -> float:
    yG = y * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].mean())
    # no free vectors: rho is only bracketed, take the midpoint
    at_c = alpha >= C
    upper = (at_c & (y < 0)) | (~at_c & (y > 0))
    ub = yG[upper].min() if upper.any() else np.inf
    lb = yG[~upper].max() if (~upper).any() else -np.inf
    if not np.isfinite(ub):
        ub = lb
    if not np.isfinite(lb):
        lb = ub
    return float((ub + lb) / 2.0)


def kkt_residuals(K: np.ndarray, y: np.ndarray, C: np.ndarray, alpha: np.ndarray, rho: float) -> np.ndarray:
    """Per-sample violation of the KKT conditions (0 where satisfied).

    With margin ``m_i = y_i f(x_i)``: a=0 needs m >= 1, 0<a<C needs m == 1,
    a=C needs m <= 1.
    """
    f = K @ (alpha * y) - rho
    margin = y * f
    res = np.zeros(len(y))
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    res[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    res[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    res[free] = np.abs(margin[free] - 1.0)
    return res
