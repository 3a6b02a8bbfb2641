"""Class-weighted logistic regression trained by full-batch gradient descent.

Objective per concept::

    L(w, b) = sum_i s_i * [log(1 + exp(z_i)) - y_i z_i] + l2/2 * ||w||^2,   z = Xw + b

with ``s_i`` the balanced class weight of sample i.  Several concepts can be
trained at once; columns are independent and each keeps its own step size.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.special import expit

LEARNING_RATE = 1e-4
MAX_EPOCHS = 10_000
TOL = 1e-8
L2 = 1.0
MAX_HALVINGS = 50


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def _terms(z):
    """``(log(1 + e^z), sigmoid(z))`` from a single exponential."""
    e = np.exp(-np.abs(z))
    soft = np.maximum(z, 0.0) + np.log1p(e)
    sig = np.where(z >= 0, 1.0, e) / (1.0 + e)
    return soft, sig


def objective(X, y, s, w, b, l2=L2):
    """Weighted log-loss plus L2 penalty; works column-wise for 2-D w/y/s."""
    z = X @ w + b
    loss = (s * (_log1pexp(z) - y * z)).sum(axis=0)
    return loss + 0.5 * l2 * np.square(w).sum(axis=0)


def gradient(X, y, s, w, b, l2=L2):
    z = X @ w + b
    r = s * (expit(z) - y)
    return X.T @ r + l2 * w, r.sum(axis=0)


def fit(X, Y, S, lr=LEARNING_RATE, max_epochs=MAX_EPOCHS, tol=TOL, l2=L2):
    """Train one model per column of ``Y`` (n x k labels in {0,1}, weights ``S``).

    Returns ``(W, b, losses, epochs)``; ``losses[c]`` is the per-epoch
    objective history for column c.  A step that would raise the objective is
    retried with half the step size for that column only.
    """
    X = sparse.csr_matrix(X)
    XT = X.T.tocsr()
    Y = np.asarray(Y, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    n, d = X.shape
    k = Y.shape[1]
    W = np.zeros((d, k))
    b = np.zeros(k)
    steps = np.full(k, float(lr))
    epochs = np.zeros(k, dtype=np.int64)

    def loss_of(z, w, y, s):
        soft, sig = _terms(z)
        return (s * (soft - y * z)).sum(axis=0) + 0.5 * l2 * np.square(w).sum(axis=0), sig

    cols = np.arange(k)
    Yc, Sc = Y, S
    Z = np.zeros((n, k))
    loss, sig = loss_of(Z, W, Yc, Sc)
    history = [[float(v)] for v in loss]
    for _ in range(max_epochs):
        if not len(cols):
            break
        Wc, bc = W[:, cols], b[cols]
        r = Sc * (sig - Yc)
        gw = XT @ r + l2 * Wc
        gb = r.sum(axis=0)
        dz = X @ gw + gb
        step = steps[cols]
        new_z = Z - step * dz
        new_w = Wc - step * gw
        new_loss, new_sig = loss_of(new_z, new_w, Yc, Sc)
        worse = new_loss > loss
        halvings = 0
        while worse.any() and halvings < MAX_HALVINGS:
            step = np.where(worse, step * 0.5, step)
            new_z = Z - step * dz
            new_w = Wc - step * gw
            new_loss, new_sig = loss_of(new_z, new_w, Yc, Sc)
            worse = new_loss > loss
            halvings += 1
        # a column that cannot descend has converged to machine precision
        if worse.any():
            new_w[:, worse] = Wc[:, worse]
            new_z[:, worse] = Z[:, worse]
            new_sig[:, worse] = sig[:, worse]
            new_loss[worse] = loss[worse]
        steps[cols] = step
        delta = loss - new_loss
        W[:, cols] = new_w
        b[cols] = bc - step * gb * ~worse
        epochs[cols] += 1
        for c, v in zip(cols, new_loss):
            history[c].append(float(v))
        keep = ~((np.abs(delta) < tol) | worse)
        Z, sig, loss = new_z, new_sig, new_loss
        if not keep.all():
            cols = cols[keep]
            Z, sig, loss = Z[:, keep], sig[:, keep], loss[keep]
            Yc, Sc = Yc[:, keep], Sc[:, keep]
    return W, b, history, epochs


def predict_proba(X, w, b):
    return expit(sparse.csr_matrix(X) @ w + b)
