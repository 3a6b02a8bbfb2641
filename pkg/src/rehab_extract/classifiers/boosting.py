"""AdaBoost (SAMME, two classes) over decision stumps, and gradient boosting
of shallow regression trees under binomial deviance.

Both search the same exhaustive set of split candidates: for every feature,
each midpoint between consecutive distinct training values.  Candidates are
kept as a sparse 0/1 matrix ``B`` (n x m, ``B[i, k] = x_i[f_k] > t_k``) so a
whole search round is two sparse mat-vecs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import expit

ADA_ESTIMATORS = 100
GB_ESTIMATORS = 50
GB_DEPTH = 3
GB_SHRINKAGE = 0.1
MAX_STAGE_HALVINGS = 30
ZERO_ERROR = 1e-12
ZERO_ERROR_ALPHA = 1.0


@dataclass
class SplitCandidates:
    feature: np.ndarray
    threshold: np.ndarray
    B: sparse.csc_matrix
    BT: sparse.csr_matrix = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.feature)

    def column(self, k: int) -> np.ndarray:
        lo, hi = self.B.indptr[k], self.B.indptr[k + 1]
        out = np.zeros(self.B.shape[0], dtype=bool)
        out[self.B.indices[lo:hi]] = True
        return out


def split_candidates(X) -> SplitCandidates:
    X = sparse.csc_matrix(X, dtype=np.float64)
    n, d = X.shape
    feats, thrs, cols = [], [], []
    for f in range(d):
        lo, hi = X.indptr[f], X.indptr[f + 1]
        rows, vals = X.indices[lo:hi], X.data[lo:hi]
        distinct = np.unique(np.concatenate([vals, [0.0]]) if hi - lo < n else vals)
        for t in (distinct[:-1] + distinct[1:]) / 2.0:
            feats.append(f)
            thrs.append(t)
            cols.append(np.sort(rows[vals > t]))
    indptr = np.zeros(len(cols) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(c) for c in cols])
    indices = np.concatenate(cols).astype(np.int32) if cols else np.zeros(0, dtype=np.int32)
    B = sparse.csc_matrix((np.ones(len(indices)), indices, indptr), shape=(n, len(cols)))
    return SplitCandidates(np.array(feats, dtype=np.int64), np.array(thrs), B, B.T.tocsr())


def _feature_values(X, features) -> np.ndarray:
    X = sparse.csc_matrix(X)
    return X[:, features].toarray() if len(features) else np.zeros((X.shape[0], 0))


# ---------------------------------------------------------------- AdaBoost

@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int  # +1: predict positive when x > threshold
    alpha: float


def fit_adaboost(cands: SplitCandidates, y, sample_weight, n_estimators=ADA_ESTIMATORS):
    """Returns ``(stumps, errors)``; ``errors[t]`` is stump t's weighted error."""
    pos = np.asarray(y, dtype=bool)
    ypm = np.where(pos, 1.0, -1.0)
    w = np.asarray(sample_weight, dtype=np.float64)
    w = w / w.sum()
    stumps: list[Stump] = []
    errors: list[float] = []
    if cands.size == 0:
        return stumps, errors
    for _ in range(n_estimators):
        above_pos = cands.BT @ (w * pos)
        above_neg = cands.BT @ (w * ~pos)
        err_plus = above_neg + (w[pos].sum() - above_pos)
        err_minus = w.sum() - err_plus
        both = np.concatenate([err_plus, err_minus])
        k = int(np.argmin(both))
        err = float(max(both[k], 0.0))
        if err >= 0.5:
            break
        polarity = 1 if k < cands.size else -1
        k %= cands.size
        pred = np.where(cands.column(k), polarity, -polarity)
        alpha = ZERO_ERROR_ALPHA if err < ZERO_ERROR else math.log((1.0 - err) / err)
        stumps.append(Stump(int(cands.feature[k]), float(cands.threshold[k]), polarity, alpha))
        errors.append(err)
        if err < ZERO_ERROR:
            break
        w = w * np.exp(alpha * (pred != ypm))
        w /= w.sum()
    return stumps, errors


def adaboost_score(stumps: list[Stump], X) -> np.ndarray:
    n = X.shape[0]
    if not stumps:
        return np.zeros(n)
    feats = sorted({s.feature for s in stumps})
    vals = _feature_values(X, feats)
    col = {f: i for i, f in enumerate(feats)}
    score = np.zeros(n)
    for s in stumps:
        above = vals[:, col[s.feature]] > s.threshold
        score += s.alpha * np.where(above, s.polarity, -s.polarity)
    return score


# ------------------------------------------------------- gradient boosting

@dataclass(frozen=True)
class Tree:
    """Flat binary tree; ``feature[i] < 0`` marks a leaf holding ``value[i]``."""
    feature: tuple[int, ...]
    threshold: tuple[float, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]
    value: tuple[float, ...]

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(tuple(int(v) for v in d["feature"]), tuple(float(v) for v in d["threshold"]),
                   tuple(int(v) for v in d["left"]), tuple(int(v) for v in d["right"]),
                   tuple(float(v) for v in d["value"]))

    def scaled(self, factor: float) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right,
                    tuple(v * factor for v in self.value))

    def predict(self, X) -> np.ndarray:
        n = X.shape[0]
        feats = sorted({f for f in self.feature if f >= 0})
        vals = _feature_values(X, feats)
        col = {f: i for i, f in enumerate(feats)}
        node = np.zeros(n, dtype=np.int64)
        for _ in range(len(self.feature)):
            feat = np.array(self.feature)[node]
            internal = feat >= 0
            if not internal.any():
                break
            idx = np.flatnonzero(internal)
            fcol = np.array([col[f] for f in feat[idx]], dtype=np.int64)
            go_right = vals[idx, fcol] > np.array(self.threshold)[node[idx]]
            node[idx] = np.where(go_right, np.array(self.right)[node[idx]], np.array(self.left)[node[idx]])
        return np.array(self.value)[node]


def deviance(y, F, sample_weight) -> float:
    y = np.asarray(y, dtype=np.float64)
    return float((sample_weight * (np.logaddexp(0.0, F) - y * F)).sum())


def _fit_tree(cands: SplitCandidates, r, hess, w, max_depth) -> tuple[Tree, np.ndarray]:
    """Weighted least-squares tree on residuals ``r`` with Newton leaf values.

    Returns the tree and its training-set output.
    """
    n = len(r)
    feature, threshold, left, right, value = [], [], [], [], []
    out = np.zeros(n)
    wr = w * r

    def leaf(mask):
        den = float((w * hess)[mask].sum())
        v = float(wr[mask].sum()) / den if den > ZERO_ERROR else 0.0
        out[mask] = v
        return v

    def grow(mask, depth) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        count = int(mask.sum())
        best = None
        if depth < max_depth and count >= 2 and cands.size:
            m = mask.astype(np.float64)
            s_r = cands.BT @ (wr * m)
            s_w = cands.BT @ (w * m)
            n_r = cands.BT @ m
            S, W = float((wr * m).sum()), float((w * m).sum())
            s_l, w_l = S - s_r, W - s_w
            ok = (n_r >= 1) & (n_r <= count - 1) & (s_w > 0) & (w_l > 0)
            if ok.any():
                with np.errstate(divide="ignore", invalid="ignore"):
                    gain = np.where(ok, s_r ** 2 / s_w + s_l ** 2 / w_l - S ** 2 / W, -np.inf)
                k = int(np.argmax(gain))
                if gain[k] > ZERO_ERROR:
                    best = k
        if best is None:
            value[node] = leaf(mask)
            return node
        above = cands.column(best)
        feature[node] = int(cands.feature[best])
        threshold[node] = float(cands.threshold[best])
        left[node] = grow(mask & ~above, depth + 1)
        right[node] = grow(mask & above, depth + 1)
        return node

    grow(np.ones(n, dtype=bool), 0)
    return Tree(tuple(feature), tuple(threshold), tuple(left), tuple(right), tuple(value)), out


def fit_gradboost(cands: SplitCandidates, y, sample_weight, n_estimators=GB_ESTIMATORS,
                  max_depth=GB_DEPTH, shrinkage=GB_SHRINKAGE):
    """Returns ``(init, trees, deviances)``.

    Stored trees already include their effective step; a stage whose full
    step would raise the training deviance is halved until it does not (or
    dropped).  ``deviances[0]`` is the deviance of the initial score.
    """
    yb = np.asarray(y, dtype=bool)
    yf = yb.astype(np.float64)
    w = np.asarray(sample_weight, dtype=np.float64)
    init = math.log(w[yb].sum() / w[~yb].sum())
    F = np.full(len(yf), init)
    dev = deviance(yf, F, w)
    devs = [dev]
    trees: list[Tree] = []
    for _ in range(n_estimators):
        p = expit(F)
        tree, out = _fit_tree(cands, yf - p, p * (1.0 - p), w, max_depth)
        step = shrinkage
        for _ in range(MAX_STAGE_HALVINGS):
            new_dev = deviance(yf, F + step * out, w)
            if new_dev <= dev:
                break
            step *= 0.5
        else:
            step, new_dev = 0.0, dev
        if step > 0.0:
            trees.append(tree.scaled(step))
            F = F + step * out
            dev = new_dev
        devs.append(dev)
    return init, trees, devs


def gradboost_score(init: float, trees: list[Tree], X) -> np.ndarray:
    F = np.full(X.shape[0], init)
    for t in trees:
        F += t.predict(X)
    return F
