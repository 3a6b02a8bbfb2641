import numpy as np
import pytest
from scipy import sparse

from rehab_extract.classifiers import logreg


def random_instance(rng):
    n, d = rng.integers(5, 51), rng.integers(1, 31)
    X = rng.poisson(0.7, size=(n, d)).astype(float)
    y = (rng.random(n) < 0.4).astype(float)
    s = rng.uniform(0.3, 3.0, size=n)
    return sparse.csr_matrix(X), y, s, rng.normal(0, 0.5, size=d), float(rng.normal())


def finite_difference(X, y, s, w, b, h=1e-6):
    f = lambda w_, b_: logreg.objective(X, y, s, w_, b_)  # noqa: E731
    gw = np.empty_like(w)
    for j in range(len(w)):
        e = np.zeros_like(w)
        e[j] = h
        gw[j] = (f(w + e, b) - f(w - e, b)) / (2 * h)
    gb = (f(w, b + h) - f(w, b - h)) / (2 * h)
    return gw, gb


def relative_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def gradient_check_errors(n_instances=20, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_instances):
        X, y, s, w, b = random_instance(rng)
        gw, gb = logreg.gradient(X, y, s, w, b)
        fw, fb = finite_difference(X, y, s, w, b)
        out.append(relative_error(np.append(gw, gb), np.append(fw, fb)))
    return out


def test_gradient_matches_finite_differences():
    assert max(gradient_check_errors()) < 1e-5


def test_terms_agree_with_reference():
    z = np.linspace(-800, 800, 4001)
    soft, sig = logreg._terms(z)
    assert np.allclose(soft, logreg._log1pexp(z), rtol=1e-14, atol=0)
    assert np.allclose(sig, 1 / (1 + np.exp(-np.clip(z, -700, 700))), rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("seed", range(5))
def test_loss_non_increasing(seed):
    rng = np.random.default_rng(seed)
    X, y, s, _, _ = random_instance(rng)
    W, b, history, epochs = logreg.fit(X, y[:, None], s[:, None], lr=1e-4, max_epochs=400)
    h = np.array(history[0])
    assert (np.diff(h) <= 0).all()
    assert len(h) == epochs[0] + 1
    assert h[-1] == pytest.approx(float(logreg.objective(X, y, s, W[:, 0], b[0])), rel=1e-12)


def test_large_step_is_safeguarded():
    rng = np.random.default_rng(11)
    X, y, s, _, _ = random_instance(rng)
    _, _, history, _ = logreg.fit(X, y[:, None], s[:, None], lr=50.0, max_epochs=200)
    assert (np.diff(history[0]) <= 0).all()


def test_batched_columns_match_single_fits():
    rng = np.random.default_rng(4)
    X, y, s, _, _ = random_instance(rng)
    y2 = (rng.random(len(y)) < 0.5).astype(float)
    s2 = rng.uniform(0.5, 2.0, len(y))
    Y, S = np.column_stack([y, y2]), np.column_stack([s, s2])
    W, b, _, _ = logreg.fit(X, Y, S, max_epochs=300)
    for k in range(2):
        Wk, bk, _, _ = logreg.fit(X, Y[:, [k]], S[:, [k]], max_epochs=300)
        assert np.allclose(W[:, k], Wk[:, 0], rtol=1e-10, atol=1e-12)
        assert b[k] == pytest.approx(bk[0], rel=1e-10, abs=1e-12)


def test_separable_data_learns_direction():
    X = sparse.csr_matrix(np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float))
    y = np.array([1, 1, 0, 0], dtype=float)
    W, b, _, _ = logreg.fit(X, y[:, None], np.ones((4, 1)), lr=0.1, max_epochs=2000)
    p = logreg.predict_proba(X, W[:, 0], b[0])
    assert (p[:2] > 0.5).all() and (p[2:] < 0.5).all()
