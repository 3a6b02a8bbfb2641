import numpy as np
import pytest

from rehab_extract.classifiers import svm

XOR_X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
XOR_Y = np.array([1, 1, -1, -1], dtype=float)
# hard-margin regime; the separating solution needs alpha up to 10/3
XOR_C = 10.0


def decision(K, y, sol):
    return K @ (sol.alpha * y) - sol.rho


def random_fixture(seed, n=40, d=6):
    rng = np.random.default_rng(seed)
    X = rng.poisson(0.8, size=(n, d)).astype(float)
    y = np.where(X[:, 0] + rng.normal(0, 0.8, n) > 0.8, 1.0, -1.0)
    if len(set(y)) < 2:
        y[0] = -y[0]
    C = np.where(y > 0, n / (2 * (y > 0).sum()), n / (2 * (y < 0).sum()))
    return X, y, C


def svm_fixtures():
    out = [(XOR_X, XOR_Y, np.full(4, XOR_C)), (XOR_X, XOR_Y, np.ones(4))]
    out += [random_fixture(seed) for seed in range(8)]
    return out


def test_xor_separable():
    K = svm.poly_kernel(XOR_X, XOR_X)
    sol = svm.solve_dual(K, XOR_Y, np.full(4, XOR_C))
    assert sol.converged
    assert (np.sign(decision(K, XOR_Y, sol)) == XOR_Y).all()
    assert sol.alpha.tolist() == pytest.approx([10 / 3, 2, 8 / 3, 8 / 3], abs=1e-3)


def test_xor_soft_margin_at_unit_c():
    # C=1 binds every alpha and the origin lands on the negative side
    K = svm.poly_kernel(XOR_X, XOR_X)
    sol = svm.solve_dual(K, XOR_Y, np.ones(4))
    assert sol.alpha.tolist() == [1.0, 1.0, 1.0, 1.0]
    assert (np.sign(decision(K, XOR_Y, sol))[1:] == XOR_Y[1:]).all()


def test_kkt_on_all_fixtures():
    for X, y, C in svm_fixtures():
        K = svm.poly_kernel(X, X)
        sol = svm.solve_dual(K, y, C)
        assert sol.converged
        assert svm.kkt_residuals(K, y, C, sol.alpha, sol.rho).max() < 1e-3
        assert abs(float(sol.alpha @ y)) < 1e-9
        assert (sol.alpha >= 0).all() and (sol.alpha <= C + 1e-12).all()


@pytest.mark.parametrize("seed", range(5))
def test_kernel_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 5))
    K = svm.poly_kernel(X, X)
    assert np.allclose(K, K.T)
    np.linalg.cholesky(K + 1e-8 * np.trace(K) / len(K) * np.eye(len(K)))
    assert np.linalg.eigvalsh(K).min() > -1e-8 * np.abs(K).max()


def test_kernel_values():
    A = np.array([[1.0, 2.0]])
    B = np.array([[3.0, -1.0], [0.0, 0.0]])
    assert svm.poly_kernel(A, B).tolist() == [[4.0, 1.0]]


def test_iteration_cap_reports_unconverged():
    X, y, C = random_fixture(3)
    sol = svm.solve_dual(svm.poly_kernel(X, X), y, C, max_iter=2)
    assert not sol.converged and sol.iterations == 2


def test_rho_without_free_vectors():
    # every alpha at a bound: rho is the midpoint of the feasible bracket
    y = np.array([1.0, -1.0])
    G = np.array([-0.5, -0.2])
    rho = svm._rho(np.array([1.0, 1.0]), y, G, np.array([1.0, 1.0]))
    assert rho == pytest.approx(0.5 * ((y * G)[1] + (y * G)[0]))
