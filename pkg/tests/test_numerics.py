import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sca_kit.exceptions import InvalidFunctionValue, NoBracketError, NotHermitianError
from sca_kit.numerics import (
    Interval,
    bisect_root,
    check_gradient,
    hermitian_eig,
    project_box,
    soft_threshold,
)


def test_bisect_linear_root():
    assert bisect_root(lambda g: 2 * g - 0.6, (0.0, 1.0), tol=1e-10) == pytest.approx(0.3, abs=1e-10)


def test_bisect_odd_cubic():
    assert bisect_root(lambda g: g ** 3, (-1.0, 1.0)) == pytest.approx(0.0, abs=1e-8)


def test_bisect_lasso_line_derivative():
    # f(x) = 0.5||Ax - b||^2 along d from x = 0; minimizer gamma = a.b / |a|^2
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    b = np.array([1.0, 1.0])
    d = np.array([1.0, 0.0])
    Ad = A @ d

    def dphi(g):
        return float(Ad @ (g * Ad - b))

    expected = float(Ad @ b) / float(Ad @ Ad)
    assert bisect_root(dphi, (0.0, 2.0), tol=1e-12) == pytest.approx(expected, abs=1e-11)


def test_bisect_halves_bracket_each_step():
    widths = []

    def g(x):
        widths.append(x)
        return x - 0.123456

    bisect_root(g, (0.0, 1.0), tol=1e-6, max_iter=64)
    mids = widths[2:]
    # midpoints move by exactly half the previous bracket width
    steps = np.abs(np.diff(mids))
    assert np.allclose(steps[1:] / steps[:-1], 0.5)


def test_bisect_final_width_within_tol():
    root = bisect_root(lambda x: x - 1 / 3, (0.0, 1.0), tol=1e-9)
    assert abs(root - 1 / 3) <= 1e-9


def test_bisect_rejects_missing_bracket():
    with pytest.raises(NoBracketError):
        bisect_root(lambda x: x + 5, (0.0, 1.0))


def test_bisect_rejects_nan():
    with pytest.raises(InvalidFunctionValue):
        bisect_root(lambda x: math.nan if x > 0.4 else x - 0.5, (0.0, 1.0))


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(0.0, math.inf)
    assert Interval(0.0, 2.0).width == 2.0


def test_project_box_examples():
    assert np.array_equal(project_box([2, -2], [0, 0], [1, 1]), [1, 0])
    x = np.array([0.2, 0.7])
    assert np.array_equal(project_box(x, 0, 1), x)
    assert project_box(0.37, 0.0, 1.0) == pytest.approx(0.37)


def test_project_box_errors():
    with pytest.raises(ValueError):
        project_box([0.0, 0.0], [1.0, 0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        project_box([0.0, 0.0], np.zeros(3), np.ones(3))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_project_box_idempotent_nonexpansive(x, y):
    lo, hi = -np.ones(3), 2 * np.ones(3)
    px, py = project_box(x, lo, hi), project_box(y, lo, hi)
    assert np.array_equal(project_box(px, lo, hi), px)
    assert np.max(np.abs(px - py)) <= np.max(np.abs(np.subtract(x, y))) + 1e-15


def test_soft_threshold_examples():
    assert soft_threshold(2.0, 1.0) == 1.0
    assert soft_threshold(-0.5, 1.0) == 0.0
    b = np.array([-1.5, 0.0, 3.0])
    assert np.array_equal(soft_threshold(b, 0.0), b)
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=8), st.floats(0, 50))
def test_soft_threshold_shrinks_and_keeps_sign(b, a):
    b = np.array(b)
    s = soft_threshold(b, a)
    assert np.all(np.abs(s) <= np.abs(b))
    assert np.all((s == 0) | (np.sign(s) == np.sign(b)))


def test_eig_identity_and_diagonal():
    w, _ = hermitian_eig(np.eye(3))
    assert np.allclose(w, 1.0)
    w, V = hermitian_eig(np.diag([1.0, 3.0]))
    assert np.allclose(w, [3.0, 1.0])
    assert np.allclose(np.abs(V), [[0, 1], [1, 0]])


@pytest.mark.parametrize("n", [2, 4, 10])
def test_eig_reconstruction(n):
    rng = np.random.default_rng(n)
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    M = X + X.conj().T
    w, V = hermitian_eig(M)
    assert np.all(np.diff(w) <= 0)
    assert np.allclose(V.conj().T @ V, np.eye(n), atol=1e-12)
    assert np.max(np.abs(V @ np.diag(w) @ V.conj().T - M)) <= 1e-11
    assert abs(np.trace(M).real - w.sum()) <= 1e-9 * n * (1 + np.abs(w).max())
    assert np.allclose(w, np.sort(np.linalg.eigvalsh(M))[::-1], atol=1e-11)


def test_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        hermitian_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotHermitianError):
        hermitian_eig(np.ones((2, 3)))


def test_check_gradient_quadratic():
    x = np.array([0.3, -1.2, 2.0])
    dev = check_gradient(lambda z: 0.5 * float(z @ z), lambda z: z, x, h=1e-5)
    assert dev <= 1e-7


def test_check_gradient_catches_wrong_gradient():
    x = np.array([1.0, 2.0])
    assert check_gradient(lambda z: float(z @ z), lambda z: z, x) > 0.1


def test_check_gradient_propagates_nan():
    x = np.array([1.0])
    assert math.isnan(check_gradient(lambda z: float(z[0]), lambda z: np.array([math.nan]), x))
