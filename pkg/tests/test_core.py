import logging

import numpy as np
import pytest

from sca_kit.core import (
    NON_DESCENT,
    CompositeProblem,
    IterateTrace,
    SmoothProblem,
    StepsizeRule,
    armijo_composite,
    armijo_smooth,
    builtin_rules,
    conditional_gradient,
    dc_linearize,
    exact_linesearch_composite,
    exact_linesearch_smooth,
    gradient_projection,
    inner,
    jacobi,
    proximal_gradient,
    solve_composite,
    solve_smooth,
    stationarity_error_smooth,
)
from sca_kit.core.rules import ApproximationRule
from sca_kit.exceptions import LineSearchStalled, NotDescentDirection, SubproblemInfeasible
from sca_kit.numerics import check_gradient, soft_threshold

from oracles import scalar_argmin


def sq_problem(lo=-1.0, hi=1.0, n=2, convex=True):
    return SmoothProblem(f=lambda x: float(x @ x), grad=lambda x: 2 * x, shape=(n,),
                         lower=lo, upper=hi, convex=convex)


# smooth engine

def test_quadratic_gradient_projection_exact():
    p = sq_problem()
    x, tr = solve_smooth(p, gradient_projection(0.25), StepsizeRule.exact(), tol=1e-10,
                         x0=np.array([0.9, -0.4]))
    assert np.max(np.abs(x)) <= 1e-5
    assert tr.converged and tr.final.error <= 1e-10


def test_gradient_projection_one_step():
    c = np.array([2.0, -0.3])
    p = SmoothProblem(f=lambda x: 0.5 * float((x - c) @ (x - c)), grad=lambda x: x - c,
                      shape=(2,), lower=-1, upper=1, convex=True)
    x, tr = solve_smooth(p, gradient_projection(1.0), StepsizeRule.exact(), tol=1e-12)
    assert np.allclose(x, [1.0, -0.3])
    assert tr.iterations == 1


def test_cubic_counterexample_flags_non_descent():
    # Bx = argmin x^3 on [-1, 1] = -1, but the derivative at 0 vanishes
    p = SmoothProblem(f=lambda x: float(x[0] ** 3), grad=lambda x: 3 * x ** 2, shape=(1,),
                      lower=-1, upper=1)
    rule = ApproximationRule("cubic", lambda prob, x: np.array([-1.0]))
    x, tr = solve_smooth(p, rule, StepsizeRule.armijo(), x0=np.array([0.0]))
    assert tr.has_flag(NON_DESCENT)
    assert tr.reason == NON_DESCENT
    assert tr.records[0].error == 0.0
    assert x[0] == 0.0


def quartic_2d():
    # nonconvex: f = (x1^2 - 1)^2 + (x2^2 - 0.5)^2 + 0.3 x1 x2
    def f(x):
        return float((x[0] ** 2 - 1) ** 2 + (x[1] ** 2 - 0.5) ** 2 + 0.3 * x[0] * x[1])

    def g(x):
        return np.array([4 * x[0] * (x[0] ** 2 - 1) + 0.3 * x[1],
                         4 * x[1] * (x[1] ** 2 - 0.5) + 0.3 * x[0]])

    return SmoothProblem(f=f, grad=g, shape=(2,), lower=-1.5, upper=1.5)


def test_quartic_jacobi_reaches_grid_stationary_point():
    p = quartic_2d()
    x, tr = solve_smooth(p, jacobi(tau=1.0), StepsizeRule.armijo(), tol=1e-10,
                         x0=np.array([0.2, 0.3]), max_iter=500)
    assert tr.converged
    pg = x - p.projection(x - p.grad(x))
    assert np.max(np.abs(pg)) <= 1e-5
    # grid oracle: the limit is a local minimizer among nearby grid points
    xs = np.linspace(-1.5, 1.5, 301)
    vals = np.array([[p.f(np.array([a, b])) for b in xs] for a in xs])
    i, j = np.unravel_index(np.argmin(np.abs(xs[:, None] - x[0]) + np.abs(xs[None, :] - x[1])),
                            vals.shape)
    window = vals[max(i - 5, 0):i + 6, max(j - 5, 0):j + 6]
    assert p.f(x) <= window.min() + 1e-9


def test_bilinear_jacobi_matches_grid():
    def f(x):
        return float(x[0] ** 2 * x[1] ** 2 + (x[0] - 1) ** 2 + (x[1] - 1) ** 2)

    def g(x):
        return np.array([2 * x[0] * x[1] ** 2 + 2 * (x[0] - 1), 2 * x[1] * x[0] ** 2 + 2 * (x[1] - 1)])

    p = SmoothProblem(f=f, grad=g, shape=(2,), lower=-2, upper=2)
    x, tr = solve_smooth(p, jacobi(), StepsizeRule.armijo(), tol=1e-12, max_iter=500)
    assert tr.converged
    xs = np.linspace(-2, 2, 801)
    vals = np.array([[f(np.array([a, b])) for b in xs] for a in xs])
    assert f(x) <= vals.min() + 1e-6
    assert np.max(np.abs(g(x))) <= 1e-6


def test_exact_on_nonconvex_falls_back_to_armijo(caplog):
    p = quartic_2d()
    x = np.array([0.2, 0.3])
    d = gradient_projection(0.1)(p, x) - x
    with caplog.at_level(logging.INFO):
        g = exact_linesearch_smooth(p, x, d)
    assert g == armijo_smooth(p, x, d)
    assert "Armijo" in caplog.text


def test_stationarity_error_zero_at_stationary_point():
    p = sq_problem()
    x = np.zeros(2)
    assert stationarity_error_smooth(p, x, gradient_projection()(p, x)) == 0.0
    x = np.array([0.5, 0.5])
    assert stationarity_error_smooth(p, x, gradient_projection(0.25)(p, x)) > 0


def test_non_finite_best_response_raises():
    rule = ApproximationRule("bad", lambda prob, x: np.full_like(x, np.nan))
    with pytest.raises(SubproblemInfeasible):
        solve_smooth(sq_problem(), rule, StepsizeRule.armijo())


def test_feasible_iterates_and_default_start():
    p = SmoothProblem(f=lambda x: float((x - 3) @ (x - 3)), grad=lambda x: 2 * (x - 3), shape=(3,),
                      lower=1.0, upper=2.0, convex=True)
    assert np.array_equal(p.start(), np.ones(3))
    seen = []
    solve_smooth(p, conditional_gradient(), StepsizeRule.exact(), tol=1e-12,
                 callback=lambda t, x: seen.append(x.copy()))
    assert all(p.is_feasible(x) for x in seen)


# line searches

def test_armijo_hand_chain():
    p = SmoothProblem(f=lambda x: float(x[0] ** 2), grad=lambda x: 2 * x, shape=(1,))
    assert armijo_smooth(p, np.array([1.0]), np.array([-2.0]), 0.25, 0.5) == 0.5


def test_armijo_accepts_unit_step_on_tiny_direction():
    p = sq_problem(lo=None, hi=None)
    x = np.array([1e-9, 0.0])
    assert armijo_smooth(p, x, -x) == 1.0


def test_armijo_rejects_ascent_and_stalls():
    p = sq_problem(lo=None, hi=None)
    with pytest.raises(NotDescentDirection):
        armijo_smooth(p, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    # a lying gradient makes every trial fail
    liar = SmoothProblem(f=p.f, grad=lambda x: -2 * x, shape=(2,))
    with pytest.raises(LineSearchStalled):
        armijo_smooth(liar, np.array([1.0, 0.0]), np.array([1.0, 0.0]), max_m=10)


def test_upper_bound_rule_uses_unit_step():
    p = sq_problem(lo=None, hi=None)
    rule = proximal_gradient(s=0.25, L=2.0)
    assert rule.is_upper_bound
    x, tr = solve_smooth(p, rule, StepsizeRule.armijo(), x0=np.array([1.0, -1.0]), tol=1e-12)
    assert np.all(tr.gammas[:-1] == 1.0)


def test_proximal_warns_when_step_too_long():
    with pytest.warns(UserWarning, match="upper-bound property not guaranteed"):
        rule = proximal_gradient(s=1.0, L=4.0)
    assert not rule.is_upper_bound


def test_exact_linesearch_quadratic_minimizer():
    # f(x + g d) = (1 - g*10/3)^2 + const has its minimizer at 0.3
    p = SmoothProblem(f=lambda x: float(x @ x), grad=lambda x: 2 * x, shape=(1,), convex=True)
    g = exact_linesearch_smooth(p, np.array([3.0]), np.array([-10.0]), tol=1e-12)
    assert g == pytest.approx(0.3, abs=1e-10)


def test_exact_linesearch_boundary_clamp():
    p = SmoothProblem(f=lambda x: float(x @ x), grad=lambda x: 2 * x, shape=(1,), convex=True)
    assert exact_linesearch_smooth(p, np.array([3.0]), np.array([-1.0])) == 1.0


def lasso_1d(mu=1.0, a=2.0, b=3.0):
    sp = SmoothProblem(f=lambda x: 0.5 * float((a * x[0] - b) ** 2),
                       grad=lambda x: np.array([a * (a * x[0] - b)]), shape=(1,), convex=True)
    return CompositeProblem(sp, g=lambda x: mu * abs(float(x[0])),
                            prox=lambda v, s: soft_threshold(v, s * mu))


@pytest.mark.parametrize("x0, bx, mu", [(0.0, 2.0, 1.0), (-1.0, 1.0, 0.5), (2.0, 0.0, 2.0)])
def test_armijo_composite_hand_evaluation(x0, bx, mu):
    p = lasso_1d(mu)
    x, Bx = np.array([x0]), np.array([bx])
    d = Bx - x
    slope = float(p.grad(x) @ d)
    dg = p.g(Bx) - p.g(x)
    expected = None
    step = 1.0
    for _ in range(61):
        if p.f(x + step * d) - p.f(x) <= step * (0.25 * slope + (0.25 - 1) * dg):
            expected = step
            break
        step *= 0.5
    assert armijo_composite(p, x, Bx) == expected


@pytest.mark.parametrize("alpha", [0.01, 0.3, 0.7, 0.99])
def test_armijo_composite_terminates_for_any_alpha(alpha):
    p = lasso_1d()
    x = np.array([0.0])
    Bx = np.array([1.25])
    g = armijo_composite(p, x, Bx, alpha=alpha)
    assert 0 < g <= 1


def test_exact_composite_matches_grid():
    p = lasso_1d(mu=1.0)
    x, Bx = np.array([-0.5]), np.array([2.5])
    g = exact_linesearch_composite(p, x, Bx, tol=1e-12)
    d = Bx - x
    gstar, _ = scalar_argmin(lambda t: p.f(x + t * d) + t * (p.g(Bx) - p.g(x)), 0.0, 1.0)
    assert g == pytest.approx(gstar, abs=1e-7)


# composite engine

def test_zero_smooth_l1_prox_one_step():
    sp = SmoothProblem(f=lambda x: 0.0, grad=lambda x: np.zeros_like(x), shape=(3,), convex=True)
    p = CompositeProblem(sp, g=lambda x: float(np.abs(x).sum()), prox=lambda v, s: soft_threshold(v, s))
    x, tr = solve_composite(p, proximal_gradient(1.0), StepsizeRule.exact(),
                            x0=np.array([0.3, -0.7, 0.9]), tol=1e-12)
    assert np.array_equal(x, np.zeros(3))
    assert tr.iterations == 1


def test_scalar_lasso_fixed_point():
    sp = SmoothProblem(f=lambda x: 0.5 * float((x[0] - 1) ** 2), grad=lambda x: x - 1, shape=(1,),
                       convex=True)
    p = CompositeProblem(sp, g=lambda x: 0.5 * abs(float(x[0])),
                         prox=lambda v, s: soft_threshold(v, 0.5 * s))
    x, tr = solve_composite(p, proximal_gradient(1.0), StepsizeRule.exact(), tol=1e-12)
    assert x[0] == pytest.approx(0.5, abs=1e-12)


def test_composite_rejects_smooth_and_vice_versa():
    p = sq_problem()
    with pytest.raises(TypeError):
        solve_composite(p, gradient_projection(), StepsizeRule.exact())
    with pytest.raises(TypeError):
        solve_smooth(CompositeProblem.zero(p), gradient_projection(), StepsizeRule.exact())


def test_midpoint_convexity_check():
    p = CompositeProblem(sq_problem(), g=lambda x: float(np.abs(x).sum()))
    pts = [np.array(v) for v in ([1.0, -1.0], [0.0, 2.0], [-3.0, 0.5])]
    assert p.midpoint_convexity_violations(pts) == 0
    bad = CompositeProblem(sq_problem(), g=lambda x: -float(x @ x))
    assert bad.midpoint_convexity_violations(pts) > 0


# rules

def test_dc_surrogate_upper_bounds():
    f1, f2 = (lambda x: float(x @ x)), (lambda x: float(np.sum(x ** 4)))
    rule = dc_linearize(f1, lambda x: 2 * x, lambda x: 4 * x ** 3, f2=f2)
    p = SmoothProblem(f=lambda x: f1(x) - f2(x), grad=lambda x: 2 * x - 4 * x ** 3, shape=(1,),
                      lower=-1, upper=1)
    for xt in np.linspace(-1, 1, 21):
        for y in np.linspace(-1, 1, 41):
            xa, ya = np.array([xt]), np.array([y])
            assert rule.surrogate(p, ya, xa) >= p.f(ya) - 1e-12
    assert rule.is_upper_bound


def test_builtin_rules_registry():
    assert set(builtin_rules()) == {"conditional_gradient", "gradient_projection", "proximal_gradient",
                                    "jacobi", "dc_linearize"}


def test_jacobi_parallel_matches_serial():
    p = quartic_2d()
    x = np.array([0.4, -0.2])
    a = jacobi(tau=0.5)(p, x)
    b = jacobi(tau=0.5, workers=2)(p, x)
    assert np.allclose(a, b, atol=1e-10)


def test_gradient_projection_scaled_box_only():
    p = SmoothProblem(f=lambda x: float(x @ x), grad=lambda x: 2 * x, shape=(2,),
                      project=lambda x: x / max(1.0, float(np.linalg.norm(x))))
    with pytest.raises(ValueError):
        gradient_projection(scaling=np.ones(2))(p, np.ones(2))


# trace

def test_trace_csv_round_trip(tmp_path):
    tr = IterateTrace()
    tr.append(0, 1.5, 0.5, 0.1, 0.001)
    tr.append(1, 1.0, float("nan"), 1e-7, 0.002)
    tr.columns["extra"] = [3.0, 4.0]
    path = tmp_path / "t.csv"
    text = tr.to_csv(path)
    assert text.splitlines()[0] == "iter,objective,gamma,error,seconds,extra"
    back = IterateTrace.from_csv(path)
    assert back.records[0] == tr.records[0]
    assert np.isnan(back.records[1].gamma)
    assert back.columns["extra"] == [3.0, 4.0]
    assert back.first_below(1e-6) == 1 and back.iterations == 1


# gradients and complex variables

def test_complex_inner_convention():
    a = np.array([1 + 2j, -1j])
    b = np.array([3 - 1j, 2 + 2j])
    assert inner(a, b) == pytest.approx(np.real(np.sum(np.conj(a) * b)))


def test_composite_reduction_gradient_check():
    p = quartic_2d()
    assert check_gradient(p.f, p.grad, np.array([0.3, -0.8])) <= 1e-7
