import numpy as np
import pytest

from brdfremap.errors import OptimizationError
from brdfremap.leastsq import (OptimizationOutcome, OptimizationProblem,
                               Termination, cost_of, minimize, sweep_eval)


def prob(fn, x0, lo, hi, **kw):
    return OptimizationProblem(fn, np.asarray(x0, float), np.asarray(lo, float),
                               np.asarray(hi, float), **kw)


def test_linear_residual_free_optimum():
    out = minimize(prob(lambda x: x - 3.0, [0.0], [0.0], [10.0]))
    assert abs(out.x_final[0] - 3.0) < 1e-8
    assert out.converged


def test_linear_residual_active_bound():
    out = minimize(prob(lambda x: x - 3.0, [0.0], [0.0], [2.0]))
    assert out.x_final[0] == pytest.approx(2.0, abs=1e-8)


def test_rosenbrock_bounded():
    def residual(x):
        return np.array([1.0 - x[0], 10.0 * (x[1] - x[0] ** 2)])
    out = minimize(prob(residual, [-1.2, 1.0], [-2.0, -2.0], [2.0, 2.0]))
    assert np.max(np.abs(out.x_final - 1.0)) < 1e-6
    assert out.final_cost < 1e-12


def test_cost_sequence_bounds_and_budget():
    calls = []

    def residual(x):
        calls.append(x.copy())
        return np.array([x[0] ** 2 - 2.0, np.sin(x[0])])

    out = minimize(prob(residual, [2.0], [0.0], [5.0], max_evals=50))
    assert out.final_cost <= out.initial_cost
    assert out.n_evals == len(calls)
    assert out.n_evals <= 50


def test_every_evaluation_respects_bounds():
    lo, hi = np.array([0.5, -1.0]), np.array([1.5, 1.0])
    seen = []

    def residual(x):
        seen.append(x.copy())
        return np.array([x[0] - 2.0, x[1] + 3.0, 0.1 * x[0] * x[1]])

    minimize(prob(residual, [1.0, 0.0], lo, hi))
    pts = np.array(seen)
    assert np.all(pts >= lo - 1e-12)
    assert np.all(pts <= hi + 1e-12)


def test_finite_difference_matches_analytic_jacobian():
    # quadratic residual r = A x + 0.5 * x*x elementwise; the forward
    # difference with relative step 1e-4 carries truncation error
    # h/2 * f'' = 5e-5 * max(1, |x|), below 1e-5 of these slopes
    a = np.array([12.0, -9.0, 14.0])
    x = np.array([0.3, 0.7, 1.1])

    def residual(v):
        return a * v + 0.5 * v * v

    h = 1e-4 * np.maximum(np.abs(x), 1.0)
    fd = np.zeros((3, 3))
    for j in range(3):
        xp = x.copy()
        xp[j] += h[j]
        fd[:, j] = (residual(xp) - residual(x)) / h[j]
    analytic = np.diag(a + x)
    rel = np.abs(np.diag(fd) - np.diag(analytic)) / np.abs(np.diag(analytic))
    assert np.max(rel) < 1e-5


def test_deterministic_across_runs():
    def residual(x):
        return np.array([np.exp(x[0]) - 2.0, x[1] ** 3 - 0.5])
    p1 = prob(residual, [0.1, 0.1], [-1.0, -1.0], [2.0, 2.0])
    p2 = prob(residual, [0.1, 0.1], [-1.0, -1.0], [2.0, 2.0])
    o1, o2 = minimize(p1), minimize(p2)
    assert np.array_equal(o1.x_final, o2.x_final)
    assert o1.n_evals == o2.n_evals


def test_nonfinite_at_x0_raises():
    with pytest.raises(OptimizationError):
        minimize(prob(lambda x: np.array([np.nan]), [1.0], [0.0], [2.0]))


def test_nonfinite_mid_search_is_survivable():
    # residual blows up past x = 2.5; the minimizer must still converge to
    # the in-bounds optimum at 2.0 by shrinking rejected steps.
    def residual(x):
        if x[0] > 2.5:
            return np.array([np.inf])
        return np.array([x[0] - 2.0])

    out = minimize(prob(residual, [0.1], [0.0], [10.0]))
    assert abs(out.x_final[0] - 2.0) < 1e-6


def test_x0_outside_bounds_rejected():
    with pytest.raises(OptimizationError):
        prob(lambda x: x, [5.0], [0.0], [2.0])


def test_pinned_parameters_are_held():
    # lower == upper pins a coordinate without confusing the solver
    def residual(x):
        return np.array([x[0] - 1.0, x[1] - 1.0])
    out = minimize(prob(residual, [0.25, 0.5], [0.25, 0.0], [0.25, 2.0]))
    assert out.x_final[0] == 0.25
    assert abs(out.x_final[1] - 1.0) < 1e-8


def test_all_pinned_returns_trivially():
    out = minimize(prob(lambda x: x - 3.0, [1.0], [1.0], [1.0]))
    assert out.x_final[0] == 1.0
    assert out.n_evals == 1
    assert out.converged


def test_termination_max_evals():
    def residual(x):
        return np.array([np.tanh(x[0]) - 0.999999])
    out = minimize(prob(residual, [0.0], [-20.0], [20.0], max_evals=4))
    assert out.termination == Termination.MAX_EVALS
    assert out.n_evals <= 4


def test_trace_streams_eval_costs(tmp_path):
    path = tmp_path / "trace.csv"
    minimize(prob(lambda x: x - 1.0, [0.0], [-5.0], [5.0], trace_path=path))
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("eval,cost")
    assert len(lines) > 2


# ---------------------------------------------------------------------------
# sweep_eval

def test_sweep_constant_function():
    costs = sweep_eval(lambda x: np.array([2.0]), [np.zeros(1)] * 4)
    assert costs == [2.0] * 4


def test_sweep_single_point():
    costs = sweep_eval(lambda x: np.array([x[0]]), [np.array([3.0])])
    assert costs == [cost_of(np.array([3.0]))]


def test_sweep_quadratic_vertex_in_middle():
    grid = [np.array([v]) for v in (-1.0, 0.0, 1.0)]
    costs = sweep_eval(lambda x: x, grid)
    assert costs[1] < costs[0] and costs[1] < costs[2]


def test_sweep_isolates_per_point_failures():
    def fn(x):
        if x[0] == 1.0:
            raise ValueError("boom")
        return x
    costs = sweep_eval(fn, [np.array([0.0]), np.array([1.0]), np.array([2.0])])
    assert costs[0] == 0.0
    assert np.isnan(costs[1])
    assert costs[2] == 2.0


def test_outcome_trivial_constructor():
    out = OptimizationOutcome.trivial(np.array([1.0]), 0.5)
    assert out.final_cost == out.initial_cost == 0.5
    assert out.converged
