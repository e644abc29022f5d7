"""Bounded nonlinear least squares over a black-box residual function.

The residual function is treated as opaque (each evaluation is typically a
full render), so derivatives come from forward finite differences and the
evaluation budget is the unit of cost.  The engine is scipy's Trust Region
Reflective solver behind a thin contract layer that adds: strict evaluation
accounting (finite-difference probes included), graceful handling of
non-finite residuals mid-search, support for pinned parameters
(lower == upper), and an optional per-evaluation CSV trace.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import OptimizationError

log = logging.getLogger(__name__)

FD_REL_STEP = 1e-4
# Residual vector substituted when the black box returns non-finite values:
# large enough that the step is always rejected and the trust region shrinks.
_BAD_RESIDUAL = 1e100


class Termination(enum.Enum):
    STEP_TOL = "step_tol"
    GRAD_TOL = "grad_tol"
    COST_TOL = "cost_tol"
    MAX_EVALS = "max_evals"


_SCIPY_STATUS = {
    0: Termination.MAX_EVALS,
    1: Termination.GRAD_TOL,
    2: Termination.COST_TOL,
    3: Termination.STEP_TOL,
    4: Termination.STEP_TOL,   # ftol and xtol both satisfied
}


@dataclass
class OptimizationProblem:
    residual_fn: object
    x0: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    max_evals: int = 400
    step_tol: float = 1e-8
    cost_tol: float = 1e-10
    grad_tol: float = 1e-12
    trace_path: object = None

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, float))
        self.lower = np.broadcast_to(np.asarray(self.lower, float), self.x0.shape).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, float), self.x0.shape).copy()
        if np.any(self.lower > self.upper):
            raise OptimizationError("lower bound exceeds upper bound")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise OptimizationError(f"x0 {self.x0} violates bounds")


@dataclass
class OptimizationOutcome:
    x_final: np.ndarray
    initial_cost: float
    final_cost: float
    n_evals: int
    termination: Termination
    converged: bool

    @classmethod
    def trivial(cls, x, cost, n_evals=1):
        """Outcome for a stage with nothing to optimize."""
        return cls(np.asarray(x, float), cost, cost, n_evals,
                   Termination.COST_TOL, True)


def cost_of(residual: np.ndarray) -> float:
    residual = np.asarray(residual, float)
    return 0.5 * float(np.dot(residual, residual))


def minimize(problem: OptimizationProblem) -> OptimizationOutcome:
    """Bound-constrained trust-region least squares.

    Jacobians use forward finite differences with relative step 1e-4,
    clipped to stay inside the bounds.  The accepted-cost sequence is
    monotone non-increasing and the whole procedure is deterministic for a
    deterministic residual function.  ``max_evals`` caps the total number
    of residual evaluations including finite-difference probes.
    """
    p = problem
    n = p.x0.size

    free = p.upper - p.lower > 0.0
    x_full = p.x0.copy()

    trace_file = None
    trace_writer = None
    if p.trace_path is not None:
        trace_file = open(p.trace_path, "w", newline="")
        trace_writer = csv.writer(trace_file)
        trace_writer.writerow(["eval", "cost"] + [f"x{i}" for i in range(n)])

    evals = 0

    def full_residual(x_free):
        nonlocal evals
        evals += 1
        x_full[free] = x_free
        r = np.asarray(p.residual_fn(x_full.copy()), float).ravel()
        if trace_writer is not None:
            finite = np.all(np.isfinite(r))
            trace_writer.writerow(
                [evals, cost_of(r) if finite else "nan"] + list(x_full))
        return r

    try:
        r0 = full_residual(p.x0[free])
        if not np.all(np.isfinite(r0)):
            raise OptimizationError("residual function is non-finite at x0")
        initial_cost = cost_of(r0)

        if not np.any(free) or initial_cost == 0.0:
            # nothing to optimize, or already at the global optimum
            return OptimizationOutcome(p.x0.copy(), initial_cost, initial_cost,
                                       evals, Termination.COST_TOL, True)

        # TRF seeds its trust radius with ||x0||, which degenerates when the
        # start sits at or near zero; solving in shifted coordinates
        # y = x - x0 + d with d_i = max(1, |x0_i|) keeps the initial radius
        # healthy without changing the problem.
        x0_free = p.x0[free]
        d = np.maximum(1.0, np.abs(x0_free))
        offset = x0_free - d

        def guarded(y_free):
            r = full_residual(y_free + offset)
            if not np.all(np.isfinite(r)):
                # reject this trial point: huge finite cost shrinks the region
                return np.full(r.shape, _BAD_RESIDUAL)
            return r

        # scipy's max_nfev counts iteration evals only; finite-difference
        # probes add n per Jacobian, so budget the main loop accordingly.
        max_nfev = max(1, (p.max_evals - 1) // (int(np.count_nonzero(free)) + 1))
        result = least_squares(
            guarded, d, jac="2-point",
            bounds=(p.lower[free] - offset, p.upper[free] - offset),
            method="trf", diff_step=FD_REL_STEP, x_scale=1.0,
            xtol=p.step_tol, ftol=p.cost_tol, gtol=p.grad_tol,
            max_nfev=max_nfev)
    finally:
        if trace_file is not None:
            trace_file.close()

    x_out = p.x0.copy()
    x_out[free] = result.x + offset
    np.clip(x_out, p.lower, p.upper, out=x_out)
    final_cost = min(float(result.cost), initial_cost)
    termination = _SCIPY_STATUS.get(result.status, Termination.MAX_EVALS)
    return OptimizationOutcome(
        x_final=x_out, initial_cost=initial_cost, final_cost=final_cost,
        n_evals=evals, termination=termination,
        converged=result.status > 0)


def sweep_eval(residual_fn, grid) -> list:
    """Cost (0.5 ||r||^2) at each grid point, order preserving.

    Failures are reported per point: the cost is NaN and a warning is
    logged; the sweep continues.
    """
    costs = []
    for i, x in enumerate(grid):
        try:
            costs.append(cost_of(residual_fn(np.asarray(x, float))))
        except Exception as exc:  # per-point isolation is the contract
            log.warning("sweep point %d (%s) failed: %s", i, x, exc)
            costs.append(float("nan"))
    return costs
