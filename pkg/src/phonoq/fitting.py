"""Bounded Levenberg-Marquardt least squares with finite-difference Jacobians.

Every fitting routine in this package runs through :func:`least_squares_fit`.
Parameters flagged as log-scale are optimized as their natural logarithm,
which enforces positivity and conditions problems whose parameters span many
decades (quality factors of 1e7 next to loss tangents of 1e-5).

Uncertainties are the usual asymptotic one-sigma estimate: the covariance is
sigma^2 (J^T J)^-1 with sigma^2 = cost / (N - k), evaluated at the solution,
and the quoted errors are the square roots of its diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class FitError(ValueError):
    """Raised for invalid fit inputs (non-finite residuals, bad bounds)."""


@dataclass
class FitProblem:
    """A bounded least-squares problem: minimize ``sum(residual(x)**2)``.

    Attributes
    ----------
    residual : callable
        Maps a parameter vector to a residual vector.
    x0 : array
        Initial parameter values, must satisfy ``lower <= x0 <= upper``.
    lower, upper : array or None
        Elementwise bounds; None means unbounded.
    log_scale : bool array or None
        Parameters marked True are optimized as log(x); they must be
        strictly positive (and so must their lower bounds, if finite).
    x_scale : array or None
        Characteristic scale per parameter, used for difference steps and
        the step-size convergence norm.  Defaults to max(|x0|, 1) for linear
        parameters and 1 for log-scale ones.  Parameters like a resonance
        frequency, whose interesting variation (a linewidth) is far smaller
        than the value itself, need an explicit scale.
    max_iter : int
        Iteration cap; hitting it flags the result as not converged.
    step_tol, grad_tol, cost_tol : float
        Convergence thresholds on the step norm, the gradient infinity
        norm, and the relative cost decrease.
    """

    residual: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    log_scale: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    max_iter: int = 200
    step_tol: float = 1e-10
    grad_tol: float = 1e-10
    cost_tol: float = 1e-14

    def __post_init__(self):
        self.x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        n = self.x0.size
        if self.lower is None:
            self.lower = np.full(n, -np.inf)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.log_scale is None:
            self.log_scale = np.zeros(n, dtype=bool)
        self.log_scale = np.broadcast_to(np.asarray(self.log_scale, dtype=bool), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise FitError("lower bounds exceed upper bounds")
        if np.any(self.x0 < self.lower) or np.any(self.x0 > self.upper):
            raise FitError("initial parameters violate the bounds")
        if np.any(self.log_scale & (self.x0 <= 0)):
            raise FitError("log-scale parameters must be strictly positive")
        if self.x_scale is None:
            self.x_scale = np.where(self.log_scale, 1.0, np.maximum(np.abs(self.x0), 1.0))
        self.x_scale = np.broadcast_to(np.asarray(self.x_scale, dtype=float), (n,)).copy()
        self.x_scale = np.where(self.log_scale, 1.0, self.x_scale)
        if np.any(self.x_scale <= 0):
            raise FitError("x_scale entries must be positive")
        for tol in (self.step_tol, self.grad_tol, self.cost_tol):
            if tol <= 0:
                raise FitError("tolerances must be positive")


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    ``sigma`` holds the one-sigma uncertainties (square roots of the
    covariance diagonal); ``cost`` is the final sum of squared residuals.
    ``cost_trace`` records the cost after each accepted step.
    """

    params: np.ndarray
    sigma: np.ndarray
    cost: float
    cov: np.ndarray
    converged: bool
    n_iter: int
    message: str = ""
    cost_trace: list = field(default_factory=list)


def finite_difference_jacobian(residual, params, rel_step=None, scale=None):
    """Central-difference Jacobian of ``residual`` at ``params``.

    The step for parameter i is ``rel_step * scale_i`` with scale defaulting
    to max(|p_i|, 1); the default rel_step, cbrt(eps), balances truncation
    against roundoff for central differences.  Raises FitError naming the
    parameter if any stencil point produces a non-finite value.
    """
    p = np.atleast_1d(np.asarray(params, dtype=float))
    if not np.all(np.isfinite(p)):
        raise FitError("parameters must be finite")
    if rel_step is None:
        rel_step = float(np.cbrt(np.finfo(float).eps))
    if scale is None:
        scale = np.maximum(np.abs(p), 1.0)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), p.shape)
    r0 = np.atleast_1d(np.asarray(residual(p), dtype=float))
    cols = []
    for i in range(p.size):
        h = rel_step * scale[i]
        pp = p.copy()
        pp[i] = p[i] + h
        rp = np.asarray(residual(pp), dtype=float)
        pp[i] = p[i] - h
        rm = np.asarray(residual(pp), dtype=float)
        if not (np.all(np.isfinite(rp)) and np.all(np.isfinite(rm))):
            raise FitError(f"non-finite residual in difference stencil of parameter {i}")
        cols.append((rp - rm) / (2.0 * h))
    return np.column_stack(cols) if cols else np.empty((r0.size, 0))


def _encode(x, log_scale):
    u = np.array(x, dtype=float)
    u[log_scale] = np.log(u[log_scale])
    return u


def _decode(u, log_scale):
    x = np.array(u, dtype=float)
    x[log_scale] = np.exp(x[log_scale])
    return x


def _encode_bound(b, log_scale):
    out = np.array(b, dtype=float)
    with np.errstate(divide="ignore"):
        out[log_scale] = np.where(
            out[log_scale] > 0, np.log(np.abs(out[log_scale])),
            np.where(np.isfinite(out[log_scale]), -745.0, out[log_scale]),
        )
    return out


def least_squares_fit(problem: FitProblem) -> FitResult:
    """Solve a bounded nonlinear least-squares problem.

    Levenberg-Marquardt with Marquardt diagonal scaling; candidate steps are
    clipped into the bound box and accepted only if they lower the cost, so
    the cost is non-increasing across accepted steps.  The Jacobian is a
    central finite difference in the (possibly log-transformed) internal
    parameter space.
    """
    log = problem.log_scale
    u = _encode(problem.x0, log)
    lb = _encode_bound(problem.lower, log)
    ub = _encode_bound(problem.upper, log)
    u_scale = problem.x_scale  # already 1 for log-scale parameters

    def resid_u(uv):
        return np.atleast_1d(np.asarray(problem.residual(_decode(uv, log)), dtype=float))

    r = resid_u(u)
    if not np.all(np.isfinite(r)):
        raise FitError("residual is non-finite at the initial parameters")
    cost = float(r @ r)
    trace = [cost]

    lam = 1e-3
    converged = False
    message = "iteration cap reached"
    n_iter = 0
    for n_iter in range(1, problem.max_iter + 1):
        J = finite_difference_jacobian(resid_u, u, rel_step=1e-6, scale=u_scale)
        g = J.T @ r
        if np.max(np.abs(g), initial=0.0) < problem.grad_tol:
            converged, message = True, "gradient below tolerance"
            break
        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        diag[diag <= 0] = np.max(diag, initial=1.0) or 1.0

        accepted = False
        while lam < 1e15:
            A = JtJ + lam * np.diag(diag)
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(A, -g, rcond=None)[0]
            u_new = np.clip(u + step, lb, ub)
            r_new = resid_u(u_new)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new <= cost:
                accepted = True
                break
            lam *= 4.0
        if not accepted:
            converged, message = True, "no downhill step found (local minimum)"
            break

        step_size = np.max(np.abs(u_new - u) / u_scale, initial=0.0)
        decrease = cost - cost_new
        u, r, cost = u_new, r_new, cost_new
        trace.append(cost)
        lam = max(lam / 4.0, 1e-12)
        if step_size < problem.step_tol:
            converged, message = True, "step below tolerance"
            break
        if decrease <= problem.cost_tol * max(cost, 1e-300):
            converged, message = True, "cost decrease below tolerance"
            break
        if cost == 0.0:
            converged, message = True, "exact fit"
            break

    x = _decode(u, log)
    J = finite_difference_jacobian(resid_u, u, rel_step=1e-6, scale=u_scale)
    m, k = J.shape
    dof = m - k
    sigma2 = cost / dof if dof > 0 else 0.0
    cov_u = sigma2 * np.linalg.pinv(J.T @ J)
    scale = np.where(log, x, 1.0)
    cov = scale[:, None] * cov_u * scale[None, :]
    cov = 0.5 * (cov + cov.T)
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        params=x, sigma=sigma, cost=cost, cov=cov,
        converged=converged, n_iter=n_iter, message=message, cost_trace=trace,
    )


def fit(residual, x0, lower=None, upper=None, log_scale=None, x_scale=None, **kwargs) -> FitResult:
    """Convenience wrapper building a FitProblem and solving it."""
    return least_squares_fit(
        FitProblem(residual=residual, x0=np.asarray(x0, dtype=float),
                   lower=lower, upper=upper, log_scale=log_scale, x_scale=x_scale, **kwargs)
    )


def propagate_sigma(func, params, cov):
    """One-sigma uncertainty of scalar ``func(params)`` by linear propagation."""
    p = np.asarray(params, dtype=float)
    grad = finite_difference_jacobian(lambda q: np.atleast_1d(func(q)), p).ravel()
    var = float(grad @ np.asarray(cov) @ grad)
    return np.sqrt(max(var, 0.0))
