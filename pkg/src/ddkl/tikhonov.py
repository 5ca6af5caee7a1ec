"""Regularized least squares over a kernel matrix.

Solves ``min_a ||A a - y||^2 + lam * ||Q a||^2`` through its normal
equations ``(A'A + lam Q'Q) a = A'y``, with a direct factorization or
conjugate gradients.  The objective uses the squared-norm convention
throughout, so the normal equations are exactly its stationarity
condition.  ``lam = 0`` with a nonsingular matrix reduces to plain
kernel interpolation, which has its own entry point with a pivot-based
conditioning check.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import ConvergenceError, IllConditionedError

_REG_MATRICES = ("identity", "first_difference")
_METHODS = ("direct", "conjugate_gradient")

# Relative normal-equation residual every returned solution must meet;
# iterative refinement runs until it does.
_RESIDUAL_TARGET = 1e-9
_MAX_REFINEMENTS = 5


@dataclass(frozen=True)
class TikhonovConfig:
    """Solver configuration.

    Parameters
    ----------
    lam : float
        Regularization parameter, >= 0.
    reg_matrix : str
        Regularization operator Q: ``identity`` or ``first_difference``
        (rows ``(-1, 1)`` on consecutive coefficients).
    method : str
        ``direct`` (Cholesky on the normal equations) or
        ``conjugate_gradient``.
    tol : float
        Relative residual target for conjugate gradients.
    max_iter : int
        Iteration budget for conjugate gradients.
    """

    lam: float = 0.0
    reg_matrix: str = "identity"
    method: str = "direct"
    tol: float = 1e-10
    max_iter: int = 10000

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if self.reg_matrix not in _REG_MATRICES:
            raise ValueError(
                f"unknown reg_matrix {self.reg_matrix!r}; expected one of {_REG_MATRICES}"
            )
        if self.method not in _METHODS:
            raise ValueError(
                f"unknown method {self.method!r}; expected one of {_METHODS}"
            )
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass(frozen=True)
class Solution:
    """Solver output.

    ``objective`` always equals ``residual_norm**2 + lam * reg_norm**2``
    for the config's lam.  ``iterations`` is None for direct solves.
    """

    alpha: np.ndarray
    residual_norm: float
    reg_norm: float
    objective: float
    solve_time_s: float
    iterations: int = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)


def regularization_matrix(name, n):
    """Materialize the operator Q by name for an n-coefficient problem."""
    if name == "identity":
        return np.eye(n)
    if name == "first_difference":
        Q = np.zeros((max(n - 1, 0), n))
        for i in range(n - 1):
            Q[i, i] = -1.0
            Q[i, i + 1] = 1.0
        return Q
    raise ValueError(f"unknown reg_matrix {name!r}; expected one of {_REG_MATRICES}")


def _matrix_of(A):
    values = getattr(A, "values", A)
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError(f"kernel matrix must be square, got shape {values.shape}")
    return values


def _check_targets(values, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (values.shape[0],):
        raise ValueError(
            f"targets shape {y.shape} does not match matrix size {values.shape[0]}"
        )
    return y


def conjugate_gradient(M, b, tol, max_iter):
    """Plain conjugate gradients for a symmetric positive definite system.

    Returns ``(x, iterations, residual_history)`` where the history holds
    the relative residual after each iteration.  Raises
    ``ConvergenceError`` when the budget runs out and
    ``IllConditionedError`` when a search direction has non-positive
    curvature, which means the matrix is not positive definite.
    """
    b = np.asarray(b, dtype=np.float64)
    b_norm = float(np.linalg.norm(b))
    x = np.zeros_like(b)
    if b_norm == 0.0:
        return x, 0, []
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    history = []
    for iteration in range(1, max_iter + 1):
        Mp = M @ p
        curvature = float(p @ Mp)
        if curvature <= 0.0:
            raise IllConditionedError(
                "conjugate gradient hit a non-positive curvature direction; "
                "the system matrix is not positive definite",
                pivot=curvature,
                threshold=0.0,
            )
        step = rs / curvature
        x += step * p
        r -= step * Mp
        rs_next = float(r @ r)
        relative = np.sqrt(rs_next) / b_norm
        history.append(relative)
        if relative <= tol:
            return x, iteration, history
        p = r + (rs_next / rs) * p
        rs = rs_next
    raise ConvergenceError(
        f"conjugate gradient did not reach tol={tol} in {max_iter} iterations "
        f"(final relative residual {history[-1]:.3e})",
        residuals=history,
    )


def _refine(solve, M, b, x):
    """Iterative refinement until the relative residual target is met."""
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return x
    for _ in range(_MAX_REFINEMENTS):
        residual = b - M @ x
        if np.linalg.norm(residual) <= _RESIDUAL_TARGET * b_norm:
            break
        x = x + solve(residual)
    return x


def solve_tikhonov(A, y, cfg):
    """Minimize the regularized objective via its normal equations.

    ``A`` may be a KernelMatrix or a plain square array.  The returned
    solution satisfies the normal equations with relative residual at
    most 1e-8.
    """
    values = _matrix_of(A)
    y = _check_targets(values, y)
    n = values.shape[0]
    start = time.perf_counter()
    M = values.T @ values
    if cfg.reg_matrix == "identity":
        M = M + cfg.lam * np.eye(n)
    else:
        Q = regularization_matrix(cfg.reg_matrix, n)
        M = M + cfg.lam * (Q.T @ Q)
    b = values.T @ y
    iterations = None
    if cfg.method == "direct":
        try:
            factor = scipy.linalg.cho_factor(M, lower=True)
        except scipy.linalg.LinAlgError:
            smallest = float(np.min(np.abs(np.linalg.eigvalsh(M))))
            raise IllConditionedError(
                "normal-equation matrix is not positive definite; "
                "increase lam or check the kernel for duplicate points",
                pivot=smallest,
                threshold=0.0,
            ) from None
        solve = lambda rhs: scipy.linalg.cho_solve(factor, rhs)
        alpha = _refine(solve, M, b, solve(b))
    else:
        alpha, iterations, _ = conjugate_gradient(M, b, cfg.tol, cfg.max_iter)
    elapsed = time.perf_counter() - start
    residual_norm = float(np.linalg.norm(values @ alpha - y))
    if cfg.reg_matrix == "identity":
        reg_norm = float(np.linalg.norm(alpha))
    else:
        reg_norm = float(np.linalg.norm(regularization_matrix(cfg.reg_matrix, n) @ alpha))
    return Solution(
        alpha=alpha,
        residual_norm=residual_norm,
        reg_norm=reg_norm,
        objective=residual_norm**2 + cfg.lam * reg_norm**2,
        solve_time_s=elapsed,
        iterations=iterations,
    )


def solve_interpolation(A, y):
    """Solve ``A a = y`` exactly, the zero-regularization case.

    Refuses matrices whose LU factorization produces a pivot smaller
    than ``1e-12 * ||A||_1``, raising ``IllConditionedError`` with the
    offending pivot magnitude.
    """
    values = _matrix_of(A)
    y = _check_targets(values, y)
    start = time.perf_counter()
    norm = float(np.linalg.norm(values, 1))
    threshold = 1e-12 * norm
    with warnings.catch_warnings():
        # the pivot check below turns exact singularity into a typed error
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(values)
    pivots = np.abs(np.diag(lu))
    smallest = float(pivots.min()) if pivots.size else 0.0
    if smallest < threshold:
        raise IllConditionedError(
            f"kernel matrix is numerically singular (pivot {smallest:.3e} below "
            f"{threshold:.3e}); duplicated or near-duplicated points overfit "
            "the interpolation problem",
            pivot=smallest,
            threshold=threshold,
        )
    solve = lambda rhs: scipy.linalg.lu_solve((lu, piv), rhs)
    alpha = _refine(solve, values, y, solve(y))
    elapsed = time.perf_counter() - start
    residual_norm = float(np.linalg.norm(values @ alpha - y))
    return Solution(
        alpha=alpha,
        residual_norm=residual_norm,
        reg_norm=float(np.linalg.norm(alpha)),
        objective=residual_norm**2,
        solve_time_s=elapsed,
    )


def predict(alpha, spec, train, query):
    """Evaluate the fitted function at query points.

    ``alpha`` may be a Solution or a coefficient vector; ``query`` a
    single point (returns a float) or a batch (returns a vector).  The
    value is the kernel expansion over the training points.
    """
    from .kernels import cross_matrix

    coeffs = np.asarray(getattr(alpha, "alpha", alpha), dtype=np.float64)
    points = getattr(train, "points", train)
    if coeffs.shape != (points.shape[0],):
        raise ValueError(
            f"coefficient length {coeffs.shape} does not match {points.shape[0]} "
            "training points"
        )
    query = np.asarray(query, dtype=np.float64)
    single = query.ndim == 1
    batch = query[None, :] if single else query
    values = cross_matrix(spec, batch, points) @ coeffs
    return float(values[0]) if single else values
