"""Scikit-learn style estimators over the kernel solvers.

``GlobalKernelRidge`` fits the regularized kernel expansion with the
direct or conjugate-gradient global solver.  ``DecomposedKernelRidge``
fits the same model through the overlapping block solver and exposes its
iteration diagnostics.  ``LayerStackTransformer`` applies a fixed
feature-map stack as a plain transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import decomposed, kernels, tikhonov
from .decomposition import uniform_decompose


class _KernelExpansionMixin:
    """Shared kernel construction and prediction for the regressors."""

    def _kernel_spec(self):
        return kernels.KernelSpec(
            outer=self.kernel,
            sigma=self.sigma,
            degree=self.degree,
            offset=self.offset,
            truncation_radius=self.truncation_radius,
            layers=tuple(self.layers),
        )

    def predict(self, X):
        """Evaluate the fitted kernel expansion at query rows."""
        check_is_fitted(self, "alpha_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but the estimator was fitted "
                f"with {self.n_features_in_}"
            )
        return kernels.cross_matrix(self._kernel_spec(), X, self.X_fit_) @ self.alpha_


class GlobalKernelRidge(_KernelExpansionMixin, RegressorMixin, BaseEstimator):
    """Kernel ridge regression solved globally via its normal equations.

    Parameters
    ----------
    kernel : str, default="gaussian"
        Outer kernel: ``gaussian``, ``linear`` or ``polynomial``.
    sigma : float, default=1.0
        Gaussian bandwidth.
    degree : int, default=2
        Polynomial degree.
    offset : float, default=1.0
        Polynomial offset.
    truncation_radius : float or None, default=None
        Compact-support radius for the gaussian kernel.
    layers : tuple of LayerMap, default=()
        Fixed feature maps applied before the outer kernel.
    lam : float, default=1e-2
        Regularization parameter.
    reg_matrix : str, default="identity"
        Regularization operator, ``identity`` or ``first_difference``.
    method : str, default="direct"
        ``direct`` or ``conjugate_gradient``.
    tol : float, default=1e-10
        Conjugate-gradient relative residual target.
    max_iter : int, default=10000
        Conjugate-gradient iteration budget.

    Attributes
    ----------
    alpha_ : ndarray of shape (n_samples,)
        Fitted expansion coefficients.
    solution_ : Solution
        Full solver output including norms and timing.
    X_fit_ : ndarray of shape (n_samples, n_features)
        Training rows, kept for prediction.
    """

    def __init__(self, kernel="gaussian", sigma=1.0, degree=2, offset=1.0,
                 truncation_radius=None, layers=(), lam=1e-2,
                 reg_matrix="identity", method="direct", tol=1e-10,
                 max_iter=10000):
        self.kernel = kernel
        self.sigma = sigma
        self.degree = degree
        self.offset = offset
        self.truncation_radius = truncation_radius
        self.layers = layers
        self.lam = lam
        self.reg_matrix = reg_matrix
        self.method = method
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        spec = self._kernel_spec()
        cfg = tikhonov.TikhonovConfig(
            lam=self.lam,
            reg_matrix=self.reg_matrix,
            method=self.method,
            tol=self.tol,
            max_iter=self.max_iter,
        )
        matrix = kernels.assemble(spec, X)
        self.solution_ = tikhonov.solve_tikhonov(matrix, y, cfg)
        self.alpha_ = self.solution_.alpha
        self.X_fit_ = X
        self.n_features_in_ = X.shape[1]
        return self


class DecomposedKernelRidge(_KernelExpansionMixin, RegressorMixin, BaseEstimator):
    """Kernel ridge regression solved block by block with halo exchange.

    Fits the same expansion as ``GlobalKernelRidge`` but through the
    overlapping decomposition: samples are split into ``p`` contiguous
    blocks sharing ``overlap`` indices, each block solves its penalized
    local problem per outer iteration, and local solutions are gathered
    with partition-of-unity weights.  With a truncated kernel whose
    couplings conform to the blocks the fit matches the global solver;
    with dense kernels it is an approximation (compare via
    ``score`` or the solution vectors).

    Parameters
    ----------
    p : int, default=2
        Number of blocks.
    overlap : int, default=2
        Shared indices between consecutive blocks.
    omega : float or sequence, default=1.0
        Overlap-consistency penalty weight(s).
    eps : float, default=1e-8
        Outer convergence tolerance.
    max_outer : int, default=500
        Outer iteration cap.
    execution : str, default="sequential"
        ``sequential`` or ``parallel``.
    workers : int or None, default=None
        Thread count in parallel mode.
    gather : str, default="partition_of_unity"
        Gather mode for the final coefficients.
    Remaining parameters match ``GlobalKernelRidge``.

    Attributes
    ----------
    alpha_ : ndarray of shape (n_samples,)
        Gathered expansion coefficients.
    result_ : DecomposedResult
        Iteration history, local objectives, timings and trace.
    decomposition_ : Decomposition
        The index decomposition used by the fit.
    """

    def __init__(self, kernel="gaussian", sigma=1.0, degree=2, offset=1.0,
                 truncation_radius=None, layers=(), lam=1e-2, p=2, overlap=2,
                 omega=1.0, eps=1e-8, max_outer=500, execution="sequential",
                 workers=None, gather="partition_of_unity", inner_tol=1e-9):
        self.kernel = kernel
        self.sigma = sigma
        self.degree = degree
        self.offset = offset
        self.truncation_radius = truncation_radius
        self.layers = layers
        self.lam = lam
        self.p = p
        self.overlap = overlap
        self.omega = omega
        self.eps = eps
        self.max_outer = max_outer
        self.execution = execution
        self.workers = workers
        self.gather = gather
        self.inner_tol = inner_tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        spec = self._kernel_spec()
        cfg = decomposed.DecomposedConfig(
            lam=self.lam,
            omega=self.omega,
            eps=self.eps,
            max_outer=self.max_outer,
            execution=self.execution,
            workers=self.workers,
            gather=self.gather,
            inner_tol=self.inner_tol,
        )
        dec = uniform_decompose(X.shape[0], self.p, self.overlap)
        matrix = kernels.assemble(spec, X)
        self.result_ = decomposed.run(matrix, y, dec, cfg)
        self.alpha_ = self.result_.alpha
        self.decomposition_ = dec
        self.X_fit_ = X
        self.n_features_in_ = X.shape[1]
        return self


class LayerStackTransformer(TransformerMixin, BaseEstimator):
    """Apply a fixed stack of affine-plus-activation maps to feature rows."""

    def __init__(self, layers=()):
        self.layers = layers

    def fit(self, X, y=None):
        X = check_array(X)
        layers = tuple(self.layers)
        if layers and X.shape[1] != layers[0].in_dim:
            raise ValueError(
                f"X has {X.shape[1]} features but the first layer expects "
                f"{layers[0].in_dim}"
            )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        return kernels.forward(tuple(self.layers), X)
