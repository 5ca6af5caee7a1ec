"""Bulk-synchronous overlapping block solver for the regularized problem.

The global regularized least-squares problem is split along an
overlapping decomposition.  Each block repeatedly minimizes its weighted
local functional plus a penalty tying its values on each shared overlap
to the neighbor's latest iterate there (the halo).  Iterates are
exchanged only between adjacent blocks and only at iteration boundaries,
so a parallel run is bit-identical to a sequential one.  On convergence
the local solutions are gathered into a global coefficient vector.

For kernels whose couplings conform to the decomposition (no nonzero
entry between a block's private rows and anything outside the block, nor
between distinct overlap regions), the gathered solution reproduces the
global one to solver precision.  For dense kernels the method drops
couplings to columns outside each block and is an approximation; the
estimator layer provides the comparison workflow.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .decomposition import LocalFunctional, extend, reconstruct, restrict, restrict_functional
from .exceptions import ConvergenceError, IllConditionedError
from .kernels import assemble_block

_EXECUTIONS = ("sequential", "parallel")
_GATHERS = ("partition_of_unity", "best_local_objective")

# Extra correction solves allowed per local minimization when the first
# factored solve leaves the gradient above the inner tolerance.
_MAX_CORRECTIONS = 4


@dataclass(frozen=True)
class DecomposedConfig:
    """Configuration of the outer iteration.

    Parameters
    ----------
    lam : float
        Global regularization parameter, >= 0.
    omega : float or sequence of float
        Overlap-consistency penalty weight(s), >= 0; a scalar applies to
        every block.
    eps : float
        Outer convergence tolerance on the largest update norm.
    max_outer : int
        Outer iteration cap; exceeding it raises ConvergenceError.
    execution : str
        ``sequential`` or ``parallel`` (thread pool); both produce
        bit-identical iterates.
    workers : int or None
        Thread count for parallel execution; None means one per block.
    gather : str
        ``partition_of_unity`` stitches local solutions with
        1/multiplicity weights; ``best_local_objective`` embeds the
        single local solution with the smallest local objective.
    inner_tol : float
        Gradient target for each local solve, relative to the
        right-hand-side scale.
    """

    lam: float = 0.0
    omega: object = 1.0
    eps: float = 1e-8
    max_outer: int = 500
    execution: str = "sequential"
    workers: object = None
    gather: str = "partition_of_unity"
    inner_tol: float = 1e-9

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be at least 1, got {self.max_outer}")
        if self.execution not in _EXECUTIONS:
            raise ValueError(
                f"unknown execution {self.execution!r}; expected one of {_EXECUTIONS}"
            )
        if self.gather not in _GATHERS:
            raise ValueError(f"unknown gather {self.gather!r}; expected one of {_GATHERS}")
        if not self.inner_tol > 0:
            raise ValueError(f"inner_tol must be positive, got {self.inner_tol}")
        omega = np.atleast_1d(np.asarray(self.omega, dtype=np.float64))
        if (omega < 0).any():
            raise ValueError("omega weights must be non-negative")

    def omega_for(self, p):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=np.float64))
        if omega.size == 1:
            return np.full(p, float(omega[0]))
        if omega.shape != (p,):
            raise ValueError(f"omega length {omega.size} does not match p={p}")
        return omega.astype(np.float64)


@dataclass
class LocalState:
    """Mutable per-block iterate and its view of the neighbors.

    ``halo_in`` maps each adjacent block id to that neighbor's latest
    coefficients on the shared overlap, in global index order.
    """

    subdomain: int
    neighbors: tuple
    coeffs: np.ndarray
    halo_in: dict
    objective: float = np.inf
    iteration: int = 0


@dataclass(frozen=True)
class DecomposedResult:
    """Converged output of the outer iteration."""

    alpha: np.ndarray
    outer_iterations: int
    per_iteration_residuals: tuple
    local_objectives: tuple
    timings: dict
    trace: tuple = ()

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(
            self, "per_iteration_residuals", tuple(self.per_iteration_residuals)
        )
        object.__setattr__(self, "local_objectives", tuple(self.local_objectives))


def _halo_slices(problem, state):
    """Local-coordinate slice of each neighbor's overlap, keyed by id.

    A lower-numbered neighbor shares the block's leading indices, a
    higher-numbered one its trailing indices; the widths come from the
    halo payloads themselves.
    """
    r = problem.n_local
    slices = {}
    for j in state.neighbors:
        if j not in state.halo_in:
            raise ValueError(
                f"missing halo from adjacent subdomain {j} in block {state.subdomain}"
            )
        width = len(state.halo_in[j])
        slices[j] = slice(0, width) if j < state.subdomain else slice(r - width, r)
    return slices


def local_objective(state, v, problem, omega_i):
    """Penalized local objective at a candidate local vector.

    Adds to the block's weighted functional the squared distance,
    weighted by ``omega_i``, between the candidate's overlap values and
    each neighbor's halo.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (problem.n_local,):
        raise ValueError(
            f"candidate shape {v.shape} does not match block size {problem.n_local}"
        )
    total = problem.value(v)
    for j, local in _halo_slices(problem, state).items():
        mismatch = v[local] - state.halo_in[j]
        total += float(omega_i) * float(mismatch @ mismatch)
    return total


class _LocalSolver:
    """Factored normal-equation system of one penalized local problem.

    The system matrix never changes across outer iterations (only halo
    values on the right-hand side do), so it is factored once and reused.
    """

    def __init__(self, problem, omega_i, slices):
        self.problem = problem
        self.omega_i = float(omega_i)
        self.slices = dict(slices)
        H = problem.normal_matrix()
        if self.omega_i:
            counts = np.zeros(problem.n_local)
            for local in self.slices.values():
                counts[local] += 1.0
            H = H + self.omega_i * np.diag(counts)
        try:
            self._factor = scipy.linalg.cho_factor(H, lower=True)
        except scipy.linalg.LinAlgError:
            smallest = float(np.min(np.linalg.eigvalsh(H)))
            raise IllConditionedError(
                f"local normal-equation matrix of block {problem.subdomain} is "
                "not positive definite; increase lam or omega",
                pivot=smallest,
                threshold=0.0,
            ) from None
        self._H = H
        self._base_rhs = problem.normal_rhs()

    def rhs(self, state):
        out = self._base_rhs.copy()
        if self.omega_i:
            for j, local in self.slices.items():
                if j not in state.halo_in:
                    raise ValueError(
                        f"missing halo from adjacent subdomain {j} in block "
                        f"{self.problem.subdomain}"
                    )
                out[local] += self.omega_i * state.halo_in[j]
        return out

    def solve(self, state, inner_tol):
        """Minimize the penalized objective starting from the iterate.

        Incremental form: solve the normal equations for the correction
        that zeroes the current gradient and add it on.  The first
        correction is always applied (so progress never stalls at the
        tolerance floor); further refinements run only while the
        gradient norm exceeds ``inner_tol``.
        """
        rhs = self.rhs(state)
        scale = max(1.0, float(np.linalg.norm(rhs)))
        v = state.coeffs.astype(np.float64, copy=True)
        for attempt in range(1 + _MAX_CORRECTIONS):
            gradient_half = self._H @ v - rhs
            if attempt and 2.0 * np.linalg.norm(gradient_half) <= inner_tol * scale:
                break
            delta = scipy.linalg.cho_solve(self._factor, -gradient_half)
            v = v + delta
        return v


def local_solve(problem, state, omega_i, inner_tol=1e-9):
    """One exact local minimization given frozen halos; returns new coeffs."""
    solver = _LocalSolver(problem, omega_i, _halo_slices(problem, state))
    return solver.solve(state, inner_tol)


def exchange(states, dec, trace=None):
    """Swap overlap values between every pair of adjacent blocks.

    Each state's ``halo_in`` receives the neighbor's current
    coefficients on the shared overlap; nothing else moves, so all
    communication follows adjacency edges.  When ``trace`` is a list,
    one record per directed message is appended with the iteration,
    edge and payload size.
    """
    states = list(states)
    iterations = {s.iteration for s in states}
    if len(iterations) > 1:
        raise ValueError(f"states disagree on the iteration: {sorted(iterations)}")
    for i, j in dec.edges:
        lo, hi = dec.overlap(i, j)
        si = dec.blocks[i][0]
        sj = dec.blocks[j][0]
        payload_ij = states[i].coeffs[lo - si : hi - si].copy()
        payload_ji = states[j].coeffs[lo - sj : hi - sj].copy()
        states[j].halo_in[i] = payload_ij
        states[i].halo_in[j] = payload_ji
        if trace is not None:
            iteration = states[i].iteration
            trace.append(
                {"iteration": iteration, "edge": [i, j], "payload": int(payload_ij.size)}
            )
            trace.append(
                {"iteration": iteration, "edge": [j, i], "payload": int(payload_ji.size)}
            )
    return states


def run(A, y, dec, cfg, *, kernel_spec=None, data=None, initial=None, record_trace=False):
    """Run the outer iteration to convergence and gather the solution.

    ``A`` is the assembled global kernel matrix (KernelMatrix or array);
    pass ``A=None`` with ``kernel_spec`` and ``data`` to assemble only
    the per-block diagonal slices instead.  Iterates start at zero
    unless ``initial`` provides a global coefficient vector.  Raises
    ConvergenceError carrying the residual history when ``max_outer``
    is exceeded.
    """
    t_start = time.perf_counter()
    p = dec.p
    omega = cfg.omega_for(p)
    y = np.asarray(y, dtype=np.float64)

    t0 = time.perf_counter()
    problems = _build_problems(A, y, dec, cfg.lam, kernel_spec, data)
    assemble_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    solvers = []
    for i in range(p):
        slices = {
            j: _overlap_slice(dec, i, j) for j in dec.neighbors(i)
        }
        solvers.append(_LocalSolver(problems[i], omega[i], slices))
    factor_s = time.perf_counter() - t0

    states = _initial_states(dec, initial)
    trace = [] if record_trace else None
    exchange(states, dec, trace)

    solve_s = 0.0
    exchange_s = 0.0
    history = []
    coupled = [i for i in range(p) if dec.neighbors(i)]
    pool = None
    try:
        if cfg.execution == "parallel":
            workers = int(cfg.workers) if cfg.workers else p
            pool = ThreadPoolExecutor(max_workers=workers)
        for iteration in range(1, cfg.max_outer + 1):
            t0 = time.perf_counter()

            def step(i):
                return solvers[i].solve(states[i], cfg.inner_tol)

            if pool is not None:
                updates = list(pool.map(step, range(p)))
            else:
                updates = [step(i) for i in range(p)]
            update_norms = np.zeros(p)
            for i in range(p):
                update_norms[i] = np.linalg.norm(updates[i] - states[i].coeffs)
                states[i].coeffs = updates[i]
                states[i].iteration = iteration
                states[i].objective = local_objective(
                    states[i], updates[i], problems[i], omega[i]
                )
            solve_s += time.perf_counter() - t0

            t0 = time.perf_counter()
            exchange(states, dec, trace)
            exchange_s += time.perf_counter() - t0

            # Blocks without neighbors land on their minimizer in one
            # solve, so only coupled blocks enter the convergence test.
            residual = max((update_norms[i] for i in coupled), default=0.0)
            history.append(float(residual))
            if residual < cfg.eps:
                break
        else:
            raise ConvergenceError(
                f"outer iteration did not reach eps={cfg.eps} within "
                f"{cfg.max_outer} iterations",
                residuals=history,
            )
    finally:
        if pool is not None:
            pool.shutdown()

    if cfg.gather == "partition_of_unity":
        alpha = reconstruct([s.coeffs for s in states], dec)
    else:
        best = min(range(p), key=lambda i: states[i].objective)
        alpha = extend(states[best].coeffs, best, dec)
    timings = {
        "assemble_s": assemble_s,
        "factor_s": factor_s,
        "solve_s": solve_s,
        "exchange_s": exchange_s,
        "total_s": time.perf_counter() - t_start,
    }
    return DecomposedResult(
        alpha=alpha,
        outer_iterations=iteration,
        per_iteration_residuals=tuple(history),
        local_objectives=tuple(s.objective for s in states),
        timings=timings,
        trace=tuple(trace) if trace is not None else (),
    )


def _overlap_slice(dec, i, j):
    """Block-i local slice of the overlap shared with neighbor j."""
    lo, hi = dec.overlap(i, j)
    start = dec.blocks[i][0]
    return slice(lo - start, hi - start)


def _build_problems(A, y, dec, lam, kernel_spec, data):
    if A is not None:
        return [restrict_functional(A, y, lam, i, dec) for i in range(dec.p)]
    if kernel_spec is None or data is None:
        raise ValueError("need either A or both kernel_spec and data")
    weights_all = 1.0 / dec.multiplicity().astype(np.float64)
    problems = []
    for i in range(dec.p):
        start, stop = dec.blocks[i]
        rows = np.arange(start, stop)
        problems.append(
            LocalFunctional(
                subdomain=i,
                indices=rows,
                kernel_block=assemble_block(kernel_spec, data, rows, rows),
                targets=np.asarray(y, dtype=np.float64)[start:stop].copy(),
                weights=weights_all[start:stop],
                lam=float(lam),
            )
        )
    return problems


def _initial_states(dec, initial):
    if initial is not None:
        initial = np.asarray(initial, dtype=np.float64)
        if initial.shape != (dec.n,):
            raise ValueError(
                f"initial vector shape {initial.shape} does not match n={dec.n}"
            )
    states = []
    for i in range(dec.p):
        start, stop = dec.blocks[i]
        coeffs = np.zeros(stop - start) if initial is None else restrict(initial, i, dec)
        states.append(
            LocalState(
                subdomain=i,
                neighbors=tuple(dec.neighbors(i)),
                coeffs=coeffs,
                halo_in={},
                iteration=0,
            )
        )
    return states
