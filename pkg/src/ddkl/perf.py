"""Performance model and scaling benchmark harness.

Metric functions implement the cost model of the decomposed solver: the
speed-up of a parallel run over the serial baseline, the scale-up factor
relating the global problem's cost to one block's cost, the rational
correction ``alpha`` predicted by a polynomial complexity model, and the
surface-to-volume ratio of a decomposition (communication per unit of
private work).  The benchmark harness times strong scaling (fixed
problem size, growing block count) and weak scaling (fixed local size)
runs and emits reports with a stable JSON/CSV schema.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import dataclass

import numpy as np

from . import decomposed, kernels, tikhonov
from .data import SyntheticSpec, generate
from .decomposition import restrict_functional, uniform_decompose

_REPORT_FIELDS = (
    "n",
    "p",
    "n_loc",
    "overlap",
    "seed",
    "t_global_s",
    "t_local_s",
    "t_parallel_s",
    "speed_up",
    "scale_up",
    "surface_to_volume",
    "outer_iterations",
)


@dataclass(frozen=True)
class ComplexityModel:
    """Polynomial time model ``t(m) = sum_i a_i m^i`` of a direct solve.

    ``coefficients[i]`` is ``a_i``; the leading coefficient must be
    positive.  The default degree is 4: assembly scales quadratically
    and the normal-equation solve quartically in the sample count, so
    the quartic term dominates.
    """

    coefficients: tuple = (0.0, 0.0, 0.0, 0.0, 1.0)

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) < 2:
            raise ValueError("need degree >= 1, so at least two coefficients")
        if not all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        if not coeffs[-1] > 0:
            raise ValueError(f"leading coefficient must be positive, got {coeffs[-1]}")
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def degree(self):
        return len(self.coefficients) - 1


def speed_up(t_serial, t_parallel):
    """Serial over parallel wall-clock time."""
    if not (t_serial > 0 and t_parallel > 0):
        raise ValueError(f"timings must be positive, got {t_serial} and {t_parallel}")
    return t_serial / t_parallel


def scale_up(t_global, t_local, p):
    """Per-block cost advantage: ``(1/p) * t_global / t_local``."""
    if not (t_global > 0 and t_local > 0):
        raise ValueError(f"timings must be positive, got {t_global} and {t_local}")
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    return t_global / (p * t_local)


def alpha_factor(model, n_loc, p):
    """Finite-size correction of the scale-up bound, in ``(0, 1]``.

    With ``d`` the model degree and ``N = n_loc * p``, evaluates

        (a_d + a_{d-1}/N + ... + a_0/N^d)
        / (a_d + a_{d-1}*(p/n_loc) + ... + a_0*(p/n_loc)^d).

    Equals 1 exactly when only the leading coefficient is nonzero, and
    tends to 1 as the local size grows.
    """
    if n_loc < 1 or p < 1:
        raise ValueError(f"need n_loc >= 1 and p >= 1, got {n_loc}, {p}")
    a = model.coefficients
    d = model.degree
    N = float(n_loc) * float(p)
    ratio = float(p) / float(n_loc)
    numerator = 0.0
    denominator = 0.0
    for k in range(d + 1):
        numerator += a[d - k] / N**k
        denominator += a[d - k] * ratio**k
    if denominator == 0.0:
        raise ValueError("complexity model is degenerate: zero denominator")
    return numerator / denominator


def scale_up_lower_bound(model, n_loc, p):
    """Guaranteed scale-up ``alpha * p^(d-1)`` for a degree-d cost model."""
    return alpha_factor(model, n_loc, p) * float(p) ** (model.degree - 1)


def surface_to_volume(dec):
    """Shared indices per edge over private indices.

    Counts each overlap region once (one region per adjacency edge) and
    divides by the number of indices covered by exactly one block.  A
    single block has no interfaces, hence ratio 0.
    """
    if dec.p == 1:
        return 0.0
    shared = 0
    for i, j in dec.edges:
        lo, hi = dec.overlap(i, j)
        shared += hi - lo
    private = int(np.count_nonzero(dec.multiplicity() == 1))
    return shared / private


@dataclass(frozen=True)
class PerfReport:
    """One benchmark run in the stable report schema."""

    n: int
    p: int
    n_loc: int
    overlap: int
    seed: int
    t_global_s: float
    t_local_s: tuple
    t_parallel_s: float
    speed_up: float
    scale_up: float
    surface_to_volume: float
    outer_iterations: int

    def __post_init__(self):
        object.__setattr__(self, "t_local_s", tuple(float(t) for t in self.t_local_s))
        if self.t_global_s <= 0 or self.t_parallel_s <= 0:
            raise ValueError("timings must be positive")
        if any(t <= 0 for t in self.t_local_s):
            raise ValueError("per-block timings must be positive")

    def to_dict(self):
        out = {}
        for name in _REPORT_FIELDS:
            value = getattr(self, name)
            out[name] = list(value) if isinstance(value, tuple) else value
        return out

    @classmethod
    def from_dict(cls, payload):
        kwargs = dict(payload)
        missing = [name for name in _REPORT_FIELDS if name not in kwargs]
        unknown = [name for name in kwargs if name not in _REPORT_FIELDS]
        if missing or unknown:
            raise ValueError(
                f"report payload missing {missing} / unknown {unknown}"
            )
        kwargs["t_local_s"] = tuple(kwargs["t_local_s"])
        return cls(**kwargs)


def write_reports_json(reports, path, header=None):
    """Write reports (plus optional header metadata) as a JSON document."""
    payload = dict(header or {})
    payload["reports"] = [r.to_dict() for r in reports]
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_reports_csv(reports, path):
    """Write reports as CSV; the per-block timing list is ';'-joined."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(_REPORT_FIELDS)
        for report in reports:
            row = []
            for name in _REPORT_FIELDS:
                value = getattr(report, name)
                if isinstance(value, tuple):
                    row.append(";".join(repr(v) for v in value))
                else:
                    row.append(repr(value) if isinstance(value, float) else value)
            writer.writerow(row)


def _median_time(fn, repetitions):
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return float(statistics.median(samples))


def _time_one_block(problem, dec, omega_i, inner_tol, repetitions):
    """Wall time of one isolated local solve: factor plus one correction."""
    slices = {
        j: slice(*_local_span(dec, problem.subdomain, j))
        for j in dec.neighbors(problem.subdomain)
    }

    def once():
        solver = decomposed._LocalSolver(problem, omega_i, slices)
        state = decomposed.LocalState(
            subdomain=problem.subdomain,
            neighbors=tuple(slices),
            coeffs=np.zeros(problem.n_local),
            halo_in={j: np.zeros(s.stop - s.start) for j, s in slices.items()},
        )
        solver.solve(state, inner_tol)

    return _median_time(once, repetitions)


def _local_span(dec, i, j):
    lo, hi = dec.overlap(i, j)
    start = dec.blocks[i][0]
    return lo - start, hi - start


def _bench_one(kernel_spec, synth, p, overlap, cfg, repetitions):
    dataset = generate(synth)
    matrix = kernels.assemble(kernel_spec, dataset)
    dec = uniform_decompose(synth.n, p, overlap)
    tik = tikhonov.TikhonovConfig(lam=cfg.lam, method="direct")
    t_global = _median_time(
        lambda: tikhonov.solve_tikhonov(matrix, dataset.targets, tik), repetitions
    )
    omega = cfg.omega_for(p)
    if p == 1:
        # The single block's problem is the global problem; re-timing it
        # would only add noise, so both timings are reused and the
        # baseline ratios are exactly 1.
        result = decomposed.run(matrix, dataset.targets, dec, cfg)
        t_locals = [t_global]
        t_parallel = t_global
    else:
        problems = [
            restrict_functional(matrix, dataset.targets, cfg.lam, i, dec)
            for i in range(p)
        ]
        t_locals = [
            _time_one_block(problems[i], dec, omega[i], cfg.inner_tol, repetitions)
            for i in range(p)
        ]
        result = decomposed.run(matrix, dataset.targets, dec, cfg)
        t_parallel = _median_time(
            lambda: decomposed.run(matrix, dataset.targets, dec, cfg), repetitions
        )
    return PerfReport(
        n=synth.n,
        p=p,
        n_loc=-(-synth.n // p),
        overlap=overlap if p > 1 else 0,
        seed=synth.seed,
        t_global_s=t_global,
        t_local_s=tuple(t_locals),
        t_parallel_s=t_parallel,
        speed_up=speed_up(t_global, t_parallel),
        scale_up=scale_up(t_global, max(t_locals), p),
        surface_to_volume=surface_to_volume(dec),
        outer_iterations=result.outer_iterations,
    )


def bench_strong(kernel_spec, n, p_list, cfg, *, overlap=2, d=2, generator="smooth-sine",
                 seed=0, noise_sd=0.0, repetitions=3):
    """Strong scaling: fixed problem size, sweep the block count.

    Each entry times the global direct solve, each block's isolated
    local solve, and the full decomposed run, with median-of-
    ``repetitions`` wall-clock sampling.
    """
    reports = []
    for p in p_list:
        synth = SyntheticSpec(n=n, d=d, generator=generator, noise_sd=noise_sd, seed=seed)
        reports.append(_bench_one(kernel_spec, synth, p, overlap, cfg, repetitions))
    return reports


def bench_weak(kernel_spec, n_loc, p_list, cfg, *, overlap=2, d=2, generator="smooth-sine",
               seed=0, noise_sd=0.0, repetitions=3):
    """Weak scaling: fixed local size, problem grows as ``n_loc * p``."""
    reports = []
    for p in p_list:
        synth = SyntheticSpec(
            n=n_loc * p, d=d, generator=generator, noise_sd=noise_sd, seed=seed
        )
        reports.append(_bench_one(kernel_spec, synth, p, overlap, cfg, repetitions))
    return reports
