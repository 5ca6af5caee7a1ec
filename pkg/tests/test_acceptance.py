"""Acceptance gate: one criterion per test, one PASS/FAIL line per criterion.

Run with ``pytest -s tests/test_acceptance.py`` to see the verdict lines
as they print; each line restates the tolerance it enforces.
"""

import json
import os

import networkx as nx
import numpy as np
import pytest

from ddkl import (
    DecomposedConfig,
    balance_graph,
    extend,
    kernels,
    min_norm_flows,
    reconstruct,
    restrict,
    restrict_functional,
    run,
    tikhonov,
    uniform_decompose,
)
from ddkl.cli import main as cli_main
from ddkl.data import separated_clusters
from ddkl.perf import (
    ComplexityModel,
    alpha_factor,
    bench_strong,
    scale_up_lower_bound,
    speed_up,
    surface_to_volume,
)


def _verdict(number, ok, detail):
    print(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
    assert ok, f"criterion {number}: {detail}"


def _conforming(n, p, seed=1, overlap=4):
    dec = uniform_decompose(n, p, overlap)
    ds, radius = separated_clusters(dec, seed=seed)
    spec = kernels.KernelSpec(
        outer="gaussian", sigma=float(n) / 3.0, truncation_radius=radius
    )
    A = kernels.assemble(spec, ds).values
    return dec, ds, A


def test_criterion_1_block_solver_matches_global():
    """Gathered block solution vs direct global solve, 12 problem cells."""
    worst = 0.0
    for n in (200, 500):
        for p in (2, 4):
            dec, ds, A = _conforming(n, p)
            for lam in (1e-2, 1e-1, 1.0):
                g = tikhonov.solve_tikhonov(
                    A, ds.targets, tikhonov.TikhonovConfig(lam=lam)
                )
                cfg = DecomposedConfig(
                    lam=lam, omega=2.0 * lam, eps=1e-8, max_outer=20000
                )
                r = run(A, ds.targets, dec, cfg)
                rel = np.linalg.norm(r.alpha - g.alpha) / np.linalg.norm(g.alpha)
                worst = max(worst, rel)
    _verdict(
        1,
        worst <= 1e-6,
        "decomposed vs global relative L2 difference over "
        f"N in (200,500), p in (2,4), lam in (1e-2,1e-1,1): "
        f"worst {worst:.3e} (tolerance 1e-6)",
    )


def test_criterion_2_functional_additivity():
    """Sum of weighted local functionals equals the global objective."""
    rng = np.random.default_rng(0)
    worst = 0.0
    for p in (2, 4):
        dec, ds, A = _conforming(200, p)
        lam = 0.1
        problems = [
            restrict_functional(A, ds.targets, lam, i, dec) for i in range(p)
        ]
        for _ in range(100):
            w = rng.standard_normal(200)
            J_global = float(
                np.linalg.norm(A @ w - ds.targets) ** 2 + lam * (w @ w)
            )
            J_sum = sum(
                problems[i].value(restrict(w, i, dec)) for i in range(p)
            )
            gap = abs(J_sum - J_global) / (1.0 + abs(J_global))
            worst = max(worst, gap)
    _verdict(
        2,
        worst <= 1e-10,
        "additivity of weighted local functionals over 100 random vectors "
        f"per problem: worst normalized gap {worst:.3e} (tolerance 1e-10)",
    )


def test_criterion_3_operator_identities():
    """restrict/extend and reconstruct/restrict identities, exact equality."""
    rng = np.random.default_rng(1)
    trials = 0
    failures = 0
    while trials < 1000:
        p = int(rng.integers(1, 7))
        ov = int(rng.integers(1, 4))
        n = int(rng.integers(p + (p - 1) * ov + p, 80))
        if n < p + (p - 1) * ov:
            continue
        dec = uniform_decompose(n, p, ov)
        w = rng.standard_normal(n)
        i = int(rng.integers(0, p))
        v = restrict(w, i, dec)
        if not np.array_equal(restrict(extend(v, i, dec), i, dec), v):
            failures += 1
        parts = [restrict(w, j, dec) for j in range(p)]
        if not np.array_equal(reconstruct(parts, dec), w):
            failures += 1
        trials += 1
    _verdict(
        3,
        failures == 0,
        f"restrict/extend and reconstruct/restrict identities: {failures} "
        f"failures in {trials} randomized trials (required: exact equality)",
    )


def test_criterion_4_normal_equation_optimality():
    """Every solver output satisfies its normal equations and zero gradient."""
    rng = np.random.default_rng(2)
    specs = [
        kernels.KernelSpec(outer="gaussian", sigma=0.6),
        kernels.KernelSpec(outer="gaussian", sigma=1.5),
        kernels.KernelSpec(outer="linear"),
        kernels.KernelSpec(outer="polynomial", degree=2, offset=1.0),
    ]
    worst_res = 0.0
    worst_grad = 0.0
    checked = 0
    for spec in specs:
        for n in (20, 50):
            X = rng.standard_normal((n, 2))
            y = rng.standard_normal(n)
            A = kernels.assemble(spec, X).values
            for lam in (1e-4, 1e-2, 1.0):
                for reg in ("identity", "first_difference"):
                    for method in ("direct", "conjugate_gradient"):
                        cfg = tikhonov.TikhonovConfig(
                            lam=lam, reg_matrix=reg, method=method,
                            tol=1e-12, max_iter=100000,
                        )
                        sol = tikhonov.solve_tikhonov(A, y, cfg)
                        Q = tikhonov.regularization_matrix(reg, n)
                        M = A.T @ A + lam * Q.T @ Q
                        b = A.T @ y
                        res = np.linalg.norm(M @ sol.alpha - b)
                        res /= np.linalg.norm(b)
                        worst_res = max(worst_res, res)

                        def J(v):
                            r = A @ v - y
                            q = Q @ v
                            return float(r @ r + lam * (q @ q))

                        scale = 1.0 + np.linalg.norm(b)
                        h = 1e-6 * (1.0 + np.abs(sol.alpha).max())
                        grad = 0.0
                        for k in range(n):
                            e = np.zeros(n)
                            e[k] = h
                            g = (J(sol.alpha + e) - J(sol.alpha - e)) / (2 * h)
                            grad = max(grad, abs(g) / scale)
                        worst_grad = max(worst_grad, grad)
                        checked += 1
    ok = worst_res <= 1e-8 and worst_grad <= 1e-5
    _verdict(
        4,
        ok,
        f"{checked} solutions: worst relative normal-equation residual "
        f"{worst_res:.3e} (tolerance 1e-8), worst normalized finite-difference "
        f"gradient {worst_grad:.3e} (tolerance 1e-5)",
    )


def test_criterion_5_balancer_on_all_small_graphs():
    """Flows vs pseudo-inverse oracle on every connected graph up to 6 nodes."""
    rng = np.random.default_rng(3)
    graphs = [
        G for G in nx.graph_atlas_g()[1:]
        if 1 <= G.number_of_nodes() <= 6 and nx.is_connected(G)
    ]
    worst_flow = 0.0
    worst_spread = 0
    for G in graphs:
        p = G.number_of_nodes()
        edges = sorted(tuple(sorted(e)) for e in G.edges())
        loads = rng.integers(0, 100, size=p)
        if edges:
            demand = loads.mean() - loads
            flows = min_norm_flows(p, edges, demand)
            B = np.zeros((p, len(edges)))
            for e, (a, b) in enumerate(edges):
                B[a, e] = -1.0
                B[b, e] = 1.0
            oracle = B.T @ np.linalg.pinv(B @ B.T) @ demand
            worst_flow = max(worst_flow, float(np.abs(flows - oracle).max()))
        schedule = balance_graph(p, edges, loads)
        sizes = np.array(schedule.resulting_sizes)
        assert sizes.sum() == loads.sum()
        spread = int(np.ceil(sizes.max() - loads.sum() / p)) - int(
            np.floor(sizes.min() - loads.sum() / p)
        )
        worst_spread = max(worst_spread, int(sizes.max() - sizes.min()))
    ok = worst_flow <= 1e-8 and worst_spread <= 1
    _verdict(
        5,
        ok,
        f"{len(graphs)} connected graphs with <= 6 nodes: worst flow deviation "
        f"from the pseudo-inverse oracle {worst_flow:.3e} (tolerance 1e-8), "
        f"worst post-migration size spread {worst_spread} (allowed: 1)",
    )


def test_criterion_6_performance_model_values():
    """Closed-form model outputs at their pinned values."""
    leading_only = ComplexityModel((0.0, 0.0, 0.0, 0.0, 1.0))
    alpha_exact = all(
        alpha_factor(leading_only, n_loc, p) == 1.0
        for n_loc in (10, 100, 1000)
        for p in (2, 4, 8)
    )
    bound_exact = all(
        scale_up_lower_bound(leading_only, 100, p) == float(p) ** 3
        for p in (2, 4, 8)
    )
    ratio = speed_up(1.56e3, 0.24e3)
    ok = alpha_exact and bound_exact and ratio == 6.5
    _verdict(
        6,
        ok,
        "alpha factor of a pure leading-term model == 1.0 exactly: "
        f"{alpha_exact}; degree-4 lower bound == p^3 exactly: {bound_exact}; "
        f"speed_up(1.56e3, 0.24e3) == {ratio} (required 6.5 exactly)",
    )


@pytest.mark.skipif(
    (os.cpu_count() or 1) < 8,
    reason="strong-scaling criterion preconditions an 8-core machine; "
    f"this host reports {os.cpu_count()} cores",
)
def test_criterion_7_strong_scaling_speed_up():
    """Parallel speed-up at p=8 on N=8192 (needs real cores)."""
    spec = kernels.KernelSpec(outer="gaussian", sigma=0.5)
    cfg = DecomposedConfig(
        lam=0.1, omega=0.2, eps=1e-6, max_outer=500, execution="parallel", workers=8
    )
    reports = bench_strong(spec, 8192, [8], cfg, overlap=2, repetitions=3, seed=0)
    s = reports[0].speed_up
    _verdict(7, s >= 4.0, f"strong-scaling speed-up at p=8, N=8192: {s:.2f} (required >= 4)")


def test_criterion_7_weak_scaling_surface_to_volume():
    """Communication share flat across p at fixed local size, ~1/N_loc in size."""
    n_loc = 100
    across_p = [
        surface_to_volume(uniform_decompose(n_loc * p, p, 2)) for p in (16, 24, 32)
    ]
    drift = max(abs(v / across_p[0] - 1.0) for v in across_p[1:])

    p = 8
    halving = []
    for small, large in [(400, 800), (800, 1600)]:
        a = surface_to_volume(uniform_decompose(small * p, p, 2))
        b = surface_to_volume(uniform_decompose(large * p, p, 2))
        halving.append(abs(a / b - 2.0) / 2.0)
    ok = drift <= 0.05 and max(halving) <= 0.05
    _verdict(
        7,
        ok,
        f"weak-scaling surface-to-volume: drift across p at fixed N_loc "
        f"{drift:.3%}, deviation from exact halving when N_loc doubles "
        f"{max(halving):.3%} (both within 5%)",
    )


def test_criterion_8_determinism(tmp_path):
    """Byte-identical sequential reruns; parallel history equals sequential."""
    config = {
        "dataset": {"synthetic": {"n": 60, "d": 2, "seed": 5}},
        "kernel": {"outer": "gaussian", "sigma": 0.5},
        "solver": {"type": "decomposed", "lam": 0.5, "omega": 1.0, "eps": 1e-6},
        "decomposition": {"p": 2, "overlap_width": 2},
    }
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config), encoding="utf-8")
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    rc_a = cli_main(["solve", "--config", str(cfg_path), "--out", str(out_a)])
    rc_b = cli_main(["solve", "--config", str(cfg_path), "--out", str(out_b)])
    bytes_equal = (
        rc_a == 0
        and rc_b == 0
        and (out_a / "solution.json").read_bytes()
        == (out_b / "solution.json").read_bytes()
    )

    dec, ds, A = _conforming(160, 4)
    seq = run(A, ds.targets, dec, DecomposedConfig(lam=0.1, omega=0.2))
    par = run(
        A,
        ds.targets,
        dec,
        DecomposedConfig(lam=0.1, omega=0.2, execution="parallel", workers=4),
    )
    histories_equal = seq.per_iteration_residuals == par.per_iteration_residuals
    alpha_equal = bool(np.array_equal(seq.alpha, par.alpha))
    ok = bytes_equal and histories_equal and alpha_equal
    _verdict(
        8,
        ok,
        f"sequential reruns byte-identical: {bytes_equal}; parallel residual "
        f"history equals sequential exactly: {histories_equal}; gathered "
        f"coefficients bit-identical: {alpha_equal}",
    )


def test_criterion_9_communication_locality():
    """All traced messages ride the 7 adjacency edges, every iteration."""
    p = 8
    dec, ds, A = _conforming(240, p, overlap=2)
    cfg = DecomposedConfig(lam=0.1, omega=0.2, eps=1e-8, max_outer=5000)
    result = run(A, ds.targets, dec, cfg, record_trace=True)
    adjacency = {(i, i + 1) for i in range(p - 1)}
    directed = adjacency | {(j, i) for i, j in adjacency}
    offenders = [
        r for r in result.trace if tuple(r["edge"]) not in directed
    ]
    per_iteration = {}
    for r in result.trace:
        per_iteration.setdefault(r["iteration"], set()).add(
            tuple(sorted(r["edge"]))
        )
    covered = all(
        per_iteration.get(it) == adjacency
        for it in range(1, result.outer_iterations + 1)
    )
    ok = not offenders and covered and len(adjacency) == 7
    _verdict(
        9,
        ok,
        f"p=8 trace over {result.outer_iterations} outer iterations: "
        f"{len(offenders)} messages off the 7 adjacency edges, full edge "
        f"coverage each iteration: {covered}",
    )
