"""Command-line entry point.

Subcommands: ``solve`` (global or decomposed fit), ``compare`` (both on
the same data, with the relative difference), ``bench`` (strong or weak
scaling sweeps) and ``balance`` (load-balancing schedule).  A run is
described by a single JSON config file; a few flags override scalar
fields, with precedence flag > file > default.

Exit codes: 0 on success, 1 on a runtime error (solver, data or I/O
failure), 2 on a config parse or validation failure.  Written artifacts
embed the tool version and a hash of the effective config; solution
artifacts carry no timings, so sequential reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, decomposed, kernels, perf, tikhonov
from .data import SyntheticSpec, generate, load_csv
from .decomposition import Decomposition, balance, uniform_decompose

_TOP_KEYS = {"dataset", "kernel", "solver", "decomposition", "bench", "loads"}


@dataclass
class RunPlan:
    """Validated config, ready to execute."""

    raw: dict
    sha256: str
    load_dataset: object
    kernel_spec: object
    solver_type: str
    tik_cfg: object
    dec_cfg: object
    record_trace: bool
    dec_section: dict
    bench_section: dict
    loads: object


def _config_hash(raw):
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _build_plan(raw, needs_dataset=True):
    if not isinstance(raw, dict):
        raise ValueError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    dataset_section = raw.get("dataset", {})
    sources = [k for k in ("csv", "synthetic") if k in dataset_section]
    if not needs_dataset and not dataset_section:
        load_dataset = None
    elif len(sources) != 1:
        raise ValueError("dataset must name exactly one source: 'csv' or 'synthetic'")
    elif sources[0] == "csv":
        section = dict(dataset_section["csv"])
        path = section.pop("path")
        target = section.pop("target_column", "y")
        if section:
            raise ValueError(f"unknown dataset.csv keys: {sorted(section)}")
        load_dataset = lambda: load_csv(path, target_column=target)
    else:
        spec = SyntheticSpec(**dataset_section["synthetic"])
        load_dataset = lambda: generate(spec)

    kernel_spec = kernels.KernelSpec.from_dict(raw.get("kernel", {}))

    solver = dict(raw.get("solver", {}))
    solver_type = solver.pop("type", "global")
    record_trace = bool(solver.pop("record_trace", False))
    tik_cfg = None
    dec_cfg = None
    if solver_type == "global":
        tik_cfg = tikhonov.TikhonovConfig(**solver)
    elif solver_type == "decomposed":
        dec_cfg = decomposed.DecomposedConfig(**solver)
        tik_cfg = tikhonov.TikhonovConfig(lam=dec_cfg.lam)
    else:
        raise ValueError(f"unknown solver.type {solver_type!r}")

    return RunPlan(
        raw=raw,
        sha256=_config_hash(raw),
        load_dataset=load_dataset,
        kernel_spec=kernel_spec,
        solver_type=solver_type,
        tik_cfg=tik_cfg,
        dec_cfg=dec_cfg,
        record_trace=record_trace,
        dec_section=dict(raw.get("decomposition", {})),
        bench_section=dict(raw.get("bench", {})),
        loads=raw.get("loads"),
    )


def _bench_params(plan, mode_flag):
    """Validate the bench section up front; bad values are config errors."""
    if plan.dec_cfg is None:
        raise ValueError("bench needs solver.type = 'decomposed'")
    section = dict(plan.bench_section)
    mode = mode_flag or section.pop("mode", "strong")
    section.pop("mode", None)
    if mode not in ("strong", "weak"):
        raise ValueError(f"unknown bench mode {mode!r}; expected 'strong' or 'weak'")
    p_list = section.pop("p_list", None)
    if not p_list or any(int(p) < 1 for p in p_list):
        raise ValueError("bench.p_list must be a non-empty list of counts >= 1")
    params = {
        "mode": mode,
        "p_list": [int(p) for p in p_list],
        "overlap": int(section.pop("overlap", 2)),
        "repetitions": int(section.pop("repetitions", 3)),
    }
    if mode == "strong":
        params["n"] = int(section.pop("n"))
    else:
        params["n_loc"] = int(section.pop("n_loc"))
    if section:
        raise ValueError(f"unknown bench keys: {sorted(section)}")
    return params


def _balance_loads(plan, loads_flag):
    """Resolve and validate the loads vector; mismatches are config errors."""
    if loads_flag:
        loads = [int(v) for v in loads_flag.split(",")]
    elif plan.loads is not None:
        loads = [int(v) for v in plan.loads]
    else:
        raise ValueError("balance needs loads via --loads or the config 'loads' list")
    p = int(plan.dec_section.get("p", len(loads)))
    if len(loads) != p:
        raise ValueError(f"loads length {len(loads)} does not match p={p}")
    return loads


def _decomposition_for(plan, n):
    section = dict(plan.dec_section)
    if "blocks" in section:
        return Decomposition(
            n=n,
            overlap_width=section.get("overlap_width", 1),
            blocks=tuple(tuple(b) for b in section["blocks"]),
        )
    p = int(section.get("p", 1))
    overlap = int(section.get("overlap_width", 1))
    return uniform_decompose(n, p, overlap)


def _artifact_header(plan):
    return {"version": __version__, "config_sha256": plan.sha256}


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_trace(path, trace):
    with open(path, "w", encoding="utf-8") as handle:
        for record in trace:
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")


def _global_objective(matrix, y, lam, alpha):
    """Global objective at a coefficient vector, identity regularizer."""
    residual = matrix.values @ alpha - y
    return float(residual @ residual + lam * (alpha @ alpha))


def cmd_solve(plan, out_dir):
    dataset = plan.load_dataset()
    matrix = kernels.assemble(plan.kernel_spec, dataset)
    payload = dict(_artifact_header(plan))
    payload["n"] = dataset.n
    payload["solver"] = plan.solver_type
    if plan.solver_type == "global":
        solution = tikhonov.solve_tikhonov(matrix, dataset.targets, plan.tik_cfg)
        payload["alpha"] = solution.alpha.tolist()
        payload["objective"] = solution.objective
        payload["residual_history"] = []
        payload["outer_iterations"] = solution.iterations
        summary = (
            f"solve: solver=global n={dataset.n} objective={solution.objective:.12e}"
        )
    else:
        dec = _decomposition_for(plan, dataset.n)
        result = decomposed.run(
            matrix, dataset.targets, dec, plan.dec_cfg, record_trace=plan.record_trace
        )
        objective = _global_objective(
            matrix, dataset.targets, plan.dec_cfg.lam, result.alpha
        )
        payload["alpha"] = result.alpha.tolist()
        payload["objective"] = objective
        payload["residual_history"] = list(result.per_iteration_residuals)
        payload["outer_iterations"] = result.outer_iterations
        if plan.record_trace:
            _write_trace(os.path.join(out_dir, "trace.jsonl"), result.trace)
        summary = (
            f"solve: solver=decomposed n={dataset.n} p={dec.p} "
            f"outer_iterations={result.outer_iterations} objective={objective:.12e}"
        )
    _write_json(os.path.join(out_dir, "solution.json"), payload)
    print(summary)
    return 0


def cmd_compare(plan, out_dir):
    if plan.solver_type != "decomposed":
        raise ValueError("compare needs solver.type = 'decomposed'")
    dataset = plan.load_dataset()
    matrix = kernels.assemble(plan.kernel_spec, dataset)
    dec = _decomposition_for(plan, dataset.n)
    lam = plan.dec_cfg.lam
    global_solution = tikhonov.solve_tikhonov(matrix, dataset.targets, plan.tik_cfg)
    result = decomposed.run(
        matrix, dataset.targets, dec, plan.dec_cfg, record_trace=plan.record_trace
    )
    denom = float(np.linalg.norm(global_solution.alpha))
    diff = float(np.linalg.norm(result.alpha - global_solution.alpha))
    relative = diff / denom if denom else diff
    payload = dict(_artifact_header(plan))
    payload.update(
        {
            "n": dataset.n,
            "p": dec.p,
            "relative_difference": relative,
            "global_objective": global_solution.objective,
            "decomposed_objective": _global_objective(
                matrix, dataset.targets, lam, result.alpha
            ),
            "global_iterations": global_solution.iterations,
            "outer_iterations": result.outer_iterations,
        }
    )
    if plan.record_trace:
        _write_trace(os.path.join(out_dir, "trace.jsonl"), result.trace)
    _write_json(os.path.join(out_dir, "compare.json"), payload)
    print(
        f"compare: n={dataset.n} p={dec.p} relative_difference={relative:.6e} "
        f"outer_iterations={result.outer_iterations}"
    )
    return 0


def cmd_bench(plan, out_dir, params):
    mode = params["mode"]
    synth = plan.raw.get("dataset", {}).get("synthetic", {})
    common = {
        "overlap": params["overlap"],
        "d": int(synth.get("d", 2)),
        "generator": synth.get("generator", "smooth-sine"),
        "seed": int(synth.get("seed", 0)),
        "noise_sd": float(synth.get("noise_sd", 0.0)),
        "repetitions": params["repetitions"],
    }
    if mode == "strong":
        reports = perf.bench_strong(
            plan.kernel_spec, params["n"], params["p_list"], plan.dec_cfg, **common
        )
    else:
        reports = perf.bench_weak(
            plan.kernel_spec, params["n_loc"], params["p_list"], plan.dec_cfg, **common
        )
    header = dict(_artifact_header(plan))
    header["mode"] = mode
    perf.write_reports_json(reports, os.path.join(out_dir, f"bench_{mode}.json"), header)
    perf.write_reports_csv(reports, os.path.join(out_dir, f"bench_{mode}.csv"))
    for report in reports:
        print(
            f"bench[{mode}]: n={report.n} p={report.p} "
            f"speed_up={report.speed_up:.3f} scale_up={report.scale_up:.3f} "
            f"surface_to_volume={report.surface_to_volume:.6f}"
        )
    return 0


def cmd_balance(plan, out_dir, loads):
    p = len(loads)
    overlap = int(plan.dec_section.get("overlap_width", 1))
    # The balancer only needs the adjacency; build a minimal feasible
    # uniform decomposition of the right block count to carry it.
    n = int(plan.dec_section.get("n", p * (overlap + 2)))
    dec = uniform_decompose(n, p, overlap if p > 1 else 1)
    schedule = balance(dec, loads)
    payload = dict(_artifact_header(plan))
    payload.update(
        {
            "loads": loads,
            "moves": [[list(edge), count] for edge, count in schedule.moves],
            "resulting_sizes": list(schedule.resulting_sizes),
            "flows": list(schedule.flows),
        }
    )
    _write_json(os.path.join(out_dir, "balance.json"), payload)
    if not schedule.moves:
        print("balance: no moves needed")
    for (i, j), count in schedule.moves:
        src, dst = (i, j) if count > 0 else (j, i)
        print(f"balance: move {abs(count)}: {src} -> {dst}")
    print(f"balance: resulting sizes {list(schedule.resulting_sizes)}")
    return 0


def _apply_overrides(raw, args):
    if getattr(args, "seed", None) is not None:
        synthetic = raw.get("dataset", {}).get("synthetic")
        if synthetic is not None:
            synthetic["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        solver = raw.setdefault("solver", {})
        solver["workers"] = args.threads
        solver["execution"] = "parallel" if args.threads > 1 else "sequential"
    return raw


def _make_parser():
    parser = argparse.ArgumentParser(
        prog="ddkl",
        description="Decomposed kernel ridge regression: solve, compare, bench, balance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "fit per the config and write the solution artifact"),
        ("compare", "run global and decomposed solves and report the difference"),
        ("bench", "run a scaling sweep and write reports"),
        ("balance", "compute a load-balancing schedule"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        cmd.add_argument("--out", default=".", help="directory for artifacts")
        cmd.add_argument("--threads", type=int, help="worker threads (enables parallel mode)")
        cmd.add_argument("--seed", type=int, help="override the synthetic dataset seed")
        if name == "bench":
            cmd.add_argument("--mode", choices=("strong", "weak"), help="sweep type")
        if name == "balance":
            cmd.add_argument(
                "--loads", help="comma-separated per-block observation counts"
            )
    return parser


def main(argv=None):
    args = _make_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as handle:
            raw = json.load(handle)
        raw = _apply_overrides(raw, args)
        plan = _build_plan(raw, needs_dataset=args.command != "balance")
        bench_params = None
        loads = None
        if args.command == "bench":
            bench_params = _bench_params(plan, getattr(args, "mode", None))
        if args.command == "balance":
            loads = _balance_loads(plan, getattr(args, "loads", None))
    except (OSError, json.JSONDecodeError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    os.makedirs(args.out, exist_ok=True)
    try:
        if args.command == "solve":
            return cmd_solve(plan, args.out)
        if args.command == "compare":
            return cmd_compare(plan, args.out)
        if args.command == "bench":
            return cmd_bench(plan, args.out, bench_params)
        return cmd_balance(plan, args.out, loads)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
