"""Domain-decomposed kernel ridge regression.

Fits regularized kernel expansions either globally or block by block:
the sample index set is split into overlapping contiguous blocks, each
block solves a weighted local problem with a penalty tying it to its
neighbors' latest overlap values, and the local solutions are stitched
into a global coefficient vector.  Includes kernel assembly over fixed
feature-map stacks, a diffusion load balancer, a performance model for
the decomposed solve, scikit-learn style estimators and a CLI.
"""

from .data import Dataset, SyntheticSpec, generate, load_csv, write_csv
from .decomposed import (
    DecomposedConfig,
    DecomposedResult,
    LocalState,
    exchange,
    local_objective,
    local_solve,
    run,
)
from .decomposition import (
    Decomposition,
    LoadSchedule,
    LocalFunctional,
    apply_schedule,
    balance,
    balance_graph,
    extend,
    min_norm_flows,
    reconstruct,
    restrict,
    restrict_functional,
    uniform_decompose,
)
from .estimators import DecomposedKernelRidge, GlobalKernelRidge, LayerStackTransformer
from .exceptions import ConvergenceError, IllConditionedError
from .kernels import (
    KernelMatrix,
    KernelSpec,
    LayerMap,
    assemble,
    assemble_block,
    cross_matrix,
    eval_kernel,
    forward,
)
from .perf import (
    ComplexityModel,
    PerfReport,
    alpha_factor,
    bench_strong,
    bench_weak,
    scale_up,
    scale_up_lower_bound,
    speed_up,
    surface_to_volume,
)
from .tikhonov import Solution, TikhonovConfig, predict, solve_interpolation, solve_tikhonov

__version__ = "0.1.0"

__all__ = [
    "ComplexityModel",
    "ConvergenceError",
    "Dataset",
    "DecomposedConfig",
    "DecomposedKernelRidge",
    "DecomposedResult",
    "Decomposition",
    "GlobalKernelRidge",
    "IllConditionedError",
    "KernelMatrix",
    "KernelSpec",
    "LayerMap",
    "LayerStackTransformer",
    "LoadSchedule",
    "LocalFunctional",
    "LocalState",
    "PerfReport",
    "Solution",
    "SyntheticSpec",
    "TikhonovConfig",
    "alpha_factor",
    "apply_schedule",
    "assemble",
    "assemble_block",
    "balance",
    "balance_graph",
    "bench_strong",
    "bench_weak",
    "cross_matrix",
    "eval_kernel",
    "exchange",
    "extend",
    "forward",
    "generate",
    "load_csv",
    "local_objective",
    "local_solve",
    "min_norm_flows",
    "predict",
    "reconstruct",
    "restrict",
    "restrict_functional",
    "run",
    "scale_up",
    "scale_up_lower_bound",
    "solve_interpolation",
    "solve_tikhonov",
    "speed_up",
    "surface_to_volume",
    "uniform_decompose",
    "write_csv",
]
