"""Overlapping decomposition of the sample index set.

A decomposition splits indices ``0..n-1`` into ordered contiguous
blocks where consecutive blocks share exactly ``overlap_width`` indices
and nothing else, so every index is covered once or twice.  The module
provides the restriction/extension operators between global and local
vectors, partition-of-unity reconstruction, the weighted local
functional each block minimizes, and a diffusion load balancer that
shifts block boundaries along the adjacency path.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Decomposition:
    """Ordered contiguous blocks covering ``0..n-1`` with pairwise overlap.

    ``blocks`` holds half-open ``(start, stop)`` index ranges.  Adjacent
    blocks overlap in at least ``overlap_width`` indices; non-adjacent
    blocks are disjoint, so index multiplicity is 1 or 2.
    """

    n: int
    overlap_width: int
    blocks: tuple

    def __post_init__(self):
        blocks = tuple((int(s), int(e)) for s, e in self.blocks)
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")
        if not blocks:
            raise ValueError("decomposition needs at least one block")
        p = len(blocks)
        if p > 1 and self.overlap_width < 1:
            raise ValueError("overlap_width must be >= 1 with more than one block")
        if self.overlap_width < 0:
            raise ValueError(f"overlap_width must be non-negative, got {self.overlap_width}")
        if blocks[0][0] != 0 or blocks[-1][1] != self.n:
            raise ValueError(f"blocks {blocks} do not cover 0..{self.n - 1}")
        for idx, (start, stop) in enumerate(blocks):
            if not 0 <= start < stop <= self.n:
                raise ValueError(f"block {idx} range ({start}, {stop}) is invalid")
        for (s0, e0), (s1, e1) in zip(blocks, blocks[1:]):
            if not (s0 < s1 and e0 < e1):
                raise ValueError("blocks must be strictly increasing")
            if e0 - s1 < self.overlap_width:
                raise ValueError(
                    f"consecutive blocks ({s0},{e0}) and ({s1},{e1}) share "
                    f"{max(e0 - s1, 0)} indices, need {self.overlap_width}"
                )
        for (_, e0), (s2, _) in zip(blocks, blocks[2:]):
            if s2 < e0:
                raise ValueError(
                    "non-consecutive blocks intersect; index multiplicity would exceed 2"
                )
        object.__setattr__(self, "blocks", blocks)

    @property
    def p(self):
        return len(self.blocks)

    @property
    def edges(self):
        """Adjacency edges: consecutive block pairs sharing indices."""
        return [(i, i + 1) for i in range(self.p - 1)]

    def neighbors(self, i):
        self._check_id(i)
        out = []
        if i > 0:
            out.append(i - 1)
        if i < self.p - 1:
            out.append(i + 1)
        return out

    def overlap(self, i, j):
        """Shared index range of adjacent blocks as half-open (start, stop)."""
        if abs(i - j) != 1:
            raise ValueError(f"blocks {i} and {j} are not adjacent")
        lo, hi = min(i, j), max(i, j)
        self._check_id(lo)
        self._check_id(hi)
        return (self.blocks[hi][0], self.blocks[lo][1])

    def size(self, i):
        self._check_id(i)
        start, stop = self.blocks[i]
        return stop - start

    def multiplicity(self):
        """Per-index count of covering blocks, values in {1, 2}."""
        counts = np.zeros(self.n, dtype=np.intp)
        for start, stop in self.blocks:
            counts[start:stop] += 1
        return counts

    def _check_id(self, i):
        if not 0 <= i < self.p:
            raise IndexError(f"subdomain id {i} out of range 0..{self.p - 1}")

    def to_dict(self):
        return {
            "n": self.n,
            "overlap_width": self.overlap_width,
            "blocks": [list(b) for b in self.blocks],
        }

    @classmethod
    def from_dict(cls, payload):
        return cls(
            n=payload["n"],
            overlap_width=payload["overlap_width"],
            blocks=tuple(tuple(b) for b in payload["blocks"]),
        )


def uniform_decompose(n, p, overlap_width):
    """Split ``0..n-1`` into p blocks with near-equal private parts.

    Each pair of consecutive blocks shares exactly ``overlap_width``
    indices.  The private (non-shared) parts differ in size by at most
    one, with the remainder going to the leading blocks.  Infeasible
    sizing (fewer than one private index per block) raises ValueError.
    """
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    if p == 1:
        return Decomposition(n=n, overlap_width=0, blocks=((0, n),))
    if overlap_width < 1:
        raise ValueError(f"need overlap_width >= 1 for p > 1, got {overlap_width}")
    private_total = n - (p - 1) * overlap_width
    if private_total < p:
        raise ValueError(
            f"cannot split n={n} into p={p} blocks with overlap {overlap_width}: "
            f"need n >= {p + (p - 1) * overlap_width}"
        )
    base, rem = divmod(private_total, p)
    privates = [base + 1 if i < rem else base for i in range(p)]
    # lay out private segments separated by shared segments; block i spans
    # its private part plus the shared segment on each side it touches
    blocks = []
    private_start = 0
    for i in range(p):
        start = private_start if i == 0 else private_start - overlap_width
        stop = private_start + privates[i]
        if i < p - 1:
            stop += overlap_width
        blocks.append((start, stop))
        private_start += privates[i] + overlap_width
    assert blocks[-1][1] == n
    return Decomposition(n=n, overlap_width=overlap_width, blocks=tuple(blocks))


def restrict(w, i, dec):
    """Components of a global vector on block i, in index order."""
    dec._check_id(i)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (dec.n,):
        raise ValueError(f"vector shape {w.shape} does not match n={dec.n}")
    start, stop = dec.blocks[i]
    return w[start:stop].copy()


def extend(z, i, dec):
    """Embed a block-i local vector into a global vector, zero elsewhere."""
    dec._check_id(i)
    z = np.asarray(z, dtype=np.float64)
    start, stop = dec.blocks[i]
    if z.shape != (stop - start,):
        raise ValueError(
            f"local vector shape {z.shape} does not match block size {stop - start}"
        )
    out = np.zeros(dec.n)
    out[start:stop] = z
    return out


def reconstruct(local_vectors, dec):
    """Combine local vectors into a global one with partition-of-unity weights.

    Each index contributes with weight ``1/multiplicity``, so when the
    locals are restrictions of a common global vector the reconstruction
    returns that vector exactly: halving and re-adding two equal halves
    is exact in floating point.
    """
    local_vectors = list(local_vectors)
    if len(local_vectors) != dec.p:
        raise ValueError(f"expected {dec.p} local vectors, got {len(local_vectors)}")
    weights = 1.0 / dec.multiplicity()
    out = np.zeros(dec.n)
    for i, z in enumerate(local_vectors):
        z = np.asarray(z, dtype=np.float64)
        start, stop = dec.blocks[i]
        if z.shape != (stop - start,):
            raise ValueError(
                f"local vector {i} has shape {z.shape}, block size is {stop - start}"
            )
        out[start:stop] += weights[start:stop] * z
    return out


@dataclass(frozen=True)
class LocalFunctional:
    """Weighted restriction of the global objective to one block.

    Evaluates ``sum_k h_k (A_kk' v - y_k)^2 + lam * sum_k h_k v_k^2``
    over the block's rows, where ``h_k`` is 1 on private indices and 1/2
    on shared ones so that summing the local functionals of a
    block-structured matrix reproduces the global objective.  The
    quadratic pieces of its normal equations are exposed for the local
    solver.
    """

    subdomain: int
    indices: np.ndarray
    kernel_block: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    lam: float

    def __post_init__(self):
        for name in ("indices", "kernel_block", "targets", "weights"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_local(self):
        return self.indices.size

    def value(self, v):
        v = np.asarray(v, dtype=np.float64)
        misfit = self.kernel_block @ v - self.targets
        return float(self.weights @ misfit**2 + self.lam * (self.weights @ v**2))

    def normal_matrix(self):
        """Hessian/2 of the functional: ``A' diag(h) A + lam diag(h)``."""
        weighted = self.kernel_block * self.weights[:, None]
        return self.kernel_block.T @ weighted + self.lam * np.diag(self.weights)

    def normal_rhs(self):
        return self.kernel_block.T @ (self.weights * self.targets)


def restrict_functional(A, y, lam, i, dec):
    """Build block i's weighted local functional from the global problem.

    Rows shared with a neighboring block enter with weight 1/2, private
    rows with weight 1.  The kernel block is the square slice
    ``A[block, block]`` of the assembled global matrix, so its entries
    agree with the global assembly bit for bit.
    """
    dec._check_id(i)
    values = getattr(A, "values", A)
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (dec.n, dec.n):
        raise ValueError(f"matrix shape {values.shape} does not match n={dec.n}")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (dec.n,):
        raise ValueError(f"targets shape {y.shape} does not match n={dec.n}")
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    start, stop = dec.blocks[i]
    indices = np.arange(start, stop)
    weights = 1.0 / dec.multiplicity()[start:stop].astype(np.float64)
    return LocalFunctional(
        subdomain=i,
        indices=indices,
        kernel_block=values[start:stop, start:stop].copy(),
        targets=y[start:stop].copy(),
        weights=weights,
        lam=float(lam),
    )


@dataclass(frozen=True)
class LoadSchedule:
    """Integer observation moves along adjacency edges.

    ``moves`` holds ``((i, j), count)`` pairs; a positive count shifts
    that many observations from block i to block j.  ``flows`` is the
    pre-rounding least-norm solution, kept for diagnostics.
    """

    moves: tuple
    resulting_sizes: tuple
    flows: tuple

    def __post_init__(self):
        object.__setattr__(self, "moves", tuple(self.moves))
        object.__setattr__(self, "resulting_sizes", tuple(int(s) for s in self.resulting_sizes))
        object.__setattr__(self, "flows", tuple(float(f) for f in self.flows))


def _check_connected(p, edges):
    seen = {0}
    queue = deque([0])
    touch = {i: [] for i in range(p)}
    for a, b in edges:
        touch[a].append(b)
        touch[b].append(a)
    while queue:
        node = queue.popleft()
        for other in touch[node]:
            if other not in seen:
                seen.add(other)
                queue.append(other)
    if len(seen) != p:
        raise ValueError("adjacency graph is disconnected; cannot balance loads")


def min_norm_flows(p, edges, demand):
    """Least-norm edge flows meeting a per-node demand on a connected graph.

    Solves ``min ||f||_2`` subject to ``B f = demand`` where ``B`` is the
    node-edge incidence matrix (-1 at the edge's first node, +1 at its
    second, so positive flow moves load from the first node to the
    second).  ``demand`` is the required net inflow per node and must
    sum to zero.
    """
    edges = list(edges)
    demand = np.asarray(demand, dtype=np.float64)
    if demand.shape != (p,):
        raise ValueError(f"demand length {demand.shape} does not match {p} nodes")
    if abs(demand.sum()) > 1e-9 * max(1.0, np.abs(demand).max()):
        raise ValueError("demand does not sum to zero; flows cannot satisfy it")
    _check_connected(p, edges)
    if not edges:
        return np.zeros(0)
    B = np.zeros((p, len(edges)))
    for e, (a, b) in enumerate(edges):
        B[a, e] = -1.0
        B[b, e] = 1.0
    laplacian = B @ B.T
    potential, *_ = np.linalg.lstsq(laplacian, demand, rcond=None)
    return B.T @ potential


def _tree_flows(p, edges, demand):
    """Integer flows meeting an integer demand, routed on a BFS tree."""
    touch = {i: [] for i in range(p)}
    for e, (a, b) in enumerate(edges):
        touch[a].append((b, e, +1))
        touch[b].append((a, e, -1))
    parent = {0: None}
    order = [0]
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for other, e, sign in touch[node]:
            if other not in parent:
                parent[other] = (node, e, sign)
                order.append(other)
                queue.append(other)
    flows = np.zeros(len(edges), dtype=np.int64)
    remaining = np.array(demand, dtype=np.int64)
    for node in reversed(order[1:]):
        up, e, sign = parent[node]
        # Route this node's net demand through its parent edge; sign
        # says whether positive edge flow points into the node.
        flows[e] += sign * remaining[node]
        remaining[up] += remaining[node]
        remaining[node] = 0
    return flows


def balance_graph(p, edges, loads):
    """Plan integer load moves that equalize node loads along graph edges.

    Computes the least-norm fractional flows for the imbalance, rounds
    them, and repairs any residual imbalance with integer flows routed
    on a spanning tree.  Resulting sizes are within one observation of
    the average and total load is conserved.
    """
    loads = np.asarray(loads, dtype=np.int64)
    if loads.shape != (p,):
        raise ValueError(f"loads length {loads.shape} does not match p={p}")
    if (loads < 0).any():
        raise ValueError("loads must be non-negative")
    edges = list(edges)
    if not edges:
        if p > 1:
            raise ValueError("adjacency graph is disconnected; cannot balance loads")
        return LoadSchedule(moves=(), resulting_sizes=tuple(int(s) for s in loads), flows=())
    total = int(loads.sum())
    base, rem = divmod(total, p)
    targets = np.full(p, base, dtype=np.int64)
    targets[:rem] += 1
    fractional = min_norm_flows(p, edges, loads.mean() - loads)
    rounded = np.rint(fractional).astype(np.int64)
    B = np.zeros((p, len(edges)), dtype=np.int64)
    for e, (a, b) in enumerate(edges):
        B[a, e] = -1
        B[b, e] = 1
    residual = (targets - loads) - B @ rounded
    flows_int = rounded + _tree_flows(p, edges, residual)
    sizes = loads + B @ flows_int
    moves = tuple(
        (edges[e], int(flows_int[e])) for e in range(len(edges)) if flows_int[e] != 0
    )
    return LoadSchedule(
        moves=moves,
        resulting_sizes=tuple(int(s) for s in sizes),
        flows=tuple(float(f) for f in fractional),
    )


def balance(dec, loads):
    """Balance per-block loads along the decomposition's adjacency path."""
    return balance_graph(dec.p, dec.edges, loads)


def apply_schedule(dec, schedule):
    """Shift block boundaries according to a load schedule.

    A move of ``q`` observations from block i to block i+1 slides their
    shared overlap window ``q`` positions toward block i.  Overlap width
    is preserved.  Raises ValueError when a shift would leave any block
    smaller than ``overlap_width + 1`` or break the multiplicity
    invariant.
    """
    if not schedule.moves:
        return dec
    blocks = [list(b) for b in dec.blocks]
    for (i, j), count in schedule.moves:
        if abs(i - j) != 1:
            raise ValueError(f"move across non-adjacent blocks ({i}, {j})")
        lo = min(i, j)
        # Normalize to the flow from block lo to block lo+1.
        shift = count if i == lo else -count
        blocks[lo][1] -= shift
        blocks[lo + 1][0] -= shift
    floor = dec.overlap_width + 1
    for idx, (start, stop) in enumerate(blocks):
        if stop - start < floor:
            raise ValueError(
                f"schedule shrinks block {idx} to {stop - start} indices, "
                f"minimum is overlap_width + 1 = {floor}"
            )
    return Decomposition(
        n=dec.n,
        overlap_width=dec.overlap_width,
        blocks=tuple(tuple(b) for b in blocks),
    )
