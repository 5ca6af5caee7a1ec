"""Overlapping block decomposition, weighted restriction and load balancing."""

import numpy as np
import pytest

from ddkl import (
    Decomposition,
    apply_schedule,
    balance,
    balance_graph,
    extend,
    kernels,
    min_norm_flows,
    reconstruct,
    restrict,
    restrict_functional,
    uniform_decompose,
)


def test_uniform_decompose_two_blocks():
    dec = uniform_decompose(10, 2, 2)
    assert dec.blocks == ((0, 6), (4, 10))
    assert dec.overlap(0, 1) == (4, 6)
    assert dec.edges == [(0, 1)]
    assert dec.neighbors(0) == [1]
    assert dec.neighbors(1) == [0]
    assert dec.size(0) == 6 and dec.size(1) == 6
    assert np.array_equal(dec.multiplicity(), [1, 1, 1, 1, 2, 2, 1, 1, 1, 1])


def test_uniform_decompose_single_block():
    dec = uniform_decompose(10, 1, 3)
    assert dec.blocks == ((0, 10),)
    assert dec.edges == []
    assert np.array_equal(dec.multiplicity(), np.ones(10, dtype=np.int64))


@pytest.mark.parametrize("n", [17, 30, 101])
@pytest.mark.parametrize("p", [2, 3, 5])
@pytest.mark.parametrize("ov", [1, 2, 4])
def test_uniform_decompose_invariants(n, p, ov):
    if n < p + (p - 1) * ov:
        pytest.skip("infeasible combination")
    dec = uniform_decompose(n, p, ov)
    assert dec.p == p
    assert dec.blocks[0][0] == 0 and dec.blocks[-1][1] == n
    mult = dec.multiplicity()
    assert mult.min() >= 1 and mult.max() <= 2
    # every consecutive pair shares exactly the requested overlap
    for i in range(p - 1):
        lo, hi = dec.overlap(i, i + 1)
        assert hi - lo == ov
    # private sizes (indices owned by exactly one block) differ by at most one
    privates = []
    for i in range(p):
        lo, hi = dec.blocks[i]
        privates.append(int((mult[lo:hi] == 1).sum()))
    assert max(privates) - min(privates) <= 1
    assert sum(privates) + ov * (p - 1) == n


def test_uniform_decompose_rejects_infeasible():
    with pytest.raises(ValueError, match="n >="):
        uniform_decompose(5, 4, 3)
    with pytest.raises(ValueError):
        uniform_decompose(10, 0, 1)
    with pytest.raises(ValueError):
        uniform_decompose(10, 3, 0)


def test_decomposition_validation():
    with pytest.raises(ValueError):  # gap between blocks
        Decomposition(n=10, overlap_width=1, blocks=((0, 4), (6, 10)))
    with pytest.raises(ValueError):  # does not reach n
        Decomposition(n=10, overlap_width=1, blocks=((0, 5), (4, 9)))
    with pytest.raises(ValueError):  # overlap thinner than declared
        Decomposition(n=10, overlap_width=3, blocks=((0, 5), (4, 10)))
    with pytest.raises(ValueError):  # non-consecutive blocks intersect
        Decomposition(n=10, overlap_width=1, blocks=((0, 9), (1, 9), (8, 10)))


def test_decomposition_dict_round_trip():
    dec = uniform_decompose(23, 3, 2)
    again = Decomposition.from_dict(dec.to_dict())
    assert again == dec


def test_block_id_bounds():
    dec = uniform_decompose(10, 2, 2)
    with pytest.raises(IndexError):
        dec.size(2)
    with pytest.raises(IndexError):
        restrict(np.zeros(10), -1, dec)


def test_restrict_selects_block_entries():
    dec = uniform_decompose(10, 2, 2)
    w = np.arange(10.0)
    assert np.array_equal(restrict(w, 0, dec), w[0:6])
    assert np.array_equal(restrict(w, 1, dec), w[4:10])
    assert np.array_equal(restrict(np.zeros(10), 0, dec), np.zeros(6))
    with pytest.raises(ValueError):
        restrict(np.zeros(9), 0, dec)


def test_extend_pads_with_zeros():
    dec = uniform_decompose(5, 2, 1)
    assert dec.blocks == ((0, 3), (2, 5))
    out = extend(np.array([1.0, 2.0, 3.0]), 0, dec)
    assert np.array_equal(out, [1.0, 2.0, 3.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        extend(np.zeros(4), 0, dec)


def test_restrict_then_extend_round_trip():
    rng = np.random.default_rng(0)
    dec = uniform_decompose(30, 4, 2)
    w = rng.standard_normal(30)
    for i in range(4):
        out = restrict(extend(restrict(w, i, dec), i, dec), i, dec)
        assert np.array_equal(out, restrict(w, i, dec))


def test_reconstruct_restrictions_exactly():
    rng = np.random.default_rng(1)
    for n, p, ov in [(5, 2, 1), (10, 2, 2), (30, 4, 2), (23, 3, 3)]:
        dec = uniform_decompose(n, p, ov)
        w = rng.standard_normal(n)
        parts = [restrict(w, i, dec) for i in range(p)]
        # halved weights recombine without roundoff
        assert np.array_equal(reconstruct(parts, dec), w)


def test_reconstruct_averages_disagreement():
    dec = uniform_decompose(5, 2, 1)
    out = reconstruct([np.array([1.0, 1.0, 3.0]), np.array([5.0, 2.0, 2.0])], dec)
    assert np.array_equal(out, [1.0, 1.0, 4.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        reconstruct([np.zeros(3)], dec)
    with pytest.raises(ValueError):
        reconstruct([np.zeros(2), np.zeros(3)], dec)


def _conforming_matrix(n, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, float(n), size=(n, 1))
    spec = kernels.KernelSpec(outer="gaussian", sigma=1.0)
    return kernels.assemble(spec, X).values, rng.standard_normal(n)


def test_restrict_functional_single_block_equals_global():
    A, y = _conforming_matrix(12)
    lam = 0.2
    dec = uniform_decompose(12, 1, 1)
    J = restrict_functional(A, y, lam, 0, dec)
    rng = np.random.default_rng(2)
    for _ in range(10):
        v = rng.standard_normal(12)
        expected = np.linalg.norm(A @ v - y) ** 2 + lam * np.linalg.norm(v) ** 2
        assert J.value(v) == pytest.approx(expected, rel=1e-12)


def test_restrict_functional_overlap_weights():
    A, y = _conforming_matrix(10)
    dec = uniform_decompose(10, 2, 2)
    J0 = restrict_functional(A, y, 0.1, 0, dec)
    # interior rows weigh 1, shared rows 1/2
    assert np.array_equal(J0.weights, [1.0, 1.0, 1.0, 1.0, 0.5, 0.5])
    assert J0.n_local == 6
    assert J0.kernel_block.shape == (6, 6)
    with pytest.raises(IndexError):
        restrict_functional(A, y, 0.1, 5, dec)


def test_normal_matrix_is_gradient_of_value():
    A, y = _conforming_matrix(14, seed=3)
    dec = uniform_decompose(14, 2, 2)
    J = restrict_functional(A, y, 0.3, 1, dec)
    M = J.normal_matrix()
    b = J.normal_rhs()
    rng = np.random.default_rng(4)
    v = rng.standard_normal(J.n_local)
    # quadratic expansion: J(v) = v' M v - 2 b' v + J(0)
    expected = float(v @ M @ v - 2.0 * b @ v) + J.value(np.zeros(J.n_local))
    assert J.value(v) == pytest.approx(expected, rel=1e-10)


def test_min_norm_flows_path_example():
    flows = min_norm_flows(3, [(0, 1), (1, 2)], np.array([10.0, -20.0, 10.0]))
    assert np.allclose(flows, [-10.0, 10.0], rtol=0.0, atol=1e-9)


def test_min_norm_flows_matches_pseudoinverse():
    rng = np.random.default_rng(5)
    graphs = [
        (4, [(0, 1), (1, 2), (2, 3)]),
        (4, [(0, 1), (1, 2), (2, 3), (0, 3)]),
        (5, [(0, 1), (0, 2), (0, 3), (0, 4)]),
        (6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)]),
    ]
    for p, edges in graphs:
        demand = rng.standard_normal(p)
        demand -= demand.mean()
        flows = min_norm_flows(p, edges, demand)
        B = np.zeros((p, len(edges)))
        for e, (a, b) in enumerate(edges):
            B[a, e] = -1.0
            B[b, e] = 1.0
        expected = B.T @ np.linalg.pinv(B @ B.T) @ demand
        assert np.linalg.norm(flows - expected) <= 1e-8
        assert np.linalg.norm(B @ flows - demand) <= 1e-8


def test_min_norm_flows_rejects_bad_input():
    with pytest.raises(ValueError, match="disconnected"):
        min_norm_flows(3, [(0, 1)], np.array([1.0, -1.0, 0.0]))
    with pytest.raises(ValueError, match="sum"):
        min_norm_flows(2, [(0, 1)], np.array([1.0, 1.0]))


def test_balance_already_even():
    dec = uniform_decompose(60, 3, 2)
    sch = balance(dec, [20, 20, 20])
    assert sch.moves == ()
    assert sch.resulting_sizes == (20, 20, 20)


def test_balance_two_blocks():
    dec = uniform_decompose(42, 2, 2)
    sch = balance(dec, [30, 10])
    assert sch.moves == (((0, 1), 10),)
    assert sch.resulting_sizes == (20, 20)


def test_balance_three_block_example():
    dec = uniform_decompose(60, 3, 2)
    sch = balance(dec, [10, 40, 10])
    assert np.allclose(sch.flows, [-10.0, 10.0], rtol=0.0, atol=1e-9)
    assert sch.moves == (((0, 1), -10), ((1, 2), 10))
    assert sch.resulting_sizes == (20, 20, 20)


@pytest.mark.parametrize("seed", range(6))
def test_balance_sizes_within_one_and_conserved(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 7))
    loads = rng.integers(0, 200, size=p)
    dec = uniform_decompose(40 * p, p, 2)
    sch = balance(dec, loads)
    sizes = np.array(sch.resulting_sizes)
    assert sizes.sum() == loads.sum()
    assert sizes.max() - sizes.min() <= 1


def test_balance_graph_on_cycle():
    sch = balance_graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)], [12, 0, 0, 0])
    assert sch.resulting_sizes == (3, 3, 3, 3)
    moved = sum(abs(c) for _, c in sch.moves)
    assert moved >= 9  # at least the deficit must travel


def test_balance_rejects_bad_loads():
    dec = uniform_decompose(30, 3, 2)
    with pytest.raises(ValueError):
        balance(dec, [1, 2])
    with pytest.raises(ValueError):
        balance(dec, [1, -2, 3])
    with pytest.raises(ValueError, match="disconnected"):
        balance_graph(3, [], [1, 2, 3])


def test_apply_schedule_no_moves():
    dec = uniform_decompose(30, 3, 2)
    sch = balance(dec, [10, 10, 10])
    assert apply_schedule(dec, sch).blocks == dec.blocks


def test_apply_schedule_shifts_boundaries():
    dec = Decomposition(n=60, overlap_width=2, blocks=((0, 30), (28, 40), (38, 60)))
    sizes = [dec.size(i) for i in range(3)]
    sch = balance(dec, sizes)
    out = apply_schedule(dec, sch)
    assert [out.size(i) for i in range(3)] == list(sch.resulting_sizes)
    assert out.n == 60 and out.overlap_width == 2
    for i in range(2):
        lo, hi = out.overlap(i, i + 1)
        assert hi - lo == 2


def test_apply_schedule_rejects_oversized_shift():
    dec = uniform_decompose(60, 3, 2)
    # moving 10 off each side would crush the middle block
    sch = balance(dec, [10, 40, 10])
    with pytest.raises(ValueError):
        apply_schedule(dec, sch)
