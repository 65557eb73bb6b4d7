"""
Tests for l1-Jacobi and the V-cycle preconditioner.
"""
import numpy as np
import pytest

from src.core.amg_setup import initial_smooth_vector, setup_hierarchy
from src.core.cycle import AmgPreconditioner, l1_jacobi_sweeps, vcycle_apply
from src.core.dist_runtime import Partition, spawn_ranks
from src.core.errors import ContractViolation, SingularSmootherError
from src.core.halo_kernels import DistVector
from src.core.problem_gen import gen_poisson7
from src.core.sparse_core import CsrMatrix, l1_diagonal
from src.state import CycleConfig, SetupConfig
from tests.helpers import gather_vector, scatter_matrix, scatter_vector


def _jacobi(A_global, r_global, x0_global, nu, nranks=1):
    part = Partition.uniform(A_global.nrows, nranks)

    def program(ctx):
        A = scatter_matrix(ctx, A_global, part)
        lo, hi = part.range(ctx.rank)
        d = DistVector(part, ctx.rank, l1_diagonal(A.local, row_offset=lo))
        x0 = None if x0_global is None else scatter_vector(ctx, x0_global, part)
        return l1_jacobi_sweeps(ctx, A, d, scatter_vector(ctx, r_global, part), x0, nu)

    return gather_vector(spawn_ranks(nranks, program))


def test_diagonal_matrix_one_sweep():
    A = CsrMatrix.from_dense(np.diag([2.0, 4.0, 5.0]))
    np.testing.assert_allclose(_jacobi(A, np.array([2.0, 2.0, 10.0]), None, 1), [1.0, 0.5, 2.0])


def test_zero_sweeps_return_start(lap1d_8):
    x0 = np.arange(8.0)
    np.testing.assert_array_equal(_jacobi(lap1d_8, np.ones(8), x0, 0), x0)
    np.testing.assert_array_equal(_jacobi(lap1d_8, np.ones(8), None, 0), np.zeros(8))


def test_error_decreases_in_diagonal_norm(lap1d_8):
    A = lap1d_8.to_dense()
    d = l1_diagonal(lap1d_8)
    r = np.random.default_rng(2).standard_normal(8)
    exact = np.linalg.solve(A, r)
    errors = []
    for nu in range(8):
        e = exact - _jacobi(lap1d_8, r, None, nu, nranks=2)
        errors.append(np.sqrt(e @ (d * e)))
    assert all(b <= a + 1e-14 for a, b in zip(errors, errors[1:]))


def test_zero_diagonal_is_rejected():
    part = Partition.uniform(2, 1)

    def program(ctx):
        A = scatter_matrix(ctx, CsrMatrix.identity(2), part)
        d = DistVector(part, 0, np.array([1.0, 0.0]))
        l1_jacobi_sweeps(ctx, A, d, DistVector.full(part, 0, 1.0), None, 2)

    with pytest.raises(SingularSmootherError):
        spawn_ranks(1, program)


def test_single_level_cycle_is_plain_jacobi():
    cfg = CycleConfig(coarsest_sweeps=7)

    def program(ctx):
        A, b = gen_poisson7(ctx, 4)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig(coarse_size=64))
        x = vcycle_apply(ctx, h, cfg, b)
        y = l1_jacobi_sweeps(ctx, A, h.levels[0].m_l1, b, None, 7)
        return h.nl, np.array_equal(x.local, y.local)

    assert all(nl == 1 and same for nl, same in spawn_ranks(2, program))


def test_identity_matrix_reproduces_input():
    part = Partition.uniform(6, 2)
    r_global = np.arange(1.0, 7.0)

    def program(ctx):
        A = scatter_matrix(ctx, CsrMatrix.identity(6), part)
        h = setup_hierarchy(ctx, A, DistVector.full(part, ctx.rank, 1.0), SetupConfig(coarse_size=6))
        return vcycle_apply(ctx, h, CycleConfig(), scatter_vector(ctx, r_global, part))

    np.testing.assert_array_equal(gather_vector(spawn_ranks(2, program)), r_global)


def test_vcycle_is_symmetric_positive_and_linear():
    n = 16 ** 3
    rng = np.random.default_rng(11)
    trials = 100
    U = rng.standard_normal((trials, n))
    V = rng.standard_normal((trials, n))
    cfg = CycleConfig()

    def program(ctx):
        A, _ = gen_poisson7(ctx, 16)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig(coarse_size=640))
        assert h.nl >= 2
        lo, hi = A.part.range(ctx.rank)
        out = []
        for u, v in zip(U, V):
            Bu = vcycle_apply(ctx, h, cfg, DistVector(A.part, ctx.rank, u[lo:hi]))
            Bv = vcycle_apply(ctx, h, cfg, DistVector(A.part, ctx.rank, v[lo:hi]))
            out.append((Bu.local, Bv.local))
        combo = vcycle_apply(ctx, h, cfg, DistVector(A.part, ctx.rank, 2.0 * U[0][lo:hi] - 3.0 * V[0][lo:hi]))
        zero = vcycle_apply(ctx, h, cfg, DistVector.zeros(A.part, ctx.rank))
        return out, combo.local, zero.local

    results = spawn_ranks(2, program)
    Bu = [np.concatenate([r[0][t][0] for r in results]) for t in range(trials)]
    Bv = [np.concatenate([r[0][t][1] for r in results]) for t in range(trials)]
    scale = max(np.linalg.norm(b) / np.linalg.norm(u) for b, u in zip(Bu, U))
    for t in range(trials):
        u, v = U[t], V[t]
        assert abs(u @ Bv[t] - v @ Bu[t]) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v) * scale
        assert u @ Bu[t] > 0
    combo = np.concatenate([r[1] for r in results])
    expected = 2.0 * Bu[0] - 3.0 * Bv[0]
    np.testing.assert_allclose(combo, expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())
    assert not np.any(np.concatenate([r[2] for r in results]))


def test_message_count_is_constant_per_application():
    def program(ctx):
        A, b = gen_poisson7(ctx, 8)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig(coarse_size=40))
        precond = AmgPreconditioner(ctx, h, CycleConfig())
        counts = []
        for _ in range(3):
            before = ctx.stats.total_messages
            precond(b)
            counts.append(ctx.stats.total_messages - before)
        return counts, precond.applications

    for counts, applications in spawn_ranks(3, program):
        assert len(set(counts)) == 1
        assert applications == 3


def test_level_out_of_range():
    def program(ctx):
        A, b = gen_poisson7(ctx, 2)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig(coarse_size=8))
        with pytest.raises(ContractViolation):
            vcycle_apply(ctx, h, CycleConfig(), b, level=1)
        return True

    assert spawn_ranks(1, program)[0]


def test_asymmetric_sweeps_warn(caplog):
    def program(ctx):
        A, _ = gen_poisson7(ctx, 2)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig(coarse_size=8))
        AmgPreconditioner(ctx, h, CycleConfig(pre_sweeps=2, post_sweeps=3))

    with caplog.at_level("WARNING"):
        spawn_ranks(1, program)
    assert "not symmetric" in caplog.text
