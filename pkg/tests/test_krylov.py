"""
Tests for the flexible PCG solver.
"""
import numpy as np
import pytest

from src.core.amg_setup import initial_smooth_vector, setup_hierarchy
from src.core.cycle import AmgPreconditioner, identity_preconditioner
from src.core.dist_runtime import Partition, spawn_ranks
from src.core.errors import PcgBreakdownError
from src.core.halo_kernels import DistVector
from src.core.krylov import pcg_solve, residual
from src.core.problem_gen import gen_poisson7
from src.core.sparse_core import CsrMatrix, l1_diagonal
from src.state import CycleConfig, SetupConfig, SolveConfig
from tests.helpers import gather_vector, random_spd, scatter_matrix, scatter_vector


def _textbook_pcg(A, b, m_inv, iters):
    """Unflexible PCG history, written out the usual way."""
    x = np.zeros_like(b)
    r = b.copy()
    z = m_inv * r
    p = z.copy()
    rz = r @ z
    norm0 = np.linalg.norm(r)
    history = [1.0]
    for _ in range(iters):
        Ap = A @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        history.append(np.linalg.norm(r) / norm0)
        z = m_inv * r
        rz_next = r @ z
        p = z + (rz_next / rz) * p
        rz = rz_next
    return np.array(history)


def test_identity_system_converges_in_one_iteration():
    part = Partition.uniform(10, 2)
    b_global = np.arange(1.0, 11.0)

    def program(ctx):
        A = scatter_matrix(ctx, CsrMatrix.identity(10), part)
        return pcg_solve(ctx, A, scatter_vector(ctx, b_global, part))

    results = spawn_ranks(2, program)
    stats = results[0][1]
    assert stats.iterations == 1
    assert stats.converged
    np.testing.assert_allclose(gather_vector([u for u, _ in results]), b_global)


def test_default_preconditioner_is_the_identity(rng):
    A_global = random_spd(rng, 20, 0.2)
    b_global = rng.standard_normal(20)
    part = Partition.uniform(20, 2)

    def program(ctx):
        A = scatter_matrix(ctx, A_global, part)
        b = scatter_vector(ctx, b_global, part)
        _, default = pcg_solve(ctx, A, b)
        _, explicit = pcg_solve(ctx, A, b, precond=identity_preconditioner)
        return default.history, explicit.history

    for default, explicit in spawn_ranks(2, program):
        assert default == explicit


def test_exact_inverse_converges_in_one_iteration(rng):
    A_global = random_spd(rng, 12, 0.3)
    A_inv = np.linalg.inv(A_global.to_dense())
    b_global = rng.standard_normal(12)
    part = Partition.uniform(12, 1)

    def program(ctx):
        A = scatter_matrix(ctx, A_global, part)
        return pcg_solve(ctx, A, scatter_vector(ctx, b_global, part),
                         precond=lambda r: r.like(A_inv @ r.local), cfg=SolveConfig(rtol=1e-8))

    u, stats = spawn_ranks(1, program)[0]
    assert stats.iterations == 1
    np.testing.assert_allclose(u.local, A_inv @ b_global, rtol=1e-8)


def test_zero_right_hand_side_needs_no_iterations():
    def program(ctx):
        A, b = gen_poisson7(ctx, 3)
        return pcg_solve(ctx, A, DistVector.zeros(b.part, ctx.rank))

    u, stats = spawn_ranks(2, program)[0]
    assert stats.iterations == 0
    assert stats.history == [0.0]
    assert not np.any(u.local)


def test_residual(rng):
    A_global = random_spd(rng, 15, 0.2)
    u_global = rng.standard_normal(15)
    b_global = rng.standard_normal(15)
    part = Partition.uniform(15, 3)

    def program(ctx):
        A = scatter_matrix(ctx, A_global, part)
        return residual(ctx, A, scatter_vector(ctx, b_global, part), scatter_vector(ctx, u_global, part))

    r = gather_vector(spawn_ranks(3, program))
    np.testing.assert_allclose(r, b_global - A_global.to_dense() @ u_global, rtol=1e-12, atol=1e-12)


def test_singular_system_breaks_down():
    part = Partition.uniform(1, 1)

    def program(ctx):
        A = scatter_matrix(ctx, CsrMatrix.from_dense([[0.0]]), part)
        pcg_solve(ctx, A, DistVector.full(part, 0, 1.0))

    with pytest.raises(PcgBreakdownError) as info:
        spawn_ranks(1, program)
    assert info.value.iteration == 0


def test_diagonal_preconditioner_matches_textbook_history():
    nd, iters = 16, 20
    cfg = SolveConfig(rtol=1e-14, max_iters=iters)

    def program(ctx):
        A, b = gen_poisson7(ctx, nd)
        lo, _ = A.part.range(ctx.rank)
        d = l1_diagonal(A.local, row_offset=lo)
        _, stats = pcg_solve(ctx, A, b, precond=lambda r: r.like(r.local / d), cfg=cfg)
        return stats

    stats = spawn_ranks(2, program)[0]
    assert stats.iterations == iters
    assert not stats.converged

    def serial(ctx):
        A, b = gen_poisson7(ctx, nd)
        return A.local.to_scipy(), b.local, l1_diagonal(A.local)

    A, b, d = spawn_ranks(1, serial)[0]
    expected = _textbook_pcg(A, b, 1.0 / d, iters)
    np.testing.assert_allclose(stats.history, expected, rtol=1e-8)


def test_energy_error_decreases_and_reductions_are_fused():
    nd = 10

    def program(ctx):
        A, b = gen_poisson7(ctx, nd)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig(coarse_size=100))
        precond = AmgPreconditioner(ctx, h, CycleConfig())
        before = ctx.stats.collectives["allreduce"]
        iterates = []
        for k in range(1, 8):
            u, stats = pcg_solve(ctx, A, b, precond=precond, cfg=SolveConfig(rtol=1e-12, max_iters=k))
            iterates.append(u.local)
        reductions = ctx.stats.collectives["allreduce"] - before
        return iterates, reductions

    def serial(ctx):
        A, b = gen_poisson7(ctx, nd)
        return A.local.to_dense(), b.local

    results = spawn_ranks(2, program)
    A, b = spawn_ranks(1, serial)[0]
    exact = np.linalg.solve(A, b)
    energies = []
    for k in range(7):
        e = exact - np.concatenate([r[0][k] for r in results])
        energies.append(np.sqrt(e @ A @ e))
    assert all(b_ <= a + 1e-12 * energies[0] for a, b_ in zip(energies, energies[1:]))
    # every solve: one reduction to start plus one per iteration
    assert results[0][1] == sum(1 + k for k in range(1, 8))


def _amg_iterations(nd, nranks):
    def program(ctx):
        A, b = gen_poisson7(ctx, nd)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig())
        _, stats = pcg_solve(ctx, A, b, precond=AmgPreconditioner(ctx, h, CycleConfig()))
        return stats

    stats = spawn_ranks(nranks, program)[0]
    assert stats.converged
    assert stats.history[-1] < 1e-6
    return stats.iterations


def test_iteration_count_barely_depends_on_ranks():
    counts = [_amg_iterations(24, p) for p in (1, 2, 4)]
    assert max(counts) <= 1.5 * min(counts)


@pytest.mark.slow
def test_iteration_count_grows_slowly_with_size():
    counts = [_amg_iterations(nd, 1) for nd in (16, 32, 48)]
    assert counts[-1] <= 2.0 * counts[0]


def _replayed_solve(nranks, replay=None):
    def program(ctx):
        A, b = gen_poisson7(ctx, 24)
        h = setup_hierarchy(ctx, A, initial_smooth_vector(A.part, ctx.rank), SetupConfig(), replay=replay)
        _, stats = pcg_solve(ctx, A, b, precond=AmgPreconditioner(ctx, h, CycleConfig()))
        return h.matchings, stats
    return spawn_ranks(nranks, program)


def test_replayed_hierarchy_gives_identical_iterations():
    recorded = _replayed_solve(4)
    steps = len(recorded[0][0])
    replay = [np.concatenate([mates[k] for mates, _ in recorded]) for k in range(steps)]
    runs = [_replayed_solve(nranks, replay)[0][1] for nranks in (1, 2, 4)]
    assert all(stats.converged for stats in runs)
    assert len({stats.iterations for stats in runs}) == 1
    finals = [stats.history[-1] for stats in runs]
    assert max(finals) <= SolveConfig().rtol
    assert max(finals) <= 10.0 * min(finals)
