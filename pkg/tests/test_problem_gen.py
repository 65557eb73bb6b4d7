"""
Tests for the Poisson generator and matrix distribution.
"""
import numpy as np
import pytest
from scipy.io import mmwrite

from src.core.dist_runtime import Partition, spawn_ranks
from src.core.errors import ContractViolation
from src.core.problem_gen import distribute, gen_poisson7, load_matrix_market
from src.core.sparse_core import CsrMatrix
from tests.helpers import gather_matrix, gather_vector, random_spd


def _poisson(nd, nranks=1, scaled=True):
    def program(ctx):
        return gen_poisson7(ctx, nd, scaled=scaled)

    results = spawn_ranks(nranks, program)
    A = gather_matrix([A for A, _ in results])
    b = gather_vector([b for _, b in results])
    return A, b


def test_single_point_grid():
    A, b = _poisson(1)
    np.testing.assert_array_equal(A.to_dense(), [[6.0]])
    np.testing.assert_array_equal(b, [1.0])


def test_two_point_grid_rows():
    A, _ = _poisson(2)
    assert A.shape == (8, 8)
    assert A.nnz == 8 * 4
    start, stop = A.row_ptr[0], A.row_ptr[1]
    assert A.col_idx[start:stop].tolist() == [0, 1, 2, 4]
    assert A.values[start:stop].tolist() == [6.0, -1.0, -1.0, -1.0]
    start, stop = A.row_ptr[7], A.row_ptr[8]
    assert A.col_idx[start:stop].tolist() == [3, 5, 6, 7]


def test_interior_and_boundary_row_counts():
    A, _ = _poisson(4)
    lengths = np.diff(A.row_ptr)
    # corner, edge, face and interior points
    assert sorted(set(lengths.tolist())) == [4, 5, 6, 7]
    assert np.count_nonzero(lengths == 7) == 8
    assert A.nnz == 7 * 64 - 6 * 16


@pytest.mark.parametrize("nranks", [2, 3, 5])
def test_assembly_does_not_depend_on_ranks(nranks):
    reference, _ = _poisson(5)
    A, b = _poisson(5, nranks)
    assert np.array_equal(A.row_ptr, reference.row_ptr)
    assert np.array_equal(A.col_idx, reference.col_idx)
    assert np.array_equal(A.values, reference.values)
    np.testing.assert_array_equal(b, np.ones(125))


def test_symmetric_with_nonnegative_row_sums():
    A, _ = _poisson(5, 2)
    dense = A.to_dense()
    np.testing.assert_array_equal(dense, dense.T)
    sums = dense.sum(axis=1)
    assert np.all(sums >= 0)
    assert sums.min() == 0.0 and sums.max() == 3.0


@pytest.mark.parametrize("nd", [1, 3, 6])
def test_positive_definite(nd):
    A, _ = _poisson(nd)
    assert np.linalg.eigvalsh(A.to_dense()).min() > 0


def test_unscaled_variant_divides_by_grid_spacing():
    scaled, _ = _poisson(3)
    unscaled, _ = _poisson(3, scaled=False)
    np.testing.assert_allclose(unscaled.values, scaled.values * 16.0)


def test_rejects_bad_sizes():
    def program(ctx):
        with pytest.raises(ContractViolation):
            gen_poisson7(ctx, 0)
        with pytest.raises(ContractViolation):
            gen_poisson7(ctx, 3, part=Partition.uniform(26, ctx.nranks))
        return True

    assert all(spawn_ranks(2, program))


def test_distribute_roundtrip(rng):
    A_global = random_spd(rng, 23, 0.2)
    part = Partition.from_counts([10, 0, 13])

    def program(ctx):
        A = distribute(ctx, A_global if ctx.rank == 0 else None, part)
        return A, A.part

    results = spawn_ranks(3, program)
    assert all(p == part for _, p in results)
    np.testing.assert_array_equal(gather_matrix([m for m, _ in results]).to_dense(), A_global.to_dense())


def test_distribute_rejects_rectangular():
    def program(ctx):
        with pytest.raises(ContractViolation):
            distribute(ctx, CsrMatrix.empty(3, 4))
        return True

    assert spawn_ranks(1, program)[0]


def test_load_matrix_market(tmp_path, rng):
    A_global = random_spd(rng, 17, 0.2)
    path = tmp_path / "spd.mtx"
    mmwrite(str(path), A_global.to_scipy(), symmetry="symmetric")

    def program(ctx):
        return load_matrix_market(ctx, path)

    results = spawn_ranks(2, program)
    A = gather_matrix([A for A, _ in results])
    np.testing.assert_allclose(A.to_dense(), A_global.to_dense(), rtol=1e-15)
    np.testing.assert_array_equal(gather_vector([b for _, b in results]), np.ones(17))
