import threading

import numpy as np
import pytest

from hsskit.exceptions import InvalidInputError
from hsskit.ops import to_dense
from hsskit.source import (
    KernelSpec,
    check_consistency,
    dense_accessor,
    kernel_accessor,
    load_dense_text,
    random_hss,
    save_dense_text,
    synthetic_hss_accessor,
)

# observed 1e-10 rank of the rows 0..127 x cols 128..255 block of the
# N = 256 uniform log kernel (dense SVD)
LOG256_HALF_BLOCK_RANK = 15


class TestDenseAccessor:
    def test_identity(self, rng):
        acc = dense_accessor(np.eye(4))
        x = rng.standard_normal(4)
        np.testing.assert_array_equal(acc.matvec(x), x)

    def test_diagonal_entries(self):
        acc = dense_accessor(np.diag([1.0, 2.0, 3.0]))
        assert acc.entry(1, 1) == 2.0
        assert acc.entry(0, 2) == 0.0

    def test_basis_vector_probes(self, rng):
        G = rng.standard_normal((8, 8))
        acc = dense_accessor(G + G.T)
        assert acc.symmetric
        for _ in range(20):
            i, j = rng.integers(8, size=2)
            e = np.zeros(8)
            e[j] = 1.0
            assert acc.matvec(e)[i] == pytest.approx(acc.entry(i, j), abs=1e-15)

    def test_symmetry_scan_is_exact(self):
        A = np.array([[1.0, 2.0], [2.0 + 1e-15, 1.0]])
        assert not dense_accessor(A).symmetric

    def test_non_square(self):
        with pytest.raises(InvalidInputError):
            dense_accessor(np.ones((2, 3)))

    def test_text_round_trip(self, tmp_path, rng):
        A = rng.standard_normal((5, 5))
        save_dense_text(tmp_path / "a.txt", A)
        np.testing.assert_array_equal(load_dense_text(tmp_path / "a.txt"), A)

    def test_text_malformed(self, tmp_path):
        (tmp_path / "bad.txt").write_text("2 2\n1 2 3\n")
        with pytest.raises(InvalidInputError):
            load_dense_text(tmp_path / "bad.txt")


class TestCounters:
    def test_single_call_contract(self, rng):
        acc = kernel_accessor(KernelSpec.uniform("exp", 16))
        acc.matvec(rng.standard_normal(16))
        acc.entry(2, 3)
        snap = acc.counters.snapshot()
        assert snap["matvec"] == 1 and snap["entry"] == 1 and snap["rmatvec"] == 0
        acc.matmat(rng.standard_normal((16, 5)))
        acc.submatrix([0, 1], [2, 3, 4])
        snap = acc.counters.snapshot()
        assert snap["matvec"] == 6 and snap["entry"] == 7

    def test_materialize_is_free(self):
        acc = kernel_accessor(KernelSpec.uniform("log", 10))
        acc.materialize()
        assert acc.counters.snapshot()["entry"] == 0

    def test_no_lost_increments(self):
        acc = dense_accessor(np.eye(3))

        def work():
            for _ in range(2000):
                acc.entry(0, 0)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert acc.counters.entry == 16000

    def test_reset_and_monotone(self):
        acc = dense_accessor(np.eye(3))
        acc.entry(0, 0)
        with pytest.raises(ValueError):
            acc.counters.add(entry=-1)
        acc.counters.reset()
        assert acc.counters.entry == 0


class TestKernelAccessor:
    def test_log_two_points_is_zero(self):
        acc = kernel_accessor(KernelSpec("log", (1.0, 2.0), diagonal=0.0))
        np.testing.assert_array_equal(acc.materialize(), np.zeros((2, 2)))

    def test_inverse_distance_entry(self):
        acc = kernel_accessor(KernelSpec("inv", (0.0, 1.0, 3.0)))
        assert acc.entry(0, 2) == pytest.approx(1 / 3, rel=1e-15)

    def test_log_half_block_rank(self):
        A = kernel_accessor(KernelSpec.uniform("log", 256)).materialize()
        s = np.linalg.svd(A[:128, 128:], compute_uv=False)
        rank = int(np.sum(s >= 1e-10))
        assert rank <= 20
        assert rank == LOG256_HALF_BLOCK_RANK

    @pytest.mark.parametrize("kernel", ["log", "inv", "exp"])
    def test_exact_symmetry_and_consistency(self, kernel):
        acc = kernel_accessor(KernelSpec.uniform(kernel, 300))
        A = acc.materialize()
        assert np.array_equal(A, A.T)
        assert check_consistency(acc, 50) <= 1e-12 * np.abs(A).max()

    def test_matvec_matches_materialized(self, rng):
        acc = kernel_accessor(KernelSpec.uniform("inv", 700))
        X = rng.standard_normal((700, 3))
        A = acc.materialize()
        np.testing.assert_allclose(acc.matmat(X), A @ X, rtol=1e-12, atol=1e-12 * np.linalg.norm(A))

    @pytest.mark.parametrize("points", [(0.0, 0.0), (1.0, 0.5), ()])
    def test_bad_points(self, points):
        with pytest.raises(InvalidInputError):
            KernelSpec("log", points)

    def test_unknown_kernel(self):
        with pytest.raises(InvalidInputError):
            KernelSpec("gauss", (0.0, 1.0))


class TestSynthetic:
    def test_small_blocks_have_rank_one(self):
        acc, f = synthetic_hss_accessor(1, 1, 2, seed=3)
        assert acc.n == 4
        A = to_dense(f)
        assert np.linalg.matrix_rank(A[:2, 2:]) == 1
        assert np.linalg.matrix_rank(A[2:, :2]) == 1

    @pytest.mark.parametrize("symmetric", [True, False])
    @pytest.mark.parametrize("seed", range(5))
    def test_matvec_matches_ground_truth(self, seed, symmetric, rng):
        acc, f = synthetic_hss_accessor(3, 3, 8, seed, symmetric=symmetric)
        A = to_dense(f)
        x = rng.standard_normal(acc.n)
        assert np.linalg.norm(acc.matvec(x) - A @ x) <= 1e-12 * np.linalg.norm(A) * np.linalg.norm(x)
        assert np.linalg.norm(acc.rmatvec(x) - A.T @ x) <= 1e-12 * np.linalg.norm(A) * np.linalg.norm(x)

    def test_entries_match_dense_everywhere(self):
        acc, f = synthetic_hss_accessor(2, 3, 8, seed=9, symmetric=False)
        A = to_dense(f)
        assert acc.n == 64
        np.testing.assert_allclose(acc.materialize(), A, rtol=0, atol=1e-13 * np.abs(A).max())

    def test_symmetric_scan(self):
        _, f = synthetic_hss_accessor(2, 2, 8, seed=1)
        A = to_dense(f)
        assert np.allclose(A, A.T, rtol=0, atol=1e-14 * np.abs(A).max())
        assert dense_accessor((A + A.T) / 2).symmetric

    def test_consistency(self):
        acc, f = synthetic_hss_accessor(4, 3, 16, seed=5)
        assert check_consistency(acc, 50) <= 1e-12 * np.abs(to_dense(f)).max()

    def test_leaf_too_small(self):
        with pytest.raises(InvalidInputError):
            random_hss(3, 2, 5, seed=0)
