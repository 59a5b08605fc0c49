"""Dense kernels against loop-level oracles and bitwise identities."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpsclassify import tensor
from mpsclassify.errors import DimensionError


def matmul_loops(a, b):
    """Triple-loop reference product, ascending inner index."""
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_hand_computed_2x2(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(
            tensor.matmul(a, b), [[19.0, 22.0], [43.0, 50.0]]
        )

    def test_identity_left(self, rng):
        m = rng.standard_normal((2, 5))
        np.testing.assert_array_equal(tensor.matmul(np.eye(2), m), m)

    def test_matches_loop_oracle(self, rng):
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((4, 5))
        np.testing.assert_allclose(tensor.matmul(a, b), matmul_loops(a, b), rtol=1e-13)

    def test_associativity(self, rng):
        """(AB)C and A(BC) agree to 1e-10 of the norm product."""
        for _ in range(20):
            a = rng.standard_normal((7, 16))
            b = rng.standard_normal((16, 9))
            c = rng.standard_normal((9, 12))
            left = tensor.matmul(tensor.matmul(a, b), c)
            right = tensor.matmul(a, tensor.matmul(b, c))
            bound = 1e-10 * np.abs(a).max() * np.abs(b).max() * np.abs(c).max()
            assert np.abs(left - right).max() <= bound

    def test_inner_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            tensor.matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_rank_mismatch(self):
        with pytest.raises(DimensionError):
            tensor.matmul(np.zeros(3), np.zeros((3, 2)))


class TestBatchedMatmul:
    def test_per_slice_oracle(self, rng):
        a = rng.standard_normal((4, 3, 5))
        b = rng.standard_normal((4, 5, 2))
        out = tensor.batched_matmul(a, b)
        for s in range(4):
            np.testing.assert_allclose(out[s], matmul_loops(a[s], b[s]), rtol=1e-13)

    def test_single_slice_reduces_to_matmul(self, rng):
        a = rng.standard_normal((1, 4, 4))
        b = rng.standard_normal((1, 4, 4))
        np.testing.assert_array_equal(
            tensor.batched_matmul(a, b)[0], tensor.matmul(a[0], b[0])
        )

    def test_identity_slice_passthrough(self, rng):
        a = rng.standard_normal((2, 3, 3))
        b = np.stack([rng.standard_normal((3, 3)), np.eye(3)])
        out = tensor.batched_matmul(a, b)
        np.testing.assert_array_equal(out[1], a[1])

    def test_thread_count_does_not_change_bits(self, rng):
        a = rng.standard_normal((37, 8, 8))
        b = rng.standard_normal((37, 8, 8))
        base = tensor.batched_matmul(a, b, threads=1)
        for threads in (2, 3, 4, 8):
            np.testing.assert_array_equal(
                tensor.batched_matmul(a, b, threads=threads), base
            )

    def test_default_thread_setting(self):
        old = tensor.get_num_threads()
        try:
            tensor.set_num_threads(3)
            assert tensor.get_num_threads() == 3
            with pytest.raises(ValueError):
                tensor.set_num_threads(0)
        finally:
            tensor.set_num_threads(old)

    def test_batch_mismatch(self):
        with pytest.raises(DimensionError, match="batch"):
            tensor.batched_matmul(np.zeros((2, 3, 4)), np.zeros((3, 4, 5)))

    def test_inner_mismatch(self):
        with pytest.raises(DimensionError, match="inner"):
            tensor.batched_matmul(np.zeros((2, 3, 4)), np.zeros((2, 3, 5)))


class TestContractLastFirst:
    def test_vector_dot(self):
        out = tensor.contract_last_first(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
        assert out.shape == ()
        assert out == 11.0

    def test_rank2_bitwise_matmul(self, rng):
        a = rng.standard_normal((6, 4))
        b = rng.standard_normal((4, 7))
        np.testing.assert_array_equal(
            tensor.contract_last_first(a, b), tensor.matmul(a, b)
        )

    def test_rank3_against_nested_loops(self, rng):
        a = rng.standard_normal((2, 3, 4))
        b = rng.standard_normal((4, 2, 5))
        out = tensor.contract_last_first(a, b)
        assert out.shape == (2, 3, 2, 5)
        want = np.zeros((2, 3, 2, 5))
        for i in range(2):
            for j in range(3):
                for k in range(2):
                    for l in range(5):
                        for t in range(4):
                            want[i, j, k, l] += a[i, j, t] * b[t, k, l]
        np.testing.assert_allclose(out, want, rtol=1e-13)

    def test_extent_mismatch(self):
        with pytest.raises(DimensionError):
            tensor.contract_last_first(np.zeros((2, 3)), np.zeros((4, 2)))


@settings(deadline=None, max_examples=30)
@given(
    m=st.integers(1, 6),
    k=st.integers(1, 6),
    n=st.integers(1, 6),
    seed=st.integers(0, 2**31),
)
def test_matmul_oracle_property(m, k, n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, k))
    b = rng.standard_normal((k, n))
    np.testing.assert_allclose(tensor.matmul(a, b), matmul_loops(a, b), rtol=1e-12, atol=1e-14)
