import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rand_herm
from qtesters.errors import DimensionError, NotHermitianError, NotPsdError
from qtesters.linalg import (Operator, identity, omega, operator_from_json, operator_to_json,
                             partial_trace, partial_transpose, permute, positive_negative_parts,
                             projector, psd_pinv_sqrt, psd_sqrt, spectral_decompose, swap_operator,
                             tensor, trace_norm)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
SX = np.array([[0, 1], [1, 0]], dtype=complex)


def rand_op(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


class TestOperator:
    def test_dims_must_multiply_to_side(self):
        with pytest.raises(DimensionError):
            Operator(np.eye(4), (3, 2))

    def test_default_dims(self):
        assert Operator(np.eye(3)).dims == (3,)

    def test_immutable(self):
        m = Operator(np.eye(2))
        with pytest.raises(AttributeError):
            m.dims = (1, 2)
        with pytest.raises(ValueError):
            m.data[0, 0] = 5

    def test_arithmetic_keeps_dims(self):
        a = identity((2, 3))
        assert (a + a).dims == (2, 3)
        assert (a * 2.0).allclose(2 * np.eye(6))
        assert (a @ a).dims == (2, 3)


class TestTensor:
    def test_signature_concatenates(self):
        t = tensor(identity(2), identity((3, 2)))
        assert t.dims == (2, 3, 2)

    @given(seeds)
    def test_associative(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rand_op(rng, 2), rand_op(rng, 3), rand_op(rng, 2)
        left = tensor(tensor(a, b), c)
        right = tensor(a, tensor(b, c))
        assert np.max(np.abs(left.data - right.data)) <= 1e-12
        assert left.dims == right.dims == (2, 3, 2)


class TestPartialTrace:
    def test_product_case(self, rng):
        a, b = rand_op(rng, 2), rand_op(rng, 3)
        ab = tensor(a, b)
        assert np.allclose(partial_trace(ab, 1).data, a * np.trace(b), atol=1e-12)
        assert np.allclose(partial_trace(ab, 0).data, b * np.trace(a), atol=1e-12)

    def test_omega_marginal_is_identity(self):
        assert np.allclose(partial_trace(omega(3), 0).data, np.eye(3))

    def test_trace_everything(self, rng):
        a = rand_op(rng, 4)
        out = partial_trace(Operator(a, (2, 2)), [0, 1])
        assert out.side == 1
        assert np.isclose(out.data[0, 0], np.trace(a))

    def test_bad_index(self):
        with pytest.raises(IndexError):
            partial_trace(identity((2, 2)), 2)

    @given(seeds)
    def test_product_property(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rand_op(rng, 3), rand_op(rng, 2)
        assert np.max(np.abs(partial_trace(tensor(a, b), 1).data - a * np.trace(b))) <= 1e-12


class TestPartialTranspose:
    def test_product_case(self, rng):
        a, b = rand_op(rng, 2), rand_op(rng, 2)
        assert np.allclose(partial_transpose(tensor(a, b), 1).data, np.kron(a, b.T))

    def test_full_transpose(self, rng):
        m = Operator(rand_op(rng, 6), (2, 3))
        assert np.allclose(partial_transpose(m, [0, 1]).data, m.data.T)
        once = partial_transpose(partial_transpose(m, 0), 1)
        assert np.allclose(once.data, m.data.T)

    def test_omega_entrywise(self):
        # <i j| Omega^{T_0} |k l> = <k j| Omega |i l> = delta_kj delta_il
        pt = partial_transpose(omega(2), 0).data
        oracle = np.zeros((4, 4))
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    for l in range(2):
                        oracle[2 * i + j, 2 * k + l] = float(k == j and i == l)
        assert np.array_equal(pt.real, oracle)
        assert np.allclose(pt, swap_operator(2, 2).data)

    @given(seeds)
    def test_involution_and_full_spectrum(self, seed):
        rng = np.random.default_rng(seed)
        h = Operator(rand_herm(rng, 4), (2, 2))
        twice = partial_transpose(partial_transpose(h, 0), 0)
        assert np.allclose(twice.data, h.data)
        full = partial_transpose(h, [0, 1])
        assert np.allclose(np.sort(np.linalg.eigvalsh(full.data)), np.sort(np.linalg.eigvalsh(h.data)))


class TestPermute:
    def test_swap_factors(self, rng):
        a, b = rand_op(rng, 2), rand_op(rng, 3)
        out = permute(tensor(a, b), [1, 0])
        assert out.dims == (3, 2)
        assert np.allclose(out.data, np.kron(b, a))

    def test_rejects_non_permutation(self):
        with pytest.raises(DimensionError):
            permute(identity((2, 2)), [0, 0])


class TestSpectral:
    def test_diagonal(self):
        w, _ = spectral_decompose(np.diag([1.0, -1.0]))
        assert np.allclose(w, [1, -1])

    def test_pauli_x(self):
        w, v = spectral_decompose(SX)
        assert np.allclose(w, [1, -1])
        plus = np.array([1, 1]) / math.sqrt(2)
        minus = np.array([1, -1]) / math.sqrt(2)
        assert abs(abs(np.vdot(plus, v[:, 0])) - 1) < 1e-12
        assert abs(abs(np.vdot(minus, v[:, 1])) - 1) < 1e-12

    def test_non_hermitian(self):
        with pytest.raises(NotHermitianError):
            spectral_decompose(np.array([[0, 1], [0, 0]]))

    @given(seeds, st.integers(min_value=1, max_value=16))
    def test_reconstruction(self, seed, n):
        rng = np.random.default_rng(seed)
        h = rand_herm(rng, n)
        w, v = spectral_decompose(h)
        assert np.all(np.diff(w) <= 0)
        assert np.max(np.abs((v * w) @ v.conj().T - h)) <= 1e-9
        assert np.max(np.abs(v.conj().T @ v - np.eye(n))) <= 1e-9

    def test_degenerate_cluster_orthonormal(self, rng):
        u = np.linalg.qr(rand_op(rng, 5))[0]
        h = (u * np.array([2.0, 2.0, 2.0, -1.0, 0.0])) @ u.conj().T
        w, v = spectral_decompose(h)
        assert np.allclose(w, [2, 2, 2, 0, -1])
        assert np.allclose(v.conj().T @ v, np.eye(5), atol=1e-10)

    def test_deterministic(self, rng):
        h = rand_herm(rng, 8)
        w1, v1 = spectral_decompose(h)
        w2, v2 = spectral_decompose(h.copy())
        assert np.array_equal(w1, w2) and np.array_equal(v1, v2)


class TestSqrt:
    def test_identity(self):
        assert np.allclose(psd_sqrt(np.eye(3)).data, np.eye(3))

    def test_rank_one_projector(self):
        assert np.allclose(psd_pinv_sqrt(np.diag([1.0, 0.0])).data, np.diag([1.0, 0.0]))

    def test_analytic(self):
        assert np.allclose(psd_pinv_sqrt(np.diag([4.0, 0.0])).data, np.diag([0.5, 0.0]))

    def test_negative_rejected(self):
        with pytest.raises(NotPsdError) as info:
            psd_sqrt(np.diag([1.0, -0.1]))
        assert info.value.min_eig == pytest.approx(-0.1)

    @given(seeds)
    def test_square_and_support(self, seed):
        rng = np.random.default_rng(seed)
        g = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
        m = g @ g.conj().T
        s = psd_sqrt(m).data
        assert np.max(np.abs(s @ s - m)) <= 1e-9
        p = psd_pinv_sqrt(m).data
        proj = p @ m @ p
        assert np.max(np.abs(proj @ proj - proj)) <= 1e-8
        assert abs(np.trace(proj).real - 2) <= 1e-8


class TestTraceNorm:
    def test_diag(self):
        assert trace_norm(np.diag([0.5, -0.5])) == pytest.approx(1.0)

    def test_orthogonal_pure_states(self):
        assert trace_norm(projector([1, 0]) - projector([0, 1])) == pytest.approx(2.0, abs=1e-12)

    @given(seeds)
    def test_matches_spectrum(self, seed):
        rng = np.random.default_rng(seed)
        h = rand_herm(rng, 4)
        h -= np.trace(h) / 4 * np.eye(4)
        assert trace_norm(h) == pytest.approx(np.sum(np.abs(spectral_decompose(h)[0])), abs=1e-12)

    @given(seeds)
    def test_norm_axioms(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rand_herm(rng, 3), rand_herm(rng, 3)
        assert trace_norm(a) >= 0
        assert trace_norm(a + b) <= trace_norm(a) + trace_norm(b) + 1e-12
        assert trace_norm(np.zeros((3, 3))) == 0.0

    def test_jordan_parts(self, rng):
        h = rand_herm(rng, 4)
        plus, minus = positive_negative_parts(h)
        assert np.allclose((plus - minus).data, h)
        assert np.allclose(plus.data @ minus.data, 0, atol=1e-10)


class TestSwap:
    def test_qubit_matrix(self):
        s = swap_operator(2, 2).data
        expected = np.zeros((4, 4))
        for i, j in [(0, 0), (1, 2), (2, 1), (3, 3)]:
            expected[i, j] = 1
        assert np.array_equal(s.real, expected)

    def test_involution(self):
        s = swap_operator(3, 3).data
        assert np.allclose(s @ s, np.eye(9))

    def test_swaps_products(self, rng):
        a, b = rand_op(rng, 3), rand_op(rng, 3)
        s = swap_operator(3, 3).data
        assert np.allclose(s @ np.kron(a, b) @ s, np.kron(b, a))

    def test_unequal(self):
        with pytest.raises(DimensionError):
            swap_operator(2, 3)


class TestJson:
    @given(seeds)
    def test_bit_exact_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        m = Operator(rand_op(rng, 4) / 3.0, (2, 2))
        text = json.dumps(operator_to_json(m))
        back = operator_from_json(json.loads(text))
        assert back.dims == (2, 2)
        assert np.array_equal(back.data, m.data)

    def test_wrong_entry_count(self):
        with pytest.raises(DimensionError):
            operator_from_json({"dims": [2], "entries": [[1, 0]]})
