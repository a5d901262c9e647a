import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rand_herm
from qtesters import kernels

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def check_decomposition(h, w, v, tol=1e-9):
    n = h.shape[0]
    assert np.max(np.abs((v * w) @ v.conj().T - h)) <= tol
    assert np.max(np.abs(v.conj().T @ v - np.eye(n))) <= tol


@given(seeds, st.integers(min_value=1, max_value=16))
def test_python_kernel(seed, n):
    h = rand_herm(np.random.default_rng(seed), n)
    w, v, _ = kernels.jacobi_eigh_py(h)
    check_decomposition(h, w, v)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(h), atol=1e-9)


@pytest.mark.skipif(kernels.jacobi_eigh_ext is None, reason="compiled kernel not built")
@given(seeds, st.integers(min_value=1, max_value=16))
def test_compiled_matches_python(seed, n):
    h = rand_herm(np.random.default_rng(seed), n)
    w1, v1, s1 = kernels.jacobi_eigh_ext(h)
    w2, v2, s2 = kernels.jacobi_eigh_py(h)
    check_decomposition(h, w1, v1)
    assert s1 == s2
    assert np.allclose(w1, w2, atol=1e-12)
    assert np.allclose(v1, v2, atol=1e-10)


def test_real_and_diagonal_inputs():
    d = np.diag([3.0, -1.0, 2.0])
    w, v, sweeps = kernels.jacobi_eigh(d)
    assert sweeps == 0
    assert np.array_equal(w, [3.0, -1.0, 2.0])
    h = np.array([[2.0, 1.0], [1.0, 2.0]])
    w, v, _ = kernels.jacobi_eigh(h)
    assert np.allclose(np.sort(w), [1.0, 3.0])


def test_input_not_modified():
    h = rand_herm(np.random.default_rng(1), 6)
    copy = h.copy()
    kernels.jacobi_eigh(h)
    assert np.array_equal(h, copy)


def test_pure_python_switch():
    env = dict(os.environ, QTESTERS_PURE_PYTHON="1")
    code = ("import numpy as np, qtesters\n"
            "from qtesters.linalg import trace_norm\n"
            "print(qtesters.BACKEND, round(trace_norm(np.diag([0.5, -0.5])), 12))")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.split() == ["python", "1.0"]
