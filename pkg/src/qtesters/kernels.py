"""Backend selection for the Hermitian eigensolver kernel.

The compiled Cython kernel is used when it was built; otherwise the numpy
fallback is used. Set ``QTESTERS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from qtesters import _jacobi_py

jacobi_eigh_py = _jacobi_py.jacobi_eigh

try:
    if os.environ.get("QTESTERS_PURE_PYTHON"):
        raise ImportError("pure Python requested")
    from qtesters._jacobi_ext import jacobi_eigh as jacobi_eigh_ext
except ImportError:
    jacobi_eigh_ext = None

if jacobi_eigh_ext is not None:
    BACKEND = "compiled"
    jacobi_eigh = jacobi_eigh_ext
else:
    BACKEND = "python"
    jacobi_eigh = jacobi_eigh_py

__all__ = ["BACKEND", "jacobi_eigh", "jacobi_eigh_ext", "jacobi_eigh_py"]
