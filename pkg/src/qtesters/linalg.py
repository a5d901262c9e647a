"""Dense complex linear algebra over tensor-factored Hilbert spaces.

Operators carry a dimension signature ``dims`` listing the tensor factors in
storage order. Operators on H1 (x) H0 store the output factor first, so a
tester element has ``dims == (d1, d0)``. All transposes are taken in the
computational basis.
"""

import math
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from qtesters import kernels
from qtesters.errors import DimensionError, NotHermitianError, NotPsdError

HERM_TOL = 1e-10
PSD_TOL = 1e-9
SUPPORT_TOL = 1e-9
CLUSTER_GAP = 1e-8

Dims = Tuple[int, ...]


def _check_dims(dims, side) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) == 0:
        raise DimensionError("signature must have at least one factor")
    if any(d < 1 for d in dims):
        raise DimensionError(f"subsystem dimensions must be >= 1, got {dims}")
    if math.prod(dims) != side:
        raise DimensionError(f"signature {dims} does not match matrix side {side}")
    return dims


class Operator:
    """Immutable dense square complex matrix with a tensor signature."""

    __slots__ = ("data", "dims")
    __array_ufunc__ = None

    def __init__(self, data, dims: Optional[Iterable[int]] = None):
        arr = np.array(data, dtype=np.complex128)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"operator must be a square matrix, got shape {arr.shape}")
        if dims is None:
            dims = (arr.shape[0],)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "dims", _check_dims(dims, arr.shape[0]))

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    # numpy interop
    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    @property
    def side(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Operator(dims={list(self.dims)}, data=\n{np.array2string(self.data, precision=6)})"

    def _coerce(self, other):
        if isinstance(other, Operator):
            if other.dims != self.dims:
                raise DimensionError(f"signature mismatch {self.dims} vs {other.dims}")
            return other.data
        arr = np.asarray(other)
        if arr.shape != self.data.shape:
            raise DimensionError(f"shape mismatch {self.data.shape} vs {arr.shape}")
        return arr

    def __add__(self, other):
        return Operator(self.data + self._coerce(other), self.dims)

    __radd__ = __add__

    def __sub__(self, other):
        return Operator(self.data - self._coerce(other), self.dims)

    def __rsub__(self, other):
        return Operator(self._coerce(other) - self.data, self.dims)

    def __neg__(self):
        return Operator(-self.data, self.dims)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Operator(self.data * scalar, self.dims)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return Operator(self.data / scalar, self.dims)

    def __matmul__(self, other):
        return Operator(self.data @ self._coerce(other), self.dims)

    def __rmatmul__(self, other):
        return Operator(self._coerce(other) @ self.data, self.dims)

    def dag(self) -> "Operator":
        return Operator(self.data.conj().T, self.dims)

    def tr(self) -> complex:
        return complex(np.trace(self.data))

    def hermitian_deviation(self) -> float:
        return float(np.max(np.abs(self.data - self.data.conj().T)))

    def is_hermitian(self, herm_tol: float = HERM_TOL) -> bool:
        return self.hermitian_deviation() <= herm_tol

    def min_eig(self) -> float:
        return float(spectral_decompose(self, herm_tol=np.inf)[0][-1])

    def is_psd(self, psd_tol: float = PSD_TOL, herm_tol: float = HERM_TOL) -> bool:
        return self.is_hermitian(herm_tol) and self.min_eig() >= -psd_tol

    def allclose(self, other, atol: float = 1e-9) -> bool:
        other_data = other.data if isinstance(other, Operator) else np.asarray(other)
        if other_data.shape != self.data.shape:
            return False
        return bool(np.max(np.abs(self.data - other_data), initial=0.0) <= atol)

    def with_dims(self, dims) -> "Operator":
        return Operator(self.data, dims)


OperatorLike = Union[Operator, np.ndarray]


def as_operator(m, dims=None) -> Operator:
    if isinstance(m, Operator):
        if dims is not None and tuple(dims) != m.dims:
            return m.with_dims(dims)
        return m
    return Operator(m, dims)


def _data(m) -> np.ndarray:
    return m.data if isinstance(m, Operator) else np.asarray(m, dtype=np.complex128)


def identity(dims) -> Operator:
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),)
    dims = tuple(dims)
    return Operator(np.eye(math.prod(dims)), dims)


def ket(amplitudes) -> np.ndarray:
    """Column-free state vector as a 1-d complex array."""
    return np.asarray(amplitudes, dtype=np.complex128).reshape(-1)


def projector(vec, normalize: bool = True) -> Operator:
    v = ket(vec)
    if normalize:
        v = v / np.linalg.norm(v)
    return Operator(np.outer(v, v.conj()))


def omega(d: int) -> Operator:
    """Unnormalized maximally entangled projector |Omega><Omega| on d (x) d."""
    v = np.eye(d, dtype=np.complex128).reshape(-1)
    return Operator(np.outer(v, v), (d, d))


def tensor(*ops) -> Operator:
    """Kronecker product; the signature is the concatenation of the inputs'."""
    if not ops:
        raise DimensionError("tensor needs at least one operator")
    ops = [as_operator(o) for o in ops]
    out = ops[0].data
    dims = list(ops[0].dims)
    for o in ops[1:]:
        out = np.kron(out, o.data)
        dims.extend(o.dims)
    return Operator(out, dims)


def _factor_indices(m: Operator, index) -> list:
    n = len(m.dims)
    idx = [index] if isinstance(index, (int, np.integer)) else list(index)
    for i in idx:
        if not (0 <= int(i) < n):
            raise IndexError(f"factor index {i} out of range for signature {m.dims}")
    if len(set(idx)) != len(idx):
        raise IndexError(f"repeated factor index in {idx}")
    return [int(i) for i in idx]


def partial_trace(m: OperatorLike, factor_index, dims=None) -> Operator:
    """Trace out one factor (or a sequence of factors) of ``m``.

    Tracing out every factor returns a 1x1 operator.
    """
    m = as_operator(m, dims)
    idx = sorted(_factor_indices(m, factor_index), reverse=True)
    dims = list(m.dims)
    t = m.data.reshape(dims + dims)
    for i in idx:
        n = len(dims)
        t = np.trace(t, axis1=i, axis2=i + n)
        del dims[i]
    if not dims:
        return Operator(np.array([[complex(t)]]), (1,))
    side = math.prod(dims)
    return Operator(t.reshape(side, side), dims)


def partial_transpose(m: OperatorLike, factor_index, dims=None) -> Operator:
    """Transpose the selected factor(s) in the computational basis."""
    m = as_operator(m, dims)
    idx = _factor_indices(m, factor_index)
    dims = list(m.dims)
    n = len(dims)
    perm = list(range(2 * n))
    for i in idx:
        perm[i], perm[i + n] = perm[i + n], perm[i]
    t = m.data.reshape(dims + dims).transpose(perm)
    return Operator(t.reshape(m.side, m.side), dims)


def permute(m: OperatorLike, order: Sequence[int], dims=None) -> Operator:
    """Reorder tensor factors: new factor k is old factor ``order[k]``."""
    m = as_operator(m, dims)
    n = len(m.dims)
    order = [int(o) for o in order]
    if sorted(order) != list(range(n)):
        raise DimensionError(f"{order} is not a permutation of {n} factors")
    t = m.data.reshape(list(m.dims) * 2).transpose(order + [o + n for o in order])
    new_dims = [m.dims[o] for o in order]
    return Operator(t.reshape(m.side, m.side), new_dims)


def swap_operator(d_a: int, d_b: int) -> Operator:
    """SWAP|i>|j> = |j>|i> on C^d (x) C^d."""
    if d_a != d_b:
        raise DimensionError(f"swap_operator needs equal dimensions, got {d_a} and {d_b}")
    d = int(d_a)
    s = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            s[j * d + i, i * d + j] = 1.0
    return Operator(s, (d, d))


def _check_hermitian(a: np.ndarray, herm_tol: float):
    dev = float(np.max(np.abs(a - a.conj().T), initial=0.0))
    if dev > herm_tol:
        raise NotHermitianError(f"matrix is not Hermitian (max deviation {dev:.3e})", dev)


def spectral_decompose(m: OperatorLike, herm_tol: float = HERM_TOL) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix.

    Returns eigenvalues in descending order and a unitary whose columns are
    the eigenvectors. Vectors inside a cluster of eigenvalues closer than
    ``CLUSTER_GAP`` are re-orthonormalized in index order, and each vector is
    phased so that its first largest-modulus component is real and positive.
    """
    a = _data(m)
    _check_hermitian(a, herm_tol)
    a = 0.5 * (a + a.conj().T)
    w, v, _ = kernels.jacobi_eigh(np.ascontiguousarray(a))
    order = np.argsort(-w, kind="stable")
    w = w[order]
    v = v[:, order]

    n = len(w)
    start = 0
    while start < n:
        end = start + 1
        while end < n and w[end - 1] - w[end] < CLUSTER_GAP:
            end += 1
        if end - start > 1:
            for j in range(start, end):
                col = v[:, j]
                for i in range(start, j):
                    col = col - np.vdot(v[:, i], col) * v[:, i]
                v[:, j] = col / np.linalg.norm(col)
        start = end

    for j in range(n):
        mags = np.abs(v[:, j])
        k = int(np.argmax(mags >= mags.max() - 1e-9))
        v[:, j] *= abs(v[k, j]) / v[k, j]
    return w, v


def eigenvalues(m: OperatorLike, herm_tol: float = HERM_TOL) -> np.ndarray:
    return spectral_decompose(m, herm_tol)[0]


def min_eigh(m: OperatorLike, herm_tol: float = HERM_TOL) -> Tuple[float, np.ndarray]:
    """Smallest eigenvalue and a unit eigenvector for it."""
    w, v = spectral_decompose(m, herm_tol)
    return float(w[-1]), v[:, -1]


def require_psd(m: OperatorLike, psd_tol: float = PSD_TOL, herm_tol: float = HERM_TOL, what="operator"):
    """Raise NotPsdError (with witness vector) unless ``m`` is PSD."""
    lo, vec = min_eigh(m, herm_tol)
    if lo < -psd_tol:
        raise NotPsdError(f"{what} has eigenvalue {lo:.3e} < -{psd_tol:g}", lo, vec)
    return lo


def _rebuild(w, v, dims) -> Operator:
    return Operator((v * w) @ v.conj().T, dims)


def psd_sqrt(m: OperatorLike, psd_tol: float = PSD_TOL, herm_tol: float = HERM_TOL) -> Operator:
    m = as_operator(m)
    w, v = spectral_decompose(m, herm_tol)
    if w[-1] < -psd_tol:
        raise NotPsdError(f"psd_sqrt: eigenvalue {w[-1]:.3e} < -{psd_tol:g}", w[-1], v[:, -1])
    return _rebuild(np.sqrt(np.clip(w, 0.0, None)), v, m.dims)


def psd_pinv_sqrt(m: OperatorLike, psd_tol: float = PSD_TOL, support_tol: float = SUPPORT_TOL,
                  herm_tol: float = HERM_TOL) -> Operator:
    """Inverse square root on the support; eigenvalues <= support_tol map to 0."""
    m = as_operator(m)
    w, v = spectral_decompose(m, herm_tol)
    if w[-1] < -psd_tol:
        raise NotPsdError(f"psd_pinv_sqrt: eigenvalue {w[-1]:.3e} < -{psd_tol:g}", w[-1], v[:, -1])
    inv = np.zeros_like(w)
    keep = w > support_tol
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return _rebuild(inv, v, m.dims)


def psd_pinv(m: OperatorLike, psd_tol: float = PSD_TOL, support_tol: float = SUPPORT_TOL) -> Operator:
    m = as_operator(m)
    w, v = spectral_decompose(m)
    if w[-1] < -psd_tol:
        raise NotPsdError(f"psd_pinv: eigenvalue {w[-1]:.3e} < -{psd_tol:g}", w[-1], v[:, -1])
    inv = np.zeros_like(w)
    keep = w > support_tol
    inv[keep] = 1.0 / w[keep]
    return _rebuild(inv, v, m.dims)


def support_isometry(m: OperatorLike, support_tol: float = SUPPORT_TOL) -> np.ndarray:
    """Columns spanning the eigenspace with eigenvalues above support_tol.

    A full-rank operator gets the identity, so no basis change is introduced.
    """
    w, v = spectral_decompose(m)
    keep = w > support_tol
    if keep.all():
        return np.eye(len(w), dtype=np.complex128)
    return v[:, keep]


def trace_norm(m: OperatorLike, herm_tol: float = HERM_TOL) -> float:
    """Sum of absolute eigenvalues of a Hermitian operator."""
    return float(np.sum(np.abs(spectral_decompose(m, herm_tol)[0])))


def positive_negative_parts(m: OperatorLike, herm_tol: float = HERM_TOL) -> Tuple[Operator, Operator]:
    """Jordan decomposition M = M+ - M- with orthogonal supports."""
    m = as_operator(m)
    w, v = spectral_decompose(m, herm_tol)
    return _rebuild(np.clip(w, 0.0, None), v, m.dims), _rebuild(np.clip(-w, 0.0, None), v, m.dims)


def operator_to_json(m: OperatorLike) -> dict:
    """JSON-ready dict; floats keep their shortest round-trip repr."""
    m = as_operator(m)
    flat = m.data.reshape(-1)
    return {
        "dims": list(m.dims),
        "entries": [[float(z.real), float(z.imag)] for z in flat],
    }


def operator_from_json(obj: dict) -> Operator:
    try:
        dims = [int(d) for d in obj["dims"]]
        entries = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise DimensionError(f"malformed operator JSON: {exc}") from exc
    side = math.prod(dims) if dims else 0
    if len(entries) != side * side:
        raise DimensionError(f"operator JSON has {len(entries)} entries, expected {side * side}")
    arr = np.empty(side * side, dtype=np.complex128)
    for i, pair in enumerate(entries):
        if len(pair) != 2:
            raise DimensionError(f"entry {i} is not a [re, im] pair")
        re, im = float(pair[0]), float(pair[1])
        if not (math.isfinite(re) and math.isfinite(im)):
            raise DimensionError(f"entry {i} is not finite")
        arr[i] = complex(re, im)
    return Operator(arr.reshape(side, side), dims)
