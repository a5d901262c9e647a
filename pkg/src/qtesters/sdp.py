"""Small dense semidefinite programming engine.

Modeling
--------
An :class:`SdpProblem` holds PSD block variables (real symmetric or complex
Hermitian), free real scalars, affine matrix constraints of the form
``expr >= 0`` (PSD) or ``expr == 0``, and a linear objective to maximize.
Expressions are affine in the variables and support sums, scalar products,
products with constant matrices, Kronecker products with constants, partial
traces and traces.

Solving
-------
Complex constraints are embedded as real symmetric matrices
``[[Re M, -Im M], [Im M, Re M]]``. Equality constraints are eliminated with
an SVD null-space parametrization, and the resulting inequality-only conic
program

    minimize c^T x  subject to  G x + s = h,  s in K

is solved by a primal-dual interior-point method on the homogeneous
self-dual embedding, using Nesterov-Todd scaling and a Mehrotra
predictor-corrector step. Infeasibility is certified through the
embedding rather than guessed.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from qtesters.errors import NotHermitianError, SdpFailure

FEAS_TOL = 1e-7
GAP_TOL = 1e-7
MAX_ITERS = 200
STEP_FRACTION = 0.98
_INNER_TOL = 1e-10


# ------------------------------------------------------------------ helpers

def embed_complex(h, herm_tol: float = 1e-10) -> np.ndarray:
    """Real symmetric embedding [[Re M, -Im M], [Im M, Re M]] of Hermitian M."""
    m = np.asarray(h.data if hasattr(h, "data") and not isinstance(h, np.ndarray) else h,
                   dtype=np.complex128)
    dev = float(np.max(np.abs(m - m.conj().T), initial=0.0))
    if dev > herm_tol:
        raise NotHermitianError(f"embed_complex needs a Hermitian matrix (deviation {dev:.3e})", dev)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def _embed_stack(c: np.ndarray) -> np.ndarray:
    re, im = c.real, c.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def _triu(m):
    iu = np.triu_indices(m)
    scale = np.where(iu[0] == iu[1], 1.0, math.sqrt(2.0))
    return iu, scale


def _svec_stack(stack: np.ndarray) -> np.ndarray:
    m = stack.shape[-1]
    iu, scale = _triu(m)
    return stack[..., iu[0], iu[1]] * scale


def _unsvec(v: np.ndarray, m: int) -> np.ndarray:
    iu, scale = _triu(m)
    out = np.zeros((m, m))
    out[iu] = v / scale
    return out + np.triu(out, 1).T


# --------------------------------------------------------------- modeling

@dataclass(frozen=True)
class _Var:
    index: int
    name: str
    kind: str          # "block" or "scalar"
    side: int
    field: str         # "real" or "complex"
    offset: int
    basis: np.ndarray  # (p, side, side)

    @property
    def size(self) -> int:
        return self.basis.shape[0]


def _hermitian_basis(n: int, field: str) -> np.ndarray:
    mats = []
    for i in range(n):
        e = np.zeros((n, n), dtype=np.complex128)
        e[i, i] = 1.0
        mats.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n), dtype=np.complex128)
            e[i, j] = e[j, i] = 1.0
            mats.append(e)
            if field == "complex":
                e = np.zeros((n, n), dtype=np.complex128)
                e[i, j] = 1j
                e[j, i] = -1j
                mats.append(e)
    return np.array(mats)


def _const_array(x) -> np.ndarray:
    if hasattr(x, "data") and not isinstance(x, np.ndarray):
        x = x.data
    a = np.asarray(x, dtype=np.complex128)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    return a


class Expr:
    """Affine matrix expression ``const + sum_v sum_a x_{v,a} coeff[v][a]``."""

    __slots__ = ("const", "terms")
    __array_ufunc__ = None

    def __init__(self, const, terms=None):
        self.const = _const_array(const)
        self.terms: Dict[int, np.ndarray] = dict(terms or {})

    @property
    def shape(self):
        return self.const.shape

    @staticmethod
    def wrap(x) -> "Expr":
        return x if isinstance(x, Expr) else Expr(x)

    def _combine(self, other, sign):
        other = Expr.wrap(other)
        if other.shape != self.shape:
            if self.shape == (1, 1) or other.shape == (1, 1):
                raise ValueError(f"shape mismatch {self.shape} vs {other.shape} (scalar broadcast "
                                 "is not implicit; multiply by a matrix instead)")
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + sign * v if k in terms else sign * v
        return Expr(self.const + sign * other.const, terms)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        return Expr.wrap(other)._combine(self, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return Expr.wrap(other)._combine(self, -1.0)

    def __neg__(self):
        return Expr(-self.const, {k: -v for k, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, Expr):
            if not other.terms:
                other = other.const
            elif not self.terms:
                return other * self.const
            else:
                raise ValueError("product of two non-constant expressions is not affine")
        if np.isscalar(other):
            return Expr(self.const * other, {k: v * other for k, v in self.terms.items()})
        mat = _const_array(other)
        if self.shape == (1, 1):
            return Expr(self.const[0, 0] * mat,
                        {k: v[:, 0, 0][:, None, None] * mat[None] for k, v in self.terms.items()})
        if mat.shape == (1, 1):
            return self * complex(mat[0, 0])
        raise ValueError("elementwise products are not supported; use @ for matrix products")

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if isinstance(other, Expr):
            if other.terms:
                raise ValueError("product of two non-constant expressions is not affine")
            other = other.const
        b = _const_array(other)
        return Expr(self.const @ b, {k: v @ b for k, v in self.terms.items()})

    def __rmatmul__(self, other):
        a = _const_array(other)
        return Expr(a @ self.const, {k: a @ v for k, v in self.terms.items()})

    def map(self, f) -> "Expr":
        """Apply a linear map given as a function on (..., m, k) stacks."""
        return Expr(f(self.const[None])[0], {k: f(v) for k, v in self.terms.items()})

    @property
    def T(self):
        return self.map(lambda s: np.swapaxes(s, -1, -2))

    def conj_transpose(self):
        return self.map(lambda s: np.conj(np.swapaxes(s, -1, -2)))


def as_expr(x) -> Expr:
    return Expr.wrap(x)


def kron(a, b) -> Expr:
    """Kronecker product where at most one factor is a variable expression."""
    if isinstance(a, Expr) and a.terms and isinstance(b, Expr) and b.terms:
        raise ValueError("kron of two non-constant expressions is not affine")
    if isinstance(a, Expr) and a.terms:
        bm = _const_array(b.const if isinstance(b, Expr) else b)

        def f(s):
            p, m, k = s.shape
            return np.einsum("pab,ij->paibj", s, bm).reshape(p, m * bm.shape[0], k * bm.shape[1])
        return a.map(f)
    am = _const_array(a.const if isinstance(a, Expr) else a)
    bexpr = Expr.wrap(b)

    def g(s):
        p, m, k = s.shape
        return np.einsum("ij,pab->piajb", am, s).reshape(p, am.shape[0] * m, am.shape[1] * k)
    return bexpr.map(g)


def partial_trace(e, dims, index) -> Expr:
    """Partial trace of a square expression over factor ``index`` of ``dims``."""
    dims = [int(d) for d in dims]
    e = Expr.wrap(e)
    n = len(dims)
    rest = [d for i, d in enumerate(dims) if i != index]
    side = int(np.prod(rest)) if rest else 1

    def f(s):
        p = s.shape[0]
        t = s.reshape([p] + dims + dims)
        t = np.trace(t, axis1=1 + index, axis2=1 + n + index)
        return t.reshape(p, side, side)
    return e.map(f)


def trace(e) -> Expr:
    e = Expr.wrap(e)
    return e.map(lambda s: np.trace(s, axis1=-2, axis2=-1)[:, None, None])


@dataclass
class _Constraint:
    kind: str  # "psd" or "zero"
    expr: Expr
    name: str


class SdpProblem:
    """Container for variables, constraints and objective (maximized)."""

    def __init__(self, name: str = "sdp"):
        self.name = name
        self.vars: List[_Var] = []
        self.constraints: List[_Constraint] = []
        self.objective: Expr = Expr(0.0)
        self._nparams = 0

    def _add_var(self, name, kind, side, field):
        if field not in ("real", "complex"):
            raise ValueError(f"unknown field {field!r}")
        if any(v.name == name for v in self.vars):
            raise ValueError(f"duplicate variable name {name!r}")
        basis = _hermitian_basis(side, field) if kind == "block" else np.ones((1, 1, 1), dtype=np.complex128)
        var = _Var(len(self.vars), name, kind, side, field, self._nparams, basis)
        self.vars.append(var)
        self._nparams += var.size
        return var

    def block(self, name: str, side: int, field: str = "complex") -> Expr:
        """New PSD block variable (the PSD constraint is added automatically)."""
        var = self._add_var(name, "block", int(side), field)
        e = Expr(np.zeros((side, side)), {var.index: var.basis.copy()})
        self.constraints.append(_Constraint("psd", e, f"{name} >= 0"))
        return e

    def scalar(self, name: str) -> Expr:
        var = self._add_var(name, "scalar", 1, "real")
        return Expr(np.zeros((1, 1)), {var.index: var.basis.copy()})

    def add_psd(self, expr, name: Optional[str] = None):
        expr = Expr.wrap(expr)
        m, k = expr.shape
        if m != k:
            raise ValueError(f"PSD constraint needs a square expression, got {expr.shape}")
        parts = [expr.const] + list(expr.terms.values())
        for part in parts:
            dev = float(np.max(np.abs(part - np.conj(np.swapaxes(part, -1, -2))), initial=0.0))
            if dev > 1e-12:
                raise NotHermitianError(f"PSD constraint {name or len(self.constraints)} is not "
                                        f"Hermitian (deviation {dev:.3e})", dev)
        self.constraints.append(_Constraint("psd", expr, name or f"c{len(self.constraints)}"))

    def add_zero(self, expr, name: Optional[str] = None):
        self.constraints.append(_Constraint("zero", Expr.wrap(expr), name or f"c{len(self.constraints)}"))

    def maximize(self, expr):
        expr = Expr.wrap(expr)
        if expr.shape != (1, 1):
            raise ValueError("objective must be scalar")
        self.objective = expr

    # ---- compilation

    def _dense(self, expr: Expr) -> np.ndarray:
        """Coefficient stack (nparams, m, k) for an expression."""
        m, k = expr.shape
        out = np.zeros((self._nparams, m, k), dtype=np.complex128)
        for idx, coeff in expr.terms.items():
            v = self.vars[idx]
            out[v.offset:v.offset + v.size] = coeff
        return out

    def evaluate(self, expr, x: np.ndarray) -> np.ndarray:
        expr = Expr.wrap(expr)
        val = expr.const.copy()
        for idx, coeff in expr.terms.items():
            v = self.vars[idx]
            val = val + np.tensordot(x[v.offset:v.offset + v.size], coeff, axes=1)
        return val

    def to_json(self) -> dict:
        """Debug dump; not a stable interface."""
        def mat(a):
            return [[[float(z.real), float(z.imag)] for z in row] for row in a]
        return {
            "name": self.name,
            "variables": [{"name": v.name, "kind": v.kind, "side": v.side, "field": v.field}
                          for v in self.vars],
            "constraints": [{"kind": c.kind, "name": c.name, "const": mat(c.expr.const),
                             "terms": {self.vars[i].name: [mat(s) for s in coeff]
                                       for i, coeff in c.expr.terms.items()}}
                            for c in self.constraints],
            "objective": {"const": float(self.objective.const[0, 0].real),
                          "terms": {self.vars[i].name: [float(z.real) for z in coeff[:, 0, 0]]
                                    for i, coeff in self.objective.terms.items()}},
        }


@dataclass
class SdpSolution:
    status: str  # optimal | infeasible | unbounded | numerical-failure
    objective_value: float
    block_values: Dict[str, np.ndarray]
    scalar_values: Dict[str, float]
    primal_residual: float
    dual_residual: float
    duality_gap: float
    iterations: int
    x: Optional[np.ndarray] = None
    psd_margins: List[float] = field(default_factory=list)
    duals: List[np.ndarray] = field(default_factory=list)
    message: str = ""
    problem: Optional[SdpProblem] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def value(self, expr) -> np.ndarray:
        if self.x is None or self.problem is None:
            raise SdpFailure("solution has no primal point", self)
        return self.problem.evaluate(expr, self.x)

    def scalar(self, expr) -> float:
        return float(self.value(expr)[0, 0].real)


# ------------------------------------------------------------ conic core

@dataclass
class _ConeBlock:
    G: np.ndarray   # (n, m, m) real symmetric stack, s = h - G x
    h: np.ndarray   # (m, m)
    source: int     # index of the originating psd constraint
    embedded: bool  # complex constraint embedded as real


def _gx(blocks, x):
    return [np.tensordot(x, b.G, axes=1) for b in blocks]


def _gtz(blocks, zs, n):
    out = np.zeros(n)
    for b, z in zip(blocks, zs):
        out += np.einsum("iab,ab->i", b.G, z)
    return out


def _inner(a_list, b_list):
    return float(sum(np.sum(a * b) for a, b in zip(a_list, b_list)))


def _min_eig(m):
    return float(np.linalg.eigvalsh(m)[0])


def _max_step(lam, d):
    """Largest alpha with diag(lam) + alpha d PSD (inf if unrestricted)."""
    isq = 1.0 / np.sqrt(lam)
    w = np.linalg.eigvalsh(isq[:, None] * d * isq[None, :])[0]
    return math.inf if w >= 0 else -1.0 / w


def _conelp(c, blocks, max_iters, tol=_INNER_TOL):
    """Homogeneous self-dual interior point for min c^T x, Gx + s = h, s PSD."""
    n = c.shape[0]
    sides = [b.h.shape[0] for b in blocks]
    deg = sum(sides)
    gmat = np.concatenate([_svec_stack(b.G).T for b in blocks], axis=0) if n else np.zeros((0, 0))
    hvec = np.concatenate([_svec_stack(b.h) for b in blocks])
    resx0 = max(1.0, float(np.linalg.norm(c)))
    resz0 = max(1.0, float(np.linalg.norm(hvec)))

    # initial point
    if n:
        x = np.linalg.lstsq(gmat, hvec, rcond=None)[0]
        zvec = -gmat @ np.linalg.lstsq(gmat.T @ gmat, c, rcond=None)[0]
    else:
        x = np.zeros(0)
        zvec = np.zeros_like(hvec)
    svec = hvec - (gmat @ x if n else 0.0)

    def split(v):
        out, pos = [], 0
        for m in sides:
            k = m * (m + 1) // 2
            out.append(_unsvec(v[pos:pos + k], m))
            pos += k
        return out

    s_list, z_list = split(svec), split(zvec)
    for lst in (s_list, z_list):
        alpha = max(-_min_eig(m) for m in lst)
        if alpha >= -1e-8:
            for i, m in enumerate(lst):
                lst[i] = m + (1.0 + alpha) * np.eye(m.shape[0])
    tau, kappa = 1.0, 1.0

    # NT scaling from Cholesky factors
    R, Rinv, lam = [], [], []
    for s, z in zip(s_list, z_list):
        ls = np.linalg.cholesky(s)
        lz = np.linalg.cholesky(z)
        u, sv, vt = np.linalg.svd(lz.T @ ls)
        isq = 1.0 / np.sqrt(sv)
        R.append((ls @ vt.T) * isq[None, :])
        Rinv.append(isq[:, None] * (u.T @ lz.T))
        lam.append(sv)

    best = None
    status = "numerical-failure"
    it = 0
    for it in range(max_iters + 1):
        s_list = [(r * l[None, :]) @ r.T for r, l in zip(R, lam)]
        z_list = [(ri.T * l[None, :]) @ ri for ri, l in zip(Rinv, lam)]
        gx = _gx(blocks, x) if n else [np.zeros_like(b.h) for b in blocks]
        rx = _gtz(blocks, z_list, n) + c * tau
        rz = [s + g - b.h * tau for s, g, b in zip(s_list, gx, blocks)]
        hz = _inner([b.h for b in blocks], z_list)
        cx = float(c @ x)
        rt = kappa + cx + hz
        sz = float(sum(np.sum(l * l) for l in lam))
        mu = (sz + tau * kappa) / (deg + 1)

        pres = math.sqrt(sum(float(np.sum(r * r)) for r in rz)) / (tau * resz0)
        dres = float(np.linalg.norm(rx)) / (tau * resx0)
        pcost, dcost = cx / tau, -hz / tau
        gap = sz / tau ** 2
        relgap = gap / max(1.0, abs(pcost), abs(dcost))
        score = max(pres, dres, relgap)
        if best is None or score < best["score"]:
            best = dict(score=score, x=x / tau, s=[m / tau for m in s_list],
                        z=[m / tau for m in z_list], pres=pres, dres=dres, gap=gap,
                        pcost=pcost, dcost=dcost, it=it)
        if pres <= tol and dres <= tol and relgap <= tol:
            status = "optimal"
            break
        if hz < 0:
            pinf = float(np.linalg.norm(_gtz(blocks, z_list, n))) / (-hz) / resx0
            if pinf <= tol:
                status = "infeasible"
                best = dict(best, cert_z=[m / (-hz) for m in z_list], pinf=pinf)
                break
        if cx < 0 and n:
            ginf = math.sqrt(sum(float(np.sum((g + s) ** 2)) for g, s in zip(gx, s_list))) / (-cx) / resz0
            if ginf <= tol:
                status = "unbounded"
                best = dict(best, cert_x=x / (-cx), dinf=ginf)
                break
        if it == max_iters:
            break

        # scaled data
        ghat = [ri @ b.G @ ri.T for ri, b in zip(Rinv, blocks)]
        hhat = [ri @ b.h @ ri.T for ri, b in zip(Rinv, blocks)]
        rzhat = [ri @ r @ ri.T for ri, r in zip(Rinv, rz)]
        mmat = sum(np.einsum("iab,jab->ij", g, g) for g in ghat) if n else np.zeros((0, 0))
        try:
            if n:
                chol = np.linalg.cholesky(mmat)
            else:
                chol = None
        except np.linalg.LinAlgError:
            chol = None
            if n:
                mmat = mmat + 1e-14 * np.trace(mmat) / n * np.eye(n)
                try:
                    chol = np.linalg.cholesky(mmat)
                except np.linalg.LinAlgError:
                    break

        def msolve(rhs):
            y = np.linalg.solve(chol, rhs)
            return np.linalg.solve(chol.T, y)

        if n:
            x2 = msolve(sum(np.einsum("iab,ab->i", g, hh) for g, hh in zip(ghat, hhat)) - c)
            z2 = [np.tensordot(x2, g, axes=1) - hh for g, hh in zip(ghat, hhat)]
        else:
            x2 = np.zeros(0)
            z2 = [-hh for hh in hhat]
        denom = -kappa / tau + float(c @ x2) + _inner(hhat, z2)

        def direction(delta, ktau, rho):
            qhat = [rho * r + d for r, d in zip(rzhat, delta)]
            if n:
                rhs = -rho * rx - sum(np.einsum("iab,ab->i", g, q) for g, q in zip(ghat, qhat))
                x1 = msolve(rhs)
                z1 = [np.tensordot(x1, g, axes=1) + q for g, q in zip(ghat, qhat)]
            else:
                x1 = np.zeros(0)
                z1 = qhat
            dtau = (-rho * rt - ktau / tau - float(c @ x1) - _inner(hhat, z1)) / denom
            dx = x1 + dtau * x2
            dz = [a + dtau * b for a, b in zip(z1, z2)]
            ds = [d - z for d, z in zip(delta, dz)]
            dkappa = (ktau - kappa * dtau) / tau
            return dx, dz, ds, dtau, dkappa

        def step_len(dz, ds, dtau, dkappa):
            a = math.inf
            for l, zz, ss in zip(lam, dz, ds):
                a = min(a, _max_step(l, zz), _max_step(l, ss))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        try:
            # predictor
            delta = [-np.diag(l) for l in lam]
            dx, dz, ds, dtau, dkappa = direction(delta, -tau * kappa, 1.0)
            alpha_a = min(1.0, step_len(dz, ds, dtau, dkappa))
            sigma = (1.0 - alpha_a) ** 3
            # corrector
            delta = []
            for l, a, b in zip(lam, ds, dz):
                k = -np.diag(l * l) - 0.5 * (a @ b + b @ a) + sigma * mu * np.eye(len(l))
                delta.append(2.0 * k / (l[:, None] + l[None, :]))
            ktau = -tau * kappa - dtau * dkappa + sigma * mu
            dx, dz, ds, dtau, dkappa = direction(delta, ktau, 1.0 - sigma)
            alpha = min(1.0, STEP_FRACTION * step_len(dz, ds, dtau, dkappa))
        except np.linalg.LinAlgError:
            break
        if not np.isfinite(alpha) or alpha < 1e-12:
            break

        # update iterate and scaling
        x = x + alpha * dx
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        try:
            newR, newRinv, newlam = [], [], []
            for r, ri, l, d_s, d_z in zip(R, Rinv, lam, ds, dz):
                sq = np.sqrt(l)
                isq = 1.0 / sq
                ms = np.eye(len(l)) + alpha * (isq[:, None] * d_s * isq[None, :])
                mz = np.eye(len(l)) + alpha * (isq[:, None] * d_z * isq[None, :])
                l1 = sq[:, None] * np.linalg.cholesky(0.5 * (ms + ms.T))
                l2 = sq[:, None] * np.linalg.cholesky(0.5 * (mz + mz.T))
                u, sv, vt = np.linalg.svd(l2.T @ l1)
                sisq = 1.0 / np.sqrt(sv)
                newR.append((r @ l1 @ vt.T) * sisq[None, :])
                newRinv.append(sisq[:, None] * (u.T @ l2.T @ ri))
                newlam.append(sv)
        except np.linalg.LinAlgError:
            break
        if not all(np.all(l > 0) for l in newlam) or tau <= 0 or kappa <= 0:
            break
        R, Rinv, lam = newR, newRinv, newlam

    best["status"] = status
    best["iterations"] = it
    return best


# --------------------------------------------------------------- solve

def _compile(p: SdpProblem):
    n = p._nparams
    # equalities
    rows_a, rows_b = [], []
    for con in p.constraints:
        if con.kind != "zero":
            continue
        coeff = p._dense(con.expr).reshape(n, -1)
        const = con.expr.const.reshape(-1)
        for part_c, part_k in ((coeff.real, const.real), (coeff.imag, const.imag)):
            for j in range(part_c.shape[1]):
                col = part_c[:, j]
                if np.any(col) or part_k[j] != 0:
                    rows_a.append(col)
                    rows_b.append(-part_k[j])
    amat = np.array(rows_a) if rows_a else np.zeros((0, n))
    bvec = np.array(rows_b) if rows_b else np.zeros(0)

    cones = []
    for ci, con in enumerate(p.constraints):
        if con.kind != "psd":
            continue
        coeff = p._dense(con.expr)
        const = con.expr.const
        coeff = 0.5 * (coeff + np.conj(np.swapaxes(coeff, -1, -2)))
        const = 0.5 * (const + const.conj().T)
        if np.any(coeff.imag) or np.any(const.imag):
            g = -_embed_stack(coeff)
            h = embed_complex(const)
            cones.append(_ConeBlock(g, h, ci, True))
        else:
            cones.append(_ConeBlock(-coeff.real, const.real.copy(), ci, False))
    cvec = p._dense(p.objective).reshape(n).real.copy()
    cconst = float(p.objective.const[0, 0].real)
    return amat, bvec, cones, cvec, cconst


def solve(p: SdpProblem, feas_tol: float = FEAS_TOL, gap_tol: float = GAP_TOL,
          max_iters: int = MAX_ITERS, raise_on_failure: bool = False) -> SdpSolution:
    """Solve ``p`` (maximization). Deterministic for identical inputs."""
    n = p._nparams
    amat, bvec, cones, cmax, cconst = _compile(p)

    def failure(status, msg, **kw):
        sol = SdpSolution(status, math.nan, {}, {}, kw.get("pres", math.inf),
                          kw.get("dres", math.inf), kw.get("gap", math.inf), kw.get("it", 0),
                          message=msg, problem=p)
        if raise_on_failure and status == "numerical-failure":
            raise SdpFailure(msg, sol)
        return sol

    # eliminate equalities: x = x0 + N y
    if amat.shape[0]:
        u, sv, vt = np.linalg.svd(amat, full_matrices=True)
        tol = 1e-10 * max(1.0, sv[0])
        r = int(np.sum(sv > tol))
        x0 = vt[:r].T @ ((u[:, :r].T @ bvec) / sv[:r])
        eq_res = float(np.max(np.abs(amat @ x0 - bvec)))
        if eq_res > 1e-9 * (1.0 + float(np.max(np.abs(bvec)))):
            return failure("infeasible", f"equality constraints inconsistent (residual {eq_res:.3e})",
                           pres=eq_res)
        nmat = vt[r:].T
    else:
        x0 = np.zeros(n)
        nmat = np.eye(n)

    # remove directions that no cone constraint sees
    red = [_ConeBlock(np.einsum("ai,amn->imn", nmat, b.G), b.h - np.tensordot(x0, b.G, axes=1),
                      b.source, b.embedded) for b in cones]
    c_red = -(nmat.T @ cmax)
    k = nmat.shape[1]
    unbounded_dir = False
    if k:
        gmat = np.concatenate([_svec_stack(b.G).T for b in red], axis=0)
        _, sv2, vt2 = np.linalg.svd(gmat, full_matrices=True)
        tol2 = 1e-10 * max(1.0, sv2[0] if sv2.size else 0.0)
        r2 = int(np.sum(sv2 > tol2))
        wmat = vt2[:r2].T
        resid = c_red - wmat @ (wmat.T @ c_red)
        unbounded_dir = float(np.linalg.norm(resid)) > 1e-9 * (1.0 + float(np.linalg.norm(c_red)))
        red = [_ConeBlock(np.einsum("ai,amn->imn", wmat, b.G), b.h, b.source, b.embedded) for b in red]
        c_red = wmat.T @ c_red
    else:
        wmat = np.zeros((0, 0))

    if unbounded_dir:
        probe = _conelp(np.zeros_like(c_red), red, max_iters)
        if probe["status"] == "infeasible":
            return failure("infeasible", "primal infeasible", it=probe["iterations"])
        return failure("unbounded", "objective unbounded along a direction free of constraints",
                       it=probe["iterations"])

    res = _conelp(c_red, red, max_iters)
    it = res["iterations"]
    if res["status"] == "infeasible":
        sol = failure("infeasible", f"primal infeasibility certificate (residual {res['pinf']:.2e})", it=it)
        sol.duals = _map_duals(p, red, res["cert_z"])
        return sol
    if res["status"] == "unbounded":
        return failure("unbounded", f"dual infeasibility certificate (residual {res['dinf']:.2e})", it=it)

    y = res["x"]
    x = x0 + nmat @ (wmat @ y) if k else x0.copy()
    # certify on the original model
    margins = []
    worst_psd = 0.0
    worst_eq = 0.0
    for con in p.constraints:
        val = p.evaluate(con.expr, x)
        if con.kind == "psd":
            herm = 0.5 * (val + val.conj().T)
            lo = float(np.linalg.eigvalsh(herm)[0])
            margins.append(lo)
            worst_psd = max(worst_psd, -lo)
        else:
            worst_eq = max(worst_eq, float(np.max(np.abs(val), initial=0.0)))
    pres = max(worst_psd, worst_eq)
    dres = res["dres"]
    obj = float(cmax @ x) + cconst
    gap = abs(res["pcost"] - res["dcost"]) / max(1.0, abs(res["pcost"]))
    sol = SdpSolution("optimal", obj, {}, {}, pres, dres, gap, it, x=x, psd_margins=margins,
                      problem=p)
    for v in p.vars:
        val = np.tensordot(x[v.offset:v.offset + v.size], v.basis, axes=1)
        if v.kind == "scalar":
            sol.scalar_values[v.name] = float(val[0, 0].real)
        else:
            sol.block_values[v.name] = val if v.field == "complex" else val.real
    sol.duals = _map_duals(p, red, res["z"])
    if pres > feas_tol or dres > feas_tol or gap > gap_tol:
        sol.status = "numerical-failure"
        sol.message = (f"no certified optimum after {it} iterations: primal residual {pres:.2e}, "
                       f"dual residual {dres:.2e}, gap {gap:.2e}")
        if raise_on_failure:
            raise SdpFailure(sol.message, sol)
    return sol


def _map_duals(p, red, zs):
    """Dual matrices per PSD constraint of the original problem (complex if embedded)."""
    out = []
    for b, z in zip(red, zs):
        if b.embedded:
            m = z.shape[0] // 2
            z11, z12, z21, z22 = z[:m, :m], z[:m, m:], z[m:, :m], z[m:, m:]
            out.append((z11 + z22) + 1j * (z21 - z12))
        else:
            out.append(z)
    return out


# ------------------------------------------------------------ feasibility

@dataclass
class FeasibilityResult:
    feasible: bool
    margin: float
    solution: SdpSolution
    certificate: Optional[List[np.ndarray]] = None


def feasibility(p: SdpProblem, feas_tol: float = FEAS_TOL, max_iters: int = MAX_ITERS) -> FeasibilityResult:
    """Decide feasibility by maximizing a common margin t on every PSD constraint.

    Feasible iff the optimal margin is at least -feas_tol. The returned
    solution holds the witness point; its objective is the margin.
    """
    q = SdpProblem(p.name + "-feasibility")
    q.vars = list(p.vars)
    q._nparams = p._nparams
    t = q.scalar("__margin__")
    for con in p.constraints:
        if con.kind == "psd":
            m = con.expr.shape[0]
            q.constraints.append(_Constraint("psd", con.expr - t * np.eye(m), con.name))
        else:
            q.constraints.append(con)
    q.add_psd(1.0 - t, "margin <= 1")
    q.maximize(t)
    sol = solve(q, feas_tol=feas_tol, max_iters=max_iters)
    if sol.status == "infeasible":
        return FeasibilityResult(False, -math.inf, sol, sol.duals)
    if sol.status != "optimal":
        raise SdpFailure(f"feasibility check failed: {sol.message}", sol)
    margin = sol.scalar_values["__margin__"]
    sol.block_values.pop("__margin__", None)
    sol.scalar_values.pop("__margin__", None)
    cert = None if margin >= -feas_tol else sol.duals
    return FeasibilityResult(margin >= -feas_tol, margin, sol, cert)
