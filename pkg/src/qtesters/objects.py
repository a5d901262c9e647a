"""Typed quantum objects: states, POVMs, Choi operators, testers and combs.

Conventions
-----------
* A tester element acts on H1 (x) H0 and is stored with ``dims == (d1, d0)``
  (output factor first).
* A Choi operator of a channel H0 -> H1 is ``(E (x) I)|Omega><Omega|`` with
  the same ``(d1, d0)`` ordering.
* N-combs and N-testers act on H_{2N-1} (x) ... (x) H_0 and are stored in that
  descending factor order. ``io_dims`` lists the dimensions in the
  interleaved order (d0, d1, ..., d_{2N-1}).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from qtesters.errors import (ChainViolationError, DimensionError, NotNormalizedError,
                             NotProductNormalizedError, TraceNotOneError, ValidationError)
from qtesters.linalg import (HERM_TOL, PSD_TOL, SUPPORT_TOL, Operator, as_operator, identity,
                             operator_from_json, operator_to_json, partial_trace,
                             partial_transpose, permute, psd_pinv_sqrt, psd_sqrt, require_psd,
                             spectral_decompose, support_isometry, tensor)

NORM_TOL = 1e-9
PRODUCT_TOL = 1e-8
CHAIN_TOL = 1e-8


def _labels(outcomes, n) -> Tuple[str, ...]:
    if outcomes is None:
        return tuple(str(j) for j in range(n))
    labels = tuple(str(o) for o in outcomes)
    if len(labels) != n:
        raise DimensionError(f"{len(labels)} outcome labels for {n} elements")
    if len(set(labels)) != n:
        raise ValidationError("outcome labels must be distinct")
    return labels


def _max_abs(a) -> float:
    return float(np.max(np.abs(np.asarray(a)), initial=0.0))


@dataclass(frozen=True)
class DensityOperator:
    op: Operator

    @property
    def dim(self) -> int:
        return self.op.side


@dataclass(frozen=True)
class Povm:
    outcomes: Tuple[str, ...]
    elements: Tuple[Operator, ...]

    @property
    def dim(self) -> int:
        return self.elements[0].side

    def __len__(self):
        return len(self.elements)

    def to_json(self) -> dict:
        return {"kind": "povm", "outcomes": list(self.outcomes),
                "elements": [operator_to_json(e) for e in self.elements],
                "dims": list(self.elements[0].dims)}


@dataclass(frozen=True)
class ChoiOperator:
    op: Operator
    deterministic: bool = True

    @property
    def dims(self):
        return self.op.dims


@dataclass(frozen=True)
class Tester:
    """Outcome-indexed positive operators on H1 (x) H0 summing to I (x) rho.

    Build instances with :func:`validate_tester`, which checks the invariants.
    """

    outcomes: Tuple[str, ...]
    elements: Tuple[Operator, ...]
    normalization: Operator = field(compare=False)

    @property
    def dims(self):
        return self.elements[0].dims

    @property
    def d1(self) -> int:
        return self.dims[0]

    @property
    def d0(self) -> int:
        return self.dims[1]

    def __len__(self):
        return len(self.elements)

    def to_json(self) -> dict:
        return {"kind": "tester", "outcomes": list(self.outcomes),
                "elements": [operator_to_json(e) for e in self.elements],
                "dims": list(self.dims)}


@dataclass(frozen=True)
class TesterSetup:
    """Ancilla dimension, input state on H0 (x) H_anc, POVM on H1 (x) H_anc."""

    anc_dim: int
    input_state: DensityOperator
    measurement: Povm


@dataclass(frozen=True)
class NComb:
    op: Operator
    io_dims: Tuple[int, ...]

    @property
    def steps(self) -> int:
        return len(self.io_dims) // 2

    def to_json(self) -> dict:
        return {"kind": "comb", "steps": self.steps, "dims": list(self.io_dims),
                "operator": operator_to_json(self.op)}


@dataclass(frozen=True)
class NTester:
    outcomes: Tuple[str, ...]
    elements: Tuple[Operator, ...]
    io_dims: Tuple[int, ...]
    theta: Operator = field(compare=False)

    @property
    def steps(self) -> int:
        return len(self.io_dims) // 2

    def to_json(self) -> dict:
        return {"kind": "ntester", "steps": self.steps, "dims": list(self.io_dims),
                "outcomes": list(self.outcomes),
                "elements": [operator_to_json(e) for e in self.elements]}


# ---------------------------------------------------------------- validators

def validate_density(m, dims=None, psd_tol=PSD_TOL, what="state") -> DensityOperator:
    m = as_operator(m, dims)
    require_psd(m, psd_tol, what=what)
    tr = m.tr().real
    if abs(tr - 1.0) > NORM_TOL:
        raise TraceNotOneError(f"{what} has trace {tr:.12g}", tr)
    return DensityOperator(m)


def validate_povm(elements: Sequence, outcomes=None, dims=None, psd_tol=PSD_TOL) -> Povm:
    ops = [as_operator(e, dims) for e in elements]
    if not ops:
        raise ValidationError("POVM needs at least one element")
    for i, e in enumerate(ops):
        if e.dims != ops[0].dims:
            raise DimensionError(f"element {i} has signature {e.dims}, expected {ops[0].dims}")
        require_psd(e, psd_tol, what=f"POVM element {i}")
    total = sum((e.data for e in ops), np.zeros_like(ops[0].data))
    res = _max_abs(total - np.eye(ops[0].side))
    if res > NORM_TOL:
        raise NotNormalizedError(f"POVM elements sum to identity only within {res:.3e}", res)
    return Povm(_labels(outcomes, len(ops)), tuple(ops))


def validate_choi(m, dims=None, deterministic=True, psd_tol=PSD_TOL) -> ChoiOperator:
    m = as_operator(m, dims)
    if len(m.dims) != 2:
        raise DimensionError(f"Choi operator needs signature (d1, d0), got {m.dims}")
    require_psd(m, psd_tol, what="Choi operator")
    if deterministic:
        marg = partial_trace(m, 0)
        res = _max_abs(marg.data - np.eye(m.dims[1]))
        if res > NORM_TOL:
            raise NotNormalizedError(f"Choi operator is not trace preserving (residual {res:.3e})", res)
    return ChoiOperator(m, deterministic)


def choi_from_kraus(kraus: Sequence, d0: Optional[int] = None) -> ChoiOperator:
    """Choi operator sum_i (K_i (x) I)|Omega><Omega|(K_i (x) I)^dag."""
    ks = [np.asarray(k, dtype=np.complex128) for k in kraus]
    d1, d0_ = ks[0].shape
    d0 = d0_ if d0 is None else d0
    vec = np.eye(d0, dtype=np.complex128).reshape(-1)
    out = np.zeros((d1 * d0, d1 * d0), dtype=np.complex128)
    for k in ks:
        v = np.kron(k, np.eye(d0)) @ vec
        out += np.outer(v, v.conj())
    tp = sum(k.conj().T @ k for k in ks)
    return ChoiOperator(Operator(out, (d1, d0)), bool(np.allclose(tp, np.eye(d0), atol=1e-12)))


def tester_sum(elements) -> Operator:
    ops = [as_operator(e) for e in elements]
    return Operator(sum((e.data for e in ops), np.zeros_like(ops[0].data)), ops[0].dims)


def validate_tester(elements: Sequence, outcomes=None, dims=None,
                    psd_tol=PSD_TOL) -> Tuple[Tester, DensityOperator]:
    """Check positivity and the I (x) rho normalization of tester elements.

    Raises NotPsdError (with a negativity witness), NotProductNormalizedError
    (with the residual of the sum against I (x) rho) or TraceNotOneError.
    """
    ops = [as_operator(e, dims) for e in elements]
    if not ops:
        raise ValidationError("tester needs at least one element")
    sig = ops[0].dims
    if len(sig) != 2:
        raise DimensionError(f"tester elements need signature (d1, d0), got {sig}")
    for i, e in enumerate(ops):
        if e.dims != sig:
            raise DimensionError(f"element {i} has signature {e.dims}, expected {sig}")
        require_psd(e, psd_tol, what=f"tester element {i}")
    total = tester_sum(ops)
    d1 = sig[0]
    rho = partial_trace(total, 0) / d1
    res = _max_abs(total.data - np.kron(np.eye(d1), rho.data))
    if res > PRODUCT_TOL:
        raise NotProductNormalizedError(
            f"sum of tester elements deviates from I (x) rho by {res:.3e}", res)
    tr = rho.tr().real
    if abs(tr - 1.0) > NORM_TOL:
        raise TraceNotOneError(f"normalization state has trace {tr:.12g}", tr)
    rho = Operator(0.5 * (rho.data + rho.data.conj().T), rho.dims)
    return Tester(_labels(outcomes, len(ops)), tuple(ops), rho), DensityOperator(rho)


def make_tester(elements, outcomes=None, dims=None) -> Tester:
    return validate_tester(elements, outcomes, dims)[0]


# ---------------------------------------------------------- constructions

def tester_from_setup(setup: TesterSetup) -> Tester:
    """T_j = tr_anc[(P_j (x) I_0)(I_1 (x) SWAP Psi^{T_0} SWAP)]."""
    psi = setup.input_state.op
    da = int(setup.anc_dim)
    if len(psi.dims) != 2 or psi.dims[1] != da:
        raise DimensionError(f"input state signature {psi.dims} is not (d0, {da})")
    d0 = psi.dims[0]
    meas = setup.measurement
    if len(meas.elements[0].dims) != 2 or meas.elements[0].dims[1] != da:
        raise DimensionError(f"measurement signature {meas.elements[0].dims} is not (d1, {da})")
    d1 = meas.elements[0].dims[0]
    # (anc, 0) ordering of the partially transposed input
    psi_t = permute(partial_transpose(psi, 0), [1, 0])
    big_psi = tensor(identity(d1), psi_t)
    elements = []
    for p in meas.elements:
        prod = tensor(p, identity(d0)) @ big_psi
        elements.append(partial_trace(prod, 1))
    return make_tester(elements, meas.outcomes)


def canonical_implementation(t: Tester, support_tol=SUPPORT_TOL) -> TesterSetup:
    """Canonical setup: ancilla = supp(rho), |Psi> = (I (x) V^dag rho^{1/2})|Omega>.

    The POVM is P_j = (I (x) V^dag rho^{-1/2}) T_j (I (x) rho^{-1/2} V) on
    H1 (x) supp(rho), with V the isometry onto the support. The elements sum
    to the identity up to roundoff, which is absorbed by the last outcome.
    """
    rho = t.normalization
    d1, d0 = t.dims
    v = support_isometry(rho, support_tol)
    r = v.shape[1]
    sq = psd_sqrt(rho).data
    isq = psd_pinv_sqrt(rho, support_tol=support_tol).data
    x = v.conj().T @ sq
    omega_vec = np.eye(d0, dtype=np.complex128).reshape(-1)
    psi_vec = np.kron(np.eye(d0), x) @ omega_vec
    psi = Operator(np.outer(psi_vec, psi_vec.conj()), (d0, r))
    left = np.kron(np.eye(d1), v.conj().T @ isq)
    povm = [left @ e.data @ left.conj().T for e in t.elements]
    povm = [0.5 * (p + p.conj().T) for p in povm]
    deficit = np.eye(d1 * r) - sum(povm)
    povm[-1] = povm[-1] + deficit
    meas = Povm(t.outcomes, tuple(Operator(p, (d1, r)) for p in povm))
    return TesterSetup(r, DensityOperator(psi), meas)


def canonical_povm(t: Tester, support_tol=SUPPORT_TOL) -> Povm:
    return canonical_implementation(t, support_tol).measurement


def born_probabilities(t: Tester, e: ChoiOperator) -> np.ndarray:
    """p_j = tr[T_j E]."""
    if e.op.dims != t.dims:
        raise DimensionError(f"Choi signature {e.op.dims} does not match tester {t.dims}")
    return np.array([float(np.real(np.sum(el.data * e.op.data.T))) for el in t.elements])


def ancilla_free_decomposition(t: Tester, tol=1e-9) -> Optional[Tuple[Povm, DensityOperator]]:
    """Return (P, rho) if every T_j = P_j (x) rho, else None."""
    rho = t.normalization
    factors = []
    for el in t.elements:
        p = partial_trace(el, 1)
        if _max_abs(el.data - np.kron(p.data, rho.data)) > tol:
            return None
        factors.append(Operator(0.5 * (p.data + p.data.conj().T)))
    return Povm(t.outcomes, tuple(factors)), DensityOperator(rho)


# ------------------------------------------------------------ combs

def _storage_dims(io_dims) -> Tuple[int, ...]:
    io_dims = tuple(int(d) for d in io_dims)
    if len(io_dims) == 0 or len(io_dims) % 2:
        raise DimensionError(f"interleaved signature needs an even number of factors, got {io_dims}")
    return tuple(reversed(io_dims))


def validate_ncomb(op, io_dims, psd_tol=PSD_TOL, tol=CHAIN_TOL) -> NComb:
    """Check positivity and the recursive comb chain.

    Level k is the link tr_{2k-1} R^(k) = I_{2k-2} (x) R^(k-1), with R^(0) = 1.
    """
    sig = _storage_dims(io_dims)
    m = as_operator(op, sig) if not isinstance(op, Operator) else op
    if m.dims != sig:
        if m.side == int(np.prod(sig)):
            m = m.with_dims(sig)
        else:
            raise DimensionError(f"operator side {m.side} does not match {io_dims}")
    require_psd(m, psd_tol, what="comb")
    n = len(sig) // 2
    r = m
    for k in range(n, 0, -1):
        x = partial_trace(r, 0)
        if k == 1:
            res = _max_abs(x.data - np.eye(x.side))
            if res > tol:
                raise ChainViolationError(f"comb chain violated at level 1 (residual {res:.3e})", 1, res)
            break
        d = x.dims[0]
        nxt = partial_trace(x, 0) / d
        res = _max_abs(x.data - np.kron(np.eye(d), nxt.data))
        if res > tol:
            raise ChainViolationError(f"comb chain violated at level {k} (residual {res:.3e})", k, res)
        r = nxt
    return NComb(m, tuple(int(d) for d in io_dims))


def validate_ntester(elements, io_dims, outcomes=None, psd_tol=PSD_TOL,
                     tol=CHAIN_TOL) -> Tuple[NTester, Operator]:
    """Check positivity and the N-tester chain; return the tester and Theta.

    Level N is sum_j T_j = I_{2N-1} (x) Theta^(N); level k < N is
    tr_{2k} Theta^(k+1) = I_{2k-1} (x) Theta^(k); level 0 is tr Theta^(1) = 1.
    """
    sig = _storage_dims(io_dims)
    ops = []
    for i, e in enumerate(elements):
        e = as_operator(e)
        if e.dims != sig:
            if e.side != int(np.prod(sig)):
                raise DimensionError(f"element {i} side {e.side} does not match {io_dims}")
            e = e.with_dims(sig)
        require_psd(e, psd_tol, what=f"tester element {i}")
        ops.append(e)
    if not ops:
        raise ValidationError("tester needs at least one element")
    n = len(sig) // 2
    total = tester_sum(ops)
    d = total.dims[0]
    theta = partial_trace(total, 0) / d
    res = _max_abs(total.data - np.kron(np.eye(d), theta.data))
    if res > tol:
        raise ChainViolationError(f"tester chain violated at level {n} (residual {res:.3e})", n, res)
    th = theta
    for k in range(n - 1, 0, -1):
        # th = Theta^(k+1) on H_{2k} (x) ... (x) H_0
        x = partial_trace(th, 0)
        d = x.dims[0]
        nxt = partial_trace(x, 0) / d
        res = _max_abs(x.data - np.kron(np.eye(d), nxt.data))
        if res > tol:
            raise ChainViolationError(f"tester chain violated at level {k} (residual {res:.3e})", k, res)
        th = nxt
    tr = th.tr().real
    if abs(tr - 1.0) > tol:
        raise ChainViolationError(f"tester chain violated at level 0 (trace {tr:.12g})", 0, abs(tr - 1.0))
    theta = Operator(0.5 * (theta.data + theta.data.conj().T), theta.dims)
    nt = NTester(_labels(outcomes, len(ops)), tuple(ops), tuple(int(x) for x in io_dims), theta)
    return nt, theta


def nborn_probabilities(t: NTester, c: NComb) -> np.ndarray:
    """Generalized Born rule p_j = tr[T_j R^(N)]."""
    if t.io_dims != c.io_dims:
        raise DimensionError(f"tester dims {t.io_dims} do not match comb dims {c.io_dims}")
    return np.array([float(np.real(np.sum(el.data * c.op.data.T))) for el in t.elements])


def ntester_from_tester(t: Tester) -> NTester:
    """View a tester as a 1-tester (interleaved dims (d0, d1))."""
    return validate_ntester(t.elements, (t.d0, t.d1), t.outcomes)[0]


def ncomb_from_choi(e: ChoiOperator) -> NComb:
    return validate_ncomb(e.op, (e.dims[1], e.dims[0]))


# ------------------------------------------------------------------- JSON

def state_to_json(rho) -> dict:
    op = rho.op if isinstance(rho, DensityOperator) else as_operator(rho)
    return {"kind": "state", "operator": operator_to_json(op)}


def _elements_from_json(obj, dims=None):
    try:
        els = obj["elements"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"missing 'elements': {exc}") from exc
    ops = [operator_from_json(e) for e in els]
    if dims is not None:
        ops = [o.with_dims(dims) for o in ops]
    return ops


def object_from_json(obj: dict):
    """Build and validate an object from its JSON form, dispatching on "kind"."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("JSON object needs a 'kind' field")
    kind = obj["kind"]
    if kind == "state":
        return validate_density(operator_from_json(obj["operator"]))
    if kind == "povm":
        return validate_povm(_elements_from_json(obj), obj.get("outcomes"))
    if kind == "tester":
        dims = obj.get("dims")
        return validate_tester(_elements_from_json(obj, dims), obj.get("outcomes"))[0]
    if kind == "choi":
        return validate_choi(operator_from_json(obj["operator"]),
                             deterministic=bool(obj.get("deterministic", True)))
    if kind == "comb":
        c = validate_ncomb(operator_from_json(obj["operator"]), obj["dims"])
        if "steps" in obj and int(obj["steps"]) != c.steps:
            raise DimensionError(f"'steps' = {obj['steps']} disagrees with dims {obj['dims']}")
        return c
    if kind == "ntester":
        t = validate_ntester(_elements_from_json(obj), obj["dims"], obj.get("outcomes"))[0]
        if "steps" in obj and int(obj["steps"]) != t.steps:
            raise DimensionError(f"'steps' = {obj['steps']} disagrees with dims {obj['dims']}")
        return t
    raise ValidationError(f"unknown kind {kind!r}")


def object_to_json(obj) -> dict:
    if isinstance(obj, DensityOperator):
        return state_to_json(obj)
    if isinstance(obj, ChoiOperator):
        return {"kind": "choi", "deterministic": obj.deterministic, "operator": operator_to_json(obj.op)}
    if isinstance(obj, (Povm, Tester, NComb, NTester)):
        return obj.to_json()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
