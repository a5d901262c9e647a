"""Compatibility of POVMs and testers, plus structural predicates."""

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from qtesters import sdp
from qtesters.errors import DimensionError, ValidationError
from qtesters.linalg import (PSD_TOL, SUPPORT_TOL, Operator, eigenvalues, psd_pinv,
                             psd_pinv_sqrt, psd_sqrt, spectral_decompose, support_isometry,
                             trace_norm)
from qtesters.objects import Povm, Tester

NORMALIZATION_TOL = 1e-8
COMMUTE_TOL = 1e-9
MARGINAL_TOL = 1e-7
MAX_JOINT_OUTCOMES = 4096


class WrongOutcomeCountError(ValidationError):
    pass


@dataclass
class CompatibilityVerdict:
    compatible: bool
    joint: Optional[object] = None          # Povm or Tester over "j|k" labels
    violated: Optional[str] = None          # NormalizationMismatch | JointInfeasible
    normalization_distance: Optional[float] = None
    margin: Optional[float] = None          # max-margin value of the feasibility SDP
    method: str = "sdp"
    details: Dict[str, object] = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"compatible": self.compatible, "violated": self.violated, "method": self.method}
        if self.normalization_distance is not None:
            out["normalization_distance"] = self.normalization_distance
        if self.margin is not None:
            out["margin"] = self.margin
        if self.joint is not None:
            out["joint"] = self.joint.to_json()
        return out


def _is_real(ops) -> bool:
    return all(not np.any(np.asarray(o.data if isinstance(o, Operator) else o).imag) for o in ops)


def _max_abs(a) -> float:
    return float(np.max(np.abs(a), initial=0.0))


def _commute(x, y, tol=COMMUTE_TOL) -> bool:
    return _max_abs(x @ y - y @ x) <= tol


def _joint_labels(label_sets):
    return ["|".join(combo) for combo in itertools.product(*label_sets)]


def verify_joint(joint: Sequence, marginals: Sequence[Sequence], psd_tol: float = 1e-7,
                 tol: float = MARGINAL_TOL) -> Dict[str, float]:
    """Solver-free check of a joint object against its marginals.

    ``joint`` lists elements in the row-major order of the product of the
    marginal outcome sets. Returns the most negative eigenvalue, the largest
    marginal residual and an ``ok`` flag.
    """
    sizes = [len(m) for m in marginals]
    if len(joint) != int(np.prod(sizes)):
        raise DimensionError(f"{len(joint)} joint elements for outcome sizes {sizes}")
    mats = [np.asarray(j.data if isinstance(j, Operator) else j) for j in joint]
    min_eig = min(float(eigenvalues(0.5 * (m + m.conj().T))[-1]) for m in mats)
    herm = max(_max_abs(m - m.conj().T) for m in mats)
    grid = np.array(mats).reshape(sizes + list(mats[0].shape))
    resid = 0.0
    for axis, marg in enumerate(marginals):
        other = tuple(i for i in range(len(sizes)) if i != axis)
        sums = grid.sum(axis=other) if other else grid
        for j, target in enumerate(marg):
            t = np.asarray(target.data if isinstance(target, Operator) else target)
            resid = max(resid, _max_abs(sums[j] - t))
    ok = min_eig >= -psd_tol and resid <= tol and herm <= tol
    return {"ok": bool(ok), "min_eig": min_eig, "marginal_residual": resid, "hermitian_residual": herm}


# ------------------------------------------------------------------ POVMs

def _povm_joint_sdp(element_sets, field_kind):
    sizes = [len(s) for s in element_sets]
    d = element_sets[0][0].shape[0]
    p = sdp.SdpProblem("joint-povm")
    blocks = {}
    for combo in itertools.product(*[range(n) for n in sizes]):
        blocks[combo] = p.block("R" + "_".join(map(str, combo)), d, field_kind)
    for axis, elems in enumerate(element_sets):
        for j, target in enumerate(elems):
            terms = [b for combo, b in blocks.items() if combo[axis] == j]
            total = terms[0]
            for t in terms[1:]:
                total = total + t
            p.add_zero(total - target, f"marginal {axis}:{j}")
    return p, blocks


def povm_compatibility(povms: Sequence[Povm], feas_tol: float = sdp.FEAS_TOL) -> CompatibilityVerdict:
    """Decide joint measurability of a finite set of POVMs."""
    if len(povms) < 1:
        raise ValidationError("need at least one POVM")
    d = povms[0].dim
    for q in povms:
        if q.dim != d:
            raise DimensionError(f"POVMs act on different dimensions ({d} vs {q.dim})")
    sizes = [len(q) for q in povms]
    n_joint = int(np.prod(sizes))
    if n_joint > MAX_JOINT_OUTCOMES:
        raise ValidationError(f"{n_joint} joint outcomes exceed the cap of {MAX_JOINT_OUTCOMES}")
    sets = [[e.data for e in q.elements] for q in povms]
    labels = _joint_labels([q.outcomes for q in povms])
    dims = povms[0].elements[0].dims

    if len(povms) == 2:
        a, b = sets
        if len(a) == len(b) and all(_max_abs(x - y) <= 1e-12 for x, y in zip(a, b)):
            joint = [a[j] if j == k else np.zeros_like(a[j]) for j in range(len(a)) for k in range(len(b))]
            return _povm_verdict(joint, labels, dims, sets, "identical")
        if all(_commute(x, y) for x in a for y in b):
            joint = [0.5 * (x @ y + y @ x) for x in a for y in b]
            v = _povm_verdict(joint, labels, dims, sets, "commuting")
            if v.compatible:
                return v

    field_kind = "real" if all(_is_real(s) for s in sets) else "complex"
    p, blocks = _povm_joint_sdp(sets, field_kind)
    res = sdp.feasibility(p, feas_tol=feas_tol)
    if not res.feasible:
        return CompatibilityVerdict(False, violated="JointInfeasible", margin=res.margin,
                                    details={"sdp_status": res.solution.status})
    joint = [res.solution.block_values[f"R{'_'.join(map(str, combo))}"]
             for combo in itertools.product(*[range(n) for n in sizes])]
    v = _povm_verdict(joint, labels, dims, sets, "sdp")
    v.margin = res.margin
    return v


def _povm_verdict(joint, labels, dims, sets, method):
    chk = verify_joint(joint, sets)
    if not chk["ok"]:
        return CompatibilityVerdict(False, violated="JointInfeasible", method=method, details=chk)
    povm = Povm(tuple(labels), tuple(Operator(0.5 * (j + j.conj().T), dims) for j in joint))
    return CompatibilityVerdict(True, joint=povm, method=method, details=chk)


# ----------------------------------------------------------------- testers

def _normalization_gap(testers):
    base = testers[0].normalization
    return max(trace_norm(t.normalization - base) for t in testers[1:]) if len(testers) > 1 else 0.0


def _check_same_signature(testers):
    sig = testers[0].dims
    for t in testers[1:]:
        if t.dims != sig:
            raise DimensionError(f"testers have different signatures {sig} vs {t.dims}")


def canonical_povms_on_support(testers: Sequence[Tester], rho: Optional[Operator] = None,
                               support_tol: float = SUPPORT_TOL):
    """Canonical POVMs of testers sharing the normalization rho, on H1 (x) supp(rho).

    Returns (povm element lists, lift) where ``lift`` maps a POVM element on
    the support back to a tester element via the rho^{1/2} sandwich.
    """
    rho = testers[0].normalization if rho is None else rho
    d1 = testers[0].d1
    v = support_isometry(rho, support_tol)
    isq = psd_pinv_sqrt(rho, support_tol=support_tol).data
    sq = psd_sqrt(rho).data
    left = np.kron(np.eye(d1), v.conj().T @ isq)
    up = np.kron(np.eye(d1), sq @ v)
    out = []
    for t in testers:
        elems = [left @ e.data @ left.conj().T for e in t.elements]
        elems = [0.5 * (e + e.conj().T) for e in elems]
        elems[-1] = elems[-1] + (np.eye(elems[0].shape[0]) - sum(elems))
        out.append(elems)

    def lift(r):
        c = up @ r @ up.conj().T
        return 0.5 * (c + c.conj().T)
    return out, lift


def _tester_joint(joint, labels, testers, rho, method, margin=None):
    sets = [[e.data for e in t.elements] for t in testers]
    chk = verify_joint(joint, sets)
    if not chk["ok"]:
        return CompatibilityVerdict(False, violated="JointInfeasible", method=method, details=chk,
                                    margin=margin)
    dims = testers[0].dims
    elems = tuple(Operator(0.5 * (j + j.conj().T), dims) for j in joint)
    return CompatibilityVerdict(True, joint=Tester(tuple(labels), elems, rho), method=method,
                                details=chk, margin=margin, normalization_distance=_normalization_gap(testers))


def tester_compatibility(testers: Sequence[Tester], feas_tol: float = sdp.FEAS_TOL,
                         norm_tol: float = NORMALIZATION_TOL) -> CompatibilityVerdict:
    """Decide compatibility of a finite set of testers.

    Normalizations are compared first; if they agree, compatibility reduces
    to that of the canonical POVMs on the common support, and a joint POVM
    is lifted back to a joint tester.
    """
    testers = list(testers)
    if not testers:
        raise ValidationError("need at least one tester")
    _check_same_signature(testers)
    gap = _normalization_gap(testers)
    if gap > norm_tol:
        return CompatibilityVerdict(False, violated="NormalizationMismatch", normalization_distance=gap,
                                    method="normalization")
    sizes = [len(t) for t in testers]
    if int(np.prod(sizes)) > MAX_JOINT_OUTCOMES:
        raise ValidationError(f"{int(np.prod(sizes))} joint outcomes exceed the cap of {MAX_JOINT_OUTCOMES}")
    rho = testers[0].normalization
    labels = _joint_labels([t.outcomes for t in testers])

    if len(testers) == 2:
        a, b = testers
        if all(_commute(x.data, y.data) for x in a.elements for y in b.elements):
            d1 = a.d1
            inv = np.kron(np.eye(d1), psd_pinv(rho).data)
            joint = [x.data @ y.data @ inv for x in a.elements for y in b.elements]
            v = _tester_joint(joint, labels, testers, rho, "commuting")
            if v.compatible:
                return v

    povms, lift = canonical_povms_on_support(testers, rho)
    r = povms[0][0].shape[0]
    dims = (testers[0].d1, r // testers[0].d1)
    pv = povm_compatibility([Povm(t.outcomes, tuple(Operator(e, dims) for e in els))
                             for t, els in zip(testers, povms)], feas_tol=feas_tol)
    if not pv.compatible:
        return CompatibilityVerdict(False, violated="JointInfeasible", normalization_distance=gap,
                                    margin=pv.margin, method="canonical-povm", details=pv.details)
    joint = [lift(e.data) for e in pv.joint.elements]
    return _tester_joint(joint, labels, testers, rho, "canonical-povm", pv.margin)


def two_outcome_tester_compatibility(a: Tester, b: Tester, feas_tol: float = sdp.FEAS_TOL,
                                     norm_tol: float = NORMALIZATION_TOL) -> CompatibilityVerdict:
    """Two-outcome criterion: exists C >= 0 with C <= A1, C <= B1, I (x) rho + C >= A1 + B1."""
    if len(a) != 2 or len(b) != 2:
        raise WrongOutcomeCountError(f"need two-outcome testers, got {len(a)} and {len(b)} outcomes")
    _check_same_signature([a, b])
    gap = trace_norm(a.normalization - b.normalization)
    if gap > norm_tol:
        return CompatibilityVerdict(False, violated="NormalizationMismatch", normalization_distance=gap,
                                    method="normalization")
    a1, b1 = a.elements[0].data, b.elements[0].data
    ir = np.kron(np.eye(a.d1), a.normalization.data)
    n = a1.shape[0]
    p = sdp.SdpProblem("two-outcome-compatibility")
    c = p.block("C", n, "real" if _is_real([a1, b1, ir]) else "complex")
    p.add_psd(a1 - c, "C <= A1")
    p.add_psd(b1 - c, "C <= B1")
    p.add_psd(ir + c - a1 - b1, "I(x)rho + C >= A1 + B1")
    res = sdp.feasibility(p, feas_tol=feas_tol)
    if not res.feasible:
        return CompatibilityVerdict(False, violated="JointInfeasible", normalization_distance=gap,
                                    margin=res.margin, method="two-outcome")
    cv = res.solution.block_values["C"]
    joint = two_outcome_joint(a, b, cv)
    labels = _joint_labels([a.outcomes, b.outcomes])
    return _tester_joint(joint, labels, [a, b], a.normalization, "two-outcome", res.margin)


def two_outcome_joint(a: Tester, b: Tester, c) -> List[np.ndarray]:
    """Joint elements C11, C12, C21, C22 built from C = C11."""
    c = np.asarray(c.data if isinstance(c, Operator) else c)
    a1, a2 = a.elements[0].data, a.elements[1].data
    b1 = b.elements[0].data
    return [c, a1 - c, b1 - c, a2 - b1 + c]


# ------------------------------------------------------------- predicates

@dataclass(frozen=True)
class StructuralFlags:
    commuting: bool
    orthogonal: bool
    jointly_diagonal: bool
    comparable: bool
    normalizations_orthogonal: bool
    comparable_pair: Optional[tuple] = None  # (j, k, "A<=B" or "B<=A")

    def to_json(self) -> dict:
        return {"commuting": self.commuting, "orthogonal": self.orthogonal,
                "jointly_diagonal": self.jointly_diagonal, "comparable": self.comparable}


def _common_basis_check(mats, tol=1e-8) -> bool:
    if not all(_commute(x, y, COMMUTE_TOL) for x, y in itertools.combinations(mats, 2)):
        return False
    # a generic combination separates the joint eigenspaces
    coeffs = [1.0 / (k + np.sqrt(2.0)) + 0.1 * np.sin(k + 1.0) for k in range(len(mats))]
    mix = sum(c * m for c, m in zip(coeffs, mats))
    mix = 0.5 * (mix + mix.conj().T)
    _, u = spectral_decompose(mix, herm_tol=np.inf)
    for m in mats:
        rot = u.conj().T @ m @ u
        if _max_abs(rot - np.diag(np.diag(rot))) > tol:
            return False
    return True


def structural_predicates(a: Tester, b: Tester, psd_tol: float = PSD_TOL) -> StructuralFlags:
    _check_same_signature([a, b])
    ea = [x.data for x in a.elements]
    eb = [y.data for y in b.elements]
    commuting = all(_commute(x, y) for x in ea for y in eb)
    orthogonal = all(_max_abs(x @ y) <= COMMUTE_TOL for x in ea for y in eb)
    rs = a.normalization.data @ b.normalization.data
    norm_orth = _max_abs(rs) <= COMMUTE_TOL
    jd = commuting and _common_basis_check(ea + eb)
    pair = None
    for j, x in enumerate(ea):
        for k, y in enumerate(eb):
            if eigenvalues(0.5 * ((y - x) + (y - x).conj().T))[-1] >= -psd_tol:
                pair = (j, k, "A<=B")
            elif eigenvalues(0.5 * ((x - y) + (x - y).conj().T))[-1] >= -psd_tol:
                pair = (j, k, "B<=A")
            if pair:
                break
        if pair:
            break
    return StructuralFlags(commuting, orthogonal, jd, pair is not None, norm_orth, pair)
