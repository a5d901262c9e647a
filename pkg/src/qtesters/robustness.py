"""Robustness of incompatibility for states, POVMs and testers.

Every result carries a complete witness: the noise objects, the mixed
normalization and a joint object whose marginals are the noisy mixtures.
:func:`replay_witness` re-checks these without the solver.
"""

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from qtesters import sdp
from qtesters.compat import (WrongOutcomeCountError, _check_same_signature, _is_real,
                             canonical_povms_on_support, povm_compatibility, structural_predicates,
                             tester_compatibility, verify_joint)
from qtesters.errors import DimensionError, SdpFailure, ValidationError
from qtesters.linalg import (Operator, eigenvalues, operator_from_json,
                             operator_to_json, positive_negative_parts, psd_pinv, trace_norm)
from qtesters.objects import (DensityOperator, NTester, Povm, Tester, object_from_json,
                              validate_povm, validate_tester)

STATE_EQ_TOL = 1e-9
SAME_STATE_TOL = 1e-8
TRIVIAL_LAMBDA = 1e-9
MU_CAP = 1e6
BISECTION_TOL = 1e-6
BISECTION_THRESHOLD = -1e-9
SANDWICH_TOL = 1e-6
REPLAY_PSD_TOL = 1e-7


def _arr(x) -> np.ndarray:
    if isinstance(x, DensityOperator):
        x = x.op
    return np.asarray(x.data if isinstance(x, Operator) else x, dtype=np.complex128)


def _herm(m) -> np.ndarray:
    m = _arr(m)
    return 0.5 * (m + m.conj().T)


@dataclass
class RobustnessResult:
    """Minimal noise weight ``lam`` plus a witness of lam-compatibility.

    For testers ``noise_a``/``noise_b`` are the noise testers N^(A), N^(B)
    and ``joint`` lists C_{jk} in row-major order; for POVMs they are the
    junk POVMs and the joint POVM; for states ``rho_tilde``/``sigma_tilde``
    are the admixed states and ``omega`` the common mixture.
    """

    lam: float
    kind: str                      # state | povm | tester
    method: str                    # closed-form | sdp | bisection
    a: object = None
    b: object = None
    noise_a: Optional[List[np.ndarray]] = None
    noise_b: Optional[List[np.ndarray]] = None
    joint: Optional[List[np.ndarray]] = None
    omega: Optional[np.ndarray] = None
    rho_tilde: Optional[np.ndarray] = None
    sigma_tilde: Optional[np.ndarray] = None
    shortcut: Optional[str] = None
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def mu(self) -> float:
        return math.inf if self.lam == 0 else (1.0 - self.lam) / self.lam

    def mixtures(self):
        """The noisy objects (1-lam) X + lam N^(X) for both inputs."""
        lam = self.lam
        if self.kind == "state":
            return ((1 - lam) * _arr(self.a) + lam * self.rho_tilde,
                    (1 - lam) * _arr(self.b) + lam * self.sigma_tilde)
        ea = [_arr(e) for e in self.a.elements]
        eb = [_arr(e) for e in self.b.elements]
        ma = [_herm((1 - lam) * x + lam * n) for x, n in zip(ea, self.noise_a)]
        mb = [_herm((1 - lam) * y + lam * n) for y, n in zip(eb, self.noise_b)]
        return ma, mb

    def to_json(self) -> dict:
        def ops(lst):
            return None if lst is None else [operator_to_json(Operator(m)) for m in lst]

        def op(m):
            return None if m is None else operator_to_json(Operator(m))

        out = {"kind": "robustness", "target": self.kind, "lambda": self.lam, "method": self.method,
               "shortcut": self.shortcut}
        if self.kind == "state":
            out["inputs"] = [op(_arr(self.a)), op(_arr(self.b))]
        else:
            out["inputs"] = [self.a.to_json(), self.b.to_json()]
        out.update({"noise_a": ops(self.noise_a), "noise_b": ops(self.noise_b),
                    "joint": ops(self.joint), "omega": op(self.omega),
                    "rho_tilde": op(self.rho_tilde), "sigma_tilde": op(self.sigma_tilde)})
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "RobustnessResult":
        def ops(lst):
            return None if lst is None else [operator_from_json(o).data for o in lst]

        def op(m):
            return None if m is None else operator_from_json(m).data

        kind = obj["target"]
        if kind == "state":
            a, b = (operator_from_json(x) for x in obj["inputs"])
        else:
            a, b = (object_from_json(x) for x in obj["inputs"])
        return cls(float(obj["lambda"]), kind, obj["method"], a, b, ops(obj.get("noise_a")),
                   ops(obj.get("noise_b")), ops(obj.get("joint")), op(obj.get("omega")),
                   op(obj.get("rho_tilde")), op(obj.get("sigma_tilde")), obj.get("shortcut"))


@dataclass
class BoundReport:
    state_lower: float
    trivial_upper: float
    measurement_upper: Optional[float] = None
    discrimination_lower: Optional[float] = None

    def to_json(self) -> dict:
        return {"state_lower": self.state_lower, "trivial_upper": self.trivial_upper,
                "measurement_upper": self.measurement_upper,
                "discrimination_lower": self.discrimination_lower}


# ------------------------------------------------------------------ states

def state_robustness(rho, sigma) -> RobustnessResult:
    """lam = ||rho - sigma|| / (||rho - sigma|| + 2) with orthogonal admixed states."""
    r, s = _herm(rho), _herm(sigma)
    if r.shape != s.shape:
        raise DimensionError(f"states have different dimensions {r.shape[0]} and {s.shape[0]}")
    dist = trace_norm(s - r)
    if dist <= 1e-12:
        return RobustnessResult(0.0, "state", "closed-form", Operator(r), Operator(s),
                                omega=r, rho_tilde=r, sigma_tilde=r, details={"trace_distance": dist})
    lam = dist / (dist + 2.0)
    plus, minus = positive_negative_parts((s - r) / dist)
    rt, st = 2.0 * plus.data, 2.0 * minus.data
    mix_r = (1 - lam) * r + lam * rt
    mix_s = (1 - lam) * s + lam * st
    resid = float(np.max(np.abs(mix_r - mix_s)))
    if resid > STATE_EQ_TOL:
        raise ValidationError(f"admixed states do not balance the mixtures (residual {resid:.3e})")
    return RobustnessResult(lam, "state", "closed-form", Operator(r), Operator(s),
                            omega=0.5 * (mix_r + mix_s), rho_tilde=rt, sigma_tilde=st,
                            details={"trace_distance": dist, "residual": resid})


# ------------------------------------------------------------------ POVMs

def cloning_bound(d: int) -> float:
    """Noise that universal optimal cloning needs to make any two POVMs compatible."""
    return 0.5 * (1.0 - 1.0 / (1.0 + d))


def _as_povm(p) -> Povm:
    if isinstance(p, Povm):
        return p
    return validate_povm(p)


def measurement_robustness(p, q, feas_tol: float = sdp.FEAS_TOL) -> RobustnessResult:
    """Robustness of incompatibility of two POVMs, noise allowed to differ.

    Solves sup mu over H_jk >= 0 with sum_k H_jk >= mu P_j, sum_j H_jk >= mu Q_k
    and sum H_jk = (1 + mu) I; then lam = 1/(1 + mu), joint R = lam H and junk
    J^P_j = sum_k H_jk - mu P_j.
    """
    p, q = _as_povm(p), _as_povm(q)
    if p.dim != q.dim:
        raise DimensionError(f"POVMs act on dimensions {p.dim} and {q.dim}")
    d = p.dim
    ep = [_arr(e) for e in p.elements]
    eq = [_arr(e) for e in q.elements]

    verdict = povm_compatibility([p, q], feas_tol=feas_tol)
    if verdict.compatible:
        joint = [_arr(e) for e in verdict.joint.elements]
        return RobustnessResult(0.0, "povm", "sdp", p, q, noise_a=_noise_from_other(eq, len(ep), d),
                                noise_b=_noise_from_other(ep, len(eq), d), joint=joint, shortcut="compatible",
                                details={"cloning_bound": cloning_bound(d)})

    kind = "real" if _is_real(ep + eq) else "complex"
    prob = sdp.SdpProblem("measurement-robustness")
    mu = prob.scalar("mu")
    h = {(j, k): prob.block(f"H{j}_{k}", d, kind) for j in range(len(ep)) for k in range(len(eq))}
    for j, pj in enumerate(ep):
        prob.add_psd(_sum(h[j, k] for k in range(len(eq))) - mu * pj, f"row {j}")
    for k, qk in enumerate(eq):
        prob.add_psd(_sum(h[j, k] for j in range(len(ep))) - mu * qk, f"column {k}")
    prob.add_zero(_sum(h.values()) - np.eye(d) - mu * np.eye(d), "normalization")
    prob.add_psd(MU_CAP - mu, "mu cap")
    prob.maximize(mu)
    sol = sdp.solve(prob, feas_tol=feas_tol)
    if not sol.ok:
        raise SdpFailure(f"measurement robustness SDP: {sol.status} ({sol.message})", sol)
    mu_v = sol.scalar_values["mu"]
    lam = 1.0 / (1.0 + mu_v)
    hv = {key: sol.block_values[f"H{key[0]}_{key[1]}"] for key in h}
    jp = [_herm(sum(hv[j, k] for k in range(len(eq))) - mu_v * ep[j]) for j in range(len(ep))]
    jq = [_herm(sum(hv[j, k] for j in range(len(ep))) - mu_v * eq[k]) for k in range(len(eq))]
    joint = [_herm(lam * hv[j, k]) for j in range(len(ep)) for k in range(len(eq))]
    details = {"mu": mu_v, "cloning_bound": cloning_bound(d), "iterations": sol.iterations,
               "primal_residual": sol.primal_residual, "duality_gap": sol.duality_gap}
    return RobustnessResult(lam, "povm", "sdp", p, q, noise_a=jp, noise_b=jq, joint=joint,
                            details=details)


def _noise_from_other(other, n, d):
    """Noise list of length n reusing the other object's elements."""
    out = [np.array(o, dtype=np.complex128) for o in other[:n]]
    while len(out) < n:
        out.append(np.zeros((d, d), dtype=np.complex128))
    if len(other) > n:
        out[-1] = out[-1] + sum(other[n:])
    return out


def _sum(items):
    items = list(items)
    total = items[0]
    for it in items[1:]:
        total = total + it
    return total


# ---------------------------------------------------------------- testers

def _require_two_outcome(a: Tester, b: Tester):
    if len(a) != 2 or len(b) != 2:
        raise WrongOutcomeCountError(f"need two-outcome testers, got {len(a)} and {len(b)} outcomes")
    _check_same_signature([a, b])


def _tester_result(a, b, lam, method, noise_a, noise_b, joint, omega, rt, st, shortcut=None, **details):
    return RobustnessResult(float(lam), "tester", method, a, b, [_herm(n) for n in noise_a],
                            [_herm(n) for n in noise_b], [_herm(c) for c in joint], _herm(omega),
                            _herm(rt), _herm(st), shortcut, dict(details))


def _self_pair(a: Tester, b: Tester, verdict, method) -> RobustnessResult:
    """Zero-noise result for compatible testers (noise of each is the other tester)."""
    rho = _arr(a.normalization)
    joint = [_arr(e) for e in verdict.joint.elements]
    return _tester_result(a, b, 0.0, method, [_arr(e) for e in b.elements],
                          [_arr(e) for e in a.elements], joint, rho, _arr(b.normalization), rho,
                          shortcut="compatible")


def _jointly_diagonal_witness(a, b, st):
    lam = st.lam
    d1 = a.d1
    eye = np.eye(d1)
    na = [np.kron(eye, st.rho_tilde) / len(a) for _ in a.elements]
    nb = [np.kron(eye, st.sigma_tilde) / len(b) for _ in b.elements]
    abar = [(1 - lam) * _arr(x) + lam * n for x, n in zip(a.elements, na)]
    bbar = [(1 - lam) * _arr(y) + lam * n for y, n in zip(b.elements, nb)]
    inv = np.kron(eye, psd_pinv(Operator(_herm(st.omega))).data)
    joint = [x @ y @ inv for x in abar for y in bbar]
    return na, nb, joint


def _comparable_witness(a, b, st, pair):
    j, k, rel = pair
    lam = st.lam
    d1 = a.d1
    eye = np.eye(d1)
    ir, is_ = np.kron(eye, _arr(a.normalization)), np.kron(eye, _arr(b.normalization))
    irt, ist = np.kron(eye, st.rho_tilde), np.kron(eye, st.sigma_tilde)
    zero = np.zeros_like(ir)
    jo, ko = 1 - j, 1 - k
    aj, bk = _arr(a.elements[j]), _arr(b.elements[k])
    na = [None, None]
    nb = [None, None]
    na[j], na[jo] = zero, irt
    nb[k], nb[ko] = zero, ist
    c = {}
    if rel == "A<=B":
        c[j, k] = (1 - lam) * aj
        c[j, ko] = zero
        c[jo, k] = (1 - lam) * (bk - aj)
        c[jo, ko] = (1 - lam) * (is_ - bk) + lam * ist
    else:
        c[j, k] = (1 - lam) * bk
        c[jo, k] = zero
        c[j, ko] = (1 - lam) * (aj - bk)
        c[jo, ko] = (1 - lam) * (ir - aj) + lam * irt
    joint = [c[x, y] for x in range(2) for y in range(2)]
    return na, nb, joint


def _is_pure(rho, tol=1e-9) -> bool:
    w = eigenvalues(_herm(rho))
    return w.size == 1 or float(w[1]) <= tol


def _pure_normalization_result(a, b, feas_tol):
    povms, lift = canonical_povms_on_support([a, b], a.normalization)
    r = povms[0][0].shape[0]
    dims = (a.d1, r // a.d1)
    p = Povm(a.outcomes, tuple(Operator(e, dims) for e in povms[0]))
    q = Povm(b.outcomes, tuple(Operator(e, dims) for e in povms[1]))
    m = measurement_robustness(p, q, feas_tol=feas_tol)
    rho = _arr(a.normalization)
    na = [lift(x) for x in m.noise_a]
    nb = [lift(y) for y in m.noise_b]
    joint = [lift(c) for c in m.joint]
    return m.lam, na, nb, joint, rho, m.details


def _linearized_problem(a: Tester, b: Tester):
    a1, b1 = _arr(a.elements[0]), _arr(b.elements[0])
    rho, sig = _arr(a.normalization), _arr(b.normalization)
    d1, d0 = a.dims
    n = d1 * d0
    eye1 = np.eye(d1)
    kind = "real" if _is_real([a1, b1, rho, sig]) else "complex"
    p = sdp.SdpProblem("tester-robustness")
    mu = p.scalar("mu")
    h = p.block("H", n, kind)
    at = p.block("At", n, kind)
    bt = p.block("Bt", n, kind)
    rt = p.block("rho_t", d0, kind)
    st = p.block("sigma_t", d0, kind)
    p.add_psd(mu * a1 + at - h, "H <= mu A1 + At")
    p.add_psd(mu * b1 + bt - h, "H <= mu B1 + Bt")
    p.add_psd(h + sdp.kron(eye1, st) - mu * (a1 + b1 - np.kron(eye1, sig)) - at - bt,
              "mu(A1 + B1 - I(x)sigma) + At + Bt <= H + I(x)sigma_t")
    p.add_zero(mu * (rho - sig) - st + rt, "mu(rho - sigma) = sigma_t - rho_t")
    p.add_psd(sdp.kron(eye1, rt) - at, "At <= I(x)rho_t")
    p.add_psd(sdp.kron(eye1, st) - bt, "Bt <= I(x)sigma_t")
    p.add_zero(sdp.trace(rt) - 1.0, "tr rho_t = 1")
    p.add_zero(sdp.trace(st) - 1.0, "tr sigma_t = 1")
    p.add_psd(MU_CAP - mu, "mu cap")
    p.maximize(mu)
    return p


def _witness_from_tilde(a, b, lam, c, at, bt, rt, st):
    d1 = a.d1
    eye = np.eye(d1)
    rho = _arr(a.normalization)
    omega = (1 - lam) * rho + lam * rt
    na = [at, np.kron(eye, rt) - at]
    nb = [bt, np.kron(eye, st) - bt]
    abar1 = (1 - lam) * _arr(a.elements[0]) + lam * at
    bbar1 = (1 - lam) * _arr(b.elements[0]) + lam * bt
    joint = [c, abar1 - c, bbar1 - c, np.kron(eye, omega) - abar1 - bbar1 + c]
    return na, nb, joint, omega


def tester_robustness_two_outcome(a: Tester, b: Tester, feas_tol: float = sdp.FEAS_TOL,
                                  use_shortcuts: bool = True) -> RobustnessResult:
    """Robustness of incompatibility of two two-outcome testers.

    Exact shortcuts (compatible, jointly diagonal, comparable, pure shared
    normalization) are tried before the linearized SDP. ``use_shortcuts=False``
    forces the SDP, which is how the shortcuts are regression-tested.
    """
    _require_two_outcome(a, b)
    rho, sig = _arr(a.normalization), _arr(b.normalization)
    st = state_robustness(rho, sig)
    same = trace_norm(rho - sig) <= SAME_STATE_TOL

    if use_shortcuts:
        if same:
            verdict = tester_compatibility([a, b], feas_tol=feas_tol)
            if verdict.compatible:
                return _self_pair(a, b, verdict, "closed-form")
        flags = structural_predicates(a, b)
        if flags.jointly_diagonal and st.lam >= TRIVIAL_LAMBDA:
            na, nb, joint = _jointly_diagonal_witness(a, b, st)
            return _tester_result(a, b, st.lam, "closed-form", na, nb, joint, st.omega, st.rho_tilde,
                                  st.sigma_tilde, shortcut="jointly-diagonal", state_lower=st.lam)
        if flags.comparable and st.lam >= TRIVIAL_LAMBDA:
            na, nb, joint = _comparable_witness(a, b, st, flags.comparable_pair)
            return _tester_result(a, b, st.lam, "closed-form", na, nb, joint, st.omega, st.rho_tilde,
                                  st.sigma_tilde, shortcut="comparable", state_lower=st.lam)
        if same and _is_pure(rho):
            lam, na, nb, joint, omega, det = _pure_normalization_result(a, b, feas_tol)
            return _tester_result(a, b, lam, "sdp", na, nb, joint, omega, rho, rho,
                                  shortcut="pure-normalization", state_lower=st.lam, **det)
    elif same:
        verdict = tester_compatibility([a, b], feas_tol=feas_tol)
        if verdict.compatible:
            return _self_pair(a, b, verdict, "sdp")

    prob = _linearized_problem(a, b)
    sol = sdp.solve(prob, feas_tol=feas_tol)
    if not sol.ok:
        raise SdpFailure(f"tester robustness SDP: {sol.status} ({sol.message})", sol)
    mu = sol.scalar_values["mu"]
    lam = 1.0 / (1.0 + mu)
    if lam < st.lam - SANDWICH_TOL or lam > 0.5 + SANDWICH_TOL:
        raise SdpFailure(f"robustness {lam:.9f} escapes [{st.lam:.9f}, 0.5]", sol)
    bv = sol.block_values
    na, nb, joint, omega = _witness_from_tilde(a, b, lam, lam * bv["H"], bv["At"], bv["Bt"],
                                               bv["rho_t"], bv["sigma_t"])
    return _tester_result(a, b, lam, "sdp", na, nb, joint, omega, bv["rho_t"], bv["sigma_t"], mu=mu,
                          state_lower=st.lam, iterations=sol.iterations,
                          primal_residual=sol.primal_residual, duality_gap=sol.duality_gap)


def lambda_feasibility_problem(a: Tester, b: Tester, lam: float, equal_noise: bool = False):
    """Linear feasibility problem for lam-compatibility at a fixed lam.

    With ``equal_noise`` the two noise testers are forced to coincide.
    """
    _require_two_outcome(a, b)
    a1, b1 = _arr(a.elements[0]), _arr(b.elements[0])
    rho, sig = _arr(a.normalization), _arr(b.normalization)
    d1, d0 = a.dims
    n = d1 * d0
    eye1 = np.eye(d1)
    kind = "real" if _is_real([a1, b1, rho, sig]) else "complex"
    p = sdp.SdpProblem(f"lambda-compatibility({lam:.9f})")
    c = p.block("C", n, kind)
    at = p.block("At", n, kind)
    rt = p.block("rho_t", d0, kind)
    if equal_noise:
        bt, st = at, rt
    else:
        bt = p.block("Bt", n, kind)
        st = p.block("sigma_t", d0, kind)
    abar = (1 - lam) * a1 + lam * at
    bbar = (1 - lam) * b1 + lam * bt
    omega = (1 - lam) * rho + lam * rt
    p.add_psd(sdp.kron(eye1, rt) - at, "At <= I(x)rho_t")
    if not equal_noise:
        p.add_psd(sdp.kron(eye1, st) - bt, "Bt <= I(x)sigma_t")
        p.add_zero(sdp.trace(st) - 1.0, "tr sigma_t = 1")
    p.add_zero(sdp.trace(rt) - 1.0, "tr rho_t = 1")
    p.add_zero((1 - lam) * (rho - sig) - lam * (st - rt), "common normalization")
    p.add_psd(abar - c, "C <= A1bar")
    p.add_psd(bbar - c, "C <= B1bar")
    p.add_psd(c + sdp.kron(eye1, omega) - abar - bbar, "A1bar + B1bar <= C + I(x)omega")
    return p


def _feasible_at(a, b, lam, threshold, equal_noise=False):
    res = sdp.feasibility(lambda_feasibility_problem(a, b, lam, equal_noise))
    return res.margin >= threshold, res


def tester_robustness_bisection(a: Tester, b: Tester, tol: float = BISECTION_TOL,
                                threshold: float = BISECTION_THRESHOLD) -> RobustnessResult:
    """Bisection on lam in [state lower bound, 1/2] with a fixed-lam feasibility SDP.

    Independent of the linearized program; the reported lam is the smallest
    feasible end of the final bracket.
    """
    if tol < 1e-6:
        raise ValueError(f"bisection tolerance must be at least 1e-6, got {tol}")
    _require_two_outcome(a, b)
    lo = state_robustness(a.normalization, b.normalization).lam
    hi = 0.5
    steps = 0
    ok, best = _feasible_at(a, b, lo, threshold)
    if ok:
        hi = lo
    else:
        ok_hi, best = _feasible_at(a, b, hi, threshold)
        if not ok_hi:
            raise SdpFailure("lambda = 1/2 reported infeasible", best.solution)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            ok, res = _feasible_at(a, b, mid, threshold)
            steps += 1
            if ok:
                hi, best = mid, res
            else:
                lo = mid
    bv = best.solution.block_values
    lam = hi
    c, at, bt = bv["C"], bv["At"], bv["Bt"]
    rt, st = bv["rho_t"], bv["sigma_t"]
    na, nb, joint, omega = _witness_from_tilde(a, b, lam, c, at, bt, rt, st)
    if lam < TRIVIAL_LAMBDA:
        verdict = tester_compatibility([a, b])
        if verdict.compatible:
            return _self_pair(a, b, verdict, "bisection")
    return _tester_result(a, b, lam, "bisection", na, nb, joint, omega, rt, st, steps=steps,
                          margin=best.margin, bracket=(lo, hi))


def equal_noise_feasible(a: Tester, b: Tester, lam: float) -> bool:
    """Whether adding the same noise tester to both makes them compatible at lam."""
    ok, _ = _feasible_at(a, b, lam, BISECTION_THRESHOLD, equal_noise=True)
    return ok


def tester_robustness(a: Tester, b: Tester, **kw) -> RobustnessResult:
    return tester_robustness_two_outcome(a, b, **kw)


def tester_robustness_experimental(testers: Sequence[Tester],
                                   feas_tol: float = sdp.FEAS_TOL) -> RobustnessResult:
    """Joint robustness of more than two testers (experimental).

    Linearized like the pairwise program: H over joint outcomes, unscaled
    noise elements Nt^x_j >= 0 summing to I (x) rho_t^x, and a common
    normalization mu rho^x + rho_t^x for every x. The result stores all noise
    testers in ``details["noise"]``.
    """
    testers = list(testers)
    if len(testers) < 2:
        raise ValidationError("need at least two testers")
    _check_same_signature(testers)
    d1, d0 = testers[0].dims
    n = d1 * d0
    eye1 = np.eye(d1)
    data = [[_arr(e) for e in t.elements] for t in testers]
    rhos = [_arr(t.normalization) for t in testers]
    kind = "real" if _is_real([x for els in data for x in els] + rhos) else "complex"
    p = sdp.SdpProblem("tester-robustness-multi")
    mu = p.scalar("mu")
    combos = list(itertools.product(*[range(len(t)) for t in testers]))
    h = {c: p.block("H" + "_".join(map(str, c)), n, kind) for c in combos}
    nt = [[p.block(f"N{x}_{j}", n, kind) for j in range(len(t))] for x, t in enumerate(testers)]
    rt = [p.block(f"rho_t{x}", d0, kind) for x in range(len(testers))]
    for x, t in enumerate(testers):
        p.add_zero(sdp.trace(rt[x]) - 1.0, f"tr rho_t{x} = 1")
        p.add_zero(_sum(nt[x]) - sdp.kron(eye1, rt[x]), f"noise {x} normalization")
        for j in range(len(t)):
            marg = _sum(h[c] for c in combos if c[x] == j)
            p.add_zero(marg - mu * data[x][j] - nt[x][j], f"marginal {x}:{j}")
        if x:
            p.add_zero(mu * (rhos[x] - rhos[0]) + rt[x] - rt[0], f"common normalization {x}")
    p.add_psd(MU_CAP - mu, "mu cap")
    p.maximize(mu)
    sol = sdp.solve(p, feas_tol=feas_tol)
    if not sol.ok:
        raise SdpFailure(f"multi-tester robustness SDP: {sol.status} ({sol.message})", sol)
    mu_v = sol.scalar_values["mu"]
    lam = 1.0 / (1.0 + mu_v)
    bv = sol.block_values
    noise = [[_herm(bv[f"N{x}_{j}"]) for j in range(len(t))] for x, t in enumerate(testers)]
    joint = [_herm(lam * bv["H" + "_".join(map(str, c))]) for c in combos]
    omega = (1 - lam) * rhos[0] + lam * bv["rho_t0"]
    trivial = 1.0 - 1.0 / len(testers)
    return RobustnessResult(lam, "tester", "sdp", testers[0], testers[1], noise[0], noise[1], joint,
                            _herm(omega), _herm(bv["rho_t0"]), _herm(bv["rho_t1"]),
                            details={"experimental": True, "testers": testers, "noise": noise,
                                     "mu": mu_v, "trivial_upper": trivial})


# ------------------------------------------------------------------ bounds

def helstrom_success(theta_1, theta_2) -> float:
    """Optimal equal-prior success probability for telling two operators apart."""
    return 0.5 * (1.0 + 0.5 * trace_norm(_herm(theta_1) - _herm(theta_2)))


def bounds(a: Tester, b: Tester) -> BoundReport:
    _check_same_signature([a, b])
    rho, sig = _arr(a.normalization), _arr(b.normalization)
    lower = state_robustness(rho, sig).lam
    report = BoundReport(lower, 0.5)
    if trace_norm(rho - sig) <= SAME_STATE_TOL:
        povms, _ = canonical_povms_on_support([a, b], a.normalization)
        r = povms[0][0].shape[0]
        dims = (a.d1, r // a.d1)
        p = Povm(a.outcomes, tuple(Operator(e, dims) for e in povms[0]))
        q = Povm(b.outcomes, tuple(Operator(e, dims) for e in povms[1]))
        report.measurement_upper = measurement_robustness(p, q).lam
    report.discrimination_lower = discrimination_bound_from_psucc(2, helstrom_success(rho, sig))
    return report


def discrimination_bound_from_psucc(n_set: int, p_succ: float) -> float:
    upper = 1.0 - 1.0 / n_set
    val = 1.0 - 1.0 / (n_set * p_succ)
    return float(min(max(val, 0.0), upper))


def _success_probability_sdp(thetas: Sequence[np.ndarray]) -> float:
    d = thetas[0].shape[0]
    kind = "real" if _is_real(thetas) else "complex"
    p = sdp.SdpProblem("state-discrimination")
    ms = [p.block(f"M{x}", d, kind) for x in range(len(thetas))]
    p.add_zero(_sum(ms) - np.eye(d), "sum M = I")
    obj = _sum(sdp.trace(m @ th) for m, th in zip(ms, thetas)) * (1.0 / len(thetas))
    p.maximize(obj)
    sol = sdp.solve(p)
    if not sol.ok:
        raise SdpFailure(f"discrimination SDP: {sol.status} ({sol.message})", sol)
    return sol.objective_value


def nteste_discrimination_bound(testers: Sequence, p_succ: Optional[float] = None) -> float:
    """Lower bound 1 - 1/(|X| p_succ) on the joint robustness of a tester set.

    At N = 1 the success probability is computed from the normalizations
    (Helstrom for two, an SDP otherwise); for N >= 2 it must be supplied.
    """
    testers = list(testers)
    if len(testers) < 2:
        raise ValidationError("need at least two testers")
    nts = [t if isinstance(t, NTester) else None for t in testers]
    steps = {t.steps if isinstance(t, NTester) else 1 for t in testers}
    if len(steps) != 1:
        raise DimensionError("testers have different numbers of steps")
    steps = steps.pop()
    if p_succ is None:
        if steps != 1:
            raise ValueError("p_succ must be supplied for testers with two or more steps")
        thetas = [_arr(t.theta if nt is not None else t.normalization) for t, nt in zip(testers, nts)]
        if len(thetas) == 2:
            p_succ = helstrom_success(*thetas)
        else:
            p_succ = _success_probability_sdp([_herm(th) for th in thetas])
    if not 0.0 < p_succ <= 1.0 + 1e-12:
        raise ValueError(f"p_succ must lie in (0, 1], got {p_succ}")
    return discrimination_bound_from_psucc(len(testers), p_succ)


discrimination_bound = nteste_discrimination_bound


# ------------------------------------------------------------------ replay

def replay_witness(result: RobustnessResult, psd_tol: float = REPLAY_PSD_TOL) -> Dict[str, object]:
    """Re-check a witness without trusting the solver that produced it.

    Builds the noisy mixtures, validates them as testers/POVMs, checks the
    joint object directly against them and finally asks the compatibility
    checker for an independent verdict.
    """
    if result.kind == "state":
        ma, mb = result.mixtures()
        resid = float(np.max(np.abs(ma - mb)))
        rt_ok = all(eigenvalues(_herm(m))[-1] >= -psd_tol and abs(np.trace(m).real - 1) <= 1e-9
                    for m in (result.rho_tilde, result.sigma_tilde))
        return {"compatible": bool(resid <= STATE_EQ_TOL and rt_ok), "residual": resid}
    ma, mb = result.mixtures()
    if result.kind == "povm":
        pa = validate_povm([Operator(m) for m in ma], result.a.outcomes, psd_tol=psd_tol)
        pb = validate_povm([Operator(m) for m in mb], result.b.outcomes, psd_tol=psd_tol)
        direct = verify_joint(result.joint, [ma, mb], psd_tol=psd_tol)
        verdict = povm_compatibility([pa, pb])
    else:
        dims = result.a.dims
        ta, _ = validate_tester([Operator(m, dims) for m in ma], result.a.outcomes, psd_tol=psd_tol)
        tb, _ = validate_tester([Operator(m, dims) for m in mb], result.b.outcomes, psd_tol=psd_tol)
        direct = verify_joint(result.joint, [ma, mb], psd_tol=psd_tol)
        verdict = tester_compatibility([ta, tb])
    return {"compatible": bool(direct["ok"] and verdict.compatible), "direct": direct,
            "checker": verdict.compatible, "checker_method": verdict.method}


__all__ = [
    "RobustnessResult", "BoundReport", "state_robustness", "measurement_robustness", "cloning_bound",
    "tester_robustness_two_outcome", "tester_robustness_bisection", "tester_robustness",
    "tester_robustness_experimental", "lambda_feasibility_problem", "equal_noise_feasible",
    "bounds", "helstrom_success", "nteste_discrimination_bound", "discrimination_bound",
    "replay_witness",
]
