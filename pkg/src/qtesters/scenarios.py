"""Worked examples: polarization testers, region M, named testers and sweeps."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from qtesters.errors import SdpFailure, ValidationError
from qtesters.linalg import Operator, eigenvalues, projector, spectral_decompose, tensor
from qtesters.objects import Povm, Tester, make_tester, validate_povm
from qtesters.robustness import (RobustnessResult, bounds, measurement_robustness, state_robustness,
                                 tester_robustness_two_outcome)

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
I2 = np.eye(2, dtype=np.complex128)
REGION_SLACK = 1e-12
WITNESS_TOL = 1e-9
EFFECT_TOL = 1e-9

# polarization kets, vertical = |0>
KET_V = np.array([1, 0], dtype=np.complex128)
KET_H = np.array([0, 1], dtype=np.complex128)
KET_D = np.array([1, 1], dtype=np.complex128) / math.sqrt(2)
KET_A = np.array([1, -1], dtype=np.complex128) / math.sqrt(2)
KET_R = np.array([1, 1j], dtype=np.complex128) / math.sqrt(2)
KET_L = np.array([1, -1j], dtype=np.complex128) / math.sqrt(2)

CSV_HEADER = "theta,phi,in_m,lambda_state_bound,lambda_closed_form,lambda_sdp,lambda_measurement_upper"


class OutsideRegionError(ValidationError):
    """Parameters outside the admissible range or outside region M."""


class WitnessCheckError(RuntimeError):
    """An analytic witness failed one of its positivity or identity checks."""


def p_alpha(alpha: float) -> np.ndarray:
    """P_alpha = (I + sin(alpha) sigma_x + cos(alpha) sigma_z) / 2."""
    return 0.5 * (I2 + math.sin(alpha) * SX + math.cos(alpha) * SZ)


def beta_ket(beta: float) -> np.ndarray:
    """|beta> = cos(beta/2)|0> + sin(beta/2)|1>, so that |beta><beta| = P_beta."""
    return np.array([math.cos(beta / 2), math.sin(beta / 2)], dtype=np.complex128)


def _check_angles(theta, phi):
    for name, v in (("theta", theta), ("phi", phi)):
        if not (0.0 <= v <= math.pi + 1e-12) or not math.isfinite(v):
            raise OutsideRegionError(f"{name} = {v} is outside [0, pi]")


@dataclass(frozen=True)
class PolarizationPair:
    theta: float
    phi: float
    a: Tester
    b: Tester

    @property
    def testers(self):
        return self.a, self.b


def polarization_pair(theta: float, phi: float) -> PolarizationPair:
    """Input polarizations at -/+ theta/4 and output filters at -/+ phi/4."""
    _check_angles(theta, phi)
    rho, sigma = p_alpha(-theta / 2), p_alpha(theta / 2)
    a = make_tester([np.kron(p_alpha(-phi / 2), rho), np.kron(p_alpha(math.pi - phi / 2), rho)],
                    dims=(2, 2))
    b = make_tester([np.kron(p_alpha(phi / 2), sigma), np.kron(p_alpha(phi / 2 - math.pi), sigma)],
                    dims=(2, 2))
    return PolarizationPair(float(theta), float(phi), a, b)


def region_m(theta: float, phi: float) -> Tuple[bool, Optional[float]]:
    """Membership in M and, for members, the closed-form robustness."""
    _check_angles(theta, phi)
    s = math.sin(theta / 2)
    sp = math.sin(phi)
    member = s >= sp / (2 + sp) - REGION_SLACK
    return member, (s / (1 + s) if member else None)


# ------------------------------------------------------------ region M witness

@dataclass
class RegionMWitness:
    theta: float
    phi: float
    lam: float
    delta: float
    noise_a: List[np.ndarray]
    noise_b: List[np.ndarray]
    rho_tilde: np.ndarray
    sigma_tilde: np.ndarray
    omega: np.ndarray
    c: np.ndarray
    joint: List[np.ndarray]          # C11, C12, C21, C22
    checks: Dict[str, float] = field(default_factory=dict)
    pair: Optional[PolarizationPair] = None

    def robustness_result(self) -> RobustnessResult:
        return RobustnessResult(self.lam, "tester", "closed-form", self.pair.a, self.pair.b,
                                list(self.noise_a), list(self.noise_b), list(self.joint), self.omega,
                                self.rho_tilde, self.sigma_tilde, "region-m",
                                {"delta": self.delta, "checks": dict(self.checks)})


def _min_eig(m) -> float:
    m = np.asarray(m)
    return float(eigenvalues(0.5 * (m + m.conj().T))[-1])


def region_m_witness(theta: float, phi: float, tol: float = WITNESS_TOL) -> RegionMWitness:
    """Analytic noise testers and joint tester achieving the state bound inside M.

    Every inequality and identity used in the argument is checked numerically;
    ``checks`` holds the smallest eigenvalues and residuals. A failed check
    raises WitnessCheckError.
    """
    member, lam = region_m(theta, phi)
    if not member:
        raise OutsideRegionError(f"(theta, phi) = ({theta}, {phi}) is not in region M")
    pair = polarization_pair(theta, phi)
    s = math.sin(theta / 2)
    # the noise weight vanishes at s = 0, where delta plays no role
    delta = 0.0 if s == 0 else -math.sin(phi) / 2 * (1 - s) / s
    rt, st = p_alpha(math.pi / 2), p_alpha(-math.pi / 2)
    rho, sigma = p_alpha(-theta / 2), p_alpha(theta / 2)
    n1a = np.kron((1 - delta) / 2 * p_alpha((phi + math.pi) / 2)
                  + (1 + delta) / 2 * p_alpha((phi - math.pi) / 2), rt)
    n1b = np.kron((1 - delta) / 2 * p_alpha(-(phi + math.pi) / 2)
                  + (1 + delta) / 2 * p_alpha(-(phi - math.pi) / 2), st)
    noise_a = [n1a, np.kron(I2, rt) - n1a]
    noise_b = [n1b, np.kron(I2, st) - n1b]
    omega = (1 - lam) / 2 * (rho + sigma) + lam / 2 * I2

    a_coef = math.cos(phi / 2) ** 2 + math.sin(phi / 2) ** 2 * s
    b_coef = math.cos(phi / 2) * math.cos(theta / 2)
    v1 = np.kron(beta_ket(phi / 2), beta_ket(math.pi / 2))
    v2 = np.kron(beta_ket(-phi / 2), beta_ket(-math.pi / 2))
    c = (1 - lam) / 2 * (a_coef * (np.outer(v1, v1) + np.outer(v2, v2))
                         + b_coef * (np.outer(v1, v2) + np.outer(v2, v1)))

    a1, b1 = pair.a.elements[0].data, pair.b.elements[0].data
    abar1 = (1 - lam) * a1 + lam * n1a
    bbar1 = (1 - lam) * b1 + lam * n1b
    iw = np.kron(I2, omega)
    joint = [c, abar1 - c, bbar1 - c, iw + c - abar1 - bbar1]

    checks = {}
    checks["noise_a"] = min(_min_eig(n) for n in noise_a)
    checks["noise_b"] = min(_min_eig(n) for n in noise_b)
    checks["C"] = _min_eig(c)
    checks["A1bar - C"] = _min_eig(abar1 - c)
    checks["B1bar - C"] = _min_eig(bbar1 - c)
    checks["C + I(x)omega - A1bar - B1bar"] = _min_eig(joint[3])
    checks["matg"] = (1 - lam) / 2 * (a_coef - abs(b_coef))

    # reduced 2x2 matrix of A1bar - C in the basis v1..v4 (printed kets, real amplitudes);
    # the (2, 2) entry evaluates to x, the printed z is checked for positivity only
    sx_sz = np.kron(SX, SZ)
    v3 = np.kron(beta_ket(phi / 2 - math.pi), beta_ket(math.pi / 2))
    v4 = np.kron(beta_ket(math.pi - phi / 2), beta_ket(-math.pi / 2))
    basis = np.column_stack([v1, v2, v3, v4])
    rep = basis.conj().T @ (abar1 - c) @ basis
    x = 0.5 * (1 - a_coef / (1 + s))
    y = math.sin(phi / 2) * math.cos(theta / 2) / (2 * (1 + s))
    z = 0.5 * (1 - math.sin(phi / 2) ** 2 * s / (1 + s))
    expected = np.zeros((4, 4))
    expected[1, 1], expected[1, 2], expected[2, 1], expected[2, 2] = x, y, y, x
    checks["basis residual"] = float(np.max(np.abs(rep - expected)))
    checks["W"] = _min_eig(np.array([[x, y], [y, x]]))
    checks["W printed"] = _min_eig(np.array([[x, y], [y, z]]))

    # D = Q D Q + Q' D Q' = C - S C S
    d_op = abar1 + bbar1 - iw
    q = np.kron(p_alpha(phi / 2), rt) + np.kron(p_alpha(-phi / 2), st)
    qp = np.eye(4) - q
    checks["D block residual"] = float(np.max(np.abs(d_op - q @ d_op @ q - qp @ d_op @ qp)))
    checks["D residual"] = float(np.max(np.abs(d_op - (c - sx_sz @ c @ sx_sz))))
    checks["v3, v4 residual"] = float(max(np.max(np.abs(v3 + sx_sz @ v2)), np.max(np.abs(v4 - sx_sz @ v1))))
    t_op = np.kron(SZ, SZ)
    checks["TCT residual"] = float(np.max(np.abs(t_op @ c @ t_op - c)))
    checks["TAT residual"] = float(np.max(np.abs(t_op @ abar1 @ t_op - bbar1)))
    # the mixed normalizations must agree with omega
    checks["omega residual"] = float(max(np.max(np.abs((1 - lam) * rho + lam * rt - omega)),
                                         np.max(np.abs((1 - lam) * sigma + lam * st - omega))))

    positive = ["noise_a", "noise_b", "C", "A1bar - C", "B1bar - C", "C + I(x)omega - A1bar - B1bar",
                "matg", "W", "W printed"]
    residual = ["basis residual", "v3, v4 residual", "D block residual", "D residual", "TCT residual", "TAT residual",
                "omega residual"]
    bad = [k for k in positive if checks[k] < -tol] + [k for k in residual if checks[k] > tol]
    if bad:
        raise WitnessCheckError(f"region M witness failed at ({theta}, {phi}): "
                                + ", ".join(f"{k}={checks[k]:.3e}" for k in bad))
    return RegionMWitness(float(theta), float(phi), lam, delta, noise_a, noise_b, rt, st, omega, c,
                          joint, checks, pair)


# ------------------------------------------------------- extremal decomposition

@dataclass(frozen=True)
class ExtremalDecomposition:
    """e1 = sum_a c_a E^a with E^a in {0, |u1><u1|, |u2><u2|, I}."""

    coefficients: Tuple[float, float, float, float]
    effects: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    eigenvalues: Tuple[float, float]

    def reconstruct(self) -> np.ndarray:
        return sum(c * e for c, e in zip(self.coefficients, self.effects))


def extremal_povm_decomposition(e1, tol: float = EFFECT_TOL) -> ExtremalDecomposition:
    """Convex weights of a qubit effect over the four extremal two-outcome POVMs.

    With eigenvalues e_a >= e_b the weights are (1 - e_a, e_a - e_b, 0, e_b);
    the projector weights share no common part, which fixes the choice.
    """
    m = np.asarray(e1.data if isinstance(e1, Operator) else e1, dtype=np.complex128)
    if m.shape != (2, 2):
        raise ValidationError(f"expected a qubit effect, got shape {m.shape}")
    w, u = spectral_decompose(m)
    if w[-1] < -tol or w[0] > 1 + tol:
        raise ValidationError(f"effect eigenvalues {w} fall outside [0, 1]")
    ea, eb = (float(min(max(x, 0.0), 1.0)) for x in w)
    low = min(ea, eb)
    coeffs = (1.0 - max(ea, eb), ea - low, eb - low, low)
    u1, u2 = u[:, 0], u[:, 1]
    effects = (np.zeros((2, 2), dtype=np.complex128), np.outer(u1, u1.conj()),
               np.outer(u2, u2.conj()), I2.copy())
    return ExtremalDecomposition(coeffs, effects, (ea, eb))


# ------------------------------------------------------------ named testers

def _fourier_basis(d: int) -> List[np.ndarray]:
    j = np.arange(d)
    return [np.exp(2j * np.pi * j * k / d) / math.sqrt(d) for k in range(d)]


def t_v() -> Tester:
    v, h = projector(KET_V), projector(KET_H)
    return make_tester([tensor(v, v), tensor(h, v)], ["V", "H"])


def t_h() -> Tester:
    v, h = projector(KET_V), projector(KET_H)
    return make_tester([tensor(h, h), tensor(v, h)], ["H", "V"])


def tomography_povm() -> Povm:
    kets = [KET_V, KET_H, KET_D, KET_A, KET_R, KET_L]
    return validate_povm([projector(k) / 3 for k in kets], ["V", "H", "D", "A", "R", "L"])


def unitality_tester() -> Tester:
    """Maximally mixed input with the six-outcome polarization POVM on the output."""
    pv = tomography_povm()
    return make_tester([tensor(p, Operator(I2 / 2)) for p in pv.elements], pv.outcomes)


def entangled_tester(d: int = 2) -> Tester:
    """T1 = |Phi+><Phi+|/d, T2 = (I - |Phi+><Phi+|)/d."""
    phi = np.eye(d, dtype=np.complex128).reshape(-1) / math.sqrt(d)
    proj = np.outer(phi, phi.conj())
    return make_tester([proj / d, (np.eye(d * d) - proj) / d], ["pass", "fail"], dims=(d, d))


def classical_ancilla_example() -> Tester:
    """Two probes chosen by a fair coin: |V> read in the V/H basis, |D> read in D/A."""
    probes = [(0.5, KET_V, [KET_V, KET_H], ["0:V", "0:H"]),
              (0.5, KET_D, [KET_D, KET_A], ["1:D", "1:A"])]
    elements, labels = [], []
    for q, probe, outs, names in probes:
        for ket, name in zip(outs, names):
            elements.append(q * np.kron(projector(ket).data, projector(probe).data))
            labels.append(name)
    return make_tester(elements, labels, dims=(2, 2))


def mub_testers(d0: int, d1: int) -> Tuple[Tester, Tester]:
    """A_j = |j><j|/d0 and B_k = |e_k><e_k|/d0 on H1 (x) H0 with the Fourier basis e_k."""
    if d0 < 1 or d1 < 1:
        raise ValidationError(f"dimensions must be positive, got ({d0}, {d1})")
    d = d0 * d1
    eye = np.eye(d, dtype=np.complex128)
    a = make_tester([np.outer(eye[j], eye[j]) / d0 for j in range(d)], dims=(d1, d0))
    b = make_tester([np.outer(e, e.conj()) / d0 for e in _fourier_basis(d)], dims=(d1, d0))
    return a, b


def mub_povms(d: int) -> Tuple[Povm, Povm]:
    """Projective measurements in the computational and Fourier bases."""
    eye = np.eye(d, dtype=np.complex128)
    return (validate_povm([np.outer(eye[j], eye[j]) for j in range(d)]),
            validate_povm([np.outer(e, e.conj()) for e in _fourier_basis(d)]))


def mub_conjecture_bound(d0: int, d1: int) -> float:
    """(1 - 1/sqrt(d0 d1)) / 2: robustness of the canonical MUB pair (a computed bound only)."""
    return 0.5 * (1.0 - 1.0 / math.sqrt(d0 * d1))


def busch(p: float, q: float) -> Tuple[Povm, Povm]:
    """Unsharp V/H and D/A polarization measurements with sharpness p and q."""
    for name, v in (("p", p), ("q", q)):
        if not 0.0 <= v <= 1.0:
            raise ValidationError(f"sharpness {name} = {v} is outside [0, 1]")
    p1 = (1 + p) / 2 * projector(KET_V).data + (1 - p) / 2 * projector(KET_H).data
    q1 = (1 + q) / 2 * projector(KET_D).data + (1 - q) / 2 * projector(KET_A).data
    return (validate_povm([p1, I2 - p1], ["V", "H"]), validate_povm([q1, I2 - q1], ["D", "A"]))


NAMED = {
    "t_v": t_v, "t_h": t_h, "unitality": unitality_tester, "entangled": entangled_tester,
    "classical_ancilla_example": classical_ancilla_example, "mub_testers": mub_testers, "mub_povms": mub_povms,
    "busch": busch, "tomography_povm": tomography_povm,
}


def named_testers(name: str, *params):
    """Look up a named example; parametrized ones take their parameters positionally."""
    key = name.strip().lower().replace("-", "_")
    if key not in NAMED:
        raise ValidationError(f"unknown example {name!r}; known: {', '.join(sorted(NAMED))}")
    return NAMED[key](*params)


# ------------------------------------------------------------------- sweeps

@dataclass
class SweepRow:
    theta: float
    phi: float
    in_m: bool
    lambda_state_bound: float
    lambda_closed_form: Optional[float]
    lambda_sdp: Optional[float]
    lambda_measurement_upper: Optional[float]
    error: Optional[str] = None

    def csv(self) -> str:
        def f(v):
            return "" if v is None else f"{v + 0.0:.6f}"
        return ",".join([f(self.theta), f(self.phi), "true" if self.in_m else "false",
                         f(self.lambda_state_bound), f(self.lambda_closed_form), f(self.lambda_sdp),
                         f(self.lambda_measurement_upper)])


def sweep_point(theta: float, phi: float) -> SweepRow:
    member, closed = region_m(theta, phi)
    pair = polarization_pair(theta, phi)
    state = state_robustness(pair.a.normalization, pair.b.normalization).lam
    row = SweepRow(float(theta), float(phi), member, state, closed, None, None)
    try:
        row.lambda_sdp = tester_robustness_two_outcome(pair.a, pair.b, use_shortcuts=False).lam
        if theta == 0:
            row.lambda_measurement_upper = bounds(pair.a, pair.b).measurement_upper
    except (SdpFailure, ValidationError) as exc:
        row.error = str(exc)
    return row


def _point(args):
    return sweep_point(*args)


def default_grid(steps: int = 17) -> np.ndarray:
    return np.linspace(0.0, math.pi, steps)


def sweep(theta_grid: Sequence[float] = None, phi_grid: Sequence[float] = None,
          workers: int = 1) -> List[SweepRow]:
    """Robustness table over a (theta, phi) grid, theta-major.

    Rows are independent; ``workers > 1`` evaluates them in a process pool
    and keeps the grid order.
    """
    theta_grid = default_grid() if theta_grid is None else theta_grid
    phi_grid = default_grid() if phi_grid is None else phi_grid
    points = [(float(t), float(p)) for t in theta_grid for p in phi_grid]
    for t, p in points:
        _check_angles(t, p)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_point, points))
    return [sweep_point(t, p) for t, p in points]


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    return "\n".join([CSV_HEADER] + [r.csv() for r in rows]) + "\n"


__all__ = [
    "p_alpha", "beta_ket", "PolarizationPair", "polarization_pair", "region_m", "RegionMWitness",
    "region_m_witness", "ExtremalDecomposition", "extremal_povm_decomposition", "named_testers",
    "t_v", "t_h", "unitality_tester", "entangled_tester", "classical_ancilla_example", "mub_testers",
    "mub_povms", "mub_conjecture_bound", "busch", "tomography_povm", "SweepRow", "sweep", "sweep_point",
    "sweep_csv", "CSV_HEADER", "default_grid", "OutsideRegionError", "WitnessCheckError",
]
