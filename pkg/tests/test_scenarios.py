import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import rand_effect
from qtesters import scenarios as sc
from qtesters.compat import povm_compatibility, tester_compatibility
from qtesters.errors import SdpFailure, ValidationError
from qtesters.linalg import trace_norm
from qtesters.objects import ancilla_free_decomposition, canonical_povm
from qtesters.robustness import replay_witness, tester_robustness_two_outcome

seeds = st.integers(min_value=0, max_value=2**32 - 1)
S45 = math.sin(math.pi / 4) / (1 + math.sin(math.pi / 4))


def in_m_point(u, v):
    """Map the unit square onto region M (phi first, then theta above the boundary)."""
    phi = math.pi * v
    s_min = math.sin(phi) / (2 + math.sin(phi))
    s = s_min + (1 - s_min) * u
    return 2 * math.asin(min(s, 1.0)), phi


class TestPolarization:
    def test_p_alpha(self):
        assert np.allclose(sc.p_alpha(0.0), np.diag([1, 0]))
        assert np.allclose(sc.p_alpha(math.pi), np.diag([0, 1]))
        b = sc.beta_ket(0.7)
        assert np.allclose(np.outer(b, b), sc.p_alpha(0.7))

    def test_orthogonal_normalizations(self):
        pair = sc.polarization_pair(math.pi, math.pi)
        rho, sig = pair.a.normalization.data, pair.b.normalization.data
        assert np.allclose(rho @ sig, 0)
        assert np.allclose(rho @ rho, rho)

    def test_equal_normalizations(self):
        pair = sc.polarization_pair(0.0, 1.3)
        assert np.array_equal(pair.a.normalization.data, pair.b.normalization.data)

    def test_trace_distance(self):
        pair = sc.polarization_pair(math.pi / 2, math.pi / 2)
        d = trace_norm(pair.a.normalization - pair.b.normalization)
        assert d == pytest.approx(2 * math.sin(math.pi / 4), abs=1e-12)

    def test_elements(self):
        theta, phi = 0.9, 1.7
        pair = sc.polarization_pair(theta, phi)
        a1 = np.kron(sc.p_alpha(-phi / 2), sc.p_alpha(-theta / 2))
        b1 = np.kron(sc.p_alpha(phi / 2), sc.p_alpha(theta / 2))
        assert np.allclose(pair.a.elements[0].data, a1)
        assert np.allclose(pair.b.elements[0].data, b1)

    @pytest.mark.parametrize("theta,phi", [(-0.1, 0.0), (0.0, 3.2), (math.nan, 1.0)])
    def test_range(self, theta, phi):
        with pytest.raises(ValidationError):
            sc.polarization_pair(theta, phi)


class TestRegionM:
    def test_member(self):
        member, lam = sc.region_m(math.pi / 2, math.pi / 2)
        assert member and lam == pytest.approx(S45, abs=1e-12)

    def test_non_member(self):
        assert sc.region_m(0.1, math.pi / 2) == (False, None)

    @pytest.mark.parametrize("theta", [0.0, 0.3, math.pi])
    def test_phi_zero(self, theta):
        assert sc.region_m(theta, 0.0)[0]


class TestWitness:
    def test_center(self):
        w = sc.region_m_witness(math.pi / 2, math.pi / 2)
        assert w.lam == pytest.approx(S45, abs=1e-12)
        assert replay_witness(w.robustness_result())["compatible"]

    @pytest.mark.parametrize("phi", [0.0, 0.8, math.pi / 2, math.pi])
    def test_theta_pi(self, phi):
        w = sc.region_m_witness(math.pi, phi)
        assert w.delta == pytest.approx(0.0, abs=1e-15)
        rt, st = sc.p_alpha(math.pi / 2), sc.p_alpha(-math.pi / 2)
        for n in w.noise_a:
            assert np.allclose(n, np.kron(np.trace(n.reshape(2, 2, 2, 2), axis1=1, axis2=3), rt))
        for n in w.noise_b:
            assert np.allclose(n, np.kron(np.trace(n.reshape(2, 2, 2, 2), axis1=1, axis2=3), st))

    def test_boundary(self):
        phi = 1.1
        s = math.sin(phi) / (2 + math.sin(phi))
        w = sc.region_m_witness(2 * math.asin(s), phi)
        assert abs(w.checks["matg"]) <= 1e-7

    def test_outside(self):
        with pytest.raises(sc.OutsideRegionError):
            sc.region_m_witness(0.1, math.pi / 2)

    def test_joint_sums(self):
        w = sc.region_m_witness(1.2, 0.9)
        total = sum(w.joint)
        assert np.allclose(total, np.kron(np.eye(2), w.omega), atol=1e-12)

    @settings(max_examples=30)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_all_checks_pass_in_m(self, u, v):
        theta, phi = in_m_point(u, v)
        w = sc.region_m_witness(theta, phi)
        for name in ("C", "A1bar - C", "B1bar - C", "C + I(x)omega - A1bar - B1bar", "W"):
            assert w.checks[name] >= -1e-9
        assert w.checks["D residual"] <= 1e-9


class TestExtremal:
    def test_half_identity(self):
        d = sc.extremal_povm_decomposition(np.eye(2) / 2)
        assert np.allclose(d.coefficients, [0.5, 0, 0, 0.5])

    def test_projector(self):
        d = sc.extremal_povm_decomposition(np.diag([1.0, 0.0]))
        assert np.allclose(d.coefficients, [0, 1, 0, 0])
        assert np.allclose(d.effects[1], np.diag([1, 0]))

    def test_zero(self):
        assert np.allclose(sc.extremal_povm_decomposition(np.zeros((2, 2))).coefficients, [1, 0, 0, 0])

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            sc.extremal_povm_decomposition(np.diag([1.2, 0.0]))
        with pytest.raises(ValidationError):
            sc.extremal_povm_decomposition(np.eye(3) / 2)

    def test_random_effects(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            e = rand_effect(rng, 2)
            d = sc.extremal_povm_decomposition(e)
            assert np.max(np.abs(d.reconstruct() - e)) <= 1e-10
            assert sum(d.coefficients) == pytest.approx(1.0, abs=1e-12)
            assert min(d.coefficients) >= 0
            assert d.coefficients[2] == 0.0


class TestNamed:
    def test_t_v(self):
        t = sc.named_testers("t_v")
        assert np.allclose(t.normalization.data, np.diag([1, 0]))

    def test_t_h(self):
        assert np.allclose(sc.t_h().normalization.data, np.diag([0, 1]))

    def test_busch(self):
        assert povm_compatibility(sc.named_testers("busch", 0.6, 0.6)).compatible

    def test_busch_range(self):
        with pytest.raises(ValidationError):
            sc.busch(1.2, 0.1)

    def test_mub_testers(self):
        a, b = sc.named_testers("mub_testers", 2, 2)
        assert np.allclose(a.normalization.data, np.eye(2) / 2)
        assert np.allclose(b.normalization.data, np.eye(2) / 2)
        ca, cb = canonical_povm(a), canonical_povm(b)
        for j, e in enumerate(ca.elements):
            assert np.allclose(e.data, np.diag(np.eye(4)[j]))
        for e in cb.elements:
            assert np.allclose(e.data @ e.data, e.data)
            assert np.allclose(np.abs(np.diag(e.data)), 0.25)
        assert not tester_compatibility([a, b]).compatible

    def test_conjecture_bound(self):
        assert sc.mub_conjecture_bound(1, 2) == pytest.approx((1 - 1 / math.sqrt(2)) / 2)

    def test_entangled(self):
        t = sc.named_testers("entangled")
        assert ancilla_free_decomposition(t) is None
        assert np.allclose(t.normalization.data, np.eye(2) / 2)

    def test_classical_ancilla(self):
        t = sc.named_testers("classical_ancilla_example")
        expected = 0.5 * (np.diag([1.0, 0.0]) + np.full((2, 2), 0.5))
        assert np.allclose(t.normalization.data, expected)
        assert ancilla_free_decomposition(t) is None

    def test_unknown(self):
        with pytest.raises(ValidationError):
            sc.named_testers("nope")


class TestSweep:
    def test_rows(self):
        rows = sc.sweep([0.0, math.pi / 2], [0.0, math.pi / 2])
        assert [(r.theta, r.phi) for r in rows] == [(0.0, 0.0), (0.0, math.pi / 2),
                                                     (math.pi / 2, 0.0), (math.pi / 2, math.pi / 2)]
        assert rows[0].lambda_sdp <= 1e-6
        assert rows[1].lambda_sdp == pytest.approx((1 - 1 / math.sqrt(2)) / 2, abs=1e-6)
        assert rows[1].lambda_measurement_upper == pytest.approx(rows[1].lambda_sdp, abs=1e-6)
        assert rows[3].lambda_sdp == pytest.approx(S45, abs=1e-6)
        assert rows[3].lambda_closed_form == pytest.approx(S45, abs=1e-12)

    def test_csv(self):
        text = sc.sweep_csv(sc.sweep([0.1], [math.pi / 2]))
        header, row, end = text.split("\n")
        assert header == sc.CSV_HEADER
        assert end == ""
        fields = row.split(",")
        assert fields[:3] == ["0.100000", "1.570796", "false"]
        assert fields[4] == "" and fields[6] == ""

    def test_failure_recorded(self, monkeypatch):
        def boom(*args, **kw):
            raise SdpFailure("stalled")
        monkeypatch.setattr(sc, "tester_robustness_two_outcome", boom)
        rows = sc.sweep([0.0, 0.5], [0.5])
        assert all(r.error == "stalled" for r in rows)
        assert rows[0].csv().split(",")[5] == ""

    def test_workers_match(self):
        grid = [0.0, 1.0]
        assert sc.sweep_csv(sc.sweep(grid, grid, workers=2)) == sc.sweep_csv(sc.sweep(grid, grid))

    def test_lambda_sdp_uses_solver(self):
        row = sc.sweep_point(math.pi, math.pi)
        a, b = sc.polarization_pair(math.pi, math.pi).testers
        assert row.lambda_sdp == tester_robustness_two_outcome(a, b, use_shortcuts=False).lam
