import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import (rand_density, rand_isometry_channel, rand_tester_povm,
                      povm_to_tester_elements)
from qtesters.errors import (ChainViolationError, DimensionError, NotPsdError,
                             NotProductNormalizedError, TraceNotOneError)
from qtesters.linalg import Operator, omega, partial_trace, projector, tensor
from qtesters.objects import TesterSetup as Setup
from qtesters.objects import tester_from_setup as setup_to_tester
from qtesters.objects import (DensityOperator, ancilla_free_decomposition,
                              born_probabilities, canonical_implementation, choi_from_kraus,
                              make_tester, nborn_probabilities, ncomb_from_choi, ntester_from_tester,
                              object_from_json, object_to_json, validate_choi,
                              validate_density, validate_ncomb, validate_ntester, validate_povm,
                              validate_tester)
from qtesters.scenarios import (classical_ancilla_example, entangled_tester, t_h, t_v,
                                unitality_tester)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
V, H = projector([1, 0]).data, projector([0, 1]).data
SX = np.array([[0, 1], [1, 0]], dtype=complex)
PHI = np.array([1, 0, 0, 1]) / np.sqrt(2)
PHI_PROJ = np.outer(PHI, PHI)


def random_tester(rng, d1=2, d0=2, n_out=2, rank=None):
    rho = rand_density(rng, d0, rank)
    return make_tester(povm_to_tester_elements(rand_tester_povm(rng, d1, d0, n_out), rho),
                       dims=(d1, d0))


def random_channel(rng, d0=2, d1=2):
    return choi_from_kraus(rand_isometry_channel(rng, d0, d1))


class TestValidators:
    def test_density(self):
        validate_density(np.eye(2) / 2)
        with pytest.raises(TraceNotOneError):
            validate_density(np.eye(2))
        with pytest.raises(NotPsdError):
            validate_density(np.diag([1.5, -0.5]))

    def test_povm(self):
        p = validate_povm([V, H], ["V", "H"])
        assert p.outcomes == ("V", "H")
        with pytest.raises(Exception):
            validate_povm([V, V])

    def test_choi(self):
        validate_choi(omega(2))
        with pytest.raises(Exception):
            validate_choi(Operator(2 * omega(2).data, (2, 2)))
        validate_choi(Operator(2 * omega(2).data, (2, 2)), deterministic=False)


class TestValidateTester:
    def test_t_v(self):
        t, rho = validate_tester([np.kron(V, V), np.kron(H, V)], dims=(2, 2))
        assert np.allclose(rho.op.data, V)
        assert t.dims == (2, 2)

    def test_unitality(self):
        t = unitality_tester()
        assert len(t) == 6
        assert np.allclose(t.normalization.data, np.eye(2) / 2)

    def test_not_product_normalized(self):
        with pytest.raises(NotProductNormalizedError) as info:
            validate_tester([np.kron(V, V), np.kron(V, H)], dims=(2, 2))
        assert info.value.residual > 0.1

    def test_negative_element_has_witness(self):
        bad = np.kron(V, V) - 0.1 * np.kron(H, H)
        with pytest.raises(NotPsdError) as info:
            validate_tester([bad, np.kron(np.eye(2), V) - bad], dims=(2, 2))
        w = info.value.witness
        assert np.vdot(w, bad @ w).real < 0

    def test_trace_not_one(self):
        with pytest.raises(TraceNotOneError):
            validate_tester([np.kron(V, np.eye(2)), np.kron(H, np.eye(2))], dims=(2, 2))

    def test_signature_mismatch(self):
        with pytest.raises(DimensionError):
            validate_tester([Operator(np.eye(4) / 4, (2, 2)), Operator(np.eye(4) / 4, (4,))])


class TestSetups:
    def test_ancilla_free_setup_gives_t_v(self):
        setup = Setup(1, DensityOperator(Operator(V, (2, 1))), validate_povm(
            [Operator(V, (2, 1)), Operator(H, (2, 1))]))
        t = setup_to_tester(setup)
        ref = t_v()
        for x, y in zip(t.elements, ref.elements):
            assert np.allclose(x.data, y.data)

    def test_entangled_setup(self):
        psi = DensityOperator(Operator(PHI_PROJ, (2, 2)))
        meas = validate_povm([Operator(PHI_PROJ, (2, 2)), Operator(np.eye(4) - PHI_PROJ, (2, 2))])
        t = setup_to_tester(Setup(2, psi, meas))
        assert np.allclose(t.elements[0].data, PHI_PROJ / 2)
        assert np.allclose(t.elements[1].data, (np.eye(4) - PHI_PROJ) / 2)

    def test_canonical_unitality(self):
        t = unitality_tester()
        setup = canonical_implementation(t)
        assert setup.anc_dim == 2
        assert np.allclose(setup.input_state.op.data, PHI_PROJ)
        for p, e in zip(setup.measurement.elements, t.elements):
            assert np.allclose(p.data, np.kron(partial_trace(e, 1).data, np.eye(2)))

    def test_canonical_t_v(self):
        setup = canonical_implementation(t_v())
        assert setup.anc_dim == 1
        assert np.allclose(setup.measurement.elements[0].data, V)
        assert np.allclose(setup.measurement.elements[1].data, H)

    def test_canonical_pure_normalization(self, rng):
        psi = rand_density(rng, 2, rank=1)
        a = [np.diag([0.7, 0.2]), np.diag([0.3, 0.8])]
        t = make_tester([np.kron(x, psi) for x in a], dims=(2, 2))
        setup = canonical_implementation(t)
        assert setup.anc_dim == 1
        for p, x in zip(setup.measurement.elements, a):
            assert np.allclose(p.data, x, atol=1e-9)

    @given(seeds, st.sampled_from([None, 1]))
    def test_round_trip(self, seed, rank):
        rng = np.random.default_rng(seed)
        t = random_tester(rng, rank=rank)
        back = setup_to_tester(canonical_implementation(t))
        for x, y in zip(back.elements, t.elements):
            assert np.max(np.abs(x.data - y.data)) <= 1e-9

    @given(seeds)
    def test_marginal_law(self, seed):
        rng = np.random.default_rng(seed)
        da = 2
        psi = rand_density(rng, 2 * da)
        meas = validate_povm([Operator(p, (2, da)) for p in rand_tester_povm(rng, 2, da, 3)])
        t = setup_to_tester(Setup(da, DensityOperator(Operator(psi, (2, da))), meas))
        marg = partial_trace(Operator(psi, (2, da)), 1).data
        assert np.max(np.abs(marg.T - t.normalization.data)) <= 1e-9


class TestBorn:
    def test_t_v_identity_channel(self):
        assert np.allclose(born_probabilities(t_v(), validate_choi(omega(2))), [1, 0])

    def test_t_v_bit_flip(self):
        assert np.allclose(born_probabilities(t_v(), choi_from_kraus([SX])), [0, 1])

    def test_unitality_identity(self):
        assert np.allclose(born_probabilities(unitality_tester(), validate_choi(omega(2))),
                           np.full(6, 1 / 6))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            born_probabilities(t_v(), choi_from_kraus([np.eye(3)]))

    @given(seeds)
    def test_normalization(self, seed):
        rng = np.random.default_rng(seed)
        t = random_tester(rng, n_out=3)
        e = random_channel(rng)
        assert e.deterministic
        p = born_probabilities(t, e)
        assert np.all(p >= -1e-10)
        assert abs(p.sum() - 1) <= 1e-9


class TestAncillaFree:
    def test_t_v(self):
        p, rho = ancilla_free_decomposition(t_v())
        assert np.allclose(p.elements[0].data, V) and np.allclose(p.elements[1].data, H)
        assert np.allclose(rho.op.data, V)

    def test_entangled(self):
        assert ancilla_free_decomposition(entangled_tester()) is None

    def test_classical_ancilla(self):
        assert ancilla_free_decomposition(classical_ancilla_example()) is None

    @given(seeds)
    def test_products_detected(self, seed):
        rng = np.random.default_rng(seed)
        rho = rand_density(rng, 2)
        e = rand_tester_povm(rng, 2, 1)
        t = make_tester([np.kron(x, rho) for x in e], dims=(2, 2))
        p, r = ancilla_free_decomposition(t)
        assert np.allclose(p.elements[0].data, e[0])


def two_step_identity_comb():
    # interleaved (0, 1, 2, 3); storage order (3, 2, 1, 0)
    return validate_ncomb(tensor(omega(2), omega(2)), (2, 2, 2, 2))


def two_step_tester(rng):
    """Product 2-tester with Theta^(2) = tau (x) I (x) rho on (2, 1, 0)."""
    rho = rand_density(rng, 2)
    tau = rand_density(rng, 2)
    theta = np.kron(tau, np.kron(np.eye(2), rho))
    povm = rand_tester_povm(rng, 2, 1)
    elements = [Operator(np.kron(p, theta), (2, 2, 2, 2)) for p in povm]
    return elements, theta


class TestCombs:
    def test_one_comb(self):
        c = validate_ncomb(omega(2), (2, 2))
        assert c.steps == 1

    def test_one_tester_matches(self):
        nt, theta = validate_ntester(t_v().elements, (2, 2))
        assert np.allclose(theta.data, V)
        assert ntester_from_tester(t_v()).steps == 1

    def test_one_step_born(self, rng):
        t = random_tester(rng)
        e = random_channel(rng)
        nt = ntester_from_tester(t)
        c = ncomb_from_choi(e)
        assert np.array_equal(nborn_probabilities(nt, c), born_probabilities(t, e))

    def test_two_comb(self):
        assert two_step_identity_comb().steps == 2

    def test_two_comb_from_channels(self, rng):
        # sequential channels 0 -> 1 and 2 -> 3 with a memoryless link
        e1 = random_channel(rng).op.data
        e2 = random_channel(rng).op.data
        validate_ncomb(np.kron(e2, e1), (2, 2, 2, 2))

    def test_two_tester_born(self, rng):
        elements, theta = two_step_tester(rng)
        nt, th = validate_ntester(elements, (2, 2, 2, 2))
        assert np.allclose(th.data, theta)
        p = nborn_probabilities(nt, two_step_identity_comb())
        assert abs(p.sum() - 1) <= 1e-8

    def test_comb_chain_violation(self):
        bad = tensor(omega(2), omega(2)).data.copy()
        bad[0, 0] += 1e-3
        with pytest.raises(ChainViolationError) as info:
            validate_ncomb(bad, (2, 2, 2, 2))
        assert info.value.residual >= 1e-4

    def test_tester_chain_violation(self, rng):
        elements, theta = two_step_tester(rng)
        rho = partial_trace(Operator(theta, (2, 2, 2)), [0, 1]).data / 2
        tau = partial_trace(Operator(theta, (2, 2, 2)), [1, 2]).data / 2
        # the outer link still holds, the inner one is off by 1e-3 * rho
        skewed = np.kron(tau, np.kron(np.diag([1 + 1e-3, 1 - 1e-3]), rho))
        povm = [partial_trace(e, [1, 2, 3]).data / 2 for e in elements]
        bad = [np.kron(p, skewed) for p in povm]
        with pytest.raises(ChainViolationError) as info:
            validate_ntester(bad, (2, 2, 2, 2))
        assert info.value.level == 1
        assert info.value.residual >= 1e-4

    def test_orthogonal_normalizations_disjoint(self):
        def lift(t):
            return [np.kron(np.eye(2), np.kron(np.eye(2) / 2, e.data)) for e in t.elements]
        tv, _ = validate_ntester(lift(t_v()), (2, 2, 2, 2), t_v().outcomes)
        th, _ = validate_ntester(lift(t_h()), (2, 2, 2, 2), t_h().outcomes)
        assert np.allclose(tv.theta.data @ th.theta.data, 0)
        comb = two_step_identity_comb()
        pv = dict(zip(tv.outcomes, nborn_probabilities(tv, comb)))
        ph = dict(zip(th.outcomes, nborn_probabilities(th, comb)))
        assert pv["V"] == pytest.approx(1) and ph["H"] == pytest.approx(1)

    def test_odd_signature(self):
        with pytest.raises(DimensionError):
            validate_ncomb(np.eye(8), (2, 2, 2))


class TestJson:
    @pytest.mark.parametrize("obj", [t_v(), unitality_tester(), validate_povm([V, H]),
                                     validate_density(np.eye(2) / 2), validate_choi(omega(2))])
    def test_round_trip(self, obj):
        text = json.dumps(object_to_json(obj))
        back = object_from_json(json.loads(text))
        assert type(back) is type(obj)
        assert json.dumps(object_to_json(back)) == text

    def test_comb_round_trip(self):
        c = two_step_identity_comb()
        back = object_from_json(json.loads(json.dumps(c.to_json())))
        assert back.io_dims == (2, 2, 2, 2)
        assert np.array_equal(back.op.data, c.op.data)
