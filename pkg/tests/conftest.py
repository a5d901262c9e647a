import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def rand_herm(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


def rand_unitary(rng, n):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def rand_density(rng, d, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def rand_effect(rng, d):
    """Random 0 <= E <= I."""
    u = rand_unitary(rng, d)
    w = rng.uniform(0.0, 1.0, size=d)
    return (u * w) @ u.conj().T


def rand_qubit_povm(rng):
    e = rand_effect(rng, 2)
    return [e, np.eye(2) - e]


def rand_isometry_channel(rng, d_in, d_out, anc=2):
    """Kraus operators of a channel from a random isometry C^d_in -> C^d_out (x) C^anc."""
    z = rng.normal(size=(d_out * anc, d_in)) + 1j * rng.normal(size=(d_out * anc, d_in))
    v, _ = np.linalg.qr(z)
    v = v.reshape(d_out, anc, d_in)
    return [v[:, k, :] for k in range(anc)]


def povm_to_tester_elements(povm, rho):
    """T_j = (I (x) rho^{1/2}) P_j (I (x) rho^{1/2}) on H1 (x) H0."""
    w, u = np.linalg.eigh(rho)
    w = np.where(w > 1e-12, w, 0.0)
    sq = (u * np.sqrt(w)) @ u.conj().T
    d1 = povm[0].shape[0] // rho.shape[0]
    s = np.kron(np.eye(d1), sq)
    return [s @ p @ s for p in povm]


def rand_tester_povm(rng, d1, d0, n_out=2):
    """Random n_out-outcome POVM on H1 (x) H0."""
    d = d1 * d0
    raw = [rand_effect(rng, d) for _ in range(n_out)]
    total = sum(raw)
    w, u = np.linalg.eigh(total)
    isq = (u / np.sqrt(w)) @ u.conj().T
    return [isq @ r @ isq for r in raw]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def rand_shared_pair(rng, d1=2, d0=2):
    """Two random two-outcome testers with a common normalization.

    Each POVM is a random one mixed with the trivial POVM {I/2, I/2} at a
    random sharpness, so that both verdicts occur.
    """
    from qtesters.objects import make_tester
    rho = rand_density(rng, d0, rank=int(rng.integers(1, d0 + 1)))
    out = []
    for _ in range(2):
        u = rand_unitary(rng, d1 * d0)
        k = int(rng.integers(1, d1 * d0))
        e = u[:, :k] @ u[:, :k].conj().T
        t = rng.uniform(0.6, 1.0)
        e = t * e + (1 - t) * np.eye(d1 * d0) / 2
        els = povm_to_tester_elements([e, np.eye(d1 * d0) - e], rho)
        out.append(make_tester(els, dims=(d1, d0)))
    return out


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
