import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gkpqec.fock import HilbertConfig, displacement, fock_ket
from gkpqec.gkp import (LABELS, CodeLattice, GkpStateSpec, TruncationError, fidelity,
                        lattice_shells, logical_expectation, logical_ket, logical_state,
                        mean_photon, pauli_operator, read_amplitudes, stabilizer, wigner,
                        write_amplitudes, write_wigner_csv)

from .conftest import random_density

CFG = HilbertConfig(100)
SQ = CodeLattice.square()


def ket(label, delta=0.34, cfg=CFG, **kw):
    return logical_ket(GkpStateSpec(label, delta, cfg=cfg, **kw))


@pytest.mark.parametrize("lat", [CodeLattice.square(), CodeLattice.rectangular(1.3),
                                 CodeLattice.hexagonal()])
def test_lattice_constraint(lat):
    c = np.conj(lat.alpha) * lat.beta - lat.alpha * np.conj(lat.beta)
    assert abs(c - 1j * math.pi) < 1e-12


def test_lattice_values():
    a = math.sqrt(math.pi / 2)
    assert SQ.alpha == pytest.approx(a) and SQ.beta == pytest.approx(1j * a)
    r = CodeLattice.rectangular(2.0)
    assert r.alpha == pytest.approx(2 * a) and r.beta == pytest.approx(1j * a / 2)
    h = CodeLattice.hexagonal()
    assert abs(h.beta) == pytest.approx(math.sqrt(math.pi / math.sqrt(3)))
    with pytest.raises(ValueError):
        CodeLattice(1.0, 1j)
    with pytest.raises(ValueError):
        CodeLattice.rectangular(-1)


def test_spec_validation():
    with pytest.raises(ValueError):
        GkpStateSpec("+W")
    for d in (0.0, 1.0, -0.3):
        with pytest.raises(ValueError):
            GkpStateSpec("+Z", d)


@pytest.mark.parametrize("label", LABELS)
def test_states_normalized(label):
    assert abs(np.linalg.norm(ket(label)) - 1) < 1e-10


def test_codewords_nearly_orthogonal():
    assert abs(np.vdot(ket("+Z"), ket("-Z"))) ** 2 < 0.01
    assert abs(np.vdot(ket("+X"), ket("-X"))) ** 2 < 0.01


def test_mean_photon_follows_envelope():
    # the envelope fixes <n> ~ 1/(2 delta^2) - 1/2 for small delta
    n = mean_photon(logical_state(GkpStateSpec("+Z", 0.34, cfg=CFG)))
    assert abs(n - (1 / (2 * 0.34**2) - 0.5)) < 0.1


def test_lattice_sum_converges_with_finite_shells():
    k = lattice_shells(GkpStateSpec("+Z", 0.34, cfg=CFG))
    assert 6 <= k <= 14


def test_stabilizer_monotone_in_delta():
    sx = [np.real(np.vdot(p, stabilizer(SQ, "X", CFG) @ p)) for p in (ket("+Z", d) for d in (0.5, 0.4, 0.3))]
    sz = [np.real(np.vdot(p, stabilizer(SQ, "Z", CFG) @ p)) for p in (ket("+Z", d) for d in (0.5, 0.4, 0.3))]
    assert sx[0] < sx[1] < sx[2] < 1
    assert sz[0] < sz[1] < sz[2] < 1


def test_paulis_and_stabilizers():
    assert np.allclose(pauli_operator(SQ, "Z", CFG), displacement(SQ.beta, CFG))
    X = pauli_operator(SQ, "X", CFG)
    assert np.max(np.abs(X @ X - stabilizer(SQ, "X", CFG))) < 1e-8
    assert np.allclose(stabilizer(SQ, "X", CFG), displacement(math.sqrt(2 * math.pi), CFG))
    sx, sz = stabilizer(SQ, "X", CFG), stabilizer(SQ, "Z", CFG)
    # commutator away from the cutoff region
    comm = (sx @ sz - sz @ sx)[:40, :40]
    assert np.max(np.abs(comm)) < 1e-6
    with pytest.raises(ValueError):
        pauli_operator(SQ, "W", CFG)


def test_pauli_expectations():
    v0 = logical_expectation(logical_state(GkpStateSpec("+Z", cfg=CFG)), pauli_operator(SQ, "Z", CFG))
    assert 0.5 < v0 <= 1
    v1 = logical_expectation(logical_state(GkpStateSpec("-Z", cfg=CFG)), pauli_operator(SQ, "Z", CFG))
    # finite-energy codewords are mirror images only up to O(delta^4) envelope effects
    assert v1 == pytest.approx(-v0, abs=1e-4)
    for lab, w in (("+X", "X"), ("+Y", "Y")):
        assert logical_expectation(logical_state(GkpStateSpec(lab, cfg=CFG)), pauli_operator(SQ, w, CFG)) > 0.5


def test_logical_x_flips_z():
    p, m = ket("+Z"), ket("-Z")
    x = pauli_operator(SQ, "X", CFG) @ p
    assert abs(np.vdot(m, x)) ** 2 > abs(np.vdot(p, x)) ** 2


def test_expectation_of_maximally_mixed_state():
    # the truncated displacement is not traceless, so the maximally mixed
    # truncated state has a small residual <Z> that shrinks with the cutoff
    vals = []
    for n in (50, 100, 400):
        cfg = HilbertConfig(n)
        z = pauli_operator(SQ, "Z", cfg)
        v = logical_expectation(np.eye(n) / n, z)
        assert v == pytest.approx(np.real(np.trace(z)) / n, abs=1e-12)
        vals.append(abs(v))
    assert vals[2] < vals[0] and vals[2] < 0.01


def test_joint_state_expectation_traces_qubit():
    rho = logical_state(GkpStateSpec("+Z", cfg=HilbertConfig(60), max_truncation_loss=1e-3))
    z = pauli_operator(SQ, "Z", HilbertConfig(60))
    joint = np.kron(rho, np.diag([0.3, 0.7]))
    assert logical_expectation(joint, z) == pytest.approx(logical_expectation(rho, z))


def test_truncation_overflow_raises():
    with pytest.raises(TruncationError):
        logical_ket(GkpStateSpec("+Z", 0.34, cfg=HilbertConfig(20)))
    psi = logical_ket(GkpStateSpec("+Z", 0.34, cfg=HilbertConfig(25), max_truncation_loss=1e-2))
    assert abs(np.linalg.norm(psi) - 1) < 1e-12


def test_hexagonal_states_build():
    lat = CodeLattice.hexagonal()
    p = logical_ket(GkpStateSpec("+Z", 0.34, lat, CFG))
    m = logical_ket(GkpStateSpec("-Z", 0.34, lat, CFG))
    assert abs(np.vdot(p, m)) ** 2 < 0.01
    assert np.real(np.vdot(p, pauli_operator(lat, "Z", CFG) @ p)) > 0.5


def test_fidelity_trivial_cases(rng):
    cfg = HilbertConfig(4)
    p0 = np.outer(fock_ket(0, cfg), fock_ket(0, cfg))
    p1 = np.outer(fock_ket(1, cfg), fock_ket(1, cfg))
    assert fidelity(p0, p0) == pytest.approx(1)
    assert fidelity(p0, p1) == pytest.approx(0)
    mixed = random_density(rng, 4)
    assert fidelity(mixed, p0) == pytest.approx(np.real(mixed[0, 0]))
    with pytest.raises(ValueError):
        fidelity(np.array([[1, 1], [0, 0]]), np.eye(2) / 2)


def test_uhlmann_against_scipy_sqrtm(rng):
    from scipy.linalg import sqrtm

    r, s = random_density(rng, 5), random_density(rng, 5)
    sq = sqrtm(s)
    ref = np.real(np.trace(sqrtm(sq @ r @ sq))) ** 2
    assert fidelity(r, s) == pytest.approx(ref, abs=1e-10)


@given(seed=st.integers(0, 2**31), rank=st.integers(1, 4))
def test_fidelity_bounds_and_symmetry(seed, rank):
    rng = np.random.default_rng(seed)
    r, s = random_density(rng, 4, rank), random_density(rng, 4)
    f = fidelity(r, s)
    assert 0 <= f <= 1 + 1e-10
    assert f == pytest.approx(fidelity(s, r), abs=1e-8)


def test_wigner_vacuum_and_normalization():
    cfg = HilbertConfig(10)
    vac = np.outer(fock_ket(0, cfg), fock_ket(0, cfg))
    g = np.linspace(-6, 6, 121)
    W = wigner(vac, g, g)
    assert W[60, 60] == pytest.approx(1 / math.pi)
    step = g[1] - g[0]
    assert W.sum() * step**2 == pytest.approx(1, abs=1e-6)
    one = np.outer(fock_ket(1, cfg), fock_ket(1, cfg))
    assert wigner(one, [0.0], [0.0])[0, 0] == pytest.approx(-1 / math.pi)


def test_exports(tmp_path):
    psi = ket("+Z", cfg=HilbertConfig(40), max_truncation_loss=1e-2)
    for name in ("s.json", "s.csv"):
        write_amplitudes(tmp_path / name, psi)
        assert np.allclose(read_amplitudes(tmp_path / name), psi)
    g = np.linspace(-1, 1, 3)
    write_wigner_csv(tmp_path / "w.csv", g, g, wigner(np.outer(psi, psi.conj()), g, g))
    assert len((tmp_path / "w.csv").read_text().splitlines()) == 10
