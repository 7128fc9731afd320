import numpy as np
import pytest
from scipy.integrate import quad

from qtherm import epstats as ep
from qtherm.errors import FaithfulnessError, NotTRI, ZeroCoherence
from qtherm.linalg import kron, left_mul, random_hermitian, random_unitary
from qtherm.modular import connes_cocycle
from qtherm.qdyn import FiniteQDS, TimeReversal
from qtherm.qstate import DensityMatrix, gibbs, relative_entropy
from quad_helpers import matrix_quad
from conftest import I2, SX, SZ

H2 = kron(SZ, I2) + 0.8 * kron(I2, SZ) + 0.5 * kron(SX, SX)
W2 = kron(gibbs(SZ, 0.5).mat, gibbs(0.8 * SZ, 2.0).mat)
THETA2 = TimeReversal(np.eye(4))
ALPHAS = np.linspace(0, 1, 11)


@pytest.fixture
def two_temp():
    """Two qubits at different temperatures with a real coupling (time-reversal invariant)."""
    return FiniteQDS(H2, W2)


@pytest.fixture
def qubit():
    return FiniteQDS(SX, np.diag([0.75, 0.25]))


def ent_t(sys, t):
    return float(relative_entropy(DensityMatrix(sys.state_at(t)), sys.omega))


def test_outcome_measure_merging():
    q = ep.OutcomeMeasure.from_pairs([0.0, 1e-10, 1.0], [0.2, 0.3, 0.5])
    assert len(q.s) == 2 and np.isclose(q.weight_at(0.0), 0.5)


def test_ttmep_point_mass_cases(rng):
    h = random_hermitian(3, rng)
    q = ep.ttmep_law(FiniteQDS(h, gibbs(h, 1.0)), 1.3)
    assert len(q.s) == 1 and abs(q.s[0]) <= 1e-12 and np.isclose(q.p[0], 1)
    q = ep.ttmep_law(FiniteQDS(H2, W2), 0.0)
    assert np.isclose(q.weight_at(0.0), 1.0)


def test_ttmep_qubit_enumeration(qubit):
    # e^{-i pi/2 sigma_x} swaps the basis: (a,a') = (0,1) w.p. 3/4 and (1,0) w.p. 1/4
    q = ep.ttmep_law(qubit, np.pi / 2)
    assert np.isclose(q.weight_at(np.log(3)), 0.75) and np.isclose(q.weight_at(-np.log(3)), 0.25)
    assert np.isclose(q.total, 1)
    assert np.isclose(q.mean(), 0.5 * np.log(3))
    assert abs(q.mean() + ent_t(qubit, np.pi / 2)) <= 1e-9


def test_ttmep_charfn_qubit(qubit):
    assert np.isclose(ep.ttmep_charfn(qubit, np.pi / 2, 0.5), np.sqrt(3) / 2)
    assert np.isclose(ep.ttmep_law(qubit, np.pi / 2).charfn(0.5), np.sqrt(3) / 2)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_ttmep_charfn_matches_atoms(two_temp, t):
    q = ep.ttmep_law(two_temp, t)
    for a in ALPHAS:
        assert abs(ep.ttmep_charfn(two_temp, t, a) - q.charfn(a)) <= 1e-10
        assert abs(ep.ttmep_charfn_modular(two_temp, t, a) - q.charfn(a)) <= 1e-10
    assert abs(ep.ttmep_charfn(two_temp, t, 0) - 1) <= 1e-13
    assert abs(ep.ttmep_charfn(two_temp, t, 1) - 1) <= 1e-12


def test_ttmep_mean_and_positivity(two_temp, rng):
    for t in (0.3, 1.0, 2.5):
        assert ep.ttmep_mean_check(two_temp, t) <= 1e-9
        assert ep.ttmep_law(two_temp, t).mean() >= 0
    h = random_hermitian(3, rng)
    assert abs(ep.ttmep_law(FiniteQDS(h, gibbs(h, 2.0)), 1.0).mean()) <= 1e-12


def test_ttmep_requires_faithful():
    with pytest.raises(FaithfulnessError):
        ep.ttmep_law(FiniteQDS(SX, np.diag([1.0, 0.0])), 1.0)


def test_fluctuation_relation(two_temp):
    rec = ep.fluctuation_relation_check(two_temp, THETA2, 2.0)
    assert rec.max_defect_measure <= 1e-10 and rec.max_defect_charfn <= 1e-10
    rec = ep.fluctuation_relation_check(two_temp, THETA2, 0.0)
    assert rec.max_defect_measure <= 1e-15


def test_fluctuation_equilibrium(rng):
    h = random_hermitian(3, rng).real
    sys = FiniteQDS(h, gibbs(h, 1.0))
    rec = ep.fluctuation_relation_check(sys, TimeReversal(np.eye(3)), 1.0)
    assert rec.max_defect_measure <= 1e-10
    assert ep.ttmep_law(sys, 1.0).weight_at(0.0) > 1 - 1e-12


def test_fluctuation_requires_tri(rng):
    u = random_unitary(4, rng)
    sys = FiniteQDS(H2, u @ W2 @ u.conj().T)
    with pytest.raises(NotTRI):
        ep.fluctuation_relation_check(sys, THETA2, 1.0)


def test_ep_cocycle_trivial(two_temp, rng):
    c = ep.ep_cocycle(two_temp, 0.0)
    assert np.abs(c.ell_t).max() <= 1e-13 and np.abs(c.c_t).max() <= 1e-13
    h = random_hermitian(3, rng)
    c = ep.ep_cocycle(FiniteQDS(h, gibbs(h, 1.0)), 1.7)
    assert np.abs(c.ell_t).max() <= 1e-12


def test_ep_cocycle_identity(two_temp):
    c05, c10, c15 = (ep.ep_cocycle(two_temp, t).c_t for t in (0.5, 1.0, 1.5))
    assert np.abs(c15 - (c05 + two_temp.heisenberg(c10, 0.5))).max() <= 1e-10


def test_ep_cocycle_is_integrated_sigma(two_temp):
    c = ep.ep_cocycle(two_temp, 1.0)
    integral = matrix_quad(lambda s: two_temp.heisenberg(c.sigma, s), 0.0, 1.0)
    assert np.abs(integral - c.c_t).max() <= 1e-7
    assert np.allclose(c.c_t, two_temp.heisenberg(c.ell_t, 1.0), atol=1e-12)


def test_ep_cocycle_reconstructs_connes(two_temp):
    t, s = 1.0, 0.6
    wt = DensityMatrix(two_temp.state_at(t))
    lhs = ep.connes_cocycle_from_ell(two_temp, t, 1j * s)
    assert np.abs(lhs - left_mul(connes_cocycle(wt, two_temp.omega, s))).max() <= 1e-9
    assert np.abs(ep.state_power_cocycle(two_temp, t, 1j * s) - connes_cocycle(wt, two_temp.omega, s)).max() <= 1e-10


def test_time_reversal_antisymmetry(two_temp):
    a, b = ep.theta_invariant_check(two_temp, THETA2, 1.3)
    assert a <= 1e-10 and b <= 1e-10


def test_bmv_trivial(rng):
    h = random_hermitian(3, rng)
    sys = FiniteQDS(h, gibbs(h, 1.0))
    for a in (0.0, 0.4, 1.0, 2.0):
        assert abs(ep.bmv_charfn(sys, 1.0, a) - 1) <= 1e-12


def test_bmv_normalization_and_slope(two_temp):
    assert ep.bmv_charfn(two_temp, 1.0, 0.0) == 1.0
    assert abs(ep.bmv_derivative(two_temp, 1.0) - ent_t(two_temp, 1.0)) <= 1e-7


def test_bmv_symmetry(two_temp):
    assert abs(ep.bmv_charfn(two_temp, 1.0, 0.3) - ep.bmv_charfn(two_temp, 1.0, 0.7)) <= 1e-10


def test_bmv_vs_ttmep(two_temp):
    cmp_ = ep.bmv_vs_ttmep(two_temp, 1.0)
    assert cmp_.endpoint_defect <= 1e-12 and cmp_.slope_defect <= 1e-7
    # regression anchor: the two functionals differ inside (0, 1)
    assert np.isclose(ep.ttmep_charfn(two_temp, 1.0, 0.5).real, 0.9385003216082417, atol=1e-12)
    assert np.isclose(ep.bmv_charfn(two_temp, 1.0, 0.5).real, 0.9252722437430572, atol=1e-12)


def test_bmv_vs_ttmep_commuting(rng):
    h = random_hermitian(3, rng)
    cmp_ = ep.bmv_vs_ttmep(FiniteQDS(h, gibbs(h, 1.0)), 1.0)
    assert np.allclose(cmp_.ttm, 1) and np.allclose(cmp_.bmv, 1)


ANC = FiniteQDS(SX + 0.3 * SZ, np.diag([0.7, 0.3]))
PLUS = np.full((2, 2), 0.5)


def test_ancilla_trivial():
    assert abs(ep.ancilla_tomography(ANC, PLUS, 1.0, 0.0) - 1) <= 1e-12
    assert abs(ep.ancilla_tomography(ANC, PLUS, 0.0, 0.5j) - 1) <= 1e-12


def test_ancilla_matches_charfn():
    lhs = ep.ancilla_tomography(ANC, PLUS, 1.7, 0.8j)
    assert abs(lhs - ep.ttmep_charfn(ANC, 1.7, 0.8j)) <= 1e-9


def test_ancilla_errors():
    with pytest.raises(ZeroCoherence):
        ep.ancilla_tomography(ANC, np.diag([1.0, 0.0]), 1.0, 0.3j)
    with pytest.raises(ValueError):
        ep.ancilla_tomography(ANC, PLUS, 1.0, 0.3)
