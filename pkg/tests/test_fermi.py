import numpy as np
import pytest

from qtherm import fermi as fm
from qtherm.errors import OverflowError, SymbolRangeError
from qtherm.linalg import embed, herm_exp, op_norm, random_hermitian, random_unitary


def random_symbol(n, rng, lo=0.05, hi=0.95):
    u = random_unitary(n, rng)
    return u @ np.diag(rng.uniform(lo, hi, size=n)) @ u.conj().T


def test_jordan_wigner_one_mode():
    alg = fm.jordan_wigner(1)
    assert np.array_equal(alg.a[0], np.array([[0, 0], [1, 0]]))
    assert np.allclose(alg.a[0] @ alg.adag[0] + alg.adag[0] @ alg.a[0], np.eye(2))


def test_jordan_wigner_two_modes_anticommute_exactly():
    alg = fm.jordan_wigner(2)
    assert not np.any(alg.a[0] @ alg.a[1] + alg.a[1] @ alg.a[0])


def test_pauli_z_recovered():
    alg = fm.jordan_wigner(3)
    z = np.diag([1.0, -1.0])
    for k in range(3):
        assert np.abs(alg.pauli_z(k) - embed(z, [2, 2, 2], [k])).max() <= 1e-12


def test_car_and_norm(rng):
    alg = fm.jordan_wigner(4)
    assert alg.car_defect() <= 1e-12
    for _ in range(3):
        f = rng.normal(size=4) + 1j * rng.normal(size=4)
        assert np.isclose(op_norm(alg.ann(f)), np.linalg.norm(f))
    g = rng.normal(size=4) + 1j * rng.normal(size=4)
    anti = alg.ann(f) @ alg.cre(g) + alg.cre(g) @ alg.ann(f)
    assert np.allclose(anti, np.vdot(f, g) * np.eye(16))


def test_mode_cap():
    with pytest.raises(OverflowError):
        fm.jordan_wigner(13)


def test_vacuum_and_filled(rng):
    alg = fm.jordan_wigner(3)
    vac = fm.quasi_free_state(alg, np.zeros((3, 3)))
    full = fm.quasi_free_state(alg, np.eye(3))
    u = random_unitary(3, rng)
    assert np.isclose(fm.characteristic_fn(vac, u), 1)
    assert np.isclose(fm.characteristic_fn_direct(vac, u), 1)
    assert np.isclose(fm.characteristic_fn(full, u), np.linalg.det(u))
    assert np.isclose(fm.characteristic_fn_direct(full, u), np.linalg.det(u))


def test_tracial_state(rng):
    alg = fm.jordan_wigner(2)
    st = fm.quasi_free_state(alg, 0.5 * np.eye(2))
    assert np.allclose(st.rho, np.eye(4) / 4)
    f, g = rng.normal(size=2) + 1j * rng.normal(size=2), rng.normal(size=2) + 1j * rng.normal(size=2)
    assert np.isclose(st.two_point(f, g), np.vdot(g, f) / 2)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_two_point_and_routes(n, rng):
    alg = fm.jordan_wigner(n)
    t = random_symbol(n, rng)
    st = fm.quasi_free_state(alg, t)
    assert fm.two_point_defect(st) <= 1e-10
    alt = fm.quasi_free_state_eigenmodes(alg, t)
    assert np.abs(st.rho - alt.rho).max() <= 1e-12
    f, g = rng.normal(size=n) + 1j * rng.normal(size=n), rng.normal(size=n) + 1j * rng.normal(size=n)
    assert np.isclose(st.two_point(f, g), np.vdot(g, t @ f))


def test_boundary_symbol(rng):
    # eigenvalues 0 and 1 are allowed and take the eigenmode route
    alg = fm.jordan_wigner(2)
    u = random_unitary(2, rng)
    st = fm.quasi_free_state(alg, u @ np.diag([0.0, 1.0]) @ u.conj().T)
    assert fm.two_point_defect(st) <= 1e-10
    with pytest.raises(SymbolRangeError):
        fm.quasi_free_state(alg, np.diag([0.3, 1.2]))


def test_wick_four_point(rng):
    alg = fm.jordan_wigner(3)
    st = fm.quasi_free_state(alg, random_symbol(3, rng))
    fs = [rng.normal(size=3) + 1j * rng.normal(size=3) for _ in range(2)]
    gs = [rng.normal(size=3) + 1j * rng.normal(size=3) for _ in range(2)]
    assert fm.wick_determinant_defect(st, fs, gs) <= 1e-9


@pytest.mark.parametrize("m", [2, 4, 6])
def test_wick_pairings(m, rng):
    alg = fm.jordan_wigner(4)
    st = fm.quasi_free_state(alg, random_symbol(4, rng))
    fs = [rng.normal(size=4) + 1j * rng.normal(size=4) for _ in range(m)]
    assert fm.wick_pairing_defect(st, fs) <= 1e-9


def test_pairing_count():
    assert len(list(fm._pairings(list(range(6))))) == 15


def test_characteristic_example():
    alg = fm.jordan_wigner(2)
    st = fm.quasi_free_state(alg, np.diag([0.3, 0.6]))
    kappa = 0.9
    u = np.diag([np.exp(1j * kappa), 1.0])
    expected = 1 + (np.exp(1j * kappa) - 1) * 0.3
    assert abs(fm.characteristic_fn(st, u) - expected) <= 1e-12
    assert abs(fm.characteristic_fn_direct(st, u) - expected) <= 1e-10
    assert np.isclose(fm.characteristic_fn(st, np.eye(2)), 1)


@pytest.mark.parametrize("n", [2, 4])
def test_characteristic_random(n, rng):
    alg = fm.jordan_wigner(n)
    st = fm.quasi_free_state(alg, random_symbol(n, rng))
    for _ in range(3):
        u = random_unitary(n, rng)
        assert abs(fm.characteristic_fn(st, u) - fm.characteristic_fn_direct(st, u)) <= 1e-9


def test_gamma_is_second_quantization(rng):
    alg = fm.jordan_wigner(3)
    k = random_hermitian(3, rng)
    u = herm_exp(k, 1j)
    assert np.allclose(alg.Gamma(u), herm_exp(alg.dGamma(k), 1j), atol=1e-12)


def test_araki_wyss_tracial():
    rep = fm.araki_wyss_rep(0.5 * np.eye(1))
    assert np.allclose(rep.s, 0) and np.allclose(rep.delta(), np.eye(4))


def test_araki_wyss_one_mode():
    rep = fm.araki_wyss_rep(np.array([[0.3]]))
    f = np.array([1.0])
    assert abs(rep.expect(rep.pi_cre(f) @ rep.pi_ann(f)) - 0.3) <= 1e-15
    g = np.array([1.5 - 0.5j])
    assert np.isclose(rep.expect(rep.pi_ann(g) @ rep.pi_cre(g)), 0.7 * np.linalg.norm(g) ** 2)
    assert rep.big.n_modes == 2


def test_araki_wyss_correlations_and_modular(rng):
    t = random_symbol(2, rng)
    rep = fm.araki_wyss_rep(t)
    assert fm.araki_wyss_two_point_defect(rep) <= 1e-12
    st = fm.quasi_free_state(fm.jordan_wigner(2), t)
    assert fm.araki_wyss_correlation_defect(rep, st) <= 1e-9
    assert fm.araki_wyss_modular_defect(rep) <= 1e-8


def test_araki_wyss_car(rng):
    rep = fm.araki_wyss_rep(random_symbol(2, rng))
    a0, a1 = rep.pi_a
    eye = np.eye(rep.big.dim)
    assert np.allclose(a0 @ a0.conj().T + a0.conj().T @ a0, eye)
    assert np.allclose(a0 @ a1 + a1 @ a0, 0)


def test_araki_wyss_requires_interior_symbol():
    with pytest.raises(SymbolRangeError):
        fm.araki_wyss_rep(np.diag([0.0, 0.5]))


def test_dynamics_trivial_and_phases(rng):
    alg = fm.jordan_wigner(3)
    h = random_hermitian(3, rng)
    assert fm.quasi_free_dynamics_check(alg, h, 0.0).bogoliubov_defect <= 1e-13
    hd = np.diag([0.4, -1.1, 2.0])
    big = alg.dGamma(hd)
    u = herm_exp(big, 1j * 0.8)
    for k, e in enumerate(np.diag(hd)):
        assert np.allclose(u @ alg.a[k] @ u.conj().T, np.exp(-1j * 0.8 * e) * alg.a[k])


def test_dynamics_bogoliubov_and_kms(rng):
    alg = fm.jordan_wigner(3)
    h = random_hermitian(3, rng)
    rec = fm.quasi_free_dynamics_check(alg, h, 1.3, T=fm.fermi_dirac(h, 1.0), beta=1.0, rng=rng)
    assert rec.bogoliubov_defect <= 1e-10 and rec.kms_defect <= 1e-9


def test_fermi_dirac_scalar():
    assert np.isclose(fm.fermi_dirac(np.array([[0.7]]), 2.0)[0, 0], 1 / (1 + np.exp(1.4)))


@pytest.mark.parametrize("t_diag", [(0.3, 0.6), (0.1, 0.5), (0.45, 0.8)])
def test_max_entropy_direction(t_diag):
    assert fm.max_entropy_diagnostic(t_diag) <= 0
