import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qtherm.errors import DomainError
from qtherm.linalg import random_density, random_hermitian, random_unitary
from qtherm.qstate import (DensityMatrix, GibbsSpec, gibbs, gibbs_variational_check, pressure,
                           relative_entropy, von_neumann_entropy)
from conftest import SZ

E = np.e


def test_gibbs_infinite_temperature():
    assert np.allclose(gibbs(SZ, 0.0).mat, np.eye(2) / 2)


@pytest.mark.parametrize("beta", [1.0, 5.0, 20.0])
def test_gibbs_population_ratio(beta):
    p = np.diag(gibbs(SZ, beta).mat).real
    assert np.isclose(p[0] / p[1], np.exp(-2 * beta), rtol=1e-10)


def test_gibbs_closed_form():
    expected = np.diag([1 / E, E]) / (E + 1 / E)
    assert np.allclose(gibbs(GibbsSpec(SZ, 1.0)).mat, expected, atol=1e-15)


def test_gibbs_large_spread_is_shifted():
    # a naive exponent would overflow at e^{600}; the shifted one stays finite
    w = gibbs(np.diag([-600.0, 0.0]), 1.0)
    assert np.all(np.isfinite(w.mat)) and np.isclose(w.mat[1, 1].real, np.exp(-600.0), rtol=1e-10)


def test_gibbs_refuses_underflowing_weights():
    from qtherm.errors import OverflowError
    with pytest.raises(OverflowError):
        gibbs(np.diag([0.0, 1000.0]), 1.0)


def test_gibbs_commutes(rng):
    h = random_hermitian(6, rng)
    w = gibbs(h, 1.3).mat
    assert np.abs(w @ h - h @ w).max() <= 1e-11
    assert np.linalg.eigvalsh(w).min() > 0


def test_entropy_examples():
    assert abs(von_neumann_entropy(np.diag([1.0, 0.0]))) < 1e-15
    assert np.isclose(von_neumann_entropy(np.eye(5) / 5), np.log(5))
    assert np.isclose(von_neumann_entropy(np.diag([0.75, 0.25])),
                      -0.75 * np.log(0.75) - 0.25 * np.log(0.25))


def test_relative_entropy_examples(rng):
    nu = random_density(3, rng)
    assert abs(float(relative_entropy(nu, nu))) < 1e-13
    assert relative_entropy(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])).is_neg_inf
    val = float(relative_entropy(np.eye(2) / 2, np.diag([0.75, 0.25])))
    assert np.isclose(val, 0.5 * (np.log(0.75) + np.log(0.25)) + np.log(2))


def test_relative_entropy_faithful_target_finite():
    # a pure state against a faithful state is finite
    val = relative_entropy(np.diag([1.0, 0.0]), np.diag([0.5, 0.5]))
    assert val.is_finite and np.isclose(float(val), np.log(0.5))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**20), d=st.integers(1, 6))
def test_relative_entropy_nonpositive(seed, d):
    g = np.random.default_rng(seed)
    nu, rho = random_density(d, g), random_density(d, g)
    assert float(relative_entropy(nu, rho)) <= 1e-12


def test_unitary_invariance(rng):
    nu, rho = random_density(4, rng), random_density(4, rng)
    u = random_unitary(4, rng)
    a = float(relative_entropy(nu, rho))
    b = float(relative_entropy(u @ nu @ u.conj().T, u @ rho @ u.conj().T))
    assert abs(a - b) <= 1e-11


def test_variational_examples(rng):
    h = random_hermitian(4, rng)
    assert abs(gibbs_variational_check(h, gibbs(h, 0.7), 0.7).gap) <= 1e-10
    nu = random_density(4, rng)
    rec = gibbs_variational_check(h, nu, 0.0)
    assert np.isclose(rec.gap, np.log(4) - von_neumann_entropy(nu))
    rec = gibbs_variational_check(SZ, np.diag([1.0, 0.0]), 1.0)
    assert np.isclose(rec.gap, np.log(E + 1 / E) + 1)


@pytest.mark.parametrize("d", [2, 5, 8])
def test_relative_entropy_to_gibbs_identity(d, rng):
    h, beta = random_hermitian(d, rng), 0.9
    for _ in range(5):
        nu = DensityMatrix(random_density(d, rng))
        lhs = float(relative_entropy(nu, gibbs(h, beta)))
        rhs = von_neumann_entropy(nu) - beta * nu.expect(h).real - pressure(h, beta)
        assert abs(lhs - rhs) <= 1e-10


def test_density_matrix_validation():
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(DomainError):
        DensityMatrix(np.diag([0.5, 0.4]))
    d = DensityMatrix(np.diag([1.0, -1e-14]))
    assert d.probs[0] == 0.0 and not d.faithful
