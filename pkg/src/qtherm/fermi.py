"""CAR algebra on finitely many modes via Jordan-Wigner, and gauge-invariant quasi-free states.

Conventions: a_k = Z x ... x Z x [[0,0],[1,0]] x 1 x ... x 1, so the occupied
single-mode state is (1, 0) and sigma_z = 2 a*a - 1. a(f) = sum_k conj(f_k) a_k
is antilinear in f; the two-point function is omega(a*(f) a(g)) = (g|T f),
i.e. omega(a_k* a_l) = T[l, k].
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import OverflowError, ShapeMismatch, SymbolRangeError
from .linalg import PAULI, anticomm, check_hermitian, eig_hermitian, herm_exp, mat_fn, op_norm
from .qdyn import FiniteQDS, kms_check
from .qstate import DensityMatrix, von_neumann_entropy

MAX_MODES = 12
SYMBOL_TOL = 1e-12
_LOWER = np.array([[0, 0], [1, 0]], dtype=np.complex128)


class FermionAlgebra:
    """Annihilators a_1..a_n on (C^2)^{kron n}."""

    def __init__(self, n_modes: int):
        n = int(n_modes)
        if n < 1:
            raise ShapeMismatch("need at least one mode")
        if n > MAX_MODES:
            raise OverflowError(f"{n} modes exceed the cap of {MAX_MODES}")
        self.n_modes = n
        self.dim = 2 ** n
        z, eye = PAULI["Z"], np.eye(2, dtype=np.complex128)
        ops = []
        for k in range(n):
            m = np.ones((1, 1), dtype=np.complex128)
            for j in range(n):
                m = np.kron(m, z if j < k else (_LOWER if j == k else eye))
            ops.append(m)
        self.a = ops

    @cached_property
    def adag(self) -> list[np.ndarray]:
        return [x.conj().T for x in self.a]

    @cached_property
    def N(self) -> np.ndarray:
        return sum(ad @ a for ad, a in zip(self.adag, self.a))

    def ann(self, f) -> np.ndarray:
        """a(f), antilinear in f."""
        f = self._mode_vector(f)
        return sum(np.conj(fk) * ak for fk, ak in zip(f, self.a))

    def cre(self, f) -> np.ndarray:
        """a*(f), linear in f."""
        return self.ann(f).conj().T

    def dGamma(self, h) -> np.ndarray:
        """Second quantization sum_ij h_ij a_i* a_j."""
        h = np.asarray(h, dtype=np.complex128)
        self._check_one_particle(h)
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for i in range(self.n_modes):
            for j in range(self.n_modes):
                if h[i, j] != 0:
                    out += h[i, j] * (self.adag[i] @ self.a[j])
        return out

    def Gamma(self, u) -> np.ndarray:
        """Second quantization of a unitary: e^{i dGamma(kappa)} with u = e^{i kappa}."""
        u = np.asarray(u, dtype=np.complex128)
        self._check_one_particle(u)
        # u is normal: its complex Schur form is diagonal with a unitary basis, robust under degeneracy
        t, z = sla.schur(u, output="complex")
        w = np.diag(t)
        kappa = (z * np.angle(w)) @ z.conj().T
        kappa = 0.5 * (kappa + kappa.conj().T)
        return herm_exp(self.dGamma(kappa), 1j)

    def pauli_z(self, k: int) -> np.ndarray:
        """sigma_z on site k recovered as 2 a_k* a_k - 1."""
        return 2 * self.adag[k] @ self.a[k] - np.eye(self.dim)

    def car_defect(self) -> float:
        worst = 0.0
        eye = np.eye(self.dim)
        for j in range(self.n_modes):
            for k in range(self.n_modes):
                worst = max(worst, float(np.abs(anticomm(self.a[j], self.a[k])).max()))
                target = eye if j == k else 0
                worst = max(worst, float(np.abs(anticomm(self.a[j], self.adag[k]) - target).max()))
        return worst

    def _mode_vector(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.complex128).ravel()
        if f.size != self.n_modes:
            raise ShapeMismatch(f"mode vector of length {f.size}, expected {self.n_modes}")
        return f

    def _check_one_particle(self, h: np.ndarray) -> None:
        if h.shape != (self.n_modes, self.n_modes):
            raise ShapeMismatch(f"one-particle operator of shape {h.shape}, expected n x n")


def jordan_wigner(n: int) -> FermionAlgebra:
    return FermionAlgebra(n)


def field_operator(alg: FermionAlgebra, f) -> np.ndarray:
    """phi(f) = 2^{-1/2}(a(f) + a*(f))."""
    a = alg.ann(f)
    return (a + a.conj().T) / np.sqrt(2.0)


def fermi_dirac(h, beta: float) -> np.ndarray:
    """T = (1 + e^{beta h})^{-1}."""
    return mat_fn(check_hermitian(h), lambda x: 0.5 * (1.0 - np.tanh(0.5 * beta * x)))


def _check_symbol(t) -> tuple[np.ndarray, np.ndarray]:
    t = check_hermitian(t, name="T")
    e = eig_hermitian(t)
    if e.values.min() < -SYMBOL_TOL or e.values.max() > 1 + SYMBOL_TOL:
        raise SymbolRangeError(f"symbol spectrum [{e.values.min():.3g}, {e.values.max():.3g}] "
                               "outside [0, 1]")
    return t, e


@dataclass(frozen=True)
class QuasiFreeState:
    alg: FermionAlgebra = field(repr=False)
    T: np.ndarray
    rho: np.ndarray = field(repr=False)

    def expect(self, a) -> complex:
        return complex(np.trace(self.rho @ a))

    def two_point(self, f, g) -> complex:
        """omega(a*(f) a(g))."""
        return self.expect(self.alg.cre(f) @ self.alg.ann(g))

    def density(self) -> DensityMatrix:
        return DensityMatrix(self.rho)


def _product_state(occ: np.ndarray) -> np.ndarray:
    rho = np.ones((1, 1), dtype=np.complex128)
    for t in occ:
        rho = np.kron(rho, np.diag([t, 1.0 - t]))
    return rho


def quasi_free_state_eigenmodes(alg: FermionAlgebra, t) -> QuasiFreeState:
    """omega_T as Gamma(W) (product state in the eigenmodes of T) Gamma(W)*; valid on all of 0 <= T <= 1."""
    t, e = _check_symbol(t)
    occ = np.clip(e.values, 0.0, 1.0)
    g = alg.Gamma(e.vectors)
    rho = g @ _product_state(occ) @ g.conj().T
    return QuasiFreeState(alg, t, 0.5 * (rho + rho.conj().T))


def quasi_free_state(alg: FermionAlgebra, t) -> QuasiFreeState:
    """omega_T: e^{dGamma(s)}/tr with s = log T(1-T)^{-1} when 0 < T < 1, eigenmode product otherwise."""
    t, e = _check_symbol(t)
    if e.values.min() <= SYMBOL_TOL or e.values.max() >= 1 - SYMBOL_TOL:
        return quasi_free_state_eigenmodes(alg, t)
    s = mat_fn(None, lambda x: np.log(x) - np.log1p(-x), eig=e)
    big = alg.dGamma(s)
    be = eig_hermitian(big)
    rho = mat_fn(None, lambda x: np.exp(x - x.max()), eig=be)
    rho /= np.trace(rho).real
    return QuasiFreeState(alg, t, 0.5 * (rho + rho.conj().T))


def characteristic_fn(state: QuasiFreeState, u) -> complex:
    """E(u) = det(1 + (u - 1)T)."""
    u = np.asarray(u, dtype=np.complex128)
    n = state.alg.n_modes
    return complex(np.linalg.det(np.eye(n) + (u - np.eye(n)) @ state.T))


def characteristic_fn_direct(state: QuasiFreeState, u) -> complex:
    """omega_T(Gamma(u)) by a Fock-space trace."""
    return state.expect(state.alg.Gamma(u))


def two_point_defect(state: QuasiFreeState) -> float:
    """max_kl |omega(a_k* a_l) - T_lk|."""
    n = state.alg.n_modes
    worst = 0.0
    for k in range(n):
        for l in range(n):
            v = state.expect(state.alg.adag[k] @ state.alg.a[l])
            worst = max(worst, abs(v - state.T[l, k]))
    return worst


def wick_determinant_defect(state: QuasiFreeState, fs, gs) -> float:
    """|omega(a*(f_1)..a*(f_m) a(g_m)..a(g_1)) - det[(g_i|T f_j)]|."""
    alg = state.alg
    m = len(fs)
    if len(gs) != m:
        raise ShapeMismatch("need as many f as g")
    op = np.eye(alg.dim, dtype=np.complex128)
    for f in fs:
        op = op @ alg.cre(f)
    for g in reversed(gs):
        op = op @ alg.ann(g)
    gram = np.array([[np.vdot(g, state.T @ f) for f in fs] for g in gs])
    return abs(state.expect(op) - np.linalg.det(gram))


def _pairings(idx: list[int]):
    """Yield (sign, pairs) over all perfect matchings of ``idx`` (Pfaffian expansion order)."""
    if not idx:
        yield 1, []
        return
    first, rest = idx[0], idx[1:]
    for j, other in enumerate(rest):
        sign = -1 if j % 2 else 1
        remaining = rest[:j] + rest[j + 1:]
        for s, pairs in _pairings(remaining):
            yield sign * s, [(first, other)] + pairs


def wick_pairing_defect(state: QuasiFreeState, fs) -> float:
    """|omega(phi(f_1)..phi(f_2k)) - sum over pairings of signed products of two-point functions|."""
    phis = [field_operator(state.alg, f) for f in fs]
    m = len(phis)
    op = np.eye(state.alg.dim, dtype=np.complex128)
    for p in phis:
        op = op @ p
    direct = state.expect(op)
    if m % 2:
        return abs(direct)
    two = {(i, j): state.expect(phis[i] @ phis[j]) for i in range(m) for j in range(i + 1, m)}
    total = 0j
    for sign, pairs in _pairings(list(range(m))):
        prod = complex(sign)
        for i, j in pairs:
            prod *= two[(i, j)]
        total += prod
    return abs(direct - total)


# ---------------------------------------------------------------------------
# Araki-Wyss doubled representation


@dataclass(frozen=True)
class ArakiWyssRep:
    """pi_T(a(f)) = a(sqrt(1-T) f + 0) + a*(0 + conj(sqrt(T) f)) on 2n modes, cyclic vector the vacuum."""

    T: np.ndarray
    big: FermionAlgebra = field(repr=False)
    pi_a: list = field(repr=False)
    Omega: np.ndarray = field(repr=False)
    s: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.T.shape[0]

    def pi_ann(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.complex128).ravel()
        return sum(np.conj(fk) * ak for fk, ak in zip(f, self.pi_a))

    def pi_cre(self, f) -> np.ndarray:
        return self.pi_ann(f).conj().T

    def expect(self, a) -> complex:
        return complex(np.vdot(self.Omega, a @ self.Omega))

    def delta(self, power: complex = 1.0) -> np.ndarray:
        """Gamma(e^s + e^{-conj s})^power = exp(power dGamma(s + (-conj s)))."""
        n = self.n_modes
        gen = np.zeros((2 * n, 2 * n), dtype=np.complex128)
        gen[:n, :n] = self.s
        gen[n:, n:] = -self.s.conj()
        return herm_exp(self.big.dGamma(gen), power)

    def J(self, psi: np.ndarray) -> np.ndarray:
        """Modular conjugation: (-1)^{N(N-1)/2} Gamma(swap) applied to the complex conjugate vector."""
        return self._j_unitary @ np.conj(psi)

    @cached_property
    def _j_unitary(self) -> np.ndarray:
        n = self.n_modes
        swap = np.zeros((2 * n, 2 * n), dtype=np.complex128)
        swap[:n, n:] = np.eye(n)
        swap[n:, :n] = np.eye(n)
        num = np.real(np.diag(self.big.N)).round().astype(int)
        sign = np.where((num * (num - 1) // 2) % 2 == 0, 1.0, -1.0)
        return np.diag(sign) @ self.big.Gamma(swap)

    def algebra_basis(self) -> list[np.ndarray]:
        """Ordered monomials prod_k pi(a_k*)^{e_k} pi(a_k)^{e'_k}, a linear basis of pi_T(CAR)."""
        n = self.n_modes
        units = np.eye(n)
        out = []
        for ex in itertools.product(range(4), repeat=n):
            m = np.eye(self.big.dim, dtype=np.complex128)
            for k, e in enumerate(ex):
                if e & 1:
                    m = m @ self.pi_cre(units[k])
                if e & 2:
                    m = m @ self.pi_ann(units[k])
            out.append(m)
        return out


def araki_wyss_rep(t, n: int | None = None) -> ArakiWyssRep:
    t, e = _check_symbol(t)
    n = t.shape[0] if n is None else int(n)
    if t.shape != (n, n):
        raise ShapeMismatch("symbol dimension does not match the mode count")
    if e.values.min() <= SYMBOL_TOL or e.values.max() >= 1 - SYMBOL_TOL:
        raise SymbolRangeError("the doubled representation needs 0 < T < 1")
    big = FermionAlgebra(2 * n)
    sq1 = mat_fn(None, lambda x: np.sqrt(1 - x), eig=e)
    sqt = mat_fn(None, np.sqrt, eig=e)
    pi_a = []
    for k in range(n):
        f = np.zeros(n, dtype=np.complex128)
        f[k] = 1
        left = np.concatenate([sq1 @ f, np.zeros(n)])
        right = np.concatenate([np.zeros(n), np.conj(sqt @ f)])
        pi_a.append(big.ann(left) + big.cre(right))
    omega = np.zeros(big.dim, dtype=np.complex128)
    omega[-1] = 1.0  # all modes empty
    s = mat_fn(None, lambda x: np.log(x) - np.log1p(-x), eig=e)
    return ArakiWyssRep(t, big, pi_a, omega, s)


def araki_wyss_two_point_defect(rep: ArakiWyssRep) -> float:
    n = rep.n_modes
    units = np.eye(n)
    worst = 0.0
    for k in range(n):
        for l in range(n):
            v = rep.expect(rep.pi_cre(units[k]) @ rep.pi_ann(units[l]))
            worst = max(worst, abs(v - rep.T[l, k]))
    return worst


def araki_wyss_correlation_defect(rep: ArakiWyssRep, state: QuasiFreeState) -> float:
    """max over the monomial basis of |<Omega, pi_T(A) Omega> - omega_T(A)|."""
    n = rep.n_modes
    alg = state.alg
    units = np.eye(n)
    worst = 0.0
    for ex in itertools.product(range(4), repeat=n):
        m_pi = np.eye(rep.big.dim, dtype=np.complex128)
        m = np.eye(alg.dim, dtype=np.complex128)
        for k, e in enumerate(ex):
            if e & 1:
                m_pi = m_pi @ rep.pi_cre(units[k])
                m = m @ alg.cre(units[k])
            if e & 2:
                m_pi = m_pi @ rep.pi_ann(units[k])
                m = m @ alg.ann(units[k])
        worst = max(worst, abs(rep.expect(m_pi) - state.expect(m)))
    return worst


def araki_wyss_modular_defect(rep: ArakiWyssRep) -> float:
    """max over the monomial basis of ||J Delta^{1/2} A Omega - A* Omega||."""
    half = rep.delta(0.5)
    worst = 0.0
    for a in rep.algebra_basis():
        lhs = rep.J(half @ (a @ rep.Omega))
        rhs = a.conj().T @ rep.Omega
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst


# ---------------------------------------------------------------------------
# free dynamics


@dataclass(frozen=True)
class QuasiFreeDynamicsRecord:
    bogoliubov_defect: float
    kms_defect: float | None


def quasi_free_dynamics_check(alg: FermionAlgebra, h, t: float, T=None, beta: float | None = None,
                              rng: np.random.Generator | None = None,
                              t_grid=(0.0, 0.3, 1.1)) -> QuasiFreeDynamicsRecord:
    """e^{itH} a(f) e^{-itH} = a(e^{ith} f) with H = dGamma(h); KMS at beta when T is Fermi-Dirac."""
    h = check_hermitian(h)
    big_h = alg.dGamma(h)
    u = herm_exp(big_h, 1j * t)
    one = herm_exp(h, 1j * t)
    rng = np.random.default_rng(0) if rng is None else rng
    vecs = list(np.eye(alg.n_modes)) + [rng.normal(size=alg.n_modes) + 1j * rng.normal(size=alg.n_modes)]
    bog = 0.0
    for f in vecs:
        bog = max(bog, op_norm(u @ alg.ann(f) @ u.conj().T - alg.ann(one @ f)))
    kms = None
    if T is not None and beta is not None:
        state = quasi_free_state(alg, T)
        sys = FiniteQDS(big_h, state.density())
        kms = 0.0
        for k in range(alg.n_modes):
            for l in range(alg.n_modes):
                kms = max(kms, kms_check(sys, beta, alg.a[k], alg.adag[l], t_grid))
                kms = max(kms, kms_check(sys, beta, alg.a[k], alg.a[l] + alg.adag[k], t_grid))
    return QuasiFreeDynamicsRecord(bog, kms)


def max_entropy_diagnostic(t_diag, eps_grid=(1e-3, 1e-2, 5e-2)) -> float:
    """Two modes with diagonal symbol: perturb omega_T along n1 n2 correlations (two-point data fixed).

    Returns max over the grid of S(perturbed) - S(omega_T); nonpositive when omega_T is entropy-maximal.
    """
    t1, t2 = (float(x) for x in t_diag)
    alg = FermionAlgebra(2)
    base = quasi_free_state(alg, np.diag([t1, t2])).rho
    c = np.kron(np.diag([1.0, -1.0]), np.diag([1.0, -1.0]))
    worst = -np.inf
    s0 = von_neumann_entropy(DensityMatrix(base))
    for eps in eps_grid:
        for sgn in (1, -1):
            pert = base + sgn * eps * c
            if np.linalg.eigvalsh(pert).min() < 0:
                continue
            worst = max(worst, von_neumann_entropy(DensityMatrix(pert)) - s0)
    return float(worst)
