"""Completely positive Markov semigroups on matrix algebras.

Superoperators are d^2 x d^2 matrices in column-stacking convention
(``linalg.VEC_CONVENTION``); the Choi matrix is sum_ij E_ij kron L(E_ij).
"""
from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.interpolate import CubicSpline

from .errors import FaithfulnessError, GridError, LogBranchError, ShapeMismatch
from .linalg import (VEC_CONVENTION, apply_super, check_hermitian, choi_matrix, comm, expi,
                     kernel_projection, left_mul, partial_trace, right_mul, sandwich, trace_norm,
                     unvec, vec)
from .qstate import DensityMatrix, as_state

HEISENBERG = "heisenberg"
SCHRODINGER = "schrodinger"


@dataclass(frozen=True)
class LindbladGen:
    """M(A) = i[U, A] - 1/2 sum {W*W, A} + sum W* A W."""

    Upsilon: np.ndarray = field(repr=False)
    jump_ops: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "Upsilon", check_hermitian(self.Upsilon, name="Upsilon"))
        d = self.Upsilon.shape[0]
        ops = tuple(np.asarray(w, dtype=np.complex128) for w in self.jump_ops)
        for w in ops:
            if w.shape != (d, d):
                raise ShapeMismatch("jump operator dimension mismatch")
        object.__setattr__(self, "jump_ops", ops)

    @property
    def dim(self) -> int:
        return self.Upsilon.shape[0]


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray = field(repr=False)
    dim: int
    picture: str = HEISENBERG
    convention: str = VEC_CONVENTION

    def __call__(self, x) -> np.ndarray:
        return apply_super(self.matrix, np.asarray(x, dtype=np.complex128))

    def dual(self) -> "Superoperator":
        """The other picture: tr(rho M(A)) = tr(M_#(rho) A). Valid for Hermiticity-preserving maps."""
        other = SCHRODINGER if self.picture == HEISENBERG else HEISENBERG
        return Superoperator(self.matrix.conj().T, self.dim, other)

    def exp(self, t: float) -> "Superoperator":
        return Superoperator(sla.expm(t * self.matrix), self.dim, self.picture)

    def compose(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.matrix @ other.matrix, self.dim, self.picture)


def lindblad_to_super(gen: LindbladGen, picture: str = HEISENBERG) -> Superoperator:
    d = gen.dim
    u = gen.Upsilon
    s = 1j * (left_mul(u) - right_mul(u))
    if picture == SCHRODINGER:
        s = -s
    for w in gen.jump_ops:
        ww = w.conj().T @ w
        s = s - 0.5 * (left_mul(ww) + right_mul(ww))
        if picture == HEISENBERG:
            s = s + sandwich(w.conj().T, w)
        elif picture == SCHRODINGER:
            s = s + sandwich(w, w.conj().T)
        else:
            raise ValueError(f"unknown picture {picture!r}")
    return Superoperator(s, d, picture)


def picture_duality_defect(gen: LindbladGen) -> float:
    """max over matrix units of |tr(rho M(A)) - tr(M_#(rho) A)|."""
    m = lindblad_to_super(gen, HEISENBERG)
    ms = lindblad_to_super(gen, SCHRODINGER)
    d = gen.dim
    worst = 0.0
    units = []
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=np.complex128)
            e[i, j] = 1
            units.append(e)
    for r in units:
        for a in units:
            worst = max(worst, abs(np.trace(r @ m(a)) - np.trace(ms(r) @ a)))
    return worst


@dataclass(frozen=True)
class CPRecord:
    choi_min_eig: float
    unital_defect: float
    trace_defect: float

    @property
    def completely_positive(self) -> bool:
        return self.choi_min_eig >= -1e-10


def cp_check(lam: Superoperator) -> CPRecord:
    d = lam.dim
    c = choi_matrix(lam.matrix, d)
    c = 0.5 * (c + c.conj().T)
    eye = np.eye(d, dtype=np.complex128)
    unital = float(np.abs(lam(eye) - eye).max())
    dual = lam.matrix.conj().T @ vec(eye)
    trace = float(np.abs(unvec(dual, d) - eye).max())
    return CPRecord(float(np.linalg.eigvalsh(c).min()), unital, trace)


def transpose_map(d: int) -> Superoperator:
    m = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            m[j + i * d, i + j * d] = 1.0
    return Superoperator(m, d, HEISENBERG)


# ---------------------------------------------------------------------------
# detailed balance


@dataclass(frozen=True)
class DBCRecord:
    invariance_defect: float
    dbc_defect: float
    dbc1_defect: float


def _adjoint_defect(gram: np.ndarray, m: np.ndarray) -> float:
    """max entry of G M - M^H G: zero iff M is self-adjoint for (A|B) = vec(A)^H G vec(B)."""
    return float(np.abs(gram @ m - m.conj().T @ gram).max())


def dbc_gram(rho: DensityMatrix) -> np.ndarray:
    """Gram matrix of (A|B) = tr(rho^{1/2} A* rho^{1/2} B)."""
    r = rho.power(0.5)
    return sandwich(r, r)


def dbc1_gram(rho: DensityMatrix) -> np.ndarray:
    """Gram matrix of (A|B) = tr(rho A* B)."""
    return left_mul(rho.mat)


def detailed_balance_check(gen: LindbladGen, rho) -> DBCRecord:
    rho = as_state(rho)
    if not rho.faithful:
        raise FaithfulnessError("detailed balance needs a faithful state")
    ms = lindblad_to_super(gen, SCHRODINGER)
    inv = trace_norm(ms(rho.mat))
    m = lindblad_to_super(gen, HEISENBERG).matrix
    u = gen.Upsilon
    m0 = m - 1j * (left_mul(u) - right_mul(u))
    return DBCRecord(inv, _adjoint_defect(dbc_gram(rho), m0), _adjoint_defect(dbc1_gram(rho), m0))


def hamiltonian_part_residual(gen_matrix: np.ndarray, rho: DensityMatrix) -> tuple[float, np.ndarray]:
    """DBC defect for a generator given only as a matrix.

    Splits M into its self-adjoint and anti-self-adjoint parts for the
    (rho^{1/2}, rho^{1/2}) inner product and measures how far the anti part is
    from a commutator i[Y, .] with Hermitian Y (least squares over Y).
    Returns (Frobenius residual, Y).
    """
    d = rho.dim
    g = dbc_gram(rho)
    star = np.linalg.solve(g, gen_matrix.conj().T @ g)
    anti = 0.5 * (gen_matrix - star)
    basis = []
    for i in range(d):
        for j in range(d):
            if i == j:
                e = np.zeros((d, d), dtype=np.complex128)
                e[i, i] = 1
                basis.append(e)
            elif i < j:
                e = np.zeros((d, d), dtype=np.complex128)
                e[i, j] = e[j, i] = 1
                basis.append(e)
                f = np.zeros((d, d), dtype=np.complex128)
                f[i, j], f[j, i] = -1j, 1j
                basis.append(f)
    cols = [(1j * (left_mul(b) - right_mul(b))).ravel() for b in basis]
    a = np.stack(cols, axis=1)
    a_real = np.concatenate([a.real, a.imag])
    y_real = np.concatenate([anti.ravel().real, anti.ravel().imag])
    coef, *_ = np.linalg.lstsq(a_real, y_real, rcond=None)
    resid = float(np.linalg.norm(a_real @ coef - y_real))
    y = sum(c * b for c, b in zip(coef, basis))
    return resid, y


def invariant_state(gen: LindbladGen) -> tuple[DensityMatrix, float]:
    """An invariant density matrix: ergodic projection of 1/d onto Ker(M_#); returns (state, residual)."""
    ms = lindblad_to_super(gen, SCHRODINGER)
    d = gen.dim
    x = kernel_projection(ms.matrix, vec(np.eye(d, dtype=np.complex128) / d))
    rho = unvec(x, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    w, v = np.linalg.eigh(rho)
    rho = (v * np.clip(w, 0, None)) @ v.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(rho), trace_norm(ms(rho))


def random_generator(d: int, rng: np.random.Generator, n_jumps: int = 2) -> LindbladGen:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    jumps = [(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2 * d)
             for _ in range(n_jumps)]
    return LindbladGen(0.5 * (g + g.conj().T) / np.sqrt(d), tuple(jumps))


def thermal_qubit(beta: float, gamma: float = 1.0, rate_ratio: float | None = None) -> LindbladGen:
    """Qubit with Upsilon = sigma_z and thermal jumps sigma_-/sigma_+ (gamma_+/gamma_- = e^{2 beta})."""
    sm = np.array([[0, 0], [1, 0]], dtype=np.complex128)  # |e> = (1,0) -> |g> = (0,1)
    ratio = np.exp(2 * beta) if rate_ratio is None else rate_ratio
    gp = gamma * ratio / (1 + ratio)
    gm = gamma / (1 + ratio)
    z = np.diag([1.0, -1.0]).astype(np.complex128)
    return LindbladGen(z, (np.sqrt(gp) * sm, np.sqrt(gm) * sm.conj().T))


# ---------------------------------------------------------------------------
# Fermi golden rule level shift


def fgr_level_shift(v_values, grid, k: float | None = None, K=None, index: int | None = None) -> complex:
    """int |v(xi)|^2 / (k + i0 - xi) d xi = PV int |v|^2/(k - xi) - i pi |v(k)|^2.

    ``v_values`` samples the coupling density on ``grid``; a cubic spline of
    |v|^2 is integrated. ``k`` is an energy, or the ``index``-th eigenvalue of K.
    """
    grid = np.asarray(grid, dtype=float)
    if k is None:
        if K is None or index is None:
            raise ValueError("give k or (K, index)")
        k = float(np.linalg.eigvalsh(check_hermitian(K))[index])
    if grid.ndim != 1 or grid.size < 4 or np.any(np.diff(grid) <= 0):
        raise GridError("frequency grid must be increasing with at least 4 points")
    cell = np.max(np.diff(grid))
    if not (grid[0] + cell <= k <= grid[-1] - cell):
        raise GridError(f"k={k} is within one cell of the grid boundary")
    dens = np.abs(np.asarray(v_values)) ** 2
    spline = CubicSpline(grid, dens)
    fk = float(spline(k))
    return complex(_spline_pv(spline, k, fk), -np.pi * fk)


def _spline_pv(spline: CubicSpline, k: float, fk: float) -> float:
    """PV int s(xi)/(k - xi) for a cubic spline s, integrated exactly piece by piece.

    Uses PV int s/(xi - k) = int (s - s(k))/(xi - k) + s(k) log((b - k)/(k - a)); on each
    piece the first integrand is a quadratic plus (p_i(k) - s(k))/(xi - k).
    """
    x, c = spline.x, spline.c  # c[m, i]: coefficient of (xi - x_i)^(3 - m)
    total = fk * math.log((x[-1] - k) / (k - x[0]))
    for i in range(x.size - 1):
        a = c[::-1, i]  # ascending powers of (xi - x_i)
        sh = k - x[i]
        # re-expand around k: p_i = sum_m d_m u^m with u = xi - k
        d = [sum(math.comb(n, m) * a[n] * sh ** (n - m) for n in range(m, 4)) for m in range(4)]
        lo, hi = x[i] - k, x[i + 1] - k
        total += d[1] * (hi - lo) + d[2] * (hi ** 2 - lo ** 2) / 2 + d[3] * (hi ** 3 - lo ** 3) / 3
        coef = d[0] - fk
        if lo != 0 and hi != 0 and coef != 0:
            total += coef * math.log(abs(hi / lo))
    return -total


# ---------------------------------------------------------------------------
# weak coupling extraction against a finite reservoir


@dataclass(frozen=True)
class WeakCouplingModel:
    """System K on C^d coupled by lambda * sum_i Q_i kron B_i to a finite reservoir H_R in state omega_R."""

    K: np.ndarray = field(repr=False)
    H_R: np.ndarray = field(repr=False)
    omega_R: np.ndarray = field(repr=False)
    couplings: tuple = ()  # pairs (Q on system, B on reservoir)
    beta: float = 1.0

    @property
    def d(self) -> int:
        return self.K.shape[0]

    @property
    def dR(self) -> int:
        return self.H_R.shape[0]

    def interaction(self) -> np.ndarray:
        out = np.zeros((self.d * self.dR,) * 2, dtype=np.complex128)
        for q, b in self.couplings:
            out += np.kron(q, b)
        return 0.5 * (out + out.conj().T)


def reduced_map(model: WeakCouplingModel, lam: float, t: float) -> Superoperator:
    """Heisenberg map A -> e^{-isK} I*(e^{isH_lam}(A kron 1)e^{-isH_lam}) e^{isK}, s = t/lam^2."""
    d, dR = model.d, model.dR
    if lam == 0:
        return Superoperator(np.eye(d * d, dtype=np.complex128), d, HEISENBERG)
    s = t / lam ** 2
    h = np.kron(model.K, np.eye(dR)) + np.kron(np.eye(d), model.H_R) + lam * model.interaction()
    u = expi(check_hermitian(h), s)
    uk = expi(check_hermitian(model.K), -s)
    env = np.kron(np.eye(d), model.omega_R)
    cols = []
    for j in range(d):
        for i in range(d):
            e = np.zeros((d, d), dtype=np.complex128)
            e[i, j] = 1.0
            big = u @ np.kron(e, np.eye(dR)) @ u.conj().T
            red = partial_trace(env @ big, [d, dR], [0])
            cols.append(vec(uk @ red @ uk.conj().T))
    return Superoperator(np.stack(cols, axis=1), d, HEISENBERG)


def generator_from_map(lam_map: Superoperator, t: float) -> np.ndarray:
    """log(map)/t with the principal branch; refuses maps with eigenvalues on the negative axis."""
    w = np.linalg.eigvals(lam_map.matrix)
    bad = (np.abs(w.imag) < 1e-9 * max(1.0, np.abs(w).max())) & (w.real <= 0)
    if np.any(bad):
        raise LogBranchError("reduced map has eigenvalues on the closed negative real axis")
    return sla.logm(lam_map.matrix) / t


@dataclass(frozen=True)
class WeakCouplingResult:
    lambdas: np.ndarray
    generators: list
    cauchy: np.ndarray  # distance between consecutive lambdas
    dbc_defects: np.ndarray
    free_commutators: np.ndarray


def weak_coupling_extract(model: WeakCouplingModel, lambdas: Sequence[float], t: float = 1.0
                          ) -> WeakCouplingResult:
    from .qstate import gibbs

    lambdas = np.asarray(lambdas, dtype=float)
    rho = gibbs(model.K, model.beta)
    free = 1j * (left_mul(model.K) - right_mul(model.K))
    gens, dbc, com = [], [], []
    for lam in lambdas:
        g = generator_from_map(reduced_map(model, lam, t), t)
        gens.append(g)
        dbc.append(hamiltonian_part_residual(g, rho)[0])
        com.append(float(np.linalg.norm(comm(g, free))))
    cauchy = np.array([np.linalg.norm(gens[i + 1] - gens[i]) for i in range(len(gens) - 1)])
    return WeakCouplingResult(lambdas, gens, cauchy, np.array(dbc), np.array(com))


def fermionic_bath_model(K, mode_energies, couplings_g, beta: float, q=None) -> WeakCouplingModel:
    """System K coupled through Q kron phi(g) to free fermions dGamma(diag(energies)) at beta."""
    from .fermi import field_operator, fermi_dirac, jordan_wigner, quasi_free_state

    energies = np.asarray(mode_energies, dtype=float)
    n = energies.size
    alg = jordan_wigner(n)
    h_one = np.diag(energies).astype(np.complex128)
    h_r = alg.dGamma(h_one)
    state = quasi_free_state(alg, fermi_dirac(h_one, beta))
    k = check_hermitian(K)
    if q is None:
        q = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    b = field_operator(alg, np.asarray(couplings_g, dtype=np.complex128))
    return WeakCouplingModel(k, h_r, state.rho, ((np.asarray(q, dtype=np.complex128), b),), beta)
