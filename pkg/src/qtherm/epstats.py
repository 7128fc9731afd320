"""Entropy-production statistics: two-time measurement law, BMV functional, ancilla readout."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import FaithfulnessError, NotTRI, ZeroCoherence
from .linalg import (PAULI, comm, eig_hermitian, expi, herm_exp, kron, left_mul, mat_fn, right_mul,
                     spectral_clusters)
from .qdyn import FiniteQDS, TimeReversal, evolve_heisenberg, is_tri
from .qstate import DensityMatrix, relative_entropy

MERGE_TOL = 1e-9
ATOM_TOL = 1e-14  # atoms lighter than this are round-off, not support


@dataclass(frozen=True)
class OutcomeMeasure:
    """Finite atomic probability measure on the real line."""

    s: np.ndarray
    p: np.ndarray

    @classmethod
    def from_pairs(cls, s, p, tol: float = MERGE_TOL) -> "OutcomeMeasure":
        s = np.asarray(s, dtype=float).ravel()
        p = np.asarray(p, dtype=float).ravel()
        order = np.argsort(s, kind="stable")
        s, p = s[order], p[order]
        out_s, out_p = [], []
        for x, w in zip(s, p):
            if out_s and abs(x - out_s[-1][-1]) <= tol:
                out_s[-1].append(x)
                out_p[-1] += w
            else:
                out_s.append([x])
                out_p.append(w)
        ss = np.array([np.mean(g) for g in out_s])
        return cls(ss, np.array(out_p))

    @property
    def total(self) -> float:
        return float(self.p.sum())

    def mean(self) -> float:
        return float(np.dot(self.s, self.p))

    def charfn(self, alpha: complex) -> complex:
        """sum_s e^{-alpha s} Q(s)."""
        return complex(np.sum(self.p * np.exp(-alpha * self.s)))

    def weight_at(self, x: float, tol: float = MERGE_TOL) -> float:
        m = np.abs(self.s - x) <= tol
        return float(self.p[m].sum())


def _faithful(sys: FiniteQDS) -> DensityMatrix:
    if not sys.omega.faithful:
        raise FaithfulnessError("reference state must be faithful")
    return sys.omega


def omega_projections(omega: DensityMatrix, tol: float = 1e-12):
    """Spectral projections of omega, merging (numerically) degenerate eigenvalues."""
    vals = omega.probs
    projs, lams = [], []
    for idx in spectral_clusters(np.log(vals), tol):
        v = omega.eig.vectors[:, idx]
        projs.append(v @ v.conj().T)
        lams.append(float(np.mean(vals[idx])))
    return projs, np.array(lams)


def ttmep_probabilities(sys: FiniteQDS, t: float):
    """Joint law p_t(a, a') of the two measurements of omega, and the eigenvalues."""
    omega = _faithful(sys)
    projs, lams = omega_projections(omega)
    u = expi(sys.H, -t, eig=sys.eig)
    n = len(projs)
    p = np.zeros((n, n))
    for a in range(n):
        moved = u @ (projs[a] @ omega.mat @ projs[a]) @ u.conj().T
        for b in range(n):
            p[a, b] = np.trace(moved @ projs[b]).real
    return p, lams


def ttmep_law(sys: FiniteQDS, t: float) -> OutcomeMeasure:
    """Law of s = log lambda_a - log lambda_{a'} over the two-time measurement outcomes.

    With this orientation the mean equals -Ent(omega_t|omega) >= 0.
    """
    p, lams = ttmep_probabilities(sys, t)
    ll = np.log(lams)
    s = ll[:, None] - ll[None, :]
    q = OutcomeMeasure.from_pairs(s, p)
    keep = q.p > ATOM_TOL
    return OutcomeMeasure(q.s[keep], q.p[keep])


def ttmep_charfn(sys: FiniteQDS, t: float, alpha: complex) -> complex:
    """tr(omega_{-t}^alpha omega^{1-alpha})."""
    omega = _faithful(sys)
    u = expi(sys.H, t, eig=sys.eig)
    w_a = omega.power(alpha)
    back = u @ w_a @ u.conj().T  # (omega_{-t})^alpha
    return complex(np.trace(back @ omega.power(1 - alpha)))


def ttmep_charfn_modular(sys: FiniteQDS, t: float, alpha: complex) -> complex:
    """<Omega, Delta_{omega_{-t}|omega}^alpha Omega> on the Hilbert-Schmidt space."""
    omega = _faithful(sys)
    u = expi(sys.H, t, eig=sys.eig)
    gen = left_mul(u @ omega.log @ u.conj().T) - right_mul(omega.log)
    vec_omega = omega.power(0.5).reshape(-1, order="F")
    return complex(np.vdot(vec_omega, sla.expm(alpha * gen) @ vec_omega))


@dataclass(frozen=True)
class FluctuationRecord:
    max_defect_measure: float
    max_defect_charfn: float


def fluctuation_relation_check(sys: FiniteQDS, theta: TimeReversal, t: float,
                               alphas=None) -> FluctuationRecord:
    """Q_t(-s) = e^{-s} Q_t(s) on atoms and F(alpha) = F(1 - conj(alpha)) on a grid."""
    rep = is_tri(sys, theta)
    if not rep.tri:
        raise NotTRI(f"reference state is not time-reversal invariant (defect {rep.state_defect:.2e})")
    q = ttmep_law(sys, t)
    dm = 0.0
    for s, p in zip(q.s, q.p):
        dm = max(dm, abs(q.weight_at(-s) - np.exp(-s) * p))
    if alphas is None:
        alphas = np.linspace(0.0, 1.0, 11)
    dc = 0.0
    for a in alphas:
        dc = max(dc, abs(ttmep_charfn(sys, t, a) - ttmep_charfn(sys, t, 1 - np.conj(a))))
    return FluctuationRecord(dm, dc)


# ---------------------------------------------------------------------------
# phase-space contraction objects


@dataclass(frozen=True)
class EPCocycle:
    t: float
    ell_t: np.ndarray = field(repr=False)
    c_t: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)


def entropy_production_observable(sys: FiniteQDS) -> np.ndarray:
    """sigma = i[log omega, H] (equals delta_omega(V) when omega commutes with H_fr)."""
    omega = _faithful(sys)
    s = 1j * comm(omega.log, sys.H)
    return 0.5 * (s + s.conj().T)


def ep_cocycle(sys: FiniteQDS, t: float) -> EPCocycle:
    """ell = log omega_t - log omega and c^t = tau^t(ell) = log omega - tau^t(log omega)."""
    omega = _faithful(sys)
    lw = omega.log
    ell = evolve_heisenberg(sys, lw, -t) - lw
    c = lw - evolve_heisenberg(sys, lw, t)
    return EPCocycle(t=float(t), ell_t=0.5 * (ell + ell.conj().T), c_t=0.5 * (c + c.conj().T),
                     sigma=entropy_production_observable(sys))


def connes_cocycle_from_ell(sys: FiniteQDS, t: float, alpha: complex) -> np.ndarray:
    """e^{alpha(log Delta_omega + pi(ell))} e^{-alpha log Delta_omega} on the GNS space."""
    omega = _faithful(sys)
    lw = omega.log
    log_delta = left_mul(lw) - right_mul(lw)
    ell = ep_cocycle(sys, t).ell_t
    return sla.expm(alpha * (log_delta + left_mul(ell))) @ sla.expm(-alpha * log_delta)


def state_power_cocycle(sys: FiniteQDS, t: float, alpha: complex) -> np.ndarray:
    """omega_t^alpha omega^{-alpha} (system matrix)."""
    omega = _faithful(sys)
    u = expi(sys.H, -t, eig=sys.eig)
    return u @ omega.power(alpha) @ u.conj().T @ omega.power(-alpha)


# ---------------------------------------------------------------------------
# BMV functional


def bmv_charfn(sys: FiniteQDS, t: float, alpha: complex) -> complex:
    """tr exp(log omega - alpha c^t)."""
    omega = _faithful(sys)
    c = ep_cocycle(sys, t).c_t
    x = omega.log - alpha * c
    if np.imag(alpha) == 0:
        return complex(np.trace(herm_exp(0.5 * (x + x.conj().T))))
    return complex(np.trace(sla.expm(x)))


def bmv_derivative(sys: FiniteQDS, t: float, h: float = 1e-3) -> float:
    """Fourth-order central difference of the BMV functional at alpha = 0."""
    f = lambda a: bmv_charfn(sys, t, a).real  # noqa: E731
    return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)


@dataclass(frozen=True)
class BMVComparison:
    alphas: np.ndarray
    ttm: np.ndarray
    bmv: np.ndarray
    endpoint_defect: float
    slope_defect: float


def bmv_vs_ttmep(sys: FiniteQDS, t: float, alphas=None, h: float = 1e-3) -> BMVComparison:
    if alphas is None:
        alphas = np.linspace(0.0, 1.0, 11)
    alphas = np.asarray(alphas, dtype=float)
    ttm = np.array([ttmep_charfn(sys, t, a).real for a in alphas])
    bmv = np.array([bmv_charfn(sys, t, a).real for a in alphas])
    ends = max(abs(ttmep_charfn(sys, t, a) - bmv_charfn(sys, t, a)) for a in (0.0, 1.0))
    ttm_slope = (-ttmep_charfn(sys, t, 2 * h) + 8 * ttmep_charfn(sys, t, h)
                 - 8 * ttmep_charfn(sys, t, -h) + ttmep_charfn(sys, t, -2 * h)).real / (12 * h)
    slope = abs(ttm_slope - bmv_derivative(sys, t, h))
    return BMVComparison(alphas, ttm, bmv, float(ends), float(slope))


# ---------------------------------------------------------------------------
# ancilla readout


def ancilla_hamiltonian(sys: FiniteQDS, alpha: complex) -> np.ndarray:
    """e^{(alpha/2) log omega kron sigma_z} (H kron 1) e^{-(alpha/2) log omega kron sigma_z}."""
    omega = _faithful(sys)
    g = kron(omega.log, PAULI["Z"])
    # log omega kron sigma_z is Hermitian; for imaginary alpha the conjugation is unitary
    gen = eig_hermitian(g)
    left = mat_fn(None, lambda x: np.exp(0.5 * alpha * x), eig=gen)
    right = mat_fn(None, lambda x: np.exp(-0.5 * alpha * x), eig=gen)
    return left @ kron(sys.H, np.eye(2)) @ right


def ancilla_tomography(sys: FiniteQDS, rho_a, t: float, alpha: complex) -> complex:
    """Ancilla coherence readout divided by <v+, rho_a v->; equals the TTMEP characteristic function."""
    omega = _faithful(sys)
    rho_a = np.asarray(rho_a, dtype=np.complex128)
    coh = rho_a[0, 1]  # <v+, rho_a v-> with sigma_z v+- = +-v+-
    if abs(coh) < 1e-14:
        raise ZeroCoherence("ancilla state has no coherence between the sigma_z eigenvectors")
    if abs(np.real(alpha)) > 1e-15:
        raise ValueError("alpha must be purely imaginary")
    hh = ancilla_hamiltonian(sys, alpha)
    u = expi(0.5 * (hh + hh.conj().T), -t)
    big = kron(omega.mat, rho_a)
    n_op = kron(np.eye(sys.dim), np.array([[0, 0], [1, 0]], dtype=np.complex128))  # |v-><v+|
    return complex(np.trace(u @ big @ u.conj().T @ n_op) / coh)


def ttmep_mean_check(sys: FiniteQDS, t: float) -> float:
    """|mean(Q_t) + Ent(omega_t|omega)|."""
    q = ttmep_law(sys, t)
    wt = sys.state_at(t)
    ent = float(relative_entropy(DensityMatrix(0.5 * (wt + wt.conj().T)), sys.omega))
    return abs(q.mean() + ent)


def theta_invariant_check(sys: FiniteQDS, theta: TimeReversal, t: float) -> tuple[float, float]:
    """(||Theta(c^t) - c^{-t}||, ||Theta(sigma) + sigma||)."""
    a = ep_cocycle(sys, t)
    b = ep_cocycle(sys, -t)
    return (float(np.abs(theta(a.c_t) - b.c_t).max()), float(np.abs(theta(a.sigma) + a.sigma).max()))
