"""Standard representation and modular objects on the Hilbert-Schmidt space.

A state omega on d x d matrices is represented on C^{d^2} (column-stacked
matrices) with pi(A) X = A X, J X = X^H, Omega = vec(omega^{1/2}) and
modular operator Delta X = omega X omega^{-1}. Every d^2 x d^2 object below
uses this convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import FaithfulnessError, NotInvariant
from .linalg import (ExtendedReal, check_hermitian, comm, eig_hermitian, herm_log, left_mul, mat_fn,
                     right_mul, trace_norm, unvec, vec)
from .qdyn import FiniteQDS
from .qstate import DensityMatrix, as_state, gibbs, relative_entropy


def _faithful(state: DensityMatrix, what: str = "state") -> DensityMatrix:
    if not state.faithful:
        raise FaithfulnessError(f"{what} is not faithful (min eigenvalue {state.probs.min():.2e})")
    return state


@dataclass(frozen=True)
class StandardRep:
    omega: DensityMatrix = field(repr=False)

    @property
    def d(self) -> int:
        return self.omega.dim

    @cached_property
    def Omega(self) -> np.ndarray:
        return vec(self.omega.power(0.5))

    def pi(self, a) -> np.ndarray:
        """Left action X -> A X."""
        return left_mul(np.asarray(a, dtype=np.complex128))

    def pi_prime(self, b) -> np.ndarray:
        """J pi(B) J, i.e. X -> X B^H."""
        return right_mul(np.asarray(b, dtype=np.complex128).conj().T)

    def J(self, v: np.ndarray) -> np.ndarray:
        """Antiunitary conjugation X -> X^H."""
        return vec(unvec(v, self.d).conj().T)

    @cached_property
    def log_delta(self) -> np.ndarray:
        lw = self.omega.log
        return left_mul(lw) - right_mul(lw)

    @cached_property
    def delta(self) -> np.ndarray:
        return left_mul(self.omega.mat) @ right_mul(self.omega.power(-1))

    def delta_power(self, z: complex) -> np.ndarray:
        """Delta^z acting as X -> omega^z X omega^{-z}."""
        return left_mul(self.omega.power(z)) @ right_mul(self.omega.power(-z))

    def in_cone(self, v: np.ndarray, tol: float = 1e-10) -> bool:
        """Natural cone membership: the reshaped matrix is positive semidefinite."""
        x = unvec(v, self.d)
        nrm = max(np.linalg.norm(x), 1.0)
        if np.linalg.norm(x - x.conj().T) > tol * nrm:
            return False
        return bool(np.linalg.eigvalsh(0.5 * (x + x.conj().T)).min() >= -tol * nrm)


def build_standard_rep(omega) -> StandardRep:
    omega = _faithful(as_state(omega))
    return StandardRep(omega)


@dataclass(frozen=True)
class RelativeModular:
    """log Delta_{nu|rho}: X -> (log nu) X - X (log rho) on supp(nu) M supp(rho)."""

    nu: DensityMatrix = field(repr=False)
    rho: DensityMatrix = field(repr=False)

    @cached_property
    def support_projection(self) -> np.ndarray:
        return left_mul(self.nu.support) @ right_mul(self.rho.support)

    @cached_property
    def log_delta(self) -> np.ndarray:
        gen = left_mul(self.nu.log) - right_mul(self.rho.log)
        p = self.support_projection
        return p @ gen @ p

    def power(self, z: complex) -> np.ndarray:
        """Delta_{nu|rho}^z on the support (zero elsewhere)."""
        return left_mul(self.nu.power(z)) @ right_mul(self.rho.power(-z))

    def spectrum(self) -> np.ndarray:
        a = self.nu.probs[self.nu.probs > 0]
        b = self.rho.probs[self.rho.probs > 0]
        return np.sort((np.log(a)[:, None] - np.log(b)[None, :]).ravel())


def relative_modular(nu, rho) -> RelativeModular:
    return RelativeModular(as_state(nu), as_state(rho))


def araki_relative_entropy(nu, rho) -> ExtendedReal:
    """<Omega_nu, log Delta_{rho|nu} Omega_nu> on the Hilbert-Schmidt space."""
    nu, rho = as_state(nu), as_state(rho)
    omega_nu = vec(nu.power(0.5))
    # vectors with a component outside supp(rho) M give -infinity
    p_rho = left_mul(rho.support)
    leak = np.linalg.norm(omega_nu - p_rho @ omega_nu) ** 2
    if leak > 1e-12:
        return ExtendedReal.neg_inf()
    rm = relative_modular(rho, nu)
    return ExtendedReal(float(np.vdot(omega_nu, rm.log_delta @ omega_nu).real))


def modular_group(omega, a, z: complex) -> np.ndarray:
    """sigma_omega^z(A) = omega^{iz} A omega^{-iz}."""
    omega = _faithful(as_state(omega))
    return omega.power(1j * z) @ np.asarray(a) @ omega.power(-1j * z)


def modular_derivation(omega, a) -> np.ndarray:
    """delta_omega(A) = i[log omega, A]."""
    omega = _faithful(as_state(omega))
    return 1j * comm(omega.log, np.asarray(a))


def connes_cocycle(nu, rho, t: float) -> np.ndarray:
    """[D nu : D rho]_{it} = nu^{it} rho^{-it} (system matrix)."""
    nu = _faithful(as_state(nu), "nu")
    rho = _faithful(as_state(rho), "rho")
    return nu.power(1j * t) @ rho.power(-1j * t)


def connes_cocycle_gns(nu, rho, t: float) -> np.ndarray:
    """Delta_{nu|rho}^{it} Delta_rho^{-it} as a d^2 x d^2 operator (it equals pi of the cocycle)."""
    nu = _faithful(as_state(nu), "nu")
    rho = _faithful(as_state(rho), "rho")
    a = sla.expm(1j * t * relative_modular(nu, rho).log_delta)
    b = sla.expm(-1j * t * build_standard_rep(rho).log_delta)
    return a @ b


def standard_liouvillean(sys_or_h) -> np.ndarray:
    """L: X -> H X - X H, so that e^{itL} pi(A) e^{-itL} = pi(tau^t(A))."""
    h = sys_or_h.H if isinstance(sys_or_h, FiniteQDS) else check_hermitian(sys_or_h, name="H")
    return left_mul(h) - right_mul(h)


def c_liouvillean(h_fr, v, omega) -> np.ndarray:
    """K_V X = [H_fr, X] + V X - X omega^{-1/2} V omega^{1/2}.

    Requires a faithful omega with [H_fr, omega] = 0; K_V Omega = 0.
    """
    omega = _faithful(as_state(omega))
    h_fr = check_hermitian(h_fr, name="H_fr")
    v = check_hermitian(v, name="V")
    if np.linalg.norm(comm(h_fr, omega.mat)) > 1e-10 * max(1.0, np.linalg.norm(h_fr)):
        raise NotInvariant("reference state is not invariant under the free dynamics")
    right = omega.power(-0.5) @ v @ omega.power(0.5)
    return left_mul(h_fr) - right_mul(h_fr) + left_mul(v) - right_mul(right)


def araki_perturbation(h, v, beta: float) -> DensityMatrix:
    """Perturbed state from e^{-beta (L + pi(V))/2} Omega_beta, computed on the GNS space."""
    h = check_hermitian(h, name="H")
    v = check_hermitian(v, name="V")
    omega = gibbs(h, beta)
    rep = StandardRep(omega)
    gen = standard_liouvillean(h) + rep.pi(v)
    psi = sla.expm(-0.5 * beta * gen) @ rep.Omega
    x = unvec(psi, rep.d)
    rho = x @ x.conj().T
    return DensityMatrix(rho / np.trace(rho).real)


@dataclass(frozen=True)
class BalanceRecord:
    lhs: float
    rhs: float
    defect: float


def entropy_balance_unitary(nu, omega, u) -> BalanceRecord:
    """Ent(U nu U^H | omega) versus Ent(nu|omega) - i nu(U^H delta_omega(U))."""
    nu = as_state(nu)
    omega = _faithful(as_state(omega))
    u = np.asarray(u, dtype=np.complex128)
    moved = u @ nu.mat @ u.conj().T
    lhs = float(relative_entropy(DensityMatrix(0.5 * (moved + moved.conj().T)), omega))
    corr = -1j * nu.expect(u.conj().T @ modular_derivation(omega, u))
    rhs = float(relative_entropy(nu, omega)) + corr.real
    return BalanceRecord(lhs, rhs, abs(lhs - rhs) + abs(corr.imag))


def liouvillean_kernel_dim(sys_or_h, tol: float = 1e-9) -> int:
    lv = standard_liouvillean(sys_or_h)
    w = np.linalg.eigvalsh(0.5 * (lv + lv.conj().T))
    return int(np.sum(np.abs(w) <= tol))


def perturbed_dynamics(h_fr, v, a, t: float) -> np.ndarray:
    """tau_V^t(A) generated by H_fr + V."""
    h = check_hermitian(np.asarray(h_fr) + np.asarray(v))
    e = eig_hermitian(h)
    u = mat_fn(None, lambda x: np.exp(1j * t * x), eig=e)
    return u @ np.asarray(a) @ u.conj().T


def c_liouvillean_defects(h_fr, v, omega, times, observables) -> tuple[float, float]:
    """(||K_V Omega||, max_t,A ||e^{itK} pi(A) e^{-itK} - pi(tau_V^t(A))||)."""
    omega = as_state(omega)
    k = c_liouvillean(h_fr, v, omega)
    omega_vec = vec(omega.power(0.5))
    kill = float(np.linalg.norm(k @ omega_vec))
    worst = 0.0
    for t in times:
        ut = sla.expm(1j * t * k)
        ut_inv = sla.expm(-1j * t * k)
        for a in observables:
            lhs = ut @ left_mul(a) @ ut_inv
            rhs = left_mul(perturbed_dynamics(h_fr, v, a, t))
            worst = max(worst, float(np.abs(lhs - rhs).max()))
    return kill, worst


def araki_distance(h, v, beta: float) -> float:
    """Trace-norm distance between the GNS-perturbed state and gibbs(H+V)."""
    a = araki_perturbation(h, v, beta)
    b = gibbs(np.asarray(h) + np.asarray(v), beta)
    return trace_norm(a.mat - b.mat)


def modular_log(omega) -> np.ndarray:
    return herm_log(as_state(omega).mat)
