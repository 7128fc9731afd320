"""Finite quantum dynamical systems: evolution, correlations, KMS and time reversal."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import IncompatibleTimeReversal, OverflowError, ShapeMismatch
from .linalg import HermitianEig, check_hermitian, eig_hermitian, op_norm
from .qstate import EXP_LIMIT, DensityMatrix, as_state


@dataclass(frozen=True)
class FiniteQDS:
    """Hamiltonian H generating tau^t(A) = e^{itH} A e^{-itH}, with reference state omega."""

    H: np.ndarray = field(repr=False)
    omega: DensityMatrix

    def __post_init__(self):
        object.__setattr__(self, "H", check_hermitian(self.H, name="H"))
        object.__setattr__(self, "omega", as_state(self.omega))
        if self.omega.dim != self.H.shape[0]:
            raise ShapeMismatch("state and Hamiltonian dimensions differ")

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @cached_property
    def eig(self) -> HermitianEig:
        return eig_hermitian(self.H)

    @property
    def spread(self) -> float:
        return float(self.eig.values[-1] - self.eig.values[0])

    def to_eigbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eig.vectors
        return v.conj().T @ a @ v

    def from_eigbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eig.vectors
        return v @ a @ v.conj().T

    def phases(self, z: complex) -> np.ndarray:
        """Matrix e^{iz(h_i - h_j)} in the H eigenbasis."""
        h = self.eig.values
        return np.exp(1j * z * (h[:, None] - h[None, :]))

    def heisenberg(self, a, t: float) -> np.ndarray:
        return evolve_heisenberg(self, a, t)

    def state_at(self, t: float) -> np.ndarray:
        """omega_t = e^{-itH} omega e^{itH} (matrix)."""
        return evolve_heisenberg(self, self.omega.mat, -t)


def evolve_heisenberg(sys: FiniteQDS, a, t: complex) -> np.ndarray:
    """tau^t(A) = e^{itH} A e^{-itH}; complex t gives the analytic continuation."""
    a = np.asarray(a, dtype=np.complex128)
    if abs(np.imag(t)) * sys.spread > EXP_LIMIT:
        raise OverflowError("|Im t| * spread(H) too large")
    return sys.from_eigbasis(sys.to_eigbasis(a) * sys.phases(t))


def correlation(sys: FiniteQDS, a, b, z: complex) -> complex:
    """tr(omega A e^{izH} B e^{-izH})."""
    if abs(np.imag(z)) * sys.spread > EXP_LIMIT:
        raise OverflowError("|Im z| * spread(H) too large")
    w = sys.to_eigbasis(sys.omega.mat @ np.asarray(a, dtype=np.complex128))
    bt = sys.to_eigbasis(np.asarray(b, dtype=np.complex128)) * sys.phases(z)
    return complex(np.sum(w.T * bt))


def kms_check(sys: FiniteQDS, beta: float, a, b, t_grid: Iterable[float]) -> float:
    """max_t |F(t + i beta) - omega(tau^t(B) A)| with F(z) = omega(A tau^z(B))."""
    a = np.asarray(a, dtype=np.complex128)
    defect = 0.0
    for t in t_grid:
        lhs = correlation(sys, a, b, t + 1j * beta)
        rhs = complex(np.trace(sys.omega.mat @ evolve_heisenberg(sys, b, t) @ a))
        defect = max(defect, abs(lhs - rhs))
    return defect


@dataclass(frozen=True)
class TimeReversal:
    """Antilinear involution Theta(A) = U conj(A) U^H."""

    theta_unitary: np.ndarray = field(repr=False)

    def __post_init__(self):
        u = np.asarray(self.theta_unitary, dtype=np.complex128)
        d = u.shape[0]
        if np.linalg.norm(u @ u.conj().T - np.eye(d)) > 1e-10 * d:
            raise ShapeMismatch("time reversal matrix is not unitary")
        uu = u @ u.conj()
        if min(np.linalg.norm(uu - np.eye(d)), np.linalg.norm(uu + np.eye(d))) > 1e-10 * d:
            raise ShapeMismatch("U conj(U) must be +-1 for an involution")
        object.__setattr__(self, "theta_unitary", u)

    def __call__(self, a) -> np.ndarray:
        u = self.theta_unitary
        return u @ np.conj(np.asarray(a)) @ u.conj().T


def hermitian_basis(d: int) -> list[np.ndarray]:
    """{1} together with the Hermitian matrix units E_kk, E_jk + E_kj, i(E_jk - E_kj)."""
    basis = [np.eye(d, dtype=np.complex128)]
    for k in range(d):
        e = np.zeros((d, d), dtype=np.complex128)
        e[k, k] = 1
        basis.append(e)
    for j in range(d):
        for k in range(j + 1, d):
            e = np.zeros((d, d), dtype=np.complex128)
            e[j, k] = e[k, j] = 1
            basis.append(e)
            f = np.zeros((d, d), dtype=np.complex128)
            f[j, k] = 1j
            f[k, j] = -1j
            basis.append(f)
    return basis


@dataclass(frozen=True)
class TRIReport:
    tri: bool
    state_defect: float
    dynamics_defect: float


def time_reversal_defect(sys: FiniteQDS, theta: TimeReversal) -> float:
    """||Theta(H) - H|| modulo an additive constant, i.e. how far Theta o tau^t is from tau^{-t} o Theta."""
    diff = theta(sys.H) - sys.H
    diff = diff - np.trace(diff) / sys.dim * np.eye(sys.dim)
    return op_norm(diff)


def is_tri(sys: FiniteQDS, theta: TimeReversal, tol: float = 1e-10) -> TRIReport:
    """Check omega(Theta(A)) = conj(omega(A^H)) on a generating set."""
    dyn = time_reversal_defect(sys, theta)
    if dyn > tol * max(1.0, op_norm(sys.H)):
        raise IncompatibleTimeReversal(f"Theta does not reverse the dynamics (defect {dyn:.2e})")
    w = sys.omega.mat
    defect = 0.0
    for a in hermitian_basis(sys.dim):
        lhs = np.trace(w @ theta(a))
        rhs = np.conj(np.trace(w @ a.conj().T))
        defect = max(defect, abs(lhs - rhs))
    return TRIReport(tri=defect <= tol, state_defect=float(defect), dynamics_defect=dyn)
