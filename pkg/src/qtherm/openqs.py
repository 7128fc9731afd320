"""Open systems: a small system coupled to finite reservoir blocks.

Entropy production observable, entropy balance, NESS by spectral pinching,
Ruelle's decomposition and finite-time linear response.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import FaithfulnessError, NotTRI, ShapeMismatch
from .linalg import (check_hermitian, comm, eig_hermitian, embed, kron, op_norm, partial_trace,
                     spectral_clusters)
from .qdyn import FiniteQDS, TimeReversal, evolve_heisenberg, is_tri
from .qstate import DensityMatrix, as_state, gibbs, relative_entropy
from .quad import adaptive_simpson


@dataclass(frozen=True)
class Part:
    """A tensor factor: the small system (beta=None) or a reservoir at inverse temperature beta."""

    label: str
    H: np.ndarray = field(repr=False)
    beta: float | None = None

    @property
    def dim(self) -> int:
        return np.asarray(self.H).shape[0]


@dataclass(frozen=True)
class Coupling:
    """Hermitian operator acting on the listed parts (tensor order as listed)."""

    op: np.ndarray = field(repr=False)
    parts: tuple[str, ...]


class OpenSystem:
    """H = sum_a H_a + sum_j V_j on the product of the parts.

    The reference state is omega_S kron (kron_j Gibbs(H_j, beta_j)) with
    omega_S = 1/dim unless another faithful omega_S is supplied.
    """

    def __init__(self, parts: Sequence[Part], couplings: Sequence[Coupling] = (), omega_s=None):
        self.parts = list(parts)
        labels = [p.label for p in self.parts]
        if len(set(labels)) != len(labels):
            raise ShapeMismatch("duplicate part labels")
        if sum(p.beta is None for p in self.parts) > 1:
            raise ShapeMismatch("at most one part can be the small system")
        self.index = {lab: k for k, lab in enumerate(labels)}
        self.dims = [p.dim for p in self.parts]
        self.couplings = list(couplings)
        self._omega_s = omega_s
        self.local = [check_hermitian(p.H, name=f"H[{p.label}]") for p in self.parts]
        for c in self.couplings:
            for lab in c.parts:
                if lab not in self.index:
                    raise ShapeMismatch(f"coupling refers to unknown part {lab!r}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def reservoirs(self) -> list[int]:
        return [k for k, p in enumerate(self.parts) if p.beta is not None]

    @property
    def system_index(self) -> int | None:
        for k, p in enumerate(self.parts):
            if p.beta is None:
                return k
        return None

    @property
    def betas(self) -> np.ndarray:
        return np.array([self.parts[k].beta for k in self.reservoirs], dtype=float)

    def embedded(self, k: int) -> np.ndarray:
        return embed(self.local[k], self.dims, [k])

    @cached_property
    def H_fr(self) -> np.ndarray:
        return sum((self.embedded(k) for k in range(len(self.parts))),
                   np.zeros((self.dim, self.dim), dtype=np.complex128))

    @cached_property
    def V_terms(self) -> list[np.ndarray]:
        out = []
        for c in self.couplings:
            pos = [self.index[lab] for lab in c.parts]
            out.append(check_hermitian(embed(c.op, self.dims, pos), name="coupling"))
        return out

    @cached_property
    def V(self) -> np.ndarray:
        return sum(self.V_terms, np.zeros((self.dim, self.dim), dtype=np.complex128))

    @cached_property
    def H(self) -> np.ndarray:
        return self.H_fr + self.V

    @cached_property
    def omega_parts(self) -> list[np.ndarray]:
        out = []
        for k, p in enumerate(self.parts):
            if p.beta is None:
                if self._omega_s is None:
                    out.append(np.eye(p.dim, dtype=np.complex128) / p.dim)
                else:
                    ws = as_state(self._omega_s)
                    if not ws.faithful:
                        raise FaithfulnessError("omega_S must be faithful")
                    out.append(ws.mat)
            else:
                out.append(gibbs(self.local[k], p.beta).mat)
        return out

    @cached_property
    def omega(self) -> DensityMatrix:
        return DensityMatrix(kron(*self.omega_parts))

    @cached_property
    def qds(self) -> FiniteQDS:
        return FiniteQDS(self.H, self.omega)

    def coupling_support_defect(self) -> float:
        """Largest deviation of any V_j from acting trivially outside its declared parts."""
        worst = 0.0
        for c, v in zip(self.couplings, self.V_terms):
            declared = {self.index[lab] for lab in c.parts}
            for k in range(len(self.parts)):
                if k in declared:
                    continue
                keep = [q for q in range(len(self.parts)) if q != k]
                reduced = partial_trace(v, self.dims, keep) / self.dims[k]
                dims_wo = [self.dims[q] for q in keep]
                back = embed(reduced, self.dims, keep) if dims_wo else reduced
                worst = max(worst, op_norm(v - back))
        return worst

    def with_betas(self, betas: Sequence[float]) -> "OpenSystem":
        parts = list(self.parts)
        for k, b in zip(self.reservoirs, betas):
            p = parts[k]
            parts[k] = Part(p.label, p.H, float(b))
        return OpenSystem(parts, self.couplings, self._omega_s)


# ---------------------------------------------------------------------------
# fluxes and entropy balance


@dataclass(frozen=True)
class FluxSet:
    sigma: np.ndarray
    J: list[np.ndarray]
    betas: np.ndarray
    sigma_defect: float  # ||sigma + sum beta_j J_j||
    mean_defect: float  # |omega(sigma)|


def build_fluxes(osys: OpenSystem) -> FluxSet:
    """J_j = i[H_j, V] and sigma = delta_omega(V) = i[log omega, V]."""
    v = osys.V
    fluxes = [1j * comm(osys.embedded(k), v) for k in osys.reservoirs]
    sigma = 1j * comm(osys.omega.log, v)
    sigma = 0.5 * (sigma + sigma.conj().T)
    phen = -sum((b * j for b, j in zip(osys.betas, fluxes)), np.zeros_like(sigma))
    return FluxSet(
        sigma=sigma,
        J=fluxes,
        betas=osys.betas,
        sigma_defect=op_norm(sigma - phen),
        mean_defect=abs(osys.omega.expect(sigma)),
    )


def _expectation_curve(sys: FiniteQDS, a: np.ndarray):
    """s -> omega(tau^s(A)) evaluated in the H eigenbasis."""
    w = sys.to_eigbasis(sys.omega.mat)
    at = sys.to_eigbasis(a)
    h = sys.eig.values
    diff = h[:, None] - h[None, :]
    coef = w.T * at

    def f(s):
        return np.sum(coef * np.exp(1j * s * diff)).real

    return f


@dataclass(frozen=True)
class EntropyBalance:
    ent: float
    integral: float
    defect: float


def entropy_balance(osys: OpenSystem, t: float, tol: float = 1e-10) -> EntropyBalance:
    """Ent(omega_t|omega) against -int_0^t omega_s(sigma) ds (adaptive Simpson)."""
    sys = osys.qds
    sigma = build_fluxes(osys).sigma
    f = _expectation_curve(sys, sigma)
    integral = float(adaptive_simpson(f, 0.0, float(t), tol=tol)) if t != 0 else 0.0
    wt = sys.state_at(t)
    ent = float(relative_entropy(DensityMatrix(0.5 * (wt + wt.conj().T)), osys.omega))
    return EntropyBalance(ent=ent, integral=integral, defect=abs(ent + integral))


# ---------------------------------------------------------------------------
# NESS


def pinching(h: np.ndarray, rho: np.ndarray, tol: float | None = None) -> np.ndarray:
    """sum_k P_k rho P_k over the spectral projections of h."""
    e = eig_hermitian(h)
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.abs(e.values).max()))
    out = np.zeros_like(rho, dtype=np.complex128)
    for idx in spectral_clusters(e.values, tol):
        v = e.vectors[:, idx]
        p = v @ v.conj().T
        out += p @ rho @ p
    return out


def ness_dephase(osys: OpenSystem | FiniteQDS) -> DensityMatrix:
    """Exact Cesaro limit of omega_t: the pinching of omega in the eigenbasis of H."""
    sys = osys.qds if isinstance(osys, OpenSystem) else osys
    rho = pinching(sys.H, sys.omega.mat)
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def ness_entropy_production(osys: OpenSystem) -> float:
    return ness_dephase(osys).expect(build_fluxes(osys).sigma).real


# ---------------------------------------------------------------------------
# Ruelle decomposition


@dataclass(frozen=True)
class RuelleRecord:
    total: float
    deltaS: float
    deltaSigma: float
    defect: float


def decoupled(rho: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    """kron_j tr_{not j}(rho)."""
    return kron(*[partial_trace(rho, dims, [k]) for k in range(len(dims))])


def ruelle_decomposition(osys: OpenSystem, t: float) -> RuelleRecord:
    """-Ent(omega_t|omega) = -Ent(omega_t|omega_t^dec) - Ent(omega_t^dec|omega) over the blocks."""
    wt = osys.qds.state_at(t)
    wt = DensityMatrix(0.5 * (wt + wt.conj().T))
    dec = decoupled(wt.mat, osys.dims)
    dec = DensityMatrix(0.5 * (dec + dec.conj().T))
    total = -float(relative_entropy(wt, osys.omega))
    ds = -float(relative_entropy(wt, dec))
    dsig = -float(relative_entropy(dec, osys.omega))
    return RuelleRecord(total=total, deltaS=ds, deltaSigma=dsig, defect=abs(total - ds - dsig))


# ---------------------------------------------------------------------------
# linear response


def _duhamel_kernel(p: np.ndarray) -> np.ndarray:
    """(p_i - p_j)/(log p_i - log p_j) with diagonal limit p_i."""
    lp = np.log(p)
    num = p[:, None] - p[None, :]
    den = lp[:, None] - lp[None, :]
    close = np.abs(den) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(close, 0.5 * (p[:, None] + p[None, :]), num / np.where(close, 1.0, den))
    return k


def duhamel_correlation(omega, a, b) -> complex:
    """<A|B> = int_0^1 tr(omega^{1-theta} A omega^theta B) dtheta, closed form in the omega eigenbasis."""
    if isinstance(omega, FiniteQDS):
        omega = omega.omega
    omega = as_state(omega)
    if not omega.faithful:
        raise FaithfulnessError("Duhamel correlation needs a faithful state")
    v = omega.eig.vectors
    at = v.conj().T @ np.asarray(a) @ v
    bt = v.conj().T @ np.asarray(b) @ v
    return complex(np.sum(at * bt.T * _duhamel_kernel(omega.probs)))


@dataclass(frozen=True)
class ResponseFamily:
    """States omega_X proportional to exp(-beta H + sum_j X_j H_j): reservoir j at beta - X_j.

    The fiducial state omega_0 is the coupled Gibbs state at beta, which is
    invariant under the full dynamics.
    """

    osys: OpenSystem
    beta: float

    def state(self, x: Sequence[float]) -> DensityMatrix:
        gen = self.beta * self.osys.H
        for xj, k in zip(x, self.osys.reservoirs):
            gen = gen - xj * self.osys.embedded(k)
        return gibbs(gen, 1.0)

    @cached_property
    def qds(self) -> FiniteQDS:
        return FiniteQDS(self.osys.H, gibbs(self.osys.H, self.beta))

    @cached_property
    def fluxes(self) -> list[np.ndarray]:
        return build_fluxes(self.osys).J


@dataclass(frozen=True)
class GreenKuboRecord:
    lhs_fd: float
    rhs_int: float
    defect: float
    tolerance: float


def green_kubo_check(family: ResponseFamily, a, j: int, t: float, h: float = 1e-3,
                     tol: float = 1e-11) -> GreenKuboRecord:
    """d/dX_j omega_X(tau^t(A)) at X=0 against int_0^t <tau^s(A)|Phi_j> ds."""
    a = np.asarray(a, dtype=np.complex128)
    sys = family.qds
    at = evolve_heisenberg(sys, a, t)
    m = len(family.osys.reservoirs)

    def f(step):
        x = np.zeros(m)
        x[j] = step
        return family.state(x).expect(at).real

    def central(step):
        return (f(step) - f(-step)) / (2.0 * step)

    lhs = (4.0 * central(h / 2) - central(h)) / 3.0
    phi = family.fluxes[j]
    omega = sys.omega

    def integrand(s):
        return duhamel_correlation(omega, evolve_heisenberg(sys, a, s), phi).real

    rhs = float(adaptive_simpson(integrand, 0.0, float(t), tol=tol)) if t != 0 else 0.0
    return GreenKuboRecord(lhs_fd=lhs, rhs_int=rhs, defect=abs(lhs - rhs),
                           tolerance=max(1e-6, 10 * h * h))


@dataclass(frozen=True)
class OnsagerRecord:
    L: np.ndarray
    asymmetry: float


def kinetic_coefficients(family: ResponseFamily, t: float) -> np.ndarray:
    """L_jk(t) = int_0^t <tau^s(Phi_k)|Phi_j> ds evaluated exactly in the H eigenbasis."""
    sys = family.qds
    h = sys.eig.values
    p = np.array([sys.to_eigbasis(sys.omega.mat)[i, i].real for i in range(sys.dim)])
    kern = _duhamel_kernel(p)
    diff = h[:, None] - h[None, :]
    small = np.abs(diff) * max(abs(t), 1.0) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        tint = np.where(small, t, (np.exp(1j * t * diff) - 1.0) / (1j * np.where(small, 1.0, diff)))
    fl = [sys.to_eigbasis(x) for x in family.fluxes]
    m = len(fl)
    out = np.zeros((m, m))
    for j in range(m):
        for k in range(m):
            # <tau^s(B)|C> = sum_ab B_ab C_ba e^{is(h_a-h_b)} kern_ab
            out[j, k] = np.sum(fl[k] * fl[j].T * kern * tint).real
    return out


def onsager_check(family: ResponseFamily, t: float, theta: TimeReversal) -> OnsagerRecord:
    """Finite-time kinetic coefficients and their asymmetry (requires time reversal invariance)."""
    rep = is_tri(family.qds, theta)
    if not rep.tri:
        raise NotTRI(f"reference state is not time-reversal invariant (defect {rep.state_defect:.2e})")
    lmat = kinetic_coefficients(family, t)
    return OnsagerRecord(L=lmat, asymmetry=float(np.abs(lmat - lmat.T).max()) if lmat.size else 0.0)
