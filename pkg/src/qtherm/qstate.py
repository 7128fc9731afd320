"""Density matrices, Gibbs states, von Neumann and relative entropies."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError, OverflowError
from .linalg import (CLIP_TOL, ExtendedReal, HermitianEig, check_hermitian, eig_hermitian,
                     herm_log, mat_fn)

EXP_LIMIT = 700.0


class DensityMatrix:
    """Positive semidefinite unit-trace matrix with a cached eigendecomposition.

    Eigenvalues below ``CLIP_TOL`` are clipped to exact zeros; they define the
    kernel used by support-sensitive quantities.
    """

    def __init__(self, mat, trace_tol: float = 1e-10):
        m = check_hermitian(mat, name="density matrix")
        e = eig_hermitian(m)
        if e.values[0] < -1e-9:
            raise DomainError(f"density matrix has negative eigenvalue {e.values[0]:.3e}")
        tr = float(np.sum(e.values))
        if abs(tr - 1.0) > trace_tol:
            raise DomainError(f"density matrix has trace {tr!r}")
        vals = np.where(e.values < CLIP_TOL, 0.0, e.values)
        self.eig = HermitianEig(vals, e.vectors)
        self.mat = m

    @classmethod
    def from_unnormalized(cls, mat) -> "DensityMatrix":
        m = np.asarray(mat, dtype=np.complex128)
        return cls(m / np.trace(m).real)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @property
    def probs(self) -> np.ndarray:
        return self.eig.values

    @property
    def faithful(self) -> bool:
        return bool(np.all(self.eig.values > CLIP_TOL))

    @cached_property
    def support(self) -> np.ndarray:
        v = self.eig.vectors[:, self.eig.values > 0]
        return v @ v.conj().T

    @cached_property
    def log(self) -> np.ndarray:
        """log of the state restricted to its support (zero on the kernel)."""
        return herm_log(None, support=True, eig=self.eig)

    def power(self, p: complex) -> np.ndarray:
        """p-th power on the support."""
        return mat_fn(None, lambda x: np.exp(p * np.log(x)), support=True, eig=self.eig)

    def expect(self, a) -> complex:
        return complex(np.trace(self.mat @ np.asarray(a)))

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def as_state(x) -> DensityMatrix:
    return x if isinstance(x, DensityMatrix) else DensityMatrix(x)


@dataclass(frozen=True)
class GibbsSpec:
    H: np.ndarray = field(repr=False)
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "H", check_hermitian(self.H, name="H"))


def _spec(spec_or_h, beta):
    if isinstance(spec_or_h, GibbsSpec):
        return spec_or_h
    return GibbsSpec(np.asarray(spec_or_h), 1.0 if beta is None else float(beta))


def gibbs(spec_or_h, beta: float | None = None) -> DensityMatrix:
    """Gibbs state e^{-beta H}/tr(e^{-beta H}) via a shifted exponent."""
    spec = _spec(spec_or_h, beta)
    e = eig_hermitian(spec.H)
    x = -spec.beta * e.values
    spread = float(x.max() - x.min())
    if spread > EXP_LIMIT:
        raise OverflowError(f"beta*spread(H) = {spread:.1f} exceeds {EXP_LIMIT}")
    w = np.exp(x - x.max())
    w /= w.sum()
    v = e.vectors
    return DensityMatrix((v * w) @ v.conj().T)


def pressure(spec_or_h, beta: float | None = None) -> float:
    """log tr e^{-beta H}."""
    spec = _spec(spec_or_h, beta)
    x = -spec.beta * eig_hermitian(spec.H).values
    top = x.max()
    return float(top + np.log(np.sum(np.exp(x - top))))


def _xlogx(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    pos = p > 0
    out[pos] = p[pos] * np.log(p[pos])
    return out


def von_neumann_entropy(nu) -> float:
    nu = as_state(nu)
    return float(-np.sum(_xlogx(nu.probs)))


def support_contained(nu: DensityMatrix, rho: DensityMatrix) -> bool:
    """True iff supp(nu) is inside supp(rho)."""
    ker = rho.eig.vectors[:, rho.eig.values == 0]
    if ker.shape[1] == 0:
        return True
    leak = np.trace(ker.conj().T @ nu.mat @ ker).real
    return leak <= CLIP_TOL


def relative_entropy(nu, rho) -> ExtendedReal:
    """Ent(nu|rho) = tr nu (log rho - log nu) <= 0; tagged -inf if supp(nu) not in supp(rho)."""
    nu, rho = as_state(nu), as_state(rho)
    if not support_contained(nu, rho):
        return ExtendedReal.neg_inf()
    v = rho.eig.vectors
    pops = np.einsum("ki,kl,li->i", v.conj(), nu.mat, v).real
    lr = np.zeros_like(rho.probs)
    pos = rho.probs > 0
    lr[pos] = np.log(rho.probs[pos])
    cross = float(np.sum(pops[pos] * lr[pos]))
    return ExtendedReal(cross - float(np.sum(_xlogx(nu.probs))))


@dataclass(frozen=True)
class VariationalRecord:
    lhs: float
    pressure: float
    gap: float


def gibbs_variational_check(spec_or_h, nu, beta: float | None = None) -> VariationalRecord:
    """Gap P(beta) - (S(nu) - beta nu(H)) of the finite Gibbs variational principle."""
    spec = _spec(spec_or_h, beta)
    nu = as_state(nu)
    lhs = von_neumann_entropy(nu) - spec.beta * nu.expect(spec.H).real
    p = pressure(spec)
    return VariationalRecord(lhs=lhs, pressure=p, gap=p - lhs)
