"""Dense complex linear algebra: spectral calculus, tensor products, partial traces.

Superoperators throughout the package use column-stacking vectorization,
``vec(A X B) = (B^T kron A) vec(X)``; see :data:`VEC_CONVENTION`.
"""
from __future__ import annotations

import contextlib
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from ._backend import kernels
from .errors import ConvergenceFailure, DomainError, NotHermitian, OverflowError, ShapeMismatch

VEC_CONVENTION = "column-stacking"
HERM_TOL = 1e-10
CLIP_TOL = 1e-12

_max_dim = 4096


def max_dim() -> int:
    return _max_dim


def set_max_dim(n: int) -> None:
    global _max_dim
    _max_dim = int(n)


@contextlib.contextmanager
def dim_cap(n: int):
    """Temporarily change the global Hilbert-space dimension cap."""
    old = _max_dim
    set_max_dim(n)
    try:
        yield
    finally:
        set_max_dim(old)


def check_dim(d: int) -> None:
    if d > _max_dim:
        raise OverflowError(f"dimension {d} exceeds the configured maximum {_max_dim}")


# ---------------------------------------------------------------------------
# basic validation


def as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    return a


def hermitian_defect(a: np.ndarray) -> float:
    nrm = np.linalg.norm(a)
    if nrm == 0:
        return 0.0
    return float(np.linalg.norm(a - a.conj().T) / nrm)


def check_hermitian(a, tol: float = HERM_TOL, name: str = "matrix") -> np.ndarray:
    """Validate Hermiticity (relative Frobenius tolerance) and return (A + A^H)/2."""
    a = as_matrix(a)
    if hermitian_defect(a) > tol:
        raise NotHermitian(f"{name} is not Hermitian (relative defect {hermitian_defect(a):.2e})")
    return 0.5 * (a + a.conj().T)


def is_hermitian(a, tol: float = HERM_TOL) -> bool:
    return hermitian_defect(as_matrix(a)) <= tol


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def comm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def anticomm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b + b @ a


# ---------------------------------------------------------------------------
# spectral calculus


@dataclass(frozen=True)
class HermitianEig:
    values: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        v = self.vectors
        return (v * self.values) @ v.conj().T

    def apply(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        v = self.vectors
        return (v * f(self.values)) @ v.conj().T


def eig_hermitian(a, method: str = "lapack") -> HermitianEig:
    """Eigen-decomposition of a Hermitian matrix with ascending eigenvalues.

    ``method="lapack"`` uses the Householder + implicit QL/QR driver of LAPACK
    (``zheev``); ``method="ql"`` uses the package's own kernel implementing
    the same algorithm.
    """
    a = check_hermitian(a)
    if method == "lapack":
        try:
            w, v = sla.eigh(a, driver="ev")
        except np.linalg.LinAlgError as exc:
            raise ConvergenceFailure(str(exc)) from exc
    elif method == "ql":
        try:
            w, v = kernels.tridiag_ql_eigh(a)
        except RuntimeError as exc:
            raise ConvergenceFailure(str(exc)) from exc
    else:
        raise ValueError(f"unknown method {method!r}")
    return HermitianEig(np.asarray(w, dtype=float), np.asarray(v, dtype=np.complex128))


def mat_fn(a, f: Callable[[np.ndarray], np.ndarray], support: bool = False,
           eig: HermitianEig | None = None) -> np.ndarray:
    """Return V f(lambda) V^H for Hermitian A.

    With ``support=True`` the function is only evaluated on eigenvalues above
    the clipping threshold; the kernel is mapped to zero (e.g. a support-
    restricted logarithm or inverse).
    """
    e = eig if eig is not None else eig_hermitian(a)
    lam = e.values
    if support:
        mask = lam > CLIP_TOL
        vals = np.zeros(lam.shape, dtype=np.complex128)
        with np.errstate(all="ignore"):
            vals[mask] = f(lam[mask])
    else:
        with np.errstate(all="ignore"):
            vals = np.asarray(f(lam), dtype=np.complex128)
    if vals.shape != lam.shape:
        vals = np.broadcast_to(vals, lam.shape).astype(np.complex128)
    if not np.all(np.isfinite(vals)):
        raise DomainError("function undefined on the spectrum")
    v = e.vectors
    out = (v * vals) @ v.conj().T
    if np.all(vals.imag == 0):
        out = 0.5 * (out + out.conj().T)
    return out


def _pos_check(lam: np.ndarray, what: str) -> None:
    if np.any(lam <= 0):
        raise DomainError(f"{what} requires a strictly positive spectrum (min {lam.min():.3e})")


def herm_log(a, support: bool = False, eig: HermitianEig | None = None) -> np.ndarray:
    e = eig if eig is not None else eig_hermitian(a)
    if not support:
        _pos_check(e.values, "log")
    return mat_fn(None, np.log, support=support, eig=e)


def herm_pow(a, p: complex, support: bool = False, eig: HermitianEig | None = None) -> np.ndarray:
    e = eig if eig is not None else eig_hermitian(a)
    if not support:
        if np.real(p) < 0 or np.imag(p) != 0:
            _pos_check(e.values, "power")
        elif np.any(e.values < -CLIP_TOL):
            raise DomainError("fractional power of a matrix with negative eigenvalues")
    lam_pow = (lambda x: np.exp(p * np.log(x))) if not (np.real(p) > 0 and np.imag(p) == 0) else \
        (lambda x: np.clip(x, 0, None) ** p)
    return mat_fn(None, lam_pow, support=support, eig=e)


def herm_exp(a, scale: complex = 1.0, eig: HermitianEig | None = None) -> np.ndarray:
    e = eig if eig is not None else eig_hermitian(a)
    return mat_fn(None, lambda x: np.exp(scale * x), eig=e)


def expi(h, t: float, eig: HermitianEig | None = None) -> np.ndarray:
    """Unitary e^{itH}."""
    return herm_exp(h, 1j * t, eig=eig)


# ---------------------------------------------------------------------------
# tensor algebra


def kron(*ops) -> np.ndarray:
    ops = [np.asarray(o, dtype=np.complex128) for o in ops]
    dim = 1
    for o in ops:
        dim *= o.shape[0]
    check_dim(dim)
    out = np.ones((1, 1), dtype=np.complex128)
    for o in ops:
        out = np.kron(out, o)
    return out


def embed(op, dims: Sequence[int], positions: Sequence[int]) -> np.ndarray:
    """Place ``op`` (acting on factors ``positions``, in that order) into the full product."""
    dims = [int(x) for x in dims]
    positions = [int(p) for p in positions]
    total = int(np.prod(dims)) if dims else 1
    check_dim(total)
    op = np.asarray(op, dtype=np.complex128)
    sub = [dims[p] for p in positions]
    if op.shape != (int(np.prod(sub)), int(np.prod(sub))):
        raise ShapeMismatch(f"operator shape {op.shape} does not match factors {sub}")
    if len(set(positions)) != len(positions):
        raise ShapeMismatch("repeated factor positions")
    rest = [k for k in range(len(dims)) if k not in positions]
    d_rest = int(np.prod([dims[k] for k in rest])) if rest else 1
    full = np.kron(op, np.eye(d_rest, dtype=np.complex128))
    order = positions + rest
    n = len(dims)
    t = full.reshape([dims[k] for k in order] * 2)
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    return t.reshape(total, total)


def partial_trace(a, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every factor not listed in ``keep`` (kept factors stay in ascending order)."""
    a = np.asarray(a, dtype=np.complex128)
    dims = [int(x) for x in dims]
    total = int(np.prod(dims)) if dims else 1
    if a.shape != (total, total):
        raise ShapeMismatch(f"matrix shape {a.shape} does not match dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise ShapeMismatch(f"keep indices {keep} out of range")
    n = len(dims)
    t = a.reshape(dims * 2)
    letters = "abcdefghijklmnopqrstuvwxyz"
    ABC = letters.upper()
    if 2 * n > 52:
        raise ShapeMismatch("too many factors")
    row = [letters[i] for i in range(n)]
    col = [letters[i] if i not in keep else ABC[i] for i in range(n)]
    out = "".join(letters[i] for i in keep) + "".join(ABC[i] for i in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return res.reshape(dk, dk)


# ---------------------------------------------------------------------------
# vectorization and superoperators (column stacking)


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(math.sqrt(v.size)))
    if d * d != v.size:
        raise ShapeMismatch("vector length is not a perfect square")
    return v.reshape(d, d, order="F")


def left_mul(a: np.ndarray) -> np.ndarray:
    """Superoperator X -> A X."""
    a = np.asarray(a, dtype=np.complex128)
    return np.kron(np.eye(a.shape[0]), a)


def right_mul(b: np.ndarray) -> np.ndarray:
    """Superoperator X -> X B."""
    b = np.asarray(b, dtype=np.complex128)
    return np.kron(b.T, np.eye(b.shape[0]))


def sandwich(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Superoperator X -> A X B."""
    return np.kron(np.asarray(b).T, np.asarray(a))


def apply_super(s: np.ndarray, x: np.ndarray) -> np.ndarray:
    return unvec(s @ vec(x), x.shape[0])


def choi_matrix(s: np.ndarray, d: int) -> np.ndarray:
    """Choi matrix sum_ij E_ij kron S(E_ij)."""
    c = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=np.complex128)
            e[i, j] = 1.0
            c[i * d:(i + 1) * d, j * d:(j + 1) * d] = apply_super(s, e)
    return c


def kernel_projection(m: np.ndarray, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Project ``x`` onto Ker(M) along Ran(M).

    Valid when 0 is a semisimple eigenvalue of M (true for generators of
    bounded semigroups and for Phi - 1 with Phi a channel). This is the
    Cesaro/ergodic projection applied to ``x``.
    """
    u, s, vh = np.linalg.svd(m)
    scale = max(s[0], 1.0) if s.size else 1.0
    null = s <= tol * scale
    k = vh[null].conj().T  # right kernel
    l_ = u[:, null]  # left kernel of M (kernel of M^H)
    if k.shape[1] == 0:
        return np.zeros_like(x)
    g = l_.conj().T @ k
    return k @ np.linalg.solve(g, l_.conj().T @ x)


# ---------------------------------------------------------------------------
# norms, Pauli algebra, misc


def trace_norm(a: np.ndarray) -> float:
    return float(np.sum(np.linalg.svd(a, compute_uv=False)))


def op_norm(a: np.ndarray) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


PAULI = {
    "I": np.eye(2, dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def pauli_string(s: str) -> np.ndarray:
    """'XXI' -> sigma_x kron sigma_x kron 1."""
    s = s.strip().upper()
    if not s or any(c not in PAULI for c in s):
        raise ValueError(f"invalid Pauli string {s!r}")
    return kron(*[PAULI[c] for c in s])


def spectral_clusters(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Group sorted eigenvalues into clusters separated by gaps larger than tol."""
    groups: list[list[int]] = []
    for i, x in enumerate(values):
        if groups and abs(x - values[groups[-1][-1]]) <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


# ---------------------------------------------------------------------------
# random ensembles (used by tests, benchmarks and the CLI)


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (g + g.conj().T) / 2
    return scale * h / math.sqrt(d)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    g = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


# ---------------------------------------------------------------------------
# extended reals


@dataclass(frozen=True)
class ExtendedReal:
    """A real number or a tagged infinity. Never uses float sentinels internally."""

    value: float = 0.0
    kind: str = "finite"  # "finite", "-inf" or "+inf"

    @classmethod
    def neg_inf(cls) -> "ExtendedReal":
        return cls(0.0, "-inf")

    @classmethod
    def pos_inf(cls) -> "ExtendedReal":
        return cls(0.0, "+inf")

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def is_neg_inf(self) -> bool:
        return self.kind == "-inf"

    @property
    def is_pos_inf(self) -> bool:
        return self.kind == "+inf"

    def __float__(self) -> float:
        if self.kind == "finite":
            return float(self.value)
        return -math.inf if self.kind == "-inf" else math.inf

    def __neg__(self) -> "ExtendedReal":
        if self.kind == "finite":
            return ExtendedReal(-self.value)
        return ExtendedReal(0.0, "+inf" if self.kind == "-inf" else "-inf")

    def _cmp_key(self, other):
        return float(self), float(other)

    def __lt__(self, other):
        a, b = self._cmp_key(other)
        return a < b

    def __le__(self, other):
        a, b = self._cmp_key(other)
        return a <= b

    def __gt__(self, other):
        a, b = self._cmp_key(other)
        return a > b

    def __ge__(self, other):
        a, b = self._cmp_key(other)
        return a >= b

    def __eq__(self, other):
        if isinstance(other, (ExtendedReal, int, float)):
            a, b = self._cmp_key(other)
            return a == b
        return NotImplemented

    def __hash__(self):
        return hash(float(self))

    def __repr__(self) -> str:
        if self.kind == "finite":
            return f"ExtendedReal({self.value!r})"
        return f"ExtendedReal({self.kind})"
