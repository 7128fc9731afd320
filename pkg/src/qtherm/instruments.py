"""Repeated quantum measurements on a finite alphabet.

An instrument is a family of completely positive Heisenberg-picture maps J_a
whose sum Phi is unital. Words are integer arrays of label indices. Entropy
production is the classical divergence Ent(P_n | P^_n) >= 0 (the nonnegative
orientation, opposite to the sign convention of ``qstate.relative_entropy``).
"""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._backend import kernels
from .errors import NotInvariant, ShapeMismatch
from .lindblad import HEISENBERG, Superoperator, cp_check
from .linalg import ExtendedReal, kernel_projection, sandwich, trace_norm, unvec, vec
from .qstate import DensityMatrix, as_state

TABLE_CAP = 10 ** 6
INVARIANCE_TOL = 1e-9
UNITAL_TOL = 1e-11
ZERO_PROB = 1e-15  # table entries at or below this are treated as null events


class Instrument:
    def __init__(self, labels: Sequence, maps: Sequence[Superoperator], check: bool = True):
        if len(labels) != len(maps) or not maps:
            raise ShapeMismatch("one map per label is required")
        d = maps[0].dim
        if any(m.dim != d or m.picture != HEISENBERG for m in maps):
            raise ShapeMismatch("maps must be Heisenberg superoperators of one dimension")
        self.labels = list(labels)
        self.maps = list(maps)
        self.dim = d
        if check:
            self.validate()

    @classmethod
    def from_kraus(cls, labels: Sequence, kraus: Sequence[Sequence[np.ndarray]], check: bool = True
                   ) -> "Instrument":
        """J_a(X) = sum_k K_ak* X K_ak."""
        maps = []
        for ks in kraus:
            ks = [np.asarray(k, dtype=np.complex128) for k in ks]
            mat = sum(sandwich(k.conj().T, k) for k in ks)
            maps.append(Superoperator(mat, ks[0].shape[0], HEISENBERG))
        return cls(labels, maps, check)

    @classmethod
    def luders(cls, labels: Sequence, projections: Sequence[np.ndarray]) -> "Instrument":
        return cls.from_kraus(labels, [[p] for p in projections])

    @classmethod
    def coin(cls, probs: Sequence[float], d: int = 1) -> "Instrument":
        """J_a = p_a Id: outcomes are i.i.d. with law p."""
        eye = np.eye(d * d, dtype=np.complex128)
        return cls(list(range(len(probs))), [Superoperator(p * eye, d) for p in probs])

    @property
    def m(self) -> int:
        return len(self.maps)

    @property
    def phi(self) -> Superoperator:
        return Superoperator(sum(j.matrix for j in self.maps), self.dim, HEISENBERG)

    @property
    def schrodinger(self) -> np.ndarray:
        """Stack (m, d^2, d^2) of S_a = J_a^dagger."""
        return np.stack([j.matrix.conj().T for j in self.maps])

    def validate(self) -> None:
        eye = np.eye(self.dim, dtype=np.complex128)
        unital = float(np.abs(self.phi(eye) - eye).max())
        if unital > UNITAL_TOL:
            raise NotInvariant(f"Phi is not unital (defect {unital:.2e})")
        for lab, j in zip(self.labels, self.maps):
            rec = cp_check(j)
            if not rec.completely_positive:
                raise ShapeMismatch(f"J_{lab} is not completely positive (Choi min {rec.choi_min_eig:.2e})")


def invariant_state(inst: Instrument, iters: int = 200) -> tuple[DensityMatrix, float]:
    """Fixed point of Phi_#: power iteration from 1/d refined by the kernel projection of Phi_# - 1."""
    d = inst.dim
    s = inst.phi.matrix.conj().T
    v = vec(np.eye(d, dtype=np.complex128) / d)
    for _ in range(iters):
        v = s @ v
    v = kernel_projection(s - np.eye(d * d), v)
    rho = unvec(v, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    w, u = np.linalg.eigh(rho)
    rho = (u * np.clip(w, 0, None)) @ u.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(rho), trace_norm(unvec(s @ vec(rho), d) - rho)


def invariance_defect(inst: Instrument, rho) -> float:
    rho = as_state(rho).mat
    return trace_norm(unvec(inst.phi.matrix.conj().T @ vec(rho), inst.dim) - rho)


@dataclass(frozen=True)
class PathLaw:
    """Dense law of the first n outcomes, table[a_1, ..., a_n]."""

    labels: tuple
    table: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.table.ndim

    @property
    def m(self) -> int:
        return len(self.labels)

    def total(self) -> float:
        return float(self.table.sum())

    def marginal(self, k: int) -> "PathLaw":
        """Law of the first k outcomes."""
        if k > self.n:
            raise ShapeMismatch("cannot marginalize to a longer horizon")
        t = self.table.sum(axis=tuple(range(k, self.n))) if k < self.n else self.table
        return PathLaw(self.labels, np.asarray(t))

    def tail_marginal(self, k: int) -> "PathLaw":
        """Law of the last k outcomes (equals marginal(k) for a shift-invariant law)."""
        t = self.table.sum(axis=tuple(range(self.n - k))) if k < self.n else self.table
        return PathLaw(self.labels, np.asarray(t))

    def prob(self, word: Sequence[int]) -> float:
        return float(self.table[tuple(word)])


def _check_theta(theta, m: int) -> np.ndarray:
    th = np.arange(m) if theta is None else np.asarray(theta, dtype=np.int64)
    if th.shape != (m,) or np.any(th[th] != np.arange(m)):
        raise ShapeMismatch("theta must be an involution of the alphabet given as an index array")
    return th


def path_law(inst: Instrument, rho, n: int, check_invariance: bool = True) -> PathLaw:
    """P_n(a_1..a_n) = tr(rho J_{a_1} o ... o J_{a_n}(1)), enumerated densely."""
    rho = as_state(rho)
    if rho.dim != inst.dim:
        raise ShapeMismatch("state and instrument dimensions differ")
    if check_invariance:
        dfc = invariance_defect(inst, rho)
        if dfc > INVARIANCE_TOL:
            raise NotInvariant(f"||Phi_#(rho) - rho||_1 = {dfc:.2e}")
    if inst.m ** n > TABLE_CAP:
        raise ShapeMismatch(f"{inst.m}^{n} entries exceed the dense table cap; use the sampler")
    s = inst.schrodinger
    d = inst.dim
    diag = np.arange(d) * (d + 1)
    vecs = vec(rho.mat)[None, :]
    for _ in range(n):
        # (W, D) -> (W, m, D): word order is row-major so a_1 is the slowest index
        vecs = np.einsum("aij,wj->wai", s, vecs).reshape(-1, d * d)
    probs = vecs[:, diag].sum(axis=1).real
    return PathLaw(tuple(inst.labels), probs.reshape((inst.m,) * n) if n else probs.reshape(()))


def reversed_law(law: PathLaw, theta=None) -> PathLaw:
    """P^_n(a_1..a_n) = P_n(theta(a_n), ..., theta(a_1))."""
    th = _check_theta(theta, law.m)
    t = np.transpose(law.table, tuple(range(law.n - 1, -1, -1)))
    for ax in range(law.n):
        t = np.take(t, th, axis=ax)
    return PathLaw(law.labels, t)


def ep_n(law: PathLaw, theta=None) -> ExtendedReal:
    """Ent(P_n | P^_n) = sum P log(P / P^) >= 0, +inf when P is not dominated by P^."""
    p = law.table.ravel()
    q = reversed_law(law, theta).table.ravel()
    live = p > ZERO_PROB
    if np.any(q[live] <= ZERO_PROB):
        return ExtendedReal.pos_inf()
    val = float(np.sum(p[live] * (np.log(p[live]) - np.log(q[live]))))
    return ExtendedReal(val)


def ep_rate_sequence(inst: Instrument, rho, theta, n_values: Sequence[int]) -> np.ndarray:
    """Ep(P_n, theta)/n for each n (Cesaro diagnostic)."""
    return np.array([float(ep_n(path_law(inst, rho, n), theta)) / n for n in n_values])


# ---------------------------------------------------------------------------
# sampling


def word_probabilities(inst: Instrument, rho, words: np.ndarray) -> np.ndarray:
    """P_n(word) for each row of ``words`` (batched)."""
    rho = as_state(rho)
    s = inst.schrodinger
    d = inst.dim
    words = np.asarray(words, dtype=np.int64)
    v = np.tile(vec(rho.mat), (words.shape[0], 1))
    for k in range(words.shape[1]):
        v = np.einsum("wij,wj->wi", s[words[:, k]], v)
    return v[:, np.arange(d) * (d + 1)].sum(axis=1).real


def sample_paths(inst: Instrument, rho, n: int, n_samples: int, rng: np.random.Generator):
    """(labels (N, n), log P_n(word)) by sequential conditional sampling."""
    rho = as_state(rho)
    u = rng.random((n_samples, n))
    return kernels.sample_paths(inst.schrodinger, vec(rho.mat), inst.dim, u)


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    n_samples: int


def ep_monte_carlo(inst: Instrument, rho, n: int, theta, n_samples: int, rng: np.random.Generator,
                   n_boot: int = 200) -> MCEstimate:
    """Empirical mean of log(P_n(w) / P^_n(w)) over sampled words, bootstrap standard error."""
    th = _check_theta(theta, inst.m)
    words, logp = sample_paths(inst, rho, n, n_samples, rng)
    rev = th[words[:, ::-1]]
    q = word_probabilities(inst, rho, rev)
    if np.any(q <= ZERO_PROB):
        return MCEstimate(float("inf"), 0.0, n_samples)
    x = logp - np.log(q)
    idx = rng.integers(0, n_samples, size=(n_boot, n_samples))
    boots = x[idx].mean(axis=1)
    return MCEstimate(float(x.mean()), float(boots.std(ddof=1)), n_samples)


def write_trajectories(path: str, words: np.ndarray, labels: Sequence) -> None:
    """Line-delimited JSON records {trajectory, step, outcome}; written atomically."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            for i, w in enumerate(np.asarray(words)):
                for k, a in enumerate(w):
                    fh.write(json.dumps({"trajectory": i, "step": k, "outcome": labels[int(a)]}) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# upper decoupling


@dataclass(frozen=True)
class UDRecord:
    best_C: float
    violations: list
    argmax: tuple | None


def upper_decoupling_check(inst: Instrument, rho, n_max: int, candidate_C: float | None = None
                           ) -> UDRecord:
    """Smallest C with P(A and shift^{-k} B) <= C P(A) P(B) over cylinders A in F_k, B in F_m, k + m <= n_max.

    The ratio over unions of atoms is a mediant of atom ratios, so atoms suffice.
    """
    laws = {n: path_law(inst, rho, n) for n in range(1, n_max + 1)}
    best, where = 0.0, None
    violations = []
    for k in range(1, n_max):
        pk = laws[k].table
        for m in range(1, n_max - k + 1):
            pm = laws[m].table
            joint = laws[k + m].table
            prod = np.multiply.outer(pk, pm)
            live = prod > ZERO_PROB
            ratio = np.zeros_like(joint)
            ratio[live] = joint[live] / prod[live]
            idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
            r = float(ratio[idx])
            if r > best:
                best, where = r, (k, m, tuple(int(i) for i in idx))
            if candidate_C is not None:
                for hit in zip(*np.nonzero(ratio > candidate_C)):
                    violations.append((k, m, tuple(int(i) for i in hit), float(ratio[hit])))
    return UDRecord(best, violations, where)
