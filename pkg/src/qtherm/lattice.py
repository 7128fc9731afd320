"""Quantum spin lattices at finite volume."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import OverflowError, ShapeMismatch
from .linalg import check_dim, check_hermitian, comm, embed, op_norm, partial_trace, pauli_string
from .openqs import Coupling, OpenSystem, Part, build_fluxes, entropy_balance
from .qstate import pressure


class Interaction:
    """Map from finite site subsets to Hermitian local operators.

    ``terms`` maps a tuple of distinct sites to an operator acting on those
    sites in the listed order; keys are normalized to ascending order.
    """

    def __init__(self, sites: Iterable[int], dim: int, terms: Mapping[tuple, np.ndarray] | None = None):
        self.sites = sorted(int(s) for s in sites)
        self.dim = int(dim)
        self.terms: dict[tuple[int, ...], np.ndarray] = {}
        for key, op in (terms or {}).items():
            self.add(key, op)

    def add(self, key: Sequence[int], op) -> "Interaction":
        key = tuple(int(k) for k in key)
        if len(set(key)) != len(key) or not key:
            raise ShapeMismatch(f"invalid site subset {key}")
        if any(k not in self.sites for k in key):
            raise ShapeMismatch(f"subset {key} not inside the site set")
        op = check_hermitian(op, name=f"Phi{key}")
        d = self.dim ** len(key)
        if op.shape != (d, d):
            raise ShapeMismatch(f"Phi{key} has shape {op.shape}, expected {(d, d)}")
        order = sorted(range(len(key)), key=lambda i: key[i])
        skey = tuple(key[i] for i in order)
        if list(order) != list(range(len(key))):
            op = _permute(op, self.dim, order)
        self.terms[skey] = self.terms.get(skey, 0) + op
        return self

    def add_pauli(self, sites: Sequence[int], word: str, coeff: float = 1.0) -> "Interaction":
        if len(word) != len(sites):
            raise ShapeMismatch("Pauli word length must match the number of sites")
        return self.add(sites, coeff * pauli_string(word))

    def restricted(self, keep) -> "Interaction":
        """Interaction keeping only the terms inside ``keep``."""
        keep = set(keep)
        out = Interaction(self.sites, self.dim)
        out.terms = {k: v for k, v in self.terms.items() if set(k) <= keep}
        return out


def _permute(op: np.ndarray, dim: int, order: Sequence[int]) -> np.ndarray:
    """Reorder the tensor factors of ``op``: factor order[i] of the input becomes factor i."""
    n = len(order)
    t = op.reshape([dim] * (2 * n))
    perm = list(order) + [n + o for o in order]
    return t.transpose(perm).reshape(op.shape)


def _positions(region: Sequence[int], key: Sequence[int]) -> list[int]:
    idx = {s: i for i, s in enumerate(region)}
    return [idx[k] for k in key]


def local_hamiltonian(phi: Interaction, region: Sequence[int]) -> np.ndarray:
    """H_Lambda = sum_{X subset Lambda} Phi(X) on the sites of ``region`` (tensor order as given)."""
    region = list(region)
    d = phi.dim ** len(region)
    check_dim(d)
    rs = set(region)
    h = np.zeros((d, d), dtype=np.complex128)
    for key, op in phi.terms.items():
        if set(key) <= rs:
            h += embed(op, [phi.dim] * len(region), _positions(region, key))
    return h


def sr_norm(phi: Interaction, lam: float) -> float:
    """sum_n e^{lam n} sup_x sum_{X containing x, |X| = n+1} ||Phi(X)||."""
    by_size: dict[int, dict[int, float]] = {}
    for key, op in phi.terms.items():
        nrm = op_norm(op)
        row = by_size.setdefault(len(key) - 1, {})
        for x in key:
            row[x] = row.get(x, 0.0) + nrm
    return float(sum(math.exp(lam * n) * max(row.values()) for n, row in by_size.items() if row))


@dataclass(frozen=True)
class LocalOp:
    """An operator together with the ordered site list it acts on."""

    op: np.ndarray = field(repr=False)
    sites: tuple[int, ...]


def _extend(a: LocalOp, dim: int, region: Sequence[int]) -> np.ndarray:
    return embed(a.op, [dim] * len(region), _positions(region, a.sites))


def derivation(phi: Interaction, a: LocalOp) -> LocalOp:
    """delta(A) = i sum_{X meets supp A} [Phi(X), A] on the enlarged support."""
    supp = set(a.sites)
    touching = [k for k in phi.terms if supp & set(k)]
    region = sorted(supp.union(*[set(k) for k in touching])) if touching else sorted(supp)
    check_dim(phi.dim ** len(region))
    big = _extend(a, phi.dim, region)
    out = np.zeros_like(big)
    for key in touching:
        out += 1j * comm(embed(phi.terms[key], [phi.dim] * len(region), _positions(region, key)), big)
    return LocalOp(out, tuple(region))


@dataclass(frozen=True)
class BoundRecord:
    lhs: float
    bound: float
    ok: bool


def derivative_bound_check(phi: Interaction, lam: float, a: LocalOp, n: int) -> BoundRecord:
    """||delta^n(A)|| <= 2^n n!/lam^n e^{lam |Lambda_A|} ||Phi||_lam^n ||A||."""
    if n > 4:
        raise OverflowError("derivative bound check limited to n <= 4")
    cur = a
    for _ in range(n):
        cur = derivation(phi, cur)
    lhs = op_norm(cur.op)
    bound = (2.0 ** n * math.factorial(n) / lam ** n * math.exp(lam * len(a.sites))
             * sr_norm(phi, lam) ** n * op_norm(a.op))
    return BoundRecord(lhs=lhs, bound=bound, ok=lhs <= bound * (1 + 1e-9))


def finite_pressure(phi: Interaction, region: Sequence[int], beta: float) -> float:
    """(1/|Lambda|) log tr e^{-beta H_Lambda}."""
    region = list(region)
    if not region:
        return 0.0
    return pressure(local_hamiltonian(phi, region), beta) / len(region)


# ---------------------------------------------------------------------------
# open lattice systems


@dataclass(frozen=True)
class OpenLatticePartition:
    S: tuple[int, ...]
    reservoirs: tuple[tuple[int, ...], ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        blocks = [set(self.S)] + [set(r) for r in self.reservoirs]
        seen: set[int] = set()
        for b in blocks:
            if seen & b:
                raise ShapeMismatch("partition blocks must be disjoint")
            seen |= b
        if len(self.betas) != len(self.reservoirs):
            raise ShapeMismatch("one beta per reservoir is required")

    @property
    def order(self) -> list[int]:
        out = list(self.S)
        for r in self.reservoirs:
            out += list(r)
        return out


def _check_partition(phi: Interaction, part: OpenLatticePartition) -> None:
    res = [set(r) for r in part.reservoirs]
    for key in phi.terms:
        hit = [i for i, r in enumerate(res) if set(key) & r]
        if len(hit) > 1:
            raise ShapeMismatch(f"term {key} couples two reservoirs")


def coupling_terms(phi: Interaction, part: OpenLatticePartition) -> list[np.ndarray]:
    """V_j = sum of Phi(X) with X inside S u R_j meeting both S and R_j (on the partition order)."""
    order = part.order
    s = set(part.S)
    out = []
    for r in part.reservoirs:
        rr = set(r)
        d = phi.dim ** len(order)
        v = np.zeros((d, d), dtype=np.complex128)
        for key, op in phi.terms.items():
            k = set(key)
            if k <= (s | rr) and k & s and k & rr:
                v += embed(op, [phi.dim] * len(order), _positions(order, key))
        out.append(v)
    return out


def reservoir_hamiltonians(phi: Interaction, part: OpenLatticePartition) -> list[np.ndarray]:
    order = part.order
    out = []
    for r in part.reservoirs:
        rr = set(r)
        d = phi.dim ** len(order)
        h = np.zeros((d, d), dtype=np.complex128)
        for key, op in phi.terms.items():
            if set(key) <= rr:
                h += embed(op, [phi.dim] * len(order), _positions(order, key))
        out.append(h)
    return out


@dataclass(frozen=True)
class OpenLatticeRecord:
    sigma: np.ndarray = field(repr=False)
    form_defect: float = 0.0  # first vs second commutator form
    balance_defect: float | None = None


def open_lattice_sigma(phi: Interaction, part: OpenLatticePartition) -> tuple[np.ndarray, np.ndarray]:
    """Both commutator forms of sigma_Lambda on the partition order.

    first: -i sum_j beta_j [H_{Lambda_j}, V_j]; second: i sum_j beta_j [H_Lambda, H_{Lambda_j}].
    """
    _check_partition(phi, part)
    hres = reservoir_hamiltonians(phi, part)
    vs = coupling_terms(phi, part)
    h_all = local_hamiltonian(phi, part.order)
    first = sum((-1j * b * comm(h, v) for b, h, v in zip(part.betas, hres, vs)),
                np.zeros_like(h_all))
    second = sum((1j * b * comm(h_all, h) for b, h in zip(part.betas, hres)), np.zeros_like(h_all))
    return first, second


def to_open_system(phi: Interaction, part: OpenLatticePartition) -> OpenSystem:
    """Export as an OpenSystem with parts S, R_1..R_M (free-boundary reservoir Gibbs states)."""
    _check_partition(phi, part)
    parts = [Part("S", local_hamiltonian(phi, list(part.S)), None)] if part.S else []
    for j, (r, b) in enumerate(zip(part.reservoirs, part.betas)):
        parts.append(Part(f"R{j + 1}", local_hamiltonian(phi, list(r)), float(b)))
    couplings = []
    order = part.order
    for j, v in enumerate(coupling_terms(phi, part)):
        labels = ("S", f"R{j + 1}") if part.S else (f"R{j + 1}",)
        # V_j acts on S u R_j; express it on those factors only
        sites = list(part.S) + list(part.reservoirs[j])
        local = _restrict(v, phi.dim, order, sites)
        couplings.append(Coupling(local, labels))
    return OpenSystem(parts, couplings)


def _restrict(op: np.ndarray, dim: int, order: Sequence[int], sites: Sequence[int]) -> np.ndarray:
    """Reduce an operator acting trivially outside ``sites`` to those sites."""
    keep = _positions(order, sites)
    dims = [dim] * len(order)
    red = partial_trace(op, dims, keep)
    drop = dim ** (len(order) - len(sites))
    # partial_trace keeps factors in ascending position order, which matches ``sites`` order here
    return red / drop


def open_lattice_ep(phi: Interaction, part: OpenLatticePartition, t: float | None = None,
                    tol: float = 1e-10) -> OpenLatticeRecord:
    first, second = open_lattice_sigma(phi, part)
    rec_balance = None
    if t is not None:
        rec_balance = entropy_balance(to_open_system(phi, part), t, tol=tol).defect
    return OpenLatticeRecord(sigma=0.5 * (first + first.conj().T),
                             form_defect=op_norm(first - second), balance_defect=rec_balance)


def sigma_cross_check(phi: Interaction, part: OpenLatticePartition) -> float:
    """||sigma_Lambda - sigma from the exported OpenSystem||."""
    first, _ = open_lattice_sigma(phi, part)
    osys = to_open_system(phi, part)
    return op_norm(first - build_fluxes(osys).sigma)


def ising_chain(n: int, j: float = 1.0, field_: float = 0.0, transverse: float = 0.0) -> Interaction:
    phi = Interaction(range(n), 2)
    for x in range(n - 1):
        if j:
            phi.add_pauli([x, x + 1], "ZZ", j)
    for x in range(n):
        if field_:
            phi.add_pauli([x], "Z", field_)
        if transverse:
            phi.add_pauli([x], "X", transverse)
    return phi


def xy_chain(n: int, j: float = 1.0, field_: float = 0.0) -> Interaction:
    phi = Interaction(range(n), 2)
    for x in range(n - 1):
        phi.add([x, x + 1], j * (pauli_string("XX") + pauli_string("YY")))
    for x in range(n):
        if field_:
            phi.add_pauli([x], "Z", field_)
    return phi
