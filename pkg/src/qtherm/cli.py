"""Command-line runner: YAML config in, CSV tables plus a JSON sidecar out.

Usage: qtherm <experiment> --config PATH [--out DIR] [--seed N] [--assert] [--max-dim N]
       qtherm --list
Exit codes: 0 success, 2 config error, 3 assertion breach, 4 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, OverflowError, QthermError
from .linalg import check_dim, left_mul, pauli_string, random_density, random_hermitian, set_max_dim

EXIT_OK, EXIT_CONFIG, EXIT_ASSERT, EXIT_CAP = 0, 2, 3, 4

EXPERIMENTS = {
    "gibbs": "Gibbs variational principle: pressure vs energy-entropy gap over random states",
    "kms": "KMS boundary condition defect of the Gibbs state along a time grid",
    "modular": "Connes cocycle identities, Araki relative entropy and perturbed-state distance",
    "openqs-balance": "Entropy balance of a partitioned open system along a time grid",
    "ruelle": "Split of the entropy change into correlation and reservoir parts",
    "ttmep": "Two-time measurement entropy-production law and its generating function",
    "bmv": "Alternative generating function compared with the two-time measurement one",
    "ancilla": "Ancilla-qubit readout of the generating function at imaginary parameters",
    "lattice": "Spin-lattice derivation bounds, pressure and open-lattice entropy production",
    "lindblad": "Lindblad semigroup: complete positivity, detailed balance, invariant state",
    "weak-coupling": "Generator extraction from a qubit coupled to finitely many fermionic modes",
    "fermi": "Quasi-free fermions: characteristic function, Wick pairings, KMS, doubled representation",
    "instruments": "Repeated measurements: path laws, entropy production, sampling, decoupling constant",
}


# ---------------------------------------------------------------------------
# schema


def _err(errors, path, msg):
    errors.append((path, msg))


def _int(v, path, errors, lo=None):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        _err(errors, path, f"expected an integer, got {v!r}")
        return None
    if lo is not None and v < lo:
        _err(errors, path, f"must be >= {lo}")
    return int(v)


def _float(v, path, errors, positive=False):
    if isinstance(v, bool):
        _err(errors, path, f"expected a number, got {v!r}")
        return None
    try:
        x = float(v)  # PyYAML reads "1e-9" as a string
    except (TypeError, ValueError):
        _err(errors, path, f"expected a number, got {v!r}")
        return None
    if not np.isfinite(x) or (positive and x <= 0):
        _err(errors, path, "must be finite" + (" and positive" if positive else ""))
    return x


def _list(v, path, errors, item, **kw):
    if not isinstance(v, list):
        _err(errors, path, "expected a list")
        return None
    return [item(x, f"{path}[{i}]", errors, **kw) for i, x in enumerate(v)]


def _float_list(v, path, errors, **kw):
    return _list(v, path, errors, _float, **kw)


def _int_list(v, path, errors, **kw):
    return _list(v, path, errors, _int, **kw)


def _matrix_spec(v, path, errors):
    """Pauli string, or rows of entries that are numbers or [re, im] pairs."""
    if isinstance(v, str):
        if not v or any(c not in "IXYZ" for c in v.upper()):
            _err(errors, path, f"invalid Pauli string {v!r}")
        return v.upper()
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        _err(errors, path, "expected a Pauli string or a list of rows")
        return None
    n = len(v)
    rows = []
    for i, r in enumerate(v):
        if len(r) != n:
            _err(errors, f"{path}[{i}]", "matrix must be square")
        row = []
        for j, e in enumerate(r):
            p = f"{path}[{i}][{j}]"
            if isinstance(e, list):
                if len(e) != 2:
                    _err(errors, p, "complex entries are [re, im]")
                    row.append([0.0, 0.0])
                else:
                    row.append([_float(e[0], p, errors), _float(e[1], p, errors)])
            else:
                row.append([_float(e, p, errors), 0.0])
        rows.append(row)
    return rows


def matrix_from_spec(spec) -> np.ndarray:
    if isinstance(spec, str):
        return pauli_string(spec)
    return np.array([[complex(re, im) for re, im in row] for row in spec], dtype=np.complex128)


def _term(v, path, errors):
    if not isinstance(v, dict):
        _err(errors, path, "a term is a mapping with 'pauli' or 'matrix'")
        return None
    unknown = set(v) - {"sites", "pauli", "matrix", "coeff"}
    for k in sorted(unknown):
        _err(errors, f"{path}.{k}", "unknown key")
    if ("pauli" in v) == ("matrix" in v):
        _err(errors, path, "give exactly one of 'pauli' and 'matrix'")
        return None
    out: dict[str, Any] = {"coeff": _float(v.get("coeff", 1.0), f"{path}.coeff", errors)}
    if "pauli" in v:
        out["pauli"] = _matrix_spec(v["pauli"], f"{path}.pauli", errors)
        width = len(out["pauli"]) if isinstance(out["pauli"], str) else 0
    else:
        out["matrix"] = _matrix_spec(v["matrix"], f"{path}.matrix", errors)
        width = None
    sites = v.get("sites", list(range(width)) if width else None)
    if sites is None:
        _err(errors, f"{path}.sites", "required for matrix terms")
    else:
        out["sites"] = _int_list(sites, f"{path}.sites", errors, lo=0)
        if width and out["sites"] is not None and len(out["sites"]) != width:
            _err(errors, f"{path}.sites", "length must match the Pauli string")
    return out


def _kraus(v, path, errors):
    if not isinstance(v, dict) or set(v) - {"label", "ops"} or "ops" not in v:
        _err(errors, path, "an outcome is a mapping with 'label' and 'ops'")
        return None
    return {"label": str(v.get("label", "")),
            "ops": _list(v["ops"], f"{path}.ops", errors, _matrix_spec)}


def _bool(v, path, errors):
    if not isinstance(v, bool):
        _err(errors, path, "expected true or false")
    return bool(v)


def _str(v, path, errors):
    if not isinstance(v, str):
        _err(errors, path, "expected a string")
    return str(v)


def _formats(v, path, errors):
    out = _list(v, path, errors, _str)
    if out is not None:
        for f in out:
            if f not in ("csv", "json"):
                _err(errors, path, f"unknown format {f!r}")
    return out


def _opt(check):
    def inner(v, path, errors, **kw):
        return None if v is None else check(v, path, errors, **kw)
    return inner


SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "model": {
        "sites": (_int, 2),
        "local_dim": (_int, 2),
        "terms": (_opt(lambda v, p, e: _list(v, p, e, _term)), None),
        "beta": (lambda v, p, e: _float(v, p, e, positive=True), 1.0),
        "system": (_opt(_int_list), None),
        "reservoirs": (_opt(lambda v, p, e: _list(v, p, e, _int_list)), None),
        "betas": (_opt(lambda v, p, e: _float_list(v, p, e, positive=True)), None),
        "upsilon": (_opt(_matrix_spec), None),
        "jumps": (_opt(lambda v, p, e: _list(v, p, e, _matrix_spec)), None),
        "modes": (_int, 3),
        "h": (_opt(_matrix_spec), None),
        "mode_energies": (_float_list, [1.3, 1.7, 2.4, 2.9]),
        "couplings": (_float_list, [0.6, 0.5, 0.4, 0.3]),
        "kraus": (_opt(lambda v, p, e: _list(v, p, e, _kraus)), None),
        "theta": (_opt(_int_list), None),
        "state": (_opt(_matrix_spec), None),
    },
    "run": {
        "times": (_float_list, [0.5, 1.0, 2.0]),
        "alphas": (_float_list, [round(0.1 * k, 10) for k in range(11)]),
        "tol": (lambda v, p, e: _float(v, p, e, positive=True), 1e-9),
        "seed": (_int, 0),
        "samples": (lambda v, p, e: _int(v, p, e, lo=1), 1000),
        "pairs": (lambda v, p, e: _int(v, p, e, lo=1), 10),
        "n": (lambda v, p, e: _int(v, p, e, lo=1), 4),
        "lambdas": (lambda v, p, e: _float_list(v, p, e, positive=True), [0.4, 0.2, 0.1]),
        "t_rescaled": (lambda v, p, e: _float(v, p, e, positive=True), 1.0),
    },
    "output": {
        "dir": (_str, "qtherm-out"),
        "formats": (_formats, ["csv", "json"]),
        "trajectories": (_bool, False),
    },
}


def validate(text_or_dict) -> dict:
    """Parse and normalize a config; raises ConfigError listing every problem found."""
    errors: list[tuple[str, str]] = []
    if isinstance(text_or_dict, dict):
        raw = text_or_dict
    else:
        try:
            raw = yaml.safe_load(text_or_dict) if text_or_dict else None
        except yaml.YAMLError as exc:
            raise ConfigError([("<document>", f"not valid YAML: {exc}")]) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError([("<document>", "top level must be a mapping")])
    out: dict[str, Any] = {}
    for k in sorted(set(raw) - {"experiment", *SCHEMA}):
        _err(errors, k, "unknown key")
    exp = raw.get("experiment")
    if exp is None:
        _err(errors, "experiment", "required; one of " + ", ".join(EXPERIMENTS))
    elif exp not in EXPERIMENTS:
        _err(errors, "experiment", f"unknown experiment {exp!r}")
    out["experiment"] = exp
    for block, fields in SCHEMA.items():
        given = raw.get(block) or {}
        if not isinstance(given, dict):
            _err(errors, block, "expected a mapping")
            given = {}
        for k in sorted(set(given) - set(fields)):
            _err(errors, f"{block}.{k}", "unknown key")
        norm = {}
        for k, (check, default) in fields.items():
            v = given.get(k, default)
            norm[k] = check(v, f"{block}.{k}", errors) if v is not None else None
        out[block] = norm
    if not errors:
        _fill_model(out, errors)
    if errors:
        raise ConfigError(errors)
    return out


def _fill_model(cfg: dict, errors) -> None:
    m = cfg["model"]
    n = m["sites"]
    if n < 1:
        _err(errors, "model.sites", "must be >= 1")
        return
    if m["local_dim"] < 2:
        _err(errors, "model.local_dim", "must be >= 2")
    if m["terms"] is None:
        terms = [{"coeff": 1.0, "pauli": "ZZ", "sites": [x, x + 1]} for x in range(n - 1)]
        terms += [{"coeff": 0.5, "pauli": "X", "sites": [x]} for x in range(n)]
        terms += [{"coeff": 0.3, "pauli": "Z", "sites": [x]} for x in range(n)]
        m["terms"] = terms
    for i, t in enumerate(m["terms"]):
        if any(s >= n for s in t["sites"]):
            _err(errors, f"model.terms[{i}].sites", f"site index outside 0..{n - 1}")
        if "pauli" in t and m["local_dim"] != 2:
            _err(errors, f"model.terms[{i}].pauli", "Pauli strings need local_dim 2")
    if m["system"] is None:
        m["system"] = [0] if n > 1 else []
    if m["reservoirs"] is None:
        rest = [x for x in range(n) if x not in m["system"]]
        m["reservoirs"] = [rest] if rest else []
    if m["betas"] is None:
        m["betas"] = [m["beta"] * (1 + 0.5 * j) for j in range(len(m["reservoirs"]))]
    if len(m["betas"]) != len(m["reservoirs"]):
        _err(errors, "model.betas", "one inverse temperature per reservoir")
    if m["theta"] is not None:
        th = m["theta"]
        if sorted(th) != list(range(len(th))) or any(th[th[i]] != i for i in range(len(th))):
            _err(errors, "model.theta", "must be an involution of 0..m-1")


def serialize(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# results


@dataclass
class Table:
    columns: list[tuple[str, str, list]]  # (name, unit, values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"{name} [{unit}]" for name, unit, _ in self.columns])
        n = len(self.columns[0][2]) if self.columns else 0
        for i in range(n):
            w.writerow([_fmt(col[2][i]) for col in self.columns])
        return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    relation: str = "<="  # value <= bound, or value >= bound

    @property
    def ok(self) -> bool:
        if not np.isfinite(self.value):
            return self.relation == ">=" and self.value > 0
        return self.value <= self.bound if self.relation == "<=" else self.value >= self.bound


@dataclass
class ResultSet:
    experiment: str
    metadata: dict
    tables: dict[str, Table] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def payload(self) -> dict:
        """Everything except wall-clock timestamps (used for reproducibility comparisons)."""
        return {
            "experiment": self.experiment,
            "config_hash": self.metadata.get("config_hash"),
            "tables": {k: [(n, u, [_fmt(x) for x in v]) for n, u, v in t.columns]
                       for k, t in self.tables.items()},
            "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
            "checks": [(c.name, _fmt(c.value), _fmt(c.bound), c.relation, c.ok) for c in self.checks],
        }


def _jsonable(x):
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    return x


def _atomic_write(path: str, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_results(rs: ResultSet, out_dir: str, formats=("csv", "json")) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        for name, table in rs.tables.items():
            p = os.path.join(out_dir, f"{rs.experiment}_{name}.csv")
            _atomic_write(p, table.to_csv())
            written.append(p)
    if "json" in formats:
        side = {"metadata": rs.metadata, **{k: v for k, v in rs.payload().items() if k != "tables"},
                "tables": {k: [f"{rs.experiment}_{k}.csv"] for k in rs.tables}, "ok": rs.ok}
        p = os.path.join(out_dir, f"{rs.experiment}.json")
        _atomic_write(p, json.dumps(side, indent=2, sort_keys=True) + "\n")
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# model builders


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QTHERM_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items) -> list:
    """Map over grid points; results come back in input order."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def build_interaction(cfg: dict):
    from .lattice import Interaction

    m = cfg["model"]
    phi = Interaction(range(m["sites"]), m["local_dim"])
    for t in m["terms"]:
        op = matrix_from_spec(t["pauli"] if "pauli" in t else t["matrix"])
        phi.add(t["sites"], t["coeff"] * op)
    return phi


def build_hamiltonian(cfg: dict) -> np.ndarray:
    from .lattice import local_hamiltonian

    m = cfg["model"]
    check_dim(m["local_dim"] ** m["sites"])
    return local_hamiltonian(build_interaction(cfg), list(range(m["sites"])))


def build_partition(cfg: dict):
    from .lattice import OpenLatticePartition

    m = cfg["model"]
    return OpenLatticePartition(tuple(m["system"]), tuple(tuple(r) for r in m["reservoirs"]),
                                tuple(m["betas"]))


def build_open_system(cfg: dict):
    from .lattice import to_open_system

    m = cfg["model"]
    check_dim(m["local_dim"] ** m["sites"])
    return to_open_system(build_interaction(cfg), build_partition(cfg))


# ---------------------------------------------------------------------------
# experiments: each returns (tables, diagnostics, checks)


def exp_gibbs(cfg, rng):
    from .qstate import gibbs_variational_check

    h = build_hamiltonian(cfg)
    beta = cfg["model"]["beta"]
    recs = [gibbs_variational_check(h, random_density(h.shape[0], rng), beta)
            for _ in range(cfg["run"]["samples"])]
    gaps = [r.gap for r in recs]
    t = Table([("sample", "1", list(range(len(recs)))), ("lhs", "1", [r.lhs for r in recs]),
               ("pressure", "1", [r.pressure for r in recs]), ("gap", "1", gaps)])
    return {"variational": t}, {"min_gap": min(gaps)}, [Check("min_gap", min(gaps), -1e-10, ">=")]


def exp_kms(cfg, rng):
    from .qdyn import FiniteQDS, kms_check
    from .qstate import gibbs

    h = build_hamiltonian(cfg)
    beta = cfg["model"]["beta"]
    sys_ = FiniteQDS(h, gibbs(h, beta))
    d = h.shape[0]
    pairs = [(random_hermitian(d, rng) + 1j * random_hermitian(d, rng),
              random_hermitian(d, rng) + 1j * random_hermitian(d, rng)) for _ in range(cfg["run"]["pairs"])]
    times = cfg["run"]["times"]
    defects = _pmap(lambda t: max(kms_check(sys_, beta, a, b, [t]) for a, b in pairs), times)
    worst = max(defects)
    tab = Table([("t", "time", times), ("kms_defect", "1", defects)])
    return {"kms": tab}, {"max_defect": worst}, [Check("kms_defect", worst, cfg["run"]["tol"])]


def exp_modular(cfg, rng):
    from .modular import (araki_distance, araki_relative_entropy, connes_cocycle,
                          connes_cocycle_gns)
    from .qstate import gibbs, relative_entropy

    h = build_hamiltonian(cfg)
    beta = cfg["model"]["beta"]
    d = h.shape[0]
    omega = gibbs(h, beta)
    nu = random_density(d, rng)
    rho = random_density(d, rng)
    rows_t, d_cocycle, d_chain = [], [], []
    for t in cfg["run"]["times"]:
        u = connes_cocycle(nu, omega, t)
        # chain rule (D nu : D rho)_t (D rho : D omega)_t = (D nu : D omega)_t
        chain = connes_cocycle(nu, rho, t) @ connes_cocycle(rho, omega, t) - u
        gns = connes_cocycle_gns(nu, omega, t)
        rows_t.append(t)
        d_cocycle.append(float(np.abs(gns - left_mul(u)).max()))
        d_chain.append(float(np.abs(chain).max()))
    ent_direct = float(relative_entropy(nu, omega))
    ent_araki = float(araki_relative_entropy(nu, omega))
    v = random_hermitian(d, rng, scale=0.3)
    dist = araki_distance(h, v, beta)
    tab = Table([("t", "time", rows_t), ("gns_vs_matrix", "1", d_cocycle), ("chain_rule", "1", d_chain)])
    tol = cfg["run"]["tol"]
    diag = {"relent_direct": ent_direct, "relent_araki": ent_araki, "araki_distance": dist}
    checks = [Check("cocycle_gns", max(d_cocycle), tol), Check("cocycle_chain", max(d_chain), tol),
              Check("araki_relent", abs(ent_direct - ent_araki), tol),
              Check("araki_perturbation", dist, tol)]
    return {"cocycle": tab}, diag, checks


def exp_openqs_balance(cfg, rng):
    from .openqs import entropy_balance

    osys = build_open_system(cfg)
    times = cfg["run"]["times"]
    recs = _pmap(lambda t: entropy_balance(osys, t), times)
    tab = Table([("t", "time", times), ("entropy_change", "nat", [-r.ent for r in recs]),
                 ("integrated_ep", "nat", [r.integral for r in recs]),
                 ("defect", "nat", [r.defect for r in recs])])
    worst = max(r.defect for r in recs)
    return {"balance": tab}, {"max_defect": worst}, [Check("balance_defect", worst, max(cfg["run"]["tol"], 1e-7))]


def exp_ruelle(cfg, rng):
    from .openqs import ruelle_decomposition

    osys = build_open_system(cfg)
    times = cfg["run"]["times"]
    recs = _pmap(lambda t: ruelle_decomposition(osys, t), times)
    tab = Table([("t", "time", times), ("total", "nat", [r.total for r in recs]),
                 ("deltaS", "nat", [r.deltaS for r in recs]),
                 ("deltaSigma", "nat", [r.deltaSigma for r in recs]),
                 ("defect", "nat", [r.defect for r in recs])])
    worst = max(r.defect for r in recs)
    parts = min(min(r.deltaS, r.deltaSigma) for r in recs)
    return ({"ruelle": tab}, {"max_defect": worst},
            [Check("ruelle_defect", worst, cfg["run"]["tol"]), Check("parts_sign", parts, -1e-10, ">=")])


def _open_qds(cfg):
    return build_open_system(cfg).qds


def exp_ttmep(cfg, rng):
    from .epstats import (fluctuation_relation_check, ttmep_charfn, ttmep_charfn_modular, ttmep_law,
                          ttmep_mean_check)
    from .qdyn import TimeReversal

    sys_ = _open_qds(cfg)
    tol = cfg["run"]["tol"]
    law_rows: dict[str, list] = {"t": [], "s": [], "p": []}
    cf_rows: dict[str, list] = {"t": [], "alpha": [], "F": [], "F_modular": []}
    mean_def, cf_def, fr_def = 0.0, 0.0, 0.0
    theta = TimeReversal(np.eye(sys_.dim))
    tri = _real_model(cfg)
    for t in cfg["run"]["times"]:
        q = ttmep_law(sys_, t)
        law_rows["t"] += [t] * len(q.s)
        law_rows["s"] += list(q.s)
        law_rows["p"] += list(q.p)
        mean_def = max(mean_def, ttmep_mean_check(sys_, t))
        for a in cfg["run"]["alphas"]:
            f1, f2 = ttmep_charfn(sys_, t, a), ttmep_charfn_modular(sys_, t, a)
            cf_rows["t"].append(t)
            cf_rows["alpha"].append(a)
            cf_rows["F"].append(f1.real)
            cf_rows["F_modular"].append(f2.real)
            cf_def = max(cf_def, abs(f1 - f2), abs(f1 - q.charfn(a)))
        if tri:
            rec = fluctuation_relation_check(sys_, theta, t, cfg["run"]["alphas"])
            fr_def = max(fr_def, rec.max_defect_measure, rec.max_defect_charfn)
    tables = {"law": Table([("t", "time", law_rows["t"]), ("s", "nat", law_rows["s"]),
                            ("probability", "1", law_rows["p"])]),
              "charfn": Table([("t", "time", cf_rows["t"]), ("alpha", "1", cf_rows["alpha"]),
                               ("F", "1", cf_rows["F"]), ("F_modular", "1", cf_rows["F_modular"])])}
    checks = [Check("mean_vs_relent", mean_def, tol), Check("charfn_routes", cf_def, tol)]
    if tri:
        checks.append(Check("fluctuation_relation", fr_def, tol))
    return tables, {"time_reversal_invariant": tri}, checks


def _real_model(cfg) -> bool:
    """Complex conjugation is a time reversal when every coupling matrix is real."""
    h = build_hamiltonian(cfg)
    return bool(np.abs(h.imag).max() == 0)


def exp_bmv(cfg, rng):
    from .epstats import bmv_charfn, bmv_vs_ttmep

    sys_ = _open_qds(cfg)
    rows: dict[str, list] = {"t": [], "alpha": [], "ttm": [], "bmv": []}
    end_def, slope_def, sym_def = 0.0, 0.0, 0.0
    for t in cfg["run"]["times"]:
        cmp = bmv_vs_ttmep(sys_, t, cfg["run"]["alphas"])
        rows["t"] += [t] * len(cmp.alphas)
        rows["alpha"] += list(cmp.alphas)
        rows["ttm"] += list(cmp.ttm)
        rows["bmv"] += list(cmp.bmv)
        end_def = max(end_def, abs(bmv_charfn(sys_, t, 0.0) - 1.0))
        slope_def = max(slope_def, cmp.slope_defect)
        for a in cfg["run"]["alphas"]:
            sym_def = max(sym_def, abs(bmv_charfn(sys_, t, a) - bmv_charfn(sys_, t, 1 - a)))
    tab = Table([("t", "time", rows["t"]), ("alpha", "1", rows["alpha"]), ("F_ttm", "1", rows["ttm"]),
                 ("F_bmv", "1", rows["bmv"])])
    checks = [Check("F_at_zero", end_def, 1e-10), Check("slope_at_zero", slope_def, 1e-6)]
    if _real_model(cfg):
        checks.append(Check("alpha_symmetry", sym_def, 1e-10))
    return {"bmv": tab}, {"max_symmetry_defect": sym_def}, checks


def exp_ancilla(cfg, rng):
    from .epstats import ancilla_tomography, ttmep_charfn

    sys_ = _open_qds(cfg)
    rho_a = np.full((2, 2), 0.5, dtype=np.complex128)
    rows: dict[str, list] = {"t": [], "alpha_im": [], "re": [], "im": [], "defect": []}
    for t in cfg["run"]["times"]:
        for a in cfg["run"]["alphas"]:
            alpha = 1j * a
            r = ancilla_tomography(sys_, rho_a, t, alpha)
            f = ttmep_charfn(sys_, t, alpha)
            rows["t"].append(t)
            rows["alpha_im"].append(a)
            rows["re"].append(r.real)
            rows["im"].append(r.imag)
            rows["defect"].append(abs(r - f))
    tab = Table([("t", "time", rows["t"]), ("alpha_imag", "1", rows["alpha_im"]),
                 ("readout_re", "1", rows["re"]), ("readout_im", "1", rows["im"]),
                 ("defect", "1", rows["defect"])])
    worst = max(rows["defect"])
    return {"ancilla": tab}, {"max_defect": worst}, [Check("ancilla_vs_charfn", worst, cfg["run"]["tol"])]


def exp_lattice(cfg, rng):
    from .lattice import (LocalOp, derivative_bound_check, finite_pressure, open_lattice_ep,
                          sigma_cross_check)

    m = cfg["model"]
    check_dim(m["local_dim"] ** m["sites"])
    phi = build_interaction(cfg)
    d = m["local_dim"]
    a = LocalOp(random_hermitian(d, rng), (0,))
    recs = [derivative_bound_check(phi, 1.0, a, n) for n in range(4)]
    tab = Table([("order", "1", list(range(4))), ("norm", "1", [r.lhs for r in recs]),
                 ("bound", "1", [r.bound for r in recs])])
    diag = {"pressure": finite_pressure(phi, list(range(m["sites"])), m["beta"])}
    checks = [Check("derivative_bound_ratio", max(r.lhs / r.bound for r in recs if r.bound > 0), 1.0)]
    if m["reservoirs"]:
        part_rec = open_lattice_ep(phi, build_partition(cfg), t=cfg["run"]["times"][-1])
        cross = sigma_cross_check(phi, build_partition(cfg))
        diag.update(form_defect=part_rec.form_defect, balance_defect=part_rec.balance_defect,
                    sigma_cross=cross)
        checks += [Check("sigma_forms", part_rec.form_defect, 1e-10), Check("sigma_cross", cross, 1e-10),
                   Check("balance", part_rec.balance_defect, 1e-7)]
    return {"derivation": tab}, diag, checks


def _lindblad_gen(cfg):
    from .lindblad import LindbladGen, thermal_qubit

    m = cfg["model"]
    if m["upsilon"] is None and m["jumps"] is None:
        return thermal_qubit(m["beta"])
    ups = matrix_from_spec(m["upsilon"]) if m["upsilon"] is not None else None
    jumps = tuple(matrix_from_spec(j) for j in (m["jumps"] or []))
    if ups is None:
        ups = np.zeros_like(jumps[0])
    return LindbladGen(ups, jumps)


def exp_lindblad(cfg, rng):
    from .lindblad import cp_check, detailed_balance_check, invariant_state, lindblad_to_super
    from .qstate import gibbs

    gen = _lindblad_gen(cfg)
    sup = lindblad_to_super(gen)
    times = cfg["run"]["times"]
    recs = [cp_check(sup.exp(t)) for t in times]
    st, res = invariant_state(gen)
    dbc = detailed_balance_check(gen, gibbs(gen.Upsilon, cfg["model"]["beta"]))
    tab = Table([("t", "time", times), ("choi_min_eig", "1", [r.choi_min_eig for r in recs]),
                 ("unital_defect", "1", [r.unital_defect for r in recs])])
    diag = {"invariant_residual": res, "invariance_defect": dbc.invariance_defect,
            "dbc_defect": dbc.dbc_defect, "dbc1_defect": dbc.dbc1_defect,
            "invariant_state_diag": list(np.real(np.diag(st.mat)))}
    checks = [Check("choi_min_eig", min(r.choi_min_eig for r in recs), -1e-10, ">="),
              Check("invariant_residual", res, 1e-8)]
    return {"semigroup": tab}, diag, checks


def exp_weak_coupling(cfg, rng):
    from .lindblad import fermionic_bath_model, weak_coupling_extract

    m = cfg["model"]
    k = np.diag([1.0, -1.0]).astype(np.complex128)
    model = fermionic_bath_model(k, m["mode_energies"], m["couplings"], m["beta"])
    res = weak_coupling_extract(model, cfg["run"]["lambdas"], cfg["run"]["t_rescaled"])
    cauchy = [float("nan")] + list(res.cauchy)
    tab = Table([("lambda", "1", list(res.lambdas)), ("cauchy_distance", "1/time", cauchy),
                 ("dbc_defect", "1/time", list(res.dbc_defects)),
                 ("free_commutator", "1/time^2", list(res.free_commutators))])
    mono = bool(np.all(np.diff(res.cauchy) < 0) and np.all(np.diff(res.dbc_defects) < 0))
    return {"extraction": tab}, {"monotone": mono}, [Check("monotone", float(mono), 1.0, ">=")]


def exp_fermi(cfg, rng):
    from .fermi import (araki_wyss_correlation_defect, araki_wyss_modular_defect, araki_wyss_rep,
                        characteristic_fn, characteristic_fn_direct, fermi_dirac, jordan_wigner,
                        quasi_free_dynamics_check, quasi_free_state, wick_pairing_defect)
    from .linalg import random_unitary

    m = cfg["model"]
    n = m["modes"]
    check_dim(2 ** n)
    h = matrix_from_spec(m["h"]) if m["h"] is not None else random_hermitian(n, rng)
    alg = jordan_wigner(n)
    T = fermi_dirac(h, m["beta"])
    st = quasi_free_state(alg, T)
    us = [random_unitary(n, rng) for _ in range(cfg["run"]["pairs"])]
    e_def = [abs(characteristic_fn(st, u) - characteristic_fn_direct(st, u)) for u in us]
    fs = [rng.normal(size=n) + 1j * rng.normal(size=n) for _ in range(6)]
    wick4, wick6 = wick_pairing_defect(st, fs[:4]), wick_pairing_defect(st, fs)
    dyn = quasi_free_dynamics_check(alg, h, cfg["run"]["times"][-1], T, m["beta"])
    tol = cfg["run"]["tol"]
    diag = {"wick4": wick4, "wick6": wick6, "bogoliubov": dyn.bogoliubov_defect, "kms": dyn.kms_defect}
    checks = [Check("characteristic_fn", max(e_def), tol), Check("wick4", wick4, tol),
              Check("wick6", wick6, tol), Check("kms", dyn.kms_defect, tol)]
    if n <= 2:
        rep = araki_wyss_rep(T)
        diag["aw_correlations"] = araki_wyss_correlation_defect(rep, st)
        diag["aw_modular"] = araki_wyss_modular_defect(rep)
        checks += [Check("aw_correlations", diag["aw_correlations"], tol),
                   Check("aw_modular", diag["aw_modular"], 1e-8)]
    tab = Table([("sample", "1", list(range(len(us)))), ("E_defect", "1", e_def)])
    return {"characteristic": tab}, diag, checks


def _instrument(cfg):
    from .instruments import Instrument

    m = cfg["model"]
    if m["kraus"] is None:
        return Instrument.luders(["+", "-"], [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    return Instrument.from_kraus([k["label"] for k in m["kraus"]],
                                 [[matrix_from_spec(o) for o in k["ops"]] for k in m["kraus"]])


def exp_instruments(cfg, rng):
    from .instruments import (ep_monte_carlo, ep_n, invariant_state, path_law, sample_paths,
                              upper_decoupling_check, write_trajectories)
    from .qstate import DensityMatrix

    m = cfg["model"]
    inst = _instrument(cfg)
    rho = DensityMatrix(matrix_from_spec(m["state"])) if m["state"] is not None else invariant_state(inst)[0]
    theta = m["theta"]
    n_max = cfg["run"]["n"]
    eps = [float(ep_n(path_law(inst, rho, n), theta)) for n in range(1, n_max + 1)]
    mc = ep_monte_carlo(inst, rho, n_max, theta, cfg["run"]["samples"], rng)
    ud = upper_decoupling_check(inst, rho, n_max)
    tab = Table([("n", "1", list(range(1, n_max + 1))), ("ep", "nat", eps),
                 ("ep_per_step", "nat", [e / n for n, e in enumerate(eps, 1)])])
    diag = {"mc_value": mc.value, "mc_stderr": mc.stderr, "ud_constant": ud.best_C}
    checks = [Check("ep_nonnegative", min(eps), -1e-12, ">=")]
    if np.isfinite(eps[-1]) and mc.stderr > 0:
        checks.append(Check("mc_within_3se", abs(mc.value - eps[-1]) / mc.stderr, 3.0))
    if cfg["output"]["trajectories"]:
        words, _ = sample_paths(inst, rho, n_max, min(cfg["run"]["samples"], 1000), rng)
        os.makedirs(cfg["output"]["dir"], exist_ok=True)
        path = os.path.join(cfg["output"]["dir"], "instruments_trajectories.jsonl")
        write_trajectories(path, words, inst.labels)
        diag["trajectories"] = path
    return {"ep": tab}, diag, checks


RUNNERS: dict[str, Callable] = {
    "gibbs": exp_gibbs, "kms": exp_kms, "modular": exp_modular, "openqs-balance": exp_openqs_balance,
    "ruelle": exp_ruelle, "ttmep": exp_ttmep, "bmv": exp_bmv, "ancilla": exp_ancilla,
    "lattice": exp_lattice, "lindblad": exp_lindblad, "weak-coupling": exp_weak_coupling,
    "fermi": exp_fermi, "instruments": exp_instruments,
}


def run(cfg: dict) -> ResultSet:
    """Run a validated config. Deterministic given run.seed."""
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    rng = np.random.default_rng(cfg["run"]["seed"])
    exp = cfg["experiment"]
    try:
        tables, diag, checks = RUNNERS[exp](cfg, rng)
    except QthermError as exc:
        raise type(exc)(f"[{exp}] {exc}") from exc
    meta = {"config_hash": config_hash(cfg), "version": __version__, "started": started,
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(), "seed": cfg["run"]["seed"],
            "config": cfg}
    return ResultSet(exp, meta, tables, diag, checks)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="qtherm", description="Finite-dimensional quantum statistical "
                                "mechanics experiments.")
    p.add_argument("experiment", nargs="?", help="experiment kind (see --list)")
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--seed", type=int, help="random seed (overrides run.seed)")
    p.add_argument("--assert", dest="assert_", action="store_true",
                   help="exit with status 3 when a tolerance check fails")
    p.add_argument("--max-dim", type=int, help="Hilbert-space dimension cap")
    p.add_argument("--list", action="store_true", help="list available experiments")
    args = p.parse_args(argv)

    if args.list:
        for k, v in EXPERIMENTS.items():
            print(f"{k:16s} {v}")
        return EXIT_OK
    if not args.experiment:
        p.print_usage(sys.stderr)
        print("qtherm: error: an experiment name is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        raw = yaml.safe_load(text) if text else {}
        if not isinstance(raw, dict):
            raise ConfigError([("<document>", "top level must be a mapping")])
        raw.setdefault("experiment", args.experiment)
        if raw["experiment"] != args.experiment:
            raise ConfigError([("experiment", f"config says {raw['experiment']!r}, command line says "
                                              f"{args.experiment!r}")])
        if args.seed is not None:
            raw.setdefault("run", {})["seed"] = args.seed
        if args.out is not None:
            raw.setdefault("output", {})["dir"] = args.out
        cfg = validate(raw)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.max_dim is not None:
        set_max_dim(args.max_dim)
    try:
        rs = run(cfg)
    except OverflowError as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    paths = write_results(rs, cfg["output"]["dir"], cfg["output"]["formats"])
    for c in rs.checks:
        print(f"{'PASS' if c.ok else 'FAIL'} {c.name}: {c.value:.3e} {c.relation} {c.bound:.1e}")
    for path in paths:
        print(f"wrote {path}")
    if args.assert_ and not rs.ok:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
