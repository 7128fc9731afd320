import json
import math

import numpy as np
import pytest

from qtherm import instruments as ins
from qtherm.errors import NotInvariant, ShapeMismatch
from qtherm.linalg import random_unitary

P0, P1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
RHO = np.diag([0.7, 0.3])


def luders_z():
    return ins.Instrument.luders([0, 1], [P0, P1])


def qutrit_model():
    u = random_unitary(3, np.random.default_rng(3))
    return ins.Instrument.from_kraus([0, 1, 2], [[u @ np.diag(e)] for e in np.eye(3)])


def cyclic_model():
    # outcome a moves |a> to |a+1 mod 3>
    ks = [[np.outer(np.eye(3)[(a + 1) % 3], np.eye(3)[a])] for a in range(3)]
    return ins.Instrument.from_kraus([0, 1, 2], ks)


def test_single_label_point_mass():
    inst = ins.Instrument.coin([1.0])
    law = ins.path_law(inst, np.eye(1), 4)
    assert law.table.shape == (1,) * 4 and law.prob([0, 0, 0, 0]) == 1.0
    assert float(ins.ep_n(law)) == 0.0


def test_coin_is_iid():
    p = np.array([0.6, 0.4])
    law = ins.path_law(ins.Instrument.coin(p), np.eye(1), 3)
    assert np.allclose(law.table, np.einsum("i,j,k->ijk", p, p, p), atol=1e-15)


def test_luders_two_step_law():
    law = ins.path_law(luders_z(), RHO, 2)
    assert np.allclose(law.table, [[0.7, 0.0], [0.0, 0.3]], atol=1e-15)


def test_invalid_instruments():
    with pytest.raises(NotInvariant):
        ins.Instrument.luders([0], [P0])
    with pytest.raises(ShapeMismatch):
        ins.Instrument.luders([0, 1], [P0])


def test_reversal_is_involution(rng):
    law = ins.path_law(qutrit_model(), np.eye(3) / 3, 3)
    th = [0, 2, 1]
    back = ins.reversed_law(ins.reversed_law(law, th), th)
    assert np.array_equal(back.table, law.table)
    one = ins.path_law(luders_z(), RHO, 1)
    assert np.array_equal(ins.reversed_law(one).table, one.table)
    assert np.array_equal(ins.reversed_law(one, [1, 0]).table, one.table[::-1])


def test_theta_must_be_involution():
    law = ins.path_law(qutrit_model(), np.eye(3) / 3, 2)
    with pytest.raises(ShapeMismatch):
        ins.reversed_law(law, [1, 2, 0])


def test_ep_identity_theta_on_symmetric_law():
    assert float(ins.ep_n(ins.path_law(luders_z(), RHO, 3))) == 0.0


def test_ep_luders_swap():
    ep = ins.ep_n(ins.path_law(luders_z(), RHO, 3), [1, 0])
    assert abs(float(ep) - (0.7 * math.log(0.7 / 0.3) + 0.3 * math.log(0.3 / 0.7))) <= 1e-12
    assert abs(float(ep) - 0.33891914) <= 1e-8


@pytest.mark.parametrize("n", [1, 2, 4])
def test_ep_coin_swap_is_linear(n):
    ep = ins.ep_n(ins.path_law(ins.Instrument.coin([0.6, 0.4]), np.eye(1), n), [1, 0])
    assert abs(float(ep) - n * 0.2 * math.log(1.5)) <= 1e-12


def test_ep_infinite_when_reversal_is_null():
    ep = ins.ep_n(ins.path_law(cyclic_model(), np.eye(3) / 3, 2))
    assert ep.is_pos_inf


def test_ep_qutrit_anchor_and_growth():
    inst = qutrit_model()
    eps = [float(ins.ep_n(ins.path_law(inst, np.eye(3) / 3, n))) for n in range(1, 5)]
    assert eps[0] == pytest.approx(0.0, abs=1e-14)
    assert abs(eps[3] - 0.6714013062688866) <= 1e-12
    assert all(b >= a - 1e-14 for a, b in zip(eps, eps[1:]))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_consistency(n):
    inst = qutrit_model()
    law = ins.path_law(inst, np.eye(3) / 3, n)
    assert law.total() == pytest.approx(1.0, abs=1e-13)
    for k in range(1, n):
        short = ins.path_law(inst, np.eye(3) / 3, k).table
        assert np.abs(law.marginal(k).table - short).max() <= 1e-14
        assert np.abs(law.tail_marginal(k).table - short).max() <= 1e-14


def test_upper_decoupling_iid():
    rec = ins.upper_decoupling_check(ins.Instrument.coin([0.6, 0.3, 0.1]), np.eye(1), 4, candidate_C=1.0 + 1e-12)
    assert abs(rec.best_C - 1.0) <= 1e-12 and not rec.violations


def test_upper_decoupling_luders_exhaustive():
    # the extremal cylinder pair is the repeated rarer outcome: 0.3 / 0.3^2
    rec = ins.upper_decoupling_check(luders_z(), RHO, 4, candidate_C=1.0)
    assert abs(rec.best_C - 1 / 0.3) <= 1e-12
    assert rec.violations and all(r > 1.0 for *_, r in rec.violations)


def test_invariant_state():
    rho, dfc = ins.invariant_state(qutrit_model())
    assert np.abs(rho.mat - np.eye(3) / 3).max() <= 1e-12 and dfc <= 1e-12


def test_not_invariant():
    with pytest.raises(NotInvariant):
        ins.path_law(cyclic_model(), np.diag([1.0, 0.0, 0.0]), 2)


def test_table_cap():
    with pytest.raises(ShapeMismatch):
        ins.path_law(qutrit_model(), np.eye(3) / 3, 13)


def test_sampler_probabilities(rng):
    inst = qutrit_model()
    words, logp = ins.sample_paths(inst, np.eye(3) / 3, 4, 500, rng)
    assert np.allclose(np.exp(logp), ins.word_probabilities(inst, np.eye(3) / 3, words), rtol=1e-12)


def test_trajectories_jsonl(tmp_path):
    path = tmp_path / "traj.jsonl"
    words = np.array([[0, 1], [1, 1]])
    ins.write_trajectories(str(path), words, ["up", "down"])
    raw = path.read_bytes()
    assert b"\r" not in raw
    rows = [json.loads(line) for line in raw.decode().splitlines()]
    assert rows == [{"trajectory": 0, "step": 0, "outcome": "up"},
                    {"trajectory": 0, "step": 1, "outcome": "down"},
                    {"trajectory": 1, "step": 0, "outcome": "down"},
                    {"trajectory": 1, "step": 1, "outcome": "down"}]
    assert list(tmp_path.iterdir()) == [path]


def test_monte_carlo_matches_exact():
    inst = qutrit_model()
    est = ins.ep_monte_carlo(inst, np.eye(3) / 3, 4, None, 20000, np.random.default_rng(5))
    assert abs(est.value - 0.6714013062688866) <= 4 * est.stderr


def test_monte_carlo_infinite():
    est = ins.ep_monte_carlo(cyclic_model(), np.eye(3) / 3, 2, None, 100, np.random.default_rng(0))
    assert est.value == math.inf
