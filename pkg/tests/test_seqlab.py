import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaylab import ConfigError, DomainError
from decaylab.seqlab import (SequenceInstance, check_chain, discretcont_bound, estimate_delta,
                             euler_sequence, ode_solution, ode_solution_via_K,
                             power_family_instance, random_instance, report_to_json,
                             saturating_sequence)


def square(v):
    return np.asarray(v, dtype=float) ** 2


def test_euler_hand_values():
    inst = SequenceInstance(1.0, square, 0.1, delta=2.0)
    assert np.allclose(euler_sequence(inst, 2).values, [1.0, 0.9, 0.819], rtol=1e-15)
    lin = SequenceInstance(1.0, lambda v: np.asarray(v, dtype=float), 0.5, delta=1.5)
    assert np.allclose(euler_sequence(lin, 4).values, 0.5 ** np.arange(5), rtol=0)


def test_euler_flags_truncation():
    inst = SequenceInstance(0.9, lambda v: 3.0 * np.asarray(v, dtype=float), 0.5, delta=1.0)
    res = euler_sequence(inst, 3)
    assert res.truncated and res.truncation_index == 1


def test_ode_closed_form():
    inst = SequenceInstance(1.0, square, 1.0, T=1.0, delta=3.0)
    t = np.array([0.0, 1.0, 2.0, 10.0, 100.0])
    assert np.allclose(ode_solution(inst, t), 1.0 / (1.0 + t), rtol=1e-10)


def test_ode_two_characterizations_agree():
    inst = power_family_instance(5.0, 0.25, 5.0, 10.0)
    t = np.array([1.0, 10.0, 200.0])
    assert np.allclose(ode_solution(inst, t), ode_solution_via_K(inst, t), rtol=1e-8)


def test_euler_converges_first_order():
    # fixed rho_T / T = 1 so every sequence discretizes y' = -y^2
    errs = []
    for T in (0.1, 0.05, 0.025):
        inst = SequenceInstance(1.0, square, T, T=T, delta=3.0)
        n = int(round(1.0 / T))
        y = euler_sequence(inst, n).values
        errs.append(abs(y[-1] - 0.5))
    assert 1.8 < errs[0] / errs[1] < 2.2
    assert 1.8 < errs[1] / errs[2] < 2.2


def test_estimate_delta():
    # x - 0.5 x^2 increases up to x = 1
    assert estimate_delta(square, 0.5, search_max=4.0) == pytest.approx(1.0, abs=3e-3)
    assert estimate_delta(square, 0.01, search_max=1.0) == 1.0
    with pytest.raises(DomainError):
        SequenceInstance(3.0, square, 0.5)
    with pytest.raises(ConfigError):
        SequenceInstance(0.1, square, 0.0)


def test_chain_holds_on_saturating_and_shrunk_sequences():
    inst = power_family_instance(3.0, 0.1, 4.0, 10.0)
    for shrink in (0.0, 0.1):
        rep = check_chain(inst, saturating_sequence(inst, 300, shrink=shrink))
        assert rep.premise_ok and rep.holds
        assert min(rep.slack_E_euler) >= -1e-12


def test_chain_rejects_broken_premise():
    inst = power_family_instance(3.0, 0.1, 4.0, 10.0)
    E = saturating_sequence(inst, 20)
    E[7] *= 1.01
    rep = check_chain(inst, E)
    assert not rep.premise_ok and rep.premise_violation == 7


def test_bound_reports_threshold_and_holds():
    inst = power_family_instance(3.0, 0.1, 4.0, 10.0)
    rep = discretcont_bound(inst, saturating_sequence(inst, 200))
    assert rep.premise_ok
    # F = id: z0 = 1/r, threshold T + z0 T0 / rho_T
    assert rep.validity_threshold == pytest.approx(10.0 + (1 / 0.1) * 2.5 / 4.0)
    assert rep.holds_on(20.0)
    assert rep.max_ratio <= 1.0


def test_bound_rejects_increasing_sequence():
    inst = power_family_instance(3.0, 0.1, 4.0, 10.0)
    E = saturating_sequence(inst, 10)
    E[4] = E[3] * 1.5
    assert not discretcont_bound(inst, E).premise_ok


def test_bound_needs_F():
    inst = SequenceInstance(0.5, square, 0.5, delta=1.0)
    with pytest.raises(ConfigError):
        discretcont_bound(inst, saturating_sequence(inst, 5))


def test_report_json(tmp_path):
    inst = power_family_instance(3.0, 0.1, 4.0, 10.0)
    rep = check_chain(inst, saturating_sequence(inst, 5))
    path = tmp_path / "chain.json"
    report_to_json(rep, path)
    back = json.loads(path.read_text())
    assert back["holds"] is True and len(back["E"]) == 6


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), shrink=st.sampled_from([0.0, 0.01, 0.3]))
def test_chain_property(seed, shrink):
    inst = random_instance(np.random.default_rng(seed))
    assert inst.psi_increasing()
    rep = check_chain(inst, saturating_sequence(inst, 200, shrink=shrink))
    assert rep.holds, (inst.label, rep.first_violation, rep.violated_link)


@settings(max_examples=15, deadline=None)
@given(lam=st.floats(0.1, 10.0), p=st.sampled_from([3.0, 5.0]))
def test_bound_scale_covariance(lam, p):
    # T -> lam T with rho_T fixed rescales time and bound by lam
    base = power_family_instance(p, 0.1, 4.0, 2.0)
    scaled = power_family_instance(p, 0.1, 4.0, 2.0 * lam)
    E = saturating_sequence(base, 60)
    r1 = discretcont_bound(base, E)
    r2 = discretcont_bound(scaled, E, times=lam * np.asarray(r1.times))
    assert r2.validity_threshold == pytest.approx(lam * r1.validity_threshold, rel=1e-12)
    b1 = np.array([np.nan if b is None else b for b in r1.bound])
    b2 = np.array([np.nan if b is None else b for b in r2.bound])
    ok = np.isfinite(b1) & np.isfinite(b2)
    assert ok.sum() > 100
    assert np.allclose(b2[ok], lam * b1[ok], rtol=1e-9)
