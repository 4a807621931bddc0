import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from decaylab import ResolutionError
from decaylab.damping import CoefficientField, make_power_law
from decaylab.obscheck import (Datum, ExponentialObservabilityFit, check_A2, check_A3,
                               check_lemma_kinetic, check_lemma_linear_vs_nonlinear,
                               check_lemma_phiz, conservative_run, deterministic_suite,
                               functional_of_datum, k_T_constant, kinetic_constants,
                               observation_functional, random_suite)
from decaylab.wavesim import WaveConfig, WaveState, energy, solve
from decaylab.weight import GrowthSpec, WeightSystem

N = 63


def mode(n, which="w", N=N):
    c = np.zeros(n)
    c[-1] = 1.0
    return WaveState.from_modes(N, c if which == "w" else (), c if which == "v" else ())


@pytest.mark.parametrize("T", [2.0, 4.0])
@pytest.mark.parametrize("n", [1, 5, 12])
def test_full_observation_identity(full_field, T, n):
    st_ = mode(n, "v")
    val, err = functional_of_datum(full_field, st_, T)
    assert val == pytest.approx(T * energy(st_), rel=1e-6)
    assert err < 1e-6 * val


def test_functional_on_bump_below_full(bump):
    st_ = mode(3, "w")
    part, _ = functional_of_datum(bump, st_, 2.0)
    assert 0 < part < 2.0 * energy(st_)
    assert functional_of_datum(CoefficientField.constant(0.0), st_, 2.0)[0] == 0.0


def test_time_reversal(bump):
    st_ = WaveState.from_modes(N, [0.2, 0.0, 0.05], [0.0, 1.0, 0.0, 0.3])
    T = 1.3
    traj = conservative_run(st_, T, field=bump)
    back = WaveState(0.0, traj.final.w, -traj.final.v)
    fwd = observation_functional(bump, traj, T)
    rev = observation_functional(bump, conservative_run(back, T, field=bump), T)
    assert rev == pytest.approx(fwd, rel=1e-10)


def test_resolution_error(bump):
    st_ = mode(20, "v")
    cfg = WaveConfig(N=N, T_final=2.0, dt=0.01, scheme="spectral", field=bump)
    with pytest.raises(ResolutionError) as info:
        observation_functional(bump, solve(cfg, st_), 2.0)
    assert info.value.required_stride is not None


def test_suites():
    det = deterministic_suite(N, 8)
    assert len(det) == 8 + 10
    for d in det[:8]:
        assert energy(d.state) == pytest.approx(0.5, rel=1e-12)
    r1 = random_suite(N, 5, seed=3)
    r2 = random_suite(N, 5, seed=3)
    assert all(np.array_equal(a.state.w, b.state.w) for a, b in zip(r1, r2))


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(0.01, 100.0), n=st.integers(1, 8))
def test_functional_homogeneity(lam, n):
    fld = CoefficientField()
    st_ = WaveState.from_modes(31, [0.1] * n, [0.0, 0.4])
    v1, _ = functional_of_datum(fld, st_, 2.0)
    v2, _ = functional_of_datum(fld, st_.scaled(lam), 2.0)
    assert v2 == pytest.approx(lam * lam * v1, rel=1e-10)


def test_A2_constants_scale_invariant(bump):
    gs = GrowthSpec("G_for_A2", "power", {"k": 1.0, "m": 1.0})
    data = deterministic_suite(31, 4)
    scaled = [Datum(d.label, d.state.scaled(7.5)) for d in data]
    a = check_A2(bump, gs, 2.0, data)
    b = check_A2(bump, gs, 2.0, scaled)
    assert np.allclose(a.admissible_constant, b.admissible_constant, rtol=1e-10)
    assert a.all_passed
    assert a.constants["c_T"] == pytest.approx(min(a.admissible_constant))
    strict = check_A2(bump, gs, 2.0, data, c_T=2 * a.constants["c_T"])
    assert not strict.all_passed
    assert json.loads(a.to_json())["inequality"] == "A2"


def test_A3_with_exponential_growth(bump, tmp_path):
    gs = GrowthSpec.exponential(c=0.1, beta=0.5)
    rep = check_A3(bump, gs, 2.0, deterministic_suite(31, 4))
    assert rep.all_passed and rep.constants["C_T"] > 0
    rep.write_margins_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().count("\n") == len(rep.labels) + 1


def test_exponential_fit_degenerate_under_full_observation(full_field):
    est = ExponentialObservabilityFit(full_field, T=2.0, mode_range=(1, 8), N=31).fit()
    assert est.degenerate_ and est.c_T_ == 0.0


def test_exponential_fit_on_bump(bump):
    est = ExponentialObservabilityFit(bump, T=2.0, mode_range=(1, 12), N=63).fit()
    assert not est.degenerate_
    assert est.beta_obs_ in (0.25, 0.5, 0.75)
    assert np.isfinite(est.residual_)
    assert np.all(est.predict(est.q_) > 0)
    assert clone(est).get_params()["mode_range"] == (1, 12)


def test_constants():
    fld = CoefficientField(amax=2.0, a0=2.0)
    assert k_T_constant(2.0, fld) == 8 * 4 * 4 + 2
    c5, c6, meas = kinetic_constants(make_power_law(3), CoefficientField.constant(1.0))
    assert meas == pytest.approx(1.0)
    assert c5 == pytest.approx(2.0) and c6 == pytest.approx(2.0)


@pytest.fixture(scope="module")
def small_data():
    return deterministic_suite(31, 4) + random_suite(31, 4, seed=7, max_mode=8)


def test_lemmas_hold_on_small_suite(small_data, bump):
    law = make_power_law(3)
    ws = WeightSystem(law, 1.0)
    for rep in (check_lemma_linear_vs_nonlinear(law, bump, small_data, 2.0),
                check_lemma_phiz(bump, small_data, 2.0),
                check_lemma_kinetic(law, ws, bump, small_data, 2.0)):
        assert rep.passed, (rep.name, rep.worst)
        assert len(rep.results) == len(small_data)


def test_lemma_checks_can_fail(small_data, bump):
    # shrunken constants must be caught
    law = make_power_law(3)
    assert not check_lemma_linear_vs_nonlinear(law, bump, small_data, 2.0, factor=1e-3).passed
    assert not check_lemma_phiz(bump, small_data, 2.0, k_T=1e-3).passed


def test_kinetic_lemma_reports_out_of_domain(small_data, bump):
    law = make_power_law(3)
    rep = check_lemma_kinetic(law, WeightSystem(law, beta=1e-4), bump, small_data[:2], 2.0)
    assert not rep.passed
    assert rep.results[0].detail["reason"] == "outside the weight's domain"


def test_empty_suite(bump):
    rep = check_lemma_phiz(bump, [], 2.0)
    assert rep.no_data and rep.passed and rep.worst is None
