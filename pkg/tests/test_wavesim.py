import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaylab import ConfigError, DomainError
from decaylab.damping import CoefficientField, make_linear_law, make_power_law
from decaylab.wavesim import (WaveConfig, WaveState, discrete_energy, energy,
                              energy_identity_residual, from_coefficients, read_snapshot,
                              sine_coefficients, solve, strong_norm, weak_norm, write_snapshot,
                              write_trace_csv)
from decaylab.weight import GrowthSpec

N = 63


def test_sine_transform_round_trip(rng):
    c = rng.standard_normal(N)
    assert np.allclose(sine_coefficients(from_coefficients(c, N)), c, atol=1e-13)


def test_mode_norms_closed_form():
    # w = sin(pi x) = e_1 / sqrt(2): E = pi^2/4, strong^2 = pi^4/2
    st_ = WaveState.from_functions(N, lambda x: np.sin(np.pi * x))
    assert energy(st_) == pytest.approx(math.pi ** 2 / 4, rel=1e-13)
    assert strong_norm(st_) ** 2 == pytest.approx(math.pi ** 4 / 2, rel=1e-13)
    # theta = 1/2: weak norm is the L2 norm of w
    assert weak_norm(st_, GrowthSpec.constant()) ** 2 == pytest.approx(0.5, rel=1e-13)
    # grid energy uses the difference eigenvalue 4 sin^2(pi dx / 2) / dx^2
    dx = 1.0 / (N + 1)
    lam_h = 4 * math.sin(math.pi * dx / 2) ** 2 / dx ** 2
    assert discrete_energy(st_) == pytest.approx(0.25 * lam_h, rel=1e-12)


def test_velocity_mode_energy():
    st_ = WaveState.from_modes(N, (), [0.0, 2.0])
    assert energy(st_) == pytest.approx(2.0, rel=1e-13)
    assert strong_norm(st_) ** 2 == pytest.approx(4.0 * (2 * math.pi) ** 2, rel=1e-13)


def test_spectral_conserves_energy_and_is_exact():
    init = WaveState.from_modes(N, [0.3, 0.0, 0.1], [0.0, 0.5])
    traj = solve(WaveConfig(N=N, T_final=100.0, dt=0.01, scheme="spectral", stride=100), init)
    E = traj.trace.energy
    assert np.max(np.abs(E / E[0] - 1)) <= 1e-12
    # period 2: the state returns
    assert np.allclose(traj.final.w, init.w, atol=1e-12)
    assert np.allclose(traj.final.v, init.v, atol=1e-12)


def test_leapfrog_conserves_staggered_energy():
    init = WaveState.from_modes(N, [0.5, 0.2], [1.0, 0.0, 0.5])
    tr = solve(WaveConfig(N=N, T_final=10.0, cfl=0.9, keep_frames=False), init).trace
    se = tr.scheme_energy[1:]
    assert np.max(np.abs(se / se[0] - 1)) <= 1e-12
    assert np.all(tr.dissipation == 0)


@pytest.mark.parametrize("kind", ["linear_damped", "nonlinear_damped"])
def test_discrete_dissipativity(kind):
    law = make_power_law(3)
    fld = CoefficientField(amax=5.0, a0=5.0)
    init = WaveState.from_modes(N, [0.5, 0.2, 0.1], [3.0, 0.0, 2.5])
    cfg = WaveConfig(N=N, T_final=5.0, kind=kind, law=law, field=fld, cfl=0.9, keep_frames=False)
    tr = solve(cfg, init).trace
    se = tr.scheme_energy[1:]
    assert np.all(np.diff(se) <= 1e-12 * se[0])
    assert np.all(np.diff(tr.dissipation) >= 0)
    assert tr.energy[-1] < 0.1 * tr.energy[0]


def test_linear_law_matches_linear_solver():
    fld = CoefficientField()
    init = WaveState.from_modes(N, [0.3, 0.1], [0.0, 1.0])
    common = dict(N=N, T_final=2.0, field=fld, keep_frames=False)
    a = solve(WaveConfig(kind="linear_damped", **common), init).final
    b = solve(WaveConfig(kind="nonlinear_damped", law=make_linear_law(), **common), init).final
    assert np.allclose(a.w, b.w, rtol=0, atol=1e-14)
    assert np.allclose(a.v, b.v, rtol=0, atol=1e-14)


def test_second_order_in_dt():
    fld = CoefficientField()
    init = WaveState.from_modes(N, [0.0], [1.0])

    def final(cfl):
        cfg = WaveConfig(N=N, T_final=1.0, dt=cfl / (N + 1), kind="linear_damped", field=fld,
                         stride=10 ** 6, keep_frames=False)
        f = solve(cfg, init).final
        return np.concatenate([f.w, f.v])

    ref = final(0.0125)
    errs = [np.max(np.abs(final(c) - ref)) for c in (0.4, 0.2, 0.1)]
    assert 3.0 <= errs[0] / errs[1] <= 5.0
    assert 3.0 <= errs[1] / errs[2] <= 5.0


def test_energy_identity_second_order():
    law = make_power_law(3)
    init = WaveState.from_modes(N, [1.0, 0.5], [0.0, 2.0])
    res = []
    for cfl in (0.4, 0.2):
        cfg = WaveConfig(N=N, T_final=2.0, dt=cfl / (N + 1), kind="nonlinear_damped", law=law,
                         keep_frames=False, stride=8)
        res.append(energy_identity_residual(solve(cfg, init).trace))
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_config_validation():
    with pytest.raises(ConfigError):
        WaveConfig(N=N, dt=1.5 / (N + 1))
    with pytest.raises(ConfigError):
        WaveConfig(N=N, kind="linear_damped", scheme="spectral")
    with pytest.raises(ConfigError):
        WaveConfig(N=N, kind="nonlinear_damped")
    with pytest.raises(ConfigError):
        WaveConfig(N=N, kind="viscous")
    with pytest.raises(ConfigError):
        solve(WaveConfig(N=31), WaveState.zero(N))


def test_dirichlet_boundary():
    w = np.zeros(N + 2)
    w[0] = 1e-3
    with pytest.raises(DomainError):
        WaveState(0.0, w, np.zeros(N + 2))
    with pytest.raises(DomainError):
        WaveState.from_modes(N, np.ones(N + 1))
    traj = solve(WaveConfig(N=N, T_final=0.5, kind="nonlinear_damped", law=make_power_law(3)),
                 WaveState.from_modes(N, [0.2], [0.0, 1.0]))
    assert np.all(traj.W[:, [0, -1]] == 0) and np.all(traj.V[:, [0, -1]] == 0)


def test_zero_data_stays_zero():
    tr = solve(WaveConfig(N=N, T_final=1.0, kind="nonlinear_damped", law=make_power_law(3)),
               WaveState.zero(N)).trace
    assert np.all(tr.energy == 0) and energy_identity_residual(tr) == 0.0


def test_trace_csv_and_snapshot_round_trip(tmp_path):
    cfg = WaveConfig(N=15, T_final=0.5, kind="nonlinear_damped", law=make_power_law(3), stride=4)
    traj = solve(cfg, WaveState.from_modes(15, [0.3], [0.0, 1.0]), growth=GrowthSpec.constant())
    write_trace_csv(traj.trace, tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "E", "D", "strong_norm", "weak_norm"]
    assert float(rows[-1][1]) == traj.trace.energy[-1]
    write_snapshot(traj, tmp_path / "s.bin")
    snap = read_snapshot(tmp_path / "s.bin")
    assert snap["N"] == 15 and snap["stride"] == 4 and snap["dt"] == cfg.dt
    assert np.array_equal(snap["W"], traj.W) and np.array_equal(snap["times"], traj.times)
    (tmp_path / "bad.bin").write_bytes(b"XXXX")
    with pytest.raises(DomainError):
        read_snapshot(tmp_path / "bad.bin")


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(-10.0, 10.0).filter(lambda v: abs(v) > 1e-3),
       seed=st.integers(0, 10 ** 6))
def test_norms_scale_quadratically(lam, seed):
    r = np.random.default_rng(seed)
    st_ = WaveState.from_modes(31, r.standard_normal(8), r.standard_normal(8))
    sc = st_.scaled(lam)
    gs = GrowthSpec.constant()
    for fn in (energy, discrete_energy):
        assert fn(sc) == pytest.approx(lam * lam * fn(st_), rel=1e-12)
    assert strong_norm(sc) == pytest.approx(abs(lam) * strong_norm(st_), rel=1e-12)
    assert weak_norm(sc, gs) == pytest.approx(abs(lam) * weak_norm(st_, gs), rel=1e-12)
