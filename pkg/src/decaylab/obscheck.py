"""Observation functional of the conservative flow and the inequality checks built on it.

Everything here is a numerical test: constants are either computed from
closed formulas (``k_T``, ``c5``, ``c6``) or fitted as empirical bounds from
sampled data, never claimed as sharp.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._errors import ConfigError, DomainError, ResolutionError
from .damping import CoefficientField, DampingLaw
from .wavesim import (WaveConfig, WaveState, eigenvalues, energy, solve, strong_norm_sq,
                      weak_norm_sq)

__all__ = [
    "Datum",
    "ObservabilityReport",
    "LemmaResult",
    "LemmaReport",
    "deterministic_suite",
    "random_suite",
    "conservative_run",
    "observation_functional",
    "functional_of_datum",
    "check_A2",
    "check_A3",
    "ExponentialObservabilityFit",
    "fit_exponential_observability",
    "k_T_constant",
    "kinetic_constants",
    "check_lemma_linear_vs_nonlinear",
    "check_lemma_phiz",
    "check_lemma_kinetic",
]

MIN_SAMPLES_PER_PERIOD = 40
LEMMA_RTOL = 1e-9


@dataclass
class Datum:
    label: str
    state: WaveState


def _mode_state(N, n, which="w"):
    c = np.zeros(n)
    c[-1] = 1.0 / (n * math.pi) if which == "w" else 1.0
    return WaveState.from_modes(N, c if which == "w" else (), c if which == "v" else ())


def deterministic_suite(N=127, max_mode=32, scale=1.0):
    """Single modes ``1..max_mode`` with unit energy-norm, plus pairwise mixtures.

    Pairs combine a displacement mode and a velocity mode from a spread of
    frequencies, so every check sees both low and high frequencies together.
    """
    data = []
    for n in range(1, max_mode + 1):
        data.append(Datum(f"mode{n}", _mode_state(N, n).scaled(scale)))
    picks = [k for k in (1, 2, 3, 5, 8, 13, 21, 32) if k <= max_mode]
    for i, m in enumerate(picks):
        for n in picks[i + 1:]:
            c = np.zeros(n)
            d = np.zeros(n)
            c[m - 1] = 1.0 / (m * math.pi)
            d[n - 1] = 1.0
            st = WaveState.from_modes(N, c, d).scaled(scale / math.sqrt(2.0))
            data.append(Datum(f"pair{m}-{n}", st))
    return data


def random_suite(N=127, count=50, seed=0, max_mode=16, scale_range=(0.05, 1.0)):
    """Seeded random data: Gaussian mode coefficients with a mild spectral decay."""
    rng = np.random.default_rng(seed)
    data = []
    for i in range(count):
        k = int(rng.integers(1, max_mode + 1))
        n = np.arange(1, k + 1)
        c = rng.standard_normal(k) / (n * math.pi) / np.sqrt(n)
        d = rng.standard_normal(k) / np.sqrt(n)
        st = WaveState.from_modes(N, c, d)
        amp = float(np.exp(rng.uniform(*np.log(scale_range))))
        st = st.scaled(amp / math.sqrt(2.0 * energy(st)))
        data.append(Datum(f"random{i}", st))
    return data


# -- observation functional ---------------------------------------------------------


def _top_mode(state, rel=1e-12):
    c, d = state.coefficients()
    mag = np.abs(c) * np.sqrt(eigenvalues(c.size)) + np.abs(d)
    if not np.any(mag > 0):
        return 0
    return int(np.flatnonzero(mag > rel * mag.max())[-1]) + 1


def conservative_run(state: WaveState, T, samples_per_period=64, field=None):
    """Exact modal trajectory on ``[0, T]`` sampled finely enough for the functional."""
    top = max(_top_mode(state), 1)
    n = max(int(math.ceil(T * top / 2.0 * samples_per_period)), 2)
    cfg = WaveConfig(N=state.N, T_final=T, dt=T / n, kind="conservative", scheme="spectral",
                     field=field)
    return solve(cfg, state)


def observation_functional(field: CoefficientField, traj, T, *, min_samples=MIN_SAMPLES_PER_PERIOD,
                           return_error=False):
    """``int_0^T int a |phi_t|^2 dx dt`` by trapezoid in space and time.

    The error estimate is the Richardson difference against every other
    time sample.  Raises :class:`ResolutionError` when the shortest retained
    period ``2 / n_max`` gets fewer than ``min_samples`` samples.
    """
    times = np.asarray(traj.times)
    if traj.V is None:
        raise ConfigError("trajectory frames are needed")
    if times[-1] < T * (1 - 1e-12):
        raise DomainError(f"trajectory ends at {times[-1]}, before T = {T}")
    keep = times <= T * (1 + 1e-12)
    times, V = times[keep], traj.V[keep]
    if field.is_zero:
        return (0.0, 0.0) if return_error else 0.0
    top = _top_mode(traj.state(0))
    if top > 0:
        dt = float(np.max(np.diff(times)))
        per_period = (2.0 / top) / dt
        if per_period < min_samples:
            cfg_dt = traj.config.dt
            need = int((2.0 / top) / (min_samples * cfg_dt))
            raise ResolutionError(
                f"{per_period:.1f} samples per shortest period, need {min_samples}", need)
    N = V.shape[1] - 2
    dx = 1.0 / (N + 1)
    a = np.asarray(field(np.arange(N + 2) * dx), dtype=float)
    inner = dx * (V * V) @ a
    val = float(np.trapezoid(inner, times))
    err = 0.0
    if len(times) >= 5 and (len(times) - 1) % 2 == 0:
        coarse = float(np.trapezoid(inner[::2], times[::2]))
        err = abs(val - coarse) / 3.0
    return (val, err) if return_error else val


def functional_of_datum(field, state, T, samples_per_period=64):
    traj = conservative_run(state, T, samples_per_period, field)
    return observation_functional(field, traj, T, return_error=True)


# -- A2 / A3 ------------------------------------------------------------------------


@dataclass
class ObservabilityReport:
    T: float
    inequality: str
    labels: list = field(default_factory=list)
    functional: list = field(default_factory=list)
    functional_error: list = field(default_factory=list)
    energy0: list = field(default_factory=list)
    strong_sq: list = field(default_factory=list)
    weak_sq: list = field(default_factory=list)
    growth_value: list = field(default_factory=list)
    admissible_constant: list = field(default_factory=list)
    vacuous: list = field(default_factory=list)
    passed: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    worst: Optional[str] = None

    @property
    def all_passed(self):
        return all(self.passed)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True)

    def write_margins_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["label", "functional", "energy0", "growth", "admissible_constant", "passed"])
            for row in zip(self.labels, self.functional, self.energy0, self.growth_value,
                           self.admissible_constant, self.passed):
                wr.writerow([row[0]] + [repr(float(v)) for v in row[1:5]] + [int(row[5])])


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating,)):
        return _clean(float(obj))
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _check_growth(field, gs, T, data, which, constant):
    rep = ObservabilityReport(T, which)
    for d in data:
        st = d.state
        E0 = energy(st)
        if E0 == 0:
            raise DomainError(f"datum {d.label} is identically zero")
        S = strong_norm_sq(st)
        val, err = functional_of_datum(field, st, T)
        if which == "A2":
            wsq = weak_norm_sq(st, gs)
            gval = float(gs(wsq / E0))
            lhs_unit = E0 * gval
        else:
            wsq = math.nan
            gval = float(gs(E0 / S))
            lhs_unit = S * gval
        vac = lhs_unit == 0
        adm = math.inf if vac else val / lhs_unit
        rep.labels.append(d.label)
        rep.functional.append(val)
        rep.functional_error.append(err)
        rep.energy0.append(E0)
        rep.strong_sq.append(S)
        rep.weak_sq.append(wsq)
        rep.growth_value.append(gval)
        rep.admissible_constant.append(adm)
        rep.vacuous.append(bool(vac))
    adm = np.asarray(rep.admissible_constant)
    fitted = float(np.min(adm)) if adm.size else math.nan
    used = fitted if constant is None else float(constant)
    rep.passed = [bool(a >= used * (1 - 1e-12)) for a in adm]
    key = "c_T" if which == "A2" else "C_T"
    rep.constants = {key: used, f"{key}_fitted": fitted}
    if adm.size:
        rep.worst = rep.labels[int(np.argmin(adm))]
    return rep


def check_A2(field, gs, T, data, c_T=None):
    """``c_T E(0) G(||.||^2_{X1 x X2} / E(0)) <= functional``; fits ``c_T`` when not given."""
    if gs.kind == "H_for_A3":
        raise ConfigError("check_A2 needs a G-type growth")
    return _check_growth(field, gs, T, data, "A2", c_T)


def check_A3(field, gs, T, data, C_T=None):
    """``C_T ||.||^2_{H1 x H1/2} H(E(0) / ||.||^2) <= functional``; fits ``C_T`` when not given."""
    if gs.kind == "G_for_A2":
        raise ConfigError("check_A3 needs an H-type growth")
    return _check_growth(field, gs, T, data, "A3", C_T)


# -- exponential observability fit ----------------------------------------------------


class ExponentialObservabilityFit(BaseEstimator):
    """Empirical fit of ``log(functional / ||.||_strong^2) ~ b - c_T q^(1/beta)``.

    ``q`` is the ratio of the ``H^2 x H^1_0`` norm to the ``H^1_0 x L^2``
    norm.  Data are single modes over ``mode_range``.  The fitted constants
    are empirical, with residuals, and are not sharp.

    Parameters
    ----------
    field : CoefficientField
    T : float
    beta_grid : sequence of float in (0, 1)
    mode_range : (int, int)
        Inclusive range of modes.
    N : int
        Grid size for the conservative runs.
    """

    def __init__(self, field=None, T=2.0, beta_grid=(0.25, 0.5, 0.75), mode_range=(1, 64), N=255):
        self.field = field
        self.T = T
        self.beta_grid = beta_grid
        self.mode_range = mode_range
        self.N = N

    def _data(self):
        lo, hi = self.mode_range
        if not 1 <= lo <= hi <= self.N:
            raise ConfigError("mode_range must lie in [1, N]")
        return [_mode_state(self.N, n) for n in range(lo, hi + 1)]

    def fit(self, X=None, y=None):
        """``X`` may be a list of states; by default single modes over ``mode_range``."""
        fld = self.field if self.field is not None else CoefficientField()
        states = list(X) if X is not None else self._data()
        q, obs, E = [], [], []
        for st in states:
            S = strong_norm_sq(st)
            E0 = energy(st)
            val, _ = functional_of_datum(fld, st, self.T)
            q.append(math.sqrt(S / (2.0 * E0)))
            obs.append(val / S)
            E.append(val / E0)
        q, obs, E = map(np.asarray, (q, obs, E))
        self.q_ = q
        self.log_obs_ = np.log(obs)
        spread = float(np.ptp(np.log(E))) if E.size else 0.0
        self.degenerate_ = bool(E.size < 3 or np.ptp(q) <= 1e-12 * q.max() or spread < 1e-6)
        best = None
        for beta in self.beta_grid:
            if not 0 < beta < 1:
                raise ConfigError("beta_grid entries must lie in (0, 1)")
            A = np.column_stack([np.ones_like(q), -q ** (1.0 / beta)])
            coef, *_ = np.linalg.lstsq(A, self.log_obs_, rcond=None)
            res = float(np.sqrt(np.mean((A @ coef - self.log_obs_) ** 2)))
            if best is None or res < best[0]:
                best = (res, beta, coef)
        self.residual_, self.beta_obs_, (self.intercept_, self.c_T_) = best[0], best[1], best[2]
        self.c_T_ = float(self.c_T_)
        self.intercept_ = float(self.intercept_)
        if self.degenerate_:
            self.c_T_ = 0.0
        return self

    def predict(self, q):
        """Fitted lower-bound factor ``exp(b - c_T q^(1/beta))``."""
        check_is_fitted(self, "c_T_")
        q = np.asarray(q, dtype=float)
        return np.exp(self.intercept_ - self.c_T_ * q ** (1.0 / self.beta_obs_))


def fit_exponential_observability(field, T, beta_grid=(0.25, 0.5, 0.75), mode_range=(1, 64), N=255):
    """Return ``(c_T, beta_obs, residual, degenerate)``."""
    est = ExponentialObservabilityFit(field, T, beta_grid, mode_range, N).fit()
    return est.c_T_, est.beta_obs_, est.residual_, est.degenerate_


# -- lemma checks ----------------------------------------------------------------------


def k_T_constant(T, field):
    return 8.0 * T * T * field.sup_norm ** 2 + 2.0


def kinetic_constants(law: DampingLaw, field: CoefficientField, n=4096):
    """``c5 = |Omega| (1 + c2^2)`` with ``|Omega| = int a``, and ``c6 = 1/c1 + c2``."""
    x = np.linspace(0.0, 1.0, n + 1)
    measure = float(np.trapezoid(field(x), x))
    return measure * (1.0 + law.c2 ** 2), 1.0 / law.c1 + law.c2, measure


@dataclass
class LemmaResult:
    label: str
    lhs: float
    rhs: float
    holds: bool
    margin: float
    detail: dict = field(default_factory=dict)


@dataclass
class LemmaReport:
    name: str
    results: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    no_data: bool = False
    error: Optional[str] = None

    @property
    def passed(self):
        return self.error is None and all(r.holds for r in self.results)

    @property
    def worst(self):
        if not self.results:
            return None
        return min(self.results, key=lambda r: r.margin).label

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        d["worst"] = self.worst
        return d


_RUN_CACHE: dict = {}


def _run_key(state, kind, law, field, T, N, dt):
    h = hashlib.sha1(state.w.tobytes() + state.v.tobytes()).hexdigest()
    return (h, kind, id(law) if kind == "nonlinear_damped" else None, repr(field), T, N, dt)


def _integrals(state, kind, law, field, T, cfl=0.5):
    """``(int int a v^2, int int a rho^2, dissipation)`` over ``[0, T]`` from one leapfrog run."""
    N = state.N
    dt = cfl / (N + 1)
    steps = max(int(math.ceil(T / dt)), 1)
    dt = T / steps
    key = _run_key(state, kind, law, field, T, N, dt)
    hit = _RUN_CACHE.get(key)
    if hit is not None:
        return hit
    cfg = WaveConfig(N=N, T_final=T, dt=dt, kind=kind, law=law, field=field,
                     stride=steps, keep_frames=False)
    tr = solve(cfg, state).trace
    out = (float(tr.kinetic_a[-1]), float(tr.feedback_a[-1]), float(tr.dissipation[-1]))
    if len(_RUN_CACHE) > 4096:
        _RUN_CACHE.clear()
    _RUN_CACHE[key] = out
    return out


def _compare(label, lhs, rhs, detail=None, rtol=LEMMA_RTOL):
    tol = rtol * max(abs(lhs), abs(rhs)) + 1e-300
    return LemmaResult(label, lhs, rhs, bool(lhs <= rhs + tol), rhs - lhs, detail or {})


def check_lemma_linear_vs_nonlinear(law, field, data, T, factor=2.0):
    """``int int a |z_t|^2 <= 2 int int (a |w_t|^2 + a |rho(w_t)|^2)``.

    ``z`` solves the linearly damped equation and ``w`` the nonlinearly
    damped one, from the same data.
    """
    rep = LemmaReport("linear_vs_nonlinear", constants={"factor": factor}, no_data=not data)
    for d in data:
        kz, _, _ = _integrals(d.state, "linear_damped", None, field, T)
        kw, fw, _ = _integrals(d.state, "nonlinear_damped", law, field, T)
        rep.results.append(_compare(d.label, kz, factor * (kw + fw),
                                    {"kinetic_w": kw, "feedback_w": fw}))
    return rep


def check_lemma_phiz(field, data, T, k_T=None):
    """``int int a |phi_t|^2 <= k_T int int a |z_t|^2`` with ``k_T = 8 T^2 ||a||^2 + 2``."""
    kT = k_T_constant(T, field) if k_T is None else float(k_T)
    rep = LemmaReport("phiz", constants={"k_T": kT}, no_data=not data)
    for d in data:
        kphi, _, _ = _integrals(d.state, "conservative", None, field, T)
        kz, _, _ = _integrals(d.state, "linear_damped", None, field, T)
        rep.results.append(_compare(d.label, kphi, kT * kz, {"phi": kphi, "z": kz}))
    return rep


def check_lemma_kinetic(law, ws, field, data, T):
    """Weighted kinetic bound with ``c5``, ``c6`` and the weight ``f`` at ``E(0) / ||.||^2``.

    LHS: ``T``-integral of ``f(Ehat0) int (a |w_t|^2 + a |rho(w_t)|^2)``.
    RHS: ``c5 T R*(f(Ehat0)) + c6 (f(Ehat0) + 1) * dissipation``.
    """
    c5, c6, measure = kinetic_constants(law, field)
    rep = LemmaReport("kinetic", constants={"c5": c5, "c6": c6, "measure": measure,
                                            "beta": ws.beta}, no_data=not data)
    for d in data:
        E0 = energy(d.state)
        ehat = E0 / strong_norm_sq(d.state)
        if not ehat < ws.s_max:
            rep.results.append(LemmaResult(d.label, math.nan, math.nan, False, -math.inf,
                                           {"Ehat0": ehat, "reason": "outside the weight's domain"}))
            continue
        fv = float(ws.f(ehat))
        kw, fw, diss = _integrals(d.state, "nonlinear_damped", law, field, T)
        lhs = fv * (kw + fw)
        rhs = c5 * T * float(ws.conjugate(fv)) + c6 * (fv + 1.0) * diss
        rep.results.append(_compare(d.label, lhs, rhs, {"Ehat0": ehat, "f": fv,
                                                        "dissipation": diss}))
    return rep
