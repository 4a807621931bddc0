"""Discrete comparison laboratory.

An energy-like sequence obeying ``E_{k+1} <= E_k - rho_T M(E_k)`` sits below
the Euler sequence ``y~_{k+1} = y~_k - rho_T M(y~_k)``, which in turn sits
below the solution of ``y' = -(rho_T / T) M(y)`` sampled at ``s_k = k T``.
This module builds those three objects and checks the ordering, then checks
the resulting envelope ``T F(1 / psi_r^-1((t - T) rho_T / T0))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from ._errors import ConfigError, DomainError, NumericalFailure
from ._numerics import bisect_increasing
from .weight import ComparisonFunction, Composite

__all__ = [
    "SequenceInstance",
    "EulerResult",
    "ChainReport",
    "BoundReport",
    "estimate_delta",
    "euler_sequence",
    "ode_solution",
    "ode_solution_via_K",
    "saturating_sequence",
    "check_chain",
    "discretcont_bound",
    "random_instance",
    "power_family_instance",
    "report_to_json",
]

ODE_RTOL = 1e-12


def estimate_delta(M, rho_T, search_max=1.0, n=4096):
    """Monotonicity radius of ``x - rho_T M(x)`` on ``[0, search_max]``.

    Returns the first grid point where the sampled increment stops being
    positive, less one grid step, or ``search_max`` if it never does.
    """
    x = np.linspace(0.0, search_max, n + 1)
    psi = x - rho_T * np.asarray(M(x), dtype=float)
    bad = np.flatnonzero(np.diff(psi) <= 0)
    if bad.size == 0:
        return float(search_max)
    return float(max(x[bad[0]] - x[1], 0.0))


@dataclass
class SequenceInstance:
    """A comparison problem ``(M, rho_T, T, E0)``.

    ``F`` / ``F_inv`` are optional; when given, ``M(v) = v F_inv(v)`` is the
    usual choice and the ODE solution has a quadrature characterization.
    """

    E0: float
    M: Callable
    rho_T: float
    T: float = 1.0
    F: Optional[Callable] = None
    F_inv: Optional[Callable] = None
    delta: Optional[float] = None
    label: str = ""

    def __post_init__(self):
        if not (self.rho_T > 0 and self.T > 0):
            raise ConfigError("rho_T and T must be positive")
        if not self.E0 >= 0:
            raise DomainError("E0 must be nonnegative")
        if self.delta is None:
            self.delta = estimate_delta(self.M, self.rho_T, max(1.0, 2.0 * self.E0))
        if not self.E0 < self.delta:
            raise DomainError(
                f"E0 = {self.E0} is not below the monotonicity radius delta = {self.delta}")

    @classmethod
    def from_F(cls, F, F_inv, E0, rho_T, T=1.0, delta=None, label=""):
        def M(v):
            v = np.asarray(v, dtype=float)
            return v * F_inv(v)
        return cls(E0, M, rho_T, T, F, F_inv, delta, label)

    @property
    def T0(self):
        return self.T / self.rho_T

    def psi(self, x):
        return np.asarray(x, dtype=float) - self.rho_T * np.asarray(self.M(x), dtype=float)

    def psi_increasing(self, n=1000):
        x = np.linspace(0.0, self.delta, n + 1)
        return bool(np.all(np.diff(self.psi(x)) > 0))


@dataclass
class EulerResult:
    values: np.ndarray
    truncated: bool
    truncation_index: Optional[int]


def euler_sequence(inst: SequenceInstance, n: int) -> EulerResult:
    """``y~_0 = E0``, ``y~_{k+1} = y~_k - rho_T M(y~_k)`` for ``k < n``.

    The recurrence is applied exactly; the first index leaving ``[0, delta]``
    is flagged since the comparison argument says nothing past it.
    """
    y = np.empty(n + 1)
    y[0] = inst.E0
    cut = None
    for k in range(n):
        y[k + 1] = y[k] - inst.rho_T * float(inst.M(y[k]))
        if cut is None and not (0.0 <= y[k + 1] <= inst.delta):
            cut = k + 1
    return EulerResult(y, cut is not None, cut)


def ode_solution(inst: SequenceInstance, t, rtol=ODE_RTOL, atol=None):
    """Solution of ``y' = -(rho_T / T) M(y)``, ``y(0) = E0``, at times ``t``."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    if np.any(t < 0):
        raise DomainError("ode_solution needs t >= 0")
    if atol is None:
        atol = 1e-15 * max(inst.E0, 1e-300)
    out = np.empty_like(t)
    order = np.argsort(t, kind="stable")
    ts = t[order]
    if inst.E0 == 0 or ts[-1] == 0:
        out[:] = inst.E0
        return float(out[0]) if scalar else out
    c = inst.rho_T / inst.T

    def rhs(_, y):
        return -c * np.asarray(inst.M(np.maximum(y, 0.0)), dtype=float)

    sol = solve_ivp(rhs, (0.0, ts[-1]), [inst.E0], method="RK45", t_eval=ts,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalFailure(f"comparison ODE failed: {sol.message}")
    out[order] = sol.y[0]
    return float(out[0]) if scalar else out


def ode_solution_via_K(inst: SequenceInstance, t):
    """``y(t) = K_r^-1(t / T0)`` with ``r = E0`` and ``Phi = F``.

    Independent of :func:`ode_solution`; needs ``F`` (and ``M = v F^-1(v)``).
    """
    if inst.F is None:
        raise ConfigError("the K_r characterization needs F")
    cf = ComparisonFunction(Composite.from_function(inst.F), inst.E0)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    for i, ti in enumerate(t):
        target = ti / inst.T0
        if target == 0:
            out[i] = inst.E0
            continue
        # K_r is decreasing in tau; bisect on -K over log tau
        lo = math.log(inst.E0) - 1.0
        while cf.K_log(lo) < target:
            lo -= max(1.0, abs(lo))
            if lo < -690:
                raise NumericalFailure("K_r does not reach the requested value")
        log_tau = bisect_increasing(lambda lt: -cf.K_log(np.ravel(lt)[0]), -target, lo,
                                    math.log(inst.E0), rtol=1e-13, xtol=1e-13)
        out[i] = math.exp(log_tau)
    return out


def saturating_sequence(inst: SequenceInstance, n: int, shrink: float = 0.0, start: int = 1):
    """Sequence meeting the recurrence with equality.

    With ``shrink > 0`` every value from index ``start`` on is the saturated
    update times ``1 - shrink``, which still satisfies the inequality.
    """
    E = np.empty(n + 1)
    E[0] = inst.E0
    for k in range(n):
        nxt = E[k] - inst.rho_T * float(inst.M(E[k]))
        if k + 1 >= start and shrink:
            nxt *= 1.0 - shrink
        E[k + 1] = max(nxt, 0.0)
    return E


@dataclass
class ChainReport:
    n: int
    premise_ok: bool
    premise_violation: Optional[int]
    holds: bool
    first_violation: Optional[int]
    violated_link: Optional[str]
    E: list = field(default_factory=list)
    euler: list = field(default_factory=list)
    ode: list = field(default_factory=list)
    slack_E_euler: list = field(default_factory=list)
    slack_euler_ode: list = field(default_factory=list)
    truncated: bool = False
    tolerances: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _premise(inst, E, tol):
    E = np.asarray(E, dtype=float)
    M = np.asarray(inst.M(E[:-1]), dtype=float)
    excess = E[1:] - (E[:-1] - inst.rho_T * M)
    bad = np.flatnonzero(excess > tol * np.maximum(1.0, np.abs(E[:-1])))
    return (None if bad.size == 0 else int(bad[0]) + 1), excess


def check_chain(inst: SequenceInstance, E, *, tol=1e-12, ode_rtol=ODE_RTOL) -> ChainReport:
    """Check ``E_k <= y~_k <= y(k T)`` for every sampled ``k``."""
    E = np.asarray(E, dtype=float)
    n = len(E) - 1
    bad, _ = _premise(inst, E, tol)
    tolerances = {"E_vs_euler": tol, "euler_vs_ode": 0.0, "premise": tol}
    if bad is not None or not E[0] < inst.delta:
        return ChainReport(n, False, bad if bad is not None else 0, False, None, None,
                           E=E.tolist(), tolerances=tolerances)
    eu = euler_sequence(inst, n)
    y = ode_solution(inst, inst.T * np.arange(n + 1), rtol=ode_rtol)
    # global error of the adaptive integration, loosely bounded
    ode_tol = 100.0 * ode_rtol * inst.E0
    tolerances["euler_vs_ode"] = ode_tol
    s1 = eu.values - E
    s2 = y - eu.values
    v1 = np.flatnonzero(s1 < -tol)
    v2 = np.flatnonzero(s2 < -ode_tol)
    first, link = None, None
    if v1.size or v2.size:
        i1 = int(v1[0]) if v1.size else n + 1
        i2 = int(v2[0]) if v2.size else n + 1
        first, link = (i1, "E<=euler") if i1 <= i2 else (i2, "euler<=ode")
    return ChainReport(n, True, None, first is None, first, link, E.tolist(),
                       eu.values.tolist(), y.tolist(), s1.tolist(), s2.tolist(),
                       eu.truncated, tolerances)


@dataclass
class BoundReport:
    premise_ok: bool
    premise_violation: Optional[int]
    times: list = field(default_factory=list)
    Ehat: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    valid: list = field(default_factory=list)
    validity_threshold: float = math.nan
    t_star: Optional[float] = None
    max_ratio: float = math.nan
    holds_from: Optional[float] = None

    def holds_on(self, t_min):
        """Whether the bound holds at every valid sampled time ``>= t_min``."""
        t = np.asarray(self.times)
        e = np.asarray(self.Ehat)
        b = np.asarray(self.bound)
        m = t >= t_min
        if np.any(~np.asarray(self.valid)[m]):
            return False
        return bool(np.all(e[m] <= b[m]))

    def to_dict(self):
        return asdict(self)


def discretcont_bound(inst: SequenceInstance, Ehat, times=None, r=None) -> BoundReport:
    """Evaluate ``T F(1 / psi_r^-1((t - T) rho_T / T0))`` against a step function.

    ``Ehat[k]`` is the value on ``[kT, (k+1)T)``.  ``r`` defaults to ``Ehat[0]``.
    """
    if inst.F is None or inst.F_inv is None:
        raise ConfigError("discretcont_bound needs F and F_inv")
    Ehat = np.asarray(Ehat, dtype=float)
    n = len(Ehat) - 1
    if np.any(np.diff(Ehat) > 0):
        return BoundReport(False, int(np.flatnonzero(np.diff(Ehat) > 0)[0]) + 1)
    bad, _ = _premise(inst, Ehat, 1e-12)
    if bad is not None or not Ehat[0] < inst.delta:
        return BoundReport(False, bad if bad is not None else 0)
    if times is None:
        times = inst.T * np.arange(0, n + 1, 0.5)
    times = np.asarray(times, dtype=float)
    k = np.minimum(np.floor(times / inst.T + 1e-12).astype(int), n)
    e = Ehat[k]
    if Ehat[0] == 0:
        return BoundReport(True, None, times.tolist(), e.tolist(), [0.0] * len(times),
                           [True] * len(times), 0.0, float(times[0]) if len(times) else None,
                           0.0, float(times[0]) if len(times) else None)
    r = float(Ehat[0] if r is None else r)
    cf = ComparisonFunction(Composite.from_function(inst.F), r)
    w = (times - inst.T) * inst.rho_T / inst.T0
    valid = w >= cf.z0 * (1 - 1e-12)
    bound = np.full_like(times, np.nan)
    if np.any(valid):
        z = cf.psi_inverse(w[valid])
        bound[valid] = inst.T * np.asarray(inst.F(1.0 / z), dtype=float)
    threshold = inst.T + cf.z0 * inst.T0 / inst.rho_T
    ok = valid & (e <= bound)
    ratio = np.where(valid, e / np.where(valid, bound, 1.0), np.nan)
    # smallest sampled time after which the bound never fails
    fail = np.flatnonzero(~ok)
    if fail.size == 0:
        t_star = float(times[0])
    elif fail[-1] + 1 < len(times):
        t_star = float(times[fail[-1] + 1])
    else:
        t_star = None
    max_ratio = float(np.nanmax(ratio)) if np.any(valid) else math.nan
    return BoundReport(True, None, times.tolist(), e.tolist(),
                       [None if math.isnan(b) else float(b) for b in bound],
                       valid.tolist(), float(threshold), t_star, max_ratio, t_star)


def random_instance(rng: np.random.Generator, T=None) -> SequenceInstance:
    """Draw ``M = kappa v^a`` with ``a in [1, 3]`` and ``rho_T M'(delta) < 1``."""
    a = float(rng.uniform(1.0, 3.0))
    rho_T = float(rng.uniform(0.05, 2.0))
    delta = float(rng.uniform(0.05, 1.0))
    u = float(rng.uniform(0.1, 0.9))
    kappa = u / (rho_T * a * delta ** (a - 1.0))
    E0 = float(rng.uniform(0.1, 0.95)) * delta
    T = float(rng.uniform(0.5, 4.0)) if T is None else float(T)

    def M(v, kappa=kappa, a=a):
        return kappa * np.power(np.maximum(np.asarray(v, dtype=float), 0.0), a)

    return SequenceInstance(E0, M, rho_T, T, delta=delta,
                            label=f"kappa={kappa:.6g},a={a:.6g}")


def power_family_instance(p, E0, rho_T, T, delta=None):
    """``F(x) = x^(2/(p-1))``, so ``M(v) = v^((p+1)/2)``; ``p = 3`` gives ``F(x) = x``."""
    if not p > 1:
        raise ConfigError("p must exceed 1")
    k = 2.0 / (p - 1.0)

    def F(x):
        return np.power(np.asarray(x, dtype=float), k)

    def F_inv(v):
        return np.power(np.asarray(v, dtype=float), 1.0 / k)

    return SequenceInstance.from_F(F, F_inv, E0, rho_T, T, delta, label=f"power p={p:g}")


def report_to_json(report, path=None, indent=2):
    """Serialize a chain or bound report, with NaN written as ``null``."""
    def clean(obj):
        if isinstance(obj, float) and not math.isfinite(obj):
            return None
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        return obj

    text = json.dumps(clean(report.to_dict()), indent=indent, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
