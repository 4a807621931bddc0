"""Damping nonlinearities, localized coefficients and the (A1) validator.

A :class:`DampingLaw` bundles the small-velocity profile ``g`` with the
feedback ``rho(x, v)`` and the sector constants ``c1, c2``.  The default
feedback follows ``g`` on ``|v| <= 1`` and continues with slope one beyond,
which keeps it continuous and inside the sector.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._errors import ConfigError, DomainError
from ._numerics import bisect_increasing

__all__ = [
    "DampingLaw",
    "CoefficientField",
    "ValidationReport",
    "Violation",
    "make_power_law",
    "make_cubic_exp",
    "make_linear_law",
    "make_custom_law",
    "validate_A1",
    "convexity_certificate",
    "law_to_dict",
    "law_from_dict",
]


@dataclass(frozen=True)
class DampingLaw:
    """Damping nonlinearity ``g`` with its feedback map ``rho``.

    ``g``, ``dg``, ``log_g`` and ``elasticity`` act on magnitudes in ``[0, 1]``;
    ``elasticity(u) = u g'(u) / g(u)`` is kept separately so that quantities
    built from ``g`` stay finite where ``g`` itself underflows.
    """

    g: Callable
    dg: Callable
    log_g: Callable
    elasticity: Callable
    rho: Callable
    drho: Callable
    c1: float
    c2: float
    r0: float
    family: str
    params: dict = field(default_factory=dict)

    def g_odd(self, x):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * self.g(np.abs(x))

    @property
    def g_prime_at_0(self):
        h = 1e-12
        return float(self.g(np.asarray(h)) / h)

    def g_inverse(self, y):
        """Inverse of ``g`` on ``[0, g(1)]`` by bisection."""
        y = np.asarray(y, dtype=float)
        top = float(self.g(np.asarray(1.0)))
        if np.any(y < 0) or np.any(y > top * (1 + 1e-15)):
            raise DomainError(f"g^-1 is defined on [0, {top}]")
        return bisect_increasing(self.g, np.minimum(y, top), 0.0, 1.0, rtol=4e-16)

    def R(self, x):
        """``sqrt(x) g(sqrt(x))`` for ``x`` in ``[0, r0^2]`` (no domain check)."""
        x = np.asarray(x, dtype=float)
        return np.sqrt(x) * self.g(np.sqrt(x))


@dataclass(frozen=True)
class CoefficientField:
    """Localization coefficient ``a(x)`` on ``[0, 1]``.

    ``kind`` is ``"piecewise-constant"`` (``amax`` on ``omega``, zero elsewhere)
    or ``"bump"`` (``amax`` on ``omega`` with ``sin^2`` shoulders of width
    ``ramp`` on each side, so ``a`` is C^1).
    """

    kind: str = "bump"
    omega: tuple = (0.4, 0.6)
    a0: float = 1.0
    amax: float = 1.0
    ramp: float = 0.05

    def __post_init__(self):
        if self.kind not in ("piecewise-constant", "bump"):
            raise ConfigError(f"unknown coefficient kind {self.kind!r}")
        lo, hi = self.omega
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError(f"omega must be a sub-interval of [0, 1], got {self.omega}")
        if self.amax < 0 or self.a0 < 0 or self.ramp < 0:
            raise ConfigError("amax, a0 and ramp must be nonnegative")
        object.__setattr__(self, "omega", (float(lo), float(hi)))

    @classmethod
    def constant(cls, value):
        return cls(kind="piecewise-constant", omega=(0.0, 1.0), a0=value, amax=value)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.omega
        inside = (x >= lo) & (x <= hi)
        if self.kind == "piecewise-constant" or self.ramp == 0:
            return np.where(inside, self.amax, 0.0)
        w = self.ramp
        left = np.clip((x - (lo - w)) / w, 0.0, 1.0)
        right = np.clip(((hi + w) - x) / w, 0.0, 1.0)
        shoulder = np.sin(0.5 * np.pi * np.minimum(left, right)) ** 2
        return self.amax * np.where(inside, 1.0, shoulder)

    @property
    def sup_norm(self):
        return float(self.amax)

    @property
    def is_zero(self):
        return self.amax == 0.0


@dataclass(frozen=True)
class Violation:
    check: str
    location: float
    detail: str


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    samples: int = 0

    @property
    def passed(self):
        return not self.violations

    def add(self, check, location, detail):
        self.violations.append(Violation(check, float(location), detail))

    def to_dict(self):
        return {
            "passed": self.passed,
            "samples": self.samples,
            "violations": [vars(v) for v in self.violations],
        }


def convexity_certificate(law_or_g, r0, n=1024):
    """True when ``R(x) = sqrt(x) g(sqrt(x))`` has positive second differences.

    The grid is ``[0, r0^2]`` with step ``r0^2 / n``.  Stencils whose three
    values all underflow to zero are skipped: ``g`` is strictly increasing, so
    those values are positive in exact arithmetic.
    """
    g = law_or_g.g if isinstance(law_or_g, DampingLaw) else law_or_g
    x = np.linspace(0.0, r0 * r0, n + 1)
    with np.errstate(all="ignore"):
        R = np.sqrt(x) * g(np.sqrt(x))
    if not np.all(np.isfinite(R)):
        return False
    d2 = R[:-2] - 2 * R[1:-1] + R[2:]
    flat = (R[:-2] == 0) & (R[1:-1] == 0) & (R[2:] == 0)
    return bool(np.all((d2 > 0) | flat))


def _default_r0(g):
    r0 = 1.0
    for _ in range(40):
        if convexity_certificate(g, r0):
            return r0
        r0 *= 0.5
    raise DomainError("R is not strictly convex on any dyadic [0, r0^2]")


def _blended_feedback(g, dg):
    g1 = float(g(np.asarray(1.0)))

    def rho(x, v):
        v = np.asarray(v, dtype=float)
        m = np.abs(v)
        inner = g(np.minimum(m, 1.0))
        return np.sign(v) * np.where(m <= 1.0, inner, g1 + (m - 1.0))

    def drho(x, v):
        m = np.abs(np.asarray(v, dtype=float))
        return np.where(m <= 1.0, dg(np.minimum(m, 1.0)), 1.0)

    return rho, drho, g1


def _sector_defaults(g1, c1, c2):
    if c1 is None:
        c1 = min(1.0, g1)
    if c2 is None:
        c2 = max(1.0, 1.0 / g1)
    if not 0 < c1 <= c2:
        raise ConfigError(f"need 0 < c1 <= c2, got c1={c1}, c2={c2}")
    return float(c1), float(c2)


def _check_r0(r0):
    if not 0 < r0 <= 1:
        raise ConfigError(f"r0 must lie in (0, 1], got {r0}")
    return float(r0)


def make_power_law(p, c1=None, c2=None, r0=None):
    """``g(x) = x^p`` with the blended feedback; requires ``p > 1``."""
    p = float(p)
    if not p > 1:
        raise ConfigError(f"power law needs p > 1, got {p}")

    def g(x):
        return np.asarray(x, dtype=float) ** p

    def dg(x):
        return p * np.asarray(x, dtype=float) ** (p - 1)

    def log_g(x):
        with np.errstate(divide="ignore"):
            return p * np.log(x)

    def elasticity(x):
        return np.full_like(np.asarray(x, dtype=float), p)

    rho, drho, g1 = _blended_feedback(g, dg)
    c1, c2 = _sector_defaults(g1, c1, c2)
    r0 = _default_r0(g) if r0 is None else _check_r0(r0)
    return DampingLaw(g, dg, log_g, elasticity, rho, drho, c1, c2, r0,
                      "power", {"p": p})


def make_cubic_exp(c1=None, c2=None, r0=None):
    """``g(x) = x^3 exp(-1/x^2)`` with ``g(0) = 0``."""

    def g(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(x > 0, x ** 3 * np.exp(-1.0 / (x * x)), 0.0)

    def dg(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            return np.where(x > 0, np.exp(-1.0 / (x * x)) * (3 * x * x + 2), 0.0)

    def log_g(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return 3 * np.log(x) - 1.0 / (x * x)

    def elasticity(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return 3.0 + 2.0 / (x * x)

    rho, drho, g1 = _blended_feedback(g, dg)
    c1, c2 = _sector_defaults(g1, c1, c2)
    r0 = _default_r0(g) if r0 is None else _check_r0(r0)
    return DampingLaw(g, dg, log_g, elasticity, rho, drho, c1, c2, r0,
                      "cubic_exp", {})


def make_linear_law():
    """``rho(x, v) = v``; fails the ``g'(0) = 0`` part of (A1) by design."""

    def g(x):
        return np.asarray(x, dtype=float)

    def dg(x):
        return np.ones_like(np.asarray(x, dtype=float))

    def log_g(x):
        with np.errstate(divide="ignore"):
            return np.log(x)

    def rho(x, v):
        return np.asarray(v, dtype=float)

    def drho(x, v):
        return np.ones_like(np.asarray(v, dtype=float))

    return DampingLaw(g, dg, log_g, dg, rho, drho, 1.0, 1.0, 1.0, "linear", {})


def make_custom_law(g, *, rho=None, dg=None, drho=None, c1=None, c2=None, r0=None):
    """Wrap a user ``g`` (vectorized on ``[0, 1]``); derivatives by central differences."""
    h = 1e-7

    if dg is None:
        def dg(x):
            x = np.asarray(x, dtype=float)
            lo = np.maximum(x - h, 0.0)
            hi = x + h
            return (g(hi) - g(lo)) / (hi - lo)

    def log_g(x):
        with np.errstate(divide="ignore"):
            return np.log(g(x))

    def elasticity(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return x * dg(x) / g(x)

    g1 = float(g(np.asarray(1.0)))
    if rho is None:
        rho, drho, _ = _blended_feedback(g, dg)
    elif drho is None:
        def drho(x, v):
            v = np.asarray(v, dtype=float)
            return (rho(x, v + h) - rho(x, v - h)) / (2 * h)
    c1, c2 = _sector_defaults(g1, c1, c2)
    r0 = _default_r0(g) if r0 is None else _check_r0(r0)
    return DampingLaw(g, dg, log_g, elasticity, rho, drho, c1, c2, r0, "custom", {})


def validate_A1(law, field, samples=1000, *, g_prime_tol=0.1, rtol=1e-12):
    """Check assumption (A1) on sampled points.

    Every violated sampled inequality is recorded with its location; a
    non-finite evaluation becomes a violation rather than an exception.
    """
    if samples < 100:
        raise ConfigError("validate_A1 needs at least 100 samples")
    report = ValidationReport(samples=samples)
    u = np.linspace(0.0, 1.0, samples)
    xs = np.linspace(0.0, 1.0, 7)

    with np.errstate(all="ignore"):
        try:
            gu = np.asarray(law.g(u), dtype=float)
        except Exception as exc:  # user callables may raise anything
            report.add("g_finite", np.nan, f"g raised {exc!r}")
            return report
    bad = ~np.isfinite(gu)
    for loc in u[bad][:10]:
        report.add("g_finite", loc, "non-finite g")
    if np.any(bad):
        return report

    if gu[0] != 0.0:
        report.add("g_zero", 0.0, f"g(0) = {gu[0]!r}")
    slope0 = law.g_prime_at_0
    if not abs(slope0) <= g_prime_tol:
        report.add("g_prime_zero", 0.0, f"g(h)/h = {slope0:.3e} at h=1e-12")
    odd_err = law.g_odd(-u[1:]) + law.g_odd(u[1:])
    for loc in u[1:][odd_err != 0][:10]:
        report.add("g_odd", loc, "g(-x) != -g(x)")
    inc = np.diff(gu) > 0
    # underflowed flat stretches next to 0 cannot be resolved in floating point
    flat_zero = (gu[:-1] == 0) & (gu[1:] == 0) & (u[1:] > 0)
    for loc in u[1:][~(inc | flat_zero)][:10]:
        report.add("g_increasing", loc, "g not strictly increasing")

    v_small = u[1:]
    v_big = np.linspace(1.0, 5.0, samples)
    g_inv = law.g_inverse(np.clip(v_small, 0.0, float(gu[-1])))
    over_range = v_small > gu[-1]
    for x in xs:
        with np.errstate(all="ignore"):
            try:
                r0v = law.rho(x, np.asarray(0.0))
                rs = np.abs(law.rho(x, v_small))
                rb = np.abs(law.rho(x, v_big))
                vv = np.linspace(-5.0, 5.0, 2 * samples + 1)
                rv = law.rho(x, vv)
            except Exception as exc:
                report.add("rho_finite", x, f"rho raised {exc!r}")
                continue
        if not (np.all(np.isfinite(rs)) and np.all(np.isfinite(rb)) and np.all(np.isfinite(rv))):
            report.add("rho_finite", x, "non-finite rho")
            continue
        if r0v != 0:
            report.add("rho_zero", x, f"rho(x, 0) = {float(r0v)!r}")
        underflow = (rv[:-1] == 0) & (rv[1:] == 0)
        for loc in vv[1:][(np.diff(rv) <= 0) & ~underflow][:5]:
            report.add("rho_increasing", x, f"rho not increasing near v={loc:.4g}")
        lower = law.c1 * law.g(v_small)
        upper = np.where(over_range, np.inf, law.c2 * g_inv)
        for loc in v_small[rs < lower * (1 - rtol)][:5]:
            report.add("sector_lower_small", x, f"c1 g(|v|) > |rho| at v={loc:.4g}")
        for loc in v_small[rs > upper * (1 + rtol)][:5]:
            report.add("sector_upper_small", x, f"|rho| > c2 g^-1(|v|) at v={loc:.4g}")
        for loc in v_big[rb < law.c1 * v_big * (1 - rtol)][:5]:
            report.add("sector_lower_large", x, f"|rho| < c1 |v| at v={loc:.4g}")
        for loc in v_big[rb > law.c2 * v_big * (1 + rtol)][:5]:
            report.add("sector_upper_large", x, f"|rho| > c2 |v| at v={loc:.4g}")

    if not convexity_certificate(law, law.r0):
        report.add("R_convex", law.r0, "R not strictly convex on [0, r0^2]")

    xa = np.linspace(0.0, 1.0, samples)
    a = field(xa)
    for loc in xa[a < 0][:10]:
        report.add("a_nonnegative", loc, "a < 0")
    lo, hi = field.omega
    on_omega = (xa >= lo) & (xa <= hi)
    for loc in xa[on_omega & (a < field.a0)][:10]:
        report.add("a_lower_bound", loc, f"a < a0 = {field.a0}")
    # a jump shows up as a difference-quotient bound that doubles with the grid
    lip = []
    for n in (samples, 2 * samples, 4 * samples):
        xg = np.linspace(0.0, 1.0, n)
        lip.append(np.max(np.abs(np.diff(field(xg)))) * (n - 1))
    if lip[0] > 0 and lip[2] > 3.0 * lip[0]:
        report.add("a_continuous", float(xa[np.argmax(np.abs(np.diff(a)))]),
                   "difference quotient grows with refinement")
    return report


def law_to_dict(law, field=None):
    """JSON description ``{family, params, c1, c2, r0, a}``."""
    if law.family == "custom":
        raise ConfigError("custom laws hold arbitrary callables and cannot be serialized")
    out = {
        "family": law.family,
        "params": dict(law.params),
        "c1": law.c1,
        "c2": law.c2,
        "r0": law.r0,
    }
    if field is not None:
        out["a"] = {
            "kind": field.kind,
            "omega": list(field.omega),
            "a0": field.a0,
            "amax": field.amax,
            "ramp": field.ramp,
        }
    return out


def law_from_dict(spec):
    """Inverse of :func:`law_to_dict`; returns ``(law, field or None)``."""
    family = spec.get("family")
    params = spec.get("params") or {}
    kw = {k: spec.get(k) for k in ("c1", "c2", "r0")}
    if family == "power":
        if "p" not in params:
            raise ConfigError("power law needs params.p")
        law = make_power_law(params["p"], **kw)
    elif family == "cubic_exp":
        law = make_cubic_exp(**kw)
    elif family == "linear":
        law = make_linear_law()
    else:
        raise ConfigError(f"unknown damping family {family!r}")
    field = None
    if spec.get("a") is not None:
        a = dict(spec["a"])
        try:
            field = CoefficientField(
                kind=a.get("kind", "bump"),
                omega=tuple(a.get("omega", (0.4, 0.6))),
                a0=float(a.get("a0", 1.0)),
                amax=float(a.get("amax", 1.0)),
                ramp=float(a.get("ramp", 0.05)),
            )
        except TypeError as exc:
            raise ConfigError(f"bad coefficient spec: {exc}") from exc
    return law, field
