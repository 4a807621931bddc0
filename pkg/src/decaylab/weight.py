"""Optimal-weight convexity objects and the decay envelopes built from them.

The chain is ``g -> R -> R* -> L -> f``, then a composite ``Phi = f * growth``
feeds the comparison function ``K_r`` / ``psi_r`` whose inverse gives the
envelope.  Every map is evaluated through the primal variable ``x`` of ``R``:
with ``e(u) = u g'(u) / g(u)`` and ``u = sqrt(x)``,

    R'(x) = g(u) (1 + e) / (2 u),     L(R'(x)) = x (e - 1) / (e + 1),

so the conjugate, ``L`` and ``f`` each cost a single bisection and remain
finite where ``g`` underflows.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._errors import ConfigError, DomainError, NotYetValidError
from ._numerics import bisect_increasing, gauss_kronrod, legendre_rule
from .damping import DampingLaw, convexity_certificate

__all__ = [
    "OVERFLOW",
    "WeightSystem",
    "GrowthSpec",
    "EnvelopeSpec",
    "Composite",
    "ComparisonFunction",
    "DecayEnvelope",
    "eval_R",
    "conjugate_R",
    "biconjugate_R",
    "eval_L",
    "weight_f",
    "growth_G_theta",
    "K_r",
    "psi_r",
    "psi_r_inverse",
    "envelope_main",
    "envelope_mainbis",
    "envelope_linear_appendix",
    "main_contraction_factor",
    "choose_beta",
]

_X_FLOOR = 1e-280


class _Overflow:
    """The ``+inf`` value of ``R`` outside ``[0, r0^2]``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "OVERFLOW"

    def __gt__(self, other):
        return not isinstance(other, _Overflow)

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, _Overflow)


OVERFLOW = _Overflow()


class WeightSystem:
    """``R``, ``R*``, ``L`` and the weight ``f`` for one damping law.

    Parameters
    ----------
    law : DampingLaw
    beta : float, default=1.0
        Scale in ``R*(f(s)) = s f(s) / beta``; ``f`` lives on ``[0, beta r0^2)``.
    """

    def __init__(self, law: DampingLaw, beta: float = 1.0):
        if not beta > 0:
            raise ConfigError(f"beta must be positive, got {beta}")
        self.law = law
        self.beta = float(beta)
        self.r0sq = law.r0 ** 2
        self.s_max = self.beta * self.r0sq
        if not convexity_certificate(law, law.r0):
            raise DomainError("R is not strictly convex on [0, r0^2]; lower r0")
        xb = np.asarray(self.r0sq)
        self.R_b = float(self.R(xb))
        self.dR_b = float(np.exp(self.log_dR(xb)))
        self.L_b = float(self.Lx(xb))
        # f switches to the boundary branch R*(y) = y r0^2 - R(r0^2) here
        self.s_b = self.beta * self.L_b

    def __repr__(self):
        return f"WeightSystem(family={self.law.family!r}, beta={self.beta}, r0sq={self.r0sq})"

    # -- primal parametrization ------------------------------------------------

    def R(self, x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(x) * self.law.g(np.sqrt(x))

    def log_dR(self, x):
        u = np.sqrt(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return self.law.log_g(u) + np.log1p(self.law.elasticity(u)) - np.log(2.0 * u)

    def dR(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(under="ignore"):
            return np.where(x > 0, np.exp(self.log_dR(np.maximum(x, _X_FLOOR))), 0.0)

    def Lx(self, x):
        """``L`` at the slope ``R'(x)``, i.e. ``x (e - 1) / (e + 1)``."""
        x = np.asarray(x, dtype=float)
        e = self.law.elasticity(np.sqrt(np.maximum(x, _X_FLOOR)))
        with np.errstate(invalid="ignore"):
            ratio = np.where(np.isinf(e), 1.0, (e - 1.0) / (e + 1.0))
        return x * ratio

    def x_of_slope(self, y):
        """Maximizer ``x`` of ``x y - R(x)`` for ``0 < y <= R'(r0^2)``."""
        y = np.asarray(y, dtype=float)
        lo_val = self.log_dR(_X_FLOOR)
        target = np.clip(np.log(y), lo_val, math.log(self.dR_b))
        return bisect_increasing(self.log_dR, target, _X_FLOOR, self.r0sq,
                                 geometric=True, check=False)

    def x_of_s(self, s):
        """Primal point with ``beta L(R'(x)) = s`` on the interior branch."""
        target = np.asarray(s, dtype=float) / self.beta
        lo_val = float(self.Lx(_X_FLOOR))
        target = np.clip(target, lo_val, self.L_b)
        return bisect_increasing(self.Lx, target, _X_FLOOR, self.r0sq,
                                 geometric=True, check=False)

    # -- dual objects ----------------------------------------------------------

    def conjugate(self, y):
        """``R*(y) = sup_{0 <= x <= r0^2} (x y - R(x))`` for ``y >= 0``."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("R* is evaluated for y >= 0 only")
        out = np.empty_like(y, dtype=float)
        inner = (y > 0) & (y <= self.dR_b)
        outer = y > self.dR_b
        out[y == 0] = 0.0
        if np.any(inner):
            yi = y[inner]
            out[inner] = yi * self.Lx(self.x_of_slope(yi))
        out[outer] = y[outer] * self.r0sq - self.R_b
        return out if out.ndim else float(out)

    def L(self, y):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("L is evaluated for y >= 0 only")
        out = np.zeros_like(y, dtype=float)
        inner = (y > 0) & (y <= self.dR_b)
        outer = y > self.dR_b
        if np.any(inner):
            out[inner] = self.Lx(self.x_of_slope(y[inner]))
        out[outer] = self.r0sq - self.R_b / y[outer]
        return out if out.ndim else float(out)

    def _check_s(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0) or np.any(s >= self.s_max):
            raise DomainError(f"weight f is defined on [0, {self.s_max})")
        return s

    def log_f(self, s):
        s = self._check_s(s)
        out = np.full_like(s, -np.inf, dtype=float)
        inner = (s > 0) & (s <= self.s_b)
        outer = s > self.s_b
        if np.any(inner):
            out[inner] = self.log_dR(self.x_of_s(s[inner]))
        out[outer] = math.log(self.R_b) - np.log(self.r0sq - s[outer] / self.beta)
        return out if out.ndim else float(out)

    def f(self, s):
        with np.errstate(under="ignore"):
            return np.exp(self.log_f(s))

    def convexity_certified(self, n=1024):
        return convexity_certificate(self.law, self.law.r0, n)


def _freeze(params):
    if params is None:
        return ()
    if isinstance(params, tuple):
        return params
    return tuple(sorted((str(k), float(v)) for k, v in dict(params).items()))


@dataclass(frozen=True)
class GrowthSpec:
    """Observability growth function ``G`` (for A2) or ``H`` (for A3).

    ``family`` selects the formula: ``constant`` (``c``), ``identity``,
    ``power`` (``k x^m``), ``exp`` (``exp(-c x^(-1/(2 beta)))``) or ``custom``
    (``func`` and optionally ``log_func``).
    """

    kind: str = "G_for_A2"
    family: str = "constant"
    params: tuple = ()
    theta: float = 0.5
    func: Optional[Callable] = None
    log_func: Optional[Callable] = None

    def __post_init__(self):
        object.__setattr__(self, "params", _freeze(self.params))
        if self.kind not in ("G_for_A2", "H_for_A3", "identity"):
            raise ConfigError(f"unknown growth kind {self.kind!r}")
        if self.kind == "identity" and self.family != "identity":
            object.__setattr__(self, "family", "identity")
        if self.family not in ("constant", "identity", "power", "exp", "custom"):
            raise ConfigError(f"unknown growth family {self.family!r}")
        if self.family == "custom" and self.func is None:
            raise ConfigError("custom growth needs func")
        if not 0 < self.theta < 1:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        p = self.p
        if self.family == "exp" and not (p.get("c", 1.0) > 0 and p.get("beta", 0.5) > 0):
            raise ConfigError("exp growth needs c > 0 and beta > 0")

    @classmethod
    def constant(cls, value=1.0, theta=0.5):
        return cls("G_for_A2", "constant", {"c": value}, theta)

    @classmethod
    def identity(cls, theta=0.5):
        return cls("identity", "identity", {}, theta)

    @classmethod
    def exponential(cls, c=1.0, beta=0.5, kind="H_for_A3", theta=0.5):
        return cls(kind, "exp", {"c": c, "beta": beta}, theta)

    @property
    def p(self):
        return dict(self.params)

    def log(self, x):
        x = np.asarray(x, dtype=float)
        p = self.p
        with np.errstate(divide="ignore"):
            if self.family == "constant":
                return np.full_like(x, math.log(p.get("c", 1.0)))
            if self.family == "identity":
                return np.log(x)
            if self.family == "power":
                return math.log(p.get("k", 1.0)) + p.get("m", 1.0) * np.log(x)
            if self.family == "exp":
                return -p.get("c", 1.0) * x ** (-1.0 / (2.0 * p.get("beta", 0.5)))
            if self.log_func is not None:
                return self.log_func(x)
            return np.log(self.func(x))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "custom":
            return self.func(x)
        with np.errstate(under="ignore"):
            return np.where(x > 0, np.exp(self.log(np.maximum(x, 1e-300))),
                            0.0 if self.family != "constant" else self.p.get("c", 1.0))

    def inverse(self, y, upper=1e300):
        """Inverse by bisection; ``y`` must lie in the range of the function."""
        if self.family == "constant":
            raise DomainError("a constant growth function is not invertible")
        y = np.asarray(y, dtype=float)
        if np.any(y <= 0):
            raise DomainError("growth inverse needs y > 0")
        return bisect_increasing(self.log, np.log(y), 1e-300, upper, geometric=True)

    @property
    def theta_exponent(self):
        return 1.0 / self.theta - 1.0

    def G_theta(self, x):
        """``G(x^(1/theta - 1))``."""
        return self(np.asarray(x, dtype=float) ** self.theta_exponent)

    def log_G_theta(self, x):
        return self.log(np.asarray(x, dtype=float) ** self.theta_exponent)

    @property
    def weak_norm_exponents(self):
        """Operator-scale exponents of the two components of ``X1 x X2``."""
        alpha = (self.theta - 0.5) / self.theta
        return alpha, alpha - 0.5

    def over_x_increasing(self, samples=1000):
        """Whether ``x -> H(x) / x`` increases on a grid of ``(0, 1)``."""
        x = np.linspace(0.0, 1.0, samples + 2)[1:-1]
        vals = self.log(x) - np.log(x)
        return bool(np.all(np.diff(vals) > 0))

    def to_dict(self):
        if self.family == "custom":
            raise ConfigError("custom growth cannot be serialized")
        return {"kind": self.kind, "family": self.family, "params": self.p, "theta": self.theta}

    @classmethod
    def from_dict(cls, spec):
        try:
            return cls(spec.get("kind", "G_for_A2"), spec.get("family", "constant"),
                       spec.get("params") or {}, float(spec.get("theta", 0.5)))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad growth spec: {exc}") from exc


@dataclass(frozen=True)
class EnvelopeSpec:
    T: float = 2.0
    T0: float = 1.0
    rho_T: float = 1.0
    r: float = 0.5
    eta: float = 1.0

    def __post_init__(self):
        for name in ("T", "T0", "rho_T", "eta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.r < self.eta:
            raise ConfigError(f"need 0 < r < eta, got r={self.r}, eta={self.eta}")


class Composite:
    """A strictly increasing map ``Phi`` on ``(0, s_max)`` given through ``log Phi``.

    ``kinks`` lists points where ``Phi`` is only C^1; quadrature panels are
    split there.
    """

    def __init__(self, log_phi, s_max=math.inf, kinks=(), name="Phi"):
        self.log_phi = log_phi
        self.s_max = float(s_max)
        self.kinks = tuple(k for k in kinks if 0 < k < self.s_max)
        self.name = name

    @classmethod
    def from_weight(cls, ws: WeightSystem, gs: GrowthSpec, which="main"):
        if which == "main":
            if gs.kind == "H_for_A3":
                raise ConfigError("the main envelope needs a G-type growth")

            def log_phi(s):
                return ws.log_f(s) + gs.log_G_theta(s)
            name = "f*G_theta"
        elif which == "mainbis":
            if gs.kind == "G_for_A2":
                raise ConfigError("the mainbis envelope needs an H-type growth")

            def log_phi(s):
                return ws.log_f(s) + gs.log(s)
            name = "f*H"
        else:
            raise ConfigError(f"unknown composite {which!r}")
        return cls(log_phi, ws.s_max, kinks=(ws.s_b,), name=name)

    @classmethod
    def from_function(cls, F, log_F=None, s_max=math.inf):
        if log_F is None:
            def log_F(s):
                with np.errstate(divide="ignore"):
                    return np.log(F(s))
        return cls(log_F, s_max, name="F")

    def __call__(self, s):
        with np.errstate(under="ignore"):
            return np.exp(self.log_phi(s))

    def _upper(self, target_max):
        hi = self.s_max * (1 - 2.0 ** -40) if math.isfinite(self.s_max) else 1.0
        if not math.isfinite(self.s_max):
            while self.log_phi(np.asarray(hi)) < target_max:
                hi *= 2.0
                if hi > 1e300:
                    raise DomainError(f"{self.name} does not reach the requested value")
        return hi

    def inverse_log(self, log_v):
        """``Phi^-1(exp(log_v))`` by geometric bisection."""
        log_v = np.asarray(log_v, dtype=float)
        hi = self._upper(float(np.max(log_v)))
        lo = 1e-300
        if np.any(log_v > self.log_phi(np.asarray(hi))):
            raise DomainError(f"value outside the range of {self.name}")
        target = np.maximum(log_v, float(self.log_phi(np.asarray(lo))))
        return bisect_increasing(self.log_phi, target, lo, hi, geometric=True, check=False)

    def inverse(self, v):
        v = np.asarray(v, dtype=float)
        if np.any(v <= 0):
            raise DomainError(f"{self.name}^-1 needs v > 0")
        return self.inverse_log(np.log(v))


class ComparisonFunction:
    """``K_r(tau) = int_tau^r dv / (v Phi^-1(v))`` and ``psi_r(z) = z + K_r(Phi(1/z))``.

    ``psi_r`` is evaluated through the integrated-by-parts form

        psi_r(z) = z + z0 log r - z log Phi(1/z) + int_{z0}^{z} log Phi(1/u) du,

    which needs no inverse of ``Phi``.  The integral is tabulated on a
    geometric panel mesh so that ``psi_r`` is a smooth deterministic function
    of ``z``; ``K_r`` itself is an independent adaptive quadrature.
    """

    _GL = 24

    def __init__(self, composite: Composite, r: float, *, panel_ratio=1.5, z_cap=1e12):
        if not r > 0:
            raise ConfigError("r must be positive")
        self.phi = composite
        self.r = float(r)
        self.log_r = math.log(self.r)
        self.s_r = float(composite.inverse_log(self.log_r))
        self.z0 = 1.0 / self.s_r
        self.panel_ratio = float(panel_ratio)
        self._lock = threading.Lock()
        self._edges = np.array([self.z0])
        self._cum = np.array([0.0])
        self._err = 0.0
        self._extend(max(z_cap, 10 * self.z0))

    # integrand of the tabulated integral
    def _ell(self, u):
        return self.phi.log_phi(1.0 / np.asarray(u, dtype=float))

    def _panel_rule(self, a, b, n):
        x, w = legendre_rule(n)
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[..., None] + half[..., None] * x
        return half * (self._ell(nodes) @ w)

    def _extend(self, z_needed):
        with self._lock:
            top = self._edges[-1]
            if top >= z_needed:
                return
            n = int(math.ceil(math.log(z_needed / top) / math.log(self.panel_ratio))) + 1
            new = top * self.panel_ratio ** np.arange(1, n + 1)
            kinks = [1.0 / k for k in self.phi.kinks if top < 1.0 / k < new[-1]]
            new = np.unique(np.concatenate([new, kinks]))
            a = np.concatenate([[top], new[:-1]])
            vals = self._panel_rule(a, new, self._GL)
            coarse = self._panel_rule(a, new, self._GL // 2)
            self._err += float(np.sum(np.abs(vals - coarse)))
            self._cum = np.concatenate([self._cum, self._cum[-1] + np.cumsum(vals)])
            self._edges = np.concatenate([self._edges, new])

    @property
    def table_error(self):
        """Summed |GL24 - GL12| over the tabulated panels."""
        return self._err

    def integral_log_phi(self, z):
        """``int_{z0}^{z} log Phi(1/u) du`` for ``z >= z0``."""
        z = np.asarray(z, dtype=float)
        if np.any(z < self.z0 * (1 - 1e-14)):
            raise DomainError(f"psi_r needs z >= z0 = {self.z0}")
        z = np.maximum(z, self.z0)
        zmax = float(np.max(z)) if z.size else self.z0
        if zmax > self._edges[-1]:
            self._extend(zmax * 1.01)
        k = np.clip(np.searchsorted(self._edges, z, side="right") - 1, 0, len(self._edges) - 1)
        a = self._edges[k]
        partial = np.where(z > a, self._panel_rule(a, np.maximum(z, a), self._GL), 0.0)
        return self._cum[k] + partial

    def psi(self, z):
        z = np.asarray(z, dtype=float)
        out = z + self.z0 * self.log_r - z * self._ell(z) + self.integral_log_phi(z)
        return out if out.ndim else float(out)

    def psi_inverse(self, w, rtol=1e-15):
        """Inverse of ``psi_r`` on ``[psi_r(z0), inf)`` by bisection."""
        w = np.asarray(w, dtype=float)
        if np.any(w < self.z0 * (1 - 1e-12)):
            raise DomainError(f"psi_r^-1 is defined for w >= psi_r(z0) = {self.z0}")
        w = np.maximum(w, self.z0)
        # psi_r(z) >= z, so the root lies in [z0, w]
        hi = np.maximum(w, self.z0) * (1 + 1e-12)
        if hi.size:
            self._extend(float(np.max(hi)) * 1.01)
        out = bisect_increasing(self.psi, w, self.z0, hi, rtol=rtol,
                                geometric=True, check=False)
        return out

    def K(self, tau, epsabs=1e-12, epsrel=1e-10):
        """Direct quadrature of ``K_r`` in the variable ``lambda = log v``."""
        tau = float(tau)
        if not tau > 0:
            raise DomainError("K_r needs tau > 0")
        return self.K_log(math.log(tau), epsabs=epsabs, epsrel=epsrel)

    def K_log(self, log_tau, epsabs=1e-12, epsrel=1e-10, return_error=False):
        log_tau = float(log_tau)
        if log_tau > self.log_r * (1 - 1e-15) + 1e-15 and log_tau > self.log_r:
            raise DomainError("K_r needs tau <= r")

        def integrand(lam):
            return 1.0 / self.phi.inverse_log(lam)

        val, err = gauss_kronrod(integrand, log_tau, self.log_r, epsabs=epsabs, epsrel=epsrel)
        return (val, err) if return_error else val


# -- estimator -------------------------------------------------------------------


class DecayEnvelope(BaseEstimator):
    """Energy decay envelope as an estimator: ``fit`` builds, ``predict`` evaluates.

    Parameters
    ----------
    law : DampingLaw
    growth : GrowthSpec
    theorem : {"main", "mainbis"}
        ``main`` uses ``f * G_theta``, ``mainbis`` uses ``f * H``.
    T, T0, r, eta : float
        Observability horizon, time scale and range parameters.
    beta : float
        Weight scale.
    """

    def __init__(self, law=None, growth=None, theorem="main", T=2.0, T0=1.0,
                 r=0.5, eta=1.0, beta=1.0):
        self.law = law
        self.growth = growth
        self.theorem = theorem
        self.T = T
        self.T0 = T0
        self.r = r
        self.eta = eta
        self.beta = beta

    def fit(self, X=None, y=None):
        if self.law is None:
            raise ConfigError("DecayEnvelope needs a damping law")
        growth = self.growth if self.growth is not None else GrowthSpec.constant()
        self.spec_ = EnvelopeSpec(T=self.T, T0=self.T0, r=self.r, eta=self.eta)
        self.weights_ = WeightSystem(self.law, self.beta)
        self.composite_ = Composite.from_weight(self.weights_, growth, self.theorem)
        self.comparison_ = ComparisonFunction(self.composite_, self.r)
        self.threshold_ = self.T + self.T0 * self.comparison_.z0
        return self

    def predict_with_validity(self, t):
        """Envelope on ``t`` plus a mask of times past the validity threshold."""
        check_is_fitted(self, "comparison_")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        valid = t >= self.threshold_
        out = np.full(t.shape, np.nan)
        if np.any(valid):
            w = (t[valid] - self.T) / self.T0
            z = self.comparison_.psi_inverse(w)
            out[valid] = self.beta * self.T * self.composite_.inverse(1.0 / z)
        return out, valid

    def predict(self, t):
        return self.predict_with_validity(t)[0]

    def envelope(self, t):
        """Scalar envelope; raises :class:`NotYetValidError` before the threshold."""
        check_is_fitted(self, "comparison_")
        if t < self.threshold_:
            raise NotYetValidError(
                f"envelope valid from t = {self.threshold_:.6g}", self.threshold_)
        return float(self.predict(t)[0])


# -- functional interface ----------------------------------------------------------


def eval_R(ws: WeightSystem, x):
    """``sqrt(x) g(sqrt(x))`` on ``[0, r0^2]``; :data:`OVERFLOW` beyond."""
    x = float(x)
    if x < 0:
        raise DomainError("R is undefined for negative x")
    if x > ws.r0sq:
        return OVERFLOW
    return float(ws.R(x))


def conjugate_R(ws: WeightSystem, y):
    return ws.conjugate(y)


def biconjugate_R(ws: WeightSystem, x, iters=200):
    """``R**(x) = sup_{y >= 0} (x y - R*(y))`` by golden-section search.

    Independent of the stationary-point route used by :meth:`WeightSystem.conjugate`.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo = np.zeros_like(x)
    hi = np.full_like(x, 2.0 * ws.dR_b + 1.0)
    phi = (math.sqrt(5.0) - 1.0) / 2.0

    def obj(y):
        return x * y - ws.conjugate(y)

    c = hi - phi * (hi - lo)
    d = lo + phi * (hi - lo)
    fc, fd = obj(c), obj(d)
    for _ in range(iters):
        left = fc >= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        c_new = hi - phi * (hi - lo)
        d_new = lo + phi * (hi - lo)
        c, d = np.where(left, c_new, d), np.where(left, c, d_new)
        fc, fd = np.where(left, obj(c), fd), np.where(left, fc, obj(d))
        if np.all(hi - lo <= 1e-15 * np.maximum(hi, 1e-300)):
            break
    y = 0.5 * (lo + hi)
    return np.maximum(obj(y), obj(np.zeros_like(y)))


def eval_L(ws: WeightSystem, y):
    return ws.L(y)


def weight_f(ws: WeightSystem, s):
    return ws.f(s)


def growth_G_theta(gs: GrowthSpec, x):
    if gs.kind == "H_for_A3":
        raise ConfigError("G_theta is defined for G-type growth only")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("G_theta needs x >= 0")
    out = gs.G_theta(x)
    return out if np.ndim(out) else float(out)


_CACHE: dict = {}
_CACHE_LOCK = threading.Lock()


def _comparison(ws, gs, env, which):
    key = (id(ws), gs, env, which)
    with _CACHE_LOCK:
        hit = _CACHE.get(key)
        if hit is not None and hit[0] is ws:
            return hit[1]
    comp = Composite.from_weight(ws, gs, which)
    cf = ComparisonFunction(comp, env.r)
    with _CACHE_LOCK:
        if len(_CACHE) > 64:
            _CACHE.clear()
        _CACHE[key] = (ws, cf)
    return cf


def _which(gs):
    return "mainbis" if gs.kind == "H_for_A3" else "main"


def K_r(ws, gs, env, tau):
    return _comparison(ws, gs, env, _which(gs)).K(tau)


def psi_r(ws, gs, env, z):
    return _comparison(ws, gs, env, _which(gs)).psi(z)


def psi_r_inverse(ws, gs, env, w):
    out = _comparison(ws, gs, env, _which(gs)).psi_inverse(w)
    return out if np.ndim(out) else float(out)


def _envelope(ws, gs, env, t, which):
    cf = _comparison(ws, gs, env, which)
    threshold = env.T + env.T0 * cf.z0
    t = float(t)
    if t < threshold:
        raise NotYetValidError(f"envelope valid from t = {threshold:.6g}", threshold)
    z = cf.psi_inverse((t - env.T) / env.T0)
    return float(ws.beta * env.T * cf.phi.inverse(1.0 / z))


def envelope_main(ws, gs, env, t):
    """``beta T (f G_theta)^-1(1 / psi_r^-1((t - T) / T0))``."""
    return _envelope(ws, gs, env, t, "main")


def envelope_mainbis(ws, gs, env, t):
    """``beta T (f H)^-1(1 / Psi_r^-1((t - T) / T0))``."""
    return _envelope(ws, gs, env, t, "mainbis")


def envelope_linear_appendix(gs, t, data_norm_ratio=1.0, C1=1.0):
    """``C1 H^-1(1 / (1 + t))`` times the squared strong norm of the data."""
    if gs.kind == "G_for_A2":
        raise ConfigError("the linear appendix envelope needs an H-type growth")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    out = C1 * gs.inverse(1.0 / (1.0 + t)) * data_norm_ratio
    return out if np.ndim(out) else float(out)


def main_contraction_factor(gs, Ehat0, strong_sq, T, beta, C_prime=1.0, C8=1.0):
    """``C'_T G(Ehat0^(1/theta - 1)) - C8 T / (beta ||data||^2)``.

    ``C_prime`` and ``C8`` are user inputs: the proof does not make them explicit.
    """
    return float(C_prime * gs.G_theta(Ehat0) - C8 * T / (beta * strong_sq))


def choose_beta(gs, Ehat0, strong_sq, T, beta0=1.0, C_prime=1.0, C8=1.0, max_doublings=64):
    """Double ``beta`` from ``beta0`` until the contraction factor is positive."""
    beta = float(beta0)
    for _ in range(max_doublings + 1):
        if main_contraction_factor(gs, Ehat0, strong_sq, T, beta, C_prime, C8) > 0:
            return beta
        beta *= 2.0
    raise DomainError("no beta up to 2^max_doublings gives a positive contraction factor")
