"""1D wave equation on (0, 1) with Dirichlet conditions.

    w'' + A w + a(x) rho(x, w') = 0,    A = -d^2/dx^2,

for three kinds of damping: none, linear (``rho(v) = v``) and the nonlinear
feedback of a :class:`~decaylab.damping.DampingLaw`.  The eigenpairs of
``A`` are ``lambda_n = (n pi)^2`` and ``e_n = sqrt(2) sin(n pi x)``; norms are
spectral sums ``||z||_alpha^2 = sum lambda_n^(2 alpha) |z_n|^2``.

Conservative runs use the exact modal propagator.  Damped runs use a
velocity-Verlet step on the second-difference operator whose first half kick
treats the damping implicitly:

    u  + (dt/2) a rho(u) = v - (dt/2) K w        (per-node monotone solve)
    w' = w + dt u
    v' = u - (dt/2) (K w' + a rho(u))

The step is symmetric, hence second order, and the dissipation
``int a rho(u) u`` is accumulated at the half-step velocity ``u``.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.fft import dst

from ._errors import ConfigError, DomainError, NumericalFailure
from .damping import CoefficientField, DampingLaw

__all__ = [
    "WaveConfig",
    "WaveState",
    "EnergyTrace",
    "Trajectory",
    "sine_coefficients",
    "from_coefficients",
    "solve",
    "energy",
    "discrete_energy",
    "staggered_energy",
    "strong_norm",
    "weak_norm",
    "energy_identity_residual",
    "write_trace_csv",
    "write_snapshot",
    "read_snapshot",
]

KINDS = ("conservative", "linear_damped", "nonlinear_damped")
SCHEMES = ("leapfrog", "spectral")
SNAPSHOT_MAGIC = b"DLWS"
SNAPSHOT_VERSION = 1


# -- spectral helpers -------------------------------------------------------------


def sine_coefficients(u):
    """Coefficients ``u_n = int u e_n`` of nodal samples (length ``N + 2``).

    Exact for sine polynomials of degree at most ``N``.
    """
    u = np.asarray(u, dtype=float)
    N = u.shape[-1] - 2
    dx = 1.0 / (N + 1)
    return dst(u[..., 1:-1], type=1, axis=-1) * (dx / math.sqrt(2.0))


def from_coefficients(c, N):
    """Nodal samples of ``sum c_n e_n`` on the grid with ``N`` interior points."""
    c = np.asarray(c, dtype=float)
    full = np.zeros(c.shape[:-1] + (N,))
    m = min(c.shape[-1], N)
    full[..., :m] = c[..., :m]
    out = np.zeros(c.shape[:-1] + (N + 2,))
    out[..., 1:-1] = dst(full, type=1, axis=-1) / math.sqrt(2.0)
    return out


def eigenvalues(n_modes):
    return (np.pi * np.arange(1, n_modes + 1)) ** 2


# -- data types -------------------------------------------------------------------


@dataclass
class WaveConfig:
    """Grid, time stepping and damping of a run.

    ``dt`` defaults to ``cfl / (N + 1)``.  For the spectral scheme ``dt`` is
    only the sampling step.
    """

    N: int = 255
    T_final: float = 1.0
    dt: Optional[float] = None
    kind: str = "conservative"
    scheme: str = "leapfrog"
    modes: Optional[int] = None
    law: Optional[DampingLaw] = None
    field: Optional[CoefficientField] = None
    stride: int = 1
    cfl: float = 0.5
    keep_frames: bool = True

    def __post_init__(self):
        if int(self.N) < 1:
            raise ConfigError("N must be at least 1")
        self.N = int(self.N)
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.scheme == "spectral" and self.kind != "conservative":
            raise ConfigError("the spectral propagator is exact only without damping")
        if self.dt is None:
            self.dt = self.cfl * self.dx
        if not (self.dt > 0 and self.T_final >= 0):
            raise ConfigError("dt must be positive and T_final nonnegative")
        if self.scheme == "leapfrog" and self.courant > 1.0 + 1e-12:
            raise ConfigError(f"CFL violated: dt/dx = {self.courant:.6g} > 1")
        if self.modes is None:
            self.modes = self.N
        if not 1 <= self.modes <= self.N:
            raise ConfigError("modes must lie in [1, N]")
        if int(self.stride) < 1:
            raise ConfigError("stride must be at least 1")
        self.stride = int(self.stride)
        if self.kind == "nonlinear_damped" and self.law is None:
            raise ConfigError("nonlinear damping needs a law")
        if self.field is None:
            self.field = CoefficientField()

    @property
    def dx(self):
        return 1.0 / (self.N + 1)

    @property
    def courant(self):
        return self.dt / self.dx

    @property
    def x(self):
        return np.arange(self.N + 2) * self.dx

    @property
    def n_steps(self):
        return int(round(self.T_final / self.dt))


@dataclass
class WaveState:
    """Displacement ``w`` and velocity ``v`` on the ``N + 2`` grid nodes."""

    t: float
    w: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.w.shape != self.v.shape or self.w.ndim != 1 or self.w.size < 3:
            raise DomainError("w and v must be 1D arrays of equal length >= 3")
        if self.w[0] != 0 or self.w[-1] != 0 or self.v[0] != 0 or self.v[-1] != 0:
            raise DomainError("Dirichlet boundary samples must be exactly 0")

    @property
    def N(self):
        return self.w.size - 2

    @classmethod
    def from_modes(cls, N, w_coeffs=(), v_coeffs=(), t=0.0):
        """State ``(sum c_n e_n, sum d_n e_n)`` from mode coefficients (n = 1, 2, ...)."""
        c = np.asarray(w_coeffs, dtype=float)
        d = np.asarray(v_coeffs, dtype=float)
        if max(c.size, d.size) > N:
            raise DomainError("more modes than grid points")
        return cls(t, from_coefficients(c if c.size else np.zeros(1), N),
                   from_coefficients(d if d.size else np.zeros(1), N))

    @classmethod
    def from_functions(cls, N, w_fn, v_fn=None, t=0.0):
        x = np.arange(N + 2) / (N + 1)
        w = np.asarray(w_fn(x), dtype=float).copy()
        v = np.zeros_like(x) if v_fn is None else np.asarray(v_fn(x), dtype=float).copy()
        w[[0, -1]] = 0.0
        v[[0, -1]] = 0.0
        return cls(t, w, v)

    @classmethod
    def zero(cls, N):
        return cls(0.0, np.zeros(N + 2), np.zeros(N + 2))

    def coefficients(self):
        return sine_coefficients(self.w), sine_coefficients(self.v)

    def scaled(self, lam):
        return WaveState(self.t, lam * self.w, lam * self.v)


# -- norms ------------------------------------------------------------------------


def _norm_sq(state, alpha_w, alpha_v):
    c, d = state.coefficients()
    lam = eigenvalues(c.size)
    return float(np.sum(lam ** (2 * alpha_w) * c * c) + np.sum(lam ** (2 * alpha_v) * d * d))


def energy(state: WaveState) -> float:
    """``(||w||_{1/2}^2 + ||v||^2) / 2`` with the continuous eigenvalues."""
    return 0.5 * _norm_sq(state, 0.5, 0.0)


def discrete_energy(state: WaveState) -> float:
    """Grid energy ``dx/2 sum (v_i^2 + ((w_{i+1} - w_i)/dx)^2)``.

    Same quadratic form with the eigenvalues of the second-difference
    operator; this is what the leapfrog scheme balances against dissipation.
    """
    dx = 1.0 / (state.N + 1)
    return 0.5 * dx * float(np.sum(state.v ** 2) + np.sum((np.diff(state.w) / dx) ** 2))


def staggered_energy(w_old, w_new, dt) -> float:
    """``dx/2 (|u|^2 + <K w_new, w_old>)`` with ``u = (w_new - w_old) / dt``.

    The leapfrog invariant: constant without damping and, for an odd
    increasing feedback, nonincreasing step by step.  Positive under CFL < 1.
    """
    dx = 1.0 / (w_new.size - 1)
    u = (w_new - w_old) / dt
    return 0.5 * dx * float(np.sum(u * u) + np.dot(_stiffness(w_new, dx), w_old))


def strong_norm_sq(state: WaveState) -> float:
    return _norm_sq(state, 1.0, 0.5)


def strong_norm(state: WaveState) -> float:
    """``||(w, v)||_{H_1 x H_{1/2}}``."""
    return math.sqrt(strong_norm_sq(state))


def weak_norm_sq(state: WaveState, gs) -> float:
    a1, a2 = gs.weak_norm_exponents
    return _norm_sq(state, a1, a2)


def weak_norm(state: WaveState, gs) -> float:
    """Norm on ``X1 x X2`` with the operator-scale exponents of ``gs``."""
    return math.sqrt(weak_norm_sq(state, gs))


# -- traces -----------------------------------------------------------------------


@dataclass
class EnergyTrace:
    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    strong_norm: np.ndarray
    weak_norm: np.ndarray
    kinetic_a: np.ndarray
    feedback_a: np.ndarray
    energy_kind: str = "continuous"
    # leapfrog: staggered energy, exactly nonincreasing for odd monotone feedback
    scheme_energy: Optional[np.ndarray] = None

    def rows(self):
        return zip(self.times, self.energy, self.dissipation, self.strong_norm, self.weak_norm)


@dataclass
class Trajectory:
    config: WaveConfig
    times: np.ndarray
    W: Optional[np.ndarray]
    V: Optional[np.ndarray]
    trace: EnergyTrace
    final: WaveState
    halvings: int = 0

    def state(self, i):
        return WaveState(float(self.times[i]), self.W[i], self.V[i])


# -- solvers ----------------------------------------------------------------------


def _stiffness(w, dx):
    out = np.zeros_like(w)
    out[1:-1] = -(w[2:] - 2.0 * w[1:-1] + w[:-2]) / (dx * dx)
    return out


def _feedback(config):
    """``rho(x, v)`` and its derivative in ``v`` for the configured kind."""
    if config.kind != "nonlinear_damped" or config.law.family == "linear":
        return (lambda x, v: v), (lambda x, v: np.ones_like(v)), True
    law = config.law
    return law.rho, law.drho, False


def _implicit_solve(b, ca, x, rho, drho, linear, maxiter=200):
    """Solve ``u + ca rho(x, u) = b`` per node; ``ca >= 0``.

    Newton safeguarded by the bracket between 0 and ``b``; a bisection step
    replaces any Newton step that leaves the bracket.  Only unconverged nodes
    are iterated.
    """
    if linear:
        return b / (1.0 + ca), True
    u = b.copy()
    idx = np.flatnonzero(ca > 0)
    bb, cc, xx = b[idx], ca[idx], x[idx]
    lo = np.minimum(bb, 0.0)
    hi = np.maximum(bb, 0.0)
    uu = bb / (1.0 + cc)
    tol = 1e-15 * np.abs(bb)
    for _ in range(maxiter):
        if idx.size == 0:
            return u, True
        res = uu + cc * rho(xx, uu) - bb
        lo = np.where(res < 0, uu, lo)
        hi = np.where(res > 0, uu, hi)
        step = uu - res / (1.0 + cc * drho(xx, uu))
        inside = (step >= lo) & (step <= hi) & np.isfinite(step)
        new = np.where(inside, step, 0.5 * (lo + hi))
        done = (np.abs(res) <= tol) | (hi - lo <= tol) | (np.abs(new - uu) <= 1e-16 * np.abs(uu))
        u[idx] = np.where(done, uu, new)
        keep = ~done
        idx, bb, cc, xx = idx[keep], bb[keep], cc[keep], xx[keep]
        lo, hi, uu, tol = lo[keep], hi[keep], new[keep], tol[keep]
    return u, idx.size == 0


def _verlet_step(w, v, dt, dx, x, a, a_obs, rho, drho, linear):
    ca = 0.5 * dt * a
    b = v - 0.5 * dt * _stiffness(w, dx)
    u, ok = _implicit_solve(b, ca, x, rho, drho, linear)
    if not ok:
        return None
    u[[0, -1]] = 0.0
    ru = rho(x, u)
    fb = a * ru
    w_new = w + dt * u
    v_new = u - 0.5 * dt * (_stiffness(w_new, dx) + fb)
    v_new[[0, -1]] = 0.0
    # trapezoid in space; boundary nodes vanish
    d = dt * dx * np.array([np.sum(fb * u), np.sum(a_obs * u * u), np.sum(a_obs * ru * ru)])
    return w_new, v_new, d


def _step_with_retry(w, v, dt, dx, x, a, a_obs, rho, drho, linear, depth=0, max_depth=6):
    out = _verlet_step(w, v, dt, dx, x, a, a_obs, rho, drho, linear)
    if out is not None:
        return out, 0
    if depth >= max_depth:
        raise NumericalFailure(f"per-node damping solve failed after {depth} step halvings")
    (w1, v1, d1), h1 = _step_with_retry(w, v, dt / 2, dx, x, a, a_obs, rho, drho, linear, depth + 1)
    (w2, v2, d2), h2 = _step_with_retry(w1, v1, dt / 2, dx, x, a, a_obs, rho, drho, linear, depth + 1)
    return (w2, v2, d1 + d2), 1 + h1 + h2


def _sample(state, growth):
    return (strong_norm(state), weak_norm(state, growth) if growth is not None else math.nan)


def _solve_spectral(config, initial, growth):
    c0, d0 = initial.coefficients()
    m = config.modes
    c0, d0 = c0[:m], d0[:m]
    omega = np.pi * np.arange(1, m + 1)
    n_out = config.n_steps // config.stride + 1
    times = initial.t + config.dt * config.stride * np.arange(n_out)
    s = times - initial.t
    cos, sin = np.cos(np.outer(s, omega)), np.sin(np.outer(s, omega))
    C = c0 * cos + (d0 / omega) * sin
    D = -c0 * omega * sin + d0 * cos
    W = from_coefficients(C, config.N)
    V = from_coefficients(D, config.N)
    lam = omega ** 2
    E = 0.5 * (C * C @ lam + np.sum(D * D, axis=1))
    strong = np.sqrt(C * C @ (lam ** 2) + D * D @ lam)
    if growth is not None:
        a1, a2 = growth.weak_norm_exponents
        weak = np.sqrt(C * C @ (lam ** (2 * a1)) + D * D @ (lam ** (2 * a2)))
    else:
        weak = np.full(n_out, math.nan)
    zeros = np.zeros(n_out)
    trace = EnergyTrace(times, E, zeros, strong, weak, zeros.copy(), zeros.copy(), "continuous",
                        E.copy())
    final = WaveState(float(times[-1]), W[-1], V[-1])
    keep = config.keep_frames
    return Trajectory(config, times, W if keep else None, V if keep else None, trace, final)


def solve(config: WaveConfig, initial: WaveState, growth=None) -> Trajectory:
    """Run ``config`` from ``initial`` and sample every ``stride`` steps.

    ``growth`` (a :class:`~decaylab.weight.GrowthSpec`) selects the weak norm
    recorded in the trace.
    """
    if initial.N != config.N:
        raise ConfigError(f"initial state has N = {initial.N}, config has N = {config.N}")
    if config.scheme == "spectral":
        return _solve_spectral(config, initial, growth)
    dx, dt = config.dx, config.dt
    x = config.x
    # kinetic integrals are always weighted by the field, even without damping
    a_obs = np.asarray(config.field(x), dtype=float)
    a = np.zeros_like(x) if config.kind == "conservative" else a_obs
    rho, drho, linear = _feedback(config)
    w, v = initial.w.copy(), initial.v.copy()
    times, E, D, S, Wk, KA, FA, ES = [], [], [], [], [], [], [], []
    frames_w, frames_v = [], []
    acc = np.zeros(3)
    halvings = 0

    def record(t, w_prev=None):
        st = WaveState(t, w, v)
        sn, wn = _sample(st, growth)
        times.append(t)
        E.append(discrete_energy(st))
        ES.append(E[-1] if w_prev is None else staggered_energy(w_prev, w, dt))
        D.append(acc[0])
        KA.append(acc[1])
        FA.append(acc[2])
        S.append(sn)
        Wk.append(wn)
        if config.keep_frames:
            frames_w.append(w.copy())
            frames_v.append(v.copy())

    record(initial.t)
    for k in range(1, config.n_steps + 1):
        w_prev = w
        (w, v, d), h = _step_with_retry(w, v, dt, dx, x, a, a_obs, rho, drho, linear)
        halvings += h
        acc += d
        if k % config.stride == 0:
            record(initial.t + k * dt, w_prev)
    times = np.asarray(times)
    trace = EnergyTrace(times, np.asarray(E), np.asarray(D), np.asarray(S), np.asarray(Wk),
                        np.asarray(KA), np.asarray(FA), "discrete", np.asarray(ES))
    final = WaveState(float(initial.t + config.n_steps * dt), w, v)
    W = np.asarray(frames_w) if config.keep_frames else None
    V = np.asarray(frames_v) if config.keep_frames else None
    return Trajectory(config, times, W, V, trace, final, halvings)


def energy_identity_residual(trace: EnergyTrace) -> float:
    """``max_i |(E(0) - E(t_i)) - D(t_i)| / E(0)``."""
    E0 = trace.energy[0]
    if E0 == 0:
        return 0.0
    return float(np.max(np.abs((E0 - trace.energy) - trace.dissipation)) / E0)


# -- export -----------------------------------------------------------------------


def write_trace_csv(trace: EnergyTrace, path):
    """Columns ``t, E, D, strong_norm, weak_norm`` in round-trip precision."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t", "E", "D", "strong_norm", "weak_norm"])
        for row in trace.rows():
            wr.writerow([repr(float(v)) for v in row])


def write_snapshot(traj: Trajectory, path):
    """Binary replay file, all little-endian.

    Layout: magic ``b"DLWS"``, ``uint32`` version, ``uint32 N``, ``float64 dt``,
    ``uint32 stride``, ``uint32 n_frames``; then per frame ``float64 t``,
    ``float64[N+2] w``, ``float64[N+2] v``.
    """
    if traj.W is None:
        raise ConfigError("trajectory was run with keep_frames=False")
    cfg = traj.config
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIdII", SNAPSHOT_VERSION, cfg.N, cfg.dt, cfg.stride, len(traj.times)))
        for t, w, v in zip(traj.times, traj.W, traj.V):
            fh.write(struct.pack("<d", float(t)))
            fh.write(np.asarray(w, dtype="<f8").tobytes())
            fh.write(np.asarray(v, dtype="<f8").tobytes())


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns a dict of header fields and arrays."""
    with open(path, "rb") as fh:
        if fh.read(4) != SNAPSHOT_MAGIC:
            raise DomainError("not a wave snapshot file")
        version, N, dt, stride, n = struct.unpack("<IIdII", fh.read(struct.calcsize("<IIdII")))
        if version != SNAPSHOT_VERSION:
            raise DomainError(f"unsupported snapshot version {version}")
        rec = np.dtype([("t", "<f8"), ("w", "<f8", (N + 2,)), ("v", "<f8", (N + 2,))])
        data = np.frombuffer(fh.read(rec.itemsize * n), dtype=rec, count=n)
    return {"N": N, "dt": dt, "stride": stride, "times": data["t"].copy(),
            "W": data["w"].copy(), "V": data["v"].copy()}
