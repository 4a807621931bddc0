"""Experiment configuration: nested YAML sections mapped onto dataclasses."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import yaml

from ._errors import ConfigError
from .damping import law_from_dict
from .weight import Composite, EnvelopeSpec, GrowthSpec, WeightSystem

__all__ = ["ExperimentConfig", "TASKS", "example_text"]

TASKS = ("envelope", "simulate", "compare", "observability", "lemmas", "seqlab")


@dataclass
class EnvelopeSection:
    theorem: str = "main"
    T: float = 2.0
    T0: float = 2.0
    rho_T: float = 1.0
    r: float = 0.5
    eta: float = 1.0
    beta: float = 1.0
    t_min: float = 1.0e2
    t_max: float = 1.0e8
    points: int = 61


@dataclass
class SimulationSection:
    kind: str = "nonlinear_damped"
    scheme: str = "leapfrog"
    N: int = 63
    dt: Optional[float] = None
    cfl: float = 0.8
    T_final: float = 200.0
    stride: int = 32
    w_modes: list = field(default_factory=lambda: [0.0])
    v_modes: list = field(default_factory=lambda: [1.0])
    snapshot: bool = False


@dataclass
class ObservabilitySection:
    T: float = 2.0
    N: int = 255
    max_mode: int = 32
    beta_grid: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    mode_range: list = field(default_factory=lambda: [1, 64])


@dataclass
class LemmaSection:
    T: float = 2.0
    N: int = 127
    max_mode: int = 32
    n_random: int = 50
    self_test: bool = False


@dataclass
class SeqlabSection:
    n_instances: int = 200
    n_steps: int = 1000


_SECTIONS = {
    "envelope": EnvelopeSection,
    "simulation": SimulationSection,
    "observability": ObservabilitySection,
    "lemmas": LemmaSection,
    "seqlab": SeqlabSection,
}


def _default_law():
    return {"family": "power", "params": {"p": 3.0}, "c1": None, "c2": None, "r0": None}


def _default_coefficient():
    return {"kind": "bump", "omega": [0.4, 0.6], "a0": 1.0, "amax": 1.0, "ramp": 0.05}


def _default_growth():
    return {"kind": "G_for_A2", "family": "constant", "params": {"c": 1.0}, "theta": 0.5}


@dataclass
class ExperimentConfig:
    task: str = "envelope"
    seed: int = 0
    out: str = "out"
    law: dict = field(default_factory=_default_law)
    coefficient: dict = field(default_factory=_default_coefficient)
    growth: dict = field(default_factory=_default_growth)
    envelope: EnvelopeSection = field(default_factory=EnvelopeSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    observability: ObservabilitySection = field(default_factory=ObservabilitySection)
    lemmas: LemmaSection = field(default_factory=LemmaSection)
    seqlab: SeqlabSection = field(default_factory=SeqlabSection)

    # -- (de)serialization ------------------------------------------------------

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, raw):
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, value in raw.items():
            if name in _SECTIONS:
                kw[name] = _section(_SECTIONS[name], value, name)
            else:
                kw[name] = value
        try:
            cfg = cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed YAML: {exc}") from exc
        return cls.from_dict(raw)

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def dump(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    # -- builders ---------------------------------------------------------------

    def build_law(self):
        spec = dict(self.law)
        spec["a"] = self.coefficient
        law, fld = law_from_dict(spec)
        return law, fld

    def build_growth(self):
        return GrowthSpec.from_dict(self.growth)

    def build_envelope_spec(self):
        e = self.envelope
        return EnvelopeSpec(T=e.T, T0=e.T0, rho_T=e.rho_T, r=e.r, eta=e.eta)

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        law, fld = self.build_law()
        gs = self.build_growth()
        self.build_envelope_spec()
        e = self.envelope
        if e.theorem not in ("main", "mainbis"):
            raise ConfigError("envelope.theorem must be main or mainbis")
        if e.theorem == "main" and gs.kind == "H_for_A3":
            raise ConfigError("theorem main needs a G-type growth")
        if e.theorem == "mainbis" and gs.kind == "G_for_A2":
            raise ConfigError("theorem mainbis needs an H-type growth")
        if not e.beta > 0:
            raise ConfigError("envelope.beta must be positive")
        if not (0 < e.t_min < e.t_max and e.points >= 2):
            raise ConfigError("need 0 < t_min < t_max and points >= 2")
        # r must be reachable by the composite
        ws = WeightSystem(law, e.beta)
        comp = Composite.from_weight(ws, gs, e.theorem)
        top = float(comp.log_phi(ws.s_max * (1 - 2.0 ** -40)))
        if not math.log(e.r) < top:
            raise ConfigError(f"envelope.r = {e.r} is outside the range of {comp.name}")
        s = self.simulation
        if s.kind not in ("conservative", "linear_damped", "nonlinear_damped"):
            raise ConfigError("simulation.kind is invalid")
        if s.scheme not in ("leapfrog", "spectral"):
            raise ConfigError("simulation.scheme is invalid")
        if not (s.N >= 1 and s.T_final > 0 and s.stride >= 1):
            raise ConfigError("simulation needs N >= 1, T_final > 0, stride >= 1")
        if max(len(s.w_modes), len(s.v_modes)) > s.N:
            raise ConfigError("more initial modes than grid points")
        if not any(s.w_modes) and not any(s.v_modes):
            raise ConfigError("initial data must be nonzero")
        if s.dt is not None and s.scheme == "leapfrog" and s.dt * (s.N + 1) > 1:
            raise ConfigError("simulation.dt violates the CFL condition")
        o = self.observability
        lo, hi = o.mode_range
        if not (1 <= lo <= hi <= o.N and 1 <= o.max_mode <= o.N and o.T > 0):
            raise ConfigError("observability ranges are inconsistent with N")
        if not all(0 < b < 1 for b in o.beta_grid):
            raise ConfigError("observability.beta_grid entries must lie in (0, 1)")
        lm = self.lemmas
        if not (lm.T > 0 and lm.N >= 1 and 0 <= lm.max_mode <= lm.N and lm.n_random >= 0):
            raise ConfigError("lemmas section is inconsistent")
        if not (self.seqlab.n_instances >= 0 and self.seqlab.n_steps >= 1):
            raise ConfigError("seqlab section is inconsistent")
        return self


def _section(cls, value, name):
    if value is None:
        return cls()
    if not isinstance(value, dict):
        raise ConfigError(f"section {name} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    try:
        return cls(**value)
    except TypeError as exc:
        raise ConfigError(f"bad section {name}: {exc}") from exc


_EXAMPLE = """\
# decaylab experiment configuration
task: envelope          # envelope | simulate | compare | observability | lemmas | seqlab
seed: 0                 # RNG seed for random data suites
out: out                # output directory

law:                    # damping nonlinearity g and sector constants
  family: power         # power | cubic_exp | linear
  params: {p: 3.0}      # power: g(x) = x^p
  c1: null              # null: min(1, g(1))
  c2: null              # null: max(1, 1/g(1))
  r0: null              # null: largest dyadic radius with R strictly convex

coefficient:            # localization a(x)
  kind: bump            # bump | piecewise-constant
  omega: [0.4, 0.6]     # where a = amax
  a0: 1.0               # required lower bound on omega
  amax: 1.0
  ramp: 0.05            # width of the smooth shoulders (bump only)

growth:                 # observability growth G (A2) or H (A3)
  kind: G_for_A2        # G_for_A2 | H_for_A3 | identity
  family: constant      # constant | identity | power | exp
  params: {c: 1.0}      # exp: H(x) = exp(-c x^(-1/(2 beta)))
  theta: 0.5            # interpolation parameter in (0, 1)

envelope:
  theorem: main         # main (f * G_theta) | mainbis (f * H)
  T: 2.0                # observability horizon
  T0: 2.0               # time scale
  rho_T: 1.0
  r: 0.5                # 0 < r < eta, inside the composite's range
  eta: 1.0
  beta: 1.0             # weight scale
  t_min: 100.0          # geometric time grid
  t_max: 100000000.0
  points: 61

simulation:
  kind: nonlinear_damped  # conservative | linear_damped | nonlinear_damped
  scheme: leapfrog      # leapfrog | spectral (conservative only)
  N: 63                 # interior grid points
  dt: null              # null: cfl / (N + 1)
  cfl: 0.8
  T_final: 200.0
  stride: 32            # record every stride steps
  w_modes: [0.0]        # initial displacement sine coefficients
  v_modes: [1.0]        # initial velocity sine coefficients
  snapshot: false       # also write the binary replay file

observability:
  T: 2.0
  N: 255
  max_mode: 32          # deterministic suite: modes 1..max_mode and pairs
  beta_grid: [0.25, 0.5, 0.75]
  mode_range: [1, 64]   # exponential fit data

lemmas:
  T: 2.0
  N: 127
  max_mode: 32
  n_random: 50          # seeded random data
  self_test: false      # also run the k_T - 1 mutation

seqlab:
  n_instances: 200
  n_steps: 1000
"""


def example_text():
    """Commented example configuration; parses to the defaults."""
    return _EXAMPLE
