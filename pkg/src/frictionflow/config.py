"""Run configuration: JSON schema, validation and construction of the solver inputs.

A configuration is a JSON object with the sections below; every key is
optional and missing keys take the documented defaults.  Unknown keys are
rejected, and all violations are reported together.

.. code-block:: json

    {
      "domain": {"length": 2.0, "nx": 32, "ny": 16, "nb": null},
      "space": {"n": 16},
      "viscosity": {"kind": "newtonian", "mu": 0.1, "lam": 0.0, "q": 2.0,
                    "quadrature_order": 12, "exact_quadratic": true},
      "pressure": {"a": 1.0, "gamma": 2.0},
      "force": {"kind": "zero"},
      "threshold": {"kind": "constant", "value": 0.0},
      "initial": {"density": {"kind": "constant", "value": 1.0},
                  "velocity": {"kind": "zero"}},
      "regularization": {"delta": 0.1, "eps": 0.05},
      "time": {"T": 0.5, "dt": 0.005},
      "solver": {"tol": 1e-11, "max_iter": 60},
      "diagnostics": {"enabled": true, "momentum_tol": 1e-8, "bound_tol": 1e-8,
                      "density_bound": null, "korn_q": 2.0, "fenchel_audit": true,
                      "audit_stride": 1, "fenchel_tol": 1e-6},
      "seed": 0
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .constitutive import MollifiedPotential, PotentialSpec, PressureLaw
from .exceptions import ConfigError
from .geometry import ChannelDomain, build_space, enumerate_modes
from .momentum import ProblemData
from .presets import (DENSITY_KINDS, FORCE_KINDS, THRESHOLD_KINDS, VELOCITY_KINDS, BodyForce,
                      SlipThreshold, initial_density, initial_velocity)
from .simulation import Trajectory, initial_state, simulate


@dataclass(frozen=True)
class DomainConfig:
    length: float = 2.0
    nx: int = 32
    ny: int = 16
    nb: int | None = None


@dataclass(frozen=True)
class SpaceConfig:
    n: int = 16


@dataclass(frozen=True)
class ViscosityConfig:
    kind: str = "newtonian"
    mu: float = 0.1
    lam: float = 0.0
    q: float = 2.0
    quadrature_order: int = 12
    exact_quadratic: bool = True


@dataclass(frozen=True)
class PressureConfig:
    a: float = 1.0
    gamma: float = 2.0


@dataclass(frozen=True)
class InitialConfig:
    density: dict = field(default_factory=lambda: {"kind": "constant", "value": 1.0})
    velocity: dict | list = field(default_factory=lambda: {"kind": "zero"})


@dataclass(frozen=True)
class RegularizationConfig:
    delta: float = 0.1
    eps: float = 0.05


@dataclass(frozen=True)
class TimeConfig:
    T: float = 0.5
    dt: float = 0.005


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-11
    max_iter: int = 60


@dataclass(frozen=True)
class DiagnosticsConfig:
    enabled: bool = True
    momentum_tol: float = 1e-8
    bound_tol: float = 1e-8
    density_bound: float | None = None
    korn_q: float = 2.0
    fenchel_audit: bool = True
    audit_stride: int = 1
    fenchel_tol: float = 1e-6


@dataclass(frozen=True)
class RunConfig:
    domain: DomainConfig = field(default_factory=DomainConfig)
    space: SpaceConfig = field(default_factory=SpaceConfig)
    viscosity: ViscosityConfig = field(default_factory=ViscosityConfig)
    pressure: PressureConfig = field(default_factory=PressureConfig)
    force: dict = field(default_factory=lambda: {"kind": "zero"})
    threshold: dict = field(default_factory=lambda: {"kind": "constant", "value": 0.0})
    initial: InitialConfig = field(default_factory=InitialConfig)
    regularization: RegularizationConfig = field(default_factory=RegularizationConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def with_values(self, **changes) -> "RunConfig":
        """Copy with dotted-path overrides, e.g. ``with_values(**{"regularization.eps": 0.1})``."""
        d = self.to_dict()
        for path, value in changes.items():
            node = d
            keys = path.split(".")
            for k in keys[:-1]:
                node = node[k]
            node[keys[-1]] = value
        return from_dict(d)


SECTIONS = {f.name: f for f in fields(RunConfig)}
_SECTION_TYPES = {"domain": DomainConfig, "space": SpaceConfig, "viscosity": ViscosityConfig,
                  "pressure": PressureConfig, "initial": InitialConfig,
                  "regularization": RegularizationConfig, "time": TimeConfig,
                  "solver": SolverConfig, "diagnostics": DiagnosticsConfig}


def _coerce(value, annotation: str, path: str, errors: list):
    optional = annotation.endswith("| None")
    base = annotation.replace("| None", "").strip()
    if value is None:
        if optional:
            return None
        errors.append((path, "must not be null"))
        return None
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append((path, f"expected a number, got {type(value).__name__}"))
            return None
        if not math.isfinite(value):
            errors.append((path, "must be finite"))
            return None
        return float(value)
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            errors.append((path, f"expected an integer, got {value!r}"))
            return None
        return int(value)
    if base == "bool":
        if not isinstance(value, bool):
            errors.append((path, f"expected true or false, got {value!r}"))
            return None
        return value
    if base == "str":
        if not isinstance(value, str):
            errors.append((path, f"expected a string, got {type(value).__name__}"))
            return None
        return value
    if base == "dict":
        if not isinstance(value, dict):
            errors.append((path, "expected an object"))
            return None
        return value
    if base == "dict | list":
        if not isinstance(value, (dict, list)):
            errors.append((path, "expected an object or a list of objects"))
            return None
        return value
    raise TypeError(f"unsupported annotation {annotation}")


def _section(cls, data, path: str, errors: list):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append((path, "expected an object"))
        return cls()
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            errors.append((f"{path}.{key}", "unknown key"))
    kwargs = {}
    for name, f in known.items():
        if name in data:
            v = _coerce(data[name], f.type, f"{path}.{name}", errors)
            if v is not None or f.type.endswith("| None"):
                kwargs[name] = v
    return cls(**kwargs)


def from_dict(data) -> RunConfig:
    """Build and validate a configuration; raises ``ConfigError`` listing every problem."""
    errors: list = []
    if not isinstance(data, dict):
        raise ConfigError([("", "configuration must be a JSON object")])
    for key in data:
        if key not in SECTIONS:
            errors.append((key, "unknown key"))
    kwargs = {}
    for name, f in SECTIONS.items():
        if name not in data:
            continue
        if name in _SECTION_TYPES:
            kwargs[name] = _section(_SECTION_TYPES[name], data[name], name, errors)
        else:
            v = _coerce(data[name], f.type, name, errors)
            if v is not None:
                kwargs[name] = v
    cfg = RunConfig(**kwargs)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse JSON text; syntax errors report line and column."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}")]) from None
    return from_dict(data)


def serialize_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- semantic checks ---------------------------------------------------------


def _positive(errors, path, v, msg="must be positive"):
    if v is not None and not v > 0:
        errors.append((path, msg))


def _preset_checks(cfg: RunConfig, errors: list):
    d = cfg.domain
    ny, nx = d.ny, d.nx
    nb = d.nb if d.nb is not None else d.nx

    f = cfg.force
    kind = f.get("kind")
    if kind not in FORCE_KINDS:
        errors.append(("force.kind", f"must be one of {FORCE_KINDS}"))
    elif kind == "constant":
        v = f.get("value", [0.0, 0.0])
        if not (isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v)):
            errors.append(("force.value", "must be a list of two numbers"))
    elif kind == "table":
        _table_check(errors, "force", f, (ny, nx, 2))
    allowed = {"zero": {"kind"}, "constant": {"kind", "value"},
               "tangential-shear": {"kind", "amplitude"},
               "space-time-cosine": {"kind", "amplitude", "omega", "k"},
               "table": {"kind", "values", "times"}}
    for key in f:
        if kind in allowed and key not in allowed[kind]:
            errors.append((f"force.{key}", "unknown key"))

    g = cfg.threshold
    kind = g.get("kind")
    if kind not in THRESHOLD_KINDS:
        errors.append(("threshold.kind", f"must be one of {THRESHOLD_KINDS}"))
    elif kind == "constant":
        v = g.get("value", 0.0)
        if not isinstance(v, (int, float)) or v < 0:
            errors.append(("threshold.value", "slip threshold g must be a non-negative number"))
    elif kind == "space-time-cosine":
        if g.get("g0", 1.0) < abs(g.get("amplitude", 0.5)):
            errors.append(("threshold.g0", "needs g0 >= |amplitude| so that g stays non-negative"))
    elif kind == "table":
        vals = _table_check(errors, "threshold", g, (2 * nb,))
        if vals is not None and np.any(vals < 0):
            errors.append(("threshold.values", "slip threshold g must be non-negative"))
    allowed = {"constant": {"kind", "value"}, "space-time-cosine": {"kind", "g0", "amplitude", "omega", "k"},
               "table": {"kind", "values", "times"}}
    for key in g:
        if kind in allowed and key not in allowed[kind]:
            errors.append((f"threshold.{key}", "unknown key"))

    rd = cfg.initial.density
    kind = rd.get("kind")
    if kind not in DENSITY_KINDS:
        errors.append(("initial.density.kind", f"must be one of {DENSITY_KINDS}"))
    else:
        try:
            dom = ChannelDomain(d.length, 1.0, nx, ny, d.nb)
            r0 = initial_density(rd, dom)
            if not np.all(r0 > 0):
                errors.append(("initial.density", "initial density must be strictly positive"))
            else:
                nbound = cfg.diagnostics.density_bound
                if nbound is not None and nbound >= 1 and not (1 / nbound <= r0.min() and r0.max() <= nbound):
                    errors.append(("diagnostics.density_bound",
                                   f"initial density must satisfy 1/{nbound:g} <= rho0 <= {nbound:g}"))
        except (ValueError, KeyError, TypeError) as exc:
            errors.append(("initial.density", str(exc)))
    vel = cfg.initial.velocity
    parts = vel if isinstance(vel, list) else [vel]
    for i, part in enumerate(parts):
        p = "initial.velocity" + (f"[{i}]" if isinstance(vel, list) else "")
        if not isinstance(part, dict) or part.get("kind", "zero") not in VELOCITY_KINDS:
            errors.append((p, f"kind must be one of {VELOCITY_KINDS}"))


def _table_check(errors, path, spec, shape):
    try:
        vals = np.asarray(spec["values"], dtype=float)
    except (KeyError, ValueError, TypeError):
        errors.append((f"{path}.values", "table needs numeric 'values'"))
        return None
    times = spec.get("times")
    want = shape if times is None else (len(times),) + shape
    if vals.shape != want:
        errors.append((f"{path}.values", f"expected shape {want}, got {vals.shape}"))
        return None
    if times is not None and np.any(np.diff(times) <= 0):
        errors.append((f"{path}.times", "must be strictly increasing"))
    return vals


def validate(cfg: RunConfig) -> list:
    """Semantic checks; returns ``(path, message)`` pairs."""
    e: list = []
    d = cfg.domain
    _positive(e, "domain.length", d.length)
    for name in ("nx", "ny", "nb"):
        v = getattr(d, name)
        if v is not None and (v < 4 or v % 2):
            e.append((f"domain.{name}", "must be an even integer >= 4"))
    if cfg.space.n < 1:
        e.append(("space.n", "must be >= 1"))
    elif not any(p.startswith("domain.") for p, _ in e):
        available = len(enumerate_modes(ChannelDomain(d.length, 1.0, d.nx, d.ny, d.nb)))
        if cfg.space.n > available:
            e.append(("space.n", f"only {available} modes are resolvable on a {d.nx}x{d.ny} grid"))
    v = cfg.viscosity
    if v.kind == "custom":
        e.append(("viscosity.kind", "custom potentials need the Python API"))
    elif v.kind not in ("newtonian", "powerlaw"):
        e.append(("viscosity.kind", "must be 'newtonian' or 'powerlaw'"))
    _positive(e, "viscosity.mu", v.mu)
    if v.kind == "newtonian" and not v.lam > -v.mu / 2:
        e.append(("viscosity.lam", "newtonian potential needs lam > -mu/d"))
    if v.kind == "powerlaw":
        if not v.q > 1:
            e.append(("viscosity.q", "powerlaw exponent must exceed 1"))
        if not v.lam >= 0:
            e.append(("viscosity.lam", "powerlaw potential needs lam >= 0"))
    if v.quadrature_order < 8:
        e.append(("viscosity.quadrature_order", "must be at least 8"))
    _positive(e, "pressure.a", cfg.pressure.a)
    if not cfg.pressure.gamma > 1:
        e.append(("pressure.gamma", "must exceed 1 (coercivity of the pressure potential)"))
    r = cfg.regularization
    if not 0 < r.delta <= 1:
        e.append(("regularization.delta", "the regularization requires 0 < delta <= 1"))
    if not 0 < r.eps <= 1:
        e.append(("regularization.eps", "the artificial viscosity requires 0 < eps <= 1"))
    t = cfg.time
    _positive(e, "time.T", t.T)
    _positive(e, "time.dt", t.dt)
    if t.T > 0 and t.dt > 0:
        K = round(t.T / t.dt)
        if K < 1 or abs(K * t.dt - t.T) > 1e-9 * max(1.0, t.T):
            e.append(("time.dt", "T must be a positive integer multiple of dt"))
    _positive(e, "solver.tol", cfg.solver.tol)
    if cfg.solver.max_iter < 1:
        e.append(("solver.max_iter", "must be >= 1"))
    dg = cfg.diagnostics
    for name in ("momentum_tol", "bound_tol", "fenchel_tol", "korn_q"):
        _positive(e, f"diagnostics.{name}", getattr(dg, name))
    if dg.density_bound is not None and dg.density_bound < 1:
        e.append(("diagnostics.density_bound", "must be >= 1"))
    if dg.audit_stride < 1:
        e.append(("diagnostics.audit_stride", "must be >= 1"))
    if cfg.seed < 0:
        e.append(("seed", "must be non-negative"))
    if not any(p.startswith("domain.") for p, _ in e):
        _preset_checks(cfg, e)
    return e


# -- construction ------------------------------------------------------------


def build_domain(cfg: RunConfig) -> ChannelDomain:
    d = cfg.domain
    return ChannelDomain(d.length, 1.0, d.nx, d.ny, d.nb)


def build_problem(cfg: RunConfig):
    """Return ``(data, rho0, c0)`` for a validated configuration."""
    dom = build_domain(cfg)
    space = build_space(cfg.space.n, dom)
    v = cfg.viscosity
    spec = PotentialSpec(v.kind, mu=v.mu, lam=v.lam, q=v.q, dim=2)
    pot = MollifiedPotential(spec, cfg.regularization.delta, v.quadrature_order,
                             exact_quadratic=v.exact_quadratic)
    force = BodyForce(cfg.force.get("kind", "zero"), {k: x for k, x in cfg.force.items() if k != "kind"}, dom)
    thr = SlipThreshold(cfg.threshold.get("kind", "constant"),
                        {k: x for k, x in cfg.threshold.items() if k != "kind"}, dom)
    data = ProblemData(space, pot, PressureLaw(cfg.pressure.a, cfg.pressure.gamma),
                       cfg.regularization.delta, cfg.regularization.eps,
                       None if force.is_zero else force, None if thr.is_zero else thr)
    rho0 = initial_density(cfg.initial.density, dom)
    rho0, c0 = initial_state(data, rho0, lambda p: initial_velocity(cfg.initial.velocity, p, dom))
    return data, rho0, c0


def run_config(cfg: RunConfig, raise_on_failure: bool = True) -> Trajectory:
    data, rho0, c0 = build_problem(cfg)
    return simulate(data, rho0, c0, cfg.time.T, cfg.time.dt, cfg.solver.tol,
                    cfg.solver.max_iter, raise_on_failure=raise_on_failure)


def diagnostics_options(cfg: RunConfig) -> dict:
    dg = cfg.diagnostics
    return {"mi_tol": dg.momentum_tol, "bound_tol": dg.bound_tol, "korn_q": dg.korn_q,
            "audit": dg.fenchel_audit, "audit_stride": dg.audit_stride,
            "fy_tol": dg.fenchel_tol, "seed": cfg.seed, "density_bound": dg.density_bound}


__all__ = ["RunConfig", "parse_config", "serialize_config", "load_config", "from_dict",
           "validate", "build_problem", "build_domain", "run_config", "diagnostics_options"]
