"""Named analytic presets for forcing, slip thresholds and initial data.

Each preset is built from a plain dict such as ``{"kind": "constant", "value": [1, 0]}``
and evaluates on arbitrary point sets, so the same object serves the solver
grid and refined quadrature checks.  Tabulated presets hold cell or station
values and are looked up piecewise constantly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ChannelDomain

FORCE_KINDS = ("zero", "constant", "tangential-shear", "space-time-cosine", "table")
THRESHOLD_KINDS = ("constant", "space-time-cosine", "table")
DENSITY_KINDS = ("constant", "cosine", "table")
VELOCITY_KINDS = ("zero", "uniform", "vortex", "jet")


def _time_interp(times, values, t):
    if times is None:
        return values
    times = np.asarray(times)
    if t <= times[0]:
        return values[0]
    if t >= times[-1]:
        return values[-1]
    k = int(np.searchsorted(times, t, side="right")) - 1
    s = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - s) * values[k] + s * values[k + 1]


def _cell_lookup(domain: ChannelDomain, points):
    i = np.floor(points[:, 0] / domain.hx).astype(int) % domain.nx
    j = np.clip(np.floor(points[:, 1] / domain.hy).astype(int), 0, domain.ny - 1)
    return j, i


@dataclass(frozen=True)
class BodyForce:
    """External force density ``f(t, x)``.

    Kinds
    -----
    zero
    constant : ``value = [fx, fy]``
    tangential-shear : ``f = (A (2 y / H - 1), 0)``
    space-time-cosine : ``f = A cos(omega t) (cos(2 pi k x / Lx), sin(2 pi k x / Lx) sin(pi y / H))``
    table : ``values`` of shape ``(ny, nx, 2)`` or ``(nt, ny, nx, 2)`` with ``times``
    """

    kind: str = "zero"
    params: dict = field(default_factory=dict)
    domain: ChannelDomain = field(default_factory=ChannelDomain)

    def __post_init__(self):
        if self.kind not in FORCE_KINDS:
            raise ValueError(f"unknown force kind {self.kind!r}")

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind == "constant" and not np.any(self.params.get("value", [0, 0])))

    def __call__(self, t: float, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        x, y = points[:, 0], points[:, 1]
        out = np.zeros_like(points)
        L, H = self.domain.length, self.domain.height
        p = self.params
        if self.kind == "constant":
            out[:] = np.asarray(p.get("value", [0.0, 0.0]), dtype=float)
        elif self.kind == "tangential-shear":
            out[:, 0] = p.get("amplitude", 1.0) * (2.0 * y / H - 1.0)
        elif self.kind == "space-time-cosine":
            A = p.get("amplitude", 1.0) * np.cos(p.get("omega", 2.0 * np.pi) * t)
            k = 2.0 * np.pi * p.get("k", 1) / L
            out[:, 0] = A * np.cos(k * x)
            out[:, 1] = A * np.sin(k * x) * np.sin(np.pi * y / H)
        elif self.kind == "table":
            vals = _time_interp(p.get("times"), np.asarray(p["values"], dtype=float), t)
            j, i = _cell_lookup(self.domain, points)
            out[:] = vals[j, i]
        return out


@dataclass(frozen=True)
class SlipThreshold:
    """Non-negative wall threshold ``g(t, x)``.

    Kinds
    -----
    constant : ``value``
    space-time-cosine : ``g = g0 + A cos(omega t) cos(2 pi k x / Lx)``, needs ``g0 >= |A|``
    table : ``values`` per station ``(2 nb,)`` or ``(nt, 2 nb)`` with ``times``
    """

    kind: str = "constant"
    params: dict = field(default_factory=dict)
    domain: ChannelDomain = field(default_factory=ChannelDomain)

    def __post_init__(self):
        if self.kind not in THRESHOLD_KINDS:
            raise ValueError(f"unknown threshold kind {self.kind!r}")

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.params.get("value", 0.0) == 0.0

    def __call__(self, t: float, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        x = points[:, 0]
        p = self.params
        if self.kind == "constant":
            return np.full(len(points), float(p.get("value", 0.0)))
        if self.kind == "space-time-cosine":
            k = 2.0 * np.pi * p.get("k", 1) / self.domain.length
            return p.get("g0", 1.0) + p.get("amplitude", 0.5) * np.cos(p.get("omega", 2.0 * np.pi) * t) * np.cos(k * x)
        vals = _time_interp(p.get("times"), np.asarray(p["values"], dtype=float), t)
        nb = self.domain.nb
        s = np.floor(x / (self.domain.length / nb)).astype(int) % nb
        top = points[:, 1] > 0.5 * self.domain.height
        return vals[s + nb * top]


def initial_density(spec: dict, domain: ChannelDomain) -> np.ndarray:
    """Cell values of ``rho_0`` from a preset dict, shape ``(ny, nx)``.

    ``cosine``: ``mean + A cos(2 pi kx x / Lx) cos(ky pi y / H)``.
    """
    kind = spec.get("kind", "constant")
    X, Y = domain.grid()
    if kind == "constant":
        return np.full(X.shape, float(spec.get("value", 1.0)))
    if kind == "cosine":
        kx, ky = spec.get("kx", 0), spec.get("ky", 1)
        return spec.get("mean", 1.0) + spec.get("amplitude", 0.1) * (
            np.cos(2.0 * np.pi * kx * X / domain.length) * np.cos(ky * np.pi * Y / domain.height))
    if kind == "table":
        return np.array(spec["values"], dtype=float).reshape(domain.ny, domain.nx)
    raise ValueError(f"unknown density kind {kind!r}")


def _velocity_part(spec: dict, points, domain: ChannelDomain) -> np.ndarray:
    kind = spec.get("kind", "zero")
    x, y = points[:, 0], points[:, 1]
    L, H = domain.length, domain.height
    out = np.zeros_like(points)
    if kind == "zero":
        return out
    if kind == "uniform":
        out[:, 0] = spec.get("value", 1.0)
    elif kind == "vortex":
        # stream function A sin(2 pi x / L) sin(pi y / H); u = (d_y psi, -d_x psi)
        A = spec.get("amplitude", 1.0)
        out[:, 0] = A * np.pi / H * np.sin(2 * np.pi * x / L) * np.cos(np.pi * y / H)
        out[:, 1] = -A * 2 * np.pi / L * np.cos(2 * np.pi * x / L) * np.sin(np.pi * y / H)
    elif kind == "jet":
        out[:, 0] = 4.0 * spec.get("amplitude", 1.0) * y * (H - y) / H ** 2
    else:
        raise ValueError(f"unknown velocity kind {kind!r}")
    return out


def initial_velocity(spec, points, domain: ChannelDomain) -> np.ndarray:
    """``u_0`` at ``points``; ``spec`` is one preset dict or a list summed together."""
    points = np.asarray(points, dtype=float)
    parts = spec if isinstance(spec, (list, tuple)) else [spec]
    out = np.zeros_like(points)
    for part in parts:
        out += _velocity_part(part, points, domain)
    return out
