"""Finite-volume solver for the parabolic-regularised continuity equation.

``rho_t + div(rho u) = eps * lap(rho)`` on the cell-centred channel grid,
periodic in ``x`` with zero-flux walls.  Advection uses central face
averages ``rho_f = (rho_L + rho_R) / 2`` with the face-normal velocity taken
analytically from the Galerkin basis; both advection and diffusion are
treated implicitly, so one step is a single sparse solve

    (I + dt (Div_h(u) - eps L_h)) rho_new = rho_old.

Every face flux enters two cells with opposite signs, which makes total mass
invariant to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .exceptions import DomainError, PositivityError
from .geometry import ChannelDomain


@dataclass(frozen=True)
class ContinuityParams:
    """Artificial viscosity, time step and density bound parameter.

    ``bound`` is the ``n_b >= 1`` of ``1/n_b <= rho_0 <= n_b``; ``None``
    means the tightest value admitted by the initial data.
    """

    eps: float
    dt: float
    bound: float | None = None

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.bound is not None and not self.bound >= 1:
            raise ValueError("density bound parameter must be >= 1")

    def bound_for(self, rho0) -> float:
        rho0 = np.asarray(rho0)
        tight = float(max(1.0, rho0.max(), 1.0 / rho0.min()))
        if self.bound is None:
            return tight
        if self.bound < tight:
            raise ValueError(f"initial density violates 1/{self.bound:g} <= rho0 <= {self.bound:g}")
        return float(self.bound)


@dataclass(frozen=True)
class DensityField:
    """Cell-centred density values of shape ``(ny, nx)`` at time ``time``."""

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("density values must be a 2D (ny, nx) array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mass(self, domain: ChannelDomain) -> float:
        return domain.integrate(self.values)

    @property
    def min(self) -> float:
        return float(self.values.min())


# -- discrete operators --------------------------------------------------------


def flux_divergence(fx: np.ndarray, fy: np.ndarray, domain: ChannelDomain) -> np.ndarray:
    """Cell divergence of face fluxes.

    ``fx`` lives on x-faces ``(ny, nx)`` (face ``i`` right of cell ``i``),
    ``fy`` on interior y-faces ``(ny-1, nx)``; wall fluxes are zero.
    """
    dx = (fx - np.roll(fx, 1, axis=1)) / domain.hx
    fyp = np.zeros((domain.ny + 1, domain.nx))
    fyp[1:-1] = fy
    dy = (fyp[1:] - fyp[:-1]) / domain.hy
    return dx + dy


def face_average(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central face values on x-faces and interior y-faces."""
    return 0.5 * (rho + np.roll(rho, -1, axis=1)), 0.5 * (rho[1:] + rho[:-1])


def face_jumps(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``q_R - q_L`` on x-faces and ``q_up - q_down`` on interior y-faces."""
    return np.roll(q, -1, axis=1) - q, q[1:] - q[:-1]


def advective_divergence(rho: np.ndarray, ux: np.ndarray, uy: np.ndarray,
                         domain: ChannelDomain) -> np.ndarray:
    """``Div_h(rho_f u_f)`` per cell."""
    rx, ry = face_average(rho)
    return flux_divergence(rx * ux, ry * uy, domain)


def laplacian(rho: np.ndarray, domain: ChannelDomain) -> np.ndarray:
    """Five-point Laplacian with periodic ``x`` and reflected ghost cells at the walls."""
    jx, jy = face_jumps(rho)
    return flux_divergence(jx / domain.hx, jy / domain.hy, domain)


def gradient(rho: np.ndarray, domain: ChannelDomain) -> np.ndarray:
    """Central-difference gradient per cell, shape ``(ny, nx, 2)``; ghosts mirror the walls."""
    gx = (np.roll(rho, -1, axis=1) - np.roll(rho, 1, axis=1)) / (2.0 * domain.hx)
    padded = np.concatenate([rho[:1], rho, rho[-1:]], axis=0)
    gy = (padded[2:] - padded[:-2]) / (2.0 * domain.hy)
    return np.stack([gx, gy], axis=-1)


def dirichlet_form(a: np.ndarray, b: np.ndarray, domain: ChannelDomain) -> float:
    """``sum_faces area (a_R - a_L)(b_R - b_L) / h^2`` which equals ``-sum w a L_h b``."""
    ax, ay = face_jumps(a)
    bx, by = face_jumps(b)
    area = domain.cell_area
    return float(area * (np.sum(ax * bx) / domain.hx ** 2 + np.sum(ay * by) / domain.hy ** 2))


class DensityOperator:
    """Sparse assembly of ``I + dt (Div_h(u) - eps L_h)`` with factor caching.

    The factorisation is reused while the face velocities (and ``dt``,
    ``eps``) are unchanged, which makes pure-diffusion runs cost one solve
    per step.
    """

    def __init__(self, domain: ChannelDomain):
        self.domain = domain
        ny, nx = domain.ny, domain.nx
        idx = np.arange(ny * nx).reshape(ny, nx)
        self._left = idx
        self._right = np.roll(idx, -1, axis=1)
        self._down = idx[:-1]
        self._up = idx[1:]
        self._key = None
        self._lu = None
        self.factorizations = 0

    def matrix(self, ux, uy, dt: float, eps: float) -> sp.csc_matrix:
        d = self.domain
        N = d.nx * d.ny
        rows, cols, vals = [], [], []

        def couple(a, b, fa, fb, cross):
            # flux out of cell a into cell b: fa * rho_a + fb * rho_b, scaled by cross / cell area
            fa, fb = np.broadcast_to(fa, a.shape).ravel(), np.broadcast_to(fb, a.shape).ravel()
            a, b = a.ravel(), b.ravel()
            s = dt * cross / d.cell_area
            rows.extend([a, a, b, b])
            cols.extend([a, b, a, b])
            vals.extend([s * fa, s * fb, -s * fa, -s * fb])

        kx = eps / d.hx
        ky = eps / d.hy
        couple(self._left, self._right, 0.5 * ux + kx, 0.5 * ux - kx, d.hy)
        couple(self._down, self._up, 0.5 * uy + ky, 0.5 * uy - ky, d.hx)
        A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N)).tocsc()
        return A + sp.identity(N, format="csc")

    def solve(self, rho, ux, uy, dt: float, eps: float) -> np.ndarray:
        key = (ux.tobytes(), uy.tobytes(), float(dt), float(eps))
        if key != self._key:
            self._lu = splu(self.matrix(ux, uy, dt, eps))
            self._key = key
            self.factorizations += 1
        return self._lu.solve(np.ascontiguousarray(rho, dtype=float).ravel()).reshape(rho.shape)


def advance_density(rho: DensityField | np.ndarray, velocity, params: ContinuityParams,
                    domain: ChannelDomain, operator: DensityOperator | None = None) -> DensityField:
    """One implicit step of the regularised continuity equation.

    Parameters
    ----------
    rho : DensityField or ndarray
        Current density, shape ``(ny, nx)``.
    velocity : tuple of ndarray
        Face-normal velocities ``(ux, uy)`` with shapes ``(ny, nx)`` and
        ``(ny-1, nx)``, e.g. from ``GalerkinSpace.face_velocity``.
    params : ContinuityParams
    domain : ChannelDomain
    operator : DensityOperator, optional
        Reused between calls to benefit from factor caching.

    Raises
    ------
    PositivityError
        If the new density has a non-positive value.
    """
    if isinstance(rho, DensityField):
        values, t = rho.values, rho.time
    else:
        values, t = np.asarray(rho, dtype=float), 0.0
    ux, uy = velocity
    op = operator if operator is not None else DensityOperator(domain)
    new = op.solve(values, np.asarray(ux, dtype=float), np.asarray(uy, dtype=float),
                   params.dt, params.eps)
    if not np.all(new > 0):
        if not np.all(np.isfinite(new)):
            node = np.unravel_index(np.argmax(~np.isfinite(new)), new.shape)
        else:
            node = np.unravel_index(np.argmin(new), new.shape)
        raise PositivityError(node, new[node], 0.5 * params.dt)
    return DensityField(new, t + params.dt)


class TransportNumbers(NamedTuple):
    cfl: float
    peclet: float
    monotone: bool


def cfl_number(velocity, domain: ChannelDomain, dt: float, eps: float) -> TransportNumbers:
    """Courant and mesh Peclet numbers of a face velocity field.

    With mesh Peclet ``max |u_f| h / eps <= 2`` the step matrix is an
    M-matrix, so positivity holds for every ``dt``.
    """
    ux, uy = velocity
    ax = np.max(np.abs(ux)) if ux.size else 0.0
    ay = np.max(np.abs(uy)) if uy.size else 0.0
    cfl = dt * (ax / domain.hx + ay / domain.hy)
    pe = max(ax * domain.hx, ay * domain.hy) / eps
    return TransportNumbers(float(cfl), float(pe), bool(pe <= 2.0))


# -- bounds ------------------------------------------------------------------


@dataclass
class BoundReport:
    """Outcome of the exponential density envelope check."""

    bound: float
    margin: float
    violation: float
    location: tuple
    tolerance: float
    velocity_integral: np.ndarray

    @property
    def passed(self) -> bool:
        return self.violation <= self.tolerance

    def as_dict(self) -> dict:
        return {"bound": self.bound, "margin": self.margin, "violation": self.violation,
                "location": list(self.location), "tolerance": self.tolerance,
                "passed": self.passed,
                "final_velocity_integral": float(self.velocity_integral[-1])}


def density_bounds_check(rho_traj, w1inf, times, params: ContinuityParams,
                         tol: float = 1e-8) -> BoundReport:
    """Check the envelope ``(1/n_b) e^{-U(t)} <= rho <= n_b e^{U(t)}`` at every node and step.

    Parameters
    ----------
    rho_traj : ndarray
        Densities, shape ``(K+1, ny, nx)``.
    w1inf : ndarray
        ``max |u| + max |grad u|`` per step, shape ``(K+1,)``; entry ``k`` is
        the velocity that produced ``rho_traj[k]`` (entry 0 is unused).
    times : ndarray
        Shape ``(K+1,)``.

    Notes
    -----
    ``U(t_k) = sum_{j <= k} (t_j - t_{j-1}) w1inf[j]`` integrates with the
    right endpoint, matching the implicit step that uses the new velocity.
    """
    rho_traj = np.asarray(rho_traj, dtype=float)
    times = np.asarray(times, dtype=float)
    w1inf = np.asarray(w1inf, dtype=float)
    nb = params.bound_for(rho_traj[0])
    U = np.concatenate([[0.0], np.cumsum(np.diff(times) * w1inf[1:])])
    lo = rho_traj - (np.exp(-U) / nb)[:, None, None]
    hi = (nb * np.exp(U))[:, None, None] - rho_traj
    gap = np.minimum(lo, hi)
    k = np.unravel_index(np.argmin(gap), gap.shape)
    margin = float(gap[k])
    return BoundReport(nb, margin, max(0.0, -margin), tuple(int(i) for i in k), tol, U)


# -- renormalisation ----------------------------------------------------------


@dataclass(frozen=True)
class Renormalization:
    """Convex renormalising function ``zeta`` with two derivatives."""

    name: str
    zeta: Callable
    dzeta: Callable
    d2zeta: Callable
    positive_only: bool = True

    def check(self, rho):
        if self.positive_only and np.any(np.asarray(rho) <= 0):
            raise DomainError(f"{self.name} needs a positive density")


def renormalization(name: str, kappa: float = 1.0, theta: float = 2.0) -> Renormalization:
    """Catalog: ``rho_log_rho``, ``square``, ``shifted_power`` ((rho+kappa)^theta) and ``linear``."""
    if name == "rho_log_rho":
        return Renormalization(name, lambda r: r * np.log(r), lambda r: np.log(r) + 1.0,
                               lambda r: 1.0 / r)
    if name == "square":
        return Renormalization(name, lambda r: r * r, lambda r: 2.0 * r,
                               lambda r: np.full_like(r, 2.0), False)
    if name == "shifted_power":
        if not kappa > 0 or not theta >= 1:
            raise ValueError("shifted_power needs kappa > 0 and theta >= 1")
        return Renormalization(name, lambda r: (r + kappa) ** theta,
                               lambda r: theta * (r + kappa) ** (theta - 1),
                               lambda r: theta * (theta - 1) * (r + kappa) ** (theta - 2))
    if name == "linear":
        return Renormalization(name, lambda r: r, lambda r: np.ones_like(r),
                               lambda r: np.zeros_like(r), False)
    raise ValueError(f"unknown renormalization {name!r}")


class EntropyRow(NamedTuple):
    time: float
    rate: float
    advection: float
    advection_continuum: float
    dissipation: float
    residual: float


def entropy_balance(rho_traj, face_velocities, divergences, times, eps: float,
                    domain: ChannelDomain, zeta: Renormalization) -> list[EntropyRow]:
    """Per-step renormalised balance for the implicit density scheme.

    For the step ``k -> k+1`` driven by face velocities ``u``:

    * ``rate``: ``(int zeta(rho1) - int zeta(rho0)) / dt``
    * ``advection``: ``sum w zeta'(rho1) Div_h(rho1_f u_f)``, the discrete
      form of ``int (zeta'(rho) rho - zeta(rho)) div u``
    * ``advection_continuum``: that integral with the nodal divergence
    * ``dissipation``: ``eps sum w zeta'(rho1) L_h rho1 <= 0`` for convex zeta
    * ``residual``: ``rate + advection - dissipation``, which equals minus the
      cell-integrated Bregman gap of ``zeta`` divided by ``dt``, hence is
      ``<= 0`` and ``O(dt)``.

    ``face_velocities[k]`` and ``divergences[k]`` belong to step ``k -> k+1``.
    """
    rows = []
    w = domain.cell_area
    for k in range(len(times) - 1):
        r0, r1 = rho_traj[k], rho_traj[k + 1]
        zeta.check(r1)
        dt = times[k + 1] - times[k]
        ux, uy = face_velocities[k]
        rate = (np.sum(zeta.zeta(r1)) - np.sum(zeta.zeta(r0))) * w / dt
        dz = zeta.dzeta(r1)
        adv = float(np.sum(dz * advective_divergence(r1, ux, uy, domain)) * w)
        pz = dz * r1 - zeta.zeta(r1)
        adv_c = float(np.sum(pz * np.asarray(divergences[k]).reshape(r1.shape)) * w)
        diss = -eps * dirichlet_form(dz, r1, domain)
        rows.append(EntropyRow(float(times[k + 1]), float(rate), adv, adv_c, float(diss),
                               float(rate + adv - diss)))
    return rows
