"""Channel geometry, trigonometric Galerkin spaces and quadrature.

The computational domain is the periodic channel ``[0, Lx) x [0, H]``:
periodic in ``x``, solid walls at ``y = 0`` and ``y = H``.  Volume integrals
use the cell-centred grid of the density solver (a midpoint rule that is exact
for the trigonometric products of resolved modes); wall integrals use evenly
spaced stations on both walls.

Every velocity basis field is a product of a Fourier mode in ``x`` with either
``cos(l pi y / H)`` (tangential polarisation, field along ``e_x``) or
``sin(l pi y / H)`` (wall-normal polarisation, field along ``e_y``), so the
normal component vanishes on both walls identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DimensionError, ResolutionError

TANGENTIAL = 0
NORMAL = 1


@dataclass(frozen=True)
class ChannelDomain:
    """Periodic channel with grid and wall-station counts.

    Parameters
    ----------
    length : float
        Period ``Lx`` in the streamwise direction.
    height : float
        Wall distance ``H``.
    nx, ny : int
        Number of cells in ``x`` and ``y`` (volume quadrature nodes are the
        cell centres).
    nb : int, optional
        Stations per wall for boundary integrals; defaults to ``nx``.
    """

    length: float = 2.0
    height: float = 1.0
    nx: int = 32
    ny: int = 16
    nb: int | None = None
    dim: int = 2

    def __post_init__(self):
        if self.nb is None:
            object.__setattr__(self, "nb", self.nx)
        problems = []
        if not self.length > 0:
            problems.append("length must be positive")
        if not self.height > 0:
            problems.append("height must be positive")
        for name in ("nx", "ny", "nb"):
            v = getattr(self, name)
            if int(v) != v or v < 4 or v % 2:
                problems.append(f"{name} must be an even integer >= 4 (got {v})")
        if self.dim != 2:
            problems.append("only dim=2 channels are supported")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def hx(self) -> float:
        return self.length / self.nx

    @property
    def hy(self) -> float:
        return self.height / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.length * self.height

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.hx

    @property
    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.hy

    def grid(self):
        """Return ``(X, Y)`` arrays of shape ``(ny, nx)`` at cell centres."""
        return np.meshgrid(self.x_centers, self.y_centers)

    def nodes(self) -> np.ndarray:
        """Volume quadrature nodes, shape ``(ny * nx, 2)``, row-major in ``y``."""
        X, Y = self.grid()
        return np.column_stack([X.ravel(), Y.ravel()])

    def weights(self) -> np.ndarray:
        return np.full(self.nx * self.ny, self.cell_area)

    def x_face_points(self) -> np.ndarray:
        """Centres of faces normal to ``x``; face ``(j, i)`` sits between cells i and i+1."""
        xf = (np.arange(self.nx) + 1.0) * self.hx
        X, Y = np.meshgrid(xf, self.y_centers)
        return np.column_stack([X.ravel(), Y.ravel()])

    def y_face_points(self) -> np.ndarray:
        """Centres of interior faces normal to ``y``; shape ``((ny-1) * nx, 2)``."""
        yf = (np.arange(self.ny - 1) + 1.0) * self.hy
        X, Y = np.meshgrid(self.x_centers, yf)
        return np.column_stack([X.ravel(), Y.ravel()])

    def refined(self, factor: int = 4) -> "ChannelDomain":
        return ChannelDomain(self.length, self.height, self.nx * factor,
                             self.ny * factor, self.nb * factor, self.dim)

    def integrate(self, values: np.ndarray) -> float:
        """Midpoint-rule integral of grid values of shape ``(ny, nx)``."""
        return float(np.sum(values) * self.cell_area)


@dataclass(frozen=True)
class TraceQuadrature:
    """Stations and weights for line integrals over both walls.

    The first ``nb`` nodes lie on ``y = 0`` and the last ``nb`` on ``y = H``.
    """

    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray

    @classmethod
    def from_domain(cls, domain: ChannelDomain) -> "TraceQuadrature":
        nb = domain.nb
        xs = (np.arange(nb) + 0.5) * domain.length / nb
        pts = np.concatenate([np.column_stack([xs, np.zeros(nb)]),
                              np.column_stack([xs, np.full(nb, domain.height)])])
        normals = np.concatenate([np.tile([0.0, -1.0], (nb, 1)),
                                  np.tile([0.0, 1.0], (nb, 1))])
        tangents = np.tile([1.0, 0.0], (2 * nb, 1))
        w = np.full(2 * nb, domain.length / nb)
        for a in (pts, w, normals, tangents):
            a.setflags(write=False)
        return cls(pts, w, normals, tangents)

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class Mode:
    """One L2-normalised trigonometric basis field.

    ``m`` is the signed streamwise index (``m > 0``: ``cos``, ``m < 0``: ``sin``,
    ``m = 0``: constant); ``l`` is the wall-normal index.
    """

    m: int
    l: int
    polarization: int
    length: float
    height: float

    @property
    def kx(self) -> float:
        return 2.0 * np.pi * self.m / self.length

    @property
    def ky(self) -> float:
        return np.pi * self.l / self.height

    @property
    def wavenumber(self) -> float:
        return float(np.hypot(self.kx, self.ky))

    @property
    def scale(self) -> float:
        nx_ = self.length if self.m == 0 else self.length / 2.0
        ny_ = self.height if (self.l == 0 and self.polarization == TANGENTIAL) else self.height / 2.0
        return 1.0 / np.sqrt(nx_ * ny_)

    @property
    def label(self) -> str:
        k = 2 * abs(self.m)
        if self.m == 0:
            xs = "1"
        else:
            xs = f"{'cos' if self.m > 0 else 'sin'}({k}*pi*x/Lx)"
        if self.polarization == TANGENTIAL:
            ys = "1" if self.l == 0 else f"cos({self.l}*pi*y/H)"
            comp = "e_x"
        else:
            ys = f"sin({self.l}*pi*y/H)"
            comp = "e_y"
        return f"{self.scale:.6g}*{xs}*{ys} {comp}"

    def _xpart(self, x):
        k = abs(self.kx)
        if self.m == 0:
            return np.ones_like(x), np.zeros_like(x)
        if self.m > 0:
            return np.cos(k * x), -k * np.sin(k * x)
        return np.sin(k * x), k * np.cos(k * x)

    def _ypart(self, y):
        k = self.ky
        if self.polarization == TANGENTIAL:
            return np.cos(k * y), -k * np.sin(k * y)
        return np.sin(k * y), k * np.cos(k * y)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        X, _ = self._xpart(points[:, 0])
        Y, _ = self._ypart(points[:, 1])
        out = np.zeros_like(points)
        out[:, self.polarization] = self.scale * X * Y
        return out

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradient ``G[p, a, b] = d phi_a / d x_b``."""
        points = np.asarray(points, dtype=float)
        X, dX = self._xpart(points[:, 0])
        Y, dY = self._ypart(points[:, 1])
        out = np.zeros((len(points), 2, 2))
        out[:, self.polarization, 0] = self.scale * dX * Y
        out[:, self.polarization, 1] = self.scale * X * dY
        return out

    def divergence(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        X, dX = self._xpart(points[:, 0])
        Y, dY = self._ypart(points[:, 1])
        if self.polarization == TANGENTIAL:
            return self.scale * dX * Y
        return self.scale * X * dY


def max_mode_indices(domain: ChannelDomain) -> tuple[int, int]:
    """Largest ``|m|`` and ``l`` treated as resolved on ``domain``.

    Four cells per streamwise wavelength and four per wall-normal
    half-wavelength leave headroom for the cubic convective products.
    """
    return domain.nx // 4, domain.ny // 4


def enumerate_modes(domain: ChannelDomain) -> list[Mode]:
    """All resolved modes, ordered by (|k|, k_x, polarization)."""
    mmax, lmax = max_mode_indices(domain)
    modes = []
    for m in range(-mmax, mmax + 1):
        for l in range(lmax + 1):
            modes.append(Mode(m, l, TANGENTIAL, domain.length, domain.height))
            if l >= 1:
                modes.append(Mode(m, l, NORMAL, domain.length, domain.height))
    modes.sort(key=lambda md: (round(md.wavenumber, 10), md.m, md.polarization))
    return modes


class FieldSample(NamedTuple):
    values: np.ndarray
    gradients: np.ndarray
    sym_gradients: np.ndarray
    divergence: np.ndarray


class GalerkinSpace:
    """The first ``n`` modes on a channel with cached quadrature evaluations.

    Instances are immutable after construction; cached arrays are read-only.
    """

    def __init__(self, n: int, domain: ChannelDomain):
        if int(n) != n or n < 1:
            raise ValueError(f"mode count must be a positive integer (got {n})")
        candidates = enumerate_modes(domain)
        if n > len(candidates):
            mmax, lmax = max_mode_indices(domain)
            raise ResolutionError(
                f"n={n} exceeds the {len(candidates)} modes resolvable on a "
                f"{domain.nx}x{domain.ny} grid (|m| <= {mmax}, l <= {lmax}); "
                "refine the grid"
            )
        self.n = int(n)
        self.domain = domain
        self.modes = tuple(candidates[:n])
        self.trace = TraceQuadrature.from_domain(domain)

        nodes = domain.nodes()
        self.nodes = nodes
        self.weights = domain.weights()
        self.phi = np.stack([md.evaluate(nodes) for md in self.modes])
        self.grad_phi = np.stack([md.gradient(nodes) for md in self.modes])
        self.div_phi = np.stack([md.divergence(nodes) for md in self.modes])
        # face-normal components only; these drive the finite-volume fluxes
        self.phi_xface = np.stack([md.evaluate(domain.x_face_points())[:, 0] for md in self.modes])
        self.phi_yface = np.stack([md.evaluate(domain.y_face_points())[:, 1] for md in self.modes])
        self.phi_trace = np.stack([md.evaluate(self.trace.points)[:, 0] for md in self.modes])
        self.gram = np.einsum("ipa,jpa,p->ij", self.phi, self.phi, self.weights)
        for a in (self.phi, self.grad_phi, self.div_phi, self.phi_xface,
                  self.phi_yface, self.phi_trace, self.gram, self.nodes, self.weights):
            a.setflags(write=False)

    def __repr__(self):
        d = self.domain
        return f"GalerkinSpace(n={self.n}, grid={d.nx}x{d.ny}, Lx={d.length:g})"

    def check_coeffs(self, coeffs) -> np.ndarray:
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (self.n,):
            raise DimensionError(f"expected {self.n} coefficients, got shape {c.shape}")
        return c

    def velocity(self, coeffs) -> np.ndarray:
        """Velocity at the volume nodes, shape ``(N, 2)``."""
        return np.tensordot(self.check_coeffs(coeffs), self.phi, axes=1)

    def velocity_gradient(self, coeffs) -> np.ndarray:
        return np.tensordot(self.check_coeffs(coeffs), self.grad_phi, axes=1)

    def face_velocity(self, coeffs) -> tuple[np.ndarray, np.ndarray]:
        """Normal velocities on x-faces ``(ny, nx)`` and interior y-faces ``(ny-1, nx)``."""
        c = self.check_coeffs(coeffs)
        d = self.domain
        ux = (c @ self.phi_xface).reshape(d.ny, d.nx)
        uy = (c @ self.phi_yface).reshape(d.ny - 1, d.nx)
        return ux, uy

    def tangential_trace(self, coeffs) -> np.ndarray:
        return self.check_coeffs(coeffs) @ self.phi_trace

    def coefficients_of(self, field_values: np.ndarray) -> np.ndarray:
        """L2 projection of node values ``(N, 2)`` onto the space."""
        b = np.einsum("ipa,pa,p->i", self.phi, field_values, self.weights)
        return np.linalg.solve(self.gram, b)


def build_space(n: int, domain: ChannelDomain) -> GalerkinSpace:
    """Galerkin space spanned by the first ``n`` modes on ``domain``."""
    return GalerkinSpace(n, domain)


def evaluate_velocity(coeffs, space: GalerkinSpace, nodes: np.ndarray | None = None) -> FieldSample:
    """Velocity, gradient, symmetric gradient and divergence at ``nodes``.

    With ``nodes=None`` the cached volume quadrature evaluations are used.
    """
    c = space.check_coeffs(coeffs)
    if nodes is None:
        phi, grad, div = space.phi, space.grad_phi, space.div_phi
    else:
        nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
        phi = np.stack([md.evaluate(nodes) for md in space.modes])
        grad = np.stack([md.gradient(nodes) for md in space.modes])
        div = np.stack([md.divergence(nodes) for md in space.modes])
    u = np.tensordot(c, phi, axes=1)
    G = np.tensordot(c, grad, axes=1)
    D = 0.5 * (G + np.swapaxes(G, -1, -2))
    return FieldSample(u, G, D, np.tensordot(c, div, axes=1))


def boundary_trace(coeffs, space: GalerkinSpace, tq: TraceQuadrature | None = None) -> np.ndarray:
    """Velocity trace at wall stations, shape ``(nodes, 2)``.

    The normal component is set to zero by construction; the tangential
    component equals the basis expansion evaluated on the wall.
    """
    c = space.check_coeffs(coeffs)
    if tq is None or tq is space.trace:
        ut = c @ space.phi_trace
    else:
        ut = np.tensordot(c, np.stack([md.evaluate(tq.points)[:, 0] for md in space.modes]), axes=1)
    out = np.zeros((len(ut), 2))
    out[:, 0] = ut
    return out


def w1inf_norm(coeffs, space: GalerkinSpace) -> float:
    """``max |u| + max |grad u|`` over volume nodes and wall stations."""
    c = space.check_coeffs(coeffs)
    u = space.velocity(c)
    G = space.velocity_gradient(c)
    sample = evaluate_velocity(c, space, space.trace.points)
    umax = max(np.max(np.linalg.norm(u, axis=1)), np.max(np.linalg.norm(sample.values, axis=1)))
    gmax = max(np.max(np.linalg.norm(G, axis=(1, 2))),
               np.max(np.linalg.norm(sample.gradients, axis=(1, 2))))
    return float(umax + gmax)
