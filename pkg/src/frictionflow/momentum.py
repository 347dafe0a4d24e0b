"""Galerkin momentum equation: mass operator, forcing functional and Picard stepper.

Every term of the forcing functional is written so that contracting it with
the coefficient vector reproduces the corresponding term of the discrete
energy balance exactly:

* convection and the eps-compensation use skew-symmetric splittings whose
  remainders cancel the mass-matrix time derivative;
* the pressure term is the discrete adjoint of the density flux, so it
  exchanges energy with ``sum w P(rho)`` without quadrature error.

Backward Euler in time then leaves a non-positive ``O(dt^2)`` remainder per
step and nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .constitutive import MollifiedPotential, PressureLaw, grad_j_delta
from .density import (ContinuityParams, DensityOperator, advance_density,
                      advective_divergence, face_average, face_jumps, gradient, laplacian)
from .exceptions import BlowUpError, FixedPointError, MassMatrixError
from .geometry import GalerkinSpace


@dataclass
class ProblemData:
    """Everything the momentum operators need besides the state.

    ``force(t, points)`` returns ``(P, 2)``; ``threshold(t, points)`` returns
    ``(P,)`` non-negative values.  ``None`` switches the term off.
    """

    space: GalerkinSpace
    viscous: MollifiedPotential
    pressure: PressureLaw
    delta: float
    eps: float
    force: Callable | None = None
    threshold: Callable | None = None
    _op: DensityOperator | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")

    @property
    def domain(self):
        return self.space.domain

    @property
    def density_operator(self) -> DensityOperator:
        if self._op is None:
            self._op = DensityOperator(self.domain)
        return self._op

    def body_force(self, t: float) -> np.ndarray:
        if self.force is None:
            return np.zeros((len(self.space.nodes), 2))
        return np.asarray(self.force(t, self.space.nodes), dtype=float)

    def slip_threshold(self, t: float) -> np.ndarray:
        if self.threshold is None:
            return np.zeros(self.space.trace.size)
        g = np.asarray(self.threshold(t, self.space.trace.points), dtype=float)
        if np.any(g < 0):
            raise ValueError("slip threshold must be non-negative")
        return g


class MassOperator(NamedTuple):
    matrix: np.ndarray
    factor: tuple
    condition: float
    min_eigenvalue: float


def assemble_mass(rho, space: GalerkinSpace, factor: bool = True) -> MassOperator:
    """Density-weighted mass matrix ``M_ij = sum_p w_p rho_p phi_i . phi_j``.

    Raises
    ------
    MassMatrixError
        If the Cholesky factorisation fails.
    """
    r = np.asarray(rho, dtype=float).ravel()
    wr = space.weights * r
    phi = space.phi
    M = np.einsum("ipa,jpa,p->ij", phi, phi, wr, optimize=True)
    M = 0.5 * (M + M.T)
    ev = np.linalg.eigvalsh(M)
    if not factor:
        return MassOperator(M, None, float(ev[-1] / ev[0]) if ev[0] > 0 else np.inf, float(ev[0]))
    try:
        cf = cho_factor(M, lower=True, check_finite=True)
    except (LinAlgError, ValueError):
        raise MassMatrixError(ev[0]) from None
    if ev[0] <= 0:
        raise MassMatrixError(ev[0])
    return MassOperator(M, cf, float(ev[-1] / ev[0]), float(ev[0]))


class ForcingTerms(NamedTuple):
    """Per-term Galerkin forcing vectors, each of length ``n``."""

    convection: np.ndarray
    viscous: np.ndarray
    delta_gradient: np.ndarray
    pressure: np.ndarray
    body: np.ndarray
    eps_term: np.ndarray
    friction: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return (self.convection + self.viscous + self.delta_gradient + self.pressure
                + self.body + self.eps_term + self.friction)


def assemble_forcing(rho, coeffs, data: ProblemData, t: float) -> ForcingTerms:
    """Galerkin forcing ``N(rho, u)`` tested against every basis field.

    Continuum form of entry ``i``::

        int (rho u x u) : grad phi_i - dF_delta(Du) : grad phi_i - delta grad u : grad phi_i
            + p(rho) div phi_i + rho f . phi_i - eps (grad u grad rho) . phi_i
        - int_Gamma g dj_delta(u) . phi_i
    """
    space = data.space
    dom = space.domain
    c = space.check_coeffs(coeffs)
    rho2 = np.asarray(rho, dtype=float).reshape(dom.ny, dom.nx)
    r = rho2.ravel()
    w = space.weights
    u = space.velocity(c)
    G = space.velocity_gradient(c)
    ux, uy = space.face_velocity(c)
    div_flux = advective_divergence(rho2, ux, uy, dom).ravel()

    # (u . grad phi_i) . u and (u . grad u) . phi_i
    ugu = np.einsum("pab,pb->pa", G, u)
    a1 = np.einsum("ipab,pa,pb->ip", space.grad_phi, u, u, optimize=True)
    a2 = np.einsum("ipa,pa->ip", space.phi, ugu)
    uphi = np.einsum("ipa,pa->ip", space.phi, u)
    conv = 0.5 * ((a1 - a2) @ (w * r)) - 0.5 * (uphi @ (w * div_flux))

    D = 0.5 * (G + np.swapaxes(G, 1, 2))
    S = data.viscous.gradient(D)
    visc = -np.einsum("pab,ipab->i", S * w[:, None, None], space.grad_phi, optimize=True)
    dgrad = -data.delta * np.einsum("pab,ipab->i", G * w[:, None, None], space.grad_phi, optimize=True)

    # discrete adjoint of the density flux: sum w P'(rho) Div_h(rho_f phi_f)
    dP = data.pressure.potential_derivative(rho2)
    jx, jy = face_jumps(dP)
    rx, ry = face_average(rho2)
    px = (dom.hy * rx * jx).ravel()
    py = (dom.hx * ry * jy).ravel()
    pres = -(space.phi_xface @ px) - (space.phi_yface @ py)

    f = data.body_force(t)
    body = np.einsum("ipa,pa->i", space.phi, f * (w * r)[:, None])

    lap = laplacian(rho2, dom).ravel()
    grho = gradient(rho2, dom).reshape(-1, 2)
    gpg = np.einsum("ipab,pb,pa->ip", space.grad_phi, grho, u, optimize=True)
    gug = np.einsum("pab,pb->pa", G, grho)
    b2 = np.einsum("ipa,pa->ip", space.phi, gug)
    epst = 0.5 * data.eps * (uphi @ (w * lap)) + 0.5 * data.eps * ((gpg - b2) @ w)

    fric = np.zeros(space.n)
    g = data.slip_threshold(t)
    if np.any(g):
        ut = space.tangential_trace(c)
        v = np.column_stack([ut, np.zeros_like(ut)])
        gj = grad_j_delta(data.delta, v)[:, 0]
        fric = -(space.phi_trace @ (space.trace.weights * g * gj))
    return ForcingTerms(conv, visc, dgrad, pres, body, epst, fric)


def initial_projection(momentum, rho0, space: GalerkinSpace) -> np.ndarray:
    """Coefficients ``c`` with ``M_{rho0} c = (int (rho u)_0 . phi_i)_i``.

    ``momentum`` holds ``(rho u)_0`` at the volume nodes, shape ``(N, 2)``.
    """
    m = np.asarray(momentum, dtype=float).reshape(-1, 2)
    rhs = np.einsum("ipa,pa,p->i", space.phi, m, space.weights)
    mass = assemble_mass(rho0, space)
    return cho_solve(mass.factor, rhs)


@dataclass(frozen=True)
class StepParams:
    dt: float
    tol: float = 1e-11
    max_iter: int = 60
    blowup: float = 1e6

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.tol > 0:
            raise ValueError("fixed-point tolerance must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")


class StepResult(NamedTuple):
    rho: np.ndarray
    coeffs: np.ndarray
    iterations: int
    ratio: float
    changes: tuple


def fixed_point_step(rho0, c0, t0: float, params: StepParams, data: ProblemData,
                     scale: float = 1.0) -> StepResult:
    """One backward-Euler step solved by Picard iteration.

    Each sweep advances the density from ``rho0`` with the current velocity
    iterate, then solves ``M_rho c = M_rho0 c0 + dt N(rho, c_prev)``.  The
    iteration stops when ``|c_new - c| <= tol * max(1, |c_new|)``; the
    density is finally recomputed with the converged velocity so the
    returned pair is consistent.

    ``ratio`` is the geometric mean of successive change ratios, taken over
    the sweeps whose previous change is above round-off; ``nan`` when fewer
    than two such sweeps occur.
    """
    space = data.space
    dom = space.domain
    cp = ContinuityParams(data.eps, params.dt)
    op = data.density_operator
    rho0 = np.asarray(rho0, dtype=float).reshape(dom.ny, dom.nx)
    c0 = space.check_coeffs(c0)
    t1 = t0 + params.dt
    m0 = assemble_mass(rho0, space, factor=False).matrix @ c0
    c = c0.copy()
    changes = []
    limit = params.blowup * max(1.0, scale)
    for it in range(1, params.max_iter + 1):
        rho = advance_density(rho0, space.face_velocity(c), cp, dom, op).values
        mass = assemble_mass(rho, space)
        N = assemble_forcing(rho, c, data, t1).total
        c_new = cho_solve(mass.factor, m0 + params.dt * N)
        if not np.all(np.isfinite(c_new)) or np.linalg.norm(c_new) > limit:
            raise BlowUpError(f"velocity coefficients exceeded {limit:.3e} at t={t1:.6g}")
        change = float(np.linalg.norm(c_new - c))
        changes.append(change)
        c = c_new
        if change <= params.tol * max(1.0, float(np.linalg.norm(c))):
            rho = advance_density(rho0, space.face_velocity(c), cp, dom, op).values
            return StepResult(rho, c, it, _contraction(changes, c), tuple(changes))
    raise FixedPointError(params.max_iter, changes[-1], _contraction(changes, c))


def _contraction(changes, c) -> float:
    floor = 1e-13 * max(1.0, float(np.linalg.norm(c)))
    ratios = [b / a for a, b in zip(changes[:-1], changes[1:]) if a > floor and b > 0]
    if not ratios:
        return float("nan")
    return float(np.exp(np.mean(np.log(ratios))))
