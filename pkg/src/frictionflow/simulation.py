"""Time loop producing a stored trajectory of densities and velocity coefficients."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import w1inf_norm
from .momentum import ProblemData, StepParams, fixed_point_step, initial_projection

log = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """States at every time level plus per-step solver statistics.

    ``rho`` has shape ``(K+1, ny, nx)``, ``coeffs`` ``(K+1, n)``;
    ``iterations`` and ``ratios`` have length ``K``.
    """

    data: ProblemData
    times: np.ndarray
    rho: np.ndarray
    coeffs: np.ndarray
    iterations: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    ratios: np.ndarray = field(default_factory=lambda: np.zeros(0))
    failure: str | None = None

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @property
    def space(self):
        return self.data.space

    @property
    def domain(self):
        return self.data.space.domain

    def face_velocities(self):
        return [self.space.face_velocity(c) for c in self.coeffs]

    def w1inf(self) -> np.ndarray:
        return np.array([w1inf_norm(c, self.space) for c in self.coeffs])

    def velocity_divergence(self) -> np.ndarray:
        return np.einsum("ki,ip->kp", self.coeffs, self.space.div_phi)

    def mean_ratio(self) -> float:
        r = self.ratios[np.isfinite(self.ratios)]
        return float(np.mean(r)) if r.size else float("nan")


def initial_state(data: ProblemData, rho0, u0_fn):
    """Project ``(rho0 u0)`` onto the Galerkin space with the ``rho0`` mass matrix."""
    space = data.space
    rho0 = np.asarray(rho0, dtype=float).reshape(space.domain.ny, space.domain.nx)
    u0 = u0_fn(space.nodes)
    c0 = initial_projection(rho0.ravel()[:, None] * u0, rho0, space)
    return rho0, c0


def simulate(data: ProblemData, rho0, c0, T: float, dt: float, tol: float = 1e-11,
             max_iter: int = 60, raise_on_failure: bool = True) -> Trajectory:
    """Advance ``(rho0, c0)`` to time ``T`` with uniform steps.

    The step count is ``round(T / dt)``; ``T`` must be an integer multiple of
    ``dt`` to within 1e-9 relative.  With ``raise_on_failure=False`` a solver
    error ends the loop and the partial trajectory records the message.
    """
    K = int(round(T / dt))
    if K < 1 or abs(K * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a positive integer multiple of dt={dt}")
    params = StepParams(dt, tol, max_iter)
    n = data.space.n
    ny, nx = data.domain.ny, data.domain.nx
    times = np.arange(K + 1) * dt
    rho = np.empty((K + 1, ny, nx))
    coeffs = np.empty((K + 1, n))
    rho[0] = np.asarray(rho0, dtype=float).reshape(ny, nx)
    coeffs[0] = data.space.check_coeffs(c0)
    its = np.zeros(K, dtype=int)
    ratios = np.full(K, np.nan)
    scale = max(1.0, float(np.linalg.norm(c0)))
    for k in range(K):
        try:
            res = fixed_point_step(rho[k], coeffs[k], times[k], params, data, scale)
        except Exception as exc:
            if raise_on_failure:
                raise
            log.warning("step %d failed: %s", k + 1, exc)
            return Trajectory(data, times[:k + 1], rho[:k + 1], coeffs[:k + 1], its[:k],
                              ratios[:k], failure=f"{type(exc).__name__}: {exc}")
        rho[k + 1], coeffs[k + 1] = res.rho, res.coeffs
        its[k], ratios[k] = res.iterations, res.ratio
        log.debug("t=%.4f iterations=%d ratio=%.3g", times[k + 1], res.iterations, res.ratio)
    return Trajectory(data, times, rho, coeffs, its, ratios)
