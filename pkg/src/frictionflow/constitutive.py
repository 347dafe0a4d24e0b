"""Viscous potentials, their mollification and conjugates, friction and pressure laws.

Symmetric tensors are plain arrays of shape ``(..., d, d)``; every routine
symmetrises its input, so only the upper triangle matters.  The Frobenius
product ``A : B = sum_ij A_ij B_ij`` and norm are used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import ConjugateError, DomainError

KINDS = ("newtonian", "powerlaw", "custom")


def sym(D):
    D = np.asarray(D, dtype=float)
    return 0.5 * (D + np.swapaxes(D, -1, -2))


def trace(D):
    return np.trace(D, axis1=-2, axis2=-1)


def deviatoric(D):
    """Trace-free part ``D - tr(D)/d Id``."""
    D = np.asarray(D, dtype=float)
    d = D.shape[-1]
    return D - (trace(D) / d)[..., None, None] * np.eye(d)


def ddot(A, B):
    return np.einsum("...ab,...ab->...", A, B)


def fro(D):
    return np.sqrt(ddot(D, D))


def sym_basis(d: int) -> np.ndarray:
    """Frobenius-orthonormal basis of symmetric ``d x d`` matrices, shape ``(k, d, d)``."""
    out = []
    for a in range(d):
        E = np.zeros((d, d))
        E[a, a] = 1.0
        out.append(E)
    for a in range(d):
        for b in range(a + 1, d):
            E = np.zeros((d, d))
            E[a, b] = E[b, a] = 1.0 / np.sqrt(2.0)
            out.append(E)
    return np.array(out)


def random_sym(rng: np.random.Generator, size, d: int = 2, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(scale=scale, size=tuple(np.atleast_1d(size)) + (d, d))
    return sym(A)


@dataclass(frozen=True)
class PotentialSpec:
    """A convex viscous potential ``F`` on symmetric tensors.

    ``newtonian``: ``F(D) = mu/2 |D|^2 + lam/2 tr(D)^2``, stress ``mu D + lam tr(D) Id``.

    ``powerlaw``: ``F(D) = mu |dev D|^q + lam/2 tr(D)^2``.

    ``custom``: user callables ``func(D)`` and optionally ``grad(D)``, both
    vectorised over leading axes; ``coercivity`` gives ``(mu, q)``.
    """

    kind: str = "newtonian"
    mu: float = 1.0
    lam: float = 0.0
    q: float = 2.0
    dim: int = 2
    func: Callable | None = field(default=None, compare=False, repr=False)
    grad: Callable | None = field(default=None, compare=False, repr=False)
    coercivity: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        if self.kind == "newtonian":
            if not self.mu > 0:
                raise ValueError("newtonian potential needs mu > 0")
            # convexity of mu/2|D|^2 + lam/2 tr^2 and a finite dual need lam > -mu/d
            if not self.lam > -self.mu / self.dim:
                raise ValueError(f"newtonian potential needs lam > -mu/d = {-self.mu / self.dim:g}")
        elif self.kind == "powerlaw":
            if not self.mu > 0:
                raise ValueError("powerlaw potential needs mu > 0")
            if not self.q > 1:
                raise ValueError("powerlaw potential needs q > 1")
            if not self.lam >= 0:
                raise ValueError("powerlaw potential needs lam >= 0")
        elif self.func is None:
            raise ValueError("custom potential needs a callable func")

    @property
    def is_quadratic(self) -> bool:
        return self.kind == "newtonian" or (self.kind == "powerlaw" and self.q == 2.0)

    @property
    def coercivity_constants(self) -> tuple[float, float]:
        """``(mu, q)`` with ``F(D) >= mu |dev D|^q`` for ``|D| > 1``."""
        if self.kind == "newtonian":
            return 0.5 * self.mu, 2.0
        if self.kind == "powerlaw":
            return self.mu, self.q
        if self.coercivity is None:
            raise ValueError("custom potential has no coercivity constants")
        return tuple(self.coercivity)

    def value(self, D):
        D = sym(D)
        if self.kind == "newtonian":
            return 0.5 * self.mu * ddot(D, D) + 0.5 * self.lam * trace(D) ** 2
        if self.kind == "powerlaw":
            return self.mu * fro(deviatoric(D)) ** self.q + 0.5 * self.lam * trace(D) ** 2
        return np.asarray(self.func(D), dtype=float)

    def gradient(self, D):
        D = sym(D)
        d = D.shape[-1]
        eye = np.eye(d)
        if self.kind == "newtonian":
            return self.mu * D + self.lam * trace(D)[..., None, None] * eye
        if self.kind == "powerlaw":
            dev = deviatoric(D)
            r = fro(dev)
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(r > 0, self.q * self.mu * r ** (self.q - 2.0), 0.0)
            return fac[..., None, None] * dev + self.lam * trace(D)[..., None, None] * eye
        if self.grad is None:
            raise ValueError("custom potential has no gradient; supply grad=")
        return sym(self.grad(D))


def eval_potential(spec: PotentialSpec, D):
    return spec.value(D)


def grad_potential(spec: PotentialSpec, D):
    return spec.gradient(D)


# -- conjugates --------------------------------------------------------------


class AscentResult(NamedTuple):
    value: np.ndarray
    argmax: np.ndarray
    gap: np.ndarray
    iterations: int


def maximize_concave(value, grad, S, *, tol=1e-10, max_iter=10_000, start=None) -> AscentResult:
    """Evaluate ``sup_D [S:D - F(D)]`` by damped gradient ascent, batched over ``S``.

    Each sample takes Barzilai-Borwein trial steps with Armijo backtracking;
    iteration stops once the predicted gain of a step, ``t |g|^2``, falls
    below ``tol * max(1, |objective|)``.

    Raises
    ------
    ConjugateError
        If some sample has not converged after ``max_iter`` iterations. The
        error carries the last iterates and their gap estimates.
    """
    S = sym(S)
    batch_shape = S.shape[:-2]
    d = S.shape[-1]
    S = S.reshape(-1, d, d)
    B = len(S)
    D = np.zeros_like(S) if start is None else sym(start).reshape(-1, d, d).copy()

    def objective(X, Sx):
        return ddot(Sx, X) - value(X)

    f = objective(D, S)
    g = S - grad(D)
    t = np.ones(B)
    gap = t * ddot(g, g)
    active = gap > tol * np.maximum(1.0, np.abs(f))
    it = 0
    while np.any(active):
        if it >= max_iter:
            raise ConjugateError(D.reshape(batch_shape + (d, d)),
                                 gap.reshape(batch_shape),
                                 f"conjugate ascent did not converge in {max_iter} iterations "
                                 f"(max gap {gap[active].max():.3e})")
        it += 1
        idx = np.flatnonzero(active)
        Da, ga, ta, Sa = D[idx], g[idx], t[idx], S[idx]
        trial = Da + ta[:, None, None] * ga
        f_trial = objective(trial, Sa)
        g2 = ddot(ga, ga)
        ok = f_trial >= f[idx] + 1e-4 * ta * g2
        acc = idx[ok]
        rej = idx[~ok]
        t[rej] *= 0.5
        if acc.size:
            g_new = Sa[ok] - grad(trial[ok])
            s = trial[ok] - Da[ok]
            y = g_new - ga[ok]
            sy = -ddot(s, y)
            with np.errstate(divide="ignore", invalid="ignore"):
                bb = np.where(sy > 0, ddot(s, s) / sy, 2.0 * ta[ok])
            t[acc] = np.clip(bb, 1e-12, 1e12)
            D[acc] = trial[ok]
            f[acc] = f_trial[ok]
            g[acc] = g_new
        gap[idx] = t[idx] * ddot(g[idx], g[idx])
        # a step shrunk to nothing means the objective is flat at machine precision
        stalled = t[idx] < 1e-14
        gap[idx[stalled]] = 0.0
        active[idx] = gap[idx] > tol * np.maximum(1.0, np.abs(f[idx]))
    return AscentResult(f.reshape(batch_shape), D.reshape(batch_shape + (d, d)),
                        gap.reshape(batch_shape), it)


def newtonian_conjugate(mu: float, lam: float, S):
    """Closed-form dual of ``mu/2 |D|^2 + lam/2 tr(D)^2`` in dimension ``d``."""
    S = sym(S)
    d = S.shape[-1]
    bulk = mu / d + lam
    dev = deviatoric(S)
    return ddot(dev, dev) / (2.0 * mu) + trace(S) ** 2 / (2.0 * d * d * bulk)


def conjugate(spec: PotentialSpec, S, *, tol=1e-12, max_iter=10_000):
    """``F*(S) = sup_D [S:D - F(D)]``; closed form for newtonian, ascent otherwise.

    A powerlaw potential with ``lam = 0`` is flat along ``Id``, so its dual is
    ``+inf`` wherever ``tr S != 0``; those entries are returned as ``inf``.
    """
    if spec.kind == "newtonian":
        return newtonian_conjugate(spec.mu, spec.lam, S)
    if spec.kind == "powerlaw" and spec.lam == 0:
        S = sym(S)
        tr = trace(S)
        infinite = np.abs(tr) > 1e-12 * np.maximum(1.0, fro(S))
        out = np.full(tr.shape, np.inf)
        if np.any(~infinite):
            dev = deviatoric(S[~infinite])
            out[~infinite] = maximize_concave(spec.value, spec.gradient, dev,
                                              tol=tol, max_iter=max_iter).value
        return out if out.ndim else float(out)
    return maximize_concave(spec.value, spec.gradient, S, tol=tol, max_iter=max_iter).value


def fenchel_residual(spec: PotentialSpec, D, S, **kw):
    """``F(D) + F*(S) - D:S``; non-negative, zero iff ``S`` is a subgradient at ``D``."""
    D, S = sym(D), sym(S)
    return spec.value(D) + conjugate(spec, S, **kw) - ddot(D, S)


# -- mollification -----------------------------------------------------------


def bump(r):
    """Unnormalised radial bump ``exp(-1/(1-r^2))`` on ``r < 1``."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


class MollifyResult(NamedTuple):
    value: np.ndarray
    gradient: np.ndarray
    underresolved: bool
    error_estimate: float


class MollifiedPotential:
    """Convolution of a potential with a compactly supported radial bump.

    ``F_delta(D) = int xi_delta(W) F(D - W) dW - int xi_delta(W) F(W) dW``,
    evaluated with a tensor-product Gauss-Legendre rule (``order`` points per
    independent tensor entry) on the bounding box of the support ball.

    Parameters
    ----------
    spec : PotentialSpec
    delta : float
        Support radius of the mollifier, in ``(0, 1]``.
    order : int
        Gauss points per entry; at least 8.
    exact_quadratic : bool
        For quadratic potentials the mollification is the identity (the
        kernel's first moment vanishes by symmetry and the second-moment
        constant is subtracted), so evaluation may skip the quadrature.
    """

    def __init__(self, spec: PotentialSpec, delta: float, order: int = 12,
                 exact_quadratic: bool = False):
        if not 0 < delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if order < 8:
            raise ValueError("quadrature order must be at least 8")
        self.spec = spec
        self.delta = float(delta)
        self.order = int(order)
        self.exact_quadratic = bool(exact_quadratic)
        self.shifts, self.kernel_weights = self._rule(order)
        self._offset = float(np.dot(self.kernel_weights, spec.value(self.shifts)))

    def _rule(self, order):
        d = self.spec.dim
        basis = sym_basis(d)
        k = len(basis)
        x, w = np.polynomial.legendre.leggauss(order)
        x = x * self.delta
        w = w * self.delta
        grids = np.meshgrid(*([x] * k), indexing="ij")
        wgrids = np.meshgrid(*([w] * k), indexing="ij")
        z = np.stack([g.ravel() for g in grids], axis=1)
        wz = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        r = np.linalg.norm(z, axis=1) / self.delta
        kw = wz * bump(r)
        keep = kw > 0
        z, kw = z[keep], kw[keep]
        kw = kw / kw.sum()
        return np.einsum("kj,jab->kab", z, basis), kw

    def _convolve(self, fun, D):
        D = sym(D)
        shifted = D[..., None, :, :] - self.shifts
        vals = fun(shifted)
        return np.tensordot(vals, self.kernel_weights, axes=([D.ndim - 2], [0])) \
            if vals.ndim == D.ndim - 1 else np.einsum("...kab,k->...ab", vals, self.kernel_weights)

    def value(self, D):
        if self.exact_quadratic and self.spec.is_quadratic:
            return self.spec.value(D)
        return self._convolve(self.spec.value, D) - self._offset

    def gradient(self, D):
        if self.exact_quadratic and self.spec.is_quadratic:
            return self.spec.gradient(D)
        if self.spec.kind == "custom" and self.spec.grad is None:
            return self._kernel_gradient(D)
        return self._convolve(self.spec.gradient, D)

    def _kernel_gradient(self, D):
        # Central differences of the discrete convolution along an orthonormal
        # basis.  Differentiating the kernel itself is inaccurate here because
        # the bump's derivative is steep at the edge of the truncated support.
        D = sym(D)
        h = 1e-5 * max(1.0, float(np.max(np.abs(D))))
        out = np.zeros_like(D)
        for E in sym_basis(D.shape[-1]):
            df = (self.value(D + h * E) - self.value(D - h * E)) / (2.0 * h)
            out = out + np.asarray(df)[..., None, None] * E
        return out

    def conjugate(self, S, **kw):
        if self.spec.kind == "newtonian" and (self.exact_quadratic or self.spec.is_quadratic):
            return newtonian_conjugate(self.spec.mu, self.spec.lam, S)
        return maximize_concave(self.value, self.gradient, S, **kw).value


def mollify(spec: PotentialSpec, delta: float, D, order: int = 12,
            check_order: int = 8, rtol: float = 1e-4) -> MollifyResult:
    """``F_delta(D)`` and its gradient by quadrature, with a resolution check.

    The value is recomputed with ``check_order`` points per entry; a relative
    discrepancy above ``rtol`` sets ``underresolved``.
    """
    fine = MollifiedPotential(spec, delta, order)
    coarse = MollifiedPotential(spec, delta, check_order)
    v = fine.value(D)
    vc = coarse.value(D)
    scale = max(1.0, float(np.max(np.abs(v))))
    err = float(np.max(np.abs(v - vc))) / scale
    return MollifyResult(v, fine.gradient(D), err > rtol, err)


# -- smoothed absolute value -------------------------------------------------


def j_delta(delta: float, v):
    """C^1 convex surrogate of ``|v|`` with a quadratic core of radius ``delta``."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    return np.where(r > delta, r, r * r / (2.0 * delta) + 0.5 * delta)


def grad_j_delta(delta: float, v):
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fac = np.where(r > delta, 1.0 / np.where(r > 0, r, 1.0), 1.0 / delta)
    return fac[..., None] * v


@dataclass(frozen=True)
class SmoothedAbsolute:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    def __call__(self, v):
        return j_delta(self.delta, v)

    def gradient(self, v):
        return grad_j_delta(self.delta, v)


# -- pressure ----------------------------------------------------------------


@dataclass(frozen=True)
class PressureLaw:
    """Isentropic law ``p = a rho^gamma`` and its potential.

    The potential ``P(rho) = rho int_1^rho p(z)/z^2 dz`` is
    ``a (rho^gamma - rho) / (gamma - 1)``.
    """

    a: float = 1.0
    gamma: float = 2.0
    kind: str = "isentropic"

    def __post_init__(self):
        if self.kind != "isentropic":
            raise ValueError("only the isentropic pressure law is available")
        if not self.a > 0:
            raise ValueError("pressure coefficient a must be positive")
        if not self.gamma > 1:
            raise ValueError("adiabatic exponent gamma must exceed 1")

    def _check(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0):
            raise DomainError(f"negative density {rho.min():.3e} passed to the pressure law")
        return rho

    def pressure(self, rho):
        return self.a * self._check(rho) ** self.gamma

    def pressure_derivative(self, rho):
        return self.a * self.gamma * self._check(rho) ** (self.gamma - 1.0)

    def potential(self, rho):
        rho = self._check(rho)
        return self.a * (rho ** self.gamma - rho) / (self.gamma - 1.0)

    def potential_derivative(self, rho):
        rho = self._check(rho)
        return self.a * (self.gamma * rho ** (self.gamma - 1.0) - 1.0) / (self.gamma - 1.0)

    def potential_second(self, rho):
        """``P''(rho) = p'(rho) / rho``."""
        return self.a * self.gamma * self._check(rho) ** (self.gamma - 2.0)

    @property
    def convexity_constants(self) -> tuple[float, float]:
        """Largest ``lo`` and smallest ``hi`` with ``P - lo p`` and ``hi p - P`` convex."""
        c = 1.0 / (self.gamma - 1.0)
        return c, c

    def coercivity_constant(self, rho_min: float = 2.0) -> float:
        """``c`` with ``P(rho) >= c rho^gamma`` for all ``rho >= rho_min > 1``."""
        if not rho_min > 1:
            raise ValueError("rho_min must exceed 1 since P(1) = 0")
        return self.a * (1.0 - rho_min ** (1.0 - self.gamma)) / (self.gamma - 1.0)


def pressure_eval(law: PressureLaw, rho):
    """Return ``(p, P, P')`` at ``rho >= 0``."""
    return law.pressure(rho), law.potential(rho), law.potential_derivative(rho)
