"""Per-run verification of the energy balance, inequalities and auxiliary bounds.

All quantities are recomputed from the stored states of a trajectory with
the solver's own quadratures, so a stored artifact reproduces them exactly.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .constitutive import ddot, deviatoric, j_delta, maximize_concave, newtonian_conjugate
from .density import (ContinuityParams, density_bounds_check, dirichlet_form,
                      entropy_balance, renormalization)
from .momentum import assemble_forcing, assemble_mass
from .simulation import Trajectory

LEDGER_COLUMNS = ("time", "kinetic", "internal", "viscous", "delta_gradient", "eps_entropy",
                  "friction", "external_power", "step_residual", "residual")


class EnergyLedgerRow(NamedTuple):
    time: float
    kinetic: float
    internal: float
    viscous: float
    delta_gradient: float
    eps_entropy: float
    friction: float
    external_power: float
    step_residual: float
    residual: float

    @property
    def total(self) -> float:
        return self.kinetic + self.internal


def _state_terms(traj: Trajectory, k: int):
    data = traj.data
    space = traj.space
    dom = space.domain
    c = traj.coeffs[k]
    rho = traj.rho[k]
    t = float(traj.times[k])
    w = space.weights
    r = rho.ravel()
    M = assemble_mass(rho, space, factor=False).matrix
    kinetic = 0.5 * float(c @ M @ c)
    internal = float(np.sum(data.pressure.potential(rho)) * dom.cell_area)
    G = space.velocity_gradient(c)
    D = 0.5 * (G + np.swapaxes(G, 1, 2))
    S = data.viscous.gradient(D)
    viscous = float(np.sum(w * ddot(S, D)))
    dgrad = data.delta * float(np.sum(w * ddot(G, G)))
    ent = data.eps * dirichlet_form(data.pressure.potential_derivative(rho), rho, dom)
    g = data.slip_threshold(t)
    ut = space.tangential_trace(c)
    ut_abs = np.abs(ut)
    friction = float(np.sum(space.trace.weights * g * ut * ut / np.maximum(ut_abs, data.delta)))
    power = float(np.sum(w * r * np.einsum("pa,pa->p", data.body_force(t), space.velocity(c))))
    return kinetic, internal, viscous, dgrad, ent, friction, power


def energy_ledger(traj: Trajectory) -> list[EnergyLedgerRow]:
    """Discrete energy balance row by row.

    The step residual is

        E_k - E_{k-1} + dt (viscous + delta_gradient + eps_entropy + friction - power)_k

    with ``E = kinetic + internal`` and all rates evaluated at the new state,
    as in the implicit scheme; ``residual`` is its running sum.  For the
    solver's own discretisation every step residual is non-positive and
    ``O(dt^2)``, so the cumulative residual is ``O(dt)``.
    """
    rows = []
    cum = 0.0
    prev = None
    for k in range(len(traj.times)):
        terms = _state_terms(traj, k)
        kin, intern, visc, dg, ent, fr, pw = terms
        if prev is None:
            step = 0.0
        else:
            dt = float(traj.times[k] - traj.times[k - 1])
            step = (kin + intern) - (prev[0] + prev[1]) + dt * (visc + dg + ent + fr - pw)
        cum += step
        rows.append(EnergyLedgerRow(float(traj.times[k]), kin, intern, visc, dg, ent, fr, pw, step, cum))
        prev = terms
    return rows


def ledger_array(rows) -> np.ndarray:
    return np.array([tuple(r) for r in rows], dtype=float).reshape(-1, len(LEDGER_COLUMNS))


DISSIPATION_COLUMNS = ("viscous", "delta_gradient", "eps_entropy", "friction")


def dissipation_signs(rows, tol: float = 1e-12) -> dict:
    arr = ledger_array(rows)
    out = {}
    for name in DISSIPATION_COLUMNS:
        col = arr[:, LEDGER_COLUMNS.index(name)]
        out[name] = float(col.min()) if col.size else 0.0
    return {"min_values": out, "passed": all(v >= -tol for v in out.values())}


# -- momentum inequality ----------------------------------------------------------


@dataclass
class InequalityReport:
    test_id: str
    left: float
    right: float
    margin: float
    scale: float
    passed: bool

    def as_dict(self):
        return asdict(self)


def inequality_battery(traj: Trajectory, n_modes: int = 8, n_random: int = 20, seed: int = 0):
    """Seeded test functions ``phi(t) = sum_i b_i(t) phi_i`` with ``b(T) = 0``.

    Returns ``(id, B)`` pairs with ``B`` of shape ``(K+1, n)``: single modes
    times ``(1 - t/T)^k`` for ``k = 1, 2``, random combinations, the
    projected ``-(1 - t/T) u`` and the zero function.
    """
    times = traj.times
    T = times[-1]
    n = traj.space.n
    env = {1: 1.0 - times / T, 2: (1.0 - times / T) ** 2}
    out = []
    for i in range(min(n, n_modes)):
        for k in (1, 2):
            B = np.zeros((len(times), n))
            B[:, i] = env[k]
            out.append((f"mode{i}_env{k}", B))
    rng = np.random.default_rng(seed)
    for r in range(n_random):
        a = rng.normal(size=n)
        a /= np.linalg.norm(a)
        amp = rng.uniform(0.1, 2.0)
        k = int(rng.integers(1, 3))
        freq = rng.uniform(0.0, 3.0)
        envelope = env[k] * np.cos(2 * np.pi * freq * times / T)
        out.append((f"random{r}", amp * envelope[:, None] * a[None, :]))
    out.append(("minus_u", -env[1][:, None] * traj.coeffs))
    out.append(("zero", np.zeros((len(times), n))))
    return out


def momentum_inequality_check(traj: Trajectory, battery=None, tol: float = 1e-8,
                              seed: int = 0) -> list[InequalityReport]:
    """Discrete momentum inequality for each test function of the battery.

    With ``m_k = M_{rho_k} c_k`` and ``b_K = 0`` the summed scheme gives the
    left side ``-sum_k (b_{k+1} - b_k) . m_k - b_0 . m_0``.  The right side
    replaces the friction pairing by ``int_Gamma g (j(u) - j(u + phi))`` at
    every step, which can only decrease it (convexity of ``j_delta``).
    A test passes when ``left >= right - tol * scale`` with
    ``scale = max(1, largest term)``.
    """
    if battery is None:
        battery = inequality_battery(traj, seed=seed)
    space = traj.space
    data = traj.data
    K = traj.steps
    m = np.array([assemble_mass(traj.rho[k], space, factor=False).matrix @ traj.coeffs[k]
                  for k in range(K + 1)])
    dts = np.diff(traj.times)
    nofric, gtr, ut = [], [], []
    for k in range(1, K + 1):
        terms = assemble_forcing(traj.rho[k], traj.coeffs[k], data, float(traj.times[k]))
        nofric.append(terms.total - terms.friction)
        gtr.append(data.slip_threshold(float(traj.times[k])) * space.trace.weights)
        ut.append(space.tangential_trace(traj.coeffs[k]))
    nofric, gtr, ut = np.array(nofric), np.array(gtr), np.array(ut)
    ju = j_delta(data.delta, np.stack([ut, np.zeros_like(ut)], -1))
    reports = []
    for tid, B in battery:
        if B.shape != traj.coeffs.shape:
            raise ValueError(f"test function {tid} has shape {B.shape}, expected {traj.coeffs.shape}")
        dB = np.diff(B, axis=0)
        left_terms = -np.einsum("ki,ki->k", dB, m[:-1])
        left = float(left_terms.sum() - B[0] @ m[0])
        vol = dts * np.einsum("ki,ki->k", B[1:], nofric)
        phit = B[1:] @ space.phi_trace
        jup = j_delta(data.delta, np.stack([ut + phit, np.zeros_like(ut)], -1))
        bnd = dts * np.einsum("ks,ks->k", gtr, ju - jup)
        right = float(vol.sum() + bnd.sum())
        scale = max(1.0, abs(left), abs(right), float(np.abs(vol).sum()), float(np.abs(bnd).sum()))
        margin = left - right
        reports.append(InequalityReport(tid, left, right, margin, scale, margin >= -tol * scale))
    return reports


# -- Korn -----------------------------------------------------------------------


def korn_ratio(coeffs_series, rho_series, space, q: float = 2.0) -> np.ndarray:
    """``|u|_{W^{1,q}} / (|dev Du|_{L^q} + int rho + int rho |u|^2)`` per state.

    Rows whose denominator terms are all below 1e-14 are returned as ``nan``.
    """
    w = space.weights
    out = []
    for c, rho in zip(np.atleast_2d(coeffs_series), np.asarray(rho_series).reshape(-1, len(w))):
        u = space.velocity(c)
        G = space.velocity_gradient(c)
        D = 0.5 * (G + np.swapaxes(G, 1, 2))
        un = np.linalg.norm(u, axis=1)
        gn = np.sqrt(ddot(G, G))
        num = (np.sum(w * (un ** q + gn ** q))) ** (1.0 / q)
        dev = (np.sum(w * np.sqrt(ddot(deviatoric(D), deviatoric(D))) ** q)) ** (1.0 / q)
        mass = float(np.sum(w * rho))
        kin = float(np.sum(w * rho * un ** 2))
        terms = (dev, mass, kin)
        if max(terms) < 1e-14:
            out.append(np.nan)
        else:
            out.append(num / sum(terms))
    return np.array(out)


def korn_summary(ratios, bound: float = 10.0) -> dict:
    r = np.asarray(ratios)
    r = r[np.isfinite(r)]
    if r.size == 0:
        return {"max": None, "median": None, "spread": None, "passed": True}
    med = float(np.median(r))
    spread = float(r.max() / med) if med > 0 else (0.0 if r.max() == 0 else np.inf)
    return {"max": float(r.max()), "median": med, "spread": spread, "passed": spread <= bound}


# -- Fenchel audit ----------------------------------------------------------------


def dissipation_audit(traj: Trajectory, stride: int = 1, tol: float = 1e-6,
                      ascent_tol: float = 1e-12) -> dict:
    """Integrated Fenchel-Young gap ``int |F_d(Du) + F_d*(S) - S : Du|`` with ``S = dF_d(Du)``.

    The conjugate is closed-form for the newtonian kind and a numerical
    maximisation (started at zero) otherwise.
    """
    space = traj.space
    pot = traj.data.viscous
    spec = pot.spec
    w = space.weights
    gaps = []
    for k in range(0, len(traj.times), stride):
        G = space.velocity_gradient(traj.coeffs[k])
        D = 0.5 * (G + np.swapaxes(G, 1, 2))
        S = pot.gradient(D)
        if spec.kind == "newtonian" and (pot.exact_quadratic or spec.is_quadratic):
            Fs = newtonian_conjugate(spec.mu, spec.lam, S)
        else:
            Fs = maximize_concave(pot.value, pot.gradient, S, tol=ascent_tol).value
        res = np.abs(pot.value(D) + Fs - ddot(S, D))
        gaps.append(float(np.sum(w * res)))
    gaps = np.array(gaps)
    scale = max(1.0, float(np.max(np.abs(gaps))) if gaps.size else 1.0)
    worst = float(gaps.max()) if gaps.size else 0.0
    return {"max_gap": worst, "gaps": gaps.tolist(), "tolerance": tol * scale,
            "passed": worst <= tol * scale}


# -- mass, bounds, entropy --------------------------------------------------------


def mass_drift(traj: Trajectory) -> float:
    masses = traj.rho.reshape(len(traj.times), -1).sum(axis=1) * traj.domain.cell_area
    return float(np.max(np.abs(masses - masses[0])) / masses[0])


def bounds_report(traj: Trajectory, tol: float = 1e-8, bound: float | None = None):
    dt = float(traj.times[1] - traj.times[0]) if traj.steps else 1.0
    params = ContinuityParams(traj.data.eps, dt, bound)
    return density_bounds_check(traj.rho, traj.w1inf(), traj.times, params, tol)


def entropy_rows(traj: Trajectory, name: str = "rho_log_rho", **kw):
    zeta = renormalization(name, **kw)
    return entropy_balance(traj.rho, traj.face_velocities()[1:], traj.velocity_divergence()[1:],
                           traj.times, traj.data.eps, traj.domain, zeta)


def entropy_inequality(traj: Trajectory, tol: float = 1e-6) -> dict:
    """``int rho log rho (t) + int_0^t int rho div u <= int rho0 log rho0 + tol`` for all ``t``.

    The space-time term is the discrete form used by the density scheme
    (see ``density.entropy_balance``).
    """
    rows = entropy_rows(traj)
    zeta = renormalization("rho_log_rho")
    w = traj.domain.cell_area
    ent = np.array([np.sum(zeta.zeta(r)) * w for r in traj.rho])
    dts = np.diff(traj.times)
    adv = np.concatenate([[0.0], np.cumsum(dts * np.array([r.advection for r in rows]))])
    excess = ent + adv - ent[0]
    return {"max_excess": float(excess.max()), "tolerance": tol,
            "passed": bool(excess.max() <= tol)}


def run_diagnostics(traj: Trajectory, *, mi_tol: float = 1e-8, bound_tol: float = 1e-8,
                    korn_q: float = 2.0, audit: bool = True, audit_stride: int = 1,
                    fy_tol: float = 1e-6, seed: int = 0, density_bound: float | None = None) -> dict:
    """All per-run checks as a JSON-ready dict; ``passed`` summarises them."""
    rows = energy_ledger(traj)
    signs = dissipation_signs(rows)
    mi = momentum_inequality_check(traj, tol=mi_tol, seed=seed)
    br = bounds_report(traj, bound_tol, density_bound)
    kr = korn_ratio(traj.coeffs, traj.rho, traj.space, korn_q)
    rep = {
        "energy": {"final_residual": rows[-1].residual, "dissipation_signs": signs},
        "momentum_inequality": {"tests": [r.as_dict() for r in mi],
                                "passed": all(r.passed for r in mi)},
        "density_bounds": br.as_dict(),
        "korn": korn_summary(kr),
        "mass_drift": mass_drift(traj),
        "entropy": entropy_inequality(traj),
    }
    if audit:
        rep["fenchel"] = dissipation_audit(traj, stride=audit_stride, tol=fy_tol)
    rep["passed"] = bool(signs["passed"] and rep["momentum_inequality"]["passed"]
                         and br.passed and rep["korn"]["passed"]
                         and rep["entropy"]["passed"]
                         and rep.get("fenchel", {"passed": True})["passed"])
    return rep
