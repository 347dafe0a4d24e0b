"""Parameter sweeps and the numerical counterparts of the limit passages.

Weak limits are not observable, so they are proxied by the finest level of a
sweep: distances between consecutive levels track strong convergence,
pairings with fixed smooth space-time windows track weak convergence, and
window-averaged Bregman remainders shadow the defect measures.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import wasserstein_distance

from .config import RunConfig, run_config
from .exceptions import FrictionFlowError
from .simulation import Trajectory

log = logging.getLogger(__name__)

AXES = {"delta": "regularization.delta", "epsilon": "regularization.eps", "n": "space.n"}


@dataclass(frozen=True)
class SweepPlan:
    """Levels of one approximation parameter on top of a frozen base config.

    ``values`` must have at least three entries and be strictly monotone;
    a list of identical values is also accepted (it reruns one level and
    serves as a determinism check).  The last value is the reference level.
    """

    axis: str
    values: tuple
    base: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {tuple(AXES)}")
        vals = tuple(int(v) if self.axis == "n" else float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 3:
            raise ValueError("a sweep needs at least three levels")
        d = np.diff(vals)
        if not (np.all(d > 0) or np.all(d < 0) or np.all(d == 0)):
            raise ValueError("sweep values must be strictly monotone (or all identical)")
        for v in vals:
            self.level_config(v)

    def level_config(self, value) -> RunConfig:
        return self.base.with_values(**{AXES[self.axis]: value})

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        from .config import from_dict
        unknown = set(d) - {"axis", "values", "base"}
        if unknown:
            raise ValueError(f"unknown plan keys {sorted(unknown)}")
        return cls(d["axis"], tuple(d["values"]), from_dict(d.get("base", {})))

    def to_dict(self) -> dict:
        return {"axis": self.axis, "values": list(self.values), "base": self.base.to_dict()}


# -- distances ---------------------------------------------------------------


def _dts(traj: Trajectory) -> np.ndarray:
    return np.diff(traj.times)


def coefficient_max_distance(a: Trajectory, b: Trajectory) -> float:
    """``max_k |c_a(t_k) - c_b(t_k)|``; spaces must coincide."""
    return float(np.max(np.linalg.norm(a.coeffs - b.coeffs, axis=1)))


def coefficient_l2_distance(a: Trajectory, b: Trajectory) -> float:
    """``(sum_k dt |c_a - c_b|^2)^(1/2)`` over ``k = 1..K``."""
    diff = np.linalg.norm(a.coeffs[1:] - b.coeffs[1:], axis=1)
    return float(np.sqrt(np.sum(_dts(a) * diff ** 2)))


def density_l2_distance(a: Trajectory, b: Trajectory) -> float:
    """``L^2((0,T) x Omega)`` distance of the densities (right-endpoint rule in time)."""
    w = a.domain.cell_area
    sq = np.sum((a.rho[1:] - b.rho[1:]) ** 2, axis=(1, 2)) * w
    return float(np.sqrt(np.sum(_dts(a) * sq)))


def _check_compatible(a: Trajectory, b: Trajectory):
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories use different time grids")
    if a.rho.shape[1:] != b.rho.shape[1:]:
        raise ValueError("trajectories use different density grids")


# -- observables ---------------------------------------------------------------


@dataclass(frozen=True)
class Observable:
    """Smooth space-time window ``psi(t, x, y)``.

    ``psi = scale * s(t) * exp(-dx^2 / (2 sx^2) - (y - yc)^2 / (2 sy^2))`` with
    the periodic distance ``dx`` to ``xc``, widths ``sx = Lx / 8`` and
    ``sy = H / 8``, and ``s(t) = sin(pi t / T)`` (or 1 when ``steady``).
    Centres away from the mid-line keep the window sensitive to modes of
    either parity in ``y``.  ``scale = 0`` gives the zero observable.
    """

    name: str
    xc: float
    yc: float
    steady: bool = False
    scale: float = 1.0

    def __call__(self, t, points, T, length, height=1.0):
        x, y = points[:, 0], points[:, 1]
        s = 1.0 if self.steady else np.sin(np.pi * t / T)
        dx = (x - self.xc + 0.5 * length) % length - 0.5 * length
        sx, sy = length / 8.0, height / 8.0
        return self.scale * s * np.exp(-0.5 * (dx / sx) ** 2 - 0.5 * ((y - self.yc) / sy) ** 2)


def default_observables(length: float, height: float = 1.0, per_direction: int = 4) -> list[Observable]:
    """Windows centred on a ``per_direction x per_direction`` lattice, transient and steady."""
    out = []
    for j in range(per_direction):
        for i in range(per_direction):
            xc = (i + 0.5) * length / per_direction
            yc = (j + 0.5) * height / per_direction
            out.append(Observable(f"w{i}{j}", xc, yc))
            out.append(Observable(f"w{i}{j}_steady", xc, yc, True))
    return out


QUANTITIES = ("rho", "u_x", "u_y", "m_x", "m_y")


def pairings(traj: Trajectory, observables) -> dict:
    """``sum_k dt sum_p w psi q`` for each quantity ``q`` and observable."""
    space = traj.space
    nodes = space.nodes
    w = space.weights
    T = traj.times[-1]
    dts = _dts(traj)
    out = {}
    for obs in observables:
        psi = np.array([obs(t, nodes, T, traj.domain.length, traj.domain.height) for t in traj.times[1:]])
        u = np.einsum("ki,ipa->kpa", traj.coeffs[1:], space.phi)
        r = traj.rho[1:].reshape(len(dts), -1)
        q = {"rho": r, "u_x": u[..., 0], "u_y": u[..., 1], "m_x": r * u[..., 0], "m_y": r * u[..., 1]}
        for name in QUANTITIES:
            out[(name, obs.name)] = float(np.sum(dts * np.sum(psi * q[name] * w, axis=1)))
    return out


@dataclass
class WeakReport:
    """Gaps ``|<q_level, psi> - <q_fine, psi>|`` per level, quantity and observable.

    ``sup_gaps`` holds, for ``rho``, ``u`` and ``m = rho u``, the maximum of
    the gaps over the observable family and vector components (a weak
    seminorm of the difference); ``sup_decreasing`` flags whether it is
    non-increasing from coarse to fine.
    """

    levels: list
    gaps: dict
    decreasing: dict
    sup_gaps: dict = field(default_factory=dict)
    sup_decreasing: dict = field(default_factory=dict)

    def as_dict(self):
        return {"levels": self.levels,
                "gaps": {f"{q}|{o}": v for (q, o), v in self.gaps.items()},
                "decreasing": {f"{q}|{o}": v for (q, o), v in self.decreasing.items()},
                "sup_gaps": self.sup_gaps, "sup_decreasing": self.sup_decreasing}


def weak_consistency(fine: Trajectory, coarse: list, observables=None, levels=None,
                     rtol: float = 1e-12) -> WeakReport:
    """Compare smooth-window pairings of coarse levels with the fine level.

    ``decreasing`` is true when the gap sequence (coarse to fine) is
    non-increasing, with gaps below ``rtol`` times the pairing magnitude
    treated as zero.
    """
    if observables is None:
        observables = default_observables(fine.domain.length, fine.domain.height)
    ref = pairings(fine, observables)
    gaps = {key: [] for key in ref}
    for traj in coarse:
        _check_compatible(fine, traj)
        p = pairings(traj, observables)
        for key in ref:
            gaps[key].append(abs(p[key] - ref[key]))
    dec = {}
    for key, g in gaps.items():
        floor = rtol * max(1.0, abs(ref[key]))
        g = np.where(np.array(g) <= floor, 0.0, g)
        dec[key] = bool(np.all(np.diff(g) <= 0)) if len(g) > 1 else True
    sup, sup_dec = {}, {}
    for q in ("rho", "u", "m"):
        keys = [k for k in gaps if k[0].split("_")[0] == q]
        sup[q] = [float(max(gaps[k][i] for k in keys)) for i in range(len(coarse))]
        sup_dec[q] = bool(np.all(np.diff(sup[q]) <= 0))
    lv = list(levels) if levels is not None else list(range(len(coarse)))
    return WeakReport(lv, gaps, dec, sup, sup_dec)


# -- boundary Young measures ---------------------------------------------------


@dataclass
class StationMeasure:
    station: int
    atoms: np.ndarray
    edges: np.ndarray
    masses: np.ndarray

    def integrate(self, fn) -> float:
        """``int fn(z) d nu(z)`` using the atoms (equal weights)."""
        return float(np.mean(fn(self.atoms)))

    def integrate_histogram(self, fn) -> float:
        centres = 0.5 * (self.edges[1:] + self.edges[:-1])
        return float(np.dot(self.masses, fn(centres)))


def histogram(samples, bins: int = 64, pad: float = 0.1):
    """Normalised histogram over the sample range widened by ``pad`` on each side."""
    s = np.asarray(samples, dtype=float)
    lo, hi = float(s.min()), float(s.max())
    width = hi - lo
    if width <= 0:
        width = max(abs(lo), 1.0) * 1e-6
        lo, hi = lo - width / 2, hi + width / 2
    edges = np.linspace(lo - pad * width, hi + pad * width, bins + 1)
    counts, _ = np.histogram(s, edges)
    masses = counts / counts.sum()
    return edges, masses


def station_measures(traj: Trajectory, stations, bins: int = 64) -> list[StationMeasure]:
    """Empirical measures of the tangential trace at the given stations over ``t_1..t_K``."""
    stations = list(stations)
    if not stations:
        raise ValueError("station set is empty")
    trace = traj.coeffs[1:] @ traj.space.phi_trace
    out = []
    for s in stations:
        atoms = trace[:, s]
        edges, masses = histogram(atoms, bins)
        out.append(StationMeasure(int(s), atoms, edges, masses))
    return out


@dataclass
class BoundaryMeasure:
    stations: list
    measures: list
    identification_error: float
    histogram_error: float
    drift: list
    averages: list

    def as_dict(self):
        return {
            "stations": self.stations,
            "histograms": [{"station": m.station, "edges": m.edges.tolist(),
                            "masses": m.masses.tolist()} for m in self.measures],
            "identification_error": self.identification_error,
            "histogram_error": self.histogram_error,
            "drift": self.drift,
            "averages": self.averages,
        }


def boundary_young_measure(runs: list, stations, phi=None, bins: int = 64) -> BoundaryMeasure:
    """Boundary measures from the finest run plus drift across the other levels.

    ``phi`` holds one test-trace value per station (default 0).  The
    identification compares the time average of ``|phi + u(t, y)|`` with
    ``int |phi + z| d nu_y(z)``; both use the same samples, so the check
    validates the pipeline exactly.  ``drift`` gives, per level, the mean
    over stations of the 1-Wasserstein distance to the finest measure, and
    ``averages`` the mean of ``int |phi + z| d nu`` over stations.
    """
    if len(runs) < 1:
        raise ValueError("need at least one run")
    stations = list(stations)
    if not stations:
        raise ValueError("station set is empty")
    phi = np.zeros(len(stations)) if phi is None else np.broadcast_to(np.asarray(phi, float), (len(stations),))
    fine = runs[-1]
    meas = station_measures(fine, stations, bins)
    trace = fine.coeffs[1:] @ fine.space.phi_trace
    ident, hist = 0.0, 0.0
    for m, ph in zip(meas, phi):
        direct = float(np.mean(np.abs(ph + trace[:, m.station])))
        ident = max(ident, abs(direct - m.integrate(lambda z: np.abs(ph + z))))
        hist = max(hist, abs(direct - m.integrate_histogram(lambda z: np.abs(ph + z))))
    drift, avgs = [], []
    for traj in runs:
        lm = station_measures(traj, stations, bins)
        drift.append(float(np.mean([wasserstein_distance(a.atoms, b.atoms) for a, b in zip(lm, meas)])))
        avgs.append(float(np.mean([a.integrate(lambda z, ph=ph: np.abs(ph + z)) for a, ph in zip(lm, phi)])))
    return BoundaryMeasure(stations, meas, ident, hist, drift, avgs)


# -- defects -------------------------------------------------------------------


@dataclass
class DefectEstimate:
    """Window-averaged Reynolds-stress and energy defects of one level against the fine level.

    ``R`` has shape ``(time windows, y windows, x windows, 2, 2)`` and ``E``
    the same without the tensor axes.
    """

    R: np.ndarray
    E: np.ndarray
    ratio_min: float | None
    ratio_max: float | None
    min_eigenvalue: float
    threshold: float

    @property
    def max_E(self) -> float:
        return float(self.E.max())

    def as_dict(self):
        return {"max_E": self.max_E, "min_E": float(self.E.min()),
                "max_trace_R": float(np.trace(self.R, axis1=-2, axis2=-1).max()),
                "min_eigenvalue_R": self.min_eigenvalue,
                "ratio_bracket": [self.ratio_min, self.ratio_max], "threshold": self.threshold}


def _window_mean(a: np.ndarray, windows: tuple) -> np.ndarray:
    """Average over ``(time, y, x)`` blocks; trailing axes are kept."""
    K, ny, nx = a.shape[:3]
    wt, wy, wx = windows
    kt = np.array_split(np.arange(K), wt)
    ky = np.array_split(np.arange(ny), wy)
    kx = np.array_split(np.arange(nx), wx)
    out = np.empty((wt, wy, wx) + a.shape[3:])
    for i, it in enumerate(kt):
        for j, jy in enumerate(ky):
            for k, jx in enumerate(kx):
                out[i, j, k] = a[np.ix_(it, jy, jx)].mean(axis=(0, 1, 2))
    return out


def defect_estimate(fine: Trajectory, level: Trajectory, windows=(4, 4, 4),
                    threshold: float = 1e-10) -> DefectEstimate:
    """Bregman defects of ``level`` relative to the reference ``fine``.

    Pointwise, with ``v = u_level - u_fine``::

        R = rho_level v (x) v + [p(rho_level) - p(rho) - p'(rho)(rho_level - rho)] Id
        E = 1/2 rho_level |v|^2 + P(rho_level) - P(rho) - P'(rho)(rho_level - rho)

    These are the second-order remainders of the convex maps
    ``(rho, m) -> m (x) m / rho + p(rho) Id`` and ``-> |m|^2 / (2 rho) + P(rho)``,
    so both vanish when the levels agree and are non-negative.  Their window
    averages are the computable shadow of the defect measures; the ratio
    ``tr R / E`` is reported wherever ``E > threshold``.
    """
    _check_compatible(fine, level)
    law = fine.data.pressure
    K = fine.steps
    ny, nx = fine.domain.ny, fine.domain.nx
    uf = np.einsum("ki,ipa->kpa", fine.coeffs[1:], fine.space.phi).reshape(K, ny, nx, 2)
    ul = np.einsum("ki,ipa->kpa", level.coeffs[1:], level.space.phi).reshape(K, ny, nx, 2)
    rf, rl = fine.rho[1:], level.rho[1:]
    v = ul - uf
    dr = rl - rf
    bp = law.pressure(rl) - law.pressure(rf) - law.pressure_derivative(rf) * dr
    bP = law.potential(rl) - law.potential(rf) - law.potential_derivative(rf) * dr
    R = rl[..., None, None] * v[..., :, None] * v[..., None, :] + bp[..., None, None] * np.eye(2)
    E = 0.5 * rl * np.sum(v * v, axis=-1) + bP
    Rw = _window_mean(R, windows)
    Ew = _window_mean(E, windows)
    trR = np.trace(Rw, axis1=-2, axis2=-1)
    mask = Ew > threshold
    ratio = trR[mask] / Ew[mask]
    eig = float(np.linalg.eigvalsh(Rw.reshape(-1, 2, 2)).min())
    return DefectEstimate(Rw, Ew, float(ratio.min()) if ratio.size else None,
                          float(ratio.max()) if ratio.size else None, eig, threshold)


def compatibility_bracket(law, dim: int = 2) -> tuple[float, float]:
    """Bracket of ``tr R / E`` for the Bregman defects of an isentropic law."""
    c = dim * (law.gamma - 1.0)
    return min(2.0, c), max(2.0, c)


# -- sweeps ----------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    axis: str
    values: list
    distances: dict
    rates: dict
    monotone: dict
    failures: dict
    extras: dict = field(default_factory=dict)

    def as_dict(self):
        return {"axis": self.axis, "values": self.values, "distances": self.distances,
                "rates": self.rates, "monotone": self.monotone, "failures": self.failures,
                "extras": self.extras}


def empirical_rates(distances, values) -> list:
    """``log(d_i / d_{i+1}) / log(|v_i / v_{i+1}|)`` for consecutive pairs."""
    out = []
    for i in range(len(distances) - 1):
        d0, d1 = distances[i], distances[i + 1]
        v0, v1 = values[i], values[i + 1]
        if d0 > 0 and d1 > 0 and v0 != v1 and v0 > 0 and v1 > 0:
            out.append(float(np.log(d0 / d1) / abs(np.log(v0 / v1))))
        else:
            out.append(None)
    return out


def _strictly_decreasing(d) -> bool:
    return bool(len(d) > 1 and np.all(np.diff(d) < 0))


def level_distances(axis: str, trajs: list, observables=None) -> dict:
    """Distances between consecutive levels for the metrics of the given axis."""
    pairs = list(zip(trajs[:-1], trajs[1:]))
    for a, b in pairs:
        _check_compatible(a, b)
    if axis == "delta":
        return {"u_max_coeff": [coefficient_max_distance(a, b) for a, b in pairs]}
    if axis == "epsilon":
        return {"rho_l2": [density_l2_distance(a, b) for a, b in pairs],
                "u_l2_coeff": [coefficient_l2_distance(a, b) for a, b in pairs]}
    if observables is None:
        observables = default_observables(trajs[0].domain.length, trajs[0].domain.height)
    ps = [pairings(t, observables) for t in trajs]
    out = {}
    for q in ("rho", "u", "m"):
        keys = [k for k in ps[0] if k[0].split("_")[0] == q]
        out[f"weak_{q}"] = [max(abs(a[k] - b[k]) for k in keys) for a, b in zip(ps[:-1], ps[1:])]
    return out


def run_sweep(plan: SweepPlan, runner=run_config):
    """Run every level of ``plan`` and compare consecutive levels.

    Returns ``(report, trajectories)``; a failed level is recorded in
    ``report.failures`` and excluded from the distance computations, and
    its trajectory entry is ``None``.
    """
    trajs, failures = [], {}
    for i, v in enumerate(plan.values):
        cfg = plan.level_config(v)
        try:
            traj = runner(cfg)
            if traj.failure:
                raise FrictionFlowError(traj.failure)
            trajs.append(traj)
        except FrictionFlowError as exc:
            log.warning("level %d (%s=%s) failed: %s", i, plan.axis, v, exc)
            failures[str(i)] = f"{type(exc).__name__}: {exc}"
            trajs.append(None)
    ok = [t for t in trajs if t is not None]
    ok_vals = [v for v, t in zip(plan.values, trajs) if t is not None]
    distances = level_distances(plan.axis, ok) if len(ok) >= 2 else {}
    mid_values = ok_vals[1:]
    rates = {k: empirical_rates(d, mid_values) for k, d in distances.items()}
    monotone = {k: _strictly_decreasing(d) for k, d in distances.items()}
    report = ConvergenceReport(plan.axis, list(plan.values), distances, rates, monotone, failures)
    return report, trajs
