"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also collected in the terminal summary.
"""

import json
import time

import numpy as np
import pytest

from frictionflow.cli import main
from frictionflow.config import run_config
from frictionflow.constitutive import (MollifiedPotential, PotentialSpec, fenchel_residual,
                                       grad_j_delta, j_delta, random_sym)
from frictionflow.density import ContinuityParams, DensityOperator, advance_density
from frictionflow.diagnostics import (bounds_report, dissipation_signs, energy_ledger,
                                      entropy_inequality, korn_ratio, korn_summary,
                                      momentum_inequality_check)
from frictionflow.geometry import ChannelDomain
from frictionflow.limits import (SweepPlan, boundary_young_measure, compatibility_bracket,
                                 defect_estimate, run_sweep, weak_consistency)

from conftest import REFERENCE_DTS

SAMPLES = 10_000


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def fmt(xs):
    return "[" + ", ".join(f"{x:.3g}" for x in xs) + "]"


# 1 -----------------------------------------------------------------------------------


def test_01_regularizer_properties(acceptance):
    rng = np.random.default_rng(101)
    with Clock() as clk:
        worst = {"grad": 0.0, "abs": 0.0, "mono": 0.0, "convex": 0.0}
        for delta in (1e-3, 0.1, 1.0):
            v = rng.normal(scale=rng.choice([0.01, 1.0, 5.0], size=(SAMPLES, 1)), size=(SAMPLES, 2))
            w = rng.normal(size=(SAMPLES, 2))
            g = rng.uniform(0.0, 5.0, SAMPLES)
            jv, gv = j_delta(delta, v), grad_j_delta(delta, v)
            worst["grad"] = max(worst["grad"], float(np.max(np.linalg.norm(gv, axis=1) - 1.0)))
            worst["abs"] = max(worst["abs"], float(np.max(np.abs(jv - np.linalg.norm(v, axis=1)) - delta)))
            worst["mono"] = max(worst["mono"], float(np.max(-np.sum(gv * v, axis=1))))
            lhs = g * np.sum(gv * w, axis=1)
            rhs = g * (j_delta(delta, v + w) - jv)
            worst["convex"] = max(worst["convex"], float(np.max(lhs - rhs)))
        # mollified potentials: zero at the origin and midpoint convexity
        fd_zero, fd_convex = 0.0, -np.inf
        for spec in (PotentialSpec("powerlaw", mu=1.0, q=1.5, lam=0.5),
                     PotentialSpec("powerlaw", mu=0.5, q=3.0),
                     PotentialSpec("newtonian", mu=1.0, lam=0.3)):
            moll = MollifiedPotential(spec, 0.2, exact_quadratic=False)
            fd_zero = max(fd_zero, abs(float(moll.value(np.zeros((2, 2))))))
            D1, D2 = random_sym(rng, SAMPLES), random_sym(rng, SAMPLES)
            gap = moll.value(0.5 * (D1 + D2)) - 0.5 * (moll.value(D1) + moll.value(D2))
            fd_convex = max(fd_convex, float(gap.max()))
        quad = PotentialSpec("newtonian", mu=1.3, lam=0.4)
        D = random_sym(rng, SAMPLES, scale=2.0)
        fixed = float(np.max(np.abs(MollifiedPotential(quad, 0.3, exact_quadratic=False).value(D) - quad.value(D))))
    ok = (worst["grad"] <= 1e-12 and worst["abs"] <= 1e-12 and worst["mono"] <= 1e-12
          and worst["convex"] <= 1e-12 and fd_zero <= 1e-12 and fd_convex <= 1e-12
          and fixed <= 1e-10 and clk.seconds < 10)
    acceptance(1, "regularizer properties", ok,
               f"|dj|-1 {worst['grad']:.1e}, |j-|v||-delta {worst['abs']:.1e}, convexity slack "
               f"{worst['convex']:.1e}, F_delta(0) {fd_zero:.1e}, midpoint gap {fd_convex:.1e}, "
               f"quadratic fixed point {fixed:.1e}, {clk.seconds:.1f}s")


# 2 -----------------------------------------------------------------------------------


def test_02_fenchel_young(acceptance):
    rng = np.random.default_rng(202)
    with Clock() as clk:
        newt = [PotentialSpec("newtonian", mu=0.7, lam=0.2), PotentialSpec("newtonian", mu=1.5, lam=-0.5)]
        power = [PotentialSpec("powerlaw", mu=1.0, q=1.5, lam=0.5), PotentialSpec("powerlaw", mu=0.5, q=3.0, lam=0.2)]
        eq_newt = max(float(np.max(np.abs(fenchel_residual(s, D, s.gradient(D)))))
                      for s in newt for D in [random_sym(rng, 100)])
        eq_pow = max(float(np.max(np.abs(fenchel_residual(s, D, s.gradient(D)))))
                     for s in power for D in [random_sym(rng, 100)])
        ineq = min(float(np.min(fenchel_residual(s, random_sym(rng, SAMPLES), random_sym(rng, SAMPLES))))
                   for s in newt + power)
    ok = eq_newt <= 1e-8 and eq_pow <= 1e-5 and ineq >= -1e-12 and clk.seconds < 30
    acceptance(2, "Fenchel-Young", ok,
               f"newtonian {eq_newt:.1e}, powerlaw {eq_pow:.1e}, min inequality {ineq:.1e}, {clk.seconds:.1f}s")


# 3 -----------------------------------------------------------------------------------


def test_03_manufactured_density(acceptance):
    eps, T = 0.05, 0.2
    errs, drift = [], 0.0
    with Clock() as clk:
        for n in (32, 64):
            dom = ChannelDomain(1.0, 1.0, n, n)
            _, Y = dom.grid()
            rho = 1 + 0.1 * np.cos(np.pi * Y / dom.height)
            dt = dom.hy ** 2
            K = int(round(T / dt))
            params, op = ContinuityParams(eps, dt), DensityOperator(dom)
            zero = (np.zeros((n, n)), np.zeros((n - 1, n)))
            m0 = dom.integrate(rho)
            for _ in range(K):
                rho = advance_density(rho, zero, params, dom, op).values
                drift = max(drift, abs(dom.integrate(rho) - m0) / m0)
            exact = 1 + 0.1 * np.exp(-eps * np.pi ** 2 * K * dt) * np.cos(np.pi * Y / dom.height)
            errs.append(float(np.sqrt(np.sum((rho - exact) ** 2) * dom.cell_area)))
    ratio = errs[0] / errs[1]
    ok = ratio >= 3.5 and drift <= 1e-12 and clk.seconds < 20
    acceptance(3, "manufactured density solution", ok,
               f"L2 errors {fmt(errs)}, ratio {ratio:.2f}, mass drift {drift:.1e}, {clk.seconds:.1f}s")


# 4, 5 -----------------------------------------------------------------------------------


def test_04_energy_ledger(acceptance, reference_runs, reference_seconds):
    with Clock() as clk:
        ledgers = [energy_ledger(reference_runs[dt]) for dt in REFERENCE_DTS]
    residuals = [abs(rows[-1].residual) for rows in ledgers]
    factors = [a / b for a, b in zip(residuals[:-1], residuals[1:])]
    signs = [dissipation_signs(rows, tol=1e-12) for rows in ledgers]
    worst = min(min(s["min_values"].values()) for s in signs)
    seconds = reference_seconds + clk.seconds
    ok = all(f >= 1.8 for f in factors) and all(s["passed"] for s in signs) and seconds < 120
    acceptance(4, "energy ledger closure", ok,
               f"|residual| {fmt(residuals)}, halving factors {fmt(factors)}, "
               f"min dissipation {worst:.1e}, {seconds:.1f}s")


def test_05_density_bounds(acceptance, reference_run):
    rep = bounds_report(reference_run, tol=1e-8)
    acceptance(5, "density bounds", rep.passed,
               f"violation {rep.violation:.1e}, margin {rep.margin:.3g}, tolerance {rep.tolerance:.0e}")


# 6 -----------------------------------------------------------------------------------


def test_06_momentum_inequality(acceptance, reference_run):
    with Clock() as clk:
        reports = momentum_inequality_check(reference_run, tol=1e-8)
    worst = min(r.margin / r.scale for r in reports)
    minus_u = next(r for r in reports if r.test_id == "minus_u")
    ok = len(reports) >= 22 and all(r.passed for r in reports) and minus_u.passed and clk.seconds < 60
    acceptance(6, "momentum inequality battery", ok,
               f"{sum(r.passed for r in reports)}/{len(reports)} pass, worst margin/scale {worst:.1e}, "
               f"minus_u margin {minus_u.margin:.1e}, {clk.seconds:.1f}s")


# 7 -----------------------------------------------------------------------------------


def test_07_fixed_point_contraction(acceptance, reference_runs, reference_seconds):
    ratios = [float(np.nanmean(reference_runs[dt].ratios)) for dt in REFERENCE_DTS]
    iters = [float(reference_runs[dt].iterations.mean()) for dt in REFERENCE_DTS]
    halving = [b / a for a, b in zip(ratios[:-1], ratios[1:])]
    ok = (all(0.375 <= h <= 0.625 for h in halving) and all(np.diff(iters) <= 0)
          and reference_seconds < 120)
    acceptance(7, "fixed-point contraction", ok,
               f"mean ratios {fmt(ratios)}, halving factors {fmt(halving)}, mean iterations {fmt(iters)}")


# 8, 9, 10 ---------------------------------------------------------------------------------


def test_08_epsilon_sweep(acceptance, reference_config):
    with Clock() as clk:
        report, trajs = run_sweep(SweepPlan("epsilon", (0.1, 0.05, 0.025, 0.0125), reference_config))
        entropy = [entropy_inequality(t, tol=1e-6) for t in trajs]
    d_rho, d_u = report.distances["rho_l2"], report.distances["u_l2_coeff"]
    rates = report.rates["rho_l2"] + report.rates["u_l2_coeff"]
    ok = (not report.failures and report.monotone["rho_l2"] and report.monotone["u_l2_coeff"]
          and all(r is not None and r > 0 for r in rates) and all(e["passed"] for e in entropy)
          and clk.seconds < 300)
    acceptance(8, "epsilon sweep", ok,
               f"rho {fmt(d_rho)}, u {fmt(d_u)}, rates {fmt(rates)}, "
               f"max entropy excess {max(e['max_excess'] for e in entropy):.1e}, {clk.seconds:.0f}s")


def test_09_delta_sweep(acceptance, reference_config):
    with Clock() as clk:
        report, _ = run_sweep(SweepPlan("delta", (0.2, 0.1, 0.05, 0.025), reference_config))
    d = report.distances["u_max_coeff"]
    ok = not report.failures and report.monotone["u_max_coeff"] and clk.seconds < 300
    acceptance(9, "delta sweep", ok, f"coefficient distances {fmt(d)}, {clk.seconds:.0f}s")


def test_10_n_sweep(acceptance, reference_config):
    with Clock() as clk:
        report, trajs = run_sweep(SweepPlan("n", (8, 16, 32), reference_config))
        fine, coarse = trajs[-1], trajs[:-1]
        weak = weak_consistency(fine, coarse, levels=[8, 16])
        stations = range(0, fine.space.trace.size, 2)
        ym = boundary_young_measure(trajs, stations)
        defects = [defect_estimate(fine, t) for t in coarse]
    max_E = [d.max_E for d in defects]
    lo, hi = compatibility_bracket(fine.data.pressure)
    brackets = [(d.ratio_min, d.ratio_max) for d in defects]
    in_bracket = all(a is not None and np.isfinite(a) and np.isfinite(b) and 0 < a and
                     lo - 1e-9 <= a <= b <= hi + 1e-9 for a, b in brackets)
    per_obs = sum(weak.decreasing.values())
    ok = (not report.failures and all(weak.sup_decreasing.values()) and ym.identification_error <= 1e-12
          and all(np.diff(max_E) < 0) and in_bracket and clk.seconds < 600)
    gaps = ", ".join(f"{q} {fmt(g)}" for q, g in weak.sup_gaps.items())
    acceptance(10, "n sweep weak consistency", ok,
               f"sup gaps {gaps}; per-observable monotone {per_obs}/{len(weak.decreasing)}; "
               f"identification {ym.identification_error:.1e}; max E {fmt(max_E)}; "
               f"trR/E in {fmt([x for b in brackets for x in b])} vs [{lo:g}, {hi:g}]; {clk.seconds:.0f}s")


# 11 -----------------------------------------------------------------------------------


def test_11_korn(acceptance, reference_config, reference_run):
    with Clock() as clk:
        coarse = korn_summary(korn_ratio(reference_run.coeffs, reference_run.rho, reference_run.space))
        cfg = reference_config.with_values(**{"domain.nx": 2 * reference_config.domain.nx,
                                              "domain.ny": 2 * reference_config.domain.ny})
        fine_run = run_config(cfg)
        fine = korn_summary(korn_ratio(fine_run.coeffs, fine_run.rho, fine_run.space))
    change = max(abs(fine[k] / coarse[k] - 1) for k in ("max", "median"))
    ok = coarse["spread"] <= 10 and fine["spread"] <= 10 and change <= 0.10 and clk.seconds < 60
    acceptance(11, "Korn ratio", ok,
               f"max/median {coarse['spread']:.3f} -> {fine['spread']:.3f}, relative change "
               f"{change:.1e}, {clk.seconds:.1f}s")


# 12 -----------------------------------------------------------------------------------


def test_12_determinism(acceptance, reference_config, tmp_path, capsys):
    cfg = tmp_path / "reference.json"
    cfg.write_text(json.dumps(reference_config.to_dict()))
    with Clock() as clk:
        codes = [main(["run", "--config", str(cfg), "--out", str(tmp_path / name)]) for name in ("a", "b")]
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        identical = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
        capsys.readouterr()
        vcode = main(["verify", str(tmp_path / "a")])
        verdict = json.loads(capsys.readouterr().out)
    ok = codes == [0, 0] and identical and vcode == 0 and verdict["ledger_identical"] and clk.seconds < 60
    acceptance(12, "determinism", ok,
               f"exit codes {codes}, {len(files)} files byte-identical {identical}, "
               f"verify ledger identical {verdict['ledger_identical']}, {clk.seconds:.1f}s")
