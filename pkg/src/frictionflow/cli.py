"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 diagnostics failure, 5 I/O or artifact integrity error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .artifacts import atomic_write, dumps, verify_artifact, write_artifact
from .config import diagnostics_options, load_config, run_config
from .constitutive import MollifiedPotential, PotentialSpec, conjugate, sym_basis
from .diagnostics import run_diagnostics
from .exceptions import ArtifactError, ConfigError, ConjugateError, FrictionFlowError
from .limits import (SweepPlan, boundary_young_measure, compatibility_bracket, defect_estimate,
                     run_sweep, weak_consistency)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DIAGNOSTICS, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("frictionflow")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    traj = run_config(cfg, raise_on_failure=False)
    if traj.failure:
        write_artifact(args.out, cfg, traj, {}, status="solver_failure")
        print(f"solver failure: {traj.failure}", file=sys.stderr)
        return EXIT_SOLVER
    reports = run_diagnostics(traj, **diagnostics_options(cfg)) if cfg.diagnostics.enabled else {}
    write_artifact(args.out, cfg, traj, reports)
    if reports and not reports["passed"]:
        print("diagnostics failed; see reports.json", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    print(f"run complete: {traj.steps} steps written to {args.out}")
    return EXIT_OK


def sweep_extras(trajs, values) -> dict:
    """Weak consistency, boundary measures and defects against the last level."""
    ok = [(v, t) for v, t in zip(values, trajs) if t is not None]
    if len(ok) < 2:
        return {}
    fine = ok[-1][1]
    coarse = [t for _, t in ok[:-1]]
    weak = weak_consistency(fine, coarse, levels=[v for v, _ in ok[:-1]])
    stations = list(range(0, fine.space.trace.size, max(1, fine.space.trace.size // 8)))
    ym = boundary_young_measure([t for _, t in ok], stations)
    defects = [defect_estimate(fine, t).as_dict() for t in coarse]
    return {"weak": weak.as_dict(), "young_measure": ym.as_dict(), "defects": defects,
            "defect_levels": [v for v, _ in ok[:-1]],
            "compatibility_bracket": list(compatibility_bracket(fine.data.pressure))}


def cmd_sweep(args) -> int:
    try:
        with open(args.plan, encoding="utf-8") as fh:
            raw = json.load(fh)
        plan = SweepPlan.from_dict(raw)
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"invalid sweep plan: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read plan: {exc}", file=sys.stderr)
        return EXIT_IO
    report, trajs = run_sweep(plan)
    out = Path(args.out)
    for i, (v, traj) in enumerate(zip(plan.values, trajs)):
        if traj is not None:
            write_artifact(out / f"level_{i}", plan.level_config(v), traj, {})
    report.extras = sweep_extras(trajs, list(plan.values))
    atomic_write(out / "sweep_report.json", dumps({"plan": plan.to_dict(), "report": report.as_dict()}))
    if report.failures:
        print(f"{len(report.failures)} level(s) failed", file=sys.stderr)
        return EXIT_SOLVER
    print(f"sweep over {plan.axis} complete: {len(trajs)} levels written to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        result = verify_artifact(args.artifact)
    except ArtifactError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps({"ledger_identical": result["ledger_identical"],
                      "diagnostics_passed": result["reports"].get("passed"),
                      "status": result["status"]}))
    return EXIT_OK if result["passed"] else EXIT_DIAGNOSTICS


def parse_grid(spec: str) -> np.ndarray:
    """``start:stop:num`` as a linspace."""
    try:
        a, b, n = spec.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like start:stop:num, got {spec!r}") from None


def cmd_conjugate_table(args) -> int:
    try:
        spec = PotentialSpec(args.kind, mu=args.mu, lam=args.lam, q=args.q)
        moll = MollifiedPotential(spec, args.delta, exact_quadratic=False)
    except ValueError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    g = args.grid
    coords = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    D = np.einsum("kj,jab->kab", coords, sym_basis(2))
    try:
        fstar = conjugate(spec, D)
    except ConjugateError as exc:
        print(exc, file=sys.stderr)
        return EXIT_DIAGNOSTICS
    F, Fd = spec.value(D), moll.value(D)
    lines = ["d11,d22,d12,F,F_delta,F_star"]
    for Z, a, b, c in zip(D, F, Fd, fstar):
        lines.append(",".join(repr(float(v)) for v in (Z[0, 0], Z[1, 1], Z[0, 1], a, b, c)))
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="frictionflow", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one configuration and write an artifact")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("--plan", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="recompute ledger and diagnostics of an artifact")
    v.add_argument("artifact")
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("conjugate-table", help="tabulate F, F_delta and F* on a tensor grid")
    c.add_argument("--kind", required=True, choices=("newtonian", "powerlaw"))
    c.add_argument("--grid", required=True, type=parse_grid,
                   help="start:stop:num per independent tensor coordinate")
    c.add_argument("--mu", type=float, default=1.0)
    c.add_argument("--lam", type=float, default=0.0)
    c.add_argument("--q", type=float, default=2.0)
    c.add_argument("--delta", type=float, default=0.1)
    c.add_argument("--out")
    c.set_defaults(func=cmd_conjugate_table)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FrictionFlowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
