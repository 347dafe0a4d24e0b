"""Run artifacts: atomic writing, integrity checks and re-verification.

An artifact directory holds

``manifest.json``
    schema version, package version, config echo, run status and sha256
    checksums of the other files.  No wall-clock data is stored, so equal
    inputs give byte-identical artifacts.
``ledger.csv``
    energy ledger rows, one per time level, floats written with ``repr``.
``snapshots.json``
    density grids and velocity coefficients at every time level plus the
    per-step solver statistics, with explicit shape metadata.
``reports.json``
    diagnostics reports.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_problem, diagnostics_options, from_dict
from .diagnostics import LEDGER_COLUMNS, energy_ledger, run_diagnostics
from .exceptions import ArtifactError, ConfigError
from .simulation import Trajectory

SCHEMA_VERSION = "1.0"
FILES = ("ledger.csv", "snapshots.json", "reports.json")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to a temporary sibling file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _clean(x):
    """JSON-safe copy: numpy to builtin types, non-finite floats to ``None``."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


def ledger_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LEDGER_COLUMNS)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


def snapshots_payload(traj: Trajectory) -> dict:
    dom = traj.domain
    return {
        "shape": {"steps": traj.steps, "ny": dom.ny, "nx": dom.nx, "n": traj.space.n},
        "times": traj.times,
        "rho": traj.rho,
        "coeffs": traj.coeffs,
        "iterations": traj.iterations,
        "ratios": traj.ratios,
        "failure": traj.failure,
    }


def write_artifact(out_dir, cfg: RunConfig, traj: Trajectory, reports: dict | None,
                   status: str = "ok") -> dict:
    """Write all files of a run and return the manifest."""
    out = Path(out_dir)
    texts = {
        "ledger.csv": ledger_csv(energy_ledger(traj)),
        "snapshots.json": dumps(snapshots_payload(traj)),
        "reports.json": dumps(reports or {}),
    }
    for name, text in texts.items():
        atomic_write(out / name, text)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "config": cfg.to_dict(),
        "status": status,
        "failure": traj.failure,
        "checksums": {name: sha256(text) for name, text in texts.items()},
    }
    atomic_write(out / "manifest.json", dumps(manifest))
    return manifest


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ArtifactError(f"missing artifact file {path}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from None


def read_manifest(art_dir) -> dict:
    text = _read(Path(art_dir) / "manifest.json")
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"manifest is not valid JSON: {exc}") from None
    version = str(manifest.get("schema_version", ""))
    try:
        major = int(version.split(".")[0])
    except ValueError:
        raise ArtifactError(f"manifest has no usable schema version ({version!r})") from None
    if major > int(SCHEMA_VERSION.split(".")[0]):
        raise ArtifactError(f"artifact schema {version} is newer than supported {SCHEMA_VERSION}")
    return manifest


def load_artifact(art_dir):
    """Read and integrity-check an artifact; returns ``(manifest, config, trajectory, texts)``."""
    art = Path(art_dir)
    manifest = read_manifest(art)
    texts = {}
    for name in FILES:
        text = _read(art / name)
        expected = manifest.get("checksums", {}).get(name)
        if expected != sha256(text):
            raise ArtifactError(f"{name} failed its checksum (truncated or modified)")
        texts[name] = text
    try:
        cfg = from_dict(manifest["config"])
    except (KeyError, ConfigError) as exc:
        raise ArtifactError(f"manifest config is unusable: {exc}") from None
    try:
        snap = json.loads(texts["snapshots.json"])
        shape = snap["shape"]
        K, ny, nx, n = shape["steps"], shape["ny"], shape["nx"], shape["n"]
        times = np.asarray(snap["times"], dtype=float).reshape(K + 1)
        rho = np.asarray(snap["rho"], dtype=float).reshape(K + 1, ny, nx)
        coeffs = np.asarray(snap["coeffs"], dtype=float).reshape(K + 1, n)
        its = np.asarray(snap["iterations"], dtype=int).reshape(K)
        ratios = np.array([np.nan if r is None else r for r in snap["ratios"]], dtype=float).reshape(K)
    except (KeyError, ValueError, TypeError) as exc:
        raise ArtifactError(f"snapshots are malformed: {exc}") from None
    data, _, _ = build_problem(cfg)
    traj = Trajectory(data, times, rho, coeffs, its, ratios, snap.get("failure"))
    return manifest, cfg, traj, texts


def verify_artifact(art_dir) -> dict:
    """Recompute the ledger and diagnostics from stored states.

    Returns a dict with ``ledger_identical`` (byte equality with the stored
    CSV), the fresh diagnostics ``reports`` and ``passed``.
    """
    manifest, cfg, traj, texts = load_artifact(art_dir)
    fresh = ledger_csv(energy_ledger(traj))
    same = fresh == texts["ledger.csv"]
    reports = run_diagnostics(traj, **diagnostics_options(cfg)) if traj.steps else {"passed": True}
    return {"ledger_identical": same, "status": manifest.get("status"), "reports": reports,
            "passed": bool(same and reports.get("passed", False))}
