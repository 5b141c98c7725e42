"""Serialization of solutions, manifests and version stamps."""

from __future__ import annotations

import json
import subprocess
from importlib import metadata
from pathlib import Path

import numpy as np

from .graphon import SpectralDecomposition
from .ode import Path as TimePath
from .ode import TimeGrid
from .solver import MeanFieldSolution


def version_string() -> str:
    """Package version, extended by ``git describe`` when run from a checkout."""
    try:
        base = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{base}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items() if not str(k).startswith("_")}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2) + "\n")


def solution_manifest(sol: MeanFieldSolution, **extra) -> dict:
    d = sol.decomposition
    return {
        "mode": sol.mode,
        "method": sol.method,
        "rank": sol.rank,
        "eigenvalues": None if d is None else d.eigenvalues.tolist(),
        "masses": None if sol.masses is None else sol.masses.tolist(),
        "residuals": sol.residuals,
        "converged": bool(sol.converged),
        "iterations": int(sol.iterations),
        "gap": float(sol.gap),
        "dt": sol.grid.dt,
        "T": sol.grid.T,
        "version": version_string(),
        "terminal_condition": "s(T) = Q_T H (z(T) + eta); decoupling terminals use I (x) Q_T H",
        **extra,
    }


def save_solution(sol: MeanFieldSolution, directory, **manifest_extra) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    grid = sol.grid
    TimePath(grid, sol.pi).to_csv(out / "pi.csv")
    if sol.breve_s is not None:
        TimePath(grid, sol.breve_s).to_csv(out / "breve_s.csv")
    tag = "ell" if sol.mode == "spectral" else "node"
    for i in range(sol.rank):
        TimePath(grid, sol.z[:, i]).to_csv(out / f"z_{tag}_{i + 1}.csv")
        TimePath(grid, sol.s[:, i]).to_csv(out / f"s_{tag}_{i + 1}.csv")
    manifest = solution_manifest(sol, **manifest_extra)
    if sol.decomposition is not None:
        manifest["decomposition"] = sol.decomposition.to_json()
    if sol.coupling is not None:
        manifest["coupling"] = sol.coupling.tolist()
    write_json(out / "manifest.json", manifest)
    return out


def load_solution(directory) -> MeanFieldSolution:
    src = Path(directory)
    man = json.loads((src / "manifest.json").read_text())
    pi = TimePath.from_csv(src / "pi.csv")
    grid = TimeGrid(man["T"], man["dt"])
    n = int(round(np.sqrt(pi.values.reshape(pi.values.shape[0], -1).shape[1])))
    pi_vals = pi.values.reshape(-1, n, n)
    tag = "ell" if man["mode"] == "spectral" else "node"
    z = np.stack([TimePath.from_csv(src / f"z_{tag}_{i + 1}.csv", (n,)).values for i in range(man["rank"])], 1)
    s = np.stack([TimePath.from_csv(src / f"s_{tag}_{i + 1}.csv", (n,)).values for i in range(man["rank"])], 1)
    breve = None
    if (src / "breve_s.csv").exists():
        breve = TimePath.from_csv(src / "breve_s.csv", (n,)).values
    decomp = None
    if "decomposition" in man:
        decomp = SpectralDecomposition.from_json(man["decomposition"])
    coupling = np.array(man["coupling"]) if "coupling" in man else None
    masses = None if man.get("masses") is None else np.array(man["masses"])
    return MeanFieldSolution(
        man["mode"], grid, z, s, pi_vals, man.get("method", ""), breve_s=breve,
        decomposition=decomp, masses=masses, coupling=coupling,
        iterations=man["iterations"], gap=man.get("gap", 0.0), converged=man["converged"],
        residuals=man.get("residuals", {}),
    )
