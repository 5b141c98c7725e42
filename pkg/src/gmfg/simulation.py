"""Closed-loop Monte Carlo simulation of agent populations on finite graphs."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DivergenceError, ParameterError, SizeError, UndefinedError
from .graphon import (
    DEFAULT_GRID,
    SBM_BLOCK_MATRIX,
    SampledGraph,
    StepGraphon,
    generate_uniform_attachment,
    midpoint_graph,
    op_distance,
    sample_simple_graph,
    spectral_of_step,
    ua_eigenpairs,
    uniform_attachment,
)
from .ode import Interpolant, TimeGrid
from .rng import derive_seed, make_rng, resolve_rng
from .solver import BestResponseLaw, GmfgParams, compute_L0, solve_spectral


@dataclass
class PopulationConfig:
    N: int = 30
    cluster_sizes: int | list = 4
    initial_mean_range: tuple = (-3.0, 3.0)
    initial_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise SizeError("N must be at least 1")
        sizes = self.sizes()
        if np.any(sizes < 1):
            raise SizeError("every cluster needs at least one agent")
        if self.initial_std < 0:
            raise ParameterError("initial_std must be nonnegative")
        lo, hi = self.initial_mean_range
        if lo > hi:
            raise ParameterError("initial_mean_range must be ordered")

    def sizes(self) -> np.ndarray:
        if np.ndim(self.cluster_sizes) == 0:
            return np.full(self.N, int(self.cluster_sizes))
        sizes = np.asarray(self.cluster_sizes, dtype=int)
        if sizes.shape != (self.N,):
            raise DimensionError(f"cluster_sizes must have {self.N} entries")
        return sizes

    def with_size(self, N: int) -> "PopulationConfig":
        sizes = self.cluster_sizes if np.ndim(self.cluster_sizes) == 0 else int(np.asarray(self.cluster_sizes)[0])
        return PopulationConfig(N, sizes, tuple(self.initial_mean_range), self.initial_std, self.seed)


def sample_initial_means(pop: PopulationConfig, n: int, rng=None) -> np.ndarray:
    gen, _ = resolve_rng(rng)
    lo, hi = pop.initial_mean_range
    return gen.uniform(lo, hi, size=(pop.N, n))


@dataclass
class SimulationResult:
    grid: TimeGrid
    z_E: np.ndarray
    z_ref: np.ndarray | None
    rel_error: float
    norms: dict = field(default_factory=dict)
    seed: int | None = None
    agent_paths: np.ndarray | None = None


def empirical_average(states, node_of_agent, W) -> np.ndarray:
    """Cluster means x_l, then z_q = (1/N) sum_l m_ql x_l."""
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    states = np.asarray(states, dtype=float)
    node_of_agent = np.asarray(node_of_agent, dtype=int)
    counts = np.bincount(node_of_agent, minlength=N)
    if counts.size != N:
        raise DimensionError("agent grouping refers to nodes outside W")
    if np.any(counts == 0):
        raise SizeError(f"empty cluster at node {int(np.argmin(counts))}")
    sums = np.zeros((N,) + states.shape[1:])
    np.add.at(sums, node_of_agent, states)
    means = sums / counts.reshape((N,) + (1,) * (states.ndim - 1))
    return np.tensordot(W, means, axes=1) / N


def relative_error(z_E, z_ref) -> float:
    """sup_t ((1/N) sum_q |z_E - z_ref|^2)^(1/2) divided by the same functional of z_E."""
    z_E = np.asarray(z_E, dtype=float)
    z_ref = np.asarray(z_ref, dtype=float)
    if z_E.shape != z_ref.shape:
        raise DimensionError(f"shapes differ: {z_E.shape} vs {z_ref.shape}")
    if z_E.ndim == 1:
        z_E, z_ref = z_E[:, None, None], z_ref[:, None, None]
    elif z_E.ndim == 2:
        z_E, z_ref = z_E[:, :, None], z_ref[:, :, None]

    def functional(x):
        return float(np.sqrt(np.mean(np.sum(x ** 2, axis=-1), axis=-1)).max())

    denom = functional(z_E)
    if denom == 0.0:
        raise UndefinedError("the empirical mean field is identically zero")
    return functional(z_E - z_ref) / denom


def simulate(params: GmfgParams, graph, pop: PopulationConfig, law: BestResponseLaw, rng=None,
             means=None, mean_field=None, dt: float | None = None,
             keep_agents: bool = False, norms: dict | None = None) -> SimulationResult:
    """Euler-Maruyama simulation of every agent under the best-response law.

    ``mean_field`` is the reference z per node on the law grid (shape
    (steps+1, N, n)); when given, the relative error against it is reported.
    """
    W = graph.adjacency if isinstance(graph, SampledGraph) else np.asarray(graph, dtype=float)
    N = W.shape[0]
    n = params.n
    if N != pop.N:
        raise DimensionError(f"graph has {N} nodes but the population has {pop.N}")
    if abs(law.grid.T - params.grid.T) > 1e-12:
        raise DimensionError("law horizon differs from the problem horizon")
    grid = law.grid if dt is None else TimeGrid(law.grid.T, dt)
    gen, seed = resolve_rng(rng)
    if means is None:
        means = sample_initial_means(pop, n, gen)
    means = np.asarray(means, dtype=float)
    if means.shape != (N, n):
        raise DimensionError(f"means must have shape ({N}, {n})")

    sizes = pop.sizes()
    node = np.repeat(np.arange(N), sizes)
    x = means[node] + pop.initial_std * gen.standard_normal((node.size, n))
    t = grid.nodes
    pi = law.pi(t)
    off = law.offset(t)
    gain = law.R_inv_Bt
    A, B, D, S = params.A, params.B, params.D, params.Sigma
    noisy = bool(np.any(S))
    h = grid.dt
    sq = np.sqrt(h)
    z_E = np.empty((t.size, N, n))
    agents = np.empty((t.size,) + x.shape) if keep_agents else None
    for k in range(t.size):
        z = empirical_average(x, node, W)
        z_E[k] = z
        if agents is not None:
            agents[k] = x
        if k == t.size - 1:
            break
        with np.errstate(over="ignore", invalid="ignore"):
            u = -(x @ pi[k].T + off[k][node]) @ gain.T
            x = x + (x @ A.T + u @ B.T + z[node] @ D.T) * h
            if noisy:
                x = x + sq * gen.standard_normal(x.shape) @ S.T
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"agent states blew up at step {k + 1}", float(t[k + 1]))

    z_ref = None
    err = float("nan")
    if mean_field is not None:
        ref = np.asarray(mean_field, dtype=float)
        if ref.shape != (law.grid.steps + 1, N, n):
            raise DimensionError("reference mean field must be given per node on the law grid")
        z_ref = ref if grid == law.grid else Interpolant(law.grid, ref)(t)
        err = relative_error(z_E, z_ref)
    return SimulationResult(grid, z_E, z_ref, err, dict(norms or {}), seed, agents)


# ---------------------------------------------------------------------------
# size sweep


@dataclass
class SweepTable:
    family: str
    rows: list
    L0: float

    def means(self) -> dict:
        out = {}
        for N in sorted({r["N"] for r in self.rows}):
            sel = [r for r in self.rows if r["N"] == N]
            out[N] = {
                "rel_error": float(np.mean([r["rel_error"] for r in sel])),
                "op_distance": float(np.mean([r["op_distance"] for r in sel])),
                "runs": len(sel),
            }
        return out

    def trend(self) -> dict:
        m = self.means()
        sizes = sorted(m)
        rel = [m[N]["rel_error"] for N in sizes]
        op = [m[N]["op_distance"] for N in sizes]
        return {
            "family": self.family,
            "sizes": sizes,
            "mean_rel_error": rel,
            "mean_op_distance": op,
            "rel_error_decreasing": bool(all(a > b for a, b in zip(rel, rel[1:]))),
            "op_distance_decreasing": bool(all(a > b for a, b in zip(op, op[1:]))),
            "L0": self.L0,
        }

    def to_csv(self, path) -> None:
        cols = ["family", "N", "seed", "rel_error", "op_distance", "converged", "L0"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            for r in self.rows:
                w.writerow({**r, "rel_error": repr(float(r["rel_error"])), "op_distance": repr(float(r["op_distance"]))})

    def write_trend(self, path) -> None:
        Path(path).write_text(json.dumps(self.trend(), indent=2))


def family_limit(family: str, block=None, rank: int = 5):
    """Limit graphon and its (truncated) decomposition for a sweep family."""
    if family == "ua":
        return uniform_attachment(), ua_eigenpairs(rank)
    if family == "sbm":
        g = StepGraphon(SBM_BLOCK_MATRIX if block is None else block)
        return g, spectral_of_step(g, rank)
    raise ParameterError(f"unknown graphon family {family!r}")


GRAPH_KINDS = ("auto", "step")


def _sample_family(family: str, limit, N: int, rng, generator: str = "auto") -> SampledGraph:
    if generator == "step":
        return midpoint_graph(limit, N)
    if family == "ua":
        return generate_uniform_attachment(N, rng)
    return sample_simple_graph(limit, N, rng)


def run_instance(params: GmfgParams, family: str, limit, decomp, pop: PopulationConfig, seed: int,
                 grid_size: int = DEFAULT_GRID, generator: str = "auto") -> dict:
    """One sweep run: sample graph and means, solve the limit problem, simulate.

    ``generator="step"`` replaces the random graph by the midpoint kernel matrix.
    """
    gen = make_rng(seed)
    graph = _sample_family(family, limit, pop.N, gen, generator)
    means = sample_initial_means(pop, params.n, gen)
    sol = solve_spectral(params, decomp, means, method="riccati")
    law = BestResponseLaw.from_solution(sol, params, pop.N)
    z_ref, _ = sol.node_paths(pop.N)
    op = op_distance(graph.step_graphon(), limit, grid_size)
    res = simulate(params, graph, pop, law, gen, means=means, mean_field=z_ref, norms={"op_distance": op})
    return {"N": pop.N, "seed": seed, "rel_error": res.rel_error, "op_distance": op,
            "converged": sol.converged}


def size_sweep(params: GmfgParams, family: str, sizes, runs: int, pop: PopulationConfig,
               seed: int = 0, rank: int = 5, block=None, threads: int = 1,
               grid_size: int = DEFAULT_GRID, generator: str = "auto") -> SweepTable:
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ParameterError("sizes must be ascending")
    if generator not in GRAPH_KINDS:
        raise ParameterError(f"generator must be one of {GRAPH_KINDS}")
    limit, decomp = family_limit(family, block, rank)
    L0 = compute_L0(params, decomp)
    tasks = [(N, r, derive_seed(seed, N, r)) for N in sizes for r in range(runs)]

    def work(task):
        N, r, s = task
        row = run_instance(params, family, limit, decomp, pop.with_size(N), s, grid_size, generator)
        row.update(family=family, L0=L0, run=r)
        return row

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(work, tasks))
    else:
        rows = [work(t) for t in tasks]
    rows.sort(key=lambda r: (r["N"], r["run"]))
    return SweepTable(family, rows, L0)
