"""Command-line front end: ``gmfg solve|simulate|sweep|spectrum|sample-graph|fit``.

Exit codes: 0 success, 1 usage/config/runtime error, 2 flagged non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, dump_config, load_config
from .errors import ConfigError, GmfgError
from .graphon import (
    DEFAULT_GRID,
    AnalyticGraphon,
    SpectralGraphon,
    StepGraphon,
    eigen_residuals,
    fit_spectral_from_grid,
    generate_uniform_attachment,
    graphon_from_json,
    l2_norm,
    midpoint_graph,
    midpoints,
    op_distance,
    sample_simple_graph,
    sample_weighted_graph,
    spectral_of_step,
    ua_tail,
)
from .io import save_solution, version_string, write_json
from .ode import Path as TimePath
from .rng import derive_seed, make_rng
from .simulation import sample_initial_means, simulate, size_sweep
from .solver import (
    BestResponseLaw,
    compute_L0,
    solve_finite_fixedpoint,
    solve_finite_riccati,
    solve_idempotent,
    solve_spectral,
)

EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGED = 0, 1, 2

# independent streams derived from the run seed
STREAM_GRAPH, STREAM_MEANS, STREAM_SIM = 1, 2, 3


def decomposition_for(g, rank: int, grid_size: int = DEFAULT_GRID):
    """Rank-capped decomposition of any graphon, plus its truncation residual."""
    if isinstance(g, StepGraphon):
        full = spectral_of_step(g)
        d = full.truncate(rank)
        residual = float(abs(full.eigenvalues[rank])) if len(full) > rank else 0.0
    elif isinstance(g, SpectralGraphon):
        full = g.decomposition
        d = full.truncate(rank)
        residual = float(abs(full.eigenvalues[rank])) if len(full) > rank else 0.0
    elif isinstance(g, AnalyticGraphon) and g.has_eigenpairs:
        d = g.eigenpairs(rank)
        residual = 0.0 if g.rank is not None and g.rank <= rank else op_distance(g, SpectralGraphon(d, g.bound), grid_size)
    else:
        d = fit_spectral_from_grid(g, max(300, 4 * rank), rank, "cosine")
        residual = op_distance(g, SpectralGraphon(d, g.bound), grid_size)
    d.residual = residual
    return d


def build_network(cfg: ExperimentConfig, g, N: int):
    """Finite coupling graph for the configured generator."""
    gen = make_rng(derive_seed(cfg.seed, STREAM_GRAPH))
    kind = cfg.network.generator
    if kind == "auto":
        if isinstance(g, AnalyticGraphon) and g.name == "uniform_attachment":
            kind = "uniform_attachment"
        else:
            x = midpoints(64)
            vals = g(x[:, None], x[None, :])
            kind = "simple" if vals.min() >= 0 and vals.max() <= 1 else "weighted"
    if kind == "uniform_attachment":
        return generate_uniform_attachment(N, gen)
    if kind == "simple":
        return sample_simple_graph(g, N, gen)
    if kind == "weighted":
        return sample_weighted_graph(g, N, gen)
    return midpoint_graph(g, N)


def run_solve(cfg: ExperimentConfig):
    """Solve with the configured route; returns (solution, params, graph or None, manifest extras)."""
    params = cfg.params()
    g = cfg.graphon_object()
    pop = cfg.population_config()
    means = sample_initial_means(pop, params.n, make_rng(derive_seed(cfg.seed, STREAM_MEANS)))
    route = cfg.solver.route
    extras = {"route": route, "seed": cfg.seed, "graphon": cfg.graphon}
    graph = None
    if route.startswith("spectral"):
        d = decomposition_for(g, cfg.solver.rank)
        method = "fixedpoint" if route == "spectral_fp" else "riccati"
        sol = solve_spectral(params, d, means, method=method, tol=cfg.solver.tol, max_iter=cfg.solver.max_iter)
        extras["truncation_residual"] = d.residual
    else:
        graph = build_network(cfg, g, pop.N)
        W = graph.adjacency
        if route == "finite_fp":
            sol = solve_finite_fixedpoint(params, W, means, cfg.solver.tol, cfg.solver.max_iter)
        elif route == "finite_riccati":
            sol = solve_finite_riccati(params, W, means)
        else:
            sol = solve_idempotent(params, W, means)
        d = spectral_of_step(StepGraphon(W, max(1.0, float(np.abs(W).max()))))
    extras["L0"] = compute_L0(params, d)
    return sol, params, graph, g, means, extras


def cmd_solve(cfg: ExperimentConfig, out: Path) -> int:
    sol, _, _, _, _, extras = run_solve(cfg)
    save_solution(sol, out, **extras)
    (out / "config.json").write_text(dump_config(cfg))
    status = "converged" if sol.converged else "NOT converged"
    print(f"{sol.method} solve ({extras['route']}): rank {sol.rank}, {status}, "
          f"iterations {sol.iterations}, L0 {extras['L0']:.4g} -> {out}")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    sol, params, graph, g, means, extras = run_solve(cfg)
    pop = cfg.population_config()
    if graph is None:
        graph = build_network(cfg, g, pop.N)
    law = BestResponseLaw.from_solution(sol, params, pop.N)
    z_ref, _ = sol.node_paths(pop.N)
    op = op_distance(graph.step_graphon(), g)
    res = simulate(params, graph, pop, law, make_rng(derive_seed(cfg.seed, STREAM_SIM)), means=means,
                   mean_field=z_ref, norms={"op_distance": op})
    out.mkdir(parents=True, exist_ok=True)
    save_solution(sol, out / "solution", **extras)
    TimePath(res.grid, res.z_E).to_csv(out / "z_E.csv")
    TimePath(res.grid, res.z_ref).to_csv(out / "z_ref.csv")
    graph.to_csv(out / "graph.csv")
    summary = {
        "rel_error": res.rel_error,
        "op_distance": op,
        "N": pop.N,
        "route": extras["route"],
        "converged": sol.converged,
        "L0": extras["L0"],
        "seed": cfg.seed,
        "dt": res.grid.dt,
        "rank": sol.rank,
        "version": version_string(),
    }
    write_json(out / "summary.json", summary)
    (out / "config.json").write_text(dump_config(cfg))
    print(f"rel_error {res.rel_error:.6g}, op_distance {op:.6g} -> {out}")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_sweep(cfg: ExperimentConfig, out: Path, threads: int = 1) -> int:
    g = cfg.graphon_object()
    if isinstance(g, AnalyticGraphon) and g.name == "uniform_attachment":
        family, block = "ua", None
    elif isinstance(g, StepGraphon):
        family, block = "sbm", g.matrix
    else:
        raise ConfigError("graphon: sweeps support the uniform-attachment limit or a step (SBM) graphon")
    params = cfg.params()
    table = size_sweep(params, family, cfg.sweep.sizes, cfg.sweep.runs, cfg.population_config(),
                       seed=cfg.seed, rank=cfg.solver.rank, block=block, threads=threads)
    out.mkdir(parents=True, exist_ok=True)
    table.to_csv(out / "sweep.csv")
    table.write_trend(out / "trend.json")
    write_json(out / "manifest.json", {
        "version": version_string(), "seed": cfg.seed, "dt": params.grid.dt,
        "rank": cfg.solver.rank, "L0": table.L0, "family": family,
        "sizes": cfg.sweep.sizes, "runs": cfg.sweep.runs,
    })
    (out / "config.json").write_text(dump_config(cfg))
    trend = table.trend()
    print(json.dumps({"mean_rel_error": trend["mean_rel_error"], "mean_op_distance": trend["mean_op_distance"]}))
    return EXIT_OK if all(r["converged"] for r in table.rows) else EXIT_NONCONVERGED


def spectrum_report(g, rank: int, grid: int) -> dict:
    d = decomposition_for(g, rank, grid)
    lam = d.eigenvalues
    sum_sq = float(np.sum(lam ** 2))
    l2_sq = l2_norm(g) ** 2
    report = {
        "eigenvalues": lam.tolist(),
        "residuals": eigen_residuals(g, d, grid).tolist(),
        "sum_lambda_sq": sum_sq,
        "l2_norm_sq": l2_sq,
        "gap": l2_sq - sum_sq,
    }
    if isinstance(g, AnalyticGraphon) and g.name == "uniform_attachment":
        report["analytic_tail"] = ua_tail(len(lam))
    return report


def _read_graphon(arg):
    try:
        return graphon_from_json(arg)
    except OSError as exc:
        raise ConfigError(f"graphon: cannot read {arg}: {exc.strerror}") from None


def cmd_spectrum(args) -> int:
    report = spectrum_report(_read_graphon(args.graphon), args.rank, args.grid)
    text = json.dumps(report, indent=2)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "spectrum.json").write_text(text + "\n")
    return EXIT_OK


def cmd_sample_graph(args) -> int:
    g = _read_graphon(args.graphon)
    seed = 0 if args.seed is None else args.seed
    if args.kind == "uniform_attachment":
        graph = generate_uniform_attachment(args.nodes, seed)
    elif args.kind == "weighted":
        graph = sample_weighted_graph(g, args.nodes, seed)
    else:
        graph = sample_simple_graph(g, args.nodes, seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    graph.to_csv(out / "graph.csv")
    print(f"{args.kind} graph, {args.nodes} nodes, {int(np.count_nonzero(np.triu(graph.adjacency, 1)))} edges -> {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    g = _read_graphon(args.graphon)
    d = fit_spectral_from_grid(g, args.grid, args.rank, args.basis)
    text = json.dumps(SpectralGraphon(d).to_json(), indent=2)
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "fitted.json").write_text(text + "\n")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON path or bundled name: ua30, sbm30)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. solver.rank=3 (repeatable)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")

    parser = argparse.ArgumentParser(prog="gmfg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "solve the equilibrium equations"),
                           ("simulate", "solve, then simulate a finite population"),
                           ("sweep", "network-size sweep of approximation errors")):
        sub.add_parser(name, parents=[common], help=helptext)
    sp = sub.add_parser("spectrum", parents=[common], help="eigenvalues and norm identities of a graphon")
    sp.add_argument("graphon", help="graphon JSON file or inline JSON")
    sp.add_argument("--rank", type=int, default=5)
    sp.add_argument("--grid", type=int, default=DEFAULT_GRID)
    sg = sub.add_parser("sample-graph", parents=[common], help="sample a finite graph from a graphon")
    sg.add_argument("graphon", help="graphon JSON file or inline JSON")
    sg.add_argument("--nodes", type=int, default=30)
    sg.add_argument("--kind", choices=("simple", "weighted", "uniform_attachment"), default="simple")
    ft = sub.add_parser("fit", parents=[common], help="fit a spectral decomposition from a grid")
    ft.add_argument("graphon", help="graphon JSON file or inline JSON")
    ft.add_argument("--grid", type=int, default=300)
    ft.add_argument("--rank", type=int, default=5)
    ft.add_argument("--basis", choices=("cosine", "piecewise"), default="cosine")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command in ("solve", "simulate", "sweep"):
            if not args.config:
                raise ConfigError("--config is required")
            overrides = list(args.set)
            if args.seed is not None:
                overrides.append(f"seed={args.seed}")
            if args.out:
                overrides.append(f"output_dir={json.dumps(args.out)}")
            cfg = load_config(args.config, overrides)
            out = Path(cfg.output_dir)
            if args.command == "solve":
                return cmd_solve(cfg, out)
            if args.command == "simulate":
                return cmd_simulate(cfg, out)
            return cmd_sweep(cfg, out, args.threads)
        if args.command == "spectrum":
            return cmd_spectrum(args)
        if args.command == "sample-graph":
            return cmd_sample_graph(args)
        return cmd_fit(args)
    except (GmfgError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
