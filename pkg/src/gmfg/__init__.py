"""Linear-quadratic graphon mean field games: graphons, Riccati solvers, simulation."""

from importlib import metadata as _metadata

from .graphon import (
    AnalyticGraphon,
    SampledGraph,
    SpectralDecomposition,
    SpectralGraphon,
    StepGraphon,
    apply_graphon,
    constant_graphon,
    fit_spectral_from_grid,
    generate_uniform_attachment,
    graphon_from_json,
    l2_norm,
    midpoint_graph,
    op_distance,
    operator_norm,
    sample_simple_graph,
    sample_weighted_graph,
    spectral_of_step,
    ua_eigenpairs,
    uniform_attachment,
)
from .ode import TimeGrid, rk4_backward, rk4_forward, solve_nonsymmetric_riccati, solve_symmetric_riccati
from .simulation import PopulationConfig, empirical_average, relative_error, simulate, size_sweep
from .solver import (
    BestResponseLaw,
    GmfgParams,
    compute_L0,
    experiment_parameters,
    reconstruct,
    solve_finite_fixedpoint,
    solve_finite_riccati,
    solve_idempotent,
    solve_spectral,
)

try:
    __version__ = _metadata.version("artifact")
except _metadata.PackageNotFoundError:
    __version__ = "0+unknown"
