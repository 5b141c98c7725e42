import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_symmetric
from gmfg.errors import DimensionError, DomainError, HypothesisError, ModeError, ParameterError, PreconditionError
from gmfg.graphon import (
    CosineFunction,
    SpectralDecomposition,
    SpectralGraphon,
    StepGraphon,
    constant_graphon,
    midpoints,
    spectral_of_step,
    ua_eigenpairs,
)
from gmfg.ode import Interpolant, TimeGrid, rk4_forward
from gmfg.solver import (
    BestResponseLaw,
    GmfgParams,
    best_response,
    compute_L0,
    ltv_graphon_evolve,
    experiment_parameters,
    reconstruct,
    solve_finite_fixedpoint,
    solve_finite_riccati,
    solve_idempotent,
    solve_pi,
    solve_spectral,
)


def scalar_params(**kw):
    base = dict(A=[[0.0]], B=[[0.0]], D=[[0.5]], Q=[[1.0]], Q_T=[[1.0]], R=[[1.0]], H=[[1.0]],
                eta=[1.0], Sigma=[[0.0]], grid=TimeGrid(1.0, 1e-2))
    base.update(kw)
    return GmfgParams(**base)


def sup(a, b):
    return float(np.abs(np.asarray(a) - np.asarray(b)).max())


# parameters

def test_param_validation():
    with pytest.raises(ParameterError):
        scalar_params(R=[[0.0]])
    with pytest.raises(ParameterError):
        scalar_params(Q=[[-1.0]])
    with pytest.raises(DimensionError):
        scalar_params(eta=[1.0, 2.0])
    with pytest.raises(DimensionError):
        scalar_params(B=np.eye(2))


# solve_pi

def test_pi_lyapunov_and_tanh():
    p = scalar_params(Q=[[2.0]], Q_T=[[3.0]])
    pi = solve_pi(p).values[:, 0, 0]
    assert sup(pi, 3 + 2 * (1 - p.grid.nodes)) <= 1e-10
    p = scalar_params(B=[[1.0]], Q_T=[[0.0]], grid=TimeGrid(1.0, 1e-3))
    assert abs(solve_pi(p).values[0, 0, 0] - np.tanh(1.0)) <= 1e-8


def test_pi_experiment_psd(params):
    pi = solve_pi(params).values
    assert np.linalg.eigvalsh(pi).min() >= 0


# finite fixed point

def test_zero_coupling_closed_form():
    p = scalar_params()
    sol = solve_finite_fixedpoint(p, np.zeros((3, 3)), np.ones((3, 1)))
    assert np.all(sol.z == 0)
    assert sup(sol.s[:, 0, 0], p.grid.nodes) <= 1e-12


def test_no_source_means_zero_offset(params):
    p = params.with_(H=np.zeros((2, 2)), eta=np.zeros(2), D=np.zeros((2, 2)), grid=TimeGrid(1.0, 1e-2))
    W = random_symmetric(np.random.default_rng(0), 5)
    sol = solve_finite_fixedpoint(p, W, np.ones((5, 2)))
    assert np.all(sol.s == 0)
    assert sol.converged and sol.iterations <= 2


def test_sbm_fixedpoint_matches_riccati(params, sbm30):
    W, means = sbm30
    a = solve_finite_fixedpoint(params, W, means)
    b = solve_finite_riccati(params, W, means)
    assert a.converged
    assert sup(a.z, b.z) <= 1e-4 and sup(a.s, b.s) <= 1e-4
    for sol in (a, b):
        assert max(sol.residuals.values()) <= 1e-4


def test_nonconvergence_is_flagged(params, sbm30):
    W, means = sbm30
    sol = solve_finite_fixedpoint(params.with_(grid=TimeGrid(1.0, 1e-2)), W, means, tol=1e-30, max_iter=3)
    assert not sol.converged and sol.iterations == 3 and sol.gap > 0


def test_coupling_must_be_symmetric(params):
    with pytest.raises(ParameterError):
        solve_finite_fixedpoint(params, [[0, 1], [0, 0]], np.zeros((2, 2)))


# finite Riccati

def test_riccati_zero_coupling_matches_fixedpoint(params):
    p = params.with_(grid=TimeGrid(1.0, 1e-2))
    means = np.random.default_rng(1).normal(size=(4, 2))
    a = solve_finite_riccati(p, np.zeros((4, 4)), means)
    b = solve_finite_fixedpoint(p, np.zeros((4, 4)), means)
    assert sup(a.s, b.s) <= 1e-8


def test_riccati_zero_data(params):
    p = params.with_(eta=np.zeros(2), grid=TimeGrid(1.0, 1e-2))
    W = random_symmetric(np.random.default_rng(2), 4)
    sol = solve_finite_riccati(p, W, np.zeros((4, 2)))
    assert np.all(sol.z == 0) and np.all(sol.extras["e"] == 0) and np.all(sol.s == 0)


def test_range_invariance_of_finite_z(params, sbm30):
    # z stays in the range of W, so its kernel component is zero
    W, means = sbm30
    sol = solve_finite_riccati(params, W, means)
    mu, v = np.linalg.eigh(W)
    ker = v[:, np.abs(mu) < 1e-10 * np.abs(mu).max()]
    if ker.size:
        assert np.abs(np.einsum("qk,tqn->tkn", ker, sol.z)).max() <= 1e-10


# spectral

def test_zero_projection_direction():
    p = experiment_parameters(dt=1e-2)
    d = SpectralDecomposition([0.3], [CosineFunction([0.0, 1.0])])
    quiet = solve_spectral(p.with_(eta=np.zeros(2)), d, projections=np.zeros((1, 2)))
    assert np.all(quiet.z == 0) and np.all(quiet.s == 0)
    # with eta != 0 the offset feeds back into z through -lambda K s, so z leaves zero
    driven = solve_spectral(p, d, projections=np.zeros((1, 2)))
    assert np.abs(driven.z).max() > 0
    assert max(driven.residuals.values()) <= 1e-4


def test_constant_graphon_is_classical_mfg():
    p = experiment_parameters()
    N = 6
    means = np.random.default_rng(3).uniform(-3, 3, (N, 2))
    fin = solve_finite_fixedpoint(p, np.ones((N, N)), means)
    spectral = solve_spectral(p, constant_graphon(1.0).eigenpairs(1), means)
    z, s = reconstruct(spectral, midpoints(N)[:, None], p.grid.nodes[None, :])
    assert sup(np.swapaxes(z, 0, 1), fin.z) <= 1e-6
    assert sup(np.swapaxes(s, 0, 1), fin.s) <= 1e-6


def test_ua_rank5_methods_agree(params):
    means = np.random.default_rng(4).uniform(-3, 3, (30, 2))
    d = ua_eigenpairs(5)
    a = solve_spectral(params, d, means, method="riccati")
    b = solve_spectral(params, d, means, method="fixedpoint")
    assert b.converged
    assert sup(a.z, b.z) <= 1e-4 and sup(a.s, b.s) <= 1e-4


def test_repeated_eigenvalues_grouped():
    p = experiment_parameters(dt=1e-2)
    W = np.kron(np.eye(2), np.ones((3, 3)))  # eigenvalue 1/2 twice
    d = spectral_of_step(StepGraphon(W))
    means = np.random.default_rng(5).normal(size=(6, 2))
    sol = solve_spectral(p, d, means)
    assert sol.extras["distinct"].size == 1
    fin = solve_finite_riccati(p, W, means)
    z, _ = sol.node_paths(6)
    assert sup(z, fin.z) <= 1e-9


def test_empty_decomposition_rejected(params):
    with pytest.raises(ParameterError):
        solve_spectral(params, SpectralDecomposition([], []), np.zeros((3, 2)))


# reconstruct

def test_reconstruct_complement_only():
    p = experiment_parameters(dt=1e-2)
    d = SpectralDecomposition([0.4], [CosineFunction([0.0, 1.0])])  # vanishes at theta = 1
    sol = solve_spectral(p, d, projections=np.ones((1, 2)))
    z, s = reconstruct(sol, 1.0, 0.3)
    assert np.abs(z).max() <= 1e-15
    assert sup(s, Interpolant(p.grid, sol.breve_s)(0.3)) <= 1e-15


def test_reconstruct_constant_graphon_theta_free():
    p = experiment_parameters(dt=1e-2)
    sol = solve_spectral(p, constant_graphon(1.0).eigenpairs(1), projections=np.ones((1, 2)))
    s = reconstruct(sol, np.linspace(0, 1, 7), 0.5)[1]
    assert np.abs(s - s[0]).max() <= 1e-14


def test_reconstruct_ua_near_finite_node(params):
    N = 30
    x = midpoints(N)
    W = 1 - np.maximum(x[:, None], x[None, :])
    means = np.column_stack([np.cos(3 * x), x])
    fin = solve_finite_riccati(params, W, means)
    spectral = solve_spectral(params, ua_eigenpairs(5), means)
    z, s = reconstruct(spectral, 0.5, 0.5)
    k = params.grid.steps // 2
    # node 15 sits at theta = 14.5/30; allow the O(1/N) discretisation band
    assert np.abs(z - fin.z[k, 14]).max() <= 0.1 * (1 + np.abs(fin.z[k]).max())
    assert np.abs(s - fin.s[k, 14]).max() <= 0.1 * (1 + np.abs(fin.s[k]).max())


def test_reconstruct_mode_and_domain_errors(params, sbm30):
    W, means = sbm30
    fin = solve_finite_riccati(params.with_(grid=TimeGrid(1.0, 1e-2)), W, means)
    with pytest.raises(ModeError):
        reconstruct(fin, 0.5, 0.5)
    spectral = solve_spectral(params.with_(grid=TimeGrid(1.0, 1e-2)), ua_eigenpairs(2), projections=np.ones((2, 2)))
    with pytest.raises(DomainError):
        reconstruct(spectral, 0.5, 1.5)


# idempotent

def test_idempotent_all_ones(params):
    p = params.with_(eta=np.zeros(2))
    means = np.random.default_rng(6).uniform(-3, 3, (8, 2))
    a = solve_idempotent(p, np.ones((8, 8)), means)
    b = solve_finite_fixedpoint(p, np.ones((8, 8)), means)
    assert sup(a.z, b.z) <= 1e-6 and sup(a.s, b.s) <= 1e-6


def test_idempotent_identity_and_zero(params):
    p = params.with_(eta=np.zeros(2))
    means = np.random.default_rng(7).normal(size=(4, 2))
    a = solve_idempotent(p, 4 * np.eye(4), means)
    b = solve_finite_fixedpoint(p, 4 * np.eye(4), means)
    assert sup(a.z, b.z) <= 1e-6
    single = solve_idempotent(p, np.ones((1, 1)), means[2:3])
    assert sup(a.z[:, 2], single.z[:, 0]) <= 1e-12
    zero = solve_idempotent(p, np.ones((4, 4)), np.zeros((4, 2)))
    assert np.all(zero.z == 0) and np.all(zero.s == 0)


def test_idempotent_preconditions(params):
    with pytest.raises(PreconditionError):
        solve_idempotent(params.with_(eta=np.zeros(2)), np.eye(3), np.zeros((3, 2)))
    with pytest.raises(HypothesisError):
        solve_idempotent(params, np.ones((3, 3)), np.zeros((3, 2)))


# L0

def test_L0_trivial_cases(params):
    assert compute_L0(params.with_(B=np.zeros((2, 2))), ua_eigenpairs(5)) == 0.0
    assert compute_L0(params, SpectralDecomposition([], [])) == 0.0


def test_L0_experiment_ua(params):
    L0 = compute_L0(params, ua_eigenpairs(5))
    assert np.isfinite(L0) and 0 < L0 < 1


def test_L0_is_max_over_eigen_groups(params):
    p = params.with_(grid=TimeGrid(1.0, 1e-2))
    d = ua_eigenpairs(3)
    parts = [compute_L0(p, d.truncate(k)) for k in (1, 2, 3)]
    assert parts[0] <= parts[1] <= parts[2]
    assert compute_L0(p, SpectralDecomposition(d.eigenvalues[::-1], d.eigenfunctions[::-1])) == parts[2]


def test_contraction_ratio(params, sbm30):
    W, means = sbm30
    sol = solve_finite_fixedpoint(params, W, means)
    L0 = compute_L0(params, spectral_of_step(StepGraphon(W)))
    gaps = np.array(sol.gaps)
    ratios = gaps[1:] / gaps[:-1]
    assert L0 < 0.9
    assert ratios.max() <= L0 + 0.05


# best response

def law(pi, offset, gain, grid=TimeGrid(1.0, 0.5)):
    m = grid.steps + 1
    return BestResponseLaw(grid, Interpolant(grid, np.broadcast_to(pi, (m,) + np.shape(pi))),
                           Interpolant(grid, np.broadcast_to(offset, (m,) + np.shape(offset))),
                           np.asarray(gain, dtype=float))


def test_best_response_examples():
    assert np.all(best_response(law(np.eye(2), np.ones((3, 2)), np.zeros((2, 2))), 0.3, [1.0, 2.0], 1) == 0)
    assert np.all(best_response(law(np.eye(2), np.zeros((3, 2)), np.eye(2)), 0.3, [0.0, 0.0], 0) == 0)
    u = best_response(law([[1.0]], [[2.0]], [[1.0]]), 0.5, [3.0], 0)
    assert u[0] == pytest.approx(-5.0)
    with pytest.raises(DomainError):
        best_response(law([[1.0]], [[2.0]], [[1.0]]), 1.5, [3.0], 0)


def test_law_from_solution_offsets(params, sbm30):
    W, means = sbm30
    sol = solve_finite_riccati(params, W, means)
    lw = BestResponseLaw.from_solution(sol, params)
    t = params.grid.nodes[200]
    expected = -params.R_inv_Bt @ (sol.pi[200] @ np.ones(2) + sol.s[200, 4])
    assert sup(best_response(lw, t, np.ones(2), 4), expected) <= 1e-12


# graphon LTV systems

def test_ltv_decoupled_matches_rk4():
    grid = TimeGrid(1.0, 1e-2)
    A = lambda t: np.array([[0.0, 1.0], [-1.0, -0.1 * t]])  # noqa: E731
    x0 = np.random.default_rng(8).normal(size=(3, 2))
    g = StepGraphon(random_symmetric(np.random.default_rng(9), 3))
    out = ltv_graphon_evolve(A, np.eye(2), 0, 0, g, x0, u=lambda t: np.full((3, 2), t), grid=grid)
    for q in range(3):
        ref = rk4_forward(lambda t, x: A(t) @ x + t, x0[q], grid).values
        assert sup(out[:, q], ref) <= 1e-12


def test_ltv_step_vs_spectral_routes():
    grid = TimeGrid(1.0, 1e-2)
    rng = np.random.default_rng(10)
    g = StepGraphon(random_symmetric(rng, 5, -1, 1))
    x0 = rng.normal(size=(5, 2))
    args = (np.array([[0, 1.0], [-1, 0]]), np.eye(2), 0.5 * np.eye(2), 0.3 * np.eye(2), g, x0)
    u = lambda t: np.outer(np.arange(5), [np.sin(t), 1.0])  # noqa: E731
    a = ltv_graphon_evolve(*args, u=u, grid=grid, route="step")
    b = ltv_graphon_evolve(*args, u=u, grid=grid, route="spectral")
    assert sup(a, b) <= 1e-8


def test_ltv_rank_one_growth():
    grid = TimeGrid(1.0, 1e-3)
    g = SpectralGraphon(constant_graphon(1.0).eigenpairs(1))
    x0 = np.array([[1.0], [3.0]])  # mean 2 along f = 1, complement (-1, 1)
    out = ltv_graphon_evolve(0, 0, 1.0, 0, g, x0, grid=grid)
    mean = out.mean(axis=1)[:, 0]
    assert sup(mean, 2 * np.exp(grid.nodes)) <= 1e-9
    assert sup(out[:, 1, 0] - out[:, 0, 0], 2.0) <= 1e-9


# properties

@settings(max_examples=6)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_finite_spectral_equivalence_property(n, seed):
    rng = np.random.default_rng(seed)
    p = experiment_parameters(dt=1e-2)
    W = random_symmetric(rng, n)
    means = rng.uniform(-3, 3, (n, 2))
    fin = solve_finite_riccati(p, W, means)
    spectral = solve_spectral(p, spectral_of_step(StepGraphon(W)), means)
    z, s = spectral.node_paths(n)
    assert sup(z, fin.z) <= 1e-8 and sup(s, fin.s) <= 1e-8


@settings(max_examples=6)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_decoupling_identity_property(n, seed):
    rng = np.random.default_rng(seed)
    p = experiment_parameters(dt=1e-2)
    d = spectral_of_step(StepGraphon(random_symmetric(rng, n, -1, 1)))
    sol = solve_spectral(p, d, rng.normal(size=(n, 2)))
    o, e = sol.extras["o"], sol.extras["e"]
    assert sup(sol.s, np.einsum("tkab,tkb->tka", o, sol.z) + e) <= 1e-8
    assert max(sol.residuals.values()) <= 1e-4
