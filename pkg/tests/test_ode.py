import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmfg.errors import DivergenceError, IntegrationError, ParameterError, ValidationError
from gmfg.ode import (
    Path,
    TimeGrid,
    centered_residual,
    hermite_interpolant,
    rk4_backward,
    rk4_forward,
    solve_nonsymmetric_riccati,
    solve_symmetric_riccati,
)

A_ROT = np.array([[0.0, 10.0], [-10.0, 0.0]])


def test_grid_validation():
    g = TimeGrid(1.0, 1e-3)
    assert g.steps == 1000 and g.nodes.size == 1001
    with pytest.raises(ValidationError):
        TimeGrid(1.0, 0.3)
    with pytest.raises(ValidationError):
        TimeGrid(1.0, -0.1)


# rk4_forward

def test_zero_field_constant():
    p = rk4_forward(lambda t, x: np.zeros_like(x), np.array([1.0, -2.0]), TimeGrid(1.0, 0.1))
    assert np.all(p.values == np.array([1.0, -2.0]))


def test_exponential():
    p = rk4_forward(lambda t, x: x, 1.0, TimeGrid(1.0, 1e-3))
    assert abs(p.values[-1] - math.e) <= 1e-9


def test_rotation_norm_conserved():
    p = rk4_forward(lambda t, x: A_ROT @ x, np.array([1.0, 0.0]), TimeGrid(1.0, 1e-3))
    assert np.abs(np.linalg.norm(p.values, axis=1) - 1).max() <= 1e-6


def test_non_finite_derivative_reported():
    with pytest.raises(IntegrationError) as info:
        rk4_forward(lambda t, x: np.full_like(x, np.nan) if t > 0.5 else x, 1.0, TimeGrid(1.0, 0.1))
    assert info.value.node is not None


# rk4_backward

def test_backward_zero_field():
    p = rk4_backward(lambda t, x: 0 * x, np.array([3.0]), TimeGrid(1.0, 0.1))
    assert np.all(p.values == 3.0)


def test_backward_linear():
    g = TimeGrid(1.0, 1e-2)
    p = rk4_backward(lambda t, x: np.ones_like(x), 1.0, g)
    assert np.allclose(p.values, g.nodes, atol=1e-13)


def test_backward_tanh():
    g = TimeGrid(1.0, 1e-3)
    p = rk4_backward(lambda t, x: x * x - 1, 0.0, g)  # -P' = -P^2 + 1
    assert abs(p.values[0] - math.tanh(1.0)) <= 1e-8
    assert np.abs(p.values - np.tanh(1 - g.nodes)).max() <= 1e-8


def test_backward_forward_duality():
    g = TimeGrid(1.0, 1e-2)
    f = lambda t, x: A_ROT @ x + np.array([np.sin(t), 0.0])  # noqa: E731
    back = rk4_backward(f, np.array([1.0, 2.0]), g)
    rev = rk4_forward(lambda tau, y: -f(1.0 - tau, y), np.array([1.0, 2.0]), g)
    assert np.abs(back.values - rev.values[::-1]).max() <= 1e-12


def test_self_convergence_order():
    def err(dt):
        p = rk4_forward(lambda t, x: A_ROT @ x, np.array([1.0, 0.0]), TimeGrid(1.0, dt))
        exact = np.array([math.cos(10), -math.sin(10)])
        return np.linalg.norm(p.values[-1] - exact)

    assert err(1e-2) / err(5e-3) >= 8


# symmetric Riccati

def test_lyapunov_case():
    g = TimeGrid(1.0, 1e-3)
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    QT = np.eye(2)
    p = solve_symmetric_riccati(np.zeros((2, 2)), np.zeros((2, 2)), Q, np.eye(2), QT, g)
    exact = QT + (1 - g.nodes)[:, None, None] * Q
    assert np.abs(p.values - exact).max() <= 1e-10


def test_scalar_tanh_riccati():
    p = solve_symmetric_riccati([[0]], [[1]], [[1]], [[1]], [[0]], TimeGrid(1.0, 1e-3))
    assert abs(p.values[0, 0, 0] - math.tanh(1.0)) <= 1e-8


def test_experiment_riccati_psd_and_residual(params):
    p = solve_symmetric_riccati(params.A, params.B, params.Q, params.R, params.Q_T, params.grid)
    v = p.values
    assert np.all(np.isfinite(v))
    assert np.abs(v - np.swapaxes(v, 1, 2)).max() == 0
    assert np.linalg.eigvalsh(v).min() >= -1e-12
    K = params.B @ np.linalg.solve(params.R, params.B.T)
    rhs = -(params.A.T @ v + v @ params.A - v @ K @ v + params.Q)
    assert centered_residual(v, rhs, params.grid.dt) <= 1e-4


def test_riccati_rejects_singular_r():
    with pytest.raises(ParameterError):
        solve_symmetric_riccati([[0]], [[1]], [[1]], [[0]], [[0]], TimeGrid(1.0, 0.1))


def test_riccati_divergence():
    # -o' = o^2 + 1 escapes to infinity in finite backward time
    with pytest.raises(DivergenceError):
        solve_nonsymmetric_riccati(0, 0, -1.0, -1.0, np.eye(1), TimeGrid(5.0, 1e-3))


# non-symmetric Riccati

def test_nonsymmetric_linear_case():
    g = TimeGrid(1.0, 1e-2)
    Hq = np.array([[1.0, 2.0], [0.0, -1.0]])
    oT = np.array([[0.5, 0.0], [1.0, 0.0]])
    p = solve_nonsymmetric_riccati(np.zeros((2, 2)), np.zeros((2, 2)), Hq, np.zeros((2, 2)), oT, g)
    # -o' = -Hq gives o(t) = o_T - (T - t) Hq
    assert np.abs(p.values - (oT - (1 - g.nodes)[:, None, None] * Hq)).max() <= 1e-13


def test_nonsymmetric_self_convergence():
    F, G, Hq, S = ([[0.3]], [[-0.2]], [[1.0]], [[0.5]])
    coarse = solve_nonsymmetric_riccati(F, G, Hq, S, [[0.1]], TimeGrid(1.0, 1e-3))
    fine = solve_nonsymmetric_riccati(F, G, Hq, S, [[0.1]], TimeGrid(1.0, 1e-4))
    assert abs(coarse.values[0, 0, 0] - fine.values[0, 0, 0]) <= 1e-8


def test_nonsymmetric_time_varying_coefficients():
    g = TimeGrid(1.0, 1e-3)
    Hq = Path(g, np.cos(g.nodes)[:, None, None])
    p = solve_nonsymmetric_riccati(0, 0, Hq, 0, np.zeros((1, 1)), g)
    # o(t) = -int_t^1 cos
    assert np.abs(p.values[:, 0, 0] + (math.sin(1) - np.sin(g.nodes))).max() <= 1e-6


# interpolation

def test_hermite_reproduces_lines():
    g = TimeGrid(1.0, 0.1)
    f = hermite_interpolant(Path(g, 2 * g.nodes - 1))
    mids = g.nodes[:-1] + 0.05
    assert np.allclose(f(mids), 2 * mids - 1, atol=1e-14)


def test_hermite_sin_accuracy():
    g = TimeGrid(1.0, 1e-2)
    f = hermite_interpolant(Path(g, np.sin(g.nodes)))
    t = np.linspace(0, 1, 10_001)
    assert np.abs(f(t) - np.sin(t)).max() <= 1e-6


def test_hermite_clamped():
    g = TimeGrid(1.0, 0.5)
    f = hermite_interpolant(Path(g, np.array([0.0, 1.0, 3.0])))
    assert f(-1.0) == 0.0 and f(2.0) == 3.0


@given(st.lists(st.floats(0.0, 10.0), min_size=3, max_size=20))
def test_hermite_monotone(increments):
    vals = np.cumsum(increments)
    g = TimeGrid(1.0, 1.0 / (vals.size - 1))
    f = hermite_interpolant(Path(g, vals))
    y = f(np.linspace(0, 1, 500))
    assert np.all(np.diff(y) >= -1e-9 * max(1.0, vals.max()))
    assert y.min() >= vals.min() - 1e-9 and y.max() <= vals.max() + 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linear_flow_matches_exponential(a, x0):
    p = rk4_forward(lambda t, x: a * x, x0, TimeGrid(1.0, 1e-2))
    assert abs(p.values[-1] - x0 * math.exp(a)) <= 1e-6 * max(1.0, abs(x0) * math.exp(a))


def test_path_csv_roundtrip(tmp_path):
    g = TimeGrid(1.0, 0.25)
    vals = np.arange(5 * 4, dtype=float).reshape(5, 2, 2) / 7
    Path(g, vals).to_csv(tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().split(",")[0] == "t"
    back = Path.from_csv(tmp_path / "p.csv", (2, 2))
    assert np.array_equal(back.values, vals)
