"""Fixed-grid RK4 integration, matrix Riccati solvers and path interpolation.

All integrators run on a ``TimeGrid`` and evaluate right-hand sides at the
classical RK4 stage times, which are nodes and half-step midpoints.  Internally
a right-hand side receives the half-grid index ``j`` (time ``j * dt / 2``) so
that time-varying coefficients can be tabulated once on the half grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path as FsPath
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DimensionError, DivergenceError, IntegrationError, ParameterError, ValidationError

DIVERGENCE = 1e12


@dataclass(frozen=True)
class TimeGrid:
    T: float = 1.0
    dt: float = 1e-3

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0) or not math.isfinite(self.T / self.dt):
            raise ValidationError("grid needs T > 0 and dt > 0")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValidationError(f"T/dt = {ratio} is not an integer")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)

    @property
    def half_nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, 2 * self.steps + 1)

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.T, self.T / (self.steps * factor))


class Interpolant:
    """Shape-preserving piecewise cubic Hermite interpolant (PCHIP slopes), clamped to [0, T]."""

    def __init__(self, grid: TimeGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape[0] != grid.steps + 1:
            raise DimensionError("one value per grid node required")
        self.grid = grid
        self.values = values
        self._pchip = PchipInterpolator(grid.nodes, values, axis=0)

    def __call__(self, t):
        return self._pchip(np.clip(t, 0.0, self.grid.T))


@dataclass
class Path:
    """Values of a vector/matrix quantity at every node of a grid."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.grid.steps + 1:
            raise DimensionError("path length does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("path has non-finite entries")

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    def __getitem__(self, k):
        return self.values[k]

    def interpolant(self) -> Interpolant:
        return Interpolant(self.grid, self.values)

    def to_csv(self, path) -> None:
        flat = self.values.reshape(self.values.shape[0], -1)
        cols = ["t"] + [f"v{'_'.join(map(str, ix))}" for ix in np.ndindex(*self.shape)]
        data = np.column_stack([self.grid.nodes, flat])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, shape: tuple | None = None) -> "Path":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t = data[:, 0]
        grid = TimeGrid(float(t[-1]), float(t[-1]) / (len(t) - 1))
        vals = data[:, 1:]
        if shape is not None:
            vals = vals.reshape((len(t),) + tuple(shape))
        elif vals.shape[1] == 1:
            vals = vals[:, 0]
        return cls(grid, vals)


def hermite_interpolant(path: Path) -> Interpolant:
    if path.values.shape[0] < 2:
        raise DimensionError("need at least two nodes")
    return path.interpolant()


# ---------------------------------------------------------------------------
# integration core


def integrate(rhs: Callable, y0, grid: TimeGrid, backward: bool = False,
              post: Callable | None = None, threshold: float | None = None,
              label: str = "state"):
    """Classical RK4 on ``grid``.

    ``rhs(j, y)`` gets the half-grid index j.  Integrates forward from t=0 or,
    with ``backward``, from t=T.  Returns ``(values, derivatives)`` indexed on
    the grid nodes; derivatives are rhs evaluated at the nodes.
    """
    m = grid.steps
    h = grid.dt
    y = np.array(y0, dtype=float)
    vals = np.empty((m + 1,) + y.shape)
    ders = np.empty_like(vals)
    times = grid.half_nodes

    def check(state, j, node):
        peak = np.abs(state).max()
        if not np.isfinite(peak):
            raise IntegrationError(f"non-finite {label} near t={times[j]:.6g}", node)
        if threshold is not None and peak > threshold:
            raise DivergenceError(f"{label} diverged (norm > {threshold:g}) at t={times[j]:.6g}", float(times[j]))

    if backward:
        idx, sgn = range(m, 0, -1), -1
    else:
        idx, sgn = range(0, m), 1
    step = sgn * h
    for i in idx:
        vals[i] = y
        j = 2 * i
        k1 = rhs(j, y)
        ders[i] = k1
        k2 = rhs(j + sgn, y + (step / 2) * k1)
        k3 = rhs(j + sgn, y + (step / 2) * k2)
        k4 = rhs(j + 2 * sgn, y + step * k3)
        y = y + (step / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if post is not None:
            y = post(y)
        check(y, j + 2 * sgn, i + sgn)
    last = 0 if backward else m
    vals[last] = y
    ders[last] = rhs(2 * last, y)
    check(ders[last], 2 * last, last)
    return vals, ders


def hermite_half(values: np.ndarray, derivs: np.ndarray, dt: float) -> np.ndarray:
    """Tabulate on the half grid: nodes exact, midpoints by cubic Hermite with known slopes."""
    m = values.shape[0] - 1
    out = np.empty((2 * m + 1,) + values.shape[1:])
    out[0::2] = values
    out[1::2] = 0.5 * (values[:-1] + values[1:]) + (dt / 8) * (derivs[:-1] - derivs[1:])
    return out


def half_values(coef, grid: TimeGrid) -> np.ndarray:
    """Tabulate a constant, Path, Interpolant or callable coefficient on the half grid."""
    t = grid.half_nodes
    if isinstance(coef, Path):
        coef = coef.interpolant()
    if isinstance(coef, Interpolant):
        return np.asarray(coef(t))
    if callable(coef):
        return np.stack([np.asarray(coef(ti), dtype=float) for ti in t])
    c = np.asarray(coef, dtype=float)
    return np.broadcast_to(c, (t.size,) + c.shape)


def matrix_table(coef, grid: TimeGrid, n: int) -> np.ndarray:
    """Like ``half_values`` for n x n coefficients; scalars act as multiples of the identity."""
    v = half_values(coef, grid)
    return v[:, None, None] * np.eye(n) if v.ndim == 1 else v


def centered_residual(values: np.ndarray, rhs_nodes: np.ndarray, dt: float) -> float:
    """max |y'(t_k) - rhs(t_k)| over interior nodes, with 4th-order centered differences."""
    if values.shape[0] < 5:
        return 0.0
    d = (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12 * dt)
    return float(np.abs(d - rhs_nodes[2:-2]).max()) if d.size else 0.0


# ---------------------------------------------------------------------------
# public integrators


def rk4_forward(f: Callable, x0, grid: TimeGrid) -> Path:
    """Integrate x' = f(t, x) from x(0) = x0 over the grid."""
    t = grid.half_nodes
    vals, _ = integrate(lambda j, y: np.asarray(f(t[j], y), dtype=float), x0, grid)
    return Path(grid, vals)


def rk4_backward(f: Callable, xT, grid: TimeGrid) -> Path:
    """Integrate x' = f(t, x) backward from x(T) = xT; path indexed on the original grid."""
    t = grid.half_nodes
    vals, _ = integrate(lambda j, y: np.asarray(f(t[j], y), dtype=float), xT, grid, backward=True)
    return Path(grid, vals)


def _control_gain(B, R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ParameterError("R must be square")
    try:
        np.linalg.cholesky(0.5 * (R + R.T))
    except np.linalg.LinAlgError:
        raise ParameterError("R must be symmetric positive definite") from None
    B = np.asarray(B, dtype=float)
    return B @ np.linalg.solve(R, B.T)


def riccati_values(A, B, Q, R, Q_T, grid: TimeGrid) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and node derivatives of the symmetric Riccati solution."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    K = _control_gain(B, R)

    def rhs(j, P):
        return -(A.T @ P + P @ A - P @ K @ P + Q)

    return integrate(rhs, np.asarray(Q_T, dtype=float), grid, backward=True,
                     post=lambda P: 0.5 * (P + P.T), threshold=DIVERGENCE, label="Pi")


def solve_symmetric_riccati(A, B, Q, R, Q_T, grid: TimeGrid) -> Path:
    """-Pi' = A^T Pi + Pi A - Pi B R^-1 B^T Pi + Q, Pi(T) = Q_T."""
    vals, _ = riccati_values(A, B, Q, R, Q_T, grid)
    return Path(grid, vals)


def solve_nonsymmetric_riccati(F, G, Hq, S, o_T, grid: TimeGrid) -> Path:
    """-o' = F^T o + o G - o S o - Hq, o(T) = o_T.  Coefficients may be time dependent."""
    o_T = np.asarray(o_T, dtype=float)
    Fh, Gh, Hh, Sh = (matrix_table(c, grid, o_T.shape[-1]) for c in (F, G, Hq, S))

    def rhs(j, o):
        return -(Fh[j].T @ o + o @ Gh[j] - o @ Sh[j] @ o - Hh[j])

    vals, _ = integrate(rhs, o_T, grid, backward=True, threshold=DIVERGENCE, label="o")
    return Path(grid, vals)


def path_from_csv(path: FsPath | str, shape=None) -> Path:
    return Path.from_csv(path, shape)
