"""Graphons: representations, spectra, norms, sampling and fitting.

A graphon is a bounded symmetric kernel on [0,1]^2 acting as an integral
operator on L^2[0,1].  Three representations are supported:

* ``AnalyticGraphon``  a named closed-form kernel, optionally with known eigenpairs
* ``StepGraphon``      an N x N matrix on the uniform N-partition of [0,1]
* ``SpectralGraphon``  a finite eigen-expansion sum_l lambda_l f_l(x) f_l(y)

Functions on [0,1] are handled as samples on a uniform midpoint grid
(``DEFAULT_GRID`` points).  Step kernels are integrated exactly by treating the
samples as piecewise constant on the grid cells.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BoundError,
    DimensionError,
    DomainError,
    SizeError,
    ValidationError,
)
from .rng import resolve_rng

DEFAULT_GRID = 1024
TOL_ORTH = 1e-8
ZERO_REL = 1e-12
EXACT_CUT_MAX = 14
SQRT2 = math.sqrt(2.0)

SBM_BLOCK_MATRIX = np.array(
    [[0.25, 0.5, 0.2],
     [0.5, 0.35, 0.7],
     [0.2, 0.7, 0.4]]
)


def midpoints(size: int) -> np.ndarray:
    """Midpoints of the uniform partition of [0,1] into ``size`` cells."""
    if size < 1:
        raise SizeError("grid size must be positive")
    return (np.arange(size) + 0.5) / size


def cell_index(x, n: int) -> np.ndarray:
    """Cell of the partition P_1=[0,1/n], P_k=((k-1)/n, k/n] containing x (0-based)."""
    x = np.asarray(x, dtype=float)
    return np.clip(np.ceil(x * n).astype(int) - 1, 0, n - 1)


def _overlap(n_from: int, n_to: int) -> np.ndarray:
    """|cell a of n_from-partition ∩ cell j of n_to-partition| as an (n_from, n_to) array."""
    a0 = np.arange(n_from)[:, None] / n_from
    a1 = (np.arange(n_from)[:, None] + 1) / n_from
    b0 = np.arange(n_to)[None, :] / n_to
    b1 = (np.arange(n_to)[None, :] + 1) / n_to
    return np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0, None)


# ---------------------------------------------------------------------------
# eigenfunction representations


class CosineFunction:
    """c_0 + sum_m c_m sqrt(2) cos(m pi x / 2)."""

    basis = "cos"

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float).ravel()
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise ValidationError("cosine coefficients must be finite and nonempty")
        self.coeffs = c
        self._m = np.arange(c.size)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        m = self._m[1:]
        out = np.full(x.shape, self.coeffs[0])
        if m.size:
            out = out + SQRT2 * np.cos(np.multiply.outer(x, m) * (np.pi / 2)) @ self.coeffs[1:]
        return out

    def antiderivative(self, x):
        x = np.asarray(x, dtype=float)
        m = self._m[1:]
        out = self.coeffs[0] * x
        if m.size:
            w = self.coeffs[1:] * SQRT2 * 2.0 / (m * np.pi)
            out = out + np.sin(np.multiply.outer(x, m) * (np.pi / 2)) @ w
        return out

    def to_json(self) -> dict:
        return {"basis": "cos", "coeffs": self.coeffs.tolist()}


class PiecewiseFunction:
    """Piecewise-constant function on the uniform partition of [0,1]."""

    basis = "piecewise"

    def __init__(self, values):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValidationError("piecewise values must be finite and nonempty")
        self.values = v
        self._cum = np.concatenate([[0.0], np.cumsum(v) / v.size])

    @property
    def cells(self) -> int:
        return self.values.size

    def __call__(self, x):
        return self.values[cell_index(x, self.cells)]

    def antiderivative(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        n = self.cells
        k = np.minimum(np.floor(x * n).astype(int), n - 1)
        return self._cum[k] + (x - k / n) * self.values[k]

    def to_json(self) -> dict:
        return {"basis": "piecewise", "values": self.values.tolist()}


def _eigfun_from_json(d: dict):
    basis = d.get("basis")
    if basis in ("cos", "cosine"):
        return CosineFunction(d["coeffs"])
    if basis == "piecewise":
        return PiecewiseFunction(d["values"])
    raise ValidationError(f"unknown eigenfunction basis {basis!r}")


def _cos_gram(size: int) -> np.ndarray:
    """Exact L^2[0,1] Gram matrix of {1, sqrt2 cos(m pi x/2), m=1..size-1}."""

    def avg_cos(c):
        # integral of cos(c pi x / 2) over [0,1]
        c = np.asarray(c, dtype=float)
        out = np.ones_like(c)
        nz = c != 0
        out[nz] = np.sin(c[nz] * np.pi / 2) / (c[nz] * np.pi / 2)
        return out

    m = np.arange(size)
    a, b = np.meshgrid(m, m, indexing="ij")
    g = avg_cos(a - b) + avg_cos(a + b)
    g[0, :] = SQRT2 * avg_cos(m)
    g[:, 0] = SQRT2 * avg_cos(m)
    g[0, 0] = 1.0
    return g


def _sign_normalise(v: np.ndarray) -> np.ndarray:
    s = v.sum()
    if abs(s) > 1e-8 * np.abs(v).sum():
        return v if s > 0 else -v
    j = int(np.argmax(np.abs(v) > 1e-8 * np.abs(v).max()))
    return v if v[j] > 0 else -v


def _order(eigenvalues: np.ndarray) -> np.ndarray:
    """Descending |lambda|, then descending lambda, then insertion order."""
    idx = np.arange(len(eigenvalues))
    return np.array(sorted(idx, key=lambda i: (-abs(eigenvalues[i]), -eigenvalues[i], i)), dtype=int)


class SpectralDecomposition:
    """Ordered nonzero eigenpairs (lambda_l, f_l)."""

    def __init__(self, eigenvalues, eigenfunctions, residual: float = 0.0):
        lam = np.asarray(eigenvalues, dtype=float).ravel()
        funs = tuple(eigenfunctions)
        if lam.size != len(funs):
            raise DimensionError("one eigenfunction per eigenvalue required")
        if np.any(lam == 0) or not np.all(np.isfinite(lam)):
            raise ValidationError("eigenvalues must be finite and nonzero")
        order = _order(lam)
        self.eigenvalues = lam[order]
        self.eigenfunctions = tuple(funs[i] for i in order)
        # truncation residual (e.g. operator distance to the full kernel)
        self.residual = float(residual)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def rank(self) -> int:
        return len(self)

    def truncate(self, k: int) -> "SpectralDecomposition":
        return SpectralDecomposition(self.eigenvalues[:k], self.eigenfunctions[:k])

    def evaluate(self, x) -> np.ndarray:
        """Eigenfunction values, shape x.shape + (rank,)."""
        x = np.asarray(x, dtype=float)
        if not len(self):
            return np.zeros(x.shape + (0,))
        return np.stack([f(x) for f in self.eigenfunctions], axis=-1)

    def cell_integrals(self, n: int) -> np.ndarray:
        """Integrals of each f_l over the cells of the uniform n-partition, shape (rank, n)."""
        edges = np.arange(n + 1) / n
        if not len(self):
            return np.zeros((0, n))
        return np.stack([np.diff(f.antiderivative(edges)) for f in self.eigenfunctions])

    def masses(self) -> np.ndarray:
        """<f_l, 1> for every direction."""
        return np.array([float(f.antiderivative(1.0) - f.antiderivative(0.0)) for f in self.eigenfunctions])

    def gram(self) -> np.ndarray:
        funs = self.eigenfunctions
        k = len(funs)
        if k == 0:
            return np.zeros((0, 0))
        if all(f.basis == "cos" for f in funs):
            size = max(f.coeffs.size for f in funs)
            c = np.zeros((k, size))
            for i, f in enumerate(funs):
                c[i, : f.coeffs.size] = f.coeffs
            return c @ _cos_gram(size) @ c.T
        if all(f.basis == "piecewise" for f in funs) and len({f.cells for f in funs}) == 1:
            v = np.stack([f.values for f in funs])
            return v @ v.T / v.shape[1]
        cells = [f.cells for f in funs if f.basis == "piecewise"]
        size = math.lcm(*cells) if cells else 1
        size *= max(1, 8192 // size)
        x = midpoints(size)
        vals = self.evaluate(x)
        return vals.T @ vals / size

    def orthonormality_error(self) -> float:
        if not len(self):
            return 0.0
        return float(np.abs(self.gram() - np.eye(len(self))).max())

    def to_json(self) -> dict:
        return {
            "type": "spectral",
            "pairs": [
                {"lambda": float(lam), **f.to_json()}
                for lam, f in zip(self.eigenvalues, self.eigenfunctions)
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SpectralDecomposition":
        pairs = d.get("pairs")
        if not isinstance(pairs, list):
            raise ValidationError("spectral graphon needs a 'pairs' list")
        try:
            lam = [float(p["lambda"]) for p in pairs]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad spectral pair: {exc}") from None
        return cls(lam, [_eigfun_from_json(p) for p in pairs])


# ---------------------------------------------------------------------------
# graphon representations


class Graphon:
    kind = "abstract"
    bound: float

    def __call__(self, x, y):
        raise NotImplementedError

    def kernel_matrix(self, size: int = DEFAULT_GRID) -> np.ndarray:
        x = midpoints(size)
        return self(x[:, None], x[None, :])

    def to_json(self) -> dict:
        raise NotImplementedError


class AnalyticGraphon(Graphon):
    kind = "analytic"

    def __init__(self, name: str, kernel: Callable, bound: float,
                 eigenpairs: Callable[[int], SpectralDecomposition] | None = None,
                 rank: int | None = None, params: dict | None = None):
        self.name = name
        self._kernel = kernel
        self.bound = float(bound)
        self._eigenpairs = eigenpairs
        # finite rank if known (None means infinite or unknown)
        self.rank = rank
        self.params = dict(params or {})

    def __call__(self, x, y):
        return self._kernel(np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @property
    def has_eigenpairs(self) -> bool:
        return self._eigenpairs is not None

    def eigenpairs(self, count: int) -> SpectralDecomposition:
        if self._eigenpairs is None:
            raise ValidationError(f"graphon {self.name!r} has no known eigenpairs")
        if self.rank is not None:
            count = min(count, self.rank)
        return self._eigenpairs(count)

    def to_json(self) -> dict:
        return {"type": "analytic", "name": self.name, **self.params}


class StepGraphon(Graphon):
    kind = "step"

    def __init__(self, matrix, bound: float = 1.0):
        w = np.array(matrix, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] == 0:
            raise DimensionError("step graphon needs a nonempty square matrix")
        if not np.all(np.isfinite(w)):
            raise ValidationError("step matrix has non-finite entries")
        if not np.array_equal(w, w.T):
            if np.abs(w - w.T).max() > 1e-12 * max(1.0, np.abs(w).max()):
                raise ValidationError("step matrix is not symmetric")
            w = 0.5 * (w + w.T)
        if bound <= 0:
            raise BoundError("bound must be positive")
        if np.abs(w).max() > bound * (1 + 1e-12):
            raise BoundError(f"entry {np.abs(w).max():g} exceeds bound {bound:g}")
        w.setflags(write=False)
        self.matrix = w
        self.bound = float(bound)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x, y):
        n = self.size
        return self.matrix[cell_index(x, n), cell_index(y, n)]

    def to_json(self) -> dict:
        return {"type": "step", "matrix": self.matrix.tolist(), "c": self.bound}


class SpectralGraphon(Graphon):
    kind = "spectral"

    def __init__(self, decomposition: SpectralDecomposition, bound: float | None = None):
        self.decomposition = decomposition
        if bound is None:
            bound = float(np.abs(self.kernel_matrix(256)).max()) if len(decomposition) else 1.0
            bound = max(bound, 1e-300)
        self.bound = float(bound)

    def __call__(self, x, y):
        d = self.decomposition
        fx = d.evaluate(x)
        fy = d.evaluate(y)
        return np.sum(fx * fy * d.eigenvalues, axis=-1)

    def kernel_matrix(self, size: int = DEFAULT_GRID) -> np.ndarray:
        f = self.decomposition.evaluate(midpoints(size))
        return (f * self.decomposition.eigenvalues) @ f.T

    def to_json(self) -> dict:
        out = self.decomposition.to_json()
        out["c"] = self.bound
        return out


def _ua_kernel(x, y):
    return 1.0 - np.maximum(x, y)


def ua_eigenpairs(count: int) -> SpectralDecomposition:
    """Leading ``count`` eigenpairs of 1 - max(x,y): (4/(k pi)^2, sqrt2 cos(k pi x/2)), k odd."""
    if count < 1:
        raise SizeError("count must be at least 1")
    lam, funs = [], []
    for j in range(count):
        k = 2 * j + 1
        c = np.zeros(k + 1)
        c[k] = 1.0
        lam.append(4.0 / (k * k * np.pi ** 2))
        funs.append(CosineFunction(c))
    return SpectralDecomposition(lam, funs)


def ua_tail(count: int) -> float:
    """sum of lambda_k^2 over the UA pairs beyond the first ``count``."""
    from scipy.special import zeta

    # sum_{j>=count} (4/((2j+1)^2 pi^2))^2 = 16/pi^4 * (1/16) zeta(4, count + 1/2)
    return float(zeta(4, count + 0.5) / np.pi ** 4)


def uniform_attachment() -> AnalyticGraphon:
    return AnalyticGraphon("uniform_attachment", _ua_kernel, 1.0, ua_eigenpairs)


def constant_graphon(value: float = 1.0) -> AnalyticGraphon:
    value = float(value)

    def kernel(x, y):
        return np.full(np.broadcast(x, y).shape, value)

    def pairs(count):
        if value == 0:
            return SpectralDecomposition([], [])
        return SpectralDecomposition([value], [CosineFunction([1.0])])

    return AnalyticGraphon("constant", kernel, max(abs(value), 1e-300), pairs,
                           rank=0 if value == 0 else 1, params={"value": value})


ANALYTIC = {
    "uniform_attachment": lambda params: uniform_attachment(),
    "constant": lambda params: constant_graphon(params.get("value", 1.0)),
}


def step_from_matrix(W, bound_c: float = 1.0) -> StepGraphon:
    return StepGraphon(W, bound_c)


def graphon_from_json(data) -> Graphon:
    """Build a graphon from a JSON object (dict), JSON text, or a file path."""
    if isinstance(data, (str, Path)):
        text = str(data)
        if not text.lstrip().startswith("{"):
            text = Path(data).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid graphon JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("graphon JSON must be an object")
    kind = data.get("type")
    if kind == "step":
        if "matrix" not in data:
            raise ValidationError("step graphon needs 'matrix'")
        return StepGraphon(data["matrix"], float(data.get("c", 1.0)))
    if kind == "analytic":
        name = data.get("name")
        if name not in ANALYTIC:
            raise ValidationError(f"unknown analytic graphon {name!r}")
        return ANALYTIC[name]({k: v for k, v in data.items() if k not in ("type", "name")})
    if kind == "spectral":
        c = data.get("c")
        return SpectralGraphon(SpectralDecomposition.from_json(data), None if c is None else float(c))
    raise ValidationError(f"unknown graphon type {kind!r}")


def graphon_to_json(g: Graphon) -> dict:
    return g.to_json()


# ---------------------------------------------------------------------------
# operator action and spectra


def apply_graphon(g: Graphon, f, grid_size: int = DEFAULT_GRID) -> np.ndarray:
    """(M f)(x_a) on the midpoint grid; f is sampled on the same grid (leading axis)."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != grid_size:
        raise DimensionError(f"expected {grid_size} samples, got {f.shape[0]}")
    x = midpoints(grid_size)
    if isinstance(g, StepGraphon):
        n = g.size
        integrals = np.tensordot(_overlap(grid_size, n), f, axes=([0], [0]))
        return np.tensordot(g.matrix, integrals, axes=1)[cell_index(x, n)]
    if isinstance(g, SpectralGraphon):
        d = g.decomposition
        proj = np.tensordot(d.cell_integrals(grid_size), f, axes=1)
        return np.tensordot(d.evaluate(x) * d.eigenvalues, proj, axes=1)
    return np.tensordot(g.kernel_matrix(grid_size), f, axes=1) / grid_size


def spectral_of_step(g: StepGraphon, k: int | None = None) -> SpectralDecomposition:
    """Eigenpairs lambda_i(W)/N with piecewise eigenfunctions sqrt(N) v_i."""
    n = g.size
    mu, v = np.linalg.eigh(g.matrix)
    keep = np.abs(mu) >= ZERO_REL * n
    lam = mu[keep] / n
    funs = [PiecewiseFunction(np.sqrt(n) * _sign_normalise(v[:, i])) for i in np.flatnonzero(keep)]
    d = SpectralDecomposition(lam, funs)
    return d if k is None else d.truncate(k)


def operator_norm(g: Graphon, grid_size: int = DEFAULT_GRID,
                  max_iter: int = 200, rtol: float = 1e-10) -> float:
    if isinstance(g, StepGraphon):
        return float(np.abs(np.linalg.eigvalsh(g.matrix)).max() / g.size)
    if isinstance(g, SpectralGraphon):
        lam = g.decomposition.eigenvalues
        return float(np.abs(lam).max()) if lam.size else 0.0
    k = g.kernel_matrix(grid_size) / grid_size
    v = np.random.Generator(np.random.Philox(12345)).standard_normal(grid_size)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = k @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = float(nw)
        v = w / nw
        if abs(new - est) <= rtol * new:
            est = new
            break
        est = new
    return est


def _gauss_triangle(g: Graphon, panels: int = 16, order: int = 16) -> float:
    """2 * integral over {y <= x} of W^2 with composite Gauss-Legendre (kink-aware on the diagonal)."""
    t, w = np.polynomial.legendre.leggauss(order)
    edges = np.arange(panels + 1) / panels
    h = np.diff(edges)
    nodes = (edges[:-1, None] + h[:, None] * (t[None, :] + 1) / 2).ravel()
    weights = (h[:, None] * w[None, :] / 2).ravel()
    x = nodes[:, None]
    y = x * nodes[None, :]
    vals = np.asarray(g(x, y), dtype=float) ** 2
    return float(2.0 * np.sum(weights[:, None] * weights[None, :] * x * vals))


def l2_norm(g: Graphon) -> float:
    if isinstance(g, StepGraphon):
        return float(np.sqrt(np.sum(g.matrix ** 2)) / g.size)
    if isinstance(g, SpectralGraphon):
        d = g.decomposition
        gm = d.gram()
        lam = d.eigenvalues
        return float(np.sqrt(max(0.0, np.sum(np.outer(lam, lam) * gm ** 2))))
    return math.sqrt(_gauss_triangle(g))


def op_distance(g1: Graphon, g2: Graphon, grid_size: int = DEFAULT_GRID) -> float:
    """Operator norm of g1 - g2 (exact common refinement for two small step graphons)."""
    if isinstance(g1, StepGraphon) and isinstance(g2, StepGraphon):
        n = math.lcm(g1.size, g2.size)
        if n <= 4096:
            a = np.repeat(np.repeat(g1.matrix, n // g1.size, 0), n // g1.size, 1)
            b = np.repeat(np.repeat(g2.matrix, n // g2.size, 0), n // g2.size, 1)
            return float(np.abs(np.linalg.eigvalsh(a - b)).max() / n)
    d = g1.kernel_matrix(grid_size) - g2.kernel_matrix(grid_size)
    d = 0.5 * (d + d.T)
    return float(np.abs(np.linalg.eigvalsh(d / grid_size)).max())


def cut_norm_step(g: StepGraphon, mode: str = "exact", rng=None, starts: int = 32) -> float:
    """max over cell sets S,T of |sum_{i in S, j in T} m_ij| / N^2."""
    w = g.matrix
    n = g.size
    if mode == "exact":
        if n > EXACT_CUT_MAX:
            raise SizeError(f"exact cut norm limited to N <= {EXACT_CUT_MAX}")
        subsets = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
        rows = subsets @ w
        best = np.maximum(np.clip(rows, 0, None).sum(1), np.clip(-rows, 0, None).sum(1))
        return float(best.max() / n ** 2)
    if mode != "greedy":
        raise ValidationError(f"unknown cut-norm mode {mode!r}")
    gen, _ = resolve_rng(rng if rng is not None else 0)
    best = 0.0
    for _ in range(starts):
        s = (gen.random(n) < 0.5).astype(float)
        for sign in (1.0, -1.0):
            cur = s.copy()
            val = -1.0
            for _ in range(100):
                t = (sign * (cur @ w) > 0).astype(float)
                cur = (sign * (w @ t) > 0).astype(float)
                new = sign * float(cur @ w @ t)
                if new <= val + 1e-15:
                    break
                val = new
            best = max(best, val)
    return best / n ** 2


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SampledGraph:
    adjacency: np.ndarray
    latents: np.ndarray | None = None
    seed: int | None = None
    kind: str = "simple"
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.adjacency.shape[0]

    def step_graphon(self) -> StepGraphon:
        bound = max(1.0, float(np.abs(self.adjacency).max()))
        return StepGraphon(self.adjacency, bound)

    def to_csv(self, path) -> None:
        path = Path(path)
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        lines = ["i,j,weight"] + [f"{a},{b},{float(self.adjacency[a, b])!r}" for a, b in zip(i, j)]
        path.write_text("\n".join(lines) + "\n")
        sidecar = {
            "seed": self.seed,
            "latents": None if self.latents is None else self.latents.tolist(),
            "N": self.size,
            "kind": self.kind,
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))

    @classmethod
    def from_csv(cls, path) -> "SampledGraph":
        path = Path(path)
        side = json.loads(path.with_suffix(".json").read_text())
        n = int(side["N"])
        adj = np.zeros((n, n))
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        for a, b, wgt in rows:
            adj[int(a), int(b)] = adj[int(b), int(a)] = wgt
        lat = side.get("latents")
        return cls(adj, None if lat is None else np.array(lat), side.get("seed"), side.get("kind", "simple"))


def _latents(gen, n: int) -> np.ndarray:
    # sorted so that node q sits in cell P_q of the limit
    return np.sort(gen.random(n))


def sample_simple_graph(g: Graphon, N: int, rng=None) -> SampledGraph:
    if N < 1:
        raise SizeError("N must be at least 1")
    gen, seed = resolve_rng(rng)
    x = _latents(gen, N)
    p = np.asarray(g(x[:, None], x[None, :]), dtype=float)
    off = ~np.eye(N, dtype=bool)
    if np.any(p[off] < 0) or np.any(p[off] > 1):
        raise DomainError("kernel values must lie in [0,1] to be edge probabilities")
    u = gen.random((N, N))
    adj = np.triu((u < p).astype(float), 1)
    return SampledGraph(adj + adj.T, x, seed, "simple")


def sample_weighted_graph(g: Graphon, N: int, rng=None) -> SampledGraph:
    if N < 1:
        raise SizeError("N must be at least 1")
    gen, seed = resolve_rng(rng)
    x = _latents(gen, N)
    w = np.array(g(x[:, None], x[None, :]), dtype=float)
    np.fill_diagonal(w, 0.0)
    return SampledGraph(0.5 * (w + w.T), x, seed, "weighted")


def midpoint_graph(g: Graphon, N: int) -> SampledGraph:
    """Deterministic weighted graph W_ij = g(x_i, x_j) at cell midpoints, diagonal kept."""
    if N < 1:
        raise SizeError("N must be at least 1")
    x = midpoints(N)
    return SampledGraph(np.asarray(g(x[:, None], x[None, :]), dtype=float), x, None, "step")


def generate_uniform_attachment(N: int, rng=None) -> SampledGraph:
    """Grow a uniform-attachment graph and relabel nodes by descending degree.

    Node k joins at stage k; at every stage k = 2..N each still unconnected pair
    among the present nodes is joined with probability 1/k.
    """
    if N < 2:
        raise SizeError("uniform attachment needs N >= 2")
    gen, seed = resolve_rng(rng)
    adj = np.zeros((N, N), dtype=bool)
    for k in range(2, N + 1):
        iu = np.triu_indices(k, 1)
        open_pairs = ~adj[iu]
        hit = open_pairs & (gen.random(open_pairs.size) < 1.0 / k)
        adj[iu[0][hit], iu[1][hit]] = True
    adj = adj | adj.T
    order = np.argsort(-adj.sum(1), kind="stable")
    adj = adj[np.ix_(order, order)].astype(float)
    return SampledGraph(adj, None, seed, "uniform_attachment", {"order": order.tolist()})


# ---------------------------------------------------------------------------
# fitting


def _cos_basis(x: np.ndarray, terms: int) -> np.ndarray:
    m = np.arange(1, terms + 1)
    return np.column_stack([np.ones_like(x), SQRT2 * np.cos(np.outer(x, m) * np.pi / 2)])


def fit_spectral_from_grid(g: Graphon, grid_n: int, k: int, basis: str = "cosine",
                           terms: int = 16) -> SpectralDecomposition:
    """Sample g on a grid, eigendecompose, and fit the leading eigenvectors."""
    if k < 1 or grid_n < 4 * k:
        raise SizeError("grid must have at least 4k points")
    x = midpoints(grid_n)
    mu, v = np.linalg.eigh(g.kernel_matrix(grid_n) / grid_n)
    keep = np.flatnonzero(np.abs(mu) >= ZERO_REL * max(1.0, np.abs(mu).max()) * grid_n)
    keep = keep[_order(mu[keep])][:k]
    lam = mu[keep]
    samples = [np.sqrt(grid_n) * _sign_normalise(v[:, i]) for i in keep]
    if basis == "piecewise":
        return SpectralDecomposition(lam, [PiecewiseFunction(s) for s in samples])
    if basis not in ("cosine", "cos"):
        raise ValidationError(f"unknown basis {basis!r}")
    phi = _cos_basis(x, terms)
    coeffs = np.stack([np.linalg.lstsq(phi, s, rcond=None)[0] for s in samples])
    # symmetric orthonormalisation in the exact L^2 inner product
    s = coeffs @ _cos_gram(terms + 1) @ coeffs.T
    evals, evecs = np.linalg.eigh(s)
    coeffs = (evecs / np.sqrt(evals)) @ evecs.T @ coeffs
    return SpectralDecomposition(lam, [CosineFunction(c) for c in coeffs])


def eigen_residuals(g: Graphon, d: SpectralDecomposition, grid_size: int = DEFAULT_GRID) -> np.ndarray:
    """||M f_l - lambda_l f_l||_2 on the midpoint grid for every pair."""
    x = midpoints(grid_size)
    out = []
    for lam, f in zip(d.eigenvalues, d.eigenfunctions):
        fx = f(x)
        r = apply_graphon(g, fx, grid_size) - lam * fx
        out.append(float(np.sqrt(np.mean(r ** 2))))
    return np.array(out)


def sum_squares(values: Sequence[float]) -> float:
    return float(np.sum(np.square(values)))
