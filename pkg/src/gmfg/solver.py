"""Equilibrium solvers for linear-quadratic Gaussian graphon mean field games.

Forward-backward pair for a node-indexed (or eigendirection-indexed) mean
field z and offset s, written row-wise for a stack of k states of size n:

    z' = z Ac^T + (L z) D^T - (L s) K^T,               z(0) = z0
    s' = -s Ac + z C^T + w (QH eta),                   s(T) = (z(T) + w eta) (Q_T H)^T

with Ac = A - K Pi, C = QH - Pi D and K = B R^-1 B^T.  For a finite network
L = W/N and w = 1; on eigendirections L = diag(lambda) and w = <f_l, 1>.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionError,
    DivergenceError,
    DomainError,
    HypothesisError,
    ModeError,
    ParameterError,
    PreconditionError,
)
from .graphon import SpectralDecomposition, SpectralGraphon, StepGraphon, spectral_of_step
from .ode import (
    DIVERGENCE,
    Interpolant,
    Path,
    TimeGrid,
    centered_residual,
    half_values,
    hermite_half,
    integrate,
    matrix_table,
    riccati_values,
    solve_symmetric_riccati,
)

GROUP_TOL = 1e-10


def _mat(x, n=None, name="matrix"):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1] or (n is not None and a.shape[0] != n):
        raise DimensionError(f"{name} must be {n or 'n'}x{n or 'n'}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class GmfgParams:
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    Q: np.ndarray
    Q_T: np.ndarray
    R: np.ndarray
    H: np.ndarray
    eta: np.ndarray
    Sigma: np.ndarray
    grid: TimeGrid = TimeGrid()

    def __post_init__(self):
        A = _mat(self.A, name="A")
        n = A.shape[0]
        set_ = object.__setattr__
        set_(self, "A", A)
        for key in ("B", "D", "Q", "Q_T", "R", "H", "Sigma"):
            set_(self, key, _mat(getattr(self, key), n, key))
        eta = np.asarray(self.eta, dtype=float).ravel()
        if eta.size != n or not np.all(np.isfinite(eta)):
            raise DimensionError(f"eta must be a finite {n}-vector")
        set_(self, "eta", eta)
        for key in ("Q", "Q_T"):
            m = getattr(self, key)
            if np.abs(m - m.T).max() > 1e-12 * max(1.0, np.abs(m).max()):
                raise ParameterError(f"{key} must be symmetric")
            if np.linalg.eigvalsh(m).min() < -1e-12 * max(1.0, np.abs(m).max()):
                raise ParameterError(f"{key} must be positive semidefinite")
        R = self.R
        if np.abs(R - R.T).max() > 1e-12 * max(1.0, np.abs(R).max()):
            raise ParameterError("R must be symmetric")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ParameterError("R must be positive definite")
        for arr in (A, self.B, self.D, self.Q, self.Q_T, self.R, self.H, self.eta, self.Sigma):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def R_inv_Bt(self) -> np.ndarray:
        return np.linalg.solve(self.R, self.B.T)

    @property
    def K(self) -> np.ndarray:
        return self.B @ self.R_inv_Bt

    def with_(self, **changes) -> "GmfgParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = {k: np.asarray(getattr(self, k)).tolist() for k in ("A", "B", "D", "Q", "Q_T", "R", "H", "eta", "Sigma")}
        out["T"] = self.grid.T
        out["dt"] = self.grid.dt
        return out


def experiment_parameters(dt: float = 1e-3, T: float = 1.0) -> GmfgParams:
    """Two-dimensional parameter set of the UA and SBM experiments."""
    eye = np.eye(2)
    return GmfgParams(
        A=np.array([[0.0, 10.0], [-10.0, 0.0]]), B=eye, D=eye,
        Q=0.5 * eye, Q_T=eye, R=eye, H=eye, eta=np.array([2.0, 2.0]),
        Sigma=0.1 * eye, grid=TimeGrid(T, dt),
    )


class _Coefficients:
    """Pi and derived matrices tabulated on the half grid of params.grid."""

    def __init__(self, params: GmfgParams):
        self.params = params
        grid = params.grid
        self.grid = grid
        pi, _ = riccati_values(params.A, params.B, params.Q, params.R, params.Q_T, grid.refine(2))
        self.pi_half = pi
        self.pi = pi[0::2]
        K = params.K
        self.K = K
        self.Ac = params.A[None] - K[None] @ pi
        self.C = (params.Q @ params.H)[None] - pi @ params.D[None]
        self.qh_eta = params.Q @ params.H @ params.eta
        self.qth = params.Q_T @ params.H
        self.qth_eta = self.qth @ params.eta


def solve_pi(params: GmfgParams) -> Path:
    """LQR gain Pi on the parameter grid."""
    return solve_symmetric_riccati(params.A, params.B, params.Q, params.R, params.Q_T, params.grid)


# ---------------------------------------------------------------------------
# solution container


@dataclass
class MeanFieldSolution:
    mode: str
    grid: TimeGrid
    z: np.ndarray
    s: np.ndarray
    pi: np.ndarray
    method: str
    breve_s: np.ndarray | None = None
    decomposition: SpectralDecomposition | None = None
    masses: np.ndarray | None = None
    coupling: np.ndarray | None = None
    iterations: int = 0
    gap: float = 0.0
    converged: bool = True
    gaps: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return self.z.shape[1]

    @property
    def n(self) -> int:
        return self.z.shape[2]

    def node_paths(self, N: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """(z, s) per node on the grid, shape (steps+1, N, n)."""
        if self.mode == "finite":
            if N is not None and N != self.rank:
                raise DimensionError(f"solution has {self.rank} nodes, not {N}")
            return self.z, self.s
        if N is None:
            raise DimensionError("node count needed for a spectral solution")
        theta = (np.arange(N) + 0.5) / N
        f = self.decomposition.evaluate(theta)  # (N, k)
        z = np.einsum("qk,tkn->tqn", f, self.z)
        shift = self.s - self.masses[None, :, None] * self.breve_s[:, None, :]
        s = np.einsum("qk,tkn->tqn", f, shift) + self.breve_s[:, None, :]
        return z, s


def reconstruct(sol: MeanFieldSolution, theta, t):
    """Mean field and offset at position theta and time t (spectral mode)."""
    if sol.mode != "spectral":
        raise ModeError("reconstruct needs a spectral solution; finite solutions index nodes directly")
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > sol.grid.T + 1e-12):
        raise DomainError("t outside [0, T]")
    cache = sol.extras.setdefault("_interp", {})
    if not cache:
        cache["z"] = Interpolant(sol.grid, sol.z)
        cache["s"] = Interpolant(sol.grid, sol.s)
        cache["b"] = Interpolant(sol.grid, sol.breve_s)
    f = sol.decomposition.evaluate(np.asarray(theta, dtype=float))
    zc, sc, b = cache["z"](t), cache["s"](t), cache["b"](t)
    z = np.einsum("...k,...kn->...n", f, zc)
    shift = sc - sol.masses[:, None] * b[..., None, :]
    s = np.einsum("...k,...kn->...n", f, shift) + b
    return z, s


# ---------------------------------------------------------------------------
# core forward-backward routines


def _rhs_z(co, L, j, z, s):
    p = co.params
    return z @ co.Ac[j].T + (L @ z) @ p.D.T - (L @ s) @ co.K.T


def _rhs_s(co, w, j, z, s):
    return -s @ co.Ac[j] + z @ co.C[j].T + np.outer(w, co.qh_eta)


def _s_terminal(co, w, zT):
    return (zT + np.outer(w, co.params.eta)) @ co.qth.T


def _residuals(co, L, w, z, s) -> dict:
    dt = co.grid.dt
    idx = np.arange(z.shape[0]) * 2
    rz = np.stack([_rhs_z(co, L, j, zi, si) for j, zi, si in zip(idx, z, s)])
    rs = np.stack([_rhs_s(co, w, j, zi, si) for j, zi, si in zip(idx, z, s)])
    return {
        "z": centered_residual(z, rz, dt) / (1.0 + float(np.abs(z).max())),
        "s": centered_residual(s, rs, dt) / (1.0 + float(np.abs(s).max())),
    }


def _fixedpoint(co, L, w, z0, tol, max_iter, damping=1.0, fallback_after=50):
    grid = co.grid
    dt = grid.dt
    m = grid.steps
    z = np.broadcast_to(z0, (m + 1,) + z0.shape).copy()
    zd = np.zeros_like(z)
    gaps = []
    theta = damping
    bad = 0
    converged = False

    def backward(z, zd):
        zh = hermite_half(z, zd, dt)
        return integrate(lambda j, s: _rhs_s(co, w, j, zh[j], s), _s_terminal(co, w, z[-1]),
                         grid, backward=True, threshold=DIVERGENCE, label="s")

    it = 0
    for it in range(1, max_iter + 1):
        s, sd = backward(z, zd)
        sh = hermite_half(s, sd, dt)
        zn, znd = integrate(lambda j, y: _rhs_z(co, L, j, y, sh[j]), z0, grid,
                            threshold=DIVERGENCE, label="z")
        gap = float(np.abs(zn - z).max())
        if gaps and gap > gaps[-1]:
            bad += 1
            if bad >= fallback_after and theta == 1.0:
                theta = 0.5
        gaps.append(gap)
        z = z + theta * (zn - z)
        zd = zd + theta * (znd - zd)
        if gap <= tol:
            converged = True
            break
    s, _ = backward(z, zd)
    return z, s, it, gaps, converged


def _check_means(means, N, n):
    mu = np.asarray(means, dtype=float)
    if mu.shape != (N, n):
        raise DimensionError(f"means must have shape ({N}, {n}), got {mu.shape}")
    if not np.all(np.isfinite(mu)):
        raise ParameterError("means must be finite")
    return mu


def _check_coupling(W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DimensionError("coupling must be a square matrix")
    if np.abs(W - W.T).max() > 1e-12 * max(1.0, np.abs(W).max()):
        raise ParameterError("coupling must be symmetric")
    return W


def solve_finite_fixedpoint(params: GmfgParams, W, means, tol: float = 1e-8,
                            max_iter: int = 200) -> MeanFieldSolution:
    """Alternate backward s-solves and forward z-solves on an N-node network."""
    W = _check_coupling(W)
    N = W.shape[0]
    mu = _check_means(means, N, params.n)
    co = _Coefficients(params)
    L = W / N
    w = np.ones(N)
    z0 = L @ mu
    z, s, it, gaps, ok = _fixedpoint(co, L, w, z0, tol, max_iter)
    return MeanFieldSolution(
        "finite", params.grid, z, s, co.pi, "fixedpoint", coupling=W,
        iterations=it, gap=gaps[-1] if gaps else 0.0, converged=ok, gaps=gaps,
        residuals=_residuals(co, L, w, z, s),
    )


def solve_finite_riccati(params: GmfgParams, W, means) -> MeanFieldSolution:
    """Decouple s = P z + e with an nN x nN non-symmetric Riccati equation."""
    W = _check_coupling(W)
    N = W.shape[0]
    n = params.n
    mu = _check_means(means, N, n)
    co = _Coefficients(params)
    grid = co.grid
    dt = grid.dt
    L = W / N
    eye = np.eye(N)
    LD = np.kron(L, params.D)
    LK = np.kron(L, co.K)
    forcing = np.tile(co.qh_eta, N)
    big = N * n

    def left(M, X):
        # kron(I_N, M) @ X without forming the Kronecker product
        return (M @ X.reshape(N, n, -1)).reshape(X.shape)

    def right(X, M):
        # X @ kron(I_N, M)
        return (X.reshape(-1, N, n) @ M).reshape(X.shape)

    def rhs_pe(j, y):
        P = y[:, :big]
        e = y[:, big]
        Ac = co.Ac[j]
        PLK = P @ LK
        dP = -(left(Ac.T, P) + right(P, Ac) + P @ LD - PLK @ P)
        diag = np.arange(N)
        dP.reshape(N, n, N, n)[diag, :, diag, :] += co.C[j]
        de = -left(Ac.T, e) + PLK @ e + forcing
        return np.column_stack([dP, de])

    yT = np.column_stack([np.kron(eye, co.qth), np.tile(co.qth_eta, N)])
    try:
        y, yd = integrate(rhs_pe, yT, grid, backward=True, threshold=DIVERGENCE, label="P")
    except DivergenceError as exc:
        raise DivergenceError(f"step (2) decoupling Riccati: {exc}", exc.time) from None
    P, e = y[:, :, :big], y[:, :, big]
    Pd, ed = yd[:, :, :big], yd[:, :, big]

    def at(vals, ders, j):
        i, r = divmod(j, 2)
        if not r:
            return vals[i]
        return 0.5 * (vals[i] + vals[i + 1]) + (dt / 8) * (ders[i] - ders[i + 1])

    def rhs_z(j, z):
        Pj = at(P, Pd, j)
        ej = at(e, ed, j)
        return left(co.Ac[j], z) + LD @ z - LK @ (Pj @ z + ej)

    zf, _ = integrate(rhs_z, (L @ mu).ravel(), grid, threshold=DIVERGENCE, label="z")
    sf = np.einsum("tab,tb->ta", P, zf) + e
    z = zf.reshape(-1, N, n)
    s = sf.reshape(-1, N, n)
    return MeanFieldSolution(
        "finite", grid, z, s, co.pi, "riccati", coupling=W, iterations=1,
        residuals=_residuals(co, L, np.ones(N), z, s),
        extras={"P": P, "e": e.reshape(-1, N, n)},
    )


def _group(eigenvalues: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct eigenvalues (within GROUP_TOL) and the group index of every direction."""
    distinct: list[float] = []
    index = np.empty(eigenvalues.size, dtype=int)
    for i, lam in enumerate(eigenvalues):
        for g, d in enumerate(distinct):
            if abs(lam - d) <= GROUP_TOL:
                index[i] = g
                break
        else:
            index[i] = len(distinct)
            distinct.append(float(lam))
    return np.array(distinct), index


def _breve(co) -> np.ndarray:
    vals, _ = integrate(lambda j, b: -b @ co.Ac[j] + co.qh_eta, co.qth_eta, co.grid,
                        backward=True, threshold=DIVERGENCE, label="breve_s")
    return vals


def _projections(decomp: SpectralDecomposition, means=None, projections=None, n=None):
    if projections is not None:
        p = np.asarray(projections, dtype=float)
        if p.shape != (len(decomp), n):
            raise DimensionError(f"projections must have shape ({len(decomp)}, {n})")
        return p
    mu = np.asarray(means, dtype=float)
    if mu.ndim != 2 or mu.shape[1] != n:
        raise DimensionError(f"means must have shape (N, {n})")
    return decomp.cell_integrals(mu.shape[0]) @ mu


def _spectral_riccati(co, lam, c, z0):
    """Per distinct eigenvalue o and unit-weight e; per direction z."""
    grid = co.grid
    dt = grid.dt
    p = co.params
    n = p.n
    distinct, gidx = _group(lam)
    d = distinct.size
    lamd = distinct[:, None, None]
    K = co.K
    steps = [0]

    def post(y):
        steps[0] += 1
        norms = np.abs(y.reshape(d, -1)).max(axis=1)
        if np.any(norms > DIVERGENCE):
            bad = float(distinct[int(np.argmax(norms))])
            t = grid.T - steps[0] * dt
            raise DivergenceError(f"decoupling Riccati for eigenvalue {bad:.6g} diverged at t={t:.6g}", t)
        return y

    def rhs(j, y):
        o = y[:, :, :n]
        e = y[:, :, n]
        Ac = co.Ac[j]
        oK = o @ K
        do = -(Ac.T @ o + o @ (Ac + lamd * p.D) - lamd * (oK @ o) - co.C[j])
        de = -e @ Ac + lamd[:, :, 0] * np.einsum("gab,gb->ga", oK, e) + co.qh_eta
        return np.concatenate([do, de[:, :, None]], axis=2)

    yT = np.concatenate([np.broadcast_to(co.qth, (d, n, n)),
                         np.broadcast_to(co.qth_eta, (d, n))[:, :, None]], axis=2)
    y, yd = integrate(rhs, yT, grid, backward=True, post=post, label="o")
    o_g, e_g = y[..., :n], y[..., n]
    oh = hermite_half(o_g, yd[..., :n], dt)
    eh = hermite_half(e_g, yd[..., n], dt)
    lz = lam[:, None, None]

    def rhs_z(j, z):
        o = oh[j][gidx]
        drift = co.Ac[j] + lz * p.D - lz * (K @ o)
        return np.einsum("kab,kb->ka", drift, z) - (lam * c)[:, None] * (eh[j][gidx] @ K.T)

    z, _ = integrate(rhs_z, z0, grid, threshold=DIVERGENCE, label="z")
    o = o_g[:, gidx]
    e = c[None, :, None] * e_g[:, gidx]
    s = np.einsum("tkab,tkb->tka", o, z) + e
    return z, s, o, e, distinct


def solve_spectral(params: GmfgParams, decomp: SpectralDecomposition, means=None,
                   method: str = "riccati", tol: float = 1e-8, max_iter: int = 200,
                   projections=None) -> MeanFieldSolution:
    """Solve on the eigendirections of a finite-rank graphon.

    ``means`` are per-node initial means on the uniform N-partition (a step
    function of theta); alternatively ``projections`` gives <f_l, x(0)> directly.
    Offsets are stored as the true projections <f_l, s>.
    """
    if not len(decomp):
        raise ParameterError("decomposition is empty")
    n = params.n
    proj = _projections(decomp, means, projections, n)
    co = _Coefficients(params)
    lam = decomp.eigenvalues
    c = decomp.masses()
    z0 = lam[:, None] * proj
    breve = _breve(co)
    L = np.diag(lam)
    if method == "fixedpoint":
        z, s, it, gaps, ok = _fixedpoint(co, L, c, z0, tol, max_iter)
        extras = {}
        gap = gaps[-1] if gaps else 0.0
    elif method == "riccati":
        z, s, o, e, distinct = _spectral_riccati(co, lam, c, z0)
        it, gaps, ok, gap = 1, [], True, 0.0
        extras = {"o": o, "e": e, "distinct": distinct}
    else:
        raise ParameterError(f"unknown method {method!r}")
    return MeanFieldSolution(
        "spectral", params.grid, z, s, co.pi, method, breve_s=breve, decomposition=decomp,
        masses=c, iterations=it, gap=gap, converged=ok, gaps=gaps,
        residuals=_residuals(co, L, c, z, s), extras=extras,
    )


def solve_idempotent(params: GmfgParams, W, means) -> MeanFieldSolution:
    """Fast path for an idempotent normalised coupling W/N and eta = 0."""
    W = _check_coupling(W)
    N = W.shape[0]
    n = params.n
    mu = _check_means(means, N, n)
    L = W / N
    if np.abs(L @ L - L).max() > 1e-8:
        raise PreconditionError("W/N is not idempotent")
    if np.any(params.eta != 0):
        raise HypothesisError("the idempotent fast path requires eta = 0")
    co = _Coefficients(params)
    grid = co.grid
    K = co.K
    D = params.D

    def rhs_o(j, o):
        Ac = co.Ac[j]
        return -(Ac.T @ o + o @ (Ac + D) - o @ K @ o - co.C[j])

    o, od = integrate(rhs_o, co.qth, grid, backward=True, threshold=DIVERGENCE, label="o")
    oh = hermite_half(o, od, grid.dt)
    z, _ = integrate(lambda j, y: y @ (co.Ac[j] + D - K @ oh[j]).T, L @ mu, grid,
                     threshold=DIVERGENCE, label="z")
    s = np.einsum("tab,tqb->tqa", o, z)
    return MeanFieldSolution(
        "finite", grid, z, s, co.pi, "idempotent", coupling=W, iterations=1,
        residuals=_residuals(co, L, np.zeros(N), z, s), extras={"o": o},
    )


# ---------------------------------------------------------------------------
# best response


@dataclass
class BestResponseLaw:
    grid: TimeGrid
    pi: Interpolant
    offset: Interpolant
    R_inv_Bt: np.ndarray

    @classmethod
    def from_solution(cls, sol: MeanFieldSolution, params: GmfgParams, N: int | None = None):
        _, s = sol.node_paths(N)
        return cls(sol.grid, Interpolant(sol.grid, sol.pi), Interpolant(sol.grid, s), params.R_inv_Bt)


def best_response(law: BestResponseLaw, t: float, x, node: int) -> np.ndarray:
    if t < -1e-12 or t > law.grid.T + 1e-12:
        raise DomainError(f"t = {t} outside [0, {law.grid.T}]")
    x = np.asarray(x, dtype=float)
    return -law.R_inv_Bt @ (law.pi(t) @ x + law.offset(t)[node])


# ---------------------------------------------------------------------------
# contraction diagnostic


def _spectral_norms(M: np.ndarray) -> np.ndarray:
    """Largest singular value of every matrix in a stack."""
    if M.shape[-2:] == (2, 2):
        fro = np.sum(M * M, axis=(-2, -1))
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        return np.sqrt(0.5 * (fro + np.sqrt(np.clip(fro * fro - 4 * det * det, 0.0, None))))
    return np.linalg.svd(M, compute_uv=False)[..., 0]


def _stride(m: int, target: int = 100) -> int:
    for s in range(1, m + 1):
        if m % s == 0 and m // s <= target:
            return s
    return m


def compute_L0(params: GmfgParams, decomp: SpectralDecomposition, points: int = 100) -> float:
    """Numerical value of the contraction functional L0 for a finite-rank coupling.

    The double and single time integrals use the trapezoid rule on a
    subsampled grid of at most ``points`` intervals.
    """
    K = params.K
    if not len(decomp) or not np.any(K):
        return 0.0
    co = _Coefficients(params)
    grid = co.grid
    n = params.n
    distinct, _ = _group(decomp.eigenvalues)
    eye = np.eye(n)
    lamd = distinct[:, None, None]

    psi, _ = integrate(lambda j, y: (co.Ac[j] + lamd * params.D) @ y,
                       np.broadcast_to(eye, (distinct.size, n, n)), grid)
    psi2, _ = integrate(lambda j, y: -co.Ac[j].T @ y, eye, grid)
    st = _stride(grid.steps, points)
    idx = np.arange(0, grid.steps + 1, st)
    h = grid.dt * st
    p = idx.size
    psi, psi2 = np.moveaxis(psi[idx], 1, 0), psi2[idx]
    inv2 = np.linalg.inv(psi2)
    Zq = inv2 @ co.C[2 * idx]  # Psi2(q)^-1 C(q)
    ZT = inv2[-1] @ co.qth
    mid = np.linalg.inv(psi) @ K @ psi2[None]  # (d, p, n, n): Psi(tau)^-1 K Psi2(tau)

    n1 = np.zeros((p, p, p))
    n2 = np.zeros((p, p))
    for g, lam in enumerate(distinct):
        a1 = abs(lam) * psi[g][:, None] @ mid[g][None, :]  # (t, tau, n, n)
        k1 = np.einsum("xyab,qbc->xyqac", a1, Zq)
        n1 = np.maximum(n1, _spectral_norms(k1))
        n2 = np.maximum(n2, _spectral_norms(a1 @ ZT))

    def trap(v):
        return 0.0 if v.size < 2 else h * (v.sum() - 0.5 * (v[0] + v[-1]))

    term1 = np.zeros(p)
    term2 = np.zeros(p)
    for t in range(p):
        inner = np.array([trap(n1[t, tau, tau:]) for tau in range(t + 1)])
        term1[t] = trap(inner)
        term2[t] = trap(n2[t, : t + 1])
    return float(term1.max() + term2.max())


# ---------------------------------------------------------------------------
# graphon LTV systems


def ltv_graphon_evolve(A, B, D, E, g, x0, u=None, grid: TimeGrid | None = None,
                       route: str = "auto") -> np.ndarray:
    """x' = [A I + D M] x + [B I + E M] u for a step or finite-rank graphon.

    ``x0`` holds cell values on a uniform partition (shape (cells, n)); ``u`` is
    None, a callable t -> (cells, n) or an array of node values.  Returns the
    state path as cell values, shape (steps+1, cells, n).
    """
    if grid is None:
        raise ParameterError("a time grid is required")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 2:
        raise DimensionError("x0 must have shape (cells, n)")
    cells, n = x0.shape
    Ah, Bh, Dh, Eh = (matrix_table(c, grid, n) for c in (A, B, D, E))
    for arr, name in ((Ah, "A"), (Bh, "B"), (Dh, "D"), (Eh, "E")):
        if arr.shape[1:] != (n, n):
            raise DimensionError(f"{name} must be {n}x{n}")
    if u is None:
        uh = np.zeros((grid.half_nodes.size, cells, n))
    elif callable(u):
        uh = np.stack([np.asarray(u(t), dtype=float) for t in grid.half_nodes])
    else:
        uh = half_values(Path(grid, u), grid)
    if uh.shape[1:] != (cells, n):
        raise DimensionError("input must have shape (cells, n) per time")

    if route == "auto":
        route = "step" if isinstance(g, StepGraphon) else "spectral"
    if route == "step":
        if not isinstance(g, StepGraphon) or g.size != cells:
            raise DimensionError("step route needs a step graphon with one cell per state row")
        L = g.matrix / g.size

        def rhs(j, x):
            return x @ Ah[j].T + (L @ x) @ Dh[j].T + uh[j] @ Bh[j].T + (L @ uh[j]) @ Eh[j].T

        vals, _ = integrate(rhs, x0, grid)
        return vals
    if route != "spectral":
        raise ParameterError(f"unknown route {route!r}")
    decomp = spectral_of_step(g) if isinstance(g, StepGraphon) else g.decomposition
    if not isinstance(g, (StepGraphon, SpectralGraphon)):
        raise ParameterError("graphon must be step or spectral")
    ci = decomp.cell_integrals(cells)  # (k, cells)
    avg = ci * cells
    lam = decomp.eigenvalues[:, None]
    k = lam.shape[0]
    ups = np.einsum("kc,tcn->tkn", ci, uh)
    uperp = uh - np.einsum("kc,tkn->tcn", avg, ups)

    def rhs_s(j, y):
        xi, xp = y[:k], y[k:]
        dxi = xi @ Ah[j].T + lam * (xi @ Dh[j].T) + ups[j] @ Bh[j].T + lam * (ups[j] @ Eh[j].T)
        dxp = xp @ Ah[j].T + uperp[j] @ Bh[j].T
        return np.concatenate([dxi, dxp])

    xi0 = ci @ x0
    y0 = np.concatenate([xi0, x0 - avg.T @ xi0])
    vals, _ = integrate(rhs_s, y0, grid)
    return np.einsum("kc,tkn->tcn", avg, vals[:, :k]) + vals[:, k:]
