"""Sampling of matrix Levy paths and their stochastic exponentials.

A path of the driving process L is stored as a grid of times, the continuous
(drift + Brownian) increment per grid cell, and a time-sorted list of jump
marks.  Jump times are always grid points: the sampler merges them into the
uniform grid, and hand-built paths must do the same.  The exponential walkers
apply one multiplicative factor per cell and then, at grid points carrying
jumps, the exact factors (I + mark) in list order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from ._linalg import op_norm, psd_factor
from .levy_model import DET_TOL, MatrixLevyTriplet

__all__ = [
    "LevyPath", "ExpPath", "MeanCheckReport",
    "InvalidStep", "HasGaussianPart", "SingularFactor", "SingularState",
    "sample_levy_path", "exact_cpp_exponential", "emery_exponential",
    "skorokhod_reconstruct", "stochastic_logarithm", "mean_check",
    "coarsen_path",
]


class InvalidStep(ValueError):
    """Step size is nonpositive or exceeds the horizon."""


class HasGaussianPart(ValueError):
    """Operation requires sigma = 0 but the triplet has a Gaussian part."""


class SingularFactor(ArithmeticError):
    """A multiplicative factor (I + increment) is numerically singular."""


class SingularState(ArithmeticError):
    """A state X_t is singular where an inverse is required."""


_EMPTY = np.empty((0,))
_EMPTY3 = np.empty((0, 1, 1))


@dataclass(frozen=True, eq=False)
class LevyPath:
    """Driving-process path: grid, per-cell continuous increments, jumps.

    ``grid`` is strictly increasing with grid[0] = 0; every jump time must be
    a grid point.  ``increments[c]`` is the drift+Brownian part of the
    increment over (grid[c], grid[c+1]].  ``jumps`` is time-sorted
    (time, mark) with det(I + mark) != 0.
    """

    grid: np.ndarray
    increments: np.ndarray
    jumps: tuple[tuple[float, np.ndarray], ...] = ()
    seed: int | None = None

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        inc = np.asarray(self.increments, dtype=float)
        if grid.ndim != 1 or len(grid) < 2:
            raise ValueError("grid must contain at least the two times 0 and T")
        if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing and start at 0")
        if inc.ndim != 3 or inc.shape[0] != len(grid) - 1 or inc.shape[1] != inc.shape[2]:
            raise ValueError("increments must have shape (len(grid)-1, d, d)")
        grid = grid.copy(); grid.setflags(write=False)
        inc = inc.copy(); inc.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "increments", inc)
        jumps = tuple((float(t), np.asarray(a, dtype=float)) for t, a in self.jumps)
        object.__setattr__(self, "jumps", jumps)
        _marks_by_grid_index(self)  # raises if a jump time is off-grid

    @property
    def d(self) -> int:
        return self.increments.shape[1]

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    def levy_values(self) -> np.ndarray:
        """L at every grid point (cadlag: jump included at its own time)."""
        n = len(self.grid)
        vals = np.zeros((n, self.d, self.d))
        vals[1:] = np.cumsum(self.increments, axis=0)
        for idx, marks in _marks_by_grid_index(self).items():
            for a in marks:
                vals[idx:] += a
        return vals


@dataclass(frozen=True, eq=False)
class ExpPath:
    """Stochastic exponential along a grid: X[0] = I, all X_t invertible.

    At a grid point carrying jumps, ``X`` holds the post-jump value; the
    pre/post states around each individual jump factor are recorded in
    ``jump_pre``/``jump_post`` (aligned with ``jump_times``) so that marks can
    be recovered exactly.
    """

    grid: np.ndarray
    X: np.ndarray
    Xinv: np.ndarray | None
    method: str
    jump_times: np.ndarray = field(default_factory=lambda: _EMPTY)
    jump_pre: np.ndarray = field(default_factory=lambda: _EMPTY3)
    jump_post: np.ndarray = field(default_factory=lambda: _EMPTY3)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def T(self) -> float:
        return float(self.grid[-1])


@dataclass(frozen=True)
class MeanCheckReport:
    """Monte Carlo mean of X_t against the matrix-exponential identity."""

    t: float
    n_paths: int
    mc_mean: np.ndarray
    target: np.ndarray
    se: np.ndarray
    z: np.ndarray

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))


# -- helpers ------------------------------------------------------------------

def _marks_by_grid_index(path: LevyPath) -> dict[int, list[np.ndarray]]:
    """Map grid index -> marks applied at that grid point, preserving order."""
    out: dict[int, list[np.ndarray]] = {}
    grid = path.grid
    tol = 1e-9 * max(1.0, float(grid[-1]))
    for t, a in path.jumps:
        k = int(np.searchsorted(grid, t))
        if k < len(grid) and abs(grid[k] - t) <= tol:
            idx = k
        elif k > 0 and abs(grid[k - 1] - t) <= tol:
            idx = k - 1
        else:
            raise ValueError(f"jump time {t} is not a grid point")
        if idx == 0:
            raise ValueError("jump times must lie in (0, T]")
        out.setdefault(idx, []).append(a)
    return out


def _walk(path: LevyPath, cell_factors, method: str,
          cell_inv=None, check_dets: bool = False) -> ExpPath:
    """Multiply out cell factors and jump factors along the grid."""
    n = len(path.grid)
    d = path.d
    eye = np.eye(d)
    marks = _marks_by_grid_index(path)
    X = np.empty((n, d, d))
    Xi = np.empty((n, d, d))
    X[0] = eye
    Xi[0] = eye
    jt: list[float] = []
    jpre: list[np.ndarray] = []
    jpost: list[np.ndarray] = []
    cur = X[0]
    cui = Xi[0]
    for c in range(n - 1):
        f = cell_factors[c]
        if check_dets and abs(np.linalg.det(f)) <= DET_TOL:
            raise SingularFactor(f"cell {c}: |det(I + increment)| <= {DET_TOL}")
        fi = cell_inv[c] if cell_inv is not None else np.linalg.solve(f, eye)
        cur = cur @ f
        cui = fi @ cui
        for a in marks.get(c + 1, []):
            g = eye + a
            if abs(np.linalg.det(g)) <= DET_TOL:
                raise SingularFactor(f"jump at t={path.grid[c + 1]}: det(I + mark) vanishes")
            jt.append(float(path.grid[c + 1]))
            jpre.append(cur)
            cur = cur @ g
            cui = np.linalg.solve(g, eye) @ cui
            jpost.append(cur)
        X[c + 1] = cur
        Xi[c + 1] = cui
    return ExpPath(
        grid=path.grid, X=X, Xinv=Xi, method=method,
        jump_times=np.array(jt),
        jump_pre=np.array(jpre) if jpre else np.empty((0, d, d)),
        jump_post=np.array(jpost) if jpost else np.empty((0, d, d)),
    )


# -- operations ----------------------------------------------------------------

def sample_levy_path(triplet: MatrixLevyTriplet, T: float, dt: float, seed) -> LevyPath:
    """Draw one path of L on [0, T].

    The grid is the uniform partition with ceil(T/dt) cells merged with the
    (Poisson) jump times, so jumps sit exactly on grid points.  Brownian
    increments per cell have covariance (cell length) * sigma on vec
    coordinates and the drift adds (cell length) * gamma^0.  Deterministic
    given ``seed`` (an integer or a numpy SeedSequence).
    """
    if dt <= 0 or T <= 0:
        raise InvalidStep(f"need 0 < dt <= T, got dt={dt}, T={T}")
    if dt > T:
        raise InvalidStep(f"need dt <= T, got dt={dt} > T={T}")
    rng = np.random.default_rng(seed)
    d = triplet.d

    jumps: tuple[tuple[float, np.ndarray], ...] = ()
    jump_times = np.empty(0)
    if triplet.jumps.active:
        n_jumps = int(rng.poisson(triplet.jumps.rate * T))
        times = np.sort(T * (1.0 - rng.random(n_jumps)))
        probs = np.array([p for p, _ in triplet.jumps.atoms])
        kinds = rng.choice(len(probs), size=n_jumps, p=probs / probs.sum())
        jumps = tuple(
            (float(t), triplet.jumps.atoms[int(k)][1]) for t, k in zip(times, kinds)
        )
        jump_times = times

    n_cells = max(1, int(np.ceil(T / dt - 1e-12)))
    base = np.arange(n_cells + 1) * (T / n_cells)
    base[-1] = T
    grid = np.unique(np.concatenate([base, jump_times]))

    lens = np.diff(grid)
    inc = lens[:, None, None] * triplet.drift()
    if triplet.has_gaussian_part():
        a = psd_factor(triplet.sigma)
        z = rng.standard_normal((len(lens), d * d))
        bvec = (z * np.sqrt(lens)[:, None]) @ a.T
        # vec is column-stacked: flat index j*d+m <-> entry (m, j)
        inc = inc + bvec.reshape(-1, d, d).transpose(0, 2, 1)

    stored_seed = int(seed) if isinstance(seed, (int, np.integer)) else None
    return LevyPath(grid=grid, increments=inc, jumps=jumps, seed=stored_seed)


def coarsen_path(path: LevyPath, factor: int) -> LevyPath:
    """Aggregate a path onto the subgrid keeping every ``factor``-th uniform
    point while preserving all jump times — the two paths then share the same
    underlying noise (common-random-number coupling across step sizes)."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    keep = np.zeros(len(path.grid), dtype=bool)
    keep[0] = keep[-1] = True
    # keep jump times and every factor-th point of the original uniform layout
    jump_set = {t for t, _ in path.jumps}
    count = 0
    for i, t in enumerate(path.grid):
        if t in jump_set:
            keep[i] = True
        elif i > 0:
            count += 1
            if count % factor == 0:
                keep[i] = True
    idx = np.flatnonzero(keep)
    grid = path.grid[idx]
    inc = np.add.reduceat(path.increments, idx[:-1], axis=0)
    return LevyPath(grid=grid, increments=inc, jumps=path.jumps, seed=path.seed)


def exact_cpp_exponential(path: LevyPath, triplet: MatrixLevyTriplet) -> ExpPath:
    """Exponential via the exact product of drift exponentials and jump factors.

    X_t = e^{tau_1 gamma^0}(I + dL_{tau_1}) e^{(tau_2-tau_1) gamma^0} ... —
    exact up to matrix-exponential evaluation; requires sigma = 0.
    """
    if triplet.has_gaussian_part():
        raise HasGaussianPart("exact product requires a triplet with sigma = 0")
    g0 = triplet.drift()
    lens = np.diff(path.grid)
    if np.any(g0 != 0.0):
        factors = [expm(el * g0) for el in lens]
        invs = [expm(-el * g0) for el in lens]
    else:
        eye = np.eye(path.d)
        factors = [eye] * len(lens)
        invs = [eye] * len(lens)
    return _walk(path, factors, "exact_cpp", cell_inv=invs)


def emery_exponential(path: LevyPath) -> ExpPath:
    """Exponential via the ordered product of (I + cell increment) factors,
    with jumps inserted exactly at their times as separate (I + mark) factors."""
    eye = np.eye(path.d)
    factors = eye + path.increments
    return _walk(path, factors, "emery", check_dets=True)


def skorokhod_reconstruct(path: LevyPath, eps: float,
                          triplet: MatrixLevyTriplet | None = None) -> np.ndarray:
    """X_T reassembled from the big-jump-truncated exponential.

    Jumps with operator norm >= eps are removed from the path and the
    exponential X^eps of the truncated path is computed; with Q(s, t) =
    (X^eps_s)^{-1} X^eps_t its two-sided transitions and tau_1 < ... < tau_N
    the removed jump times with marks D_k,

        X_T = sum over subsets {k_1 < ... < k_l} of {1..N} of
              Q(0, tau_{k_1}) D_{k_1} Q(tau_{k_1}, tau_{k_2}) ... D_{k_l} Q(tau_{k_l}, T)

    (the empty subset contributing Q(0, T) = X^eps_T).  The sum telescopes to
    the interlaced product Q(0,tau_1)(I+D_1)Q(tau_1,tau_2)...(I+D_N)Q(tau_N,T),
    so the identity with the full-path evaluation is exact factor algebra.
    The truncated exponential uses the exact product when ``triplet`` (with
    sigma = 0) is supplied, otherwise the Emery product.
    """
    from itertools import combinations

    big = [(t, a) for t, a in path.jumps if op_norm(a) >= eps]
    big.sort(key=lambda ta: ta[0])
    small = tuple((t, a) for t, a in path.jumps if op_norm(a) < eps)
    trunc = LevyPath(grid=path.grid, increments=path.increments,
                     jumps=small, seed=path.seed)
    if triplet is not None and not triplet.has_gaussian_part():
        tr_exp = exact_cpp_exponential(trunc, triplet)
    else:
        tr_exp = emery_exponential(trunc)

    n_big = len(big)
    if n_big == 0:
        return tr_exp.X[-1].copy()

    grid = path.grid
    tol = 1e-9 * max(1.0, path.T)
    bidx = []
    for t, _ in big:
        k = int(np.searchsorted(grid, t))
        if k < len(grid) and abs(grid[k] - t) <= tol:
            bidx.append(k)
        else:
            bidx.append(k - 1)
    bounds = [0] + bidx + [len(grid) - 1]
    marks = [a for _, a in big]

    # two-sided truncated transitions Q[i][j] between boundary i and j, via
    # the group property Q(s, t) = (X^eps_s)^{-1} X^eps_t
    m = n_big + 2
    Q = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            Q[i][j] = np.linalg.solve(tr_exp.X[bounds[i]], tr_exp.X[bounds[j]])

    total = Q[0][n_big + 1].copy()
    for ell in range(1, n_big + 1):
        for ks in combinations(range(1, n_big + 1), ell):
            term = Q[0][ks[0]]
            for a, b in zip(ks, ks[1:]):
                term = term @ marks[a - 1] @ Q[a][b]
            term = term @ marks[ks[-1] - 1] @ Q[ks[-1]][n_big + 1]
            total = total + term
    return total


def stochastic_logarithm(exp_path: ExpPath) -> LevyPath:
    """Recover the driving path: increment over a cell is X_{t-}^{-1} dX, and
    each recorded jump yields its mark exactly as X_{tau-}^{-1} (X_tau - X_tau-)."""
    grid = exp_path.grid
    X = exp_path.X
    n = len(grid)
    d = exp_path.d

    jump_at: dict[int, list[int]] = {}
    tol = 1e-9 * max(1.0, exp_path.T)
    for j, t in enumerate(np.asarray(exp_path.jump_times)):
        k = int(np.searchsorted(grid, t))
        if k < len(grid) and abs(grid[k] - t) <= tol:
            jump_at.setdefault(k, []).append(j)
        elif k > 0 and abs(grid[k - 1] - t) <= tol:
            jump_at.setdefault(k - 1, []).append(j)
        else:
            raise ValueError(f"jump time {t} is not a grid point")

    def _solve(mat, rhs):
        try:
            out = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            raise SingularState("state X_t is singular; cannot invert") from None
        if not np.all(np.isfinite(out)):
            raise SingularState("state X_t is numerically singular")
        return out

    increments = np.empty((n - 1, d, d))
    jumps: list[tuple[float, np.ndarray]] = []
    for c in range(n - 1):
        js = jump_at.get(c + 1, [])
        end_pre = exp_path.jump_pre[js[0]] if js else X[c + 1]
        increments[c] = _solve(X[c], end_pre - X[c])
        for j in js:
            pre = exp_path.jump_pre[j]
            post = exp_path.jump_post[j]
            jumps.append((float(grid[c + 1]), _solve(pre, post - pre)))
    return LevyPath(grid=grid, increments=increments, jumps=tuple(jumps), seed=None)


def mean_check(triplet: MatrixLevyTriplet, t: float, n_paths: int, seed) -> MeanCheckReport:
    """Monte Carlo test of E[X_t] = exp(t E[L_1]), componentwise z-scores.

    Paths use independent child streams spawned from the master seed.  Exact
    products are used when sigma = 0, otherwise the Emery scheme on a fine
    grid (t/256).
    """
    if t <= 0 or n_paths < 2:
        raise ValueError("need t > 0 and n_paths >= 2")
    d = triplet.d
    use_exact = not triplet.has_gaussian_part()
    dt = t if use_exact else t / 256.0
    children = np.random.SeedSequence(seed).spawn(n_paths)
    samples = np.empty((n_paths, d, d))
    for b, child in enumerate(children):
        path = sample_levy_path(triplet, t, dt, child)
        ep = (exact_cpp_exponential(path, triplet) if use_exact
              else emery_exponential(path))
        samples[b] = ep.X[-1]
    mc = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n_paths)
    target = expm(t * triplet.mean_l1())
    diff = mc - target
    # identical samples leave only rounding jitter in se, which is not a
    # usable standard error: such entries get se = 0 and z = 0 (or inf when
    # the means genuinely disagree)
    degenerate = se <= 1e-9 * np.maximum(1.0, np.abs(target))
    se = np.where(degenerate, 0.0, se)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(~degenerate, diff / np.where(degenerate, 1.0, se),
                     np.where(np.abs(diff) <= 1e-9 * np.maximum(1.0, np.abs(target)),
                              0.0, np.inf))
    return MeanCheckReport(t=float(t), n_paths=n_paths, mc_mean=mc,
                           target=target, se=se, z=z)
