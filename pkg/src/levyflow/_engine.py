"""Internal vectorized Monte Carlo engine.

Batches of exponential states evolve by right-multiplying one factor per time
step, F = expm(dt * gamma^0) @ (I + dB) — exact on drift-only specifications —
followed by the exact jump factors (I + a) for the Poisson number of jumps in
the cell.  States are renormalized every step (Euclidean norm for vectors,
Frobenius for matrices) with the log-scale accumulated separately, so
long-horizon norm statistics are exact at snapshot times and never overflow.

A single batched RNG stream with a fixed per-step draw order (Gaussians, then
jump counts, then atom choices) drives each run: results are deterministic
given the seed, independent of BLAS threading.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from ._linalg import psd_factor
from .levy_model import MatrixLevyTriplet


class _StepScheme:
    """Per-step factor generator for one (triplet, dt) pair."""

    def __init__(self, triplet: MatrixLevyTriplet, dt: float):
        self.d = triplet.d
        self.dt = float(dt)
        self.drift_factor = expm(self.dt * triplet.drift())
        if triplet.has_gaussian_part():
            self.gauss = psd_factor(triplet.sigma) * np.sqrt(self.dt)
        else:
            self.gauss = None
        j = triplet.jumps
        if j.active:
            self.jump_rate = float(j.rate)
            probs = np.array([p for p, _ in j.atoms])
            self.probs = probs / probs.sum()
            eye = np.eye(self.d)
            self.jump_factors = np.stack([eye + a for _, a in j.atoms])
        else:
            self.jump_rate = 0.0

    def cont_factors(self, rng, n: int):
        """(n, d, d) per-path factors, or None when the drift factor alone
        applies to the whole batch (no Gaussian part)."""
        if self.gauss is None:
            return None
        z = rng.standard_normal((n, self.d * self.d))
        # vec is column-stacked: flat index j*d+m <-> entry (m, j)
        b = (z @ self.gauss.T).reshape(n, self.d, self.d).transpose(0, 2, 1)
        return self.drift_factor + self.drift_factor @ b

    def jump_plan(self, rng, n: int):
        """[(path indices, atom indices)] rounds covering all jumps this step."""
        if self.jump_rate == 0.0:
            return []
        counts = rng.poisson(self.jump_rate * self.dt, n)
        plan = []
        while True:
            act = np.flatnonzero(counts > 0)
            if act.size == 0:
                break
            if len(self.probs) > 1:
                choice = rng.choice(len(self.probs), size=act.size, p=self.probs)
            else:
                choice = np.zeros(act.size, dtype=int)
            plan.append((act, choice))
            counts[act] -= 1
        return plan


def _snapshot_indices(snapshot_times, n_steps: int, dt: float, T: float):
    idx = []
    for t in snapshot_times:
        k = int(round(t / dt))
        if k < 0 or k > n_steps or abs(k * dt - t) > 1e-9 * max(1.0, T):
            raise ValueError(f"snapshot time {t} does not align with the step grid")
        idx.append(k)
    by_step: dict[int, list[int]] = {}
    for pos, k in enumerate(idx):
        by_step.setdefault(k, []).append(pos)
    return idx, by_step


def evolve_vectors(triplet: MatrixLevyTriplet, starts, T: float, n_paths: int,
                   seed, snapshot_times, dt: float = 0.05):
    """Evolve row vectors y -> y @ X_t for a batch of paths.

    ``starts`` is (m, d): all m start vectors share the same noise within a
    path (common-random-number coupling); paths are independent.  A
    (n_paths, m, d) array gives each path its own start vectors instead.
    Returns (times, dirs, logs) with dirs of shape (k, n_paths, m, d) holding
    unit vectors and logs of shape (k, n_paths, m) holding log ||y @ X_t||.
    """
    starts = np.asarray(starts, dtype=float)
    if starts.ndim == 1:
        starts = starts[None, :]
    if starts.ndim == 2:
        starts = np.broadcast_to(starts, (n_paths,) + starts.shape)
    if starts.shape[0] != n_paths:
        raise ValueError("per-path starts must have leading dimension n_paths")
    _, m, d = starts.shape
    n_steps = max(1, int(round(T / dt)))
    dt_eff = T / n_steps
    snap, by_step = _snapshot_indices(snapshot_times, n_steps, dt_eff, T)
    scheme = _StepScheme(triplet, dt_eff)
    rng = np.random.default_rng(seed)

    v = starts.astype(float).copy()
    norms = np.linalg.norm(v, axis=2, keepdims=True)
    logs = np.log(norms[..., 0])
    v = v / norms

    out_dirs = np.empty((len(snap), n_paths, m, d))
    out_logs = np.empty((len(snap), n_paths, m))

    def record(step):
        for pos in by_step.get(step, ()):
            out_dirs[pos] = v
            out_logs[pos] = logs

    record(0)
    for step in range(1, n_steps + 1):
        f = scheme.cont_factors(rng, n_paths)
        if f is None:
            v = v @ scheme.drift_factor
        else:
            v = np.einsum("pmi,pij->pmj", v, f)
        for act, choice in scheme.jump_plan(rng, n_paths):
            v[act] = np.einsum("pmi,pij->pmj", v[act], scheme.jump_factors[choice])
        norms = np.linalg.norm(v, axis=2, keepdims=True)
        logs = logs + np.log(norms[..., 0])
        v = v / norms
        record(step)
    times = np.array([k * dt_eff for k in snap])
    return times, out_dirs, out_logs


def evolve_matrices(triplet: MatrixLevyTriplet, T: float, n_paths: int, seed,
                    snapshot_times, dt: float = 0.05, renormalize: bool = True):
    """Evolve full states X_t for a batch of independent paths.

    Returns (times, mats, logs): mats is (k, n_paths, d, d); with
    ``renormalize`` the states are unit Frobenius norm and logs holds the
    accumulated log-scale (X_t = exp(logs) * mats), otherwise logs is zero.
    """
    d = triplet.d
    n_steps = max(1, int(round(T / dt)))
    dt_eff = T / n_steps
    snap, by_step = _snapshot_indices(snapshot_times, n_steps, dt_eff, T)
    scheme = _StepScheme(triplet, dt_eff)
    rng = np.random.default_rng(seed)

    mat = np.broadcast_to(np.eye(d), (n_paths, d, d)).copy()
    logs = np.zeros(n_paths)
    out_mats = np.empty((len(snap), n_paths, d, d))
    out_logs = np.empty((len(snap), n_paths))

    def record(step):
        for pos in by_step.get(step, ()):
            out_mats[pos] = mat
            out_logs[pos] = logs

    record(0)
    for step in range(1, n_steps + 1):
        f = scheme.cont_factors(rng, n_paths)
        if f is None:
            mat = mat @ scheme.drift_factor
        else:
            mat = mat @ f
        for act, choice in scheme.jump_plan(rng, n_paths):
            mat[act] = mat[act] @ scheme.jump_factors[choice]
        if renormalize:
            scale = np.sqrt(np.einsum("pij,pij->p", mat, mat))
            logs = logs + np.log(scale)
            mat = mat / scale[:, None, None]
        record(step)
    times = np.array([k * dt_eff for k in snap])
    return times, out_mats, out_logs


def terminal_op_norm_logs(triplet: MatrixLevyTriplet, T: float, n_paths: int,
                          seed, dt: float = 0.05) -> np.ndarray:
    """log of the operator norm of X_T per path, (n_paths,)."""
    _, mats, logs = evolve_matrices(triplet, T, n_paths, seed, [T], dt=dt)
    sv = np.linalg.svd(mats[0], compute_uv=False)[:, 0]
    return logs[0] + np.log(sv)
