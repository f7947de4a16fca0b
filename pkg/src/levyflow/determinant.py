"""The log-determinant of the stochastic exponential, in closed form.

D_t = det(X_t) is a scalar stochastic exponential whose logarithm is the
additive process

    log|D_t| = trace(continuous part of L_t) - (s2/2) t
               + sum_{jumps s <= t} log|det(I + dL_s)|,

with s2 = sum_{m,n} sigma_{(m,n),(n,m)}.  All jump integrals reduce to exact
atom sums for finite-activity specifications.  Long-horizon statistics track
log|D| (never D itself) to avoid overflow; the sign is carried separately.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import fro_norm, log_abs_det
from .levy_model import DET_TOL, MatrixLevyTriplet, SingularJump
from .path_sampler import LevyPath, _marks_by_grid_index

__all__ = [
    "CheckTriplet", "check_characteristics", "det_closed_form",
    "det_log_series", "det_growth_mean", "det_clt_params", "sl_membership",
]


@dataclass(frozen=True)
class CheckTriplet:
    """Characteristic triplet of the scalar process log|D_t|.

    nu_D lists (rate_i, log|det(I + a_i)|) with zero values dropped;
    mean is E[log|D_1|] (always defined for finite activity).
    """

    sigma_D: float
    gamma_D: float
    nu_D: tuple[tuple[float, float], ...]
    mean_exists: bool
    mean: float | None


def _sigma_d(sigma: np.ndarray, d: int) -> float:
    """sum_{m,n} sigma_{(m,m),(n,n)} — variance rate of the Brownian trace."""
    idx = np.arange(d) * (d + 1)
    return float(sigma[np.ix_(idx, idx)].sum())


def _s2(sigma: np.ndarray, d: int) -> float:
    """sum_{m,n} sigma_{(m,n),(n,m)} — the Ito correction in log det."""
    m, n = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    return float(sigma[n * d + m, m * d + n].sum())


def _atom_logdets(triplet: MatrixLevyTriplet) -> list[tuple[float, float, float]]:
    """(rate_i, v_i, trace a_i) per atom with v_i = log|det(I + a_i)|."""
    eye = np.eye(triplet.d)
    out = []
    for r, a in triplet.jumps.atom_rates():
        sign, logabs = log_abs_det(eye + a)
        if sign == 0.0:
            raise SingularJump("det(I + a) = 0 for a jump atom")
        out.append((r, float(logabs), float(np.trace(a))))
    return out


def check_characteristics(triplet: MatrixLevyTriplet) -> CheckTriplet:
    """Characteristic triplet and mean of log|D| from the driving triplet."""
    d = triplet.d
    sigma_d = _sigma_d(triplet.sigma, d)
    s2 = _s2(triplet.sigma, d)
    base = float(np.trace(triplet.gamma)) - 0.5 * s2
    gamma_d = base
    mean = base
    nu = []
    for (r, v, tr_a), (_, a) in zip(_atom_logdets(triplet), triplet.jumps.atom_rates()):
        small_atom = fro_norm(a) <= 1.0
        gamma_d += r * (v * (abs(v) <= 1.0) - tr_a * small_atom)
        mean += r * (v - tr_a * small_atom)
        if v != 0.0:
            nu.append((r, v))
    return CheckTriplet(sigma_D=sigma_d, gamma_D=gamma_d, nu_D=tuple(nu),
                        mean_exists=True, mean=mean)


def det_log_series(path: LevyPath, triplet: MatrixLevyTriplet):
    """(t, log|D_t|, sign(D_t)) at every grid point of the path."""
    d = path.d
    eye = np.eye(d)
    s2 = _s2(triplet.sigma, d)
    n = len(path.grid)
    tr = np.zeros(n)
    tr[1:] = np.cumsum(np.trace(path.increments, axis1=1, axis2=2))
    logabs = tr - 0.5 * s2 * path.grid
    sign = np.ones(n)
    for idx, marks in _marks_by_grid_index(path).items():
        for a in marks:
            s, la = log_abs_det(eye + a)
            if s == 0.0 or la <= np.log(DET_TOL):
                raise SingularJump(f"jump at t={path.grid[idx]} makes det(I + dL) vanish")
            logabs[idx:] += la
            sign[idx:] *= s
    return path.grid.copy(), logabs, sign


def det_closed_form(path: LevyPath, triplet: MatrixLevyTriplet) -> np.ndarray:
    """Sequence of (t, D_t) rows along the path, by the explicit formula."""
    t, logabs, sign = det_log_series(path, triplet)
    return np.column_stack([t, sign * np.exp(logabs)])


def det_growth_mean(triplet: MatrixLevyTriplet) -> float:
    """lim t^{-1} log|D_t| = E[log|D_1|]."""
    return float(check_characteristics(triplet).mean)


def det_clt_params(triplet: MatrixLevyTriplet, T: float):
    """Centering and scale normalizing log|D_T|, plus applicability.

    With finitely many atoms the tail function T1 vanishes beyond the largest
    |log det| value, so the Gaussian-regime normalization applies whenever
    sigma_D > 0: centering = T*(gamma_D + T2(1) + int_1^inf T2), scale =
    sqrt(sigma_D * T).
    """
    ct = check_characteristics(triplet)
    t2_at_1 = 0.0
    t2_tail = 0.0
    for r, v in ct.nu_D:
        s = np.sign(v)
        t2_at_1 += r * s * (abs(v) > 1.0)
        t2_tail += r * s * max(abs(v) - 1.0, 0.0)
    centering = T * (ct.gamma_D + t2_at_1 + t2_tail)
    applicable = ct.sigma_D > 0.0
    scale = float(np.sqrt(ct.sigma_D * T)) if applicable else 0.0
    return float(centering), scale, applicable


def sl_membership(triplet: MatrixLevyTriplet):
    """Does X stay in SL(d)?  Three conditions, each reported on failure:

    - "brownian-trace": the Brownian trace variance rate sigma_D must vanish;
    - "drift-trace":    2 trace(gamma^0) must equal s2;
    - "jump-det":       every atom needs det(I + a) = 1.
    """
    d = triplet.d
    failed = []
    if _sigma_d(triplet.sigma, d) > 1e-12:
        failed.append("brownian-trace")
    s2 = _s2(triplet.sigma, d)
    drift_trace = 2.0 * float(np.trace(triplet.drift()))
    if abs(drift_trace - s2) > 1e-12 * max(1.0, abs(s2), abs(drift_trace)):
        failed.append("drift-trace")
    eye = np.eye(d)
    for _, a in triplet.jumps.atom_rates():
        if abs(np.linalg.det(eye + a) - 1.0) > 1e-12:
            failed.append("jump-det")
            break
    return (not failed), failed
