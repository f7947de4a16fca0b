"""Matrix-valued Levy process specifications.

A process L in R^{d x d} is described by the characteristic triplet of
vec(L): a Gaussian covariance ``sigma`` (d^2 x d^2), a location matrix
``gamma``, and a finite-activity jump specification (total rate plus a
discrete list of mark atoms).  Because jumps are finite activity, the drift
``drift0`` (the location with the small-jump compensation removed) is always
defined and the two are linked by

    gamma = drift0 + rate * sum_i p_i * a_i * 1{ ||vec a_i|| <= 1 }.

Cutoff indicators use the Euclidean norm of vec(.), i.e. the Frobenius norm;
free-standing matrix norms (moment integrals, jump thresholds) use the
operator 2-norm.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from ._linalg import fro_norm, op_norm

__all__ = [
    "PSD_TOL", "DET_TOL",
    "JumpSpec", "MatrixLevyTriplet", "ValidationReport", "MomentReport",
    "UnknownName", "SingularJump",
    "validate", "moment_check", "builtin_triplet",
    "triplet_to_config", "triplet_from_config",
]

PSD_TOL = 1e-10      # relative floor for sigma eigenvalues
DET_TOL = 1e-12      # |det(I + a)| below this counts as singular


class UnknownName(ValueError):
    """Requested builtin specification does not exist."""


class SingularJump(ValueError):
    """A jump mark a has det(I + a) = 0, so I + a is not invertible."""


def _matrix(x, shape, what: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != shape:
        raise ValueError(f"{what} must have shape {shape}, got {a.shape}")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JumpSpec:
    """Finite-activity jump part: total intensity plus discrete mark atoms.

    ``truncation_note`` records the epsilon of a user-built truncation when
    this spec stands in for an infinite-activity measure with its jumps of
    size below epsilon discarded.
    """

    rate: float = 0.0
    atoms: tuple[tuple[float, np.ndarray], ...] = ()
    truncation_note: float | None = None

    def __post_init__(self):
        atoms = tuple(
            (float(p), np.asarray(a, dtype=float)) for p, a in self.atoms
        )
        for _, a in atoms:
            a.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def active(self) -> bool:
        return self.rate > 0.0 and len(self.atoms) > 0

    def atom_rates(self) -> list[tuple[float, np.ndarray]]:
        """(rate_i, a_i) pairs with rate_i = rate * p_i."""
        return [(self.rate * p, a) for p, a in self.atoms]


_NO_JUMPS = JumpSpec()


@dataclass(frozen=True, eq=False)
class MatrixLevyTriplet:
    """Characteristic triplet of a matrix-valued Levy process.

    sigma follows the vec-index convention of :mod:`levyflow._linalg`:
    sigma[(j*d+m, l*d+n)] is the Gaussian covariance between components
    L^(m,j) and L^(n,l) (0-based indices).
    """

    d: int
    sigma: np.ndarray
    gamma: np.ndarray
    drift0: np.ndarray | None = None
    jumps: JumpSpec = _NO_JUMPS

    def __post_init__(self):
        d = int(self.d)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "sigma", _matrix(self.sigma, (d * d, d * d), "sigma"))
        object.__setattr__(self, "gamma", _matrix(self.gamma, (d, d), "gamma"))
        if self.drift0 is not None:
            object.__setattr__(self, "drift0", _matrix(self.drift0, (d, d), "drift0"))

    # -- derived quantities -------------------------------------------------

    def jump_compensator(self) -> np.ndarray:
        """rate * sum p_i a_i 1{||vec a_i|| <= 1}; difference gamma - drift0."""
        comp = np.zeros((self.d, self.d))
        for r, a in self.jumps.atom_rates():
            if fro_norm(a) <= 1.0:
                comp = comp + r * a
        return comp

    def drift(self) -> np.ndarray:
        """The drift gamma^0 (location minus small-jump compensation)."""
        if self.drift0 is not None:
            return self.drift0
        return self.gamma - self.jump_compensator()

    def mean_l1(self) -> np.ndarray:
        """E[L_1] = drift + rate * sum p_i a_i (finite activity)."""
        m = self.drift().copy()
        for r, a in self.jumps.atom_rates():
            m = m + r * a
        return m

    def has_gaussian_part(self) -> bool:
        return bool(np.any(self.sigma != 0.0))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`: violations are data, not exceptions."""

    valid: bool
    violations: tuple[tuple[str, str, int | None], ...]

    def rules(self) -> set[str]:
        return {rule for rule, _, _ in self.violations}


@dataclass(frozen=True)
class MomentReport:
    """Finite-sum evaluations of the jump moment integrals at exponent epsilon."""

    epsilon: float
    integral_big: float
    integral_inv: float
    finite: bool
    sufficient_small_jump_bound: float | None


def validate(triplet: MatrixLevyTriplet) -> ValidationReport:
    """Check all structural invariants of a triplet; never raises."""
    bad: list[tuple[str, str, int | None]] = []
    d = triplet.d
    if d < 1:
        bad.append(("dimension", f"d must be >= 1, got {d}", None))

    sigma = triplet.sigma
    scale = max(op_norm((sigma + sigma.T) / 2.0), 1e-300)
    asym = float(np.max(np.abs(sigma - sigma.T)))
    if asym > 1e-10 * max(scale, 1.0):
        bad.append(("sigma-symmetric", f"sigma asymmetry {asym:.3e}", None))
    else:
        lo = float(np.min(np.linalg.eigvalsh((sigma + sigma.T) / 2.0)))
        if lo < -PSD_TOL * scale:
            bad.append(("sigma-psd", f"least eigenvalue {lo:.3e} below tolerance", None))

    j = triplet.jumps
    if j.rate < 0:
        bad.append(("rate-nonnegative", f"jump rate {j.rate} < 0", None))
    if j.active:
        psum = sum(p for p, _ in j.atoms)
        if abs(psum - 1.0) > 1e-12:
            bad.append(("jump-prob-sum", f"atom probabilities sum to {psum!r}", None))
    for i, (p, a) in enumerate(j.atoms):
        if a.shape != (d, d):
            bad.append(("jump-atom-shape", f"atom {i} has shape {a.shape}", i))
            continue
        if p <= 0:
            bad.append(("jump-prob-positive", f"atom {i} has probability {p}", i))
        if not np.any(a != 0.0):
            bad.append(("jump-atom-nonzero", f"atom {i} is the zero matrix", i))
        if abs(np.linalg.det(np.eye(d) + a)) <= DET_TOL:
            bad.append(("nonsingular-jump", f"atom {i}: det(I + a) vanishes", i))
        for k in range(i):
            if j.atoms[k][1].shape == a.shape and np.max(np.abs(j.atoms[k][1] - a)) <= 1e-12:
                bad.append(("jump-atoms-distinct", f"atoms {k} and {i} coincide", i))

    if triplet.drift0 is not None:
        want = triplet.drift0 + triplet.jump_compensator()
        err = float(np.max(np.abs(triplet.gamma - want)))
        ref = max(1.0, float(np.max(np.abs(want))))
        if err > 1e-9 * ref:
            bad.append(
                ("drift-consistency",
                 f"gamma differs from drift0 + compensated atoms by {err:.3e}", None)
            )

    return ValidationReport(valid=not bad, violations=tuple(bad))


def moment_check(triplet: MatrixLevyTriplet, epsilon: float) -> MomentReport:
    """Evaluate the jump moment integrals as exact atom sums.

    integral_big  = rate * sum_{||a||>1} p ||a||^eps
    integral_inv  = same with a replaced by (I+a)^{-1} - I
    and, when atoms with ||a|| < 1 exist, the sufficient small-jump bound
    rate * sum_{0<||a||<1} p (1/(1-||a||))^eps.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    d = triplet.d
    eye = np.eye(d)
    big = 0.0
    inv = 0.0
    small: float | None = None
    for r, a in triplet.jumps.atom_rates():
        if abs(np.linalg.det(eye + a)) <= DET_TOL:
            raise SingularJump(f"det(I + a) = 0 for atom {a!r}")
        na = op_norm(a)
        if na > 1.0:
            big += r * na ** epsilon
        u = np.linalg.solve(eye + a, eye) - eye
        nu = op_norm(u)
        if nu > 1.0:
            inv += r * nu ** epsilon
        if 0.0 < na < 1.0:
            small = (small or 0.0) + r * (1.0 / (1.0 - na)) ** epsilon
    return MomentReport(
        epsilon=float(epsilon),
        integral_big=big,
        integral_inv=inv,
        finite=True,
        sufficient_small_jump_bound=small,
    )


# -- builtin catalog ---------------------------------------------------------

def _from_drift(d: int, sigma, drift0, jumps: JumpSpec = _NO_JUMPS) -> MatrixLevyTriplet:
    """Build a triplet from its drift, deriving the consistent location gamma."""
    t0 = MatrixLevyTriplet(d=d, sigma=sigma, gamma=np.zeros((d, d)),
                           drift0=np.zeros((d, d)), jumps=jumps)
    gamma = np.asarray(drift0, dtype=float) + t0.jump_compensator()
    return MatrixLevyTriplet(d=d, sigma=sigma, gamma=gamma, drift0=drift0, jumps=jumps)


def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def _builtin_standard_brownian(d: int) -> MatrixLevyTriplet:
    d = int(d)
    return MatrixLevyTriplet(d=d, sigma=np.eye(d * d), gamma=np.zeros((d, d)),
                             drift0=np.zeros((d, d)))


def _builtin_rotation_rank1() -> MatrixLevyTriplet:
    drift0 = np.array([[0.0, -1.0], [1.0, 0.0]])
    atom = np.array([[1.0, 0.0], [0.0, 0.0]])
    return _from_drift(2, np.zeros((4, 4)), drift0,
                       JumpSpec(rate=1.0, atoms=((1.0, atom),)))


def _builtin_irrational_rotation(phi: float) -> MatrixLevyTriplet:
    drift0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    atom = _rotation(float(phi)) - np.eye(2)
    return _from_drift(2, np.zeros((4, 4)), drift0,
                       JumpSpec(rate=1.0, atoms=((1.0, atom),)))


def _builtin_sl2_conservative() -> MatrixLevyTriplet:
    # Gaussian part (W1, W3, W2, -W1) in vec order: trace of the Brownian
    # matrix is identically zero.  Drift trace 1 balances the Ito correction
    # (sum sigma_{(m,n),(n,m)} = 2) and the single nilpotent atom has
    # det(I + a) = 1, so det X_t = 1 for all t.
    sigma = np.array([
        [1.0, 0.0, 0.0, -1.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0, 1.0],
    ])
    drift0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    atom = np.array([[0.0, 1.0], [0.0, 0.0]])
    return _from_drift(2, sigma, drift0, JumpSpec(rate=1.0, atoms=((1.0, atom),)))


def _builtin_diagonal_reducible() -> MatrixLevyTriplet:
    drift0 = np.array([[0.5, 0.0], [0.0, -0.5]])
    a1 = np.array([[1.0, 0.0], [0.0, 0.0]])
    a2 = np.array([[0.0, 0.0], [0.0, -0.5]])
    return _from_drift(2, np.zeros((4, 4)), drift0,
                       JumpSpec(rate=1.0, atoms=((0.5, a1), (0.5, a2))))


def _builtin_gbm1(mu: float, sigma_vol: float) -> MatrixLevyTriplet:
    return MatrixLevyTriplet(d=1, sigma=np.array([[float(sigma_vol) ** 2]]),
                             gamma=np.array([[float(mu)]]),
                             drift0=np.array([[float(mu)]]))


_BUILTIN_PARSERS = {
    "standard_brownian": (_builtin_standard_brownian, 1),
    "rotation_rank1": (_builtin_rotation_rank1, 0),
    "irrational_rotation": (_builtin_irrational_rotation, 1),
    "sl2_conservative": (_builtin_sl2_conservative, 0),
    "diagonal_reducible": (_builtin_diagonal_reducible, 0),
    "gbm1": (_builtin_gbm1, 2),
}


def builtin_triplet(name: str) -> MatrixLevyTriplet:
    """Look up a named example triplet, e.g. ``standard_brownian(2)`` or
    ``gbm1(0.1, 0.2)``."""
    m = re.fullmatch(r"\s*([a-z0-9_]+)\s*(?:\((.*)\))?\s*", name)
    if not m:
        raise UnknownName(f"cannot parse builtin name {name!r}")
    base, argstr = m.group(1), m.group(2)
    if base not in _BUILTIN_PARSERS:
        known = ", ".join(sorted(_BUILTIN_PARSERS))
        raise UnknownName(f"unknown builtin {base!r}; known: {known}")
    fn, n_args = _BUILTIN_PARSERS[base]
    args: list[float] = []
    if argstr is not None and argstr.strip():
        try:
            args = [float(tok) for tok in argstr.split(",")]
        except ValueError as exc:
            raise UnknownName(f"bad arguments in {name!r}: {exc}") from None
    if len(args) != n_args:
        raise UnknownName(f"{base} takes {n_args} argument(s), got {len(args)}")
    if base == "standard_brownian":
        if args[0] != int(args[0]) or args[0] < 1:
            raise UnknownName("standard_brownian takes a positive integer dimension")
        return fn(int(args[0]))
    return fn(*args)


# -- config (de)serialization ------------------------------------------------

def triplet_to_config(triplet: MatrixLevyTriplet) -> dict:
    """Nested key-value document with exact decimal round-trip."""
    doc: dict = {
        "d": triplet.d,
        "sigma": [float(x) for x in triplet.sigma.ravel()],
        "gamma": [float(x) for x in triplet.gamma.ravel()],
    }
    if triplet.drift0 is not None:
        doc["drift0"] = [float(x) for x in triplet.drift0.ravel()]
    if triplet.jumps.rate != 0.0 or triplet.jumps.atoms:
        jd: dict = {
            "rate": float(triplet.jumps.rate),
            "atoms": [
                {"prob": float(p), "matrix": [float(x) for x in a.ravel()]}
                for p, a in triplet.jumps.atoms
            ],
        }
        if triplet.jumps.truncation_note is not None:
            jd["truncation_eps"] = float(triplet.jumps.truncation_note)
        doc["jumps"] = jd
    return doc


def triplet_from_config(doc: dict) -> MatrixLevyTriplet:
    """Inverse of :func:`triplet_to_config`."""
    try:
        d = int(doc["d"])
    except KeyError:
        raise ValueError("config missing key 'd'") from None
    def grid(key, rows, cols, required=True):
        if key not in doc:
            if required:
                raise ValueError(f"config missing key {key!r}")
            return None
        vals = np.asarray(doc[key], dtype=float)
        if vals.size != rows * cols:
            raise ValueError(f"key {key!r} must list {rows * cols} numbers")
        return vals.reshape(rows, cols)

    sigma = grid("sigma", d * d, d * d)
    gamma = grid("gamma", d, d)
    drift0 = grid("drift0", d, d, required=False)
    jumps = _NO_JUMPS
    if "jumps" in doc and doc["jumps"] is not None:
        jd = doc["jumps"]
        atoms = []
        for i, ad in enumerate(jd.get("atoms", [])):
            mat = np.asarray(ad["matrix"], dtype=float)
            if mat.size != d * d:
                raise ValueError(f"jumps.atoms[{i}].matrix must list {d * d} numbers")
            atoms.append((float(ad["prob"]), mat.reshape(d, d)))
        jumps = JumpSpec(rate=float(jd.get("rate", 0.0)), atoms=tuple(atoms),
                         truncation_note=(float(jd["truncation_eps"])
                                          if jd.get("truncation_eps") is not None else None))
    return MatrixLevyTriplet(d=d, sigma=sigma, gamma=gamma, drift0=drift0, jumps=jumps)
