"""Reproduction laws of a branching random walk.

A law describes the point process of children positions relative to the
parent.  Two shapes are offered: :class:`IidBranch` (a count law plus
i.i.d. displacements) and :class:`Explicit` (finitely many atoms, each a
fixed list of child positions).  Every law exposes the log-Laplace
transform

    Lambda(theta) = log E sum_{|u|=1} exp(-theta V(u))

together with its first two derivatives in closed form, which drives the
boundary-case check and the affine reduction to the boundary case.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np

from .errors import Degenerate, DomainError, LawError, NoRoot

LOG_TWO = math.log(2.0)

#: every offered family has a finite log-Laplace transform on the real line
THETA_DOMAIN = (-math.inf, math.inf)

# root search window for the reduction
THETA_MIN = 1e-6
THETA_MAX = 50.0


class LatticeWarning(UserWarning):
    """Explicit law positions lie on a common arithmetic progression."""


def _check_finite(name, value):
    if not math.isfinite(value):
        raise LawError(f"{name} must be finite, got {value!r}")


# ---------------------------------------------------------------------------
# displacement families


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        _check_finite("mean", self.mean)
        _check_finite("variance", self.variance)
        if self.variance <= 0:
            raise LawError(f"Gaussian variance must be > 0, got {self.variance}")

    def log_laplace(self, theta):
        """``log E exp(-theta X)`` and its first two theta-derivatives."""
        psi = -theta * self.mean + 0.5 * theta * theta * self.variance
        return psi, -self.mean + theta * self.variance, self.variance

    def sample(self, rng, size):
        return rng.normal(self.mean, math.sqrt(self.variance), size)

    def affine(self, scale, shift):
        return Gaussian(scale * self.mean + shift, scale * scale * self.variance)


@dataclass(frozen=True)
class TwoPoint:
    """``X = a`` with probability ``p``, else ``X = b``."""

    a: float
    b: float
    p: float

    def __post_init__(self):
        for name in ("a", "b", "p"):
            _check_finite(name, getattr(self, name))
        if not 0.0 < self.p < 1.0:
            raise LawError(f"TwoPoint p must lie in (0, 1), got {self.p}")
        if self.a == self.b:
            raise LawError("TwoPoint requires a != b")

    def log_laplace(self, theta):
        xs = np.array([self.a, self.b])
        ws = np.array([self.p, 1.0 - self.p])
        return _weighted_log_laplace(xs, ws, theta)

    def sample(self, rng, size):
        return np.where(rng.random(size) < self.p, self.a, self.b)

    def affine(self, scale, shift):
        return TwoPoint(scale * self.a + shift, scale * self.b + shift, self.p)


def _uniform_tilt(t):
    """log E e^{-tU}, and mean/variance of U under the tilt, U ~ Uniform(0, 1)."""
    if t == 0.0:
        return 0.0, 0.5, 1.0 / 12.0
    if t > 0:
        log_m0 = math.log(-math.expm1(-t)) - math.log(t)
    else:
        s = -t
        log_m0 = s + math.log(-math.expm1(-s)) - math.log(s)
    if abs(t) < 0.5:
        t2 = t * t
        mean = 0.5 - t / 12.0 + t * t2 / 720.0 - t * t2 * t2 / 30240.0
        var = 1.0 / 12.0 - t2 / 240.0 + t2 * t2 / 6048.0 - 7.0 * t2 * t2 * t2 / 1209600.0
    elif t > 700:
        mean, var = 1.0 / t, 1.0 / (t * t)
    elif t < -700:
        mean, var = 1.0 + 1.0 / t, 1.0 / (t * t)
    else:
        em1 = math.expm1(t)
        mean = 1.0 / t - 1.0 / em1
        var = 1.0 / (t * t) - math.exp(t) / (em1 * em1)
    return log_m0, mean, var


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        _check_finite("lo", self.lo)
        _check_finite("hi", self.hi)
        if not self.lo < self.hi:
            raise LawError(f"UniformInterval requires lo < hi, got [{self.lo}, {self.hi}]")

    def log_laplace(self, theta):
        width = self.hi - self.lo
        log_m0, mean, var = _uniform_tilt(theta * width)
        psi = -theta * self.lo + log_m0
        return psi, -(self.lo + width * mean), width * width * var

    def sample(self, rng, size):
        return rng.uniform(self.lo, self.hi, size)

    def affine(self, scale, shift):
        lo, hi = scale * self.lo + shift, scale * self.hi + shift
        return UniformInterval(min(lo, hi), max(lo, hi))


DisplacementFamily = Union[Gaussian, TwoPoint, UniformInterval]


# ---------------------------------------------------------------------------
# count laws


@dataclass(frozen=True)
class Deterministic:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise LawError(f"Deterministic count must be an integer >= 0, got {self.k}")

    @property
    def mean(self):
        return float(self.k)

    def sample(self, rng, size):
        return np.full(size, int(self.k), dtype=np.int64)


@dataclass(frozen=True)
class Poisson:
    lam: float

    def __post_init__(self):
        _check_finite("lam", self.lam)
        if self.lam < 0:
            raise LawError(f"Poisson rate must be >= 0, got {self.lam}")

    @property
    def mean(self):
        return float(self.lam)

    def sample(self, rng, size):
        if self.lam == 0:
            return np.zeros(size, dtype=np.int64)
        return rng.poisson(self.lam, size).astype(np.int64)


CountLaw = Union[Deterministic, Poisson]


# ---------------------------------------------------------------------------
# offspring laws


@dataclass(frozen=True)
class IidBranch:
    """Random number of children with i.i.d. displacements."""

    count: CountLaw
    displacement: DisplacementFamily

    discrete = False

    @property
    def mean_count(self):
        return self.count.mean

    def log_laplace(self, theta):
        if self.count.mean == 0:
            raise DomainError("law has no offspring; Lambda is -inf everywhere")
        psi, d1, d2 = self.displacement.log_laplace(theta)
        return math.log(self.count.mean) + psi, d1, d2

    def affine(self, scale, shift):
        return IidBranch(self.count, self.displacement.affine(scale, shift))


@dataclass(frozen=True)
class Explicit:
    """Finitely many atoms ``(probability, child positions)``."""

    atoms: tuple
    probs: np.ndarray = field(init=False, repr=False, compare=False)
    cum_probs: np.ndarray = field(init=False, repr=False, compare=False)
    sizes: np.ndarray = field(init=False, repr=False, compare=False)
    offsets: np.ndarray = field(init=False, repr=False, compare=False)
    flat: np.ndarray = field(init=False, repr=False, compare=False)

    discrete = True

    def __post_init__(self):
        atoms = tuple((float(p), tuple(float(x) for x in xs)) for p, xs in self.atoms)
        if not atoms:
            raise LawError("Explicit law needs at least one atom")
        for p, xs in atoms:
            if not (p > 0 and math.isfinite(p)):
                raise LawError(f"atom probabilities must be positive, got {p}")
            for x in xs:
                _check_finite("child position", x)
        total = math.fsum(p for p, _ in atoms)
        if abs(total - 1.0) > 1e-12:
            raise LawError(f"atom probabilities must sum to 1 within 1e-12, got {total!r}")
        object.__setattr__(self, "atoms", atoms)
        probs = np.array([p for p, _ in atoms])
        object.__setattr__(self, "probs", probs / probs.sum())
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        object.__setattr__(self, "cum_probs", cum)
        sizes = np.array([len(xs) for _, xs in atoms], dtype=np.int64)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "offsets", np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64))
        object.__setattr__(self, "flat", np.array([x for _, xs in atoms for x in xs], dtype=float))
        if is_lattice(self.flat):
            warnings.warn(
                "Explicit law positions lie on an arithmetic progression; "
                "limit laws assume a non-lattice displacement law",
                LatticeWarning,
                stacklevel=3,
            )

    @property
    def mean_count(self):
        return float(np.dot(self.probs, self.sizes))

    def _weights(self):
        return np.repeat(self.probs, self.sizes)

    def log_laplace(self, theta):
        if self.flat.size == 0:
            raise DomainError("law has no offspring; Lambda is -inf everywhere")
        return _weighted_log_laplace(self.flat, self._weights(), theta)

    def affine(self, scale, shift):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LatticeWarning)
            return Explicit(tuple((p, tuple(scale * x + shift for x in xs)) for p, xs in self.atoms))


OffspringLaw = Union[IidBranch, Explicit]


def is_lattice(positions, rel_tol=1e-9, min_span=1e-6, max_steps=64):
    """True when the distinct positions all sit on some ``a + d Z`` grid.

    Uses a floating Euclid on the gaps; the gaps count as commensurate when
    their approximate gcd exceeds ``min_span`` times the spread.  Fewer than
    three distinct points are always on a progression.
    """
    pts = np.unique(np.asarray(positions, dtype=float))
    if pts.size <= 2:
        return True
    gaps = np.diff(pts)
    scale = float(pts[-1] - pts[0])
    tol = rel_tol * scale
    g = float(gaps[0])
    for gap in gaps[1:]:
        a, b = max(g, float(gap)), min(g, float(gap))
        for _ in range(max_steps):
            if b <= tol:
                break
            a, b = b, math.fmod(a, b)
            if a - b <= tol:
                # remainder is within tolerance of a full step
                b = 0.0
        else:
            return False
        g = a
        if g <= min_span * scale:
            return False
    return True


def _weighted_log_laplace(xs, ws, theta):
    """Lambda, Lambda', Lambda'' for ``E sum w_i exp(-theta x_i)``."""
    expo = -theta * xs
    top = expo.max()
    e = ws * np.exp(expo - top)
    s0 = math.fsum(e)
    s1 = math.fsum(e * xs)
    s2 = math.fsum(e * xs * xs)
    mean = s1 / s0
    var = max(s2 / s0 - mean * mean, 0.0)
    if var < 1e-10 * max(1.0, mean * mean):
        # recompute centred to avoid cancellation
        var = math.fsum(e * (xs - mean) ** 2) / s0
    return top + math.log(s0), -mean, var


# ---------------------------------------------------------------------------
# operations


def sample_offspring(law, rng):
    """Displacements of one individual's children."""
    if isinstance(law, Explicit):
        a = int(np.searchsorted(law.cum_probs, rng.random(), side="right"))
        a = min(a, len(law.atoms) - 1)
        return list(law.atoms[a][1])
    k = int(law.count.sample(rng, 1)[0])
    if k == 0:
        return []
    return [float(x) for x in law.displacement.sample(rng, k)]


def log_laplace(law, theta):
    """Return ``(Lambda(theta), Lambda'(theta), Lambda''(theta))``.

    Raises
    ------
    DomainError
        If the law has no offspring (Lambda = -inf) or theta is not finite.
    """
    if not math.isfinite(theta):
        raise DomainError(f"theta must be finite, got {theta}")
    return law.log_laplace(float(theta))


class LawMoments(NamedTuple):
    mean_count: float
    w1: float
    z1: float
    sigma2: float
    boundary_ok: bool
    integrability_ok: bool
    integrability_rationale: str


def law_moments(law, tol=1e-9):
    """Moment functionals entering the boundary-case and variance conditions."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    mean_count = law.mean_count
    if isinstance(law, Explicit):
        if law.flat.size == 0:
            raise DomainError("Lambda(1) is undefined for a law without offspring")
        w = law._weights()
        e = w * np.exp(-law.flat)
        w1 = math.fsum(e)
        z1 = math.fsum(e * law.flat)
        sigma2 = math.fsum(e * law.flat * law.flat)
    else:
        lam, d1, d2 = log_laplace(law, 1.0)
        w1 = math.exp(lam)
        z1 = -d1 * w1
        sigma2 = (d2 + d1 * d1) * w1
    boundary_ok = (
        mean_count > 1
        and abs(w1 - 1.0) <= tol
        and abs(z1) <= tol
        and 0.0 < sigma2 < math.inf
    )
    return LawMoments(
        mean_count=mean_count,
        w1=w1,
        z1=z1,
        sigma2=sigma2,
        boundary_ok=bool(boundary_ok),
        integrability_ok=True,
        integrability_rationale="light-tailed family",
    )


class Reduction(NamedTuple):
    theta_star: float
    shift: float
    transformed: object


def _reduction_residual(law, theta):
    lam, d1, d2 = law.log_laplace(theta)
    return theta * d1 - lam, theta * d2


def boundary_reduce(law, tol=1e-12):
    """Map a supercritical law to the boundary case.

    Solves ``theta * Lambda'(theta) = Lambda(theta)`` for ``theta* > 0`` and
    returns the law whose displacements are ``theta* X + Lambda(theta*)``.
    An already-boundary law comes back unchanged with ``theta* = 1``.
    """
    probes = (THETA_MIN, 1.0, THETA_MAX)
    curv = [law.log_laplace(t)[2] for t in probes]
    if all(c <= 1e-14 for c in curv):
        raise Degenerate("Lambda is affine in theta; all children share one position")

    grid = [float(t) for t in np.geomspace(THETA_MIN, THETA_MAX, 241)]
    g_prev, _ = _reduction_residual(law, grid[0])
    if g_prev >= 0:
        raise NoRoot(
            f"theta*Lambda'-Lambda is {g_prev:.3g} >= 0 at theta={THETA_MIN}; law is not supercritical"
        )
    lo = hi = None
    for t in grid[1:]:
        g, _ = _reduction_residual(law, t)
        # a residual within rounding of zero is not a sign change: when exactly one
        # child sits at the minimum, g rises towards 0 without ever crossing it
        lam, d1, _ = law.log_laplace(t)
        if g > 64 * np.finfo(float).eps * (1.0 + abs(lam) + abs(t * d1)):
            hi = t
            break
        lo = t
    if hi is None:
        raise NoRoot(f"no sign change of theta*Lambda'-Lambda on [{THETA_MIN}, {THETA_MAX}]")
    lo = grid[0] if lo is None else lo

    # safeguarded Newton: fall back to bisection when the step leaves the bracket
    theta = 0.5 * (lo + hi)
    for _ in range(200):
        g, dg = _reduction_residual(law, theta)
        if abs(g) <= tol:
            break
        if g < 0:
            lo = theta
        else:
            hi = theta
        step = theta - g / dg if dg > 0 else math.nan
        theta = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    g, _ = _reduction_residual(law, theta)
    if abs(g) > max(tol, 1e-9):
        raise NoRoot(f"root refinement stalled at theta={theta}, residual {g:.3g}")

    theta = float(theta)
    shift = float(law.log_laplace(theta)[0])
    if abs(theta - 1.0) <= tol and abs(shift) <= tol:
        return Reduction(1.0, 0.0, law)
    return Reduction(theta, shift, law.affine(theta, shift))


def canonical_law():
    """Binary branching with N(2 ln 2, 2 ln 2) displacements (boundary case)."""
    return IidBranch(Deterministic(2), Gaussian(2 * LOG_TWO, 2 * LOG_TWO))


def law_to_dict(law):
    if isinstance(law, Explicit):
        return {"family": "explicit", "atoms": [[p, list(xs)] for p, xs in law.atoms]}
    disp = law.displacement
    count = law.count
    out = {
        "family": {Gaussian: "gaussian", TwoPoint: "two-point", UniformInterval: "uniform"}[type(disp)],
        "count": {"law": "deterministic", "k": int(count.k)}
        if isinstance(count, Deterministic)
        else {"law": "poisson", "lam": count.lam},
    }
    out["parameters"] = {k: getattr(disp, k) for k in disp.__dataclass_fields__}
    return out
