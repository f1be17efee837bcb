"""Estimators and goodness-of-fit checks for the limit laws.

The conditional limit family is the shifted Gumbel law

    P(X >= x | Z) = exp(-c Z e^x),

used both for the minimum (constant ``c_*``) and for the after-n minimum
(constant ``c'``).  The tail constant ``c_M`` of the all-time minimum is
read off the plateau of ``e^x P(R_0 <= -x)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special
from scipy.stats import chi2_contingency

from . import streams
from .errors import (EmptyInput, InsufficientTail, NonpositiveSigma2, NonpositiveZ,
                     TooFewSurvivors)

DEFAULT_WINDOW = (3.0, 8.0)
DEFAULT_GRID_STEP = 0.25
DEFAULT_BOOTSTRAP = 200
DEFAULT_MIN_TAIL = 200
ALPHA = 0.01


class TestResult(NamedTuple):
    statistic: float
    pvalue: float

    __test__ = False  # not a pytest class


@dataclass
class TailFit:
    c_hat: float
    window: tuple
    slope: float
    stderr: float
    n_tail: int
    slope_stderr: float = math.nan


@dataclass
class GofReport:
    ks_W: TestResult
    ks_L: TestResult
    indep: TestResult  # (Cramer's V, chi-square p-value)
    n_used: int
    indep_chi2: float = math.nan


@dataclass
class FitReport:
    c_M: TailFit | None = None
    c_star: tuple | None = None
    c_prime_mle: tuple | None = None
    c_prime_formula: float | None = None
    gof: GofReport | None = None
    ais_ratio_summary: list = field(default_factory=list)
    as_ratio_series: list = field(default_factory=list)

    def to_dict(self):
        out = {}
        for key, value in asdict(self).items():
            out[key] = value
        return out


# ---------------------------------------------------------------------------
# tail constant


def _tail_grid(window, step):
    x_lo, x_hi = window
    k = max(int(round((x_hi - x_lo) / step)), 1)
    return np.linspace(x_lo, x_hi, k + 1)


def _fit_log_tail(x, counts, n):
    logp = np.log(counts / n)
    c_hat = math.exp(float(np.mean(x + logp)))
    slope = float(np.polyfit(x, logp, 1)[0])
    return c_hat, slope


def estimate_cM(pool, window=DEFAULT_WINDOW, *, grid_step=DEFAULT_GRID_STEP,
                n_boot=DEFAULT_BOOTSTRAP, min_tail=DEFAULT_MIN_TAIL, seed=0):
    """Estimate ``c_M`` from the empirical tail of the all-time minimum.

    Parameters
    ----------
    pool : R0Pool or array_like
        Draws of ``R_0`` (all <= 0).
    window : (float, float)
        Range of depths ``x`` over which ``e^x P(R_0 <= -x)`` is averaged.

    Returns
    -------
    TailFit
        ``c_hat`` is the geometric mean of ``e^x P_hat(R_0 <= -x)`` over an
        evenly spaced grid on the window, ``slope`` the least-squares slope
        of ``log P_hat`` against ``x`` (target -1) and ``stderr`` the
        bootstrap standard error of ``c_hat``.
    """
    x_lo, x_hi = map(float, window)
    if not x_lo < x_hi:
        raise ValueError(f"window must satisfy x_lo < x_hi, got {window}")
    samples = np.asarray(getattr(pool, "samples", pool), dtype=float)
    n = samples.size
    x = _tail_grid((x_lo, x_hi), grid_step)
    srt = np.sort(samples)
    # counts[i] = #{R <= -x[i]}
    counts = np.searchsorted(srt, -x, side="right").astype(float)
    n_tail = int(counts[0])
    if n_tail < min_tail or counts[-1] == 0:
        raise InsufficientTail(
            f"{n_tail} samples at depth >= {x_lo} (need {min_tail}), "
            f"{int(counts[-1])} at depth >= {x_hi}"
        )
    c_hat, slope = _fit_log_tail(x, counts, n)

    # bootstrap: resampling the pool only moves mass between depth bins
    rng = streams.replica_rng(seed, 0, streams.BOOTSTRAP)
    bins = np.diff(np.concatenate([[0.0], counts[::-1]]))[::-1]  # deepest bin last
    probs = np.append(bins, n - counts[0]) / n
    boot_c, boot_s = [], []
    for _ in range(n_boot):
        draw = rng.multinomial(n, probs)
        bc = np.cumsum(draw[:-1][::-1])[::-1].astype(float)
        if bc[-1] == 0:
            continue
        c_b, s_b = _fit_log_tail(x, bc, n)
        boot_c.append(c_b)
        boot_s.append(s_b)
    stderr = float(np.std(boot_c, ddof=1)) if len(boot_c) > 1 else math.nan
    slope_se = float(np.std(boot_s, ddof=1)) if len(boot_s) > 1 else math.nan
    return TailFit(c_hat, (x_lo, x_hi), slope, stderr, n_tail, slope_se)


# ---------------------------------------------------------------------------
# Gumbel scale


def mle_gumbel_scale(pairs):
    """Closed-form MLE of ``c`` under ``P(X >= x | Z) = exp(-c Z e^x)``.

    Returns ``(c_hat, stderr)`` with ``c_hat = N / sum Z_i e^{X_i}`` and the
    Fisher-information standard error ``c_hat / sqrt(N)``.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.size == 0:
        raise EmptyInput("no (Z, X) pairs")
    arr = arr.reshape(-1, 2)
    z, x = arr[:, 0], arr[:, 1]
    if np.any(~(z > 0)):
        raise NonpositiveZ("all Z must be positive")
    if not np.all(np.isfinite(x)):
        raise ValueError("all X must be finite")
    n = z.size
    c_hat = n / math.fsum(z * np.exp(x))
    return c_hat, c_hat / math.sqrt(n)


def derive_cprime(c_M, sigma2):
    """``c' = sqrt(2 / (pi sigma^2)) c_M``."""
    if not sigma2 > 0:
        raise NonpositiveSigma2(f"sigma2 must be > 0, got {sigma2}")
    if c_M < 0:
        raise ValueError(f"c_M must be >= 0, got {c_M}")
    return math.sqrt(2.0 / (math.pi * sigma2)) * c_M


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov


def ks_statistic(samples, cdf):
    """One-sample KS distance and asymptotic p-value.

    ``cdf`` is a vectorised distribution function.  The supremum is taken at
    the jump points of the empirical CDF.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise EmptyInput("KS test needs at least one sample")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n), 0.0))
    return TestResult(d, float(special.kolmogorov(math.sqrt(n) * d)))


def ks_two_sample(a, b):
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptyInput("two-sample KS needs two nonempty samples")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    d = float(np.max(np.abs(fa - fb)))
    en = math.sqrt(a.size * b.size / (a.size + b.size))
    return TestResult(d, float(special.kolmogorov(en * d)))


def ks_critical(alpha, m, n=None):
    """Asymptotic KS critical distance (two-sample if ``n`` is given)."""
    c = float(special.kolmogi(alpha))
    if n is None:
        return c / math.sqrt(m)
    return c * math.sqrt((m + n) / (m * n))


def uniform_cdf(x):
    return np.clip(x, 0.0, 1.0)


# ---------------------------------------------------------------------------
# PIT goodness of fit


def pit_coordinates(z, w, l, c_star, c_prime):
    """``U = exp(-c_* Z e^W)``, ``V = exp(-c' Z e^L)``."""
    z = np.asarray(z, dtype=float)
    u = np.exp(-c_star * z * np.exp(np.asarray(w, dtype=float)))
    v = np.exp(-c_prime * z * np.exp(np.asarray(l, dtype=float)))
    return u, v


def quadrant_chi2(u, v, cells=4):
    """Chi-square independence test on a ``cells x cells`` grid of [0,1]^2.

    Returns ``(Cramer's V, p-value, chi2)``.  Empty rows/columns are
    dropped; a table with a single row or column is trivially independent.
    """
    iu = np.minimum((np.asarray(u) * cells).astype(int), cells - 1)
    iv = np.minimum((np.asarray(v) * cells).astype(int), cells - 1)
    table = np.zeros((cells, cells))
    np.add.at(table, (iu, iv), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if min(table.shape) < 2:
        return 0.0, 1.0, 0.0
    chi2, p, _, _ = chi2_contingency(table, correction=False)
    n = table.sum()
    cramer = math.sqrt(chi2 / (n * (min(table.shape) - 1)))
    return min(cramer, 1.0), float(p), float(chi2)


def _triples(replicas):
    rows = [(r.Z_hat, r.M_centered, r.R_centered) for r in replicas
            if r.survived and r.Z_hat > 0 and math.isfinite(r.M_centered)
            and math.isfinite(r.R_centered)]
    return np.array(rows, dtype=float).reshape(-1, 3)


def pit_independence_test(replicas, c_star, c_prime, min_survivors=100):
    """PIT uniformity of both margins and quadrant independence of (U, V).

    Only surviving replicas with ``Z_hat > 0`` enter.
    """
    if not (c_star > 0 and c_prime > 0):
        raise ValueError("constants must be positive")
    t = _triples(replicas)
    if t.shape[0] < min_survivors:
        raise TooFewSurvivors(f"{t.shape[0]} usable replicas, need {min_survivors}")
    u, v = pit_coordinates(t[:, 0], t[:, 1], t[:, 2], c_star, c_prime)
    cramer, p, chi2 = quadrant_chi2(u, v)
    return GofReport(
        ks_W=ks_statistic(u, uniform_cdf),
        ks_L=ks_statistic(v, uniform_cdf),
        indep=TestResult(cramer, p),
        n_used=int(t.shape[0]),
        indep_chi2=chi2,
    )


def fit_constants(replicas):
    """MLE of ``c_*`` and ``c'`` from surviving replicas."""
    t = _triples(replicas)
    if t.shape[0] == 0:
        raise TooFewSurvivors("no usable replicas")
    c_star = mle_gumbel_scale(t[:, [0, 1]])
    c_prime = mle_gumbel_scale(t[:, [0, 2]])
    return c_star, c_prime


# ---------------------------------------------------------------------------
# ratio diagnostics


class Series(NamedTuple):
    n: int
    values: np.ndarray
    dropped: int


def after_n_minimum(traj, n):
    """``min_{k >= n} M_k`` over the recorded trajectory."""
    m = np.asarray(traj.M)
    if n >= m.size:
        return math.nan
    return float(np.min(m[n:]))


def diagnostics(replicas, points):
    """Per-replica ``sqrt(n) W_n / Z_n`` and ``R_n / log n`` at each point.

    Entries with ``Z_n <= 0`` are dropped from the first series and counted.
    Only replicas that survived to their measurement time are used, and
    ``R_n`` is read off as the suffix minimum of the recorded ``M_k``.
    """
    ais, as_ = [], []
    for n in points:
        n = int(n)
        ratios, dropped, rr = [], 0, []
        for rep in replicas:
            traj = rep.gen_stats
            if not rep.survived or len(traj) <= n:
                continue
            s = traj[n]
            if s.pop == 0:
                continue
            if s.Z > 0:
                ratios.append(math.sqrt(n) * s.W / s.Z)
            else:
                dropped += 1
            if n >= 2 and n <= rep.measure_n:
                rr.append(after_n_minimum(traj, n) / math.log(n))
        ais.append(Series(n, np.array(ratios), dropped))
        if n >= 2:
            as_.append(Series(n, np.array(rr), 0))
    return ais, as_


def ais_target(sigma2):
    return math.sqrt(2.0 / (math.pi * sigma2))
