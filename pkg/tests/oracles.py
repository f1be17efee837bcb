"""Independent reference computations used by the tests.

Nothing here imports the package under test.
"""

import math

import numpy as np
from scipy import integrate
from scipy.stats import norm

LOG_TWO = math.log(2.0)


def quad_log_laplace(pdf, lo, hi, theta):
    """``log E e^{-theta X}`` and its two derivatives by adaptive quadrature."""
    moments = []
    for k in range(3):
        val, _ = integrate.quad(lambda x: x**k * math.exp(-theta * x) * pdf(x), lo, hi,
                                epsabs=0, epsrel=1e-13, limit=200)
        moments.append(val)
    m0, m1, m2 = moments
    return math.log(m0), -m1 / m0, m2 / m0 - (m1 / m0) ** 2


def ks_bruteforce(samples, cdf):
    """O(N^2) supremum of |F_hat - F| over all sample points and both sides of each jump."""
    xs = list(samples)
    n = len(xs)
    best = 0.0
    for x in xs:
        f = float(cdf(np.array([x]))[0])
        below = sum(1 for y in xs if y < x) / n
        at = sum(1 for y in xs if y <= x) / n
        best = max(best, abs(at - f), abs(below - f))
    return best


def galton_watson_survival(pgf, n):
    """P(population alive at generation n) from the offspring generating function."""
    q = 0.0
    for _ in range(n):
        q = pgf(q)
    return 1.0 - q


def r0_depth_tail(depth, mean, variance, children=2, dz=0.005, x_max=30.0):
    """P(min over generations 0..depth of M_k <= -x) on the grid x = 0, dz, ...

    Binary (or ``children``-ary) branching with i.i.d. N(mean, variance)
    displacements.  Iterates ``Q_{k+1}(x) = 1 - (1 - E Q_k(x + X))^c`` with
    ``Q_0 = 1{x <= 0}``, using grid-aligned Gaussian weights and a direct
    correlation (no FFT) so every term stays nonnegative.
    """
    s = math.sqrt(variance)
    lo_ = min(mean - 9 * s, -dz)
    hi_ = mean + 9 * s
    i0, i1 = int(math.floor(lo_ / dz)), int(math.ceil(hi_ / dz))
    xi = dz * np.arange(i0, i1 + 1)
    g = norm.pdf(xi, mean, s)
    g /= g.sum()
    n = int(round(x_max / dz))
    x = dz * np.arange(n + 1)
    q = np.zeros(n + 1)
    q[0] = 1.0
    left = max(0, -i0)  # grid points below x = 0 needed on the left
    right = max(0, i1)
    for _ in range(depth):
        ext = np.concatenate([np.ones(left), q, np.zeros(right)])
        # ext[t] = Q((t - left) dz); E Q(x_j + xi) = sum_k g[k] ext[j + i0 + k + left]
        start = left + i0
        e = np.correlate(ext[start:start + n + (i1 - i0) + 1], g, mode="valid")
        q = 1.0 - (1.0 - np.clip(e, 0.0, 1.0)) ** children
        q[0] = 1.0
    return x, q
