"""Independent reference implementations used by the tests.

Nothing here calls into the package's numerical kernels.
"""

import math
import warnings

import numpy as np
from scipy import integrate, special, stats

SQRT_2PI = math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    return stats.norm.cdf(x)


def bvn_quad(h, k, r, epsabs=1e-15, epsrel=1e-14):
    """Phi2(h, k, r) as the integral of phi(x) * Phi((k - r x) / sqrt(1 - r^2)) up to h.

    This is the double integral of the bivariate density with the inner
    integral done analytically; the outer one uses adaptive quadrature.
    """
    if r == 1.0:
        return float(norm_cdf(min(h, k)))
    if r == -1.0:
        return max(0.0, float(norm_cdf(h) + norm_cdf(k) - 1.0))
    s = math.sqrt(1.0 - r * r)

    def f(x):
        return math.exp(-0.5 * x * x) / SQRT_2PI * special.ndtr((k - r * x) / s)

    lo = -40.0
    points = [p for p in ((k / r) if r else 0.0, 0.0) if lo < p < h]
    with warnings.catch_warnings():
        # requested tolerance is below double precision on purpose
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(
            f, lo, h, points=points or None, epsabs=epsabs, epsrel=epsrel, limit=500
        )
    return value


def sgn(a) -> int:
    return int(a > 0) - int(a < 0)


def kendall_tau_b_bruteforce(x, y) -> float:
    T = len(x)
    num = sx = sy = 0
    for t in range(T):
        for s in range(t + 1, T):
            a = sgn(x[t] - x[s])
            b = sgn(y[t] - y[s])
            num += a * b
            sx += a * a
            sy += b * b
    return num / math.sqrt(sx * sy)


def spearman_signsum_bruteforce(x, y) -> float:
    """Pearson correlation of ranks defined by rk(x_t) = (T+1)/2 + 1/2 sum_{s!=t} sign(x_t - x_s)."""
    T = len(x)
    a = [sum(sgn(x[t] - x[s]) for s in range(T) if s != t) for t in range(T)]
    b = [sum(sgn(y[t] - y[s]) for s in range(T) if s != t) for t in range(T)]
    return sum(i * j for i, j in zip(a, b)) / math.sqrt(sum(i * i for i in a) * sum(j * j for j in b))


def ordinal_ranks(x):
    """1-based ranks by sorting (tie-free input)."""
    order = sorted(range(len(x)), key=lambda t: x[t])
    ranks = [0] * len(x)
    for pos, t in enumerate(order):
        ranks[t] = pos + 1
    return ranks


def beta_compare_quad(d1, n1, d2, n2) -> float:
    """P(X2 <= X1) for X1 ~ Beta(d1+1, n1-d1+1), X2 ~ Beta(d2+1, n2-d2+1), by quadrature."""
    x1 = stats.beta(d1 + 1, n1 - d1 + 1)
    x2 = stats.beta(d2 + 1, n2 - d2 + 1)
    value, _ = integrate.quad(lambda t: x1.pdf(t) * x2.cdf(t), 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=200)
    return value


def pearson(x, y) -> float:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xc = x - x.mean()
    yc = y - y.mean()
    return float((xc * yc).sum() / math.sqrt((xc * xc).sum() * (yc * yc).sum()))


def median_even_rule(x) -> float:
    x = sorted(x)
    T = len(x)
    if T % 2:
        return float(x[T // 2])
    return 0.5 * (x[T // 2 - 1] + x[T // 2])
