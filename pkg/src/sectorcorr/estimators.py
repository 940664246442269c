"""Estimators of the inter-sector factor correlation ``gamma`` from panel data.

Estimation separates the two dimensions of a panel. Per date, event rates are
turned into realisations of ``P`` (``d / n``) and of ``Phi^-1(P)`` (an
anchored probit of the rate). Across dates, those series are combined into
an estimate of ``gamma``:

========  ==========================================================
IMM       Pearson correlation of the probit series
IM2/IM3   IMM with one/two rounds of simulated bias correction
MAD       robust correlation from median absolute deviations
DMM       inversion of the cross moment ``E[P * P~]``
MAX       whichever of IMM and DMM is larger in absolute value
KEN       Kendall's tau-b of the rate series, mapped to ``gamma``
SPE       Spearman's rho of the rate series, mapped to ``gamma``
========  ==========================================================

All estimators return a value in [-1, 1]. Inputs on which an estimator is
undefined (constant series, zero MAD, no events) give the fallback value 0
with ``degenerate=True`` instead of raising, so that simulation studies can
aggregate every replication.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np
from scipy import special, stats

from .num_kernels import solve_bvn_correlation, std_normal_cdf, std_normal_inv_cdf
from .vasicek import Panel, PairModel, SectorParams, simulate_counts

__all__ = [
    "Method",
    "GammaEstimate",
    "CrossSectionEstimates",
    "DmmDecomposition",
    "MadDiagnostics",
    "DegenerateInputError",
    "cross_section",
    "imm",
    "intra_normal_variance",
    "imm_bias_corrected",
    "imm_bias_path",
    "mad_estimator",
    "dmm",
    "max_estimator",
    "kendall_tau_b",
    "ken_gamma",
    "spearman_rho",
    "spearman_gamma",
    "bayes_sign_prob",
    "bayes_sign",
    "estimate_all",
    "EstimateReport",
]

# Continuity anchor for the probit transform of event rates.
PROBIT_ANCHOR = 0.6

# |delta| below this counts as zero when the DMM denominator vanishes.
DELTA_ZERO_TOL = 1e-12


class Method(str, enum.Enum):
    IMM = "IMM"
    IM2 = "IM2"
    IM3 = "IM3"
    MAD = "MAD"
    DMM = "DMM"
    MAX = "MAX"
    KEN = "KEN"
    SPE = "SPE"


class DegenerateInputError(ValueError):
    """A statistic is undefined on the given input (e.g. a constant series)."""


@dataclass(frozen=True)
class GammaEstimate:
    """An estimate of ``gamma``.

    ``clamped`` records that the raw arithmetic left [-1, 1] and was clipped;
    ``degenerate`` that the estimator was undefined and ``value`` is the
    fallback 0 (or, for DMM with a vanishing denominator, ``sign(delta)``).
    """

    value: float
    method: Method
    clamped: bool = False
    degenerate: bool = False

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True, eq=False)
class CrossSectionEstimates:
    """Per-date realisations estimated from the cross-section.

    ``g`` and ``g_tilde`` estimate ``Phi^-1(P)``; ``p`` and ``p_tilde`` estimate
    ``P`` itself.
    """

    g: np.ndarray
    g_tilde: np.ndarray
    p: np.ndarray
    p_tilde: np.ndarray

    @property
    def T(self) -> int:
        return int(np.shape(self.g)[-1])

    @classmethod
    def from_latent(cls, g, g_tilde) -> "CrossSectionEstimates":
        """Wrap exact probit-scale factor realisations (no binomial noise)."""
        g = np.asarray(g, dtype=float)
        g_tilde = np.asarray(g_tilde, dtype=float)
        return cls(g, g_tilde, std_normal_cdf(g), std_normal_cdf(g_tilde))


@dataclass(frozen=True)
class DmmDecomposition:
    """Intermediate moments of the direct moment matching estimator."""

    p_m: float
    p_m_tilde: float
    q_m: float
    p2_m: float
    p2_m_tilde: float
    rho_m: float
    rho_m_tilde: float
    delta_m: float
    gamma: float

    @property
    def gamma_p2_denominator(self) -> float:
        """``delta_m / sqrt(p2_m * p2_m_tilde)``, the alternative normalisation."""
        denom = math.sqrt(self.p2_m * self.p2_m_tilde)
        return self.delta_m / denom if denom > 0 else math.nan


@dataclass(frozen=True)
class MadDiagnostics:
    mad_u: float
    mad_v: float


Data = Union[Panel, CrossSectionEstimates]


def _clamp(x: float) -> tuple[float, bool]:
    if x > 1.0:
        return 1.0, True
    if x < -1.0:
        return -1.0, True
    return float(x), False


def _anchored_probit(d, n):
    return std_normal_inv_cdf((d + PROBIT_ANCHOR) / (n + 2.0 * PROBIT_ANCHOR))


def cross_section(panel: Panel) -> CrossSectionEstimates:
    """Per-date estimates from a panel.

    ``g(t) = Phi^-1((d + 0.6) / (n + 1.2))`` stays finite at ``d = 0`` and
    ``d = n``; ``p(t) = d / n``.
    """
    return CrossSectionEstimates(
        g=_anchored_probit(panel.d, panel.n),
        g_tilde=_anchored_probit(panel.d_tilde, panel.n_tilde),
        p=panel.d / panel.n,
        p_tilde=panel.d_tilde / panel.n_tilde,
    )


def _as_cs(data: Data) -> CrossSectionEstimates:
    return cross_section(data) if isinstance(data, Panel) else data


def _pearson(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Row-wise Pearson correlation along the last axis; 0 where undefined.
    xc = x - x.mean(axis=-1, keepdims=True)
    yc = y - y.mean(axis=-1, keepdims=True)
    sxx = np.einsum("...i,...i->...", xc, xc)
    syy = np.einsum("...i,...i->...", yc, yc)
    sxy = np.einsum("...i,...i->...", xc, yc)
    denom = np.sqrt(sxx * syy)
    degenerate = ~(denom > 0.0)
    r = np.divide(sxy, denom, out=np.zeros_like(sxy), where=~degenerate)
    return np.clip(r, -1.0, 1.0), degenerate


def imm(data: Data) -> GammaEstimate:
    """Indirect moment matching: Pearson correlation of the probit series."""
    cs = _as_cs(data)
    r, degenerate = _pearson(np.asarray(cs.g, float), np.asarray(cs.g_tilde, float))
    return GammaEstimate(float(r), Method.IMM, degenerate=bool(degenerate))


def intra_normal_variance(g) -> tuple[float, float]:
    """Estimate ``(p, rho)`` of one sector from its probit series.

    Matches the sample mean and unbiased sample variance ``s2`` of ``g`` to
    ``E[Phi^-1(P)] = Phi^-1(p) / sqrt(1 - rho)`` and
    ``Var[Phi^-1(P)] = rho / (1 - rho)``, giving ``rho = s2 / (1 + s2)`` and
    ``p = Phi(mean * sqrt(1 - rho))``.
    """
    g = np.asarray(g, dtype=float)
    if g.shape[-1] < 2:
        raise ValueError("need at least two observations")
    s2 = float(np.var(g, ddof=1))
    rho_hat = s2 / (1.0 + s2)
    p_hat = std_normal_cdf(float(np.mean(g)) * math.sqrt(1.0 - rho_hat))
    return p_hat, rho_hat


def imm_bias_path(
    panel: Panel,
    steps: int,
    m: int,
    rng: np.random.Generator,
) -> list[GammaEstimate]:
    """IMM followed by ``steps - 1`` rounds of simulated bias correction.

    Returns ``[IMM, IM2, IM3, ...]`` up to ``steps`` entries. Sector
    parameters for the simulations come from :func:`intra_normal_variance`
    on the observed data and are kept fixed across rounds. Round ``k``
    simulates ``m`` panels with the observed cohort sizes at the current
    estimate ``gamma_k``, measures the mean IMM on them, and updates
    ``gamma_{k+1} = clamp(gamma_k + (IMM - mean))``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    cs = cross_section(panel)
    base = imm(cs)
    methods = [Method.IMM, Method.IM2, Method.IM3]
    path = [base]
    if steps == 1:
        return path

    def label(k: int) -> Method:
        return methods[k] if k < len(methods) else Method.IM3

    if base.degenerate:
        return path + [
            GammaEstimate(0.0, label(k), degenerate=True) for k in range(1, steps)
        ]

    p_a, rho_a = intra_normal_variance(cs.g)
    p_b, rho_b = intra_normal_variance(cs.g_tilde)
    sector_a = SectorParams(p_a, rho_a)
    sector_b = SectorParams(p_b, rho_b)
    current = base.value
    for k in range(1, steps):
        model = PairModel(sector_a, sector_b, current)
        d, d_tilde = simulate_counts(model, panel.n, panel.n_tilde, rng, size=m)
        g_sim = _anchored_probit(d, panel.n)
        g_tilde_sim = _anchored_probit(d_tilde, panel.n_tilde)
        sims, _ = _pearson(g_sim, g_tilde_sim)
        current, clamped = _clamp(current + (base.value - float(np.mean(sims))))
        path.append(GammaEstimate(current, label(k), clamped=clamped))
    return path


def imm_bias_corrected(
    panel: Panel,
    steps: int = 2,
    m: int = 100,
    rng: np.random.Generator | None = None,
) -> GammaEstimate:
    """IM2 (``steps=2``) or IM3 (``steps=3``) estimate; see :func:`imm_bias_path`."""
    if rng is None:
        rng = np.random.default_rng()
    return imm_bias_path(panel, steps, m, rng)[-1]


def _median(x: np.ndarray) -> float:
    # Even length: mean of the two middle order statistics.
    return float(np.median(x))


def _mad(x: np.ndarray) -> float:
    return _median(np.abs(x - _median(x)))


def mad_estimator(data: Data) -> tuple[GammaEstimate, MadDiagnostics]:
    """Robust correlation from median absolute deviations.

    Both probit series are centred at their median and scaled by their MAD;
    with ``u`` and ``v`` their sum and difference, the estimate is
    ``(MAD(u)**2 - MAD(v)**2) / (MAD(u)**2 + MAD(v)**2)``.
    """
    cs = _as_cs(data)
    g = np.asarray(cs.g, dtype=float)
    gt = np.asarray(cs.g_tilde, dtype=float)
    mad_g, mad_gt = _mad(g), _mad(gt)
    if mad_g == 0.0 or mad_gt == 0.0:
        return GammaEstimate(0.0, Method.MAD, degenerate=True), MadDiagnostics(math.nan, math.nan)
    gc = (g - _median(g)) / mad_g
    gtc = (gt - _median(gt)) / mad_gt
    mad_u = _mad(gc + gtc)
    mad_v = _mad(gc - gtc)
    diag = MadDiagnostics(mad_u, mad_v)
    total = mad_u**2 + mad_v**2
    if total == 0.0:
        return GammaEstimate(0.0, Method.MAD, degenerate=True), diag
    value, clamped = _clamp((mad_u**2 - mad_v**2) / total)
    return GammaEstimate(value, Method.MAD, clamped=clamped), diag


def _intra_rho(p_m: float, p2_m: float) -> float:
    if p2_m < p_m * p_m:
        return 0.0
    a = std_normal_inv_cdf(p_m)
    return max(0.0, solve_bvn_correlation(a, a, min(p2_m, p_m)))


def dmm(panel: Panel) -> tuple[GammaEstimate, DmmDecomposition]:
    """Direct moment matching.

    Solves ``q_m = Phi2(Phi^-1(p_m), Phi^-1(p_m~), delta)`` for
    ``delta = gamma * sqrt(rho * rho~)`` with sample moments ``p_m``, ``q_m``,
    recovers each ``rho`` from ``p2_m = Phi2(a, a, rho)`` (``rho = 0`` when
    ``p2_m < p_m**2``), and returns ``delta / sqrt(rho * rho~)`` clipped to
    [-1, 1].

    Raises
    ------
    ValueError
        If some cohort size is below 2, where ``p2_m`` is undefined.
    """
    n = panel.n.astype(float)
    nt = panel.n_tilde.astype(float)
    if np.any(panel.n < 2) or np.any(panel.n_tilde < 2):
        raise ValueError("DMM needs cohort sizes n, n_tilde >= 2")
    x = panel.d / n
    xt = panel.d_tilde / nt
    p_m = float(np.mean(x))
    p_mt = float(np.mean(xt))
    q_m = float(np.mean(x * xt))
    p2_m = float(np.mean(panel.d * (panel.d - 1.0) / (n * (n - 1.0))))
    p2_mt = float(np.mean(panel.d_tilde * (panel.d_tilde - 1.0) / (nt * (nt - 1.0))))

    if not (0.0 < p_m < 1.0 and 0.0 < p_mt < 1.0):
        decomp = DmmDecomposition(p_m, p_mt, q_m, p2_m, p2_mt, math.nan, math.nan, math.nan, 0.0)
        return GammaEstimate(0.0, Method.DMM, degenerate=True), decomp

    a = std_normal_inv_cdf(p_m)
    b = std_normal_inv_cdf(p_mt)
    delta = solve_bvn_correlation(a, b, q_m)
    rho_m = _intra_rho(p_m, p2_m)
    rho_mt = _intra_rho(p_mt, p2_mt)
    scale = math.sqrt(rho_m * rho_mt)
    degenerate = clamped = False
    if scale == 0.0:
        degenerate = True
        value = 0.0 if abs(delta) <= DELTA_ZERO_TOL else math.copysign(1.0, delta)
    else:
        value, clamped = _clamp(delta / scale)
    decomp = DmmDecomposition(p_m, p_mt, q_m, p2_m, p2_mt, rho_m, rho_mt, delta, value)
    return GammaEstimate(value, Method.DMM, clamped=clamped, degenerate=degenerate), decomp


def max_estimator(imm_est: GammaEstimate, dmm_est: GammaEstimate) -> GammaEstimate:
    """IMM if it is strictly larger than DMM in absolute value, else DMM."""
    chosen = imm_est if abs(imm_est.value) > abs(dmm_est.value) else dmm_est
    return GammaEstimate(chosen.value, Method.MAX, chosen.clamped, chosen.degenerate)


def _tied_pairs(*cols: np.ndarray) -> int:
    # Number of index pairs that agree on every given column.
    order = np.lexsort(cols[::-1])
    sorted_cols = [c[order] for c in cols]
    change = np.zeros(order.shape[0] - 1, dtype=bool)
    for c in sorted_cols:
        change |= c[1:] != c[:-1]
    bounds = np.flatnonzero(np.concatenate(([True], change, [True])))
    counts = np.diff(bounds).astype(np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def _count_inversions(y: np.ndarray) -> int:
    """Number of pairs ``i < j`` with ``y[i] > y[j]``.

    Bottom-up merge counting, one vectorised pass per block width.
    """
    n = y.shape[0]
    idx = np.arange(n)
    total = 0
    width = 1
    while width < n:
        block = idx // (2 * width)
        right = (idx // width) % 2
        order = np.lexsort((right, y, block))
        is_left = right[order] == 0
        left_le = np.cumsum(is_left) - block[order] * width
        left_total = np.minimum(width, n - block[order] * 2 * width)
        total += int(np.sum((left_total - left_le)[~is_left]))
        width *= 2
    return total


def kendall_tau_b(x, y) -> float:
    """Kendall's tau-b with ``sign(0) = 0``.

    O(T log T): the numerator ``sum_{t<s} sign(x_t - x_s) sign(y_t - y_s)`` is
    obtained exactly as an integer from tie counts and the number of
    discordant pairs.

    Raises
    ------
    DegenerateInputError
        If every pair is tied in ``x`` or every pair is tied in ``y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be one-dimensional and of equal length")
    T = x.shape[0]
    if T < 2:
        raise ValueError("need at least two observations")
    n0 = T * (T - 1) // 2
    n1 = _tied_pairs(x)
    n2 = _tied_pairs(y)
    if n1 == n0 or n2 == n0:
        raise DegenerateInputError("all pairs tied; tau-b is undefined")
    n3 = _tied_pairs(x, y)
    order = np.lexsort((y, x))
    discordant = _count_inversions(y[order])
    numerator = n0 - n1 - n2 + n3 - 2 * discordant
    return numerator / math.sqrt((n0 - n1) * (n0 - n2))


def _centred_ranks(x: np.ndarray) -> np.ndarray:
    # sum_{s != t} sign(x_t - x_s) == 2 * midrank - (T + 1), an exact integer.
    T = x.shape[0]
    return np.rint(2.0 * stats.rankdata(x, method="average") - (T + 1)).astype(np.int64)


def spearman_rho(x, y) -> float:
    """Spearman's rho as the Pearson correlation of midranks.

    Raises
    ------
    DegenerateInputError
        If either rank vector is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be one-dimensional and of equal length")
    if x.shape[0] < 2:
        raise ValueError("need at least two observations")
    a = _centred_ranks(x)
    b = _centred_ranks(y)
    saa = int(np.dot(a, a))
    sbb = int(np.dot(b, b))
    if saa == 0 or sbb == 0:
        raise DegenerateInputError("constant rank vector; Spearman's rho is undefined")
    return int(np.dot(a, b)) / math.sqrt(saa * sbb)


def ken_gamma(data: Data) -> GammaEstimate:
    """``sin(pi/2 * tau_b)`` of the event-rate series."""
    cs = _as_cs(data)
    try:
        tau = kendall_tau_b(cs.p, cs.p_tilde)
    except DegenerateInputError:
        return GammaEstimate(0.0, Method.KEN, degenerate=True)
    return GammaEstimate(math.sin(0.5 * math.pi * tau), Method.KEN)


def spearman_gamma(data: Data) -> GammaEstimate:
    """``2 sin(pi/6 * rho_S)`` of the event-rate series."""
    cs = _as_cs(data)
    try:
        rho_s = spearman_rho(cs.p, cs.p_tilde)
    except DegenerateInputError:
        return GammaEstimate(0.0, Method.SPE, degenerate=True)
    return GammaEstimate(2.0 * math.sin(math.pi / 6.0 * rho_s), Method.SPE)


def _check_counts(d1: int, n1: int, d2: int, n2: int) -> None:
    for d, n in ((d1, n1), (d2, n2)):
        if int(d) != d or int(n) != n:
            raise ValueError("counts must be integers")
        if not 0 <= d <= n:
            raise ValueError(f"need 0 <= d <= n, got d={d}, n={n}")


def _log_binom(n, k):
    return special.gammaln(n + 1.0) - special.gammaln(k + 1.0) - special.gammaln(n - k + 1.0)


def bayes_sign_prob(d1: int, n1: int, d2: int, n2: int) -> float:
    """``P(X2 <= X1)`` for independent ``Xi ~ Beta(di + 1, ni - di + 1)``.

    These are the posteriors of two binomial proportions under uniform priors.
    The closed form is a finite sum of binomial coefficient products,

        C(n1+n2+2, n1+1)^-1 * sum_{i=0}^{d1} C(d2+i, d2) C(n1+n2+1-d2-i, n2-d2).

    Up to ``n1 + n2 = 8000`` the sum is formed in exact integer arithmetic and
    the ratio is correctly rounded. Larger inputs use a log-domain sum, whose
    relative error grows like ``eps * log C(n1+n2+2, n1+1)``; there the
    swapped orientation is computed as a complement so that
    ``P(d1, n1, d2, n2) + P(d2, n2, d1, n1) == 1`` holds to rounding.
    """
    _check_counts(d1, n1, d2, n2)
    if n1 + n2 <= _EXACT_LIMIT:
        return _bayes_exact(d1, n1, d2, n2)
    if (d1, n1) > (d2, n2):
        return 1.0 - _bayes_log(d2, n2, d1, n1)
    return _bayes_log(d1, n1, d2, n2)


_EXACT_LIMIT = 8000


def _bayes_exact(d1, n1, d2, n2):
    k = n2 - d2
    top = n1 + n2 + 1 - d2
    # running values of C(d2+i, d2) and C(top-i, k)
    a, b, total = 1, math.comb(top, k), 0
    for i in range(d1 + 1):
        total += a * b
        a = a * (d2 + i + 1) // (i + 1)
        b = b * (top - i - k) // (top - i) if top - i > k else 0
    return float(Fraction(total, math.comb(n1 + n2 + 2, n1 + 1)))


def _bayes_log(d1, n1, d2, n2):
    i = np.arange(d1 + 1, dtype=float)
    log_terms = _log_binom(d2 + i, float(d2)) + _log_binom(n1 + n2 + 1.0 - d2 - i, float(n2 - d2))
    log_prob = special.logsumexp(log_terms) - _log_binom(n1 + n2 + 2.0, n1 + 1.0)
    return float(min(1.0, max(0.0, math.exp(log_prob))))


def bayes_sign(d1: int, n1: int, d2: int, n2: int) -> float:
    """Probabilistic sign of ``X1 - X2``: ``P(X1 > X2) - P(X1 < X2)``.

    Equals ``2 * bayes_sign_prob(d1, n1, d2, n2) - 1`` because the beta
    posteriors are continuous.
    """
    return 2.0 * bayes_sign_prob(d1, n1, d2, n2) - 1.0


@dataclass
class EstimateReport:
    """Results of :func:`estimate_all` keyed by method."""

    estimates: dict[Method, GammaEstimate] = field(default_factory=dict)
    dmm: DmmDecomposition | None = None
    mad: MadDiagnostics | None = None


def estimate_all(
    panel: Panel,
    methods=tuple(Method),
    m: int = 100,
    rng: np.random.Generator | None = None,
) -> EstimateReport:
    """Apply every requested estimator to one panel, sharing intermediate work."""
    methods = [Method(mt) for mt in methods]
    report = EstimateReport()
    cs = cross_section(panel)
    need = set(methods)
    out: dict[Method, GammaEstimate] = {}
    if need & {Method.IMM, Method.MAX}:
        out[Method.IMM] = imm(cs)
    if need & {Method.IM2, Method.IM3}:
        if rng is None:
            raise ValueError("IM2/IM3 need an explicit random generator")
        steps = 3 if Method.IM3 in need else 2
        path = imm_bias_path(panel, steps, m, rng)
        out[Method.IM2] = path[1]
        if steps == 3:
            out[Method.IM3] = path[2]
    if Method.MAD in need:
        out[Method.MAD], report.mad = mad_estimator(cs)
    if need & {Method.DMM, Method.MAX}:
        out[Method.DMM], report.dmm = dmm(panel)
    if Method.MAX in need:
        out[Method.MAX] = max_estimator(out[Method.IMM], out[Method.DMM])
    if Method.KEN in need:
        out[Method.KEN] = ken_gamma(cs)
    if Method.SPE in need:
        out[Method.SPE] = spearman_gamma(cs)
    report.estimates = {mt: out[mt] for mt in methods}
    return report
