import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sectorcorr import estimators as est
from sectorcorr.estimators import (
    CrossSectionEstimates,
    DegenerateInputError,
    GammaEstimate,
    Method,
    bayes_sign,
    bayes_sign_prob,
    cross_section,
    dmm,
    estimate_all,
    imm,
    imm_bias_corrected,
    imm_bias_path,
    intra_normal_variance,
    ken_gamma,
    kendall_tau_b,
    mad_estimator,
    max_estimator,
    spearman_gamma,
    spearman_rho,
)
from sectorcorr.num_kernels import bvn_cdf, std_normal_cdf
from sectorcorr.study import ScenarioSpec, simulate_estimates
from sectorcorr.vasicek import PairModel, Panel, SectorParams, simulate_latent, simulate_panel

import oracles

# mpmath: Phi^-1(0.6 / 101.2)
G_ZERO_OF_100 = -2.516350854879022


def cs(g, gt):
    return CrossSectionEstimates.from_latent(g, gt)


def panel_from(d, dt, n=100, nt=100):
    d = np.asarray(d)
    return Panel.from_counts(np.full(d.size, n), d, np.full(d.size, nt), np.asarray(dt))


# cross-section ---------------------------------------------------------------


def test_cross_section_anchor():
    c = cross_section(panel_from([0, 50, 100], [3, 100, 0]))
    assert c.g[0] == pytest.approx(G_ZERO_OF_100, abs=1e-12)
    assert c.g[1] == 0.0
    assert np.all(np.isfinite(c.g)) and np.all(np.isfinite(c.g_tilde))
    assert c.g[2] == pytest.approx(-G_ZERO_OF_100, abs=1e-12)
    np.testing.assert_array_equal(c.p, [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(c.p_tilde, [0.03, 1.0, 0.0])


# IMM -------------------------------------------------------------------------


def test_imm_examples():
    assert imm(cs([0, 1, 2], [0, 1, 2])).value == pytest.approx(1.0)
    assert imm(cs([0, 1, 2], [0, 1, 4])).value == pytest.approx(0.96077, abs=1e-4)
    assert imm(cs([0, 1, 2], [0, 1, 4])).value == pytest.approx(oracles.pearson([0, 1, 2], [0, 1, 4]), abs=1e-15)
    assert imm(cs([0.5, -1, 2], [-0.5, 1, -2])).value == pytest.approx(-1.0)


def test_imm_degenerate():
    e = imm(cs([1, 1, 1], [0, 1, 2]))
    assert e.degenerate and e.value == 0.0 and e.method is Method.IMM


def test_imm_from_panel_equals_cross_section():
    p = panel_from([1, 5, 2, 8], [0, 3, 3, 9])
    assert imm(p) == imm(cross_section(p))


# normal-variance intra estimator ---------------------------------------------


def test_intra_normal_variance_examples():
    p_hat, rho_hat = intra_normal_variance([0.3, 0.3, 0.3])
    assert rho_hat == 0.0 and p_hat == pytest.approx(std_normal_cdf(0.3))
    _, rho_hat = intra_normal_variance([-1.0, 1.0])  # s2 = 2
    assert rho_hat == pytest.approx(2 / 3)
    _, rho_hat = intra_normal_variance([0.0, math.sqrt(2.0)])  # s2 = 1
    assert rho_hat == pytest.approx(0.5)


def test_intra_normal_variance_consistency():
    s = SectorParams(0.04, 0.08)
    rng = np.random.default_rng(4)
    y = rng.standard_normal(1_000_000)
    g = (est.std_normal_inv_cdf(s.p) - math.sqrt(s.rho) * y) / math.sqrt(1 - s.rho)
    p_hat, rho_hat = intra_normal_variance(g)
    assert rho_hat == pytest.approx(0.08, abs=0.001)
    assert p_hat == pytest.approx(0.04, abs=0.001)


# IM2 / IM3 -------------------------------------------------------------------


def test_bias_correction_no_measured_bias(monkeypatch):
    obs = panel_from([1, 5, 2, 8, 4], [0, 3, 3, 9, 2])

    def replay(model, n, n_tilde, rng, size=None):
        return np.tile(obs.d, (size, 1)), np.tile(obs.d_tilde, (size, 1))

    monkeypatch.setattr(est, "simulate_counts", replay)
    path = imm_bias_path(obs, 3, 7, np.random.default_rng(0))
    assert [e.method for e in path] == [Method.IMM, Method.IM2, Method.IM3]
    assert path[1].value == pytest.approx(path[0].value, abs=1e-15)
    assert path[2].value == pytest.approx(path[0].value, abs=1e-15)


def test_bias_correction_clamps(monkeypatch):
    obs = panel_from([1, 5, 2, 8, 4], [1, 5, 2, 8, 5])  # IMM close to 1
    flat = panel_from([1, 5, 2, 8, 4], [4, 2, 8, 1, 5])

    def replay(model, n, n_tilde, rng, size=None):
        return np.tile(flat.d, (size, 1)), np.tile(flat.d_tilde, (size, 1))

    monkeypatch.setattr(est, "simulate_counts", replay)
    base = imm(obs).value
    sim = imm(flat).value
    assert base + (base - sim) > 1
    e = imm_bias_corrected(obs, steps=2, m=3, rng=np.random.default_rng(0))
    assert e.value == 1.0 and e.clamped and e.method is Method.IM2


def test_bias_correction_update_rule(monkeypatch):
    obs = panel_from([1, 5, 2, 8, 4], [0, 3, 3, 9, 2])
    other = panel_from([1, 5, 2, 8, 4], [3, 1, 4, 6, 2])
    calls = []

    def replay(model, n, n_tilde, rng, size=None):
        calls.append(model.gamma)
        return np.tile(other.d, (size, 1)), np.tile(other.d_tilde, (size, 1))

    monkeypatch.setattr(est, "simulate_counts", replay)
    g0, g_sim = imm(obs).value, imm(other).value
    path = imm_bias_path(obs, 3, 4, np.random.default_rng(0))
    g1 = max(-1, min(1, g0 + (g0 - g_sim)))
    assert path[1].value == pytest.approx(g1, abs=1e-14)
    assert path[2].value == pytest.approx(max(-1, min(1, g1 + (g0 - g_sim))), abs=1e-14)
    assert calls == [pytest.approx(g0), pytest.approx(g1)]


def test_bias_correction_uses_intra_estimates(monkeypatch):
    obs = panel_from([1, 5, 2, 8, 4], [0, 3, 3, 9, 2], n=100, nt=150)
    seen = {}

    def spy(model, n, n_tilde, rng, size=None):
        seen["model"] = model
        seen["sizes"] = (np.array(n), np.array(n_tilde), size)
        return np.tile(obs.d, (size, 1)), np.tile(obs.d_tilde, (size, 1))

    monkeypatch.setattr(est, "simulate_counts", spy)
    imm_bias_corrected(obs, steps=2, m=5, rng=np.random.default_rng(0))
    c = cross_section(obs)
    assert seen["model"].sector_a == SectorParams(*intra_normal_variance(c.g))
    assert seen["model"].sector_b == SectorParams(*intra_normal_variance(c.g_tilde))
    assert list(seen["sizes"][1]) == [150] * 5 and seen["sizes"][2] == 5


def test_bias_correction_deterministic_and_nested():
    p = simulate_panel(PairModel.symmetric(0.04, 0.04, 0.25), [(400, 400)] * 50, np.random.default_rng(7))
    im2 = imm_bias_corrected(p, 2, 20, np.random.default_rng(1))
    path = imm_bias_path(p, 3, 20, np.random.default_rng(1))
    assert im2 == path[1]
    assert imm_bias_corrected(p, 3, 20, np.random.default_rng(1)) == path[2]


def test_bias_correction_degenerate_propagates():
    p = panel_from([3, 3, 3], [1, 2, 3])
    path = imm_bias_path(p, 3, 5, np.random.default_rng(0))
    assert all(e.degenerate and e.value == 0.0 for e in path)


@pytest.mark.slow
def test_im2_bias_mid_scenario():
    spec = ScenarioSpec(100, 400, 0.04, 0.04, 0.25, reps=1000, m=100, seed=0)
    values, _ = simulate_estimates(spec, [Method.IM2])
    assert values[:, 0].mean() - 0.25 == pytest.approx(-0.034, abs=0.015)


# MAD -------------------------------------------------------------------------


def test_mad_examples():
    e, diag = mad_estimator(cs([1, 2, 3, 4], [2, 1, 4, 3]))
    assert (diag.mad_u, diag.mad_v) == (2.0, 1.0)
    assert e.value == pytest.approx(0.6)
    assert mad_estimator(cs([1, 2, 3, 4, 7], [1, 2, 3, 4, 7]))[0].value == 1.0
    assert mad_estimator(cs([1, 2, 3, 4, 7], [-1, -2, -3, -4, -7]))[0].value == -1.0


def test_mad_matches_hand_formula():
    rng = np.random.default_rng(3)
    g, gt = rng.standard_normal(31), rng.standard_normal(31)
    med = oracles.median_even_rule

    def mad(x):
        return med([abs(v - med(x)) for v in x])

    gc = [(v - med(g)) / mad(g) for v in g]
    gtc = [(v - med(gt)) / mad(gt) for v in gt]
    u = [a + b for a, b in zip(gc, gtc)]
    v = [a - b for a, b in zip(gc, gtc)]
    expected = (mad(u) ** 2 - mad(v) ** 2) / (mad(u) ** 2 + mad(v) ** 2)
    assert mad_estimator(cs(g, gt))[0].value == pytest.approx(expected, abs=1e-14)
    assert mad_estimator(cs(g[:30], gt[:30]))[0].value == pytest.approx(
        mad_estimator(cs(g[:30], gt[:30]))[0].value
    )


def test_mad_degenerate():
    e, _ = mad_estimator(cs([1, 1, 1, 2], [0, 1, 2, 3]))
    assert e.degenerate and e.value == 0.0


# DMM -------------------------------------------------------------------------


def test_dmm_independence_matching():
    e, dec = dmm(panel_from([1, 3, 5, 7], [5, 5, 5, 5]))
    assert dec.q_m == pytest.approx(dec.p_m * dec.p_m_tilde, abs=1e-15)
    assert abs(dec.delta_m) <= 1e-12
    assert e.value == 0.0


def test_dmm_upper_frechet():
    # all-or-nothing cohorts put q_m on the upper bound
    e, dec = dmm(panel_from([0, 2, 0, 2, 2], [0, 2, 0, 2, 2], n=2, nt=2))
    assert dec.q_m == pytest.approx(min(dec.p_m, dec.p_m_tilde))
    assert dec.delta_m == 1.0 and dec.rho_m == 1.0
    assert e.value == 1.0 and not e.degenerate


def test_dmm_decomposition_values():
    p = panel_from([2, 9, 4, 0, 6], [1, 7, 6, 2, 8], n=50, nt=80)
    e, dec = dmm(p)
    x, xt = p.d / 50, p.d_tilde / 80
    assert dec.p_m == pytest.approx(x.mean())
    assert dec.q_m == pytest.approx((x * xt).mean())
    assert dec.p2_m == pytest.approx(np.mean(p.d * (p.d - 1) / (50 * 49)))
    a = est.std_normal_inv_cdf(dec.p_m)
    b = est.std_normal_inv_cdf(dec.p_m_tilde)
    assert bvn_cdf(a, b, dec.delta_m) == pytest.approx(dec.q_m, abs=1e-11)
    assert bvn_cdf(a, a, dec.rho_m) == pytest.approx(dec.p2_m, abs=1e-11)
    raw = dec.delta_m / math.sqrt(dec.rho_m * dec.rho_m_tilde)
    assert e.value == pytest.approx(max(-1, min(1, raw)))
    assert e.clamped == (abs(raw) > 1)
    assert dec.gamma_p2_denominator == pytest.approx(dec.delta_m / math.sqrt(dec.p2_m * dec.p2_m_tilde))


def test_dmm_zero_intra_correlation():
    # p2_m < p_m^2 forces rho_m = 0, so the ratio is undefined
    e, dec = dmm(panel_from([5, 5, 5, 5], [1, 3, 5, 9]))
    assert dec.rho_m == 0.0
    assert e.degenerate and e.value == math.copysign(1.0, dec.delta_m) or e.value == 0.0


@pytest.mark.parametrize("d", [[0, 0, 0], [100, 100, 100]])
def test_dmm_no_events_is_degenerate(d):
    e, _ = dmm(panel_from(d, [1, 2, 3]))
    assert e.degenerate and e.value == 0.0


def test_dmm_needs_cohorts_of_two():
    with pytest.raises(ValueError):
        dmm(panel_from([0, 1], [0, 1], n=1))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(2, 40), st.integers(0, 40), st.integers(2, 40), st.integers(0, 40)), min_size=2, max_size=12))
def test_dmm_frechet_inequalities(rows):
    rows = [(n, min(d, n), nt, min(dt, nt)) for n, d, nt, dt in rows]
    n, d, nt, dt = map(np.array, zip(*rows))
    e, dec = dmm(Panel.from_counts(n, d, nt, dt))
    assert -1.0 <= e.value <= 1.0
    lo = max(0.0, dec.p_m + dec.p_m_tilde - 1)
    hi = min(dec.p_m, dec.p_m_tilde)
    assert lo - 1e-15 <= dec.q_m <= hi + 1e-15
    if not e.degenerate or not math.isnan(dec.rho_m):
        if not math.isnan(dec.rho_m):
            assert 0.0 <= dec.rho_m <= 1.0
            if dec.p2_m < dec.p_m**2:
                assert dec.rho_m == 0.0


@pytest.mark.slow
def test_dmm_bias_large_sample():
    spec = ScenarioSpec(800, 3200, 0.04, 0.04, 0.25, reps=2000, m=1, seed=0)
    values, _ = simulate_estimates(spec, [Method.DMM])
    assert abs(values[:, 0].mean() - 0.25) <= 0.01


# MAX -------------------------------------------------------------------------


@pytest.mark.parametrize(
    "a,b,expected,source",
    [(0.3, -0.5, -0.5, "dmm"), (0.5, 0.5, 0.5, "dmm"), (-0.2, 0.1, -0.2, "imm"), (-0.5, 0.5, 0.5, "dmm")],
)
def test_max_estimator(a, b, expected, source):
    i = GammaEstimate(a, Method.IMM)
    d = GammaEstimate(b, Method.DMM, degenerate=True)
    e = max_estimator(i, d)
    assert e.value == expected and e.method is Method.MAX
    assert e.degenerate == (source == "dmm")


# Kendall / Spearman ----------------------------------------------------------


def test_kendall_examples():
    assert kendall_tau_b([1, 2, 3], [1, 3, 2]) == pytest.approx(1 / 3)
    assert kendall_tau_b([1, 2, 3, 4], [2, 5, 7, 9]) == 1.0
    assert kendall_tau_b([1, 1, 2], [1, 2, 3]) == pytest.approx(2 / math.sqrt(6))


def test_kendall_degenerate():
    with pytest.raises(DegenerateInputError):
        kendall_tau_b([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        kendall_tau_b([1, 2], [1, 2, 3])


tie_series = st.integers(2, 50).flatmap(
    lambda T: st.tuples(
        st.lists(st.integers(0, 6), min_size=T, max_size=T),
        st.lists(st.integers(0, 6), min_size=T, max_size=T),
    )
)


@settings(max_examples=300)
@given(tie_series)
def test_kendall_matches_bruteforce(xy):
    x, y = xy
    try:
        value = kendall_tau_b(x, y)
    except DegenerateInputError:
        assert len(set(x)) == 1 or len(set(y)) == 1
        return
    assert value == oracles.kendall_tau_b_bruteforce(x, y)


@settings(max_examples=300)
@given(tie_series)
def test_spearman_matches_bruteforce(xy):
    x, y = xy
    try:
        value = spearman_rho(x, y)
    except DegenerateInputError:
        assert len(set(x)) == 1 or len(set(y)) == 1
        return
    assert value == oracles.spearman_signsum_bruteforce(x, y)


@settings(max_examples=100)
@given(st.integers(2, 40).flatmap(lambda T: st.tuples(st.permutations(range(T)), st.permutations(range(T)))))
def test_spearman_rank_form_equals_pearson_of_ranks(perms):
    x, y = perms
    assert spearman_rho(x, y) == oracles.spearman_signsum_bruteforce(x, y)
    rx, ry = oracles.ordinal_ranks(x), oracles.ordinal_ranks(y)
    assert spearman_rho(x, y) == pytest.approx(oracles.pearson(rx, ry), abs=1e-15)


def test_ken_gamma_transform():
    assert ken_gamma(cs([1, 2, 3], [1, 3, 2])).value == pytest.approx(0.5)
    assert ken_gamma(cs([1, 2, 3], [1, 2, 3])).value == 1.0
    e = ken_gamma(cs([1, 1, 1], [1, 2, 3]))
    assert e.degenerate and e.value == 0.0


def test_ken_uses_event_rates():
    # different cohort sizes: ranks of d/n differ from ranks of d
    p = Panel.from_counts([10, 100, 10], [1, 5, 3], [10, 10, 10], [1, 2, 3])
    tau = kendall_tau_b(p.d / p.n, p.d_tilde / p.n_tilde)
    assert ken_gamma(p).value == pytest.approx(math.sin(math.pi / 2 * tau))


def test_spearman_gamma_transform():
    assert spearman_gamma(cs([1, 2, 3], [1, 2, 3])).value == pytest.approx(1.0)
    x = [1, 2, 3, 4]
    y = [2, 4, 1, 3]  # rho_S = 0
    assert spearman_rho(x, y) == 0.0
    assert spearman_gamma(cs(x, y)).value == 0.0
    assert spearman_gamma(cs([2, 2, 2], [1, 2, 3])).degenerate


@pytest.mark.parametrize("gamma", [-0.5, 0.0, 0.25, 0.5])
def test_latent_exact_consistency(gamma):
    s = SectorParams(0.04, 0.08)
    y, yt = simulate_latent(PairModel(s, s, gamma), np.random.default_rng(100 + int(gamma * 4)), size=100_000)
    a = est.std_normal_inv_cdf(s.p)
    g = (a - math.sqrt(s.rho) * y) / math.sqrt(1 - s.rho)
    gt = (a - math.sqrt(s.rho) * yt) / math.sqrt(1 - s.rho)
    data = cs(g, gt)
    for fn in (imm, lambda c: mad_estimator(c)[0], ken_gamma, spearman_gamma):
        assert fn(data).value == pytest.approx(gamma, abs=0.02)


# invariances -----------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_affine_invariance(scale, shift, seed):
    rng = np.random.default_rng(seed)
    g, gt = rng.standard_normal(25), rng.standard_normal(25)
    base = cs(g, gt)
    moved = cs(g * scale + shift, gt * scale + shift)
    assert imm(moved).value == pytest.approx(imm(base).value, abs=1e-10)
    assert mad_estimator(moved)[0].value == pytest.approx(mad_estimator(base)[0].value, abs=1e-10)


@settings(max_examples=60)
@given(st.integers(0, 2**32 - 1))
def test_rank_invariance(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random(30), rng.random(30)
    base = CrossSectionEstimates(x, y, x, y)
    moved = CrossSectionEstimates(x, y, np.exp(3 * x), y**3 + 1)
    assert ken_gamma(moved).value == ken_gamma(base).value
    assert spearman_gamma(moved).value == spearman_gamma(base).value


# Bayesian sign ---------------------------------------------------------------


def test_bayes_examples():
    assert bayes_sign_prob(0, 0, 0, 0) == pytest.approx(0.5, abs=1e-15)
    assert bayes_sign_prob(1, 1, 0, 1) == pytest.approx(5 / 6, abs=1e-12)
    assert bayes_sign(1, 1, 0, 1) == pytest.approx(2 / 3, abs=1e-12)
    assert bayes_sign(3, 7, 3, 7) == pytest.approx(0.0, abs=1e-12)
    assert bayes_sign(50, 100, 50, 100) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("d1", range(7))
@pytest.mark.parametrize("d2", range(7))
def test_bayes_against_quadrature(d1, d2):
    assert abs(bayes_sign_prob(d1, 6, d2, 6) - oracles.beta_compare_quad(d1, 6, d2, 6)) <= 1e-10


@settings(max_examples=200)
@given(st.integers(0, 3000).flatmap(lambda n1: st.tuples(st.integers(0, n1), st.just(n1))),
       st.integers(0, 3000).flatmap(lambda n2: st.tuples(st.integers(0, n2), st.just(n2))))
def test_bayes_swap_symmetry(a, b):
    (d1, n1), (d2, n2) = a, b
    total = bayes_sign_prob(d1, n1, d2, n2) + bayes_sign_prob(d2, n2, d1, n1)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_bayes_monotone_in_d1():
    for n1 in range(0, 9):
        for d2, n2 in [(0, 3), (2, 5), (4, 4), (1, 8)]:
            signs = [bayes_sign(d1, n1, d2, n2) for d1 in range(n1 + 1)]
            assert all(b >= a for a, b in zip(signs, signs[1:]))


@pytest.mark.parametrize("args", [(-1, 3, 0, 1), (4, 3, 0, 1), (0, 1, 2, 1), (0.5, 1, 0, 1)])
def test_bayes_domain(args):
    with pytest.raises(ValueError):
        bayes_sign_prob(*args)


# combined --------------------------------------------------------------------


def test_estimate_all_consistent_with_singles():
    p = simulate_panel(PairModel.symmetric(0.08, 0.1, 0.5), [(400, 400)] * 40, np.random.default_rng(3))
    report = estimate_all(p, list(Method), m=10, rng=np.random.default_rng(5))
    assert list(report.estimates) == list(Method)
    assert report.estimates[Method.IMM] == imm(p)
    assert report.estimates[Method.DMM] == dmm(p)[0]
    assert report.estimates[Method.MAD] == mad_estimator(p)[0]
    assert report.estimates[Method.KEN] == ken_gamma(p)
    assert report.estimates[Method.SPE] == spearman_gamma(p)
    assert report.estimates[Method.MAX] == max_estimator(imm(p), dmm(p)[0])
    path = imm_bias_path(p, 3, 10, np.random.default_rng(5))
    assert report.estimates[Method.IM2] == path[1]
    assert report.estimates[Method.IM3] == path[2]
    for e in report.estimates.values():
        assert -1.0 <= e.value <= 1.0


def test_estimate_all_requires_rng_for_bias_correction():
    p = panel_from([1, 2, 3], [3, 2, 4])
    with pytest.raises(ValueError):
        estimate_all(p, [Method.IM2])


@pytest.mark.parametrize("args", [(100, 9000, 30, 900), (4000, 8000, 10, 20), (4500, 9000, 500, 1000)])
def test_bayes_large_counts(args):
    d1, n1, d2, n2 = args
    forward = bayes_sign_prob(d1, n1, d2, n2)
    assert forward + bayes_sign_prob(d2, n2, d1, n1) == pytest.approx(1.0, abs=1e-12)
    assert forward == pytest.approx(est._bayes_exact(d1, n1, d2, n2), abs=1e-9)
