"""Quadrature and series engine against closed forms, self-consistency
identities, and an independent latent-model Monte Carlo oracle."""

import math

import numpy as np
import pytest

from stitlab import analytic
from stitlab.analytic import (MU_VT_P11_EXACT, P0_EXACT, P_T_EXACT,
                              PROB_ANY_T_EXACT, SeriesConfig)

SERIES = analytic.segment_series(2000)


def test_p0_quadrature_matches_closed_form():
    value, err = analytic.p_n(0)
    assert value == pytest.approx(P0_EXACT, abs=1e-10)
    assert err < 1e-10


def test_prob_any_t_closed_form():
    value, _ = analytic.prob_any_t()
    assert value == pytest.approx(PROB_ANY_T_EXACT, abs=1e-12)


def test_mu_vt_p11_closed_form():
    value, _ = analytic.mu_vt_p11_integral()
    assert value == pytest.approx(MU_VT_P11_EXACT, abs=1e-9)


def test_series_engine_matches_quadrature():
    for n in (0, 1, 2, 3, 5, 10, 20, 50):
        quad, _ = analytic.p_n(n)
        assert SERIES.p[n] == pytest.approx(quad, abs=1e-10), n


def test_pmf_normalization_and_mean():
    n = SERIES.n
    assert float(SERIES.p.sum()) < 1.0 + 1e-9
    assert float((n * SERIES.p).sum()) == pytest.approx(2.0, abs=2e-4)
    assert SERIES.pmf_deficit < 1e-5


def test_tail_deficit_shrinks_when_doubling():
    deficits = [analytic.segment_series(m).edge_deficit
                for m in (1250, 2500, 5000)]
    assert deficits[0] > deficits[1] > deficits[2] > 0


def test_joint_marginalization_small_n():
    for n in range(0, 8):
        total = 0.0
        for m in range(n + 1):
            val, _ = analytic.p_mj(m, n - m)
            total += val
        direct, _ = analytic.p_n(n)
        assert total == pytest.approx(direct, abs=1e-9), n


def test_left_right_symmetry_and_marginal():
    a, _ = analytic.p_lr(2, 1)
    b, _ = analytic.p_lr(1, 2)
    assert a == pytest.approx(b, abs=1e-12)
    for m in range(4):
        lr_total = sum(analytic.p_lr(l, m - l)[0] for l in range(m + 1))
        t_marginal, bound = analytic.t_count_marginal(m)
        assert lr_total == pytest.approx(t_marginal, abs=max(1e-8, bound))


def test_p_t_two_routes_agree():
    out = analytic.p_t_overall(series=SERIES)
    assert out["route_gap"] < 1e-6
    assert out["p_t"] == pytest.approx(P_T_EXACT, abs=1e-9)
    assert out["p_t"] == pytest.approx(0.433053, abs=1e-6)
    assert out["p_t"] + out["p_x"] == pytest.approx(1.0, abs=1e-15)


def test_conditional_t_probabilities():
    assert analytic.p_t_given_n(1, SERIES) == pytest.approx(0.3854, abs=5e-5)
    assert analytic.p_t_given_n(2, SERIES) == pytest.approx(0.4114, abs=5e-5)
    assert analytic.p_t_given_n(20, SERIES) == pytest.approx(0.6058, abs=5e-5)
    assert analytic.p_t_given_n(200, SERIES) > analytic.p_t_given_n(20, SERIES)
    assert analytic.p_t_given_n(200, SERIES) < 2.0 / 3.0


def test_binomial_structure_fails_for_the_joint_law():
    # the exact joint law is an exchangeable mixture: the probability that
    # both internal vertices of a two-vertex segment are T strictly exceeds
    # the squared conditional marginal
    p20, _ = analytic.p_mj(2, 0)
    p2, _ = analytic.p_n(2)
    both_t = p20 / p2
    marginal_sq = analytic.p_t_given_n(2, SERIES) ** 2
    assert both_t > marginal_sq + 0.02
    assert SERIES.s2[2] / SERIES.p[2] == pytest.approx(both_t, abs=1e-9)


def test_edge_type_probabilities():
    out = analytic.epsilon_edge_types(SeriesConfig(n_max=2000), SERIES)
    printed = out["independent-types"].values
    assert printed["TT"] == pytest.approx(0.442878, abs=1e-3)
    assert printed["XX"] == pytest.approx(printed["TT"] - 1.0 / 3.0, abs=1e-15)
    assert printed["TX"] == pytest.approx(4.0 / 3.0 - 2 * printed["TT"], abs=1e-15)
    exact = out["joint-exact"].values
    assert exact["TT"] == pytest.approx(0.449881, abs=1e-3)
    assert out["independent-types"].tail_deficit < 1e-2


def test_p1_class_probabilities_both_assignments():
    out = analytic.epsilon_p1(SeriesConfig(n_max=2000), SERIES)
    as_printed = out["as-printed/independent-types"].values
    fig = out["figure-consistent/independent-types"].values
    assert as_printed["P1,1"] == pytest.approx(0.555046, abs=1e-3)
    assert as_printed["P1,2"] == pytest.approx(0.300657, abs=1e-3)
    assert as_printed["P1,3"] == pytest.approx(0.144296, abs=1e-6)
    assert fig["P1,1"] == as_printed["P1,2"]
    assert fig["P1,2"] == as_printed["P1,1"]
    total = sum(fig.values())
    assert total == pytest.approx(1.0, abs=out["as-printed/independent-types"].tail_deficit + 1e-9)


def test_z1_class_probabilities():
    out = analytic.epsilon_z1(SeriesConfig(n_max=2000), SERIES)
    printed = out["independent-types"].values
    assert printed["Z1,0"] == pytest.approx(0.624550, abs=1e-3)
    assert printed["Z1,1"] == pytest.approx(0.231154, abs=1e-3)
    assert printed["Z1,2"] == pytest.approx(analytic.epsilon_p1(
        SeriesConfig(n_max=2000), SERIES)["as-printed/independent-types"].values["P1,3"], abs=1e-15)


def test_nu_exx_printed_values():
    pmf = analytic.nu_exx_pmf(4, SeriesConfig(n_max=2000), SERIES)
    assert pmf.values[0] == pytest.approx(0.795161, abs=1e-3)
    assert pmf.values[1] == pytest.approx(0.131115, abs=1e-3)
    assert pmf.values[2] == pytest.approx(0.046467, abs=1e-3)
    assert pmf.values[3] == pytest.approx(0.016359, abs=1e-3)
    assert pmf.values.sum() <= 1.0 + 1e-9


def test_nu_exx_conditionals_consistency():
    cond = analytic.nu_exx_conditionals(40, 4, SERIES)
    exact, product = cond["exact"], cond["product"]
    # rows with n - 1 <= 4 are complete distributions; beyond that the
    # truncated count axis leaves a legitimate deficit
    for n in range(0, 6):
        assert exact[n].sum() == pytest.approx(1.0, abs=1e-9)
        assert product[n].sum() == pytest.approx(1.0, abs=1e-9)
    for n in range(6, 41):
        assert exact[n].sum() <= 1.0 + 1e-9
        assert product[n].sum() <= 1.0 + 1e-9
    # the exchangeable mixture makes a no-XX run strictly more likely
    # than under the independent-pairs shortcut for n >= 3
    for n in range(3, 12):
        assert exact[n, 0] > product[n, 0]
    # recombining against p_n reproduces the unconditional exact pmf head
    pmf = analytic.nu_exx_pmf_exact(3, n_cut=400, grid=(120, 32))
    recombined = float((SERIES.p[:41] * exact[:, 0]).sum())
    tail = float(SERIES.p[41:].sum())
    assert abs(recombined - pmf.values[0]) < tail + 1e-6


def test_nu_exx_exact_against_latent_model_monte_carlo(rng):
    """Independent oracle: draw the latent pair directly, then the count
    chain, and compare with the transfer-matrix evaluation."""
    pmf = analytic.nu_exx_pmf_exact(3, n_cut=400, grid=(120, 32))
    n_draws = 400_000
    a = 1.0 - (1.0 - rng.random(n_draws)) ** (1.0 / 3.0)
    b = rng.random(n_draws)
    u = 3 * a + b - a * b
    d = 1 + 2 * a + b - a * b
    nu = rng.geometric(1.0 - u / d) - 1
    p_t = 2 * a / u
    counts = np.zeros(n_draws, dtype=int)
    active = nu >= 2
    idx = np.nonzero(active)[0]
    for i in idx:
        types_x = rng.random(nu[i]) >= p_t[i]
        counts[i] = int(np.sum(types_x[1:] & types_x[:-1]))
    counts[nu < 2] = 0
    for c in range(4):
        emp = float((counts == c).mean())
        se = math.sqrt(emp * (1 - emp) / n_draws)
        assert abs(emp - pmf.values[c]) < 4 * se, (c, emp, pmf.values[c])


def test_segment_sampler_matches_quadrature(rng):
    draws = analytic.sample_typical_segment(1.7, rng, size=200_000)
    nu_t = draws["nu_l"] + draws["nu_r"]
    for m in range(4):
        emp = float((nu_t == m).mean())
        se = math.sqrt(emp * (1 - emp) / len(nu_t))
        ana, _ = analytic.t_count_marginal(m)
        assert abs(emp - ana) < 4 * se
    lr = [(0, 0), (1, 0), (1, 1), (2, 1)]
    for l, r in lr:
        emp = float(((draws["nu_l"] == l) & (draws["nu_r"] == r)).mean())
        se = math.sqrt(emp * (1 - emp) / len(nu_t))
        ana, _ = analytic.p_lr(l, r)
        assert abs(emp - ana) < 4 * se
    assert float(nu_t.mean()) == pytest.approx(1.0, abs=0.02)


def test_sampler_time_invariance(rng):
    a = analytic.sample_typical_segment(0.5, rng, size=150_000)
    b = analytic.sample_typical_segment(5.0, rng, size=150_000)
    pa = float(((a["nu_l"] + a["nu_r"]) == 0).mean())
    pb = float(((b["nu_l"] + b["nu_r"]) == 0).mean())
    assert abs(pa - pb) < 4 * math.sqrt(2 * 0.25 / 150_000)


def test_derived_tables_published_rows():
    out = analytic.epsilon_edge_types(SeriesConfig(n_max=2000), SERIES)
    p1 = analytic.epsilon_p1(SeriesConfig(n_max=2000), SERIES)
    z1 = analytic.epsilon_z1(SeriesConfig(n_max=2000), SERIES)
    eps = dict(out["independent-types"].values)
    eps.update(p1["as-printed/independent-types"].values)
    eps.update(z1["independent-types"].values)
    # n_max = 2000 here, so the series tail limits agreement to ~3e-4; the
    # acceptance suite pins the full-precision values at n_max = 10000
    table = analytic.derived_tables(eps, SERIES)
    assert table["mu_V[T],E[TT]"] == pytest.approx(2.65727, abs=3e-4)
    assert table["eta_V[X],V[T]"] == pytest.approx(2.68546, abs=3e-4)
    assert table["mu_P,E[TX]"] == pytest.approx(2.30182, abs=3e-4)
    assert table["mu_Z,E[P1,3]"] == pytest.approx(5.1947, abs=1e-3)
    assert table["eta_V,V[T]"] == pytest.approx(8.0 / 3.0, abs=1e-15)
    assert table["mu_V[T],E[P1,1]"] == pytest.approx(MU_VT_P11_EXACT, abs=1e-4)
    assert table["eps_P1[E,1]"] == pytest.approx(0.681106, abs=1e-4)
    assert table["eps_Z1[E,1]"] == pytest.approx(0.519746, abs=1e-4)


def test_pmf_table_rejects_bad_entries():
    with pytest.raises(ValueError):
        analytic.PmfTable(values=np.array([1.2]), error_bounds=np.array([0.0]),
                          deficit=0.0)


def test_series_config_validation():
    with pytest.raises(ValueError):
        SeriesConfig(n_max=50)
