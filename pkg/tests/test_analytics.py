import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachenet import analytics as an
from cachenet.geometry import ChannelParams, ParameterError, RegionSpec
from cachenet.montecarlo import simulate_nearest_power
from cachenet.popularity import CacheSet

from conftest import RN_DEFAULT, RHO0, desk_scenario


def test_gamma_closed_forms():
    for x in (0.5, 1.0, 5.0):
        assert an.lower_incomplete_gamma(1, x) == pytest.approx(1 - math.exp(-x), rel=1e-12)
    assert an.lower_incomplete_gamma(2, 1.0) == pytest.approx(0.2642411176571153, rel=1e-12)
    for a in (0.5, 1.0, 2.25, 7.0):
        assert an.lower_incomplete_gamma(a, 0.0) == 0.0


@settings(max_examples=60, deadline=None)
@given(st.floats(0.1, 10), st.floats(1e-6, 60))
def test_gamma_recurrence(a, x):
    lhs = an.lower_incomplete_gamma(a + 1, x)
    rhs = a * an.lower_incomplete_gamma(a, x) - x**a * math.exp(-x)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_gamma_rejects_bad_arguments():
    with pytest.raises(ParameterError):
        an.lower_incomplete_gamma(0.0, 1.0)
    with pytest.raises(ParameterError):
        an.lower_incomplete_gamma(1.0, -1.0)


def _single(q, lam, R=0.5):
    F = 4
    P = np.tile([q, 1 - q, 0, 0], (3, 1))
    return an.ClusteredScenario(
        P,
        np.zeros(3, int),
        [CacheSet(frozenset({0}), 1.0)],
        RegionSpec(RN_DEFAULT, 30.0, 2.5, R),
        ChannelParams(2.5, RHO0, 0.0, 0.1),
        an.PowerParams(),
        np.array([lam]),
    )


def test_hit_single_cluster_by_hand():
    sc = _single(0.3, 1.2)
    assert an.hit_probability(sc).raw == pytest.approx(0.3 * (1 - math.exp(-1.2 * math.pi * 0.25)))


def test_hit_zero_density():
    sc = desk_scenario(densities=[0, 0, 0])
    assert an.hit_probability(sc).raw == 0.0


def test_hit_monotone_in_density_and_radius():
    sc = desk_scenario()
    base = an.hit_probability(sc).raw
    for k in range(3):
        d = sc.densities.copy()
        d[k] += 0.2
        assert an.hit_probability(sc.with_densities(d)).raw >= base
    assert an.hit_probability(desk_scenario(R=0.8)).raw >= base


def test_clamped_hit_caps_overlap():
    sc = desk_scenario(eta=0.9, densities=[5, 5, 5], R=1.5)
    h = an.hit_probability(sc)
    assert h.raw > 1.0 and h.clamped == 1.0


def test_mean_nearest_power_alpha_two_form():
    # alpha = 2 is outside ChannelParams' range, so exercise the formula through a namespace
    ch = type("Ch", (), {"pathloss_exponent_alpha": 2.0, "target_rx_power_rho0": 0.7})()
    lam, R = 1.3, 0.6
    x = math.pi * lam * R * R
    expect = 0.7 * (1 - math.exp(-x) * (1 + x)) / (lam * math.pi)
    assert an.mean_nearest_tx_power(lam, ch, R) == pytest.approx(expect, rel=1e-12)


def test_mean_nearest_power_vanishes_and_decreases():
    ch = ChannelParams()
    assert an.mean_nearest_tx_power(1e4, ch, 0.5) < 1e-6
    # with R large enough that links are almost never cut off, denser means shorter links
    vals = [an.mean_nearest_tx_power(l, ch, 5.0) for l in (0.2, 0.5, 1, 2, 5)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_truncated_mean_power_rises_at_low_density():
    # below the peak, more SBSs mean more users with any link at all, so the mean grows
    ch = ChannelParams()
    assert an.mean_nearest_tx_power(0.5, ch, 0.5) < an.mean_nearest_tx_power(1.0, ch, 0.5)


@pytest.mark.parametrize("lam,R", [(0.4, 0.9), (1.5, 0.5)])
def test_mean_nearest_power_matches_sampling(lam, R):
    ch = ChannelParams(2.5, RHO0, 0.0, 0.1)
    est = simulate_nearest_power(lam, ch, R, 1_000_000, seed=11)
    assert est.mean == pytest.approx(an.mean_nearest_tx_power(lam, ch, R), rel=0.01)


def test_cached_power_single_cluster_reduces():
    sc = _single(0.4, 1.1)
    n = 1.1 * math.pi * RN_DEFAULT**2
    h = an.hit_probability(sc).clamped
    pw = sc.power
    expect = n * (pw.rho_hd * h + pw.rho_bh * (1 - h) + pw.rho_fix) + n * an.mean_nearest_tx_power(1.1, sc.channel, 0.5)
    assert an.total_power_cached(sc) == pytest.approx(expect, rel=1e-12)


def test_cross_term_vanishes_for_symmetric_clusters():
    sc = desk_scenario(num_clusters=2, densities=[0.6, 0.6])
    n = 1.2 * sc.region.area
    assert an.transmit_power_total(sc) == pytest.approx(n * an.mean_nearest_tx_power(0.6, sc.channel, 0.5), rel=1e-12)


def test_uncached_equals_cached_without_disk_saving():
    pw = an.PowerParams(rho_hd=10.0 - 1e-12, rho_bh=10.0)
    sc = _single(0.5, 0.9)
    sc = an.ClusteredScenario(sc.profiles, sc.assignment, sc.cache_sets, sc.region, sc.channel, pw, sc.densities)
    assert an.total_power_cached(sc) == pytest.approx(an.total_power_uncached(0.9, sc.region, sc.channel, pw), rel=1e-12)


def test_uncached_linear_in_backhaul():
    reg = RegionSpec(RN_DEFAULT, 30.0, 2.5, 0.5)
    ch = ChannelParams()
    p1 = an.total_power_uncached(1.3, reg, ch, an.PowerParams(rho_bh=10.0))
    p2 = an.total_power_uncached(1.3, reg, ch, an.PowerParams(rho_bh=20.0))
    assert p2 - p1 == pytest.approx(1.3 * reg.area * 10.0)


def test_uncached_desk_arithmetic():
    # independent arithmetic: 1.6/km^2 on 10 km^2, 10.16 W fixed, 10 W backhaul,
    # transmit 0.1258925 * gamma(2.25, x) / (1.6 pi)^1.25 with x = 1.6 pi 0.25
    reg = RegionSpec(RN_DEFAULT, 30.0, 2.5, 0.5)
    x = 1.6 * math.pi * 0.25
    g = 0.0
    term = 1.0 / 2.25
    k = 0
    while term > 1e-18:
        g += term
        k += 1
        term *= x / (2.25 + k)
    g *= x**2.25 * math.exp(-x)
    tx = RHO0 * g / (1.6 * math.pi) ** 1.25
    expect = 16.0 * (10.16 + 10.0 + tx)
    assert an.total_power_uncached(1.6, reg, ChannelParams(), an.PowerParams()) == pytest.approx(expect, rel=1e-12)


def test_coverage_without_interference_or_noise():
    assert an.coverage_probability([0.0, 0.0], ChannelParams(2.5, RHO0, 0.0, 1.0), 0.5) == 1.0


def test_coverage_monotone():
    ch = lambda th, s2: ChannelParams(2.5, RHO0, s2, th)
    d = [0.5, 1.0]
    thetas = [0.01, 0.1, 1, 10]
    covs = [an.coverage_probability(d, ch(t, 0.0), 0.5) for t in thetas]
    assert all(a > b for a, b in zip(covs, covs[1:]))
    noises = [0.0, 1e-3, 1e-2]
    covs = [an.coverage_probability(d, ch(0.1, s), 0.5) for s in noises]
    assert all(a > b for a, b in zip(covs, covs[1:]))
    base = an.coverage_probability(d, ch(0.1, 0.0), 0.5)
    assert 0 < base <= 1
    assert an.coverage_probability([0.6, 1.0], ch(0.1, 0.0), 0.5) < base


def test_spectral_efficiency_assembly():
    reg = RegionSpec(RN_DEFAULT, 30.0, 2.5, 0.5)
    ch = ChannelParams(2.5, RHO0, 0.0, 0.2)
    d = [0.7, 0.5]
    cov = an.coverage_probability(d, ch, 0.5)
    assert an.spectral_efficiency(d, ch, reg) == pytest.approx(1.2 * reg.area * math.log(1.2) * cov)
    tiny = ChannelParams(2.5, RHO0, 0.0, 1e-12)
    assert an.spectral_efficiency(d, tiny, reg) < 1e-9


def test_energy_efficiency_is_ratio():
    sc = desk_scenario()
    se = an.spectral_efficiency(sc.densities, sc.channel, sc.region)
    assert an.energy_efficiency(sc) == pytest.approx(se / an.total_power_cached(sc))


def test_metrics_row_and_grid_csv(tmp_path):
    sc = desk_scenario()
    rows = an.evaluate_grid([({"label": "a"}, sc)], path=tmp_path / "g.csv")
    assert rows[0]["ee_nats_per_joule"] == pytest.approx(an.energy_efficiency(sc))
    header = (tmp_path / "g.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "label" and "coverage" in header


def test_unclustered_twin():
    sc = desk_scenario()
    cache = sc.cache_sets[0]
    twin = an.unclustered_scenario(sc, cache)
    assert twin.num_clusters == 1
    assert twin.total_density == pytest.approx(sc.total_density)


def test_power_params_guard():
    with pytest.raises(ParameterError):
        an.PowerParams(rho_hd=11.0, rho_bh=10.0)
