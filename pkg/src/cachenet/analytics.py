"""Closed-form hit probability, power, coverage, spectral and energy efficiency.

All densities are per km^2, lengths in km, powers in watts. Clusters whose
active density is zero are dropped from the products and sums; a scenario that
assigns users to such a cluster has no defined association and is rejected by
the power model.
"""

from __future__ import annotations

import csv
import math
import sys
from dataclasses import dataclass, replace

import numpy as np

from .geometry import ChannelParams, ParameterError, RegionSpec
from .popularity import CacheSet, cached_mass

_EPS = sys.float_info.epsilon
_FPMIN = sys.float_info.min / _EPS


def lower_incomplete_gamma(a: float, x: float, rel_tol: float = 1e-15, max_iter: int = 10_000) -> float:
    """gamma(a, x) = integral_0^x t^(a-1) e^(-t) dt.

    Power series below x = a + 1, Lentz continued fraction for the upper
    function above it.
    """
    if not a > 0:
        raise ParameterError(f"shape a must be positive, got {a}")
    if x < 0:
        raise ParameterError(f"x must be non-negative, got {x}")
    if x == 0:
        return 0.0
    log_pre = a * math.log(x) - x
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        ap = a
        for _ in range(max_iter):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * rel_tol:
                break
        return total * math.exp(log_pre)
    # upper incomplete gamma by modified Lentz, then subtract from Gamma(a)
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < rel_tol:
            break
    upper = math.exp(log_pre) * h
    return math.gamma(a) - upper


@dataclass(frozen=True)
class PowerParams:
    rho_fix: float = 10.16  # per active SBS
    rho_bh: float = 10.0  # backhaul fetch
    rho_hd: float = 12.5e-5  # local disk fetch
    rho0: float = 0.12589254117941673  # 21 dBm target rx power

    def __post_init__(self):
        if min(self.rho_fix, self.rho_bh, self.rho_hd, self.rho0) < 0:
            raise ParameterError("powers must be non-negative")
        if not self.rho_hd < self.rho_bh:
            raise ParameterError("disk fetch power must be below backhaul fetch power")


@dataclass
class ClusteredScenario:
    """Everything the closed-form metrics need for one clustered network.

    ``profiles`` is (U, F); ``assignment[u]`` is the cluster of user u;
    ``cache_sets[k]`` and ``densities[k]`` describe cluster k.
    """

    profiles: np.ndarray
    assignment: np.ndarray
    cache_sets: list
    region: RegionSpec
    channel: ChannelParams
    power: PowerParams
    densities: np.ndarray

    def __post_init__(self):
        self.profiles = np.asarray(self.profiles, dtype=float)
        self.assignment = np.asarray(self.assignment, dtype=int)
        self.densities = np.asarray(self.densities, dtype=float)
        nc = len(self.cache_sets)
        if len(self.densities) != nc:
            raise ParameterError("one density per cache set required")
        if len(self.assignment) and (self.assignment.max() >= nc or self.assignment.min() < 0):
            raise ParameterError("assignment refers to an unknown cluster")
        if np.any(self.densities < 0):
            raise ParameterError("densities must be non-negative")
        self._mass = None

    @property
    def num_clusters(self) -> int:
        return len(self.cache_sets)

    @property
    def total_density(self) -> float:
        return float(self.densities.sum())

    @property
    def mass(self) -> np.ndarray:
        """(U, N_c) request mass of each user inside each cluster's cache."""
        if self._mass is None:
            self._mass = cached_mass(self.profiles, self.cache_sets)
        return self._mass

    def with_densities(self, densities) -> "ClusteredScenario":
        new = replace(self, densities=np.asarray(densities, dtype=float))
        new._mass = self._mass
        return new


@dataclass(frozen=True)
class HitProbability:
    raw: float
    clamped: float


def _in_range_prob(densities, R):
    return 1.0 - np.exp(-np.asarray(densities, dtype=float) * math.pi * R * R)


def hit_probability(scenario: ClusteredScenario) -> HitProbability:
    """Per-cluster hit masses summed over clusters and averaged over users.

    Overlapping caches are counted once per cluster holding the file, so the
    raw value can exceed one; ``clamped`` caps it to [0, 1].
    """
    U = len(scenario.profiles)
    if U == 0:
        return HitProbability(0.0, 0.0)
    cover = _in_range_prob(scenario.densities, scenario.region.comm_radius_R)
    raw = float((scenario.mass * cover).sum() / U)
    return HitProbability(raw, min(max(raw, 0.0), 1.0))


def mean_nearest_tx_power(lambda_sk: float, channel: ChannelParams, R: float) -> float:
    """E[rho0 r^alpha; r < R] for r the distance to the nearest point of a PPP."""
    if lambda_sk < 0:
        raise ParameterError("density must be non-negative")
    if lambda_sk == 0:
        return 0.0
    a = channel.pathloss_exponent_alpha
    x = math.pi * lambda_sk * R * R
    return channel.target_rx_power_rho0 * lower_incomplete_gamma(a / 2.0 + 1.0, x) / (lambda_sk * math.pi) ** (a / 2.0)


def mean_nearest_power_moment(lambda_sk: float, channel: ChannelParams, R: float) -> float:
    """E[rho^(2/alpha)] for the truncated nearest-link power."""
    if lambda_sk == 0:
        return 0.0
    a = channel.pathloss_exponent_alpha
    x = math.pi * lambda_sk * R * R
    return channel.target_rx_power_rho0 ** (2.0 / a) * lower_incomplete_gamma(2.0, x) / (lambda_sk * math.pi)


def _active_sbs(lambda_s: float, region: RegionSpec) -> float:
    return lambda_s * region.area


def fetch_power(hit: float, n_sbs: float, power: PowerParams) -> float:
    return n_sbs * (power.rho_hd * hit + power.rho_bh * (1.0 - hit))


def transmit_power_total(scenario: ClusteredScenario) -> float:
    """Average total transmit power under the own-cluster-first association.

    A user of cluster k pays E[rho_k] by default; with probability
    ``q_uj (1 - e^{-lambda_j pi R^2})`` its request is a hit at a foreign
    cluster j and it pays E[rho_j] instead.
    """
    dens = scenario.densities
    R = scenario.region.comm_radius_R
    U = len(scenario.profiles)
    if U == 0:
        return 0.0
    used = np.unique(scenario.assignment)
    if np.any(dens[used] == 0):
        raise ParameterError("users are assigned to a cluster with zero active density")
    E = np.array([mean_nearest_tx_power(l, scenario.channel, R) for l in dens])
    cover = _in_range_prob(dens, R)
    own = scenario.assignment
    hit_j = scenario.mass * cover  # (U, N_c)
    per_user = E[own] + (hit_j * (E[None, :] - E[own][:, None])).sum(1)
    # the j == k term is identically zero, so no mask is needed
    return _active_sbs(scenario.total_density, scenario.region) * float(per_user.sum()) / U


def total_power_cached(scenario: ClusteredScenario, clamp_hit: bool = True) -> float:
    """Infrastructure + fetch + transmit power of the cache-enabled network."""
    n = _active_sbs(scenario.total_density, scenario.region)
    h = hit_probability(scenario)
    hit = h.clamped if clamp_hit else h.raw
    return n * scenario.power.rho_fix + fetch_power(hit, n, scenario.power) + transmit_power_total(scenario)


def total_power_uncached(lambda_s: float, region: RegionSpec, channel: ChannelParams, power: PowerParams) -> float:
    """Power of the same network when every request goes over the backhaul."""
    if not lambda_s > 0:
        raise ParameterError("total density must be positive")
    n = _active_sbs(lambda_s, region)
    return n * power.rho_bh + power.rho_fix * n + n * mean_nearest_tx_power(lambda_s, channel, region.comm_radius_R)


def _gamma_product(alpha: float) -> float:
    # Gamma(1 + d) Gamma(1 - d) = pi d / sin(pi d) with d = 2 / alpha
    if not alpha > 2:
        raise ParameterError("coverage needs alpha > 2")
    d = 2.0 / alpha
    return math.pi * d / math.sin(math.pi * d)


def coverage_probability(densities, channel: ChannelParams, R: float) -> float:
    """P(SINR >= theta) for a typical user under per-cluster PPP interference."""
    a = channel.pathloss_exponent_alpha
    gp = _gamma_product(a)
    s = channel.sinr_threshold_theta / channel.target_rx_power_rho0
    log_p = -s * channel.noise_power_sigma2
    for lam in np.asarray(densities, dtype=float):
        if lam > 0:
            log_p -= math.pi * lam * gp * s ** (2.0 / a) * mean_nearest_power_moment(lam, channel, R)
    return math.exp(log_p)


def spectral_efficiency(densities, channel: ChannelParams, region: RegionSpec) -> float:
    """Active SBS count x ln(1 + theta) x coverage probability."""
    lam = float(np.sum(densities))
    return (
        _active_sbs(lam, region)
        * math.log1p(channel.sinr_threshold_theta)
        * coverage_probability(densities, channel, region.comm_radius_R)
    )


def energy_efficiency(scenario: ClusteredScenario, clamp_hit: bool = True) -> float:
    p = total_power_cached(scenario, clamp_hit)
    if not p > 0:
        raise ParameterError("total power must be positive")
    return spectral_efficiency(scenario.densities, scenario.channel, scenario.region) / p


def metrics(scenario: ClusteredScenario) -> dict:
    """Every closed-form metric for one scenario, keyed by CSV column name."""
    h = hit_probability(scenario)
    lam = scenario.total_density
    return {
        "lambda_s_per_km2": lam,
        "num_clusters": scenario.num_clusters,
        "hit_raw": h.raw,
        "hit_clamped": h.clamped,
        "coverage": coverage_probability(scenario.densities, scenario.channel, scenario.region.comm_radius_R),
        "se_nats": spectral_efficiency(scenario.densities, scenario.channel, scenario.region),
        "power_cached_w": total_power_cached(scenario),
        "power_uncached_w": total_power_uncached(lam, scenario.region, scenario.channel, scenario.power),
        "ee_nats_per_joule": energy_efficiency(scenario),
    }


def evaluate_grid(scenarios, path=None, extra=None):
    """Metric rows for a list of (label dict, scenario) pairs; optionally CSV."""
    rows = []
    for params, sc in scenarios:
        row = dict(params)
        row.update(metrics(sc))
        if extra:
            row.update(extra)
        rows.append(row)
    if path is not None and rows:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return rows


def unclustered_scenario(scenario: ClusteredScenario, cache: CacheSet) -> ClusteredScenario:
    """Single-cluster twin: every SBS caches ``cache`` and carries the full density."""
    return ClusteredScenario(
        scenario.profiles,
        np.zeros(len(scenario.profiles), dtype=int),
        [cache],
        scenario.region,
        scenario.channel,
        scenario.power,
        np.array([scenario.total_density]),
    )
