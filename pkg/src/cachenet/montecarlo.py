"""Simulation estimates of hit probability, coverage and power.

Each estimator draws a typical user at the origin and builds the SBS fields
around it from scratch, so none of them reuses the closed forms they check.
Draws run in fixed-size batches, each with its own child seed, which keeps
results bit-for-bit reproducible for a given (config, seed).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .analytics import ClusteredScenario
from .geometry import ParameterError

BATCH = 20_000
DISC_MULTIPLIER = 5.0


@dataclass
class SimConfig:
    scenario: ClusteredScenario
    num_realizations: int
    seed: int = 0
    disc_multiplier: float = DISC_MULTIPLIER
    far_field: bool = True

    def __post_init__(self):
        if self.num_realizations < 1:
            raise ParameterError("need at least one realization")
        if self.disc_multiplier <= 0:
            raise ParameterError("disc multiplier must be positive")


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    stderr: float
    n: int

    def z_score(self, reference: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == reference else math.copysign(math.inf, self.mean - reference)
        return (self.mean - reference) / self.stderr


def _estimate(values: np.ndarray) -> SimEstimate:
    n = len(values)
    mean = math.fsum(values) / n
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return SimEstimate(mean, sd / math.sqrt(n), n)


def _batches(config: SimConfig):
    n = config.num_realizations
    sizes = [BATCH] * (n // BATCH) + ([n % BATCH] if n % BATCH else [])
    seqs = np.random.SeedSequence(config.seed).spawn(len(sizes))
    for size, ss in zip(sizes, seqs):
        yield size, np.random.default_rng(ss)


def nearest_in_disc(rng, density: float, radius: float, size: int):
    """Distance from the origin to the closest of Poisson(density pi r^2) uniform points in a disc.

    Returns (distance, present) with ``present`` false when the disc is empty.
    The minimum of n uniform disc radii is ``radius * sqrt(1 - V^(1/n))``.
    """
    counts = rng.poisson(density * math.pi * radius * radius, size)
    v = rng.random(size)
    present = counts > 0
    with np.errstate(divide="ignore"):
        u_min = 1.0 - v ** (1.0 / np.where(present, counts, 1))
    return radius * np.sqrt(u_min), present


def _file_patterns(scenario: ClusteredScenario):
    """Group files by which clusters cache them; return pattern matrix and per-user cdf."""
    F = scenario.profiles.shape[1]
    masks = np.array([c.mask(F) for c in scenario.cache_sets])  # (N_c, F)
    patterns, inverse = np.unique(masks.T, axis=0, return_inverse=True)
    onehot = np.zeros((F, len(patterns)))
    onehot[np.arange(F), inverse.ravel()] = 1.0
    mass = scenario.profiles @ onehot  # (U, n_patterns)
    cdf = np.cumsum(mass, axis=1)
    cdf /= cdf[:, -1:]
    return patterns, cdf


def _draw_requests(rng, cdf, size):
    U = len(cdf)
    users = rng.integers(0, U, size)
    r = rng.random(size)
    pat = (cdf[users] <= r[:, None]).sum(1)
    return users, np.minimum(pat, cdf.shape[1] - 1)


def _local_field(rng, scenario, size):
    R = scenario.region.comm_radius_R
    dist = np.empty((size, scenario.num_clusters))
    present = np.empty((size, scenario.num_clusters), dtype=bool)
    for k, lam in enumerate(scenario.densities):
        if lam > 0:
            dist[:, k], present[:, k] = nearest_in_disc(rng, lam, R, size)
        else:
            dist[:, k], present[:, k] = np.inf, False
    return dist, present


def _request_outcomes(rng, scenario: ClusteredScenario, patterns, cdf, size):
    """Hit flag and serving distance (nan when nobody serves) for ``size`` requests."""
    users, pat = _draw_requests(rng, cdf, size)
    dist, present = _local_field(rng, scenario, size)
    stored = patterns[pat] & present  # clusters in range that cache the file
    hit = stored.any(1)
    d_hit = np.where(stored, dist, np.inf).min(1)
    own = scenario.assignment[users]
    idx = np.arange(size)
    d_own = np.where(present[idx, own], dist[idx, own], np.nan)
    serve = np.where(hit, d_hit, d_own)
    return hit, serve


def simulate_hit(config: SimConfig) -> SimEstimate:
    """Fraction of (user, request) draws whose file sits at an SBS within R."""
    sc = config.scenario
    if len(sc.profiles) == 0:
        raise ParameterError("scenario has no users")
    patterns, cdf = _file_patterns(sc)
    out = []
    for size, rng in _batches(config):
        hit, _ = _request_outcomes(rng, sc, patterns, cdf, size)
        out.append(hit.astype(float))
    return _estimate(np.concatenate(out))


def simulate_total_power(config: SimConfig) -> SimEstimate:
    """Network power per realization: N_s times (fixed + fetch + transmit) of one request.

    N_s is a Poisson count of active SBSs on the region; the request outcome
    is drawn from a local field around the typical user that is independent
    of that count. Requests that nobody serves cost no transmit power.
    """
    sc = config.scenario
    pw, ch = sc.power, sc.channel
    mean_ns = sc.total_density * sc.region.area
    out = []
    if len(sc.profiles) == 0:
        for size, rng in _batches(config):
            out.append(rng.poisson(mean_ns, size) * pw.rho_fix)
        return _estimate(np.concatenate(out))
    patterns, cdf = _file_patterns(sc)
    for size, rng in _batches(config):
        ns = rng.poisson(mean_ns, size)
        hit, serve = _request_outcomes(rng, sc, patterns, cdf, size)
        fetch = np.where(hit, pw.rho_hd, pw.rho_bh)
        tx = np.where(np.isnan(serve), 0.0, ch.target_rx_power_rho0 * np.nan_to_num(serve) ** ch.pathloss_exponent_alpha)
        out.append(ns * (pw.rho_fix + fetch + tx))
    return _estimate(np.concatenate(out))


def simulate_nearest_power(density: float, channel, R: float, num_samples: int, seed=0) -> SimEstimate:
    """Mean rho0 r^alpha over draws, with r the nearest-point distance when it is below R, else 0."""
    rng = np.random.default_rng(seed)
    d, present = nearest_in_disc(rng, density, R, num_samples)
    p = np.where(present, channel.target_rx_power_rho0 * d**channel.pathloss_exponent_alpha, 0.0)
    return _estimate(p)


def simulate_coverage(config: SimConfig) -> SimEstimate:
    """Fraction of realizations with SINR >= theta at a typical user at the origin.

    Interferers of cluster k form a PPP of density lambda_k on a disc of
    radius ``disc_multiplier * R_n``. Each transmits at rho0 d^alpha with d
    the distance to its own nearest user, drawn from the nearest-point law at
    density lambda_k and switched off beyond R; fades are unit-mean
    exponential. With ``far_field`` the mean interference from outside the
    disc is added, computed from Campbell's theorem with the batch's sample
    mean power, because at alpha near 2 the neglected tail decays only as
    D^(2 - alpha).
    """
    sc = config.scenario
    ch = sc.channel
    a, rho0, theta = ch.pathloss_exponent_alpha, ch.target_rx_power_rho0, ch.sinr_threshold_theta
    R = sc.region.comm_radius_R
    D = config.disc_multiplier * sc.region.radius_Rn
    out = []
    for size, rng in _batches(config):
        interference = np.zeros(size)
        for lam in sc.densities:
            if lam <= 0:
                continue
            counts = rng.poisson(lam * math.pi * D * D, size)
            n = int(counts.sum())
            r = D * np.sqrt(rng.random(n))
            d_user = np.sqrt(rng.standard_exponential(n) / (math.pi * lam))
            power = np.where(d_user < R, rho0 * d_user**a, 0.0)
            fade = rng.standard_exponential(n)
            owner = np.repeat(np.arange(size), counts)
            with np.errstate(divide="ignore"):
                contrib = power * fade * r**-a
            interference += np.bincount(owner, weights=contrib, minlength=size)
            if config.far_field and n:
                interference += 2 * math.pi * lam * power.mean() * D ** (2 - a) / (a - 2)
        signal = rho0 * rng.standard_exponential(size)
        out.append((signal >= theta * (ch.noise_power_sigma2 + interference)).astype(float))
    return _estimate(np.concatenate(out))


def write_validation(rows, path) -> None:
    """Rows of dicts with quantity, config, estimate, stderr, analytic, z."""
    cols = ["quantity", "config", "estimate", "stderr", "analytic", "z_score", "abs_diff", "rel_diff"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in cols})


def validation_row(quantity: str, config_label: str, est: SimEstimate, analytic: float) -> dict:
    return {
        "quantity": quantity,
        "config": config_label,
        "estimate": repr(est.mean),
        "stderr": repr(est.stderr),
        "analytic": repr(float(analytic)),
        "z_score": repr(est.z_score(analytic)),
        "abs_diff": repr(est.mean - analytic),
        "rel_diff": repr((est.mean - analytic) / analytic if analytic else math.nan),
    }
