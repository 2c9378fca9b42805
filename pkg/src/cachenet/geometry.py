"""Poisson point process layouts on a disc and channel-inversion link power."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Raised when a model parameter is outside its valid domain."""


@dataclass(frozen=True)
class RegionSpec:
    """Disc-shaped deployment region and the node densities living on it.

    Lengths are in km, densities in points per km^2.
    """

    radius_Rn: float
    user_density_lambda: float
    sbs_density_lambda_s_max: float
    comm_radius_R: float

    def __post_init__(self):
        if self.radius_Rn <= 0 or self.comm_radius_R <= 0:
            raise ParameterError("radii must be positive")
        if self.comm_radius_R > self.radius_Rn:
            raise ParameterError("communication radius exceeds the region radius")
        if not self.user_density_lambda > self.sbs_density_lambda_s_max > 0:
            raise ParameterError("need user density > max SBS density > 0")

    @property
    def area(self) -> float:
        return math.pi * self.radius_Rn**2

    @property
    def mean_users(self) -> float:
        return self.user_density_lambda * self.area


@dataclass(frozen=True)
class ChannelParams:
    """Pathloss, channel inversion target and SINR threshold.

    ``target_rx_power_rho0`` and ``noise_power_sigma2`` are in watts.
    """

    pathloss_exponent_alpha: float = 2.5
    target_rx_power_rho0: float = 0.12589254117941673
    noise_power_sigma2: float = 0.0
    sinr_threshold_theta: float = 1.0

    def __post_init__(self):
        if not self.pathloss_exponent_alpha > 2:
            raise ParameterError("pathloss exponent must exceed 2")
        if self.target_rx_power_rho0 <= 0:
            raise ParameterError("rho0 must be positive")
        if self.noise_power_sigma2 < 0:
            raise ParameterError("noise power must be non-negative")
        if self.sinr_threshold_theta <= 0:
            raise ParameterError("SINR threshold must be positive")


@dataclass
class NetworkSnapshot:
    """One joint realization of the user and SBS processes (positions in km)."""

    user_positions: np.ndarray
    sbs_positions: np.ndarray
    rng_seed: int | None = None
    user_labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_users(self) -> int:
        return len(self.user_positions)

    @property
    def num_sbs(self) -> int:
        return len(self.sbs_positions)

    def distances(self) -> np.ndarray:
        """U x N_s matrix of user-to-SBS distances."""
        return pairwise_distances(self.user_positions, self.sbs_positions)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def uniform_disc(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    # sqrt(u) radial law gives exact area-uniform placement
    r = radius * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    return np.column_stack((r * np.cos(phi), r * np.sin(phi)))


def sample_ppp(density: float, region: RegionSpec | float, seed=None) -> np.ndarray:
    """Homogeneous PPP of the given density on the disc of ``region``.

    ``region`` may be a RegionSpec or a bare disc radius in km. ``seed`` is
    anything accepted by ``numpy.random.default_rng`` (including a Generator).
    Returns an (n, 2) array.
    """
    if not density > 0:
        raise ParameterError(f"density must be positive, got {density}")
    radius = region.radius_Rn if isinstance(region, RegionSpec) else float(region)
    rng = np.random.default_rng(seed)
    n = rng.poisson(density * math.pi * radius**2)
    return uniform_disc(n, radius, rng)


def sample_snapshot(region: RegionSpec, seed: int, sbs_density: float | None = None) -> NetworkSnapshot:
    """Independent user and SBS PPPs on the region, reproducible from ``seed``."""
    user_ss, sbs_ss = np.random.SeedSequence(seed).spawn(2)
    lam_s = region.sbs_density_lambda_s_max if sbs_density is None else sbs_density
    return NetworkSnapshot(
        user_positions=sample_ppp(region.user_density_lambda, region, np.random.default_rng(user_ss)),
        sbs_positions=sample_ppp(lam_s, region, np.random.default_rng(sbs_ss)),
        rng_seed=seed,
    )


def sample_hotspot_users(
    region: RegionSpec,
    labels: np.ndarray,
    num_clusters: int,
    spread: float,
    seed,
) -> np.ndarray:
    """Place users around one hotspot per popularity cluster.

    Each cluster gets a hotspot drawn uniformly on the disc; members are
    scattered around it with an isotropic Gaussian of std ``spread`` km and
    folded back inside the disc by radial reflection.
    """
    rng = np.random.default_rng(seed)
    centres = uniform_disc(num_clusters, region.radius_Rn, rng)
    pts = centres[labels] + rng.normal(0.0, spread, size=(len(labels), 2))
    r = np.hypot(pts[:, 0], pts[:, 1])
    outside = r > region.radius_Rn
    if outside.any():
        # reflect across the boundary; clip handles points more than a diameter away
        new_r = np.clip(2 * region.radius_Rn - r[outside], 0.0, region.radius_Rn)
        pts[outside] *= (new_r / r[outside])[:, None]
    return pts


def pairwise_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    diff = a[:, None, :] - b[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def transmit_power(distance, params: ChannelParams):
    """Channel-inversion transmit power rho0 * d^alpha (watts)."""
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ParameterError("distance must be non-negative")
    out = params.target_rx_power_rho0 * d**params.pathloss_exponent_alpha
    return float(out) if out.ndim == 0 else out


def nearest_sbs(user, sbs_subset, max_radius: float):
    """Closest SBS to ``user`` within ``max_radius``, as ``(index, distance)``.

    Returns None when every SBS is farther than ``max_radius``. Ties resolve
    to the lowest index.
    """
    sbs = np.asarray(sbs_subset, dtype=float).reshape(-1, 2)
    if len(sbs) == 0:
        return None
    d = np.hypot(sbs[:, 0] - user[0], sbs[:, 1] - user[1])
    idx = int(np.argmin(d))  # argmin returns the first minimum
    if d[idx] > max_radius:
        return None
    return idx, float(d[idx])


def nearest_distance_cdf(r, density: float):
    """CDF of the distance from a point to the nearest point of a PPP."""
    r = np.asarray(r, dtype=float)
    return 1.0 - np.exp(-density * math.pi * r**2)


def nearest_distance_pdf(r, density: float):
    r = np.asarray(r, dtype=float)
    return 2.0 * math.pi * density * r * np.exp(-density * math.pi * r**2)


def sample_nearest_distance(density: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from the nearest-neighbour distance law."""
    return np.sqrt(rng.standard_exponential(size) / (math.pi * density))
