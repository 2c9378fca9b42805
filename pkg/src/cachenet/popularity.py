"""File catalog, synthetic per-user popularity profiles and cache selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import ParameterError

MEGABYTE_BITS = 8e6


@dataclass(frozen=True)
class Catalog:
    file_sizes_L: np.ndarray  # bits
    cache_capacity_M: float  # bits

    def __post_init__(self):
        sizes = np.asarray(self.file_sizes_L, dtype=float)
        object.__setattr__(self, "file_sizes_L", sizes)
        if sizes.ndim != 1 or len(sizes) == 0:
            raise ParameterError("catalog needs at least one file")
        if np.any(sizes <= 0):
            raise ParameterError("file sizes must be positive")
        if self.cache_capacity_M < sizes.min():
            raise ParameterError("cache cannot hold even the smallest file")

    @property
    def num_files(self) -> int:
        return len(self.file_sizes_L)

    @property
    def eta(self) -> float:
        """Normalized cache size M / sum(L)."""
        return min(self.cache_capacity_M / self.file_sizes_L.sum(), 1.0)

    @classmethod
    def from_eta(cls, sizes, eta: float) -> "Catalog":
        sizes = np.asarray(sizes, dtype=float)
        if not 0 < eta <= 1:
            raise ParameterError("eta must lie in (0, 1]")
        return cls(sizes, eta * sizes.sum())


@dataclass(frozen=True)
class GroundTruth:
    true_num_clusters: int
    per_user_cluster: np.ndarray
    orderings: np.ndarray  # (K, F); orderings[k][r] is the file holding rank r

    def __post_init__(self):
        if np.any(np.asarray(self.per_user_cluster) >= self.true_num_clusters):
            raise ParameterError("user cluster index out of range")


@dataclass(frozen=True)
class CacheSet:
    files: frozenset
    total_size: float

    def mask(self, num_files: int) -> np.ndarray:
        m = np.zeros(num_files, dtype=bool)
        m[list(self.files)] = True
        return m


def random_catalog(num_files: int, eta: float, seed, size_range_mb=(10.0, 100.0)) -> Catalog:
    """Catalog with sizes uniform on ``size_range_mb`` and cache M = eta * total."""
    rng = np.random.default_rng(seed)
    lo, hi = size_range_mb
    sizes = rng.uniform(lo, hi, num_files) * MEGABYTE_BITS
    return Catalog.from_eta(sizes, eta)


def random_ground_truth(num_users: int, num_clusters: int, num_files: int, seed) -> GroundTruth:
    """Uniform cluster labels and one independent random file ordering per cluster."""
    rng = np.random.default_rng(seed)
    orderings = np.array([rng.permutation(num_files) for _ in range(num_clusters)]).reshape(num_clusters, num_files)
    labels = rng.integers(0, num_clusters, num_users)
    return GroundTruth(num_clusters, labels, orderings)


def zipf_pmf(num_files: int, s: float) -> np.ndarray:
    ranks = np.arange(1, num_files + 1, dtype=float)
    w = ranks**-s
    return w / w.sum()


def generate_profiles(
    catalog: Catalog,
    truth: GroundTruth,
    zipf_s: float = 1.0,
    noise: float = 0.0,
    seed=None,
    rank_dispersion: float = 0.0,
) -> np.ndarray:
    """Per-user popularity vectors as a (U, F) array.

    Every user draws from the Zipf(``zipf_s``) pmf laid out along a file
    ranking. With ``rank_dispersion = 0`` that ranking is the cluster's own
    ordering. Otherwise the user re-sorts the cluster ranks ``r`` by the key
    ``r * exp(rank_dispersion * N(0, 1))``, so members agree on the head of
    the ranking only approximately while every row stays an exact Zipf pmf.
    With ``noise > 0`` each entry is then multiplied by
    ``exp(noise * N(0, 1))`` and the row is renormalized.
    """
    if zipf_s <= 0:
        raise ParameterError("zipf exponent must be positive")
    if noise < 0 or rank_dispersion < 0:
        raise ParameterError("noise and rank dispersion must be non-negative")
    F = catalog.num_files
    base = zipf_pmf(F, zipf_s)
    labels = np.asarray(truth.per_user_cluster)
    rng = np.random.default_rng(seed)
    if rank_dispersion > 0:
        ranks = np.arange(1, F + 1, dtype=float)
        profiles = np.empty((len(labels), F))
        for u, k in enumerate(labels):
            key = ranks * np.exp(rank_dispersion * rng.standard_normal(F))
            profiles[u, truth.orderings[k][np.argsort(key, kind="stable")]] = base
    else:
        per_cluster = np.empty((truth.true_num_clusters, F))
        for k, order in enumerate(truth.orderings):
            per_cluster[k, order] = base
        profiles = per_cluster[labels]
    if noise > 0:
        profiles = profiles * np.exp(noise * rng.standard_normal(profiles.shape))
    return profiles / profiles.sum(axis=1, keepdims=True)


def cluster_mean_profile(profiles: np.ndarray, members) -> np.ndarray:
    members = np.asarray(list(members) if isinstance(members, (set, frozenset)) else members, dtype=int)
    if members.size == 0:
        raise ParameterError("cluster has no members")
    return np.asarray(profiles)[members].mean(axis=0)


def select_cache_set(mean_profile, catalog: Catalog) -> CacheSet:
    """Fill the cache with the most popular files, skipping any that do not fit."""
    p = np.asarray(mean_profile, dtype=float)
    # stable sort on -p keeps lower indices first among ties
    order = np.argsort(-p, kind="stable")
    sizes = catalog.file_sizes_L
    residual = catalog.cache_capacity_M
    chosen = []
    for i in order:
        if sizes[i] <= residual:
            chosen.append(int(i))
            residual -= sizes[i]
    return CacheSet(frozenset(chosen), float(sizes[chosen].sum()))


def cached_mass(profiles: np.ndarray, cache_sets) -> np.ndarray:
    """(U, K) matrix of each user's request mass inside each cluster's cache."""
    F = np.asarray(profiles).shape[1]
    masks = np.array([c.mask(F) for c in cache_sets], dtype=float)
    return np.asarray(profiles) @ masks.T


def save_catalog(path, catalog: Catalog) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["# cache_capacity_bits", repr(float(catalog.cache_capacity_M))])
        w.writerow(["index", "size_bits"])
        for i, s in enumerate(catalog.file_sizes_L):
            w.writerow([i, repr(float(s))])


def load_catalog(path) -> Catalog:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    capacity = float(rows[0][1])
    sizes = [float(r[1]) for r in rows[2:] if r]
    return Catalog(np.array(sizes), capacity)


def save_profiles(path, profiles: np.ndarray) -> None:
    profiles = np.asarray(profiles)
    header = ",".join(f"p{i}" for i in range(profiles.shape[1]))
    np.savetxt(Path(path), profiles, delimiter=",", header=header, comments="", fmt="%.17g")


def load_profiles(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
