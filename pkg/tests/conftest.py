import math

import numpy as np
import pytest

from cachenet.analytics import ClusteredScenario, PowerParams
from cachenet.geometry import ChannelParams, RegionSpec, dbm_to_watts
from cachenet.popularity import cluster_mean_profile, generate_profiles, random_catalog, random_ground_truth, select_cache_set

RN_DEFAULT = math.sqrt(10 / math.pi)
RHO0 = dbm_to_watts(21)


def desk_scenario(num_clusters=3, seed=0, R=0.5, theta=10**-1.5, eta=0.3, lam_max=2.5, densities=None,
                  num_files=400, num_users=80, dispersion=1.0, sigma2=0.0):
    """Small scenario with ground-truth clusters as the clustering."""
    cat = random_catalog(num_files, eta, seed)
    gt = random_ground_truth(num_users, num_clusters, num_files, seed + 1)
    # make sure every cluster has at least one member
    labels = np.asarray(gt.per_user_cluster).copy()
    labels[:num_clusters] = np.arange(num_clusters)
    gt = type(gt)(num_clusters, labels, gt.orderings)
    P = generate_profiles(cat, gt, seed=seed + 2, rank_dispersion=dispersion)
    caches = [select_cache_set(cluster_mean_profile(P, np.flatnonzero(labels == k)), cat) for k in range(num_clusters)]
    if densities is None:
        densities = np.full(num_clusters, 1.0 / num_clusters)
    return ClusteredScenario(
        P,
        labels,
        caches,
        RegionSpec(RN_DEFAULT, 30.0, lam_max, R),
        ChannelParams(2.5, RHO0, sigma2, theta),
        PowerParams(),
        np.asarray(densities, dtype=float),
    )


@pytest.fixture
def make_desk():
    return desk_scenario


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
