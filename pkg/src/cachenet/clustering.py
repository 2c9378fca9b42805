"""K-means over popularity vectors with AIC-driven selection of the cluster count."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ParameterError

VARIANCE_FLOOR = 1e-12
KMEANS_TOL = 1e-9
KMEANS_MAX_ITERS = 300
AIC_PATIENCE = 2


@dataclass
class ClusterModel:
    num_clusters: int
    centroids: np.ndarray  # (K, F)
    assignment: np.ndarray  # (U,)
    member_counts: np.ndarray
    variances: np.ndarray
    log_likelihood: float = math.nan
    aic: float = math.nan
    num_params: int = 0
    iterations: int = 0
    floored: bool = False

    def members(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)


@dataclass(frozen=True)
class SearchRange:
    nc_min: int
    nc_max: int

    def validate(self, num_users: int) -> None:
        if not 1 <= self.nc_min <= self.nc_max:
            raise ParameterError(f"invalid search range [{self.nc_min}, {self.nc_max}]")
        if self.nc_min > num_users:
            raise ParameterError("nc_min exceeds the number of users")


@dataclass
class SearchTrace:
    """AIC evaluated at every cluster count the search visited."""

    ks: list = field(default_factory=list)
    log_likelihoods: list = field(default_factory=list)
    aics: list = field(default_factory=list)
    models: list = field(default_factory=list, repr=False)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["K", "log_likelihood", "aic"])
            for row in zip(self.ks, self.log_likelihoods, self.aics):
                w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def cluster_variance(profiles, members, centroid, floor: float = VARIANCE_FLOOR) -> float:
    """Mean squared Euclidean distance of the members to ``centroid``, floored."""
    members = np.asarray(members, dtype=int)
    if members.size == 0:
        raise ParameterError("cluster has no members")
    diff = np.asarray(profiles)[members] - np.asarray(centroid)
    return max(float((diff * diff).sum(1).mean()), floor)


def _finish(X, centroids, labels, iters) -> ClusterModel:
    K = len(centroids)
    counts = np.bincount(labels, minlength=K)
    var = np.zeros(K)
    floored = False
    for k in range(K):
        if counts[k]:
            v = cluster_variance(X, np.flatnonzero(labels == k), centroids[k], floor=0.0)
            floored |= v < VARIANCE_FLOOR
            var[k] = max(v, VARIANCE_FLOOR)
    return ClusterModel(K, centroids, labels, counts, var, iterations=iters, floored=floored)


def kmeans(profiles, initial_centroids, max_iters: int = KMEANS_MAX_ITERS, tol: float = KMEANS_TOL) -> ClusterModel:
    """Lloyd iterations from the given centroids.

    Distance ties go to the lower cluster index. A cluster that loses all
    its members is reseeded with the point farthest from its own centroid.
    Empty clusters can survive only when every point already sits on its
    centroid; they show up with a zero member count.
    """
    X = np.asarray(profiles, dtype=float)
    if X.size == 0:
        raise ParameterError("no profiles to cluster")
    C = np.array(initial_centroids, dtype=float, copy=True)
    if C.ndim != 2 or len(C) == 0:
        raise ParameterError("need at least one centroid")
    labels = np.full(len(X), -1)
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(X, C)
        new = d.argmin(1)
        counts = np.bincount(new, minlength=len(C))
        if np.any(counts == 0):
            # exact residuals; the expanded form leaves round-off on coincident points
            own = ((X - C[new]) ** 2).sum(1)
            for k in np.flatnonzero(counts == 0):
                far = int(own.argmax())
                if own[far] <= 0.0:
                    break
                new[far] = k
                own[far] = -1.0  # a point is reseeded at most once per sweep
        newC = C.copy()
        for k in range(len(C)):
            m = new == k
            if m.any():
                newC[k] = X[m].mean(0)
        shift = float(np.sqrt(((newC - C) ** 2).sum(1)).max())
        stable = np.array_equal(new, labels)
        C, labels = newC, new
        if stable or shift < tol:
            break
    return _finish(X, C, labels, it)


def log_likelihood(model: ClusterModel, num_users: int, catalog_F: int) -> float:
    """Gaussian-mixture log-likelihood in closed form, summed per cluster.

    Each cluster contributes
    ``-(U_k/2) * (log(2 pi) + 1 - 2 log(U_k/U) + F log(var_k))``, the exact
    aggregation of the per-user density terms over the cluster members.
    """
    counts = np.asarray(model.member_counts, dtype=float)
    if np.any(counts == 0):
        raise ParameterError("model has empty clusters")
    var = np.asarray(model.variances, dtype=float)
    if np.any(var <= 0):
        raise ParameterError("variances must be positive")
    terms = -(counts / 2.0) * (math.log(2 * math.pi) + 1.0 - 2.0 * np.log(counts / num_users) + catalog_F * np.log(var))
    return float(terms.sum())


def log_likelihood_signs_flipped(model: ClusterModel, num_users: int, catalog_F: int) -> float:
    """``-(U_k/2) * (log(2 pi) - 1 + 2 log(U_k/U) - F log(var_k))`` summed over clusters.

    This arrangement has the signs of the last three terms reversed relative
    to ``log_likelihood``. It does not equal the per-user sum and rewards
    larger variances, so it is kept only as a documented contrast.
    """
    counts = np.asarray(model.member_counts, dtype=float)
    var = np.asarray(model.variances, dtype=float)
    terms = -(counts / 2.0) * (math.log(2 * math.pi) - 1.0 + 2.0 * np.log(counts / num_users) - catalog_F * np.log(var))
    return float(terms.sum())


def per_user_log_likelihood(profiles, model: ClusterModel) -> float:
    """Sum over users of log N(P_u | centroid, var) plus the log mixture weight.

    Kept literal (one term per user) so it can cross-check ``log_likelihood``.
    """
    X = np.asarray(profiles, dtype=float)
    U, F = X.shape
    total = 0.0
    for u in range(U):
        k = model.assignment[u]
        v = model.variances[k]
        d2 = float(((X[u] - model.centroids[k]) ** 2).sum())
        # log(1 / (sqrt(2 pi) * sigma^F)) taken in log space; sigma^F underflows for large F
        total += -0.5 * math.log(2 * math.pi) - 0.5 * F * math.log(v) - d2 / (2.0 * v) + math.log(model.member_counts[k] / U)
    return total


def aic_score(model: ClusterModel, catalog_F: int) -> float:
    k = model.num_clusters * (catalog_F + 1)
    return 2.0 * k - 2.0 * model.log_likelihood


def score(model: ClusterModel, profiles) -> ClusterModel:
    """Drop empty clusters, then fill in likelihood, parameter count and AIC."""
    U, F = np.asarray(profiles).shape
    keep = np.flatnonzero(model.member_counts > 0)
    if len(keep) < model.num_clusters:
        remap = np.full(model.num_clusters, -1)
        remap[keep] = np.arange(len(keep))
        model = ClusterModel(
            len(keep),
            model.centroids[keep],
            remap[model.assignment],
            model.member_counts[keep],
            model.variances[keep],
            iterations=model.iterations,
            floored=model.floored,
        )
    model.num_params = model.num_clusters * (F + 1)
    model.log_likelihood = log_likelihood(model, U, F)
    model.aic = aic_score(model, F)
    assert abs(model.aic - 2 * model.num_params + 2 * model.log_likelihood) <= 1e-9 * max(1.0, abs(model.aic))
    return model


def cluster_users(profiles, search: SearchRange, seed=None, patience: int = AIC_PATIENCE, return_trace: bool = False):
    """Pick the cluster count by AIC, growing K one centroid at a time.

    Starts from ``nc_min`` distinct random users as centroids. After each
    K-means run the new centroid is the member farthest from its centroid in
    the highest-variance cluster. Stops once AIC has failed to improve on
    its running minimum ``patience`` times in a row, at ``nc_max``, or when
    no member sits away from its centroid. Returns the AIC-minimizing model
    (and the trace if requested).
    """
    X = np.asarray(profiles, dtype=float)
    U = len(X)
    search.validate(U)
    rng = np.random.default_rng(seed)
    centroids = X[rng.choice(U, size=search.nc_min, replace=False)]
    trace = SearchTrace()
    best = None
    worse = 0
    while True:
        K = len(centroids)
        model = score(kmeans(X, centroids), X)
        if model.num_clusters < K and trace.ks:
            break  # the new centroid captured nobody
        trace.ks.append(model.num_clusters)
        trace.log_likelihoods.append(model.log_likelihood)
        trace.aics.append(model.aic)
        trace.models.append(model)
        if best is None or model.aic < best.aic:
            best, worse = model, 0
        else:
            worse += 1
        if worse >= patience or K >= search.nc_max:
            break
        kstar = int(np.argmax(model.variances))
        if model.variances[kstar] <= VARIANCE_FLOOR:
            break  # every cluster is already a single point
        members = model.members(kstar)
        d = ((X[members] - model.centroids[kstar]) ** 2).sum(1)
        newc = X[members[int(d.argmax())]]
        centroids = np.vstack([model.centroids, newc])
    return (best, trace) if return_trace else best
