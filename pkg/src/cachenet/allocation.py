"""Assigning each SBS to one cluster's cache on a network snapshot.

The objective rewards, for every cluster k and user u, the user's interest
in k's cached files times the pathloss weight of the closest in-range SBS
serving k. It is monotone submodular in the set of (SBS, cluster) pairs, and
the feasible sets (one cluster per SBS, a quota per cluster) are handled by a
greedy on marginal gains.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import ChannelParams, NetworkSnapshot, ParameterError

UNASSIGNED = -1
BRUTE_FORCE_LIMIT = 10**7


@dataclass
class LinkWeights:
    omega: np.ndarray  # (U, N_s); zero for links at or beyond R
    orderings: list  # per user: in-range SBS indices by decreasing weight
    distances: np.ndarray

    @property
    def num_users(self) -> int:
        return self.omega.shape[0]

    @property
    def num_sbs(self) -> int:
        return self.omega.shape[1]


@dataclass(frozen=True)
class ClusterQuotas:
    n_prime: tuple

    @classmethod
    def from_densities(cls, densities, area: float, relax: float = 1.2) -> "ClusterQuotas":
        """Caps ceil(relax * lambda_k * area) on the SBS count of every cluster."""
        if relax < 1:
            raise ParameterError("quota relaxation must be at least 1")
        n = np.asarray(densities, dtype=float) * area
        return cls(tuple(int(math.ceil(relax * x - 1e-9)) for x in n))


def build_weights(snapshot: NetworkSnapshot | np.ndarray, channel: ChannelParams, R: float) -> LinkWeights:
    """Pathloss weights r^-alpha for links shorter than R, zero otherwise."""
    D = snapshot.distances() if isinstance(snapshot, NetworkSnapshot) else np.asarray(snapshot, dtype=float)
    alpha = channel.pathloss_exponent_alpha
    inside = D < R
    with np.errstate(divide="ignore"):
        omega = np.where(inside, D ** -alpha, 0.0)
    orderings = []
    for u in range(D.shape[0]):
        idx = np.flatnonzero(inside[u])
        # lexsort: primary key decreasing weight, ties by SBS index
        orderings.append(idx[np.lexsort((idx, -omega[u, idx]))])
    return LinkWeights(omega, orderings, D)


def to_matrix(assign, num_clusters: int) -> np.ndarray:
    assign = np.asarray(assign)
    y = np.zeros((len(assign), num_clusters), dtype=int)
    m = assign != UNASSIGNED
    y[np.flatnonzero(m), assign[m]] = 1
    return y


def to_assignment(y) -> np.ndarray:
    y = np.asarray(y)
    if np.any(y.sum(1) > 1):
        raise ParameterError("an SBS is allocated to more than one cluster")
    out = np.full(len(y), UNASSIGNED)
    s, k = np.nonzero(y)
    out[s] = k
    return out


def check_feasible(assign, quotas: ClusterQuotas) -> bool:
    assign = np.asarray(assign)
    counts = np.bincount(assign[assign != UNASSIGNED], minlength=len(quotas.n_prime))
    return bool(np.all(counts <= np.asarray(quotas.n_prime)))


def _best_weights(omega, assign, num_clusters):
    """(U, N_c) weight of the best SBS each cluster offers each user."""
    W = np.zeros((omega.shape[0], num_clusters))
    for k in range(num_clusters):
        cols = np.flatnonzero(assign == k)
        if len(cols):
            W[:, k] = omega[:, cols].max(1)
    return W


def objective(alloc, weights: LinkWeights, mass: np.ndarray) -> float:
    """Allocation utility; ``alloc`` is an assignment vector or an N_s x N_c 0/1 matrix.

    ``mass[u, k]`` is user u's request probability inside cluster k's cache.
    """
    alloc = np.asarray(alloc)
    assign = to_assignment(alloc) if alloc.ndim == 2 else alloc
    W = _best_weights(weights.omega, assign, mass.shape[1])
    return float((mass * W).sum())


def objective_product_form(y, weights: LinkWeights, mass: np.ndarray) -> float:
    """Term-by-term sum over clusters, users and each user's ranked SBS list.

    The indicator ``y[(s)_u, k] * prod_{i<s} (1 - y[(i)_u, k])`` picks the
    first SBS of cluster k in the user's ordering.
    """
    y = np.asarray(y)
    total = 0.0
    for k in range(y.shape[1]):
        for u, order in enumerate(weights.orderings):
            none_before = 1.0
            for s in order:
                total += mass[u, k] * weights.omega[u, s] * y[s, k] * none_before
                none_before *= 1 - y[s, k]
    return total


def greedy_allocate(weights: LinkWeights, mass: np.ndarray, quotas: ClusterQuotas) -> np.ndarray:
    """Lazy greedy over (SBS, cluster) pairs; returns an assignment vector.

    Stale upper bounds sit in a max-heap and are re-evaluated only when they
    reach the top; submodularity makes a refreshed top entry the true best.
    Ties go to the lower (SBS, cluster) pair.
    """
    omega = weights.omega
    U, Ns = omega.shape
    Nc = mass.shape[1]
    if len(quotas.n_prime) != Nc:
        raise ParameterError("one quota per cluster required")
    assign = np.full(Ns, UNASSIGNED)
    left = np.array(quotas.n_prime, dtype=int)
    W = np.zeros((U, Nc))

    def gain(s, k):
        return float(mass[:, k] @ np.maximum(omega[:, s] - W[:, k], 0.0))

    heap = [(-gain(s, k), s, k) for s in range(Ns) for k in range(Nc) if left[k] > 0]
    heapq.heapify(heap)
    while heap:
        neg, s, k = heapq.heappop(heap)
        if assign[s] != UNASSIGNED or left[k] <= 0:
            continue
        g = gain(s, k)
        if heap and g < -heap[0][0] - 1e-15 * max(1.0, g):
            heapq.heappush(heap, (-g, s, k))
            continue
        if g <= 0:
            break
        assign[s] = k
        left[k] -= 1
        W[:, k] = np.maximum(W[:, k], omega[:, s])
    return assign


def random_allocate(num_sbs: int, quotas: ClusterQuotas, rng) -> np.ndarray:
    """Every SBS, in random order, joins a uniformly chosen cluster with room left."""
    rng = np.random.default_rng(rng)
    left = np.array(quotas.n_prime, dtype=int)
    assign = np.full(num_sbs, UNASSIGNED)
    for s in rng.permutation(num_sbs):
        open_k = np.flatnonzero(left > 0)
        if len(open_k) == 0:
            break
        k = int(rng.choice(open_k))
        assign[s] = k
        left[k] -= 1
    return assign


def brute_force_allocate(weights: LinkWeights, mass: np.ndarray, quotas: ClusterQuotas, chunk: int = 1 << 15) -> np.ndarray:
    """Exhaustive search over every row assignment (cluster or none).

    Returns the maximizer that comes first in lexicographic order of the
    assignment vector with "unassigned" ordered first.
    """
    Ns = weights.num_sbs
    Nc = mass.shape[1]
    n_total = (Nc + 1) ** Ns
    if n_total > BRUTE_FORCE_LIMIT:
        raise ParameterError(f"{n_total} assignments exceed the brute-force limit")
    caps = np.asarray(quotas.n_prime)
    omega = weights.omega
    best_val, best = -np.inf, None
    radix = (Nc + 1) ** np.arange(Ns - 1, -1, -1)
    for start in range(0, n_total, chunk):
        codes = np.arange(start, min(start + chunk, n_total))
        digits = (codes[:, None] // radix[None, :]) % (Nc + 1) - 1  # (n, Ns), -1 means unassigned
        ok = np.ones(len(codes), dtype=bool)
        for k in range(Nc):
            ok &= (digits == k).sum(1) <= caps[k]
        digits = digits[ok]
        if len(digits) == 0:
            continue
        vals = np.zeros(len(digits))
        for k in range(Nc):
            sel = digits == k  # (n, Ns)
            # (n, U): best in-range weight among SBSs given to cluster k
            best_w = (sel[:, None, :] * omega[None, :, :]).max(2)
            vals += best_w @ mass[:, k]
        i = int(np.argmax(vals))  # first maximum keeps lexicographic order
        if best is None or vals[i] > best_val + 1e-12 * max(1.0, abs(best_val)):
            best_val, best = vals[i], digits[i].copy()
    return best


@dataclass
class SubmodularityReport:
    trials: int
    submodular_violations: int
    monotone_violations: int
    max_violation: float


def submodularity_check(weights: LinkWeights, mass: np.ndarray, trials: int, seed=None, tol: float = 1e-12) -> SubmodularityReport:
    """Sample nested allocations X within Y and a pair outside Y; test diminishing returns.

    Pairs are (SBS, cluster); only sets that keep one cluster per SBS are drawn.
    """
    rng = np.random.default_rng(seed)
    Ns, Nc = weights.num_sbs, mass.shape[1]
    sub = mono = 0
    worst = 0.0
    for _ in range(trials):
        y_assign = np.where(rng.random(Ns) < rng.random(), rng.integers(0, Nc, Ns), UNASSIGNED)
        free = np.flatnonzero(y_assign == UNASSIGNED)
        if len(free) == 0:
            y_assign[rng.integers(Ns)] = UNASSIGNED
            free = np.flatnonzero(y_assign == UNASSIGNED)
        x_assign = np.where(rng.random(Ns) < rng.random(), y_assign, UNASSIGNED)
        s = int(rng.choice(free))
        k = int(rng.integers(Nc))
        fx, fy = objective(x_assign, weights, mass), objective(y_assign, weights, mass)
        x2, y2 = x_assign.copy(), y_assign.copy()
        x2[s] = y2[s] = k
        fx2, fy2 = objective(x2, weights, mass), objective(y2, weights, mass)
        dx, dy = fx2 - fx, fy2 - fy
        # round-off in a difference scales with the larger operand
        scale = tol * max(1.0, abs(fx2), abs(fy2))
        if dy - dx > scale:
            sub += 1
            worst = max(worst, dy - dx)
        if dx < -scale or fy < fx - scale:
            mono += 1
    return SubmodularityReport(trials, sub, mono, worst)


def random_micro_instance(rng, max_sbs=8, max_clusters=3, max_users=20, R=1.0, alpha=2.5):
    """Small random instance: positions on a 2x2 km square, random masses and quotas."""
    rng = np.random.default_rng(rng)
    Ns = int(rng.integers(1, max_sbs + 1))
    Nc = int(rng.integers(1, max_clusters + 1))
    U = int(rng.integers(1, max_users + 1))
    users = rng.uniform(0, 2, (U, 2))
    sbs = rng.uniform(0, 2, (Ns, 2))
    snap = NetworkSnapshot(users, sbs)
    w = build_weights(snap, ChannelParams(pathloss_exponent_alpha=alpha), R)
    mass = rng.random((U, Nc))
    quotas = ClusterQuotas(tuple(int(q) for q in rng.integers(0, Ns + 1, Nc)))
    return w, mass, quotas


def write_layout(path, snapshot: NetworkSnapshot, assign) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sbs_index", "x_km", "y_km", "assigned_cluster"])
        for s, (x, y) in enumerate(snapshot.sbs_positions):
            w.writerow([s, repr(float(x)), repr(float(y)), int(assign[s])])


def enumerate_assignments(num_sbs: int, num_clusters: int):
    """All assignment vectors in lexicographic order (generator, for tiny cases)."""
    return (np.array(t) for t in itertools.product(range(UNASSIGNED, num_clusters), repeat=num_sbs))


@dataclass(frozen=True)
class SnapshotMetrics:
    hit: float
    transmit_power: float  # mean per request, watts
    active_sbs: int
    coverage: float
    ee: float


def snapshot_metrics(snapshot: NetworkSnapshot, scenario, assign) -> SnapshotMetrics:
    """Exact request-averaged hit rate, transmit power and EE on one layout.

    Users of ``snapshot`` are the scenario's users (same order). A request is
    a hit when some in-range SBS caches the file; it is then served by the
    closest such SBS, otherwise by the closest in-range SBS of the user's own
    cluster, or not at all. Unassigned SBSs are switched off. EE per active
    SBS is ln(1 + theta) * coverage / (fixed + fetch + transmit), with
    coverage from the closed form at the allocated per-cluster densities.
    """
    from .analytics import coverage_probability

    assign = np.asarray(assign)
    ch, pw, reg = scenario.channel, scenario.power, scenario.region
    R, a = reg.comm_radius_R, ch.pathloss_exponent_alpha
    Nc = scenario.num_clusters
    P = scenario.profiles
    F = P.shape[1]
    D = snapshot.distances()
    near = np.full((len(P), Nc), np.inf)
    for k in range(Nc):
        cols = np.flatnonzero(assign == k)
        if len(cols):
            near[:, k] = D[:, cols].min(1)
    near[near >= R] = np.inf
    masks = np.array([c.mask(F) for c in scenario.cache_sets])
    d_file = np.full(P.shape, np.inf)
    for k in range(Nc):
        if np.isfinite(near[:, k]).any():
            d_file[:, masks[k]] = np.minimum(d_file[:, masks[k]], near[:, k][:, None])
    hit_f = np.isfinite(d_file)
    d_own = near[np.arange(len(P)), scenario.assignment]
    serve = np.where(hit_f, d_file, d_own[:, None])
    tx = np.where(np.isfinite(serve), ch.target_rx_power_rho0 * np.where(np.isfinite(serve), serve, 0.0) ** a, 0.0)
    hit = float((P * hit_f).sum(1).mean())
    T = float((P * tx).sum(1).mean())
    n_active = int(np.count_nonzero(assign != UNASSIGNED))
    dens = np.bincount(assign[assign != UNASSIGNED], minlength=Nc) / reg.area
    cov = coverage_probability(dens, ch, R)
    unit = pw.rho_fix + pw.rho_hd * hit + pw.rho_bh * (1 - hit) + T
    ee = math.log1p(ch.sinr_threshold_theta) * cov / unit if n_active else 0.0
    return SnapshotMetrics(hit, T, n_active, cov, ee)


def allocation_ee_gain(snapshot: NetworkSnapshot, scenario, quotas: ClusterQuotas, seed=None):
    """(random allocation metrics, greedy allocation metrics) on one snapshot."""
    w = build_weights(snapshot, scenario.channel, scenario.region.comm_radius_R)
    greedy = greedy_allocate(w, scenario.mass, quotas)
    rand = random_allocate(snapshot.num_sbs, quotas, seed)
    return snapshot_metrics(snapshot, scenario, rand), snapshot_metrics(snapshot, scenario, greedy), rand, greedy
