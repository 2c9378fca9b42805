"""Per-cluster SBS density that maximizes energy efficiency.

Maximize EE(L) over density vectors L subject to
  budget:  P_cached(L) - P_uncached(sum L) <= 0
  cap:     sum L <= lambda_s_max
  floor:   L_k >= floor  (keeps every populated cluster switched on)
by projected gradient ascent. The cap and floor are linear and projected onto
exactly; the budget is nonlinear and enforced by backtracking.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from . import analytics as an
from .geometry import ParameterError

DENSITY_FLOOR = 1e-4
ARMIJO_C = 1e-4


@dataclass
class DensityProblem:
    scenario: an.ClusteredScenario  # densities are ignored
    lambda_s_max: float
    floor: float = DENSITY_FLOOR

    def __post_init__(self):
        if not self.lambda_s_max > 0:
            raise ParameterError("lambda_s_max must be positive")
        if self.floor * self.num_clusters >= self.lambda_s_max:
            raise ParameterError("density floor leaves no feasible region")

    @property
    def num_clusters(self) -> int:
        return self.scenario.num_clusters

    def at(self, densities) -> an.ClusteredScenario:
        return self.scenario.with_densities(densities)

    def budget(self, densities) -> float:
        """Cached minus uncached total power; feasible when <= 0."""
        d = np.asarray(densities, dtype=float)
        sc = self.at(d)
        return an.total_power_cached(sc) - an.total_power_uncached(d.sum(), sc.region, sc.channel, sc.power)

    def uncached_power(self, densities) -> float:
        sc = self.scenario
        return an.total_power_uncached(float(np.sum(densities)), sc.region, sc.channel, sc.power)

    def feasible(self, densities, tol: float = 1e-8) -> bool:
        d = np.asarray(densities, dtype=float)
        if np.any(d < self.floor - 1e-15) or d.sum() > self.lambda_s_max * (1 + 1e-12) + 1e-10:
            return False
        return self.budget(d) <= tol * self.uncached_power(d)


@dataclass
class OptResult:
    lambda_star: np.ndarray
    ee_value: float
    kkt_residual: float
    budget_multiplier: float
    cap_multiplier: float
    floor_multipliers: np.ndarray
    active_constraints: dict
    iterations: int
    converged: bool
    trace: list = field(default_factory=list, repr=False)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = len(self.lambda_star)
            w.writerow(["iter"] + [f"lambda_{k}_per_km2" for k in range(n)] + ["ee_nats_per_joule", "stationarity"])
            for it, lam, ee, res in self.trace:
                w.writerow([it] + [repr(float(x)) for x in lam] + [repr(float(ee)), repr(float(res))])


def _ee(problem: DensityProblem, d) -> float:
    return an.energy_efficiency(problem.at(d))


def ee_objective(densities, problem: DensityProblem) -> float:
    """Energy efficiency at ``densities``; raises outside the feasible set."""
    d = np.asarray(densities, dtype=float)
    if d.shape != (problem.num_clusters,):
        raise ParameterError("one density per cluster required")
    if not problem.feasible(d):
        raise ParameterError("densities violate the floor, cap or power budget")
    return _ee(problem, d)


def numeric_gradient(densities, problem: DensityProblem, h: float | None = None, fn=None) -> np.ndarray:
    """Central differences with per-component step ``h * max(1, |x_k|)``.

    The default ``h`` is the cube root of machine epsilon scaled to the
    density; it is shrunk where needed so that ``x_k - step`` stays positive.
    """
    fn = fn or (lambda x: _ee(problem, x))
    x = np.asarray(densities, dtype=float)
    base = np.finfo(float).eps ** (1 / 3) if h is None else h
    g = np.empty_like(x)
    for k in range(len(x)):
        step = min(base * max(1.0, abs(x[k])), 0.5 * x[k])
        if step <= 0:
            raise ParameterError("central difference needs positive densities")
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        g[k] = (fn(xp) - fn(xm)) / (2 * step)
    return g


def _dgamma_dlam(a: float, lam: float, R: float) -> float:
    # d/d lam of gamma(a, pi lam R^2)
    x = math.pi * lam * R * R
    return math.pi * R * R * x ** (a - 1) * math.exp(-x)


def directional_derivative(densities, direction, problem: DensityProblem) -> float:
    """d EE(L + t Z)/dt at t = 0 assembled as U'V + V'U in closed form.

    U is the spectral efficiency and V = 1 / P_cached. Every piece is
    differentiated by hand, so this is independent of ``numeric_gradient``.
    """
    L = np.asarray(densities, dtype=float)
    Z = np.asarray(direction, dtype=float)
    sc = problem.at(L)
    ch, reg, pw = sc.channel, sc.region, sc.power
    a, R = ch.pathloss_exponent_alpha, reg.comm_radius_R
    area = reg.area
    lam_tot, dlam_tot = L.sum(), Z.sum()

    # coverage: log P = -s sigma2 - sum_k gp s^(2/a) rho0^(2/a) gamma(2, x_k)
    s = ch.sinr_threshold_theta / ch.target_rx_power_rho0
    cst = an._gamma_product(a) * s ** (2 / a) * ch.target_rx_power_rho0 ** (2 / a)
    P = an.coverage_probability(L, ch, R)
    dlogP = -cst * sum(Z[k] * _dgamma_dlam(2.0, L[k], R) for k in range(len(L)))
    Uv = area * lam_tot * math.log1p(ch.sinr_threshold_theta) * P
    dU = area * math.log1p(ch.sinr_threshold_theta) * P * (dlam_tot + lam_tot * dlogP)

    # power pieces
    cover = 1 - np.exp(-L * math.pi * R * R)
    dcover = Z * math.pi * R * R * np.exp(-L * math.pi * R * R)
    mass = sc.mass
    Uusers = len(sc.profiles)
    hit_raw = float((mass * cover).sum() / Uusers)
    dhit_raw = float((mass * dcover).sum() / Uusers)
    if hit_raw > 1:
        hit, dhit = 1.0, 0.0
    else:
        hit, dhit = hit_raw, dhit_raw
    ag = a / 2 + 1
    E = np.empty(len(L))
    dE = np.empty(len(L))
    for k, lam in enumerate(L):
        g = an.lower_incomplete_gamma(ag, math.pi * lam * R * R)
        den = (lam * math.pi) ** (a / 2)
        E[k] = ch.target_rx_power_rho0 * g / den
        dg = _dgamma_dlam(ag, lam, R)
        dden = (a / 2) * math.pi * (lam * math.pi) ** (a / 2 - 1)
        dE[k] = ch.target_rx_power_rho0 * Z[k] * (dg * den - g * dden) / den**2
    own = sc.assignment
    per_user = E[own] + (mass * cover * (E[None, :] - E[own][:, None])).sum(1)
    dper_user = dE[own] + (
        mass * dcover * (E[None, :] - E[own][:, None]) + mass * cover * (dE[None, :] - dE[own][:, None])
    ).sum(1)
    T_mean, dT_mean = per_user.mean(), dper_user.mean()
    unit = pw.rho_hd * hit + pw.rho_bh * (1 - hit) + pw.rho_fix + T_mean
    dunit = (pw.rho_hd - pw.rho_bh) * dhit + dT_mean
    Ptot = area * lam_tot * unit
    dP = area * (dlam_tot * unit + lam_tot * dunit)
    V, dV = 1 / Ptot, -dP / Ptot**2
    return dU * V + dV * Uv


def bracket_coverage_slope(densities, direction, problem: DensityProblem) -> float:
    """dU/dt with the bracket factor ``1 - sum_k gp theta^(2/a) pi z_k R^2 e^{-x_k}``.

    Kept only to document that this bracket is not the derivative of U; see
    ``directional_derivative`` for the correct assembly.
    """
    L = np.asarray(densities, dtype=float)
    Z = np.asarray(direction, dtype=float)
    sc = problem.at(L)
    ch, reg = sc.channel, sc.region
    a, R = ch.pathloss_exponent_alpha, reg.comm_radius_R
    P = an.coverage_probability(L, ch, R)
    th = ch.sinr_threshold_theta
    bracket = 1 - sum(
        an._gamma_product(a) * th ** (2 / a) * math.pi * Z[k] * R * R * math.exp(-L[k] * math.pi * R * R) for k in range(len(L))
    )
    return Z.sum() * reg.area * math.log1p(th) * P * bracket


def project(x, floor: float, cap: float) -> np.ndarray:
    """Euclidean projection onto {x_k >= floor, sum x <= cap}."""
    x = np.asarray(x, dtype=float)
    y = np.maximum(x, floor)
    if y.sum() <= cap:
        return y
    # find tau with sum max(x - tau, floor) = cap; the top m entries stay free
    n = len(x)
    xs = np.sort(x)[::-1]
    csum = np.cumsum(xs)
    for m in range(1, n + 1):
        tau = (csum[m - 1] - (cap - (n - m) * floor)) / m
        if m == n or xs[m] - tau <= floor:
            return np.maximum(x - tau, floor)
    raise AssertionError("projection failed")  # unreachable for floor * n < cap


def default_init(problem: DensityProblem, fill: float = 0.9, shrink: float = 0.9, max_tries: int = 200) -> np.ndarray:
    """Equal split of ``fill * lambda_s_max``, scaled down until the budget holds."""
    n = problem.num_clusters
    x = np.full(n, fill * problem.lambda_s_max / n)
    for _ in range(max_tries):
        if x.min() < problem.floor:
            break
        if problem.feasible(x, tol=0.0):
            return x
        x = x * shrink
    raise ParameterError("no strictly feasible starting density found")


def _active(problem: DensityProblem, x, rel: float = 1e-7):
    cap_act = x.sum() >= problem.lambda_s_max * (1 - rel)
    bud_act = problem.budget(x) >= -rel * problem.uncached_power(x)
    floor_act = x <= problem.floor * (1 + rel)
    return bud_act, cap_act, floor_act


def kkt_residual(problem: DensityProblem, x, grad=None):
    """NNLS fit of grad EE = s grad C + k 1 - sum mu_j e_j over active constraints.

    Returns (residual, budget multiplier, cap multiplier, floor multipliers,
    active flags). The residual is the misfit norm scaled by
    lambda_s_max / EE, so it is dimensionless.
    """
    x = np.asarray(x, dtype=float)
    ee = _ee(problem, x)
    g = numeric_gradient(x, problem) if grad is None else grad
    bud_act, cap_act, floor_act = _active(problem, x)
    cols, names = [], []
    if bud_act:
        cols.append(numeric_gradient(x, problem, fn=problem.budget))
        names.append("budget")
    if cap_act:
        cols.append(np.ones_like(x))
        names.append("cap")
    for j in np.flatnonzero(floor_act):
        e = np.zeros_like(x)
        e[j] = -1.0
        cols.append(e)
        names.append(("floor", j))
    scale = problem.lambda_s_max / ee
    gs = g * scale
    if cols:
        A = np.column_stack(cols) * scale
        m, res = nnls(A, gs)
    else:
        m, res = np.zeros(0), float(np.linalg.norm(gs))
    mult = dict(zip([n if isinstance(n, str) else f"floor{n[1]}" for n in names], m))
    floor_mu = np.zeros_like(x)
    for n, v in zip(names, m):
        if not isinstance(n, str):
            floor_mu[n[1]] = v
    return float(res), mult.get("budget", 0.0), mult.get("cap", 0.0), floor_mu, {"budget": bool(bud_act), "cap": bool(cap_act)}


def _stationarity(problem, x, g, ee):
    # projected-gradient map at unit normalized step
    lm = problem.lambda_s_max
    y = project(x + lm * g * lm / ee, problem.floor, lm)
    return float(np.linalg.norm(y - x) / lm)


def solve_density(
    problem: DensityProblem,
    init=None,
    step_schedule=(1.0, 1.0),
    max_iters: int = 5000,
    tol: float = 1e-6,
    keep_trace: bool = True,
) -> OptResult:
    """Projected gradient ascent with Armijo backtracking.

    The gradient is rescaled by lambda_s_max / EE, so steps are in units of
    lambda_s_max. The trial step at iteration k is ``a / (b + k)``, or twice
    the last accepted step when that is larger (the diminishing schedule
    alone stalls on flat ridges). A trial point that violates the budget or
    fails the sufficient-increase test is halved. Returns the best iterate
    seen.
    """
    a, b = step_schedule
    if a <= 0 or b <= 0:
        raise ParameterError("step schedule needs a, b > 0")
    x = default_init(problem) if init is None else np.asarray(init, dtype=float)
    if not problem.feasible(x, tol=0.0):
        raise ParameterError("initial density is not strictly feasible")
    lm, floor = problem.lambda_s_max, problem.floor
    ee = _ee(problem, x)
    trace = []
    last = 0.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g = numeric_gradient(x, problem)
        gs = g * lm / ee
        stat = _stationarity(problem, x, g, ee)
        if keep_trace:
            trace.append((it - 1, x.copy(), ee, stat))
        if stat < tol:
            converged = True
            break
        t = max(a / (b + it), 2 * last)
        accepted = False
        while t * lm > 1e-15 * lm:
            y = project(x + t * lm * gs, floor, lm)
            step = y - x
            if np.linalg.norm(step) <= 1e-16 * lm:
                break
            ey = _ee(problem, y)
            if problem.budget(y) <= 0 and ey >= ee + ARMIJO_C * float(g @ step):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = stat < max(tol, 1e-4)
            break
        last = t
        x, ee = y, ey
    res, s_mu, k_mu, f_mu, act = kkt_residual(problem, x)
    if keep_trace:
        trace.append((it, x.copy(), ee, _stationarity(problem, x, numeric_gradient(x, problem), ee)))
    return OptResult(x, ee, res, s_mu, k_mu, f_mu, act, it, converged, trace)


@dataclass
class ProbeReport:
    num_lines: int
    violations: int
    sign_changes: list
    flat_lines: int


def _line_interval(problem, x0, z, t_hi=1e6):
    """Largest [lo, hi] around 0 keeping x0 + t z inside floor and cap."""
    lo, hi = -t_hi, t_hi
    for xk, zk in zip(x0, z):
        if zk > 0:
            lo = max(lo, (problem.floor - xk) / zk)
        elif zk < 0:
            hi = min(hi, (problem.floor - xk) / zk)
    zs = z.sum()
    if zs > 0:
        hi = min(hi, (problem.lambda_s_max - x0.sum()) / zs)
    elif zs < 0:
        lo = max(lo, (problem.lambda_s_max - x0.sum()) / zs)
    return lo, hi


def line_profile(problem, x0, z, num_points: int = 201):
    """EE along x0 + t z on the feasible segment containing t = 0."""
    lo, hi = _line_interval(problem, x0, z)
    if not np.any(z):
        lo, hi = 0.0, 0.0
    ts = np.linspace(lo, hi, num_points)
    pts = x0[None, :] + ts[:, None] * z[None, :]
    ok = np.array([problem.budget(p) <= 0 for p in pts])
    i0 = int(np.argmin(np.abs(ts)))
    # keep the contiguous budget-feasible run through t = 0
    l = i0
    while l > 0 and ok[l - 1]:
        l -= 1
    r = i0
    while r < len(ts) - 1 and ok[r + 1]:
        r += 1
    ts, pts = ts[l : r + 1], pts[l : r + 1]
    return ts, np.array([_ee(problem, p) for p in pts])


def count_sign_changes(values, rel_tol: float = 1e-10) -> tuple:
    """(number of slope sign changes, whether a descent is followed by an ascent)."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    noise = rel_tol * max(1.0, float(np.abs(v).max()) if len(v) else 1.0)
    sg = np.sign(np.where(np.abs(d) <= noise, 0.0, d))
    sg = sg[sg != 0]
    changes = int(np.count_nonzero(sg[1:] != sg[:-1]))
    valley = bool(np.any((sg[:-1] < 0) & (sg[1:] > 0)))
    return changes, valley


def unimodality_probe(problem: DensityProblem, num_lines: int, seed=None, num_points: int = 201) -> ProbeReport:
    """Sample random feasible lines and count those on which EE is not unimodal.

    A line is a violation when its finite-difference slope changes sign more
    than once, or goes from falling to rising (a valley), which a
    quasi-concave function cannot do.
    """
    rng = np.random.default_rng(seed)
    n = problem.num_clusters
    lm, floor = problem.lambda_s_max, problem.floor
    changes, viol, flat = [], 0, 0
    drawn = 0
    while drawn < num_lines:
        w = rng.dirichlet(np.ones(n))
        x0 = floor + w * (lm - n * floor) * rng.uniform(0.1, 1.0)
        if problem.budget(x0) > 0:
            continue
        z = rng.standard_normal(n)
        drawn += 1
        ts, vals = line_profile(problem, x0, z, num_points)
        c, valley = count_sign_changes(vals)
        changes.append(c)
        if c == 0 and len(vals) > 1 and np.ptp(vals) == 0:
            flat += 1
        if c > 1 or valley:
            viol += 1
    return ProbeReport(num_lines, viol, changes, flat)


def golden_section_max(fn, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500):
    """Maximizer of a unimodal function on [lo, hi]."""
    inv = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    x = (a + b) / 2
    return x, fn(x)
