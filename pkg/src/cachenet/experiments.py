"""Named experiments: sweep one parameter over seeds and write CSV tables.

Every stochastic stage draws from ``SeedSequence([seed, stage])`` so a run
is fully determined by (config, seeds), and stages never share a stream.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analytics as an
from . import montecarlo as mc
from .allocation import ClusterQuotas, allocation_ee_gain, write_layout
from .clustering import SearchRange, cluster_users
from .config import EXPERIMENTS, ExperimentSpec, UnknownExperimentError, build_channel, build_power, build_region
from .density_opt import DensityProblem, solve_density
from .geometry import NetworkSnapshot, sample_hotspot_users, sample_ppp
from .popularity import (
    MEGABYTE_BITS,
    Catalog,
    cluster_mean_profile,
    generate_profiles,
    random_ground_truth,
    select_cache_set,
)

STAGE_CATALOG, STAGE_TRUTH, STAGE_PROFILES, STAGE_CLUSTER, STAGE_USERS, STAGE_SBS, STAGE_ALLOC, STAGE_SIM = range(8)


class OutputPathError(OSError):
    pass


def stage_rng(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stage]))


@dataclass
class Pipeline:
    """Everything derived from one (params, seed): users, clusters and caches."""

    catalog: Catalog
    truth: object
    profiles: np.ndarray
    model: object
    trace: object
    cache_sets: list
    global_cache: object
    params: dict
    seed: int

    def scenario(self, lam_s: float, params: dict | None = None) -> an.ClusteredScenario:
        """Clustered scenario with total density ``lam_s`` split by cluster size."""
        p = params or self.params
        share = self.model.member_counts / len(self.profiles)
        return an.ClusteredScenario(
            self.profiles,
            self.model.assignment,
            self.cache_sets,
            build_region(p),
            build_channel(p),
            build_power(p),
            lam_s * share,
        )

    def unclustered(self, lam_s: float, params: dict | None = None) -> an.ClusteredScenario:
        return an.unclustered_scenario(self.scenario(lam_s, params), self.global_cache)


def build_pipeline(params: dict, seed: int) -> Pipeline:
    """Generate catalog and profiles, cluster by AIC, select every cache."""
    F = params["catalog.num_files"]
    rng = stage_rng(seed, STAGE_CATALOG)
    sizes = rng.uniform(params["catalog.size_min_mb"], params["catalog.size_max_mb"], F) * MEGABYTE_BITS
    catalog = Catalog.from_eta(sizes, params["catalog.eta"])
    truth = random_ground_truth(params["population.num_users"], params["population.true_clusters"], F, stage_rng(seed, STAGE_TRUTH))
    profiles = generate_profiles(
        catalog,
        truth,
        zipf_s=params["catalog.zipf_s"],
        noise=params["population.noise"],
        seed=stage_rng(seed, STAGE_PROFILES),
        rank_dispersion=params["population.rank_dispersion"],
    )
    search = SearchRange(params["clustering.nc_min"], min(params["clustering.nc_max"], len(profiles)))
    model, trace = cluster_users(
        profiles, search, seed=stage_rng(seed, STAGE_CLUSTER), patience=params["clustering.patience"], return_trace=True
    )
    caches = [select_cache_set(cluster_mean_profile(profiles, model.members(k)), catalog) for k in range(model.num_clusters)]
    global_cache = select_cache_set(profiles.mean(0), catalog)
    return Pipeline(catalog, truth, profiles, model, trace, caches, global_cache, params, seed)


def _pipeline_key(params):
    return tuple(sorted((k, v) for k, v in params.items() if k.split(".")[0] in ("catalog", "population", "clustering")))


class _Cache:
    def __init__(self):
        self.store = {}

    def get(self, params, seed):
        key = (_pipeline_key(params), seed)
        if key not in self.store:
            self.store[key] = build_pipeline(params, seed)
        return self.store[key]


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return int(x)
    return x


def write_rows(path: Path, rows: list) -> None:
    if not rows:
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _num(r[c]) for c in cols})


def summarize(rows: list, group_cols: list, skip=("seed",)) -> list:
    """Mean and standard error of every numeric column within each group."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[c] for c in group_cols), []).append(r)
    out = []
    for key, rs in groups.items():
        row = dict(zip(group_cols, key))
        row["n_seeds"] = len(rs)
        for c in rs[0]:
            if c in group_cols or c in skip or not isinstance(rs[0][c], (int, float, np.integer, np.floating)):
                continue
            v = np.array([float(r[c]) for r in rs])
            row[f"{c}_mean"] = float(v.mean())
            row[f"{c}_stderr"] = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        out.append(row)
    return out


def _sweep_col(name: str) -> str:
    return name.replace(".", "_")


def _grid(spec: ExperimentSpec):
    for gi, value in enumerate(spec.sweep_values):
        yield gi, value, spec.with_value(spec.sweep_param, value)


def exp_hit_vs_radius(spec, cache, out_dir):
    rows = []
    col = _sweep_col(spec.sweep_param)
    for gi, value, p in _grid(spec):
        for seed in spec.seeds:
            pl = cache.get(p, seed)
            for lam in p["density.sbs_density_per_km2"]:
                hc = an.hit_probability(pl.scenario(lam, p))
                hu = an.hit_probability(pl.unclustered(lam, p))
                rows.append(
                    {
                        col: value,
                        "seed": seed,
                        "lambda_s_per_km2": lam,
                        "comm_radius_km": p["region.comm_radius_km"],
                        "num_clusters": pl.model.num_clusters,
                        "hit_clustered_raw": hc.raw,
                        "hit_clustered_clamped": hc.clamped,
                        "hit_unclustered": hu.raw,
                    }
                )
    return rows, [col, "lambda_s_per_km2"]


def exp_ee_vs_cache(spec, cache, out_dir):
    rows = []
    col = _sweep_col(spec.sweep_param)
    for gi, value, p in _grid(spec):
        for seed in spec.seeds:
            pl = cache.get(p, seed)
            for lam in p["density.sbs_density_per_km2"]:
                sc, uc = pl.scenario(lam, p), pl.unclustered(lam, p)
                ee_c, ee_u = an.energy_efficiency(sc), an.energy_efficiency(uc)
                rows.append(
                    {
                        col: value,
                        "seed": seed,
                        "lambda_s_per_km2": lam,
                        "num_clusters": pl.model.num_clusters,
                        "ee_clustered_nats_per_joule": ee_c,
                        "ee_unclustered_nats_per_joule": ee_u,
                        "ee_gain_ratio": ee_c / ee_u - 1.0,
                        "hit_clustered_raw": an.hit_probability(sc).raw,
                        "hit_unclustered": an.hit_probability(uc).raw,
                        "power_clustered_w": an.total_power_cached(sc),
                        "power_unclustered_w": an.total_power_cached(uc),
                    }
                )
    return rows, [col, "lambda_s_per_km2"]


def exp_aic_trace(spec, cache, out_dir):
    rows, trace_rows = [], []
    col = _sweep_col(spec.sweep_param)
    for gi, value, p in _grid(spec):
        for seed in spec.seeds:
            pl = cache.get(p, seed)
            truth = p["population.true_clusters"]
            rows.append(
                {
                    col: value,
                    "seed": seed,
                    "true_clusters": truth,
                    "found_clusters": pl.model.num_clusters,
                    "correct": int(pl.model.num_clusters == truth),
                    "aic": pl.model.aic,
                }
            )
            for k, ll, aic in zip(pl.trace.ks, pl.trace.log_likelihoods, pl.trace.aics):
                trace_rows.append({col: value, "seed": seed, "K": k, "log_likelihood": ll, "aic": aic})
    write_rows(out_dir / "aic_trace_curves.csv", trace_rows)
    return rows, [col]


def exp_allocation_gain(spec, cache, out_dir):
    rows = []
    col = _sweep_col(spec.sweep_param)
    for gi, value, p in _grid(spec):
        region = build_region(p)
        for si, seed in enumerate(spec.seeds):
            pl = cache.get(p, seed)
            users = sample_hotspot_users(
                region,
                pl.truth.per_user_cluster,
                pl.truth.true_num_clusters,
                p["population.hotspot_spread_km"],
                stage_rng(seed, STAGE_USERS),
            )
            for lam in p["density.sbs_density_per_km2"]:
                sbs = sample_ppp(lam, region, stage_rng(seed, STAGE_SBS))
                snap = NetworkSnapshot(users, sbs, seed)
                sc = pl.scenario(lam, p)
                quotas = ClusterQuotas.from_densities(sc.densities, region.area, p["allocation.quota_relax"])
                rnd, opt, a_r, a_g = allocation_ee_gain(snap, sc, quotas, stage_rng(seed, STAGE_ALLOC))
                if si == 0:
                    write_layout(out_dir / f"layout_{gi}_{lam:g}.csv", snap, a_g)
                rows.append(
                    {
                        col: value,
                        "seed": seed,
                        "lambda_s_per_km2": lam,
                        "num_sbs": snap.num_sbs,
                        "ee_random": rnd.ee,
                        "ee_greedy": opt.ee,
                        "ee_gain_ratio": opt.ee / rnd.ee - 1.0 if rnd.ee > 0 else math.nan,
                        "hit_random": rnd.hit,
                        "hit_greedy": opt.hit,
                        "tx_power_random_w": rnd.transmit_power,
                        "tx_power_greedy_w": opt.transmit_power,
                        "active_sbs_random": rnd.active_sbs,
                        "active_sbs_greedy": opt.active_sbs,
                    }
                )
    return rows, [col, "lambda_s_per_km2"]


def exp_validate_analytics(spec, cache, out_dir):
    rows = []
    col = _sweep_col(spec.sweep_param)
    for gi, value, p in _grid(spec):
        for seed in spec.seeds:
            pl = cache.get(p, seed)
            for lam in p["density.sbs_density_per_km2"]:
                sc = pl.scenario(lam, p)
                cfg = dict(num_realizations=p["sim.num_realizations"], disc_multiplier=p["sim.disc_multiplier"])
                base = int(np.random.SeedSequence([seed, STAGE_SIM]).generate_state(1)[0])
                checks = [
                    ("coverage", mc.simulate_coverage(mc.SimConfig(sc, seed=base, far_field=p["sim.far_field"], **cfg)),
                     an.coverage_probability(sc.densities, sc.channel, sc.region.comm_radius_R)),
                    ("hit_union_vs_raw", mc.simulate_hit(mc.SimConfig(sc, seed=base + 1, **cfg)), an.hit_probability(sc).raw),
                    ("total_power_w", mc.simulate_total_power(mc.SimConfig(sc, seed=base + 2, **cfg)), an.total_power_cached(sc)),
                ]
                for name, est, ref in checks:
                    rows.append(
                        {
                            col: value,
                            "seed": seed,
                            "lambda_s_per_km2": lam,
                            "quantity": name,
                            "estimate": est.mean,
                            "stderr": est.stderr,
                            "analytic": ref,
                            "z_score": est.z_score(ref),
                            "rel_diff": (est.mean - ref) / ref,
                        }
                    )
    return rows, [col, "lambda_s_per_km2", "quantity"]


def exp_optimize_density(spec, cache, out_dir):
    rows = []
    col = _sweep_col(spec.sweep_param)
    for gi, value, p in _grid(spec):
        for si, seed in enumerate(spec.seeds):
            pl = cache.get(p, seed)
            lmax = p["region.sbs_density_max_per_km2"]
            problem = DensityProblem(pl.scenario(lmax, p), lmax)
            res = solve_density(
                problem,
                step_schedule=(p["density.step_a"], p["density.step_b"]),
                max_iters=p["density.max_iters"],
                tol=p["density.tol"],
            )
            if si == 0:
                res.write_trace(out_dir / f"density_trace_{gi}.csv")
            rows.append(
                {
                    col: value,
                    "seed": seed,
                    "num_clusters": problem.num_clusters,
                    "lambda_total_per_km2": float(res.lambda_star.sum()),
                    "ee_opt_nats_per_joule": res.ee_value,
                    "kkt_residual": res.kkt_residual,
                    "budget_active": int(res.active_constraints["budget"]),
                    "cap_active": int(res.active_constraints["cap"]),
                    "iterations": res.iterations,
                    "converged": int(res.converged),
                }
            )
    return rows, [col]


RUNNERS = {
    "hit_vs_radius": exp_hit_vs_radius,
    "ee_vs_cache": exp_ee_vs_cache,
    "aic_trace": exp_aic_trace,
    "allocation_gain": exp_allocation_gain,
    "validate_analytics": exp_validate_analytics,
    "optimize_density": exp_optimize_density,
}
assert set(RUNNERS) == set(EXPERIMENTS)


def prepare_output(out_dir) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputPathError(f"cannot create output directory {out}: {e.strerror}") from None
    if not os.access(out, os.W_OK):
        raise OutputPathError(f"output directory {out} is not writable")
    return out


def run_experiment(spec: ExperimentSpec, out_dir, plots: bool = True) -> dict:
    """Run the named experiment; returns {"rows": path, "summary": path, ...}."""
    if spec.experiment_name not in RUNNERS:
        raise UnknownExperimentError(f"unknown experiment '{spec.experiment_name}'")
    if not spec.seeds:
        raise ValueError("seed list is empty")
    out = prepare_output(out_dir)
    rows, group = RUNNERS[spec.experiment_name](spec, _Cache(), out)
    name = spec.experiment_name
    files = {"rows": out / f"{name}.csv", "summary": out / f"{name}_summary.csv"}
    write_rows(files["rows"], rows)
    summary = summarize(rows, group)
    write_rows(files["summary"], summary)
    if plots:
        from .plotting import plot_experiment

        files["figure"] = plot_experiment(name, rows, summary, _sweep_col(spec.sweep_param), out)
    return files
