"""INI scenario files: schema, parsing with line diagnostics, and model builders."""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .analytics import PowerParams
from .geometry import ChannelParams, ParameterError, RegionSpec, dbm_to_watts

EXPERIMENTS = ("hit_vs_radius", "ee_vs_cache", "aic_trace", "allocation_gain", "validate_analytics", "optimize_density")


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``line`` points into the file when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)
        self.line = line


class UnknownExperimentError(ConfigError):
    pass


def _float_list(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _seeds(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


# dotted key -> parser; defaults live in data/defaults.ini
SCHEMA = {
    "experiment.name": str,
    "experiment.sweep_param": str,
    "experiment.sweep_values": _float_list,
    "experiment.seeds": _seeds,
    "region.area_km2": float,
    "region.user_density_per_km2": float,
    "region.sbs_density_max_per_km2": float,
    "region.comm_radius_km": float,
    "channel.alpha": float,
    "channel.rho0_dbm": float,
    "channel.noise_w": float,
    "channel.theta_db": float,
    "power.rho_fix_w": float,
    "power.rho_bh_w": float,
    "power.rho_hd_w": float,
    "catalog.num_files": int,
    "catalog.size_min_mb": float,
    "catalog.size_max_mb": float,
    "catalog.eta": float,
    "catalog.zipf_s": float,
    "population.num_users": int,
    "population.true_clusters": int,
    "population.rank_dispersion": float,
    "population.noise": float,
    "population.hotspot_spread_km": float,
    "clustering.nc_min": int,
    "clustering.nc_max": int,
    "clustering.patience": int,
    "density.sbs_density_per_km2": _float_list,
    "density.step_a": float,
    "density.step_b": float,
    "density.max_iters": int,
    "density.tol": float,
    "allocation.quota_relax": float,
    "sim.num_realizations": int,
    "sim.disc_multiplier": float,
    "sim.far_field": _bool,
}

# keys a sweep may vary (scalar floats or ints)
SWEEPABLE = tuple(k for k, t in SCHEMA.items() if t in (float, int) and not k.startswith("experiment."))


def default_config_text() -> str:
    return resources.files("cachenet").joinpath("data/defaults.ini").read_text()


@dataclass
class ExperimentSpec:
    experiment_name: str
    sweep_param: str
    sweep_values: tuple
    seeds: tuple
    params: dict = field(default_factory=dict)
    source: str | None = None

    def with_value(self, key: str, value) -> dict:
        p = dict(self.params)
        p[key] = SCHEMA[key](value) if SCHEMA[key] is int else float(value)
        return p


def _line_of(lines, section, key):
    sec = None
    for i, raw in enumerate(lines, 1):
        s = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            continue
        if sec == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
            return i
    return None


def _parse(text: str, path=None) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if getattr(e, "errors", None) else None
        raise ConfigError(f"cannot parse line: {e.errors[0][1].strip() if e.errors else e}", path, lineno) from None
    except configparser.Error as e:
        raise ConfigError(str(e).splitlines()[0], path, getattr(e, "lineno", None)) from None
    lines = text.splitlines()
    out = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            dotted = f"{section}.{key}"
            line = _line_of(lines, section, key)
            if dotted not in SCHEMA:
                raise ConfigError(f"unknown key '{dotted}'", path, line)
            try:
                out[dotted] = SCHEMA[dotted](value)
            except ValueError as e:
                raise ConfigError(f"bad value for '{dotted}': {e}", path, line) from None
    return out


def _check(params: dict, path=None) -> None:
    """Domain checks that do not need a full model build."""

    def fail(key, msg):
        raise ConfigError(f"'{key}': {msg}", path, None)

    name = params["experiment.name"]
    if name not in EXPERIMENTS:
        raise UnknownExperimentError(f"unknown experiment '{name}' (choose from {', '.join(EXPERIMENTS)})", path)
    if not params["experiment.seeds"]:
        fail("experiment.seeds", "seed list is empty")
    if not params["experiment.sweep_values"]:
        fail("experiment.sweep_values", "sweep grid is empty")
    if params["experiment.sweep_param"] not in SWEEPABLE:
        fail("experiment.sweep_param", f"cannot sweep '{params['experiment.sweep_param']}'")
    if params["catalog.size_min_mb"] <= 0 or params["catalog.size_max_mb"] < params["catalog.size_min_mb"]:
        fail("catalog.size_min_mb", "need 0 < size_min_mb <= size_max_mb")
    if not params["density.sbs_density_per_km2"]:
        fail("density.sbs_density_per_km2", "no operating density given")
    if params["population.num_users"] < 1 or params["population.true_clusters"] < 1:
        fail("population.num_users", "need at least one user and one cluster")
    # building the model objects surfaces the remaining range checks
    for key in [params["experiment.sweep_param"]]:
        for v in params["experiment.sweep_values"]:
            trial = dict(params)
            trial[key] = SCHEMA[key](v) if SCHEMA[key] is int else float(v)
            try:
                build_region(trial)
                build_channel(trial)
                build_power(trial)
                if not 0 < trial["catalog.eta"] <= 1:
                    raise ParameterError("eta must lie in (0, 1]")
                for lam in trial["density.sbs_density_per_km2"]:
                    if not 0 < lam <= trial["region.sbs_density_max_per_km2"]:
                        raise ParameterError("operating density must lie in (0, sbs_density_max_per_km2]")
            except ParameterError as e:
                raise ConfigError(str(e), path) from None


def load_config(path) -> ExperimentSpec:
    """Read an INI file layered over the shipped defaults."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path) from None
    return parse_config(text, path)


def parse_config(text: str, path=None) -> ExperimentSpec:
    params = _parse(default_config_text(), "defaults.ini")
    params.update(_parse(text, path))
    _check(params, path)
    return ExperimentSpec(
        params["experiment.name"],
        params["experiment.sweep_param"],
        params["experiment.sweep_values"],
        params["experiment.seeds"],
        params,
        str(path) if path else None,
    )


def build_region(params: dict) -> RegionSpec:
    return RegionSpec(
        radius_Rn=math.sqrt(params["region.area_km2"] / math.pi),
        user_density_lambda=params["region.user_density_per_km2"],
        sbs_density_lambda_s_max=params["region.sbs_density_max_per_km2"],
        comm_radius_R=params["region.comm_radius_km"],
    )


def build_channel(params: dict) -> ChannelParams:
    return ChannelParams(
        pathloss_exponent_alpha=params["channel.alpha"],
        target_rx_power_rho0=dbm_to_watts(params["channel.rho0_dbm"]),
        noise_power_sigma2=params["channel.noise_w"],
        sinr_threshold_theta=10 ** (params["channel.theta_db"] / 10),
    )


def build_power(params: dict) -> PowerParams:
    return PowerParams(
        rho_fix=params["power.rho_fix_w"],
        rho_bh=params["power.rho_bh_w"],
        rho_hd=params["power.rho_hd_w"],
        rho0=dbm_to_watts(params["channel.rho0_dbm"]),
    )
