import csv

import numpy as np
import pytest

from cachenet import cli
from cachenet.config import parse_config
from cachenet.experiments import build_pipeline, run_experiment, stage_rng, summarize

from test_config_cli import tiny

CASES = {
    "hit_vs_radius": ("region.comm_radius_km", "0.3, 0.9"),
    "ee_vs_cache": ("catalog.eta", "0.2, 0.4"),
    "aic_trace": ("population.true_clusters", "3, 5"),
    "allocation_gain": ("allocation.quota_relax", "1.2"),
    "validate_analytics": ("region.comm_radius_km", "0.5"),
    "optimize_density": ("channel.theta_db", "-15, 0"),
}


def _read(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("name", sorted(CASES))
def test_experiment_outputs(tmp_path, name):
    sweep, values = CASES[name]
    spec = parse_config(tiny(name, sweep, values))
    files = run_experiment(spec, tmp_path, plots=True)
    rows = _read(files["rows"])
    summary = _read(files["summary"])
    n_grid = len(spec.sweep_values)
    assert {r[sweep.replace(".", "_")] for r in rows} == {repr(float(v)) for v in spec.sweep_values}
    assert len(rows) % (n_grid * len(spec.seeds)) == 0
    assert all(int(s["n_seeds"]) == len(spec.seeds) for s in summary)
    assert files["figure"].stat().st_size > 0


def test_stage_streams_are_independent_and_stable():
    a = stage_rng(3, 1).random(4)
    assert np.array_equal(a, stage_rng(3, 1).random(4))
    assert not np.array_equal(a, stage_rng(3, 2).random(4))


def test_pipeline_caches_cover_every_cluster():
    spec = parse_config(tiny())
    pl = build_pipeline(spec.params, 0)
    assert len(pl.cache_sets) == pl.model.num_clusters
    sc = pl.scenario(1.6)
    assert sc.total_density == pytest.approx(1.6)
    assert pl.unclustered(1.6).num_clusters == 1


def test_summarize_mean_and_stderr():
    rows = [{"g": 1, "seed": s, "x": float(s)} for s in range(4)]
    out = summarize(rows, ["g"])
    assert out[0]["x_mean"] == 1.5
    assert out[0]["x_stderr"] == pytest.approx(np.std([0, 1, 2, 3], ddof=1) / 2)
    assert "seed_mean" not in out[0]


def test_cli_run_writes_figure(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(tiny("hit_vs_radius", "region.comm_radius_km", "0.5"))
    assert cli.main(["run", str(cfg), "-o", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "hit_vs_radius.png").exists()
    assert "figure:" in capsys.readouterr().out
