import json
from dataclasses import replace
from fractions import Fraction as F

import numpy as np
import pytest

from shrinklab.cli import main
from shrinklab.lab import (
    ConfigError,
    ExperimentConfig,
    birkhoff_convergence_report,
    closure_comparison,
    cluster_limits,
    parse_config,
    pseudo_physical_fraction,
    run_experiment,
    unique_ergodicity_probe,
)
from shrinklab.maps import load_map
from shrinklab.measures import dirac

HALVING = "pl:0,1:0,1/2"

CONFIG = """
# small birkhoff run
experiment = birkhoff
map = tent
seed = 3
samples = 200
horizon = 64
depth = 12
eps_grid = 1/4, 1/8
"""


def small(experiment, map_name, **kw):
    base = dict(experiment=experiment, map=map_name, seed=5, samples=200, horizon=64, depth=12)
    base.update(kw)
    return ExperimentConfig(**base).validate()


def test_parse_config():
    cfg = parse_config(CONFIG)
    assert (cfg.experiment, cfg.map, cfg.seed, cfg.samples, cfg.horizon) == ("birkhoff", "tent", 3, 200, 64)
    assert cfg.eps_grid == (F(1, 4), F(1, 8))
    assert "workers" not in cfg.to_json()


@pytest.mark.parametrize("text", [
    CONFIG + "samples = 0\n",
    CONFIG + "colour = red\n",
    CONFIG + "horizon = 2\n",
    CONFIG + "eps_grid = 1/0\n",
    CONFIG + "perturb = other\n",
    "map = tent\nseed = 1\n",
    CONFIG + "no equals sign\n",
])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_birkhoff_fixed_points():
    cfg = small("birkhoff", "identity")
    rep = birkhoff_convergence_report(load_map("identity"), cfg)
    assert rep.aa_count == rep.samples == 200
    assert max(rep.dispersion) <= 2 ** -12 + 1e-12


def test_unique_ergodicity_probe(tent):
    rep = unique_ergodicity_probe(tent, small("unique-ergodicity", "tent"))
    assert rep.verdict == "not uniquely ergodic"
    assert rep.witnesses[0] == dirac((F(0),))
    assert rep.distance.lo > 3 * F(1, 2 ** 12)
    rep = unique_ergodicity_probe(load_map(HALVING), small("unique-ergodicity", HALVING))
    assert rep.verdict == "inconclusive"


def test_closure_on_contraction():
    g = load_map(HALVING)
    rep = closure_comparison(g, small("closure-compare", HALVING))
    assert len(rep.clusters) == 1 and len(rep.periodic) == 1
    assert rep.forward[1] < 1e-3 and rep.backward[1] < 1e-3


def test_cluster_limits_merges_near_duplicates():
    tail = np.array([[0.5, 0.25], [0.5, 0.25 + 1e-7], [0.1, 0.9], [0.5, 0.25]])
    clusters = cluster_limits(tail, 12)
    assert sorted(size for _, size in clusters) == [1, 3]
    # weighted l1 gap 0.2 + 0.1625: merged at radius 1/2, separate at radius 1/8
    assert len(cluster_limits(tail[[0, 2]], 2)) == 1
    assert len(cluster_limits(tail[[0, 2]], 4)) == 2


def test_pseudo_physical_counts():
    g = load_map(HALVING)
    cfg = small("pseudo-physical", HALVING)
    near = pseudo_physical_fraction(g, dirac((F(0),)), cfg)
    assert near.lower_counts == (200, 200, 200) and near.verdict == "positive-fraction evidence"
    far = pseudo_physical_fraction(g, dirac((F(1),)), cfg)
    assert far.upper_counts == (0, 0, 0) and far.verdict == "no evidence"


def test_run_experiment_bundle(tmp_path):
    cfg = parse_config(CONFIG)
    bundle = run_experiment(cfg, tmp_path / "a", CONFIG)
    names = {p.name for p in (tmp_path / "a").iterdir()}
    assert {"report.json", "manifest.json", "samples.csv"} <= names
    body = json.loads((tmp_path / "a" / "report.json").read_text())
    assert body["schema_version"] == 1 and body["experiment"] == "birkhoff"
    assert body["verified"] == bundle.verified
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 3 and set(manifest["outputs"]) == {"report.json", "samples.csv"}


def test_bundle_independent_of_workers(tmp_path):
    cfg = parse_config(CONFIG)
    a = run_experiment(cfg, tmp_path / "a", CONFIG)
    b = run_experiment(replace(cfg, workers=4), tmp_path / "b", CONFIG)
    assert a.files == b.files


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["birkhoff", "--map", "tent", "--seed", "1", "--samples", "50", "--horizon", "40",
                 "--out", out]) == 0
    assert main(["birkhoff", "--map", "tent", "--seed", "1", "--samples", "0"]) == 2
    assert main(["birkhoff", "--map", "no-such-map", "--seed", "1"]) == 2
    assert main(["certify", "--map", "tent", "--interval", "3/8,1/2", "--period", "1"]) == 3
    assert main(["certify", "--map", "pl:0,1:1/4,3/4", "--interval", "1/3,2/3", "--period", "1"]) == 0
    cfg = tmp_path / "c.cfg"
    cfg.write_text(CONFIG)
    assert main(["run", str(cfg), "--out", str(tmp_path / "r")]) == 0
    cfg.write_text(CONFIG + "depth = 0\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "r")]) == 2
