import csv
import io
import json

import numpy as np
import pytest

from lmdp_psi.cli import main
from lmdp_psi.env import ModelClass, random_instance, sample_episode
from lmdp_psi.errors import ConfigError
from lmdp_psi.harness import (ExperimentConfig, fit_scaling_exponent, fixture_metadata, load_fixture,
                              load_fixture_class, make_hard_fixture, make_mixed_class, make_tiny_mdp,
                              regret_slope, rerun_manifest, run_preset)
from lmdp_psi.planning import plan_blind_optimal, plan_informed_optimal
from lmdp_psi.policies import InformedPolicy, StochasticPolicy, UniformPolicy
from lmdp_psi.serialization import (instance_from_dict, instance_to_dict, load_model_class, policy_from_json,
                                    policy_to_json, save_model_class, trajectories_from_csv,
                                    trajectories_to_csv)


def test_fit_recovers_known_exponents():
    Ks = [2000, 5000, 10000, 20000, 50000]
    assert fit_scaling_exponent([(k, 3 * k ** (2 / 3)) for k in Ks]).slope == pytest.approx(2 / 3, abs=1e-9)
    fit = fit_scaling_exponent({k: [np.sqrt(k) * f for f in (0.9, 1.0, 1.1)] for k in Ks}, n_boot=200)
    assert fit.slope == pytest.approx(0.5, abs=1e-9) and fit.ci[0] <= 0.5 <= fit.ci[1]
    with pytest.raises(ConfigError):
        fit_scaling_exponent([(1, 1.0), (2, 2.0), (3, 3.0)])


def test_regret_slope_of_power_curves():
    k = np.arange(1, 2001)
    assert regret_slope(np.sqrt(k)) == pytest.approx(0.5, abs=1e-3)
    assert regret_slope(k.astype(float)) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("bad", [dict(preset="nope"), dict(seeds=[]), dict(seeds=[1, 1]), dict(delta=1.0),
                                 dict(c=2.0), dict(K=0), dict(preset="scaling", K_list=[10, 20])])
def test_config_errors_before_running(bad, tmp_path):
    cfg = ExperimentConfig(**({"preset": "regret-blind", "out_dir": str(tmp_path / "x")} | bad))
    with pytest.raises(ConfigError):
        run_preset(cfg)
    assert not (tmp_path / "x").exists()


def test_config_dict_round_trip():
    cfg = ExperimentConfig("ete", K=10, seeds=[3, 4])
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"preset": "ete", "colour": 1})


def test_regret_preset_aggregate_and_rerun(tmp_path):
    cfg = ExperimentConfig("regret-blind", K=60, seeds=[0, 1, 2], out_dir=str(tmp_path / "a"))
    out = run_preset(cfg)
    man = json.loads((out / "manifest.json").read_text())
    assert set(man["files"]) == {"seed-0.csv", "seed-1.csv", "seed-2.csv", "aggregate.csv"}
    curves = []
    for s in (0, 1, 2):
        rows = list(csv.DictReader(io.StringIO((out / f"seed-{s}.csv").read_text())))
        curves.append([float(r["cum_regret"]) for r in rows])
    agg = list(csv.DictReader(io.StringIO((out / "aggregate.csv").read_text())))
    assert [float(r["median_cum_regret"]) for r in agg] == pytest.approx(np.median(curves, axis=0).tolist())
    again = rerun_manifest(out / "manifest.json", tmp_path / "b")
    for name in man["files"]:
        assert (again / name).read_bytes() == (out / name).read_bytes()
    assert (again / "manifest.json").read_text().replace(str(tmp_path / "b"), "") == \
        (out / "manifest.json").read_text().replace(str(tmp_path / "a"), "")


def test_gap_preset_on_hard_fixture(tmp_path):
    out = run_preset(ExperimentConfig("gap-demo", instance="hard-m8", model_class=None, out_dir=str(tmp_path)))
    res = json.loads((out / "manifest.json").read_text())["results"]
    assert res["gap"] > 0.1


def test_bundled_fixtures_match_their_generators():
    mc = make_mixed_class()
    assert instance_to_dict(load_fixture("mixed-m2")) == instance_to_dict(mc[mc.truth_index])
    assert instance_to_dict(load_fixture("tiny-mdp")) == instance_to_dict(make_tiny_mdp())
    loaded = load_fixture_class()
    assert loaded.truth_index == 3 and len(loaded) == 8
    theta, extra = make_hard_fixture()
    assert instance_to_dict(load_fixture("hard-m8")) == instance_to_dict(theta)
    meta = fixture_metadata("hard-m8")
    assert meta["certified"] and meta["alpha_eff"] >= 0.003 / (128 * np.sqrt(8))


def test_instance_and_class_round_trip(tmp_path, small_instance):
    back = instance_from_dict(json.loads(json.dumps(instance_to_dict(small_instance))))
    assert instance_to_dict(back) == instance_to_dict(small_instance)
    mc = ModelClass([small_instance, small_instance.replace(mixing=np.array([0.3, 0.7]))], truth_index=1)
    save_model_class(mc, tmp_path / "mc.json")
    back = load_model_class(tmp_path / "mc.json")
    assert back.truth_index == 1 and np.array_equal(back[1].mixing, [0.3, 0.7])
    bad = instance_to_dict(small_instance)
    bad["shapes"]["mixing"] = [3]
    with pytest.raises(ConfigError):
        instance_from_dict(bad)


def test_policy_json_round_trip_and_tamper(small_instance):
    blind, _ = plan_blind_optimal(small_instance)
    informed, _ = plan_informed_optimal(small_instance)
    stoch = StochasticPolicy({(0,): np.array([0.25, 0.75])}, 2)
    for pol in (blind, informed, stoch, UniformPolicy(2)):
        back = policy_from_json(policy_to_json(pol))
        assert back.content_hash() == pol.content_hash()
    assert isinstance(policy_from_json(policy_to_json(informed)), InformedPolicy)
    doc = json.loads(policy_to_json(blind))
    doc["hash"] = "0" * 16
    with pytest.raises(ConfigError):
        policy_from_json(json.dumps(doc))


def test_trajectory_csv_round_trip(small_instance):
    rng = np.random.default_rng(0)
    recs = [sample_episode(small_instance, UniformPolicy(2), rng) for _ in range(5)]
    back = trajectories_from_csv(trajectories_to_csv(recs))
    assert [(r.iota, r.m, r.states, r.actions, r.observations, r.rewards) for r in back] == \
        [(r.iota, r.m, r.states, r.actions, r.observations, tuple(map(float, r.rewards))) for r in recs]


def test_cli_success_paths(tmp_path, capsys):
    pol = tmp_path / "pol.json"
    assert main(["plan", "--instance", "mixed-m2", "--class", "informed", "--out", str(pol)]) == 0
    assert main(["simulate", "--policy", str(pol), "--episodes", "3", "--out", str(tmp_path / "t.csv")]) == 0
    assert len(trajectories_from_csv((tmp_path / "t.csv").read_text())) == 3
    assert main(["verify", "--instance", "mixed-m2", "--out", str(tmp_path / "v.csv")]) == 0
    assert main(["hardgen", "--alphabet", "4", "--emit", str(tmp_path / "h.json")]) == 0
    cert = json.loads((tmp_path / "h.cert.json").read_text())
    assert cert["certified"] and not cert["in_theorem_regime"]
    assert main(["omle", "--K", "20", "--seeds", "0", "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "seed-0.csv").exists()


def test_cli_error_codes(tmp_path):
    assert main(["omle", "--K", "5", "--delta", "2", "--out", str(tmp_path / "o")]) == 2
    assert main(["plan", "--instance", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "cfg.json"
    bad.write_text('{"preset": "ete", "K": 0}')
    assert main(["ete", "--config", str(bad)]) == 2
    assert main(["plan", "--instance", "hard-m8", "--budget", "10"]) == 3
    assert main(["verify-kl", "--alphabet", "2", "--eps-values", "0.02", "0.2",
                 "--out", str(tmp_path / "kl.csv")]) == 4
    assert main(["verify-kl", "--alphabet", "2", "--out", str(tmp_path / "kl2.csv")]) == 0
