import json
import math
from dataclasses import fields

import numpy as np
import pytest

from pepperharvest.cli import main
from pepperharvest.color import GaussianColorModel
from pepperharvest.config import RunConfig, default_document, parse_override
from pepperharvest.errors import ConfigError
from pepperharvest.sim.harvest import HarvestParams
from pepperharvest.sim.scene import SceneSpec

SMALL = ["--set", "scene.row_length=1.0", "--set", "scene.pepper_count=1"]

# ---------------------------------------------------------------- config


def test_defaults_match_library_defaults():
    hp = RunConfig.load().harvest_params()
    ref = HarvestParams()
    for f in fields(HarvestParams):
        a, b = getattr(hp, f.name), getattr(ref, f.name)
        if isinstance(a, GaussianColorModel):
            a, b = (a.mu.tolist(), a.sigma.tolist()), (b.mu.tolist(), b.sigma.tolist())
        assert a == b, f.name
    spec = RunConfig.load().scene_spec(3)
    assert spec == SceneSpec(rng_seed=3)
    assert RunConfig.load().scene_spec(3, modified=True).leaf_occlusion_fraction == 0.0


def test_paper_profile():
    cfg = RunConfig.load(profile="paper_defaults")
    assert cfg.get("color.mu") == [180.0, 1.0, 0.39]
    assert cfg.get("color.sigma") == [255.0, 0.13, 0.017]
    assert cfg.get("grasp.weights") == [0.2, 0.5, 0.3]
    assert cfg.get("grasp.angle_threshold") == pytest.approx(math.pi / 4)
    assert cfg.get("grasp.patch_size") == 0.02
    assert (cfg.get("detect.cluster_min"), cfg.get("detect.cluster_max")) == (1000, 250000)
    assert (cfg.get("peduncle.cluster_min"), cfg.get("peduncle.cluster_max")) == (50, 250000)
    assert cfg.get("detect.downsample_radius") == 0.002
    assert cfg.get("peduncle.h_offset") == 0.05
    assert cfg.get("grasp.max_attempts") == 5
    with pytest.raises(ConfigError):
        RunConfig.load(profile="nope")


def test_every_parameter_table_key_in_profile():
    _, profiles = default_document()
    prof = profiles["paper_defaults"]
    keys = {f"{s}.{k}" for s, t in prof.items() for k in t}
    assert {"color.mu", "color.sigma", "grasp.weights", "grasp.angle_threshold", "grasp.patch_size",
            "detect.cluster_min", "peduncle.cluster_min", "detect.downsample_radius", "peduncle.h_offset",
            "grasp.max_attempts"} <= keys


@pytest.mark.parametrize(
    "text",
    [
        "[grasp]\nweights = [0.5, 0.5, 0.5]\n",
        "[grasp]\nweights = [0.2, 0.5]\n",
        "[grasp]\nbogus = 1\n",
        "[nosuch]\nx = 1\n",
        "[detect]\ncluster_min = 10.5\n",
        "[detect]\ncluster_min = 300000\n",
        "[detect]\ndownsample_radius = 0.0\n",
        "[scene]\nleaf_occlusion_fraction = 1.2\n",
        "[peduncle]\nscorer = \"magic\"\n",
        "[peduncle]\nscorer = \"patch\"\n",
        "[sim]\nscenarios = [\"other\"]\n",
        "[paper_defaults.grasp]\nbogus = 3\n",
        "not toml [",
    ],
)
def test_invalid_files_rejected(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_layering_flag_beats_file_beats_profile(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('profile = "paper_defaults"\n[grasp]\nmax_attempts = 3\npatch_size = 0.03\n')
    cfg = RunConfig.load(p)
    assert cfg.profile == "paper_defaults"
    assert cfg.get("grasp.max_attempts") == 3
    assert cfg.get("color.mu") == [180.0, 1.0, 0.39]
    cfg = RunConfig.load(p, overrides={"grasp.max_attempts": 4})
    assert cfg.get("grasp.max_attempts") == 4 and cfg.get("grasp.patch_size") == 0.03
    cfg = RunConfig.load(p, overrides=["grasp.weights=[0.4, 0.4, 0.2]", "peduncle.scorer=gaussian"])
    assert cfg.get("grasp.weights") == [0.4, 0.4, 0.2] and cfg.get("peduncle.scorer") == "gaussian"


def test_parse_override():
    assert parse_override("grasp.patch_size=0.03") == ("grasp", "patch_size", 0.03)
    assert parse_override("peduncle.scorer=patch") == ("peduncle", "scorer", "patch")
    with pytest.raises(ConfigError):
        parse_override("patch_size=0.03")


def test_profile_table_in_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[paper_defaults.grasp]\nmax_attempts = 3\n")
    assert RunConfig.load(p).get("grasp.max_attempts") == 5
    cfg = RunConfig.load(p, profile="paper_defaults")
    assert cfg.get("grasp.max_attempts") == 3 and cfg.get("color.mu") == [180.0, 1.0, 0.39]


def test_ints_accepted_for_floats():
    assert RunConfig.load(overrides={"viewpoint.standoff": 1}).get("viewpoint.standoff") == 1.0


# ---------------------------------------------------------------- CLI


def test_help_and_usage_errors(capsys):
    assert main(["--help"]) == 0
    assert "sim" in capsys.readouterr().out
    assert main(["sim", "--help"]) == 0
    assert main(["sim", "--bogus"]) == 2
    assert main([]) == 2
    assert main(["sim", "--grasp-weights", "0.5", "0.5", "0.5"]) == 2
    assert main(["sim", "--set", "nosuch.key=1"]) == 2
    assert main(["sim", "--runs", "0"]) == 2
    assert main(["segment", "--frame", "/nonexistent/frame"]) == 2


def test_config_command(tmp_path):
    assert main(["config", "--out", str(tmp_path), "--profile", "paper_defaults", "--max-attempts", "2"]) == 0
    doc = json.loads((tmp_path / "effective_config.json").read_text())
    assert doc["profile"] == "paper_defaults" and doc["values"]["grasp"]["max_attempts"] == 2
    # the written default file loads back to the same values
    assert RunConfig.load(tmp_path / "default.toml").values == RunConfig.load().values


def test_flag_beats_config_file(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[grasp]\nmax_attempts = 3\n")
    assert main(["config", "--config", str(p), "--out", str(tmp_path / "a")]) == 0
    assert json.loads((tmp_path / "a/effective_config.json").read_text())["values"]["grasp"]["max_attempts"] == 3
    assert main(["config", "--config", str(p), "--max-attempts", "4", "--set", "grasp.max_attempts=2",
                 "--out", str(tmp_path / "b")]) == 0
    assert json.loads((tmp_path / "b/effective_config.json").read_text())["values"]["grasp"]["max_attempts"] == 4


def test_sim_smoke(tmp_path):
    cfg = tmp_path / "default.toml"
    assert main(["config", "--out", str(tmp_path)]) == 0
    out = tmp_path / "run7"
    assert main(["sim", "--config", str(cfg), "--seed", "7", "--out", str(out), *SMALL]) == 0
    lines = (out / "attempts.jsonl").read_text().splitlines()
    recs = [json.loads(x) for x in lines]
    assert {r["modified"] for r in recs} == {False, True}
    report = json.loads((out / "report.json").read_text())
    assert set(report["scenarios"]) == {"unmodified", "modified"}
    assert (out / "failures_modified.csv").exists() and (out / "runtime.json").exists()
    assert main(["eval", "--attempts", str(out / "attempts.jsonl"), "--out", str(tmp_path / "ev")]) == 0
    assert json.loads((tmp_path / "ev/report.json").read_text()) == report


@pytest.fixture(scope="module")
def rendered(tmp_path_factory):
    out = tmp_path_factory.mktemp("render")
    assert main(["render", "--seed", "4", "--out", str(out), "--set", "scene.leaf_occlusion_fraction=0.0", *SMALL]) == 0
    return out


def test_render_outputs(rendered):
    peppers = json.loads((rendered / "peppers.json").read_text())
    assert len(peppers) == 1
    for suffix in (".ppm", ".pgm", ".json", "_pepper.pgm", "_peduncle.pgm", "_scores.pgm"):
        assert (rendered / f"pepper_0{suffix}").exists()
    assert (rendered / "stop_0.ppm").exists() and (rendered / "scene.ply").exists()


def test_segment_grasp_peduncle(rendered, tmp_path):
    stem = str(rendered / "pepper_0")
    assert main(["segment", "--frame", stem, "--out", str(tmp_path)]) == 0
    targets = json.loads((tmp_path / "targets.json").read_text())
    assert len(targets) == 1
    truth = json.loads((rendered / "peppers.json").read_text())[0]
    assert np.linalg.norm(np.subtract(targets[0]["centroid"], truth["center"])) < 0.05
    assert main(["grasp", "--frame", stem, "--out", str(tmp_path)]) == 0
    u = [json.loads(x)["U"] for x in (tmp_path / "grasps.jsonl").read_text().splitlines()]
    assert u == sorted(u, reverse=True)
    args = ["peduncle", "--frame", stem, "--scores", f"{stem}_scores.pgm", "--out", str(tmp_path)]
    assert main(args) == 0
    doc = json.loads((tmp_path / "peduncle.json").read_text())
    assert np.linalg.norm(np.subtract(doc["cut_pose"]["position"], truth["peduncle_centroid"])) < 0.02
    assert main(["peduncle", "--frame", stem, "--out", str(tmp_path)]) == 2  # scoremap needs --scores


def test_peduncle_failure_exit_code(rendered, tmp_path):
    stem = str(rendered / "pepper_0")
    code = main(["peduncle", "--frame", stem, "--scorer", "gaussian", "--threshold", "0.999", "--out", str(tmp_path)])
    assert code == 1
    assert "step_counts" in json.loads((tmp_path / "peduncle.json").read_text())


def test_train_and_eval(rendered, tmp_path):
    stem = rendered / "pepper_0"
    assert main(["train-color", "--images", f"{stem}.ppm", "--masks", f"{stem}_pepper.pgm", "--out", str(tmp_path)]) == 0
    model = json.loads((tmp_path / "color_model.json").read_text())
    assert abs(model["mu"][0] - 90) < 15  # red sits near 90 under the rotated hue
    assert main(["segment", "--frame", str(stem), "--model", str(tmp_path / "color_model.json"), "--out", str(tmp_path)]) == 0
    assert main(["train-patch", "--images", f"{stem}.ppm", "--positive", f"{stem}_peduncle.pgm", "--epochs", "50",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "patch_classifier.json").exists()
    assert main(["eval", "--scores", f"{stem}_scores.pgm", "--truth", f"{stem}_peduncle.pgm", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "eval.json").read_text())
    assert 0 <= doc["auc"] <= 1 and 0 <= doc["best_f1"] <= 1
    assert (tmp_path / "pr.csv").read_text().startswith("threshold,precision,recall")
    assert main(["eval", "--scores", f"{stem}_scores.pgm", "--out", str(tmp_path)]) == 2


def test_eval_dataset_mode(tmp_path):
    assert main(["eval", "--frames", "4", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "eval.json").read_text())
    assert doc["frames"] == 4
    assert (tmp_path / "pr_filtered.csv").exists() and (tmp_path / "pr_unfiltered.csv").exists()
