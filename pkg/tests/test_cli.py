import filecmp
import json
import math
from pathlib import Path

import numpy as np
import pytest

from distdiff.cli import main
from distdiff.datasets import DatasetGenSpec, generate
from distdiff.geometry import PointCloud
from distdiff.runner import ConfigError, RunConfig, build_schedule

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _same_tree(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    return all(_same_tree(a / d, b / d) for d in cmp.common_dirs)


# -- datasets ------------------------------------------------------------------------


def test_grid_generator():
    K = generate(DatasetGenSpec("grid", 2, 4))
    assert len(K) == 4 and K.diameter == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        generate(DatasetGenSpec("grid", 2, 5))


def test_circle_samples_on_circle():
    K = generate(DatasetGenSpec("circle-samples", 16, 256, seed=1, params={"radius": 2.0}))
    r = np.linalg.norm(K.points, axis=1)
    assert np.abs(r - 2.0).max() <= 1e-12 and np.all(K.points[:, 2:] == 0)


@pytest.mark.parametrize("kind", ["gaussian-blobs", "sphere-samples", "two-clusters", "circle-samples"])
def test_generators_deterministic(kind):
    a = generate(DatasetGenSpec(kind, 5, 30, seed=4))
    b = generate(DatasetGenSpec(kind, 5, 30, seed=4))
    assert np.array_equal(a.points, b.points) and a.points.shape == (30, 5)


def test_dataset_spec_validation():
    with pytest.raises(ValueError):
        DatasetGenSpec("spiral", 2, 3)
    with pytest.raises(ValueError):
        DatasetGenSpec("grid", 0, 3)


# -- config ---------------------------------------------------------------------------


def test_overrides_and_seed():
    cfg = RunConfig.from_text("[run]\nseed = 1\n", ["schedule.kind=edm", "schedule.n_steps=5"], seed=9)
    assert cfg.seed == 9 and build_schedule(cfg).n_steps == 5
    with pytest.raises(ConfigError):
        RunConfig.from_text("", ["nodot=1"])
    with pytest.raises(ConfigError):
        RunConfig.from_text("").seed


def test_bad_values_name_the_field():
    cfg = RunConfig.from_text("[run]\nseed = x\n")
    with pytest.raises(ConfigError, match="run.seed"):
        cfg.seed


def test_manifest_section_is_ignored():
    cfg = RunConfig.from_text("[run]\nseed = 2\n[manifest]\nversion = 0\n")
    assert "manifest" not in cfg.sections


def test_anchored_schedule_shape():
    cfg = RunConfig.from_file(CONFIGS / "ge_vs_ddim.ini")
    s = build_schedule(cfg)
    assert s.sigmas[-1] == 40.0 and s.sigmas[0] == 0.01 and s.n_steps == 10
    assert s.sigmas[1] == pytest.approx(0.58209, abs=1e-5)


# -- commands -------------------------------------------------------------------------


def test_generate_deterministic(tmp_path):
    args = ["generate", "--seed", "3", "--override", "dataset.kind=circle-samples", "--override", "dataset.n=16",
            "--override", "dataset.m=256"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert filecmp.cmp(tmp_path / "a" / "dataset.csv", tmp_path / "b" / "dataset.csv", shallow=False)
    K = PointCloud.load_csv(tmp_path / "a" / "dataset.csv")
    assert K.points.shape == (256, 16)


def test_sample_exact_tracking_summary(tmp_path):
    assert main(["sample", "--config", str(CONFIGS / "exact_tracking.ini"), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert float(row["max_abs_dist_ratio_dev"]) <= 1e-9
    assert float(row["eta_hat"]) < 1e-12


def test_manifest_round_trip_and_thread_invariance(tmp_path):
    cfg = str(CONFIGS / "exact_tracking.ini")
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "t2"), "--threads", "2"]) == 0
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "t8"), "--threads", "8"]) == 0
    assert _same_tree(tmp_path / "t2", tmp_path / "t8")
    assert main(["sample", "--config", str(tmp_path / "t2" / "manifest.ini"), "--out", str(tmp_path / "re")]) == 0
    assert _same_tree(tmp_path / "t2", tmp_path / "re")


def test_ge_gamma_one_summary_equals_ddim(tmp_path):
    base = ["--config", str(CONFIGS / "ge_vs_ddim.ini"), "--override", "run.trials=5"]
    assert main(["sample", *base, "--override", "sampler.kind=ddim", "--out", str(tmp_path / "d")]) == 0
    assert main(["sample", *base, "--override", "sampler.kind=ge", "--override", "sampler.gamma=1",
                 "--out", str(tmp_path / "g")]) == 0
    summary = lambda p: (p / "summary.csv").read_text()  # noqa: E731
    assert summary(tmp_path / "d") == summary(tmp_path / "g")


def test_config_errors_exit_2(tmp_path, capsys):
    assert main(["sample", "--out", str(tmp_path)]) == 2
    assert main(["sample", "--config", str(CONFIGS / "exact_tracking.ini"), "--override", "sampler.kind=euler",
                 "--out", str(tmp_path)]) == 2
    assert main(["sample", "--config", str(tmp_path / "missing.ini")]) == 2
    assert "config error" in capsys.readouterr().err


def test_schedule_beta_star_prints_six_digits(capsys):
    assert main(["schedule", "beta-star", "--seed", "0", "--override", "error_model.eta=0.1",
                 "--override", "error_model.nu=2", "--override", "schedule.n_steps=50"]) == 0
    assert ">= 0.878987" in capsys.readouterr().out


def test_schedule_limits(capsys):
    assert main(["schedule", "limits", "--seed", "0", "--override", "error_model.eta=0.1",
                 "--override", "error_model.nu=2"]) == 0
    out = capsys.readouterr().out
    assert "0.0009765625" in out and "0.001953125" in out


def test_schedule_check_at_boundary(capsys):
    from distdiff.schedules import beta_star
    b = repr(beta_star(0.1, 2.0, 20))
    assert main(["schedule", "check", "--seed", "0", "--override", "schedule.kind=constant-beta",
                 "--override", "schedule.sigma_max=10", "--override", f"schedule.beta={b}",
                 "--override", "schedule.n_steps=20"]) == 0
    assert "# admissible" in capsys.readouterr().out


def test_schedule_build_csv(capsys):
    assert main(["schedule", "build", "--seed", "0", "--override", "schedule.kind=edm",
                 "--override", "schedule.n_steps=4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,sigma,beta" and lines[1].startswith("4,80,")


def test_verify_suite_scoping(tmp_path, capsys):
    assert main(["verify", "--seed", "0", "--suite", "appendix-a", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify_report.json").read_text())
    assert rep["suites"] == ["appendix-a"] and {c["suite"] for c in rep["checks"]} == {"appendix-a"}


def test_verify_fault_injection(monkeypatch, capsys):
    monkeypatch.setenv("DISTDIFF_CORRUPT_BETA", "1.05")
    assert main(["verify", "--seed", "0", "--suite", "sampler"]) == 1
    assert "ddim-exact-distance" in capsys.readouterr().err


def test_tail_bound_and_concentration_commands(tmp_path):
    assert main(["tail-bound", "--seed", "0", "--out", str(tmp_path / "tb")]) == 0
    assert (tmp_path / "tb" / "tail_bound.csv").exists()
    assert main(["concentration", "--seed", "0", "--override", "concentration.trials=500",
                 "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "manifest.ini").exists()


def test_gamma_sweep_command(tmp_path):
    assert main(["gamma-sweep", "--config", str(CONFIGS / "ge_vs_ddim.ini"), "--override", "gamma_sweep.trials=2",
                 "--override", "gamma_sweep.n_steps=5", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "gamma_sweep.csv").read_text().splitlines()
    assert lines[0].startswith("n_steps,gamma") and len(lines) == 6
