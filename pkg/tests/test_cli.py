import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from nerfdiff.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, EXIT_STAGE, main
from nerfdiff.config import RunConfig
from nerfdiff.diffusion import load_denoiser
from nerfdiff.field import load_dataset, load_field, read_png
from nerfdiff.harness import VoxelScene, gen_voxel_scene, smoke_config
from nerfdiff.rng import child_seed


def tiny_config(out) -> dict:
    d = json.loads(RunConfig(out=str(out), pipeline=smoke_config()).to_json())
    d["field"].update(steps=12, log_every=4)
    d["diffusion"].update(steps=6, log_every=3)
    d["diffusion"]["arch"].update(widths=[8, 16], time_dim=8)
    d["harness"]["n_views"] = 18
    return d


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A full command sequence on the tiny config, shared by the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.json"
    cfg.write_text(json.dumps(tiny_config(root / "run")))
    base = ["--config", str(cfg)]
    for cmd in (["gen-scene"], ["train-field"], ["train-diffusion"], ["render"], ["enhance"], ["evaluate"],
                ["zoom", "--factor", "4"]):
        assert main(cmd + base) == EXIT_OK, cmd
    return root, cfg


def run(*args):
    return main([str(a) for a in args])


def test_outputs_written(workdir):
    root, _ = workdir
    out = root / "run"
    for name in ("scene.json", "config.json", "field.sfld", "field.rng.json", "field_losses.csv",
                 "denoiser.sfld", "diffusion_losses.csv", "report.csv", "report.json", "preview.png"):
        assert (out / name).is_file(), name
    assert len(load_dataset(out / "dataset", "train")) == 16
    assert len(load_dataset(out / "dataset", "test")) == 2
    assert len(load_dataset(out / "render")) == len(load_dataset(out / "enhanced")) == 2
    field, state = load_field(out / "field.sfld")
    assert state.step == 12
    assert load_denoiser(out / "denoiser.sfld").state.step == 6
    # one row per view per metric per variant
    rows = (out / "report.csv").read_text().strip().splitlines()[1:]
    assert len(rows) == 2 * 4 * 2


def test_config_copy_matches(workdir):
    root, cfg = workdir
    written = json.loads((root / "run" / "config.json").read_text())
    assert written == json.loads(cfg.read_text())


def test_scene_round_trip(workdir):
    root, _ = workdir
    cfg = RunConfig.from_dict(tiny_config(root / "run"))
    loaded = VoxelScene.load(root / "run" / "scene.json")
    direct = gen_voxel_scene(cfg.scene, child_seed(cfg.seed, "scene"))
    np.testing.assert_allclose(loaded.density, direct.density, rtol=0, atol=1e-12)
    np.testing.assert_allclose(loaded.color, direct.color, rtol=0, atol=1e-12)


def test_evaluate_reproduces_report(workdir, tmp_path):
    root, cfg = workdir
    out = root / "run"
    before = (out / "report.csv").read_bytes()
    assert run("evaluate", "--config", cfg) == EXIT_OK
    assert (out / "report.csv").read_bytes() == before


def test_enhance_is_idempotent(workdir):
    root, cfg = workdir
    out = root / "run"
    first = [read_png(p) for p in sorted((out / "enhanced").glob("*.png"))]
    assert run("enhance", "--config", cfg) == EXIT_OK
    again = [read_png(p) for p in sorted((out / "enhanced").glob("*.png"))]
    for a, b in zip(first, again):
        np.testing.assert_array_equal(a, b)


def test_zoom_comparison_strips(workdir):
    root, _ = workdir
    z = root / "run" / "zoom_4"
    strips = sorted((z / "comparison").glob("view_*.png"))
    assert len(strips) == 2
    img = read_png(strips[0])
    size = 16
    assert img.shape[0] == size and img.shape[1] > 3 * size
    for sub in ("oracle", "render", "enhanced"):
        assert len(list((z / sub).glob("*.png"))) == 2
    assert (z / "report.csv").is_file()


def test_field_resume_is_bit_identical(workdir, tmp_path):
    root, cfg = workdir
    ref = root / "run"
    out = tmp_path / "split"
    assert run("gen-scene", "--config", cfg, "--out", out) == EXIT_OK
    assert run("train-field", "--config", cfg, "--out", out, "--until", 5) == EXIT_OK
    assert load_field(out / "field.sfld")[1].step == 5
    assert run("train-field", "--config", cfg, "--out", out, "--resume", out / "field.sfld") == EXIT_OK
    assert (out / "field.sfld").read_bytes() == (ref / "field.sfld").read_bytes()
    assert (out / "field_losses.csv").read_bytes() == (ref / "field_losses.csv").read_bytes()


def test_diffusion_resume_is_bit_identical(workdir, tmp_path):
    root, cfg = workdir
    ref = root / "run"
    out = tmp_path / "split"
    out.mkdir()
    for f in ("field.sfld",):
        (out / f).write_bytes((ref / f).read_bytes())
    common = ["--config", cfg, "--out", out, "--dataset", ref / "dataset"]
    assert run("train-diffusion", *common, "--until", 2) == EXIT_OK
    assert run("train-diffusion", *common, "--resume", out / "denoiser.sfld") == EXIT_OK
    assert (out / "denoiser.sfld").read_bytes() == (ref / "denoiser.sfld").read_bytes()
    assert (out / "diffusion_losses.csv").read_bytes() == (ref / "diffusion_losses.csv").read_bytes()


def test_unknown_key_rejected_before_compute(tmp_path, capsys):
    d = tiny_config(tmp_path / "run")
    d["field"]["stepz"] = 3
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(d))
    assert run("train-field", "--config", cfg) == EXIT_CONFIG
    assert "field.stepz" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


def test_malformed_spec_reports_line(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text('{\n  "shapes": [\n    {"type": "sphere",,}\n  ]\n}\n')
    assert run("gen-scene", "--spec", spec, "--out", tmp_path / "o") == EXIT_CONFIG
    err = capsys.readouterr().err
    assert f"{spec}:3:" in err


def test_stage_error_is_tagged(tmp_path, capsys):
    d = tiny_config(tmp_path / "run")
    d["scene"] = {"resolution": 0, "shapes": []}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(d))
    assert run("gen-scene", "--config", cfg) == EXIT_STAGE
    assert "[scene]" in capsys.readouterr().err


def test_missing_input_fails(tmp_path, capsys):
    assert run("render", "--out", tmp_path) == EXIT_FAILURE
    assert "[render]" in capsys.readouterr().err


def test_bad_seed_and_threads(tmp_path):
    assert run("gen-scene", "--seed", -1, "--out", tmp_path) == EXIT_CONFIG
    assert run("gen-scene", "--threads", 0, "--out", tmp_path) == EXIT_CONFIG


def test_seed_override_and_threads(workdir, tmp_path):
    _, cfg = workdir
    assert run("gen-scene", "--config", cfg, "--out", tmp_path, "--seed", 2**64 - 1, "--threads", 1) == EXIT_OK
    assert json.loads((tmp_path / "config.json").read_text())["seed"] == 2**64 - 1


def test_verify_theory_small(tmp_path, capsys):
    code = run("verify-theory", "--out", tmp_path, "--models", 20, "--trials", 2000)
    lines = capsys.readouterr().out.strip().splitlines()
    assert code == EXIT_OK
    names = [ln.split(":")[0] for ln in lines]
    for claim in ("Def. 1", "Existence", "Thm 2", "Claim 1", "Thm 4", "Thm 5", "Claim 2"):
        assert f"PASS {claim}" in names
    assert (tmp_path / "theory.txt").read_text().splitlines() == lines


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nerfdiff", "gen-scene", "--out", str(tmp_path), "--config",
                           str(Path(tmp_path) / "missing.json")], capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
    assert "config error" in proc.stderr
    helped = subprocess.run([sys.executable, "-m", "nerfdiff", "--help"], capture_output=True, text=True)
    assert helped.returncode == 0 and "verify-theory" in helped.stdout
