"""Command-line behavior: reports, run directories, manifests, exit codes."""

import json
import textwrap
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from routegame.cli import main
from routegame.metrics import read_seed_csv

MINI = textwrap.dedent(
    """
    scenario_version: 1
    name: mini_fork
    destination: B
    nodes: [A, B]
    edges:
      - {id: top, src: A, dst: B, base: 1, slope: "1/4"}
      - {id: low, src: A, dst: B, base: 1, slope: "1/4"}
    groups:
      - name: Left
        source: A
        size: 4
        strategies:
          - {label: Top, edges: [top]}
          - {label: Low, edges: [low]}
      - name: Right
        source: A
        size: 4
        strategies:
          - {label: Top, edges: [top]}
          - {label: Low, edges: [low]}
    """
).lstrip()


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def mini_scn(tmp_path):
    p = tmp_path / "mini.scn"
    p.write_text(MINI, encoding="utf-8")
    return p


def test_version(runner):
    res = runner.invoke(main, ["--version"])
    assert res.exit_code == 0
    assert "routegame" in res.output


# --- validate -----------------------------------------------------------------


def test_validate_builtin(runner):
    res = runner.invoke(main, ["validate", "--scenario", "amsterdam_b"])
    assert res.exit_code == 0
    assert "amsterdam_b: 5 nodes, 6 edges, 2 groups, 200 agents" in res.output
    assert "West: 100 agents, 2 routes" in res.output


def test_validate_unknown_ref(runner):
    res = runner.invoke(main, ["validate", "--scenario", "not_a_thing"])
    assert res.exit_code == 1
    assert "neither a built-in" in res.stderr


def test_validate_reports_parse_context(runner, tmp_path):
    p = tmp_path / "broken.scn"
    p.write_text(MINI.replace("slope:", "slop:"), encoding="utf-8")
    res = runner.invoke(main, ["validate", "--scenario", str(p)])
    assert res.exit_code == 1
    assert "broken.scn" in res.stderr and "unknown key" in res.stderr


def test_validate_lists_constraint_violations(runner, tmp_path):
    p = tmp_path / "negative.scn"
    p.write_text(MINI.replace('slope: "1/4"', 'slope: "-1/4"', 1), encoding="utf-8")
    res = runner.invoke(main, ["validate", "--scenario", str(p)])
    assert res.exit_code == 1
    assert "invalid: " in res.output and "negative latency" in res.output


# --- solve / analyze ------------------------------------------------------------


def test_solve_braess_pre_and_post(runner):
    pre = runner.invoke(main, ["solve", "--scenario", "braess_pre"])
    assert pre.exit_code == 0
    assert "worst equilibrium: total cost 300" in pre.output
    assert "social optimum: total cost 300" in pre.output
    assert "price of anarchy: 1 (1)" in pre.output
    assert "disparity S1-S2 at worst equilibrium: +0" in pre.output

    post = runner.invoke(main, ["solve", "--scenario", "braess_post"])
    assert post.exit_code == 0
    assert "worst equilibrium: total cost 400" in post.output
    assert "price of anarchy: 1.33333 (4/3)" in post.output


def test_solve_flow_table_and_report_file(runner, mini_scn, tmp_path):
    out = tmp_path / "report.txt"
    res = runner.invoke(
        main,
        ["solve", "--scenario", str(mini_scn), "--flows", "--out", str(out)],
    )
    assert res.exit_code == 0
    assert "edge flows:" in res.output
    assert "A->B" in res.output
    assert out.read_text(encoding="utf-8").rstrip("\n") == res.output.rstrip("\n")


def test_analyze_profile_report(runner):
    res = runner.invoke(
        main,
        ["analyze", "--scenario", "braess_post", "--counts", "S1=50,50,0;S2=50,50,0"],
    )
    assert res.exit_code == 0
    assert "social cost: 300" in res.output
    assert "group S1" in res.output


def test_analyze_rejects_malformed_counts(runner):
    res = runner.invoke(
        main, ["analyze", "--scenario", "braess_post", "--counts", "S1:100"]
    )
    assert res.exit_code == 1
    assert "malformed counts" in res.stderr


# --- learn ----------------------------------------------------------------------


LEARN_ARGS = ["--steps", "40", "--seeds", "2", "--alpha", "0.3", "--window", "5"]


def run_learn(runner, mini_scn, out_dir, extra=()):
    args = ["learn", "--scenario", str(mini_scn), *LEARN_ARGS, "--out", str(out_dir)]
    return runner.invoke(main, [*args, *extra])


def test_learn_writes_run_directory(runner, mini_scn, tmp_path):
    res = run_learn(runner, mini_scn, tmp_path / "runs")
    assert res.exit_code == 0, res.output
    run_dir = tmp_path / "runs" / "mini" / "uniform"
    names = sorted(p.name for p in run_dir.iterdir())
    assert names == ["aggregate.csv", "manifest.json", "seed_0.csv", "seed_1.csv"]

    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["format"] == "routegame-manifest/1"
    assert manifest["run_id"] == "mini-uniform-m0"
    assert manifest["steps"] == 40
    assert manifest["seed_list"] == [0, 1]
    assert manifest["alpha_mode"] == {"kind": "uniform", "value": 0.3}
    assert manifest["tau"] == 8.0
    assert manifest["so_certified"] is True
    assert manifest["scenario"]["text"] == MINI

    seed = read_seed_csv(run_dir / "seed_1.csv")
    assert seed.run_id == "mini-uniform-m0"
    assert seed.groups == ("Left", "Right")
    assert len(seed.social) == 40
    assert (seed.pol >= 1.0).all()


def test_learn_manifest_rerun_is_byte_identical(runner, mini_scn, tmp_path):
    first = run_learn(runner, mini_scn, tmp_path / "a")
    assert first.exit_code == 0, first.output
    manifest_path = tmp_path / "a" / "mini" / "uniform" / "manifest.json"
    res = runner.invoke(
        main,
        ["learn", "--manifest", str(manifest_path), "--out", str(tmp_path / "b")],
    )
    assert res.exit_code == 0, res.output
    dir_a = tmp_path / "a" / "mini" / "uniform"
    dir_b = tmp_path / "b" / "mini" / "uniform"
    for p in sorted(dir_a.iterdir()):
        assert (dir_b / p.name).read_bytes() == p.read_bytes(), p.name


def test_learn_parallel_jobs_identical(runner, mini_scn, tmp_path):
    serial = run_learn(runner, mini_scn, tmp_path / "s")
    parallel = run_learn(runner, mini_scn, tmp_path / "p", extra=["--jobs", "2"])
    assert serial.exit_code == 0 and parallel.exit_code == 0
    dir_s = tmp_path / "s" / "mini" / "uniform"
    dir_p = tmp_path / "p" / "mini" / "uniform"
    for p in sorted(dir_s.iterdir()):
        assert (dir_p / p.name).read_bytes() == p.read_bytes(), p.name


def test_learn_ratio_mode_and_manifest_fields(runner, mini_scn, tmp_path):
    res = runner.invoke(
        main,
        [
            "learn", "--scenario", str(mini_scn), "--steps", "10", "--seeds", "1",
            "--alpha-mean", "0.2", "--alpha-ratio", "5:1",
            "--out", str(tmp_path / "runs"),
        ],
    )
    assert res.exit_code == 0, res.output
    run_dir = tmp_path / "runs" / "mini" / "5to1"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["alpha_mode"]["kind"] == "ratio"
    a1, a2 = manifest["alphas"]
    assert a1 / a2 == pytest.approx(5.0) and (a1 + a2) / 2 == pytest.approx(0.2)


def test_learn_config_file_and_flag_precedence(runner, mini_scn, tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(
        f"scenario: {mini_scn}\nsteps: 30\nseeds: 1\nalpha: 0.5\nwindow: 5\n",
        encoding="utf-8",
    )
    res = runner.invoke(
        main,
        ["learn", "--config", str(cfg), "--steps", "12", "--out", str(tmp_path / "r")],
    )
    assert res.exit_code == 0, res.output
    manifest = json.loads(
        (tmp_path / "r" / "mini" / "uniform" / "manifest.json").read_text()
    )
    assert manifest["steps"] == 12          # flag wins
    assert manifest["alpha_mode"]["value"] == 0.5  # config fills the rest


def test_learn_rejects_unknown_config_key(runner, mini_scn, tmp_path):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(f"scenario: {mini_scn}\nalpha: 0.5\nstep: 10\n", encoding="utf-8")
    res = runner.invoke(main, ["learn", "--config", str(cfg)])
    assert res.exit_code == 1
    assert "unknown config keys: step" in res.stderr


@pytest.mark.parametrize(
    "args, message",
    [
        ([], "required"),
        (["--scenario", "braess_pre", "--alpha", "0.2", "--alpha-ratio", "2:1"], "excludes"),
        (["--scenario", "braess_pre", "--alpha-mean", "0.2"], "alpha-ratio"),
        (["--scenario", "braess_pre"], "need either"),
    ],
)
def test_learn_usage_errors(runner, args, message):
    res = runner.invoke(main, ["learn", *args])
    assert res.exit_code == 1
    assert message in res.stderr


def test_learn_rejects_tampered_manifest(runner, mini_scn, tmp_path):
    ok = run_learn(runner, mini_scn, tmp_path / "runs")
    assert ok.exit_code == 0
    path = tmp_path / "runs" / "mini" / "uniform" / "manifest.json"
    doc = json.loads(path.read_text())
    doc["scenario"]["text"] += "# tampered\n"
    path.write_text(json.dumps(doc), encoding="utf-8")
    res = runner.invoke(main, ["learn", "--manifest", str(path)])
    assert res.exit_code == 1
    assert "does not match its hash" in res.stderr


# --- sweep ----------------------------------------------------------------------


def test_sweep_layout_and_master_seeds(runner, mini_scn, tmp_path):
    res = runner.invoke(
        main,
        [
            "sweep", "--scenario", str(mini_scn), "--steps", "10", "--seeds", "1",
            "--alpha-mean", "0.2", "--ratios", "2:1,1:2",
            "--master-seed", "6", "--out", str(tmp_path / "runs"),
        ],
    )
    assert res.exit_code == 0, res.output
    root = tmp_path / "runs" / "mini"
    assert sorted(p.name for p in root.iterdir()) == ["1to2", "2to1"]
    m0 = json.loads((root / "2to1" / "manifest.json").read_text())
    m1 = json.loads((root / "1to2" / "manifest.json").read_text())
    assert m0["master_seed"] == 6 ^ 0
    assert m1["master_seed"] == 6 ^ 1
    assert m1["run_id"].endswith("-m7")


def test_sweep_requires_mean_and_forbids_alpha(runner, mini_scn):
    res = runner.invoke(
        main, ["sweep", "--scenario", str(mini_scn), "--ratios", "2:1"]
    )
    assert res.exit_code == 1 and "alpha-mean" in res.stderr
    res = runner.invoke(
        main,
        ["sweep", "--scenario", str(mini_scn), "--ratios", "2:1", "--alpha", "0.2"],
    )
    assert res.exit_code == 1 and "fixed-rate" in res.stderr


# --- calibrate ------------------------------------------------------------------


def test_calibrate_forwards_beams_and_writes_report(runner, tmp_path, monkeypatch):
    import routegame.cli as cli_mod
    from routegame.calibration import CalibrationResult

    seen = {}

    def fake_calibrate(beams, log):
        seen["beams"] = beams
        res = CalibrationResult(
            t0={}, achieved={}, targets={}, poa={}, score=0.0,
            candidates_scored=1, elapsed_s=0.0,
        )
        res.report = "stub report"
        return res

    monkeypatch.setattr(cli_mod, "calibrate", fake_calibrate)
    out = tmp_path / "report.txt"
    res = runner.invoke(
        main,
        ["calibrate", "--beam-a", "7", "--beam-b", "9", "--finalists", "2",
         "--out", str(out)],
    )
    assert res.exit_code == 0, res.output
    assert seen["beams"] == (7, 9, 2)
    assert "stub report" in res.output
    assert out.read_text() == "stub report"


def test_calibrate_failure_exits_with_runtime_error(runner, monkeypatch):
    import routegame.cli as cli_mod

    def fake_calibrate(beams, log):
        raise RuntimeError("no exactly-optimal candidate table")

    monkeypatch.setattr(cli_mod, "calibrate", fake_calibrate)
    res = runner.invoke(main, ["calibrate"])
    assert res.exit_code == 2
    assert "no exactly-optimal candidate" in res.stderr
