import csv
import io
import json
import os
import re
from pathlib import Path

import pytest

from derivroots import cli, experiments
from derivroots.errors import TrialError, ValidationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run_cli(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2))
    return str(path)


def small_convergence(**kw):
    d = {"experiment": "convergence", "measure": {"type": "circle", "center": [0, 0], "radius": 1},
         "n_grid": [20, 40], "k_rule": {"kind": "fixed", "c": 2}, "trials": 3, "seed": 4, "mobius_maps": 2}
    d.update(kw)
    return d


def test_counterexample_json(capsys, tmp_path):
    code, out, _ = run_cli(["counterexample", "--q", "0.3333333333", "--k", "8", "--trials", "100000",
                            "--seed", "7", "--out", str(tmp_path)], capsys)
    res = json.loads(out)
    assert code == 0 and {"p_exact", "p_hat", "se"} <= set(res)
    assert res["m"] == 26


def test_validate_bad_mixture(capsys, tmp_path):
    circle = {"type": "circle", "center": [0, 0], "radius": 1}
    disk = {"type": "disk", "center": [0, 0], "radius": 1}
    cfg = small_convergence(measure={"type": "mixture", "components": [{"weight": 0.5, "measure": circle},
                                                                       {"weight": 0.4, "measure": disk}]})
    code, _, err = run_cli(["validate", "--config", write_json(tmp_path / "bad.json", cfg)], capsys)
    diag = json.loads(err)
    assert code == 2 and diag["field"].startswith("config.measure")
    assert "0.9" in diag["message"]
    # the line of the "components" key
    assert 'components' in Path(diag["config"]).read_text().splitlines()[diag["line"] - 1]


def test_validate_good_configs(capsys):
    for path in sorted(CONFIGS.glob("*.json")):
        code, out, _ = run_cli(["validate", "--config", str(path)], capsys)
        assert code == 0 and json.loads(out)["valid"], path


def test_json_syntax_error_reports_line(capsys, tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{\n  "experiment": "convergence",\n  "seed": ,\n}\n')
    code, _, err = run_cli(["convergence", "--config", str(p), "--out", str(tmp_path)], capsys)
    assert code == 2 and json.loads(err)["line"] == 3


def test_missing_config(capsys, tmp_path):
    code, _, err = run_cli(["convergence", "--out", str(tmp_path)], capsys)
    assert code == 2 and "--config" in err


def test_bad_thread_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DERIVROOTS_THREADS", "many")
    cfg = write_json(tmp_path / "c.json", small_convergence())
    code, _, err = run_cli(["convergence", "--config", cfg, "--out", str(tmp_path / "runs")], capsys)
    assert code == 2 and "DERIVROOTS_THREADS" in err


def test_run_artifacts(capsys, tmp_path):
    cfg = write_json(tmp_path / "c.json", small_convergence())
    out = tmp_path / "runs"
    code, stdout, _ = run_cli(["convergence", "--config", cfg, "--out", str(out), "--threads", "2"], capsys)
    assert code == 0
    run_dir = Path(json.loads(stdout)["output_dir"])
    assert run_dir.parent == out.resolve()
    assert sorted(p.name for p in run_dir.iterdir()) == ["manifest.json", "report.json", "trials.csv"]
    # nothing escapes the run directory
    assert sorted(p.name for p in tmp_path.iterdir()) == ["c.json", "runs"]
    report = json.loads((run_dir / "report.json").read_text())
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["experiment"] == "convergence" and manifest["seed"] == 4
    assert manifest["output_dir"] == str(run_dir)
    # the embedded config reruns to the same records
    again = experiments.run("convergence", experiments.parse_config("convergence", report["config"]), 1)
    rows = list(csv.DictReader(io.StringIO((run_dir / "trials.csv").read_text())))
    assert [float(r["w1"]) for r in rows] == [r["w1"] for r in again.records]


def test_csv_full_precision(capsys, tmp_path):
    cfg = write_json(tmp_path / "c.json", small_convergence())
    code, stdout, _ = run_cli(["convergence", "--config", cfg, "--out", str(tmp_path)], capsys)
    text = (Path(json.loads(stdout)["output_dir"]) / "trials.csv").read_text(encoding="utf-8")
    back = experiments.records_from_csv(text)
    direct = experiments.run("convergence", experiments.parse_config("convergence", small_convergence()), 1)
    for a, b in zip(back, direct.records):
        assert a["w1"] == b["w1"] and a["hull_excess"] == b["hull_excess"]
    # '.' decimal separator, 17 significant digits
    header, first = text.splitlines()[:2]
    fields = first.split(",")
    assert len(fields) == len(header.split(","))
    assert any(len(re.sub(r"e.*|\D", "", f).lstrip("0")) == 17 for f in fields)


def test_manifest_written_before_run(capsys, tmp_path, monkeypatch):
    seen = {}
    real = experiments.run

    def spy(name, cfg, threads=None, tasks=None):
        dirs = list((tmp_path / "runs").iterdir())
        seen["manifest"] = [d for d in dirs if (d / "manifest.json").exists()]
        seen["report"] = [d for d in dirs if (d / "report.json").exists()]
        return real(name, cfg, threads, tasks)

    monkeypatch.setattr(experiments, "run", spy)
    cfg = write_json(tmp_path / "c.json", small_convergence())
    assert cli.main(["convergence", "--config", cfg, "--out", str(tmp_path / "runs")]) == 0
    assert len(seen["manifest"]) == 1 and not seen["report"]


def test_unique_run_dirs(capsys, tmp_path):
    cfg = write_json(tmp_path / "c.json", small_convergence(trials=1, n_grid=[10]))
    dirs = set()
    for _ in range(3):
        code, stdout, _ = run_cli(["convergence", "--config", cfg, "--out", str(tmp_path / "r")], capsys)
        dirs.add(json.loads(stdout)["output_dir"])
    assert len(dirs) == 3


def test_runtime_error_prints_replay_seed(capsys, tmp_path, monkeypatch):
    def fail(name, cfg, threads=None, tasks=None):
        raise TrialError("trial 2 at n=40 failed (trial seed 123456)", n=40, seed=123456, trial=2)

    monkeypatch.setattr(experiments, "run", fail)
    cfg = write_json(tmp_path / "c.json", small_convergence())
    code, _, err = run_cli(["convergence", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 1
    assert "--replay 123456 --n 40 --trial 2" in err


def test_replay_flag_reproduces_trial(capsys, tmp_path):
    cfg = write_json(tmp_path / "c.json", small_convergence())
    code, stdout, _ = run_cli(["convergence", "--config", cfg, "--out", str(tmp_path)], capsys)
    rows = experiments.records_from_csv((Path(json.loads(stdout)["output_dir"]) / "trials.csv").read_text())
    target = rows[4]
    code, stdout, _ = run_cli(["convergence", "--config", cfg, "--out", str(tmp_path), "--replay",
                               str(target["seed"]), "--n", str(target["n"]), "--trial", str(target["trial"])],
                              capsys)
    assert code == 0
    (one,) = experiments.records_from_csv((Path(json.loads(stdout)["output_dir"]) / "trials.csv").read_text())
    assert {k: v for k, v in one.items() if k != "wall_time"} == \
        {k: v for k, v in target.items() if k != "wall_time"}


def test_style_key_is_ignored_by_parser(capsys, tmp_path):
    cfg = write_json(tmp_path / "c.json", small_convergence(style={"marker_radius": 2}))
    code, stdout, _ = run_cli(["convergence", "--config", cfg, "--out", str(tmp_path)], capsys)
    assert code == 0
    report = json.loads((Path(json.loads(stdout)["output_dir"]) / "report.json").read_text())
    assert report["style"] == {"marker_radius": 2} and "style" not in report["config"]


# ---------------------------------------------------------------- SVG


def test_single_point_one_marker():
    svg = cli.render_scatter([{"n": 1, "trial": 0, "layer": 0, "re": 0.0, "im": 0.0}])
    assert svg.count("<circle") == 1 and "<svg" in svg


def test_empty_layers_rejected():
    with pytest.raises(ValidationError):
        cli.render_scatter([])
    with pytest.raises(ValidationError):
        cli.render_scatter("n,trial,layer,re,im\n")


def test_render_deterministic_from_csv_text():
    rows = [{"n": 3, "trial": 0, "layer": lay, "re": 0.1 * i, "im": -0.2 * i} for i, lay in enumerate([0, 0, 1, 2])]
    text = experiments.rows_to_csv(rows, ["n", "trial", "layer", "re", "im"])
    assert cli.render_scatter(text) == cli.render_scatter(rows) == cli.render_scatter(list(rows))


@pytest.fixture(scope="module")
def noise_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("noise")
    svgs = []
    for threads in ("1", "3"):
        code = cli.main(["perturbation", "--config", str(CONFIGS / "noise_left.json"), "--out", str(base),
                         "--threads", threads])
        assert code == 0
    for d in sorted(base.iterdir()):
        svgs.append((d / "scatter.svg").read_bytes())
    return svgs


def test_noise_panel_svg_layers(noise_runs):
    svg = noise_runs[0].decode()
    assert len(re.findall(r'<g id="layer-\d+"', svg)) == 3
    for lay in (0, 1, 5):
        assert f'id="layer-{lay}"' in svg
    assert svg.count("<circle") == 10 * (110 + 109 + 105)
    legend = re.findall(r"<text[^>]*>([^<]*P[^<]*)</text>", svg)
    assert len(legend) == 3
    for color in ("black", "blue", "red"):
        assert color in svg


def test_noise_panel_svg_byte_identical(noise_runs):
    assert noise_runs[0] == noise_runs[1]
