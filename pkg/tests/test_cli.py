import csv
import io
import json
import math
import subprocess
import sys

import pytest

from pentropy.cli import main
from pentropy.spectra import fourier, named_measure


def run_cli(tmp_path, command, cfg=None, *extra, name="cfg.json"):
    args = [command, "--out", str(tmp_path / "out")]
    if cfg is not None:
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        args += ["--config", str(path)]
    code = main(args + list(extra))
    return code, tmp_path / "out"


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_entropy_identity_exact(tmp_path, capsys):
    cfg = {"system": {"kind": "identity"}, "partitions": {"masses": [[0.5, 0.5]]},
           "sequence": {"rule": "linear", "j_max": 10}, "mode": "exact"}
    code, out = run_cli(tmp_path, "entropy", cfg)
    assert code == 0
    rows = read_csv(out / "per_j.csv")
    assert [int(r["j"]) for r in rows] == list(range(1, 11))
    for r in rows:
        assert float(r["h_j"]) == math.log(2) / int(r["j"])
    report = json.loads((out / "report.json").read_text())
    assert report["complete"] and report["config_sha256"] and "numpy" in report["versions"]
    assert json.loads(capsys.readouterr().out)["experiment"] == "entropy"


def test_entropy_bernoulli_ln2_row_csv_stdout(tmp_path, capsys):
    cfg = {"system": {"kind": "bernoulli", "probs": [0.5, 0.5]},
           "sequence": {"rule": "linear", "j_max": 4}}
    code, _ = run_cli(tmp_path, "entropy", cfg, "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert rows and all(float(r["h_j"]) == pytest.approx(math.log(2), abs=1e-15) for r in rows)


def test_orthogonality_all_disjoint(tmp_path):
    cfg = {"orthogonality": {"sequence": {"rule": "linear", "j_max": 3},
                             "measures": ["lebesgue", "ma1"]}, "samples": 20000}
    code, out = run_cli(tmp_path, "orthogonality", cfg)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())["results"]
    assert all(v["disjoint"] for v in rep["sidon"]["verdicts"])
    assert rep["control"]["disjoint"] is False and rep["control"]["witnesses"]
    assert (out / "independence.csv").exists()


def test_spectral_riesz_demo_matches_fourier(tmp_path):
    code, out = run_cli(tmp_path, "spectral", {"spectral": {"n_max": 40, "wiener_N": 1024}})
    assert code == 0
    rows = read_csv(out / "spectra.csv")
    r = fourier(named_measure("riesz_demo"), 40)
    assert [float(row["r"]) for row in rows] == list(r)
    assert [float(row["r^2"]) for row in rows] == list(r ** 2)


def test_spectral_without_config_uses_defaults(tmp_path):
    code, out = run_cli(tmp_path, "spectral")
    assert code == 0 and (out / "summary.txt").exists()


@pytest.mark.parametrize("cfg, field", [
    ({"system": {"kind": "warp"}}, "system.kind"),
    ({"samples": -3}, "samples"),
    ({"sequence": {"rule": "linear", "j_max": "ten"}}, "sequence.j_max"),
    ({"bogus": 1}, "<root>"),
])
def test_malformed_config_exits_2_with_field_path(tmp_path, capsys, cfg, field):
    code, _ = run_cli(tmp_path, "entropy", cfg)
    assert code == 2
    assert f"config error at {field}" in capsys.readouterr().err


def test_wrong_experiment_and_bad_json(tmp_path, capsys):
    code, _ = run_cli(tmp_path, "entropy", {"experiment": "spectral"})
    assert code == 2 and "experiment" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["entropy", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2


def small_demo():
    return {"demo": {"search": {"j_candidates": [987, 1597, 2584], "L_bound": 18, "L_start": 2}},
            "samples": 20000, "seed": 3}


def test_demo_subcommand_reproducible(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        d.mkdir()
        code, out = run_cli(d, "theorem1-demo", small_demo())
        assert code == 0
        outs.append(out)
    for name in ("report.json", "per_j.csv", "spectra.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    s0, s1 = ((o / "summary.txt").read_text().splitlines() for o in outs)
    assert s0[1:] == s1[1:] and s0[0].startswith("# generated")
    rep = json.loads((outs[0] / "report.json").read_text())["results"]
    assert rep["S"]["vanishing"]


def test_seed_changes_sampled_numbers(tmp_path):
    cfg = {"system": {"kind": "gaussian", "measure": "lebesgue"}, "mode": "sampled",
           "samples": 5000, "sequence": {"rule": "linear", "j_max": 3}}
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    run_cli(tmp_path / "a", "entropy", cfg, "--seed", "1")
    run_cli(tmp_path / "b", "entropy", cfg, "--seed", "2")
    a = (tmp_path / "a" / "out" / "per_j.csv").read_text()
    b = (tmp_path / "b" / "out" / "per_j.csv").read_text()
    assert a != b


def test_budget_overrun_writes_incomplete_report(tmp_path, capsys):
    cfg = {"system": {"kind": "gaussian", "measure": "ma1"}, "mode": "sampled",
           "samples": 200000, "sequence": {"rule": "linear", "j_max": 8},
           "budget_seconds": 0.001}
    code, out = run_cli(tmp_path, "entropy", cfg)
    assert code == 1
    rep = json.loads((out / "report.json").read_text())
    assert rep["complete"] is False and "budget" in rep["error"]
    assert "INCOMPLETE" in (out / "summary.txt").read_text()
    assert "run incomplete" in capsys.readouterr().err


def test_run_requires_config(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--out", str(tmp_path)])
    assert exc.value.code == 2
    code, out = run_cli(tmp_path, "run", {"experiment": "spectral",
                                          "spectral": {"n_max": 8, "wiener_N": 64}})
    assert code == 0


def test_console_script_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "pentropy.cli", "spectral", "--out",
                           str(tmp_path), "--format", "csv"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("n,r,r^2")


def test_cpe_probe_needs_threshold_for_exact_runs(tmp_path):
    cfg = {"system": {"kind": "rotation", "angle": "golden"}, "mode": "exact",
           "partitions": {"arcs": [["0", "1/2"]]}, "sequence": {"rule": "linear", "j_max": 40}}
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    _, out = run_cli(tmp_path / "a", "entropy", cfg)
    assert "skipped" in json.loads((out / "report.json").read_text())["results"]["cpe_probe"]
    # tail rows have L >= 21, so h_j <= ln(42)/21 < 0.25
    _, out = run_cli(tmp_path / "b", "entropy", dict(cfg, cpe_threshold=0.25))
    probe = json.loads((out / "report.json").read_text())["results"]["cpe_probe"]
    assert probe["all_positive"] is False and probe["threshold"] == 0.25
