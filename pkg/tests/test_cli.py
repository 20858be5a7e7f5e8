import csv
import json
from pathlib import Path

import pytest

from rigsim.cli import load_plan, main

PLANS = Path(__file__).parents[1] / "plans"


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_sample_summary_and_determinism(capsys):
    args = ["sample", "--regime", "moderate", "--theta", "1", "--lambda", "0", "--n", "1000", "--seed", "7"]
    code, first, _ = _run(capsys, *args)
    assert code == 0
    fields = dict(tok.split("=") for tok in first.split())
    assert abs(int(fields["edges"]) - 1000) < 4 * 1000**0.5
    assert _run(capsys, *args)[1] == first


@pytest.mark.parametrize("argv", [
    ["sample", "--n", "0", "--theta", "1"],
    ["sample", "--theta", "1"],
    ["sample", "--n", "100", "--theta", "1", "--m", "5"],
    ["frobnicate"],
    ["campaign", "/nonexistent/plan.json"],
])
def test_usage_errors_exit_2(capsys, argv):
    assert _run(capsys, *argv)[0] == 2


def test_dump_and_explore_roundtrip(capsys, tmp_path):
    g = tmp_path / "g.txt"
    assert _run(capsys, "sample", "--theta", "1", "--n", "300", "--seed", "3", "--dump-graph", str(g))[0] == 0
    code, out, _ = _run(capsys, "explore", "--graph", str(g), "--root-rule", "smallest",
                        "--trace-csv", str(tmp_path / "a.csv"))
    assert code == 0 and "audit: 0 violations" in out
    _run(capsys, "explore", "--graph", str(g), "--root-rule", "smallest", "--trace-csv", str(tmp_path / "b.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_explore_example_graph(capsys, tmp_path, example_graph):
    g = tmp_path / "example.txt"
    example_graph.dump(g)
    code, out, _ = _run(capsys, "explore", "--graph", str(g), "--root-rule", "smallest",
                        "--trace-csv", str(tmp_path / "t.csv"))
    assert code == 0 and "2 complete components" in out
    rows = list(csv.DictReader(open(tmp_path / "t.csv", encoding="utf-8")))
    assert [int(r["X_k"]) for r in rows] == [2, 1, 0, 0, 0, 0, 1, 2, 0, 0]
    assert [int(r["dS_k"]) + 1 for r in rows] == [3, 2, 0, 0, 0, 0, 1, 2, 0, 0]


@pytest.mark.parametrize("regime,size", [("light", ["--aspect", "2"]), ("heavy", ["--m", "100"])])
def test_explore_sampled_regimes_audit_clean(capsys, regime, size):
    code, out, _ = _run(capsys, "explore", "--regime", regime, *size, "--n", "2000", "--seed", "4")
    assert code == 0 and "audit: 0 violations" in out
    assert ("community side" in out) == (regime == "heavy")


def _write_plan(tmp_path, **extra):
    plan = json.loads((PLANS / "smoke.json").read_text())
    plan.update(extra)
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    return path


def test_campaign_pass_and_impossible_tolerance(capsys, tmp_path):
    ok = _write_plan(tmp_path, output_dir=str(tmp_path / "res"))
    code, out, _ = _run(capsys, "campaign", str(ok), "--threads", "1")
    assert code == 0 and "ComponentSizes" in out
    bad = _write_plan(tmp_path, targets=["ClusteringCoefficient"],
                      tolerances={"clustering_n_se": 0, "clustering_min_events": 1000},
                      output_dir=str(tmp_path / "res2"))
    code, out, _ = _run(capsys, "campaign", str(bad))
    assert code == 3 and "FAIL" in out
    assert (tmp_path / "res2" / "smoke" / "ClusteringCoefficient.jsonl").exists()


@pytest.mark.parametrize("extra", [{"unknown_key": 1}, {"regime": "medium"}, {"targets": ["TriangleHeavy"]},
                                   {"m_or_aspect": {"m": 5, "aspect": 2}}])
def test_bad_plans_exit_2(capsys, tmp_path, extra):
    assert _run(capsys, "campaign", str(_write_plan(tmp_path, **extra)))[0] == 2


def test_plan_size_forms(tmp_path):
    p = _write_plan(tmp_path, regime="light", theta=None, m_or_aspect={"aspect": 2}, targets=[])
    doc = json.loads(p.read_text())
    del doc["theta"]
    p.write_text(json.dumps(doc))
    assert load_plan(p).config.m == 10**6
    doc["m_or_aspect"] = 5000
    p.write_text(json.dumps(doc))
    assert load_plan(p).config.m == 5000


def test_limits_outputs(capsys, tmp_path):
    out = tmp_path / "lim"
    code, text, _ = _run(capsys, "limits", "--inf", "--T", "6", "--dt", "0.001", "--seed", "2", "--out", str(out),
                         "--ghp")
    assert code == 0
    path_rows = list(csv.DictReader(open(out / "path.csv", encoding="utf-8")))
    assert float(path_rows[0]["S"]) == 0.0 and float(path_rows[0]["t"]) == 0.0
    zetas = [float(r["zeta"]) for r in csv.DictReader(open(out / "excursions.csv", encoding="utf-8"))]
    assert zetas == sorted(zetas, reverse=True)
    bounds = [row["bound"] for row in json.loads((out / "ghp.json").read_text())]
    assert len(bounds) == 4
    assert not (out / "kappa.json").exists()

    code, _, _ = _run(capsys, "limits", "--theta", "1", "--T", "2", "--out", str(tmp_path / "k"),
                      "--kappa-replicates", "300")
    kappa = json.loads((tmp_path / "k" / "kappa.json").read_text())
    assert code == 0 and kappa["drift_gap"] < 1e-9 and kappa["variance_gap"] < 1e-12
    assert max(kappa["ks"]) < 1.95 * (2 / 300) ** 0.5
