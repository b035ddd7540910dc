import json

import numpy as np
import pytest

from belief_bench.cli import main
from belief_bench.errors import InvalidModelError
from belief_bench.harness import run_scenario, strip_timing
from belief_bench.io import load_candidates, load_pomdp, pomdp_from_dict, pomdp_to_dict, spec_from_dict, spec_to_dict
from belief_bench.scenarios import CATALOG


def test_pomdp_json_roundtrip(small):
    p, _ = small
    q = pomdp_from_dict(json.loads(json.dumps(pomdp_to_dict(p))))
    for a, b in zip(p.transition, q.transition):
        np.testing.assert_array_equal(a, b)
    assert q.reward[1].tolist() == p.reward[1].tolist()


def test_loader_names_bad_field(small, tmp_path):
    p, _ = small
    doc = pomdp_to_dict(p)
    doc["emission"][1][0] = [0.9, 0.3]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(InvalidModelError) as ei:
        load_pomdp(path)
    assert ei.value.field == "emission[1]"
    del doc["horizon"]
    with pytest.raises(InvalidModelError) as ei:
        pomdp_from_dict(doc)
    assert ei.value.field == "horizon"


def test_spec_roundtrip():
    for doc in [{"mode": "exact"}, {"mode": "mix-with-uniform", "lam": 0.3, "steps": [1]}, {"mode": "swap-at-step", "t0": 1, "perm": [1, 0]}]:
        assert spec_to_dict(spec_from_dict(doc, "c")) == doc
    with pytest.raises(InvalidModelError):
        spec_from_dict({"mode": "mix-with-uniform", "lamda": 0.3}, "c")


def test_shipped_files_load(data_dir):
    for f in data_dir.glob("*.json"):
        doc = json.loads(f.read_text())
        if doc.get("schema") == "belief-bench-pomdp/1":
            load_pomdp(f)
        elif doc.get("schema") == "belief-bench-candidates/1":
            load_candidates(f)


def test_validate_exit_codes(data_dir, tmp_path, capsys):
    assert main(["validate", str(data_dir / "two_state.json")]) == 0
    bad = tmp_path / "x.json"
    bad.write_text('{"horizon": 1,\n')
    assert main(["validate", str(bad)]) == 2
    assert "x.json:2:1" in capsys.readouterr().err


def test_select_and_rollout(data_dir, tmp_path):
    out = tmp_path / "o"
    assert main(["--out", str(out), "select", str(data_dir / "select_latent.json")]) == 0
    rep = json.loads((out / "selection.json").read_text())
    assert rep["chosen"] == 0
    cfg = json.loads((data_dir / "rollout_example1.json").read_text())
    cfg.update(count=2000, pomdp_file=str(data_dir / cfg["pomdp_file"]), candidates_file=str(data_dir / cfg["candidates_file"]))
    (tmp_path / "r.json").write_text(json.dumps(cfg))
    assert main(["--out", str(out), "rollout", str(tmp_path / "r.json")]) == 0
    doc = json.loads((out / "rollout.json").read_text())
    for row in doc["estimates"]:
        assert abs(row["mean"] - row["exact"]) <= 4 * row["stderr"]


def test_scenario_and_report(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["--out", str(out), "scenario", "selection-observation", "--seed", "2"]) == 0
    assert main(["--out", str(out), "report", str(out / "records.jsonl")]) == 0
    assert "selects-exact" in capsys.readouterr().out


def test_report_flags_unexpected(tmp_path):
    rec = {"name": "x", "t": 0, "pass": False, "expect_pass": True}
    (tmp_path / "r.jsonl").write_text(json.dumps(rec) + "\n")
    assert main(["report", str(tmp_path / "r.jsonl")]) == 3


@pytest.mark.parametrize("name", sorted(CATALOG))
def test_catalog_runs_clean(name):
    res = run_scenario(name, 0)
    assert res.unexpected() == []
    doc = res.to_dict()
    assert "wall_clock_s" in doc and "wall_clock_s" not in strip_timing(doc)


def test_two_stage_roll_in_knob(data_dir, tmp_path):
    cfg = json.loads((data_dir / "two_stage.json").read_text())
    cfg["simulator_files"] = [str(data_dir / f) for f in cfg["simulator_files"]]
    cfg["candidates_file"] = str(data_dir / cfg["candidates_file"])
    cfg.update(n=60, N=60, roll_in_policy={"kind": "uniform"})
    (tmp_path / "ts.json").write_text(json.dumps(cfg))
    assert main(["--out", str(tmp_path / "o"), "two-stage", str(tmp_path / "ts.json")]) == 0
