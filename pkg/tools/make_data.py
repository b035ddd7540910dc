"""Regenerate the JSON examples shipped in src/belief_bench/data."""
import json
from pathlib import Path

from belief_bench.io import save_pomdp, spec_to_dict
from belief_bench.scenarios import make_example1_scenario, make_queue_scenario, make_two_stage_scenario, make_two_state_pomdp

DATA = Path(__file__).resolve().parents[1] / "src" / "belief_bench" / "data"


def dump(name, doc):
    (DATA / name).write_text(json.dumps(doc, indent=1) + "\n")


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    save_pomdp(make_two_state_pomdp(), DATA / "two_state.json")
    save_pomdp(make_queue_scenario().pomdp, DATA / "queue.json")
    ex = make_example1_scenario()
    save_pomdp(ex.pomdp, DATA / "example1.json")
    dump("example1_candidates.json", {"schema": "belief-bench-candidates/1", "pomdp": "example1.json",
                                      "candidates": [spec_to_dict(s) for s in ex.candidate_specs]})
    dump("two_state_candidates.json", {"schema": "belief-bench-candidates/1", "pomdp": "two_state.json",
                                       "candidates": [{"mode": "exact"}, {"mode": "mix-with-uniform", "lam": 0.9}]})
    dump("select_latent.json", {"pomdp_file": "two_state.json", "candidates_file": "two_state_candidates.json",
                                "policy": {"kind": "uniform"}, "mode": "latent", "n": 400, "N": 400,
                                "t_steps": [1, 2], "threshold": 0.1, "seed": 0})
    dump("rollout_example1.json", {"pomdp_file": "example1.json", "candidates_file": "example1_candidates.json",
                                   "policy": {"kind": "random", "seed": [0, 2]}, "history": "0-0-1",
                                   "action": 1, "count": 100000, "seed": 0})
    ts = make_two_stage_scenario()
    for k, sim in enumerate(ts.simulators):
        save_pomdp(sim, DATA / f"two_stage_sim{k}.json")
    dump("two_stage_candidates.json", {"schema": "belief-bench-candidates/1",
                                       "candidates": [spec_to_dict(s) for s in ts.candidate_specs]})
    dump("two_stage.json", {"simulator_files": [f"two_stage_sim{k}.json" for k in range(len(ts.simulators))],
                            "real_index": ts.real_index, "candidates_file": "two_stage_candidates.json",
                            "policy": {"kind": "random", "seed": [0, 2]}, "n": 400, "N": 400,
                            "t_steps": list(range(ts.pomdp.horizon)), "seed": 0})
    dump("two_stage_scenario.json", {"scenario": "two-stage", "seed": 0})


if __name__ == "__main__":
    main()
