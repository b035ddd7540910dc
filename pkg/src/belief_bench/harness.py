"""Scenario runners and result emission.

A run produces a :class:`RunResult` whose JSON form is deterministic given the
scenario and seed: keys are sorted, floats are written with ``repr`` and the
only timing field is ``wall_clock_s``.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .belief import build_candidates
from .metrics import (
    BOUND_TOL,
    BoundCheckRecord,
    BoundInstance,
    check_all,
    expected_abs_diff,
    expected_belief_tv,
    expected_observable_tv,
)
from .pomdp import exact_q
from .rollout import REPEATED, SINGLE, continuation_law, exact_repeated_reset_q, exact_single_reset_q
from .scenarios import OBS_X, Scenario, make_scenario, renewal_law, renewal_law_from_gap
from .selection import LATENT, OBSERVATION, run_selection
from .twostage import run_two_stage

TIMING_KEYS = ("wall_clock_s",)
LAW_TOL = 1e-12


@dataclass
class RunResult:
    scenario: str
    seed: int
    params: dict = field(default_factory=dict)
    selections: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    q_tables: dict = field(default_factory=dict)
    csv: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0

    def add(self, record: BoundCheckRecord, expect_pass=True) -> None:
        doc = record.to_dict()
        doc["expect_pass"] = expect_pass
        self.records.append(doc)

    def flag(self, name: str, lhs: float, rhs: float, expect_pass=True, label: str = "", **details) -> None:
        """Record a qualitative check phrased as ``lhs <= rhs``."""
        slack = rhs - lhs
        self.add(BoundCheckRecord(name, None, float(lhs), float(rhs), float(slack), bool(slack >= 0), details, label), expect_pass)

    def unexpected(self) -> list:
        return [r for r in self.records if r["expect_pass"] is not None and r["pass"] != r["expect_pass"]]

    def to_dict(self, timing: bool = True) -> dict:
        doc = {
            "scenario": self.scenario,
            "seed": self.seed,
            "params": self.params,
            "selections": self.selections,
            "values": self.values,
            "records": self.records,
        }
        if timing:
            doc["wall_clock_s"] = self.wall_clock_s
        return doc

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(_clean(self.to_dict(timing)), sort_keys=True, indent=2) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def strip_timing(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k not in TIMING_KEYS}


# --- shared pieces ----------------------------------------------------------------------

STANDARD_BOUNDS = ("single-reset", "single-reset-pointwise", "repeated-reset", "data-processing")
COVERAGE_BOUNDS = ("coverage-single-reset", "coverage-repeated-reset", "coverage-sufficient-stat")


def bound_suite(sc: Scenario, cands, result: RunResult) -> None:
    names = STANDARD_BOUNDS + (COVERAGE_BOUNDS if sc.pi_prime is not None else ())
    for c in cands:
        inst = BoundInstance(sc.pomdp, c, sc.pi_b, policy=sc.policy, pi_prime=sc.pi_prime, label=c.label)
        for rec in check_all(names, inst):
            result.add(rec)


def pairing_matrix(pomdp, cands, pi_b) -> dict:
    """Whether each (selection mode, roll-out) pairing keeps its guarantee for every candidate.

    A selection mode certifies a candidate with ``eps`` = its worst expected TV
    in that mode's sense.  Single-Reset must then satisfy ``err_t <= eps V_max``
    and Repeated-Reset ``err_t <= eps (H - t) V_max`` at every step.
    """
    H, vmax = pomdp.horizon, pomdp.v_max
    q = exact_q(pomdp, pi_b)
    out = {}
    for c in cands:
        eps = {
            LATENT: max(expected_belief_tv(pomdp, c, pi_b, t) for t in range(H)),
            OBSERVATION: max(expected_observable_tv(pomdp, c, pi_b, t) for t in range(H)),
        }
        errs = {
            SINGLE: [expected_abs_diff(pomdp, exact_single_reset_q(pomdp, c, pi_b), q, pi_b, t) for t in range(H)],
            REPEATED: [expected_abs_diff(pomdp, exact_repeated_reset_q(pomdp, c, pi_b), q, pi_b, t) for t in range(H)],
        }
        for mode in (LATENT, OBSERVATION):
            for ro in (SINGLE, REPEATED):
                slack = min(
                    eps[mode] * (vmax if ro == SINGLE else (H - t) * vmax) - errs[ro][t] for t in range(H)
                )
                key = (mode, ro)
                prev = out.get(key)
                if prev is None or slack < prev["slack"]:
                    out[key] = {"slack": slack, "candidate": c.label, "eps": eps[mode]}
    for v in out.values():
        v["pass"] = v["slack"] >= -BOUND_TOL
    return out


def _selection_doc(report):
    return report.to_dict()


# --- scenario kinds -----------------------------------------------------------------------


def _run_queue(sc: Scenario, seed: int, result: RunResult) -> None:
    p = sc.pomdp
    cands = build_candidates(p, sc.candidate_specs[1:])
    zero = cands[1]
    D = np.asarray(sc.params["interval_dist"])
    root, a = sc.roots[0]
    L = p.horizon - root.t
    last_x = max(k for k, o in enumerate(root.obs) if o == OBS_X)
    refs = {
        "true": renewal_law(D, root.t - last_x, L),
        SINGLE: renewal_law_from_gap(D, [0.0, 1.0], L),
        REPEATED: {(OBS_X,) * L: 1.0},
    }
    names = {"true": "queue-law-real", SINGLE: "queue-law-single-reset", REPEATED: "queue-law-repeated-reset"}
    for mode, ref in refs.items():
        law = {k[0]: v for k, v in continuation_law(p, zero, root, a, sc.policy, mode).suffixes(p.index).items()}
        keys = set(law) | set(ref)
        dist = 0.5 * sum(abs(law.get(k, 0.0) - ref.get(k, 0.0)) for k in keys)
        result.flag(names[mode], dist, LAW_TOL, label=zero.label, support=len(law))
        top = max(law.items(), key=lambda kv: (kv[1], kv[0]))
        result.values[f"{names[mode]}-mode-trace"] = "".join("X" if o == OBS_X else "O" for o in top[0])
    qr = exact_repeated_reset_q(p, zero, sc.policy)
    result.values["repeated_reset_q_at_root"] = qr.value(root, a)
    result.values["single_reset_q_at_root"] = exact_single_reset_q(p, zero, sc.policy).value(root, a)
    result.values["true_q_at_root"] = exact_q(p, sc.policy).value(root, a)
    result.flag("queue-repeated-reset-value", abs(qr.value(root, a) - L * p.r_max), 1e-10, label=zero.label)
    result.q_tables["repeated_reset"] = qr
    bound_suite(sc, cands, result)


def _run_example1(sc: Scenario, seed: int, result: RunResult) -> None:
    p = sc.pomdp
    cands = build_candidates(p, sc.candidate_specs[1:])
    bad = cands[1]
    H, t0 = p.horizon, sc.params["t0"]
    obs_tv = [expected_observable_tv(p, bad, sc.pi_b, t) for t in range(H)]
    bel_tv = [expected_belief_tv(p, bad, sc.pi_b, t) for t in range(H + 1)]
    q = exact_q(p, sc.pi_b)
    q1 = exact_single_reset_q(p, bad, sc.pi_b)
    qr = exact_repeated_reset_q(p, bad, sc.pi_b)
    sr_err = [expected_abs_diff(p, q1, q, sc.pi_b, t) for t in range(H)]
    rr_err = [expected_abs_diff(p, qr, q, sc.pi_b, t) for t in range(H)]
    result.values.update(
        observable_tv=obs_tv, belief_tv=bel_tv, single_reset_error=sr_err, repeated_reset_error=rr_err
    )
    result.flag("example1-observable-blind", max(obs_tv), 1e-12, label=bad.label)
    result.flag("example1-single-reset-error", -sr_err[t0 - 1], 0.0, label=bad.label, t=t0 - 1)
    result.flag("example1-repeated-reset-exact", max(rr_err), 1e-10, label=bad.label)
    matrix = pairing_matrix(p, cands, sc.pi_b)
    for (mode, ro), v in matrix.items():
        name = f"pairing-{mode}-{ro}"
        rec = BoundCheckRecord(name, None, -v["slack"], 0.0, v["slack"], v["pass"], {"eps": v["eps"]}, v["candidate"])
        result.add(rec, sc.expected.get(name, True))
    for mode, cfg in sc.selection.items():
        rep = run_selection(p, cands, sc.pi_b, None, cfg)
        result.selections[mode] = _selection_doc(rep)
        result.csv[f"selection_{mode}"] = rep.to_csv()
    result.q_tables["single_reset"] = q1
    result.q_tables["exact"] = q
    bound_suite(sc, cands, result)


def _run_selection(sc: Scenario, seed: int, result: RunResult) -> None:
    p = sc.pomdp
    cands = build_candidates(p, sc.candidate_specs[1:])
    for mode, cfg in sc.selection.items():
        steps = cfg.t_steps
        gap = [
            expected_belief_tv(p, cands[1], sc.pi_b, t) if mode == LATENT else expected_observable_tv(p, cands[1], sc.pi_b, t)
            for t in steps
        ]
        result.values[f"{mode}_gap"] = gap
        rep = run_selection(p, cands, sc.pi_b, None, cfg)
        result.selections[mode] = _selection_doc(rep)
        result.csv[f"selection_{mode}"] = rep.to_csv()
        result.flag("selects-exact", float(rep.chosen != 0), 0.0, expect_pass=None, label=rep.labels[rep.chosen])


def _run_two_stage(sc: Scenario, seed: int, result: RunResult) -> None:
    cfg = sc.selection["config"]
    out = run_two_stage(sc.simulators, sc.real_index, sc.candidate_specs, sc.pi_b, cfg, pi_prime=sc.pi_prime)
    result.selections["stage1"] = [rep.to_dict() for rep in out.stage1]
    result.selections["stage2"] = out.stage2.to_dict()
    result.selections["one_shot"] = out.one_shot.to_dict()
    result.values.update(out.values)
    result.values["selected"] = list(out.selected)
    result.values["one_shot_selected"] = list(out.one_shot_selected)
    result.values["realizable"] = out.realizable
    result.values["version_space_mode"] = out.version_space_mode
    result.values["intersection"] = out.intersection
    t_fail = sc.params["t0"] - 1 if "t0" in sc.params else None
    for rec in out.records:
        expect = sc.expected.get(rec.name, True)
        if rec.name == "one-shot-single-reset":
            expect = False if (expect is False and rec.t == t_fail) else None
        result.add(rec, expect)
    result.csv["stage2"] = out.stage2.to_csv()
    result.csv["one_shot"] = out.one_shot.to_csv()


RUNNERS = {"queue": _run_queue, "example1": _run_example1, "selection": _run_selection, "two-stage": _run_two_stage}


def run_scenario(sc: Scenario | str, seed: int = 0) -> RunResult:
    if isinstance(sc, str):
        sc = make_scenario(sc, seed)
    start = time.perf_counter()
    result = RunResult(sc.name, int(seed), params=dict(sc.params))
    RUNNERS[sc.kind](sc, seed, result)
    result.wall_clock_s = time.perf_counter() - start
    return result


def write_result(result: RunResult, out_dir) -> Path:
    """Write ``result.json``, per-table CSVs, and append records to ``records.jsonl``."""
    out = Path(out_dir) / f"{result.scenario}-seed{result.seed}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(result.to_json())
    for name, text in result.csv.items():
        (out / f"{name}.csv").write_text(text)
    for name, q in result.q_tables.items():
        with open(out / f"q_{name}.csv", "w") as fh:
            q.to_csv(fh)
    append_records(Path(out_dir) / "records.jsonl", result)
    return out


def append_records(path, result: RunResult) -> None:
    with open(path, "a") as fh:
        for rec in result.records:
            line = dict(rec, scenario=result.scenario, seed=result.seed)
            fh.write(json.dumps(_clean(line), sort_keys=True) + "\n")
