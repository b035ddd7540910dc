"""Command-line entry point.

Exit codes: 0 success, 2 invalid model or malformed config, 3 a bound check
whose outcome differs from its expectation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import harness
from .belief import build_candidates, has_exact
from .errors import BeliefBenchError, InvalidModelError
from .io import load_candidates, load_config, load_pomdp, policy_from_dict, resolve
from .pomdp import History
from .rollout import MODES, exact_repeated_reset_q, exact_single_reset_q, mc_q
from .scenarios import CATALOG, make_scenario
from .selection import SelectionConfig, run_selection
from .twostage import run_two_stage

EXIT_OK, EXIT_INVALID, EXIT_BOUND = 0, 2, 3
log = logging.getLogger("belief_bench")


def _emit(out_dir: Path, name: str, doc: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(harness._clean(doc), sort_keys=True, indent=2) + "\n")
    return path


def _candidates_for(cfg_path, cfg, pomdp):
    if "candidates_file" not in cfg:
        return build_candidates(pomdp, [])
    _, specs = load_candidates(resolve(cfg_path, cfg["candidates_file"]))
    include = specs[0] is None
    return build_candidates(pomdp, [s for s in specs if s is not None] if include else specs, include_exact=include)


def cmd_validate(args) -> int:
    pomdp = load_pomdp(args.pomdp)
    idx = pomdp.index
    print(
        f"ok: H={pomdp.horizon} |A|={pomdp.num_actions} S={list(pomdp.state_sizes)} "
        f"O={list(pomdp.obs_sizes)} histories={idx.total} (cap {idx.cap})"
    )
    return EXIT_OK


def _selection_config(cfg, pomdp):
    try:
        steps = cfg.get("t_steps", list(range(pomdp.horizon)))
        return SelectionConfig(
            int(cfg["n"]), int(cfg["N"]), tuple(steps), cfg.get("mode", "latent"), cfg.get("threshold"), int(cfg.get("seed", 0))
        )
    except KeyError as exc:
        raise InvalidModelError("missing field", exc.args[0]) from exc


def cmd_select(args) -> int:
    cfg = load_config(args.config)
    pomdp = load_pomdp(resolve(args.config, cfg["pomdp_file"]))
    cands = _candidates_for(args.config, cfg, pomdp)
    pi_b = policy_from_dict(cfg.get("policy"), pomdp)
    sel = _selection_config(cfg, pomdp)
    rep = run_selection(pomdp, cands, pi_b, None, sel)
    out = Path(args.out)
    _emit(out, "selection.json", rep.to_dict())
    (out / "selection.csv").write_text(rep.to_csv())
    print(f"chosen {rep.chosen} ({rep.labels[rep.chosen]}); scores {[round(float(x), 4) for x in rep.candidate_scores]}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    cfg = load_config(args.config)
    pomdp = load_pomdp(resolve(args.config, cfg["pomdp_file"]))
    cands = _candidates_for(args.config, cfg, pomdp)
    policy = policy_from_dict(cfg.get("policy"), pomdp)
    history = History.parse(str(cfg.get("history", "0")))
    action = int(cfg.get("action", 0))
    count = int(cfg.get("count", 10000))
    modes = cfg.get("modes", list(MODES))
    for m in modes:
        if m not in MODES:
            raise InvalidModelError(f"unknown mode {m!r}", "modes")
    seed = int(cfg.get("seed", 0))
    out = Path(args.out)
    rows = []
    for ci, c in enumerate(cands):
        for mi, mode in enumerate(modes):
            rng = np.random.default_rng([seed, ci, mi])
            est = mc_q(pomdp, c, history, action, policy, mode, count, rng)
            row = {"candidate": c.label, **est.to_dict()}
            if has_exact(c):
                q = (exact_single_reset_q if mode == "single-reset" else exact_repeated_reset_q)(pomdp, c, policy)
                row["exact"] = q.value(history, action)
                out.mkdir(parents=True, exist_ok=True)
                with open(out / f"q_{ci}_{mode}.csv", "w") as fh:
                    q.to_csv(fh)
            rows.append(row)
            print(f"{c.label:>32} {mode:>15}: {est.mean:.6f} +- {est.stderr:.6f}" + (f" (exact {row['exact']:.6f})" if "exact" in row else ""))
    _emit(out, "rollout.json", {"history": history.render(), "action": action, "count": count, "seed": seed, "estimates": rows})
    return EXIT_OK


def _run_one(name_seed):
    name, seed = name_seed
    return harness.run_scenario(make_scenario(name, seed), seed)


def cmd_scenario(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    tasks = [(args.name, s) for s in seeds]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    code = EXIT_OK
    for res in results:
        path = harness.write_result(res, args.out)
        bad = res.unexpected()
        print(f"{res.scenario} seed={res.seed}: {len(res.records)} checks, {len(bad)} unexpected -> {path}")
        for r in bad:
            print(f"  UNEXPECTED {r['name']} t={r['t']} [{r['label']}] lhs={r['lhs']} rhs={r['rhs']} pass={r['pass']}")
        if bad:
            code = EXIT_BOUND
    return code


def cmd_two_stage(args) -> int:
    cfg = load_config(args.config)
    if "scenario" in cfg:
        sc = make_scenario(cfg["scenario"], int(cfg.get("seed", 0)))
        res = harness.run_scenario(sc, int(cfg.get("seed", 0)))
    else:
        sims = [load_pomdp(resolve(args.config, p)) for p in cfg["simulator_files"]]
        real_index = int(cfg["real_index"])
        _, specs = load_candidates(resolve(args.config, cfg["candidates_file"]))
        pi_b = policy_from_dict(cfg.get("policy"), sims[real_index])
        sel = _selection_config({**cfg, "mode": "latent"}, sims[real_index])
        roll_in = policy_from_dict(cfg["roll_in_policy"], sims[real_index], "roll_in_policy") if "roll_in_policy" in cfg else None
        out = run_two_stage(sims, real_index, specs, pi_b, sel, n_real=cfg.get("n_real"), pi_roll_in=roll_in)
        res = harness.RunResult("two-stage", sel.seed, params={"config": str(args.config)})
        res.selections = {
            "stage1": [r.to_dict() for r in out.stage1],
            "stage2": out.stage2.to_dict(),
            "one_shot": out.one_shot.to_dict(),
        }
        res.values.update(out.values, selected=list(out.selected), realizable=out.realizable)
        for rec in out.records:
            res.add(rec, None if rec.name == "one-shot-single-reset" else True)
    path = harness.write_result(res, args.out)
    bad = res.unexpected()
    print(f"two-stage: selected {res.values['selected']}, {len(bad)} unexpected -> {path}")
    return EXIT_BOUND if bad else EXIT_OK


def cmd_report(args) -> int:
    counts: dict = {}
    bad = []
    with open(args.records) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidModelError(exc.msg, f"{args.records}:{n}:{exc.colno}") from exc
            c = counts.setdefault(rec["name"], [0, 0])
            c[0 if rec["pass"] else 1] += 1
            exp = rec.get("expect_pass")
            if exp is not None and rec["pass"] != exp:
                bad.append(rec)
    for name in sorted(counts):
        print(f"{name:>28}: {counts[name][0]} pass, {counts[name][1]} fail")
    for rec in bad:
        print(f"UNEXPECTED {rec.get('scenario')} seed={rec.get('seed')} {rec['name']} t={rec['t']} pass={rec['pass']}")
    return EXIT_BOUND if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="belief-bench", description=__doc__)
    ap.add_argument("--out", default="out", help="output root directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("validate", help="check a POMDP definition file")
    p.add_argument("pomdp")
    p.set_defaults(fn=cmd_validate)
    p = sub.add_parser("select", help="run a selection tournament from a config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_select)
    p = sub.add_parser("rollout", help="Monte-Carlo and exact roll-out values from a config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_rollout)
    p = sub.add_parser("scenario", help="run a catalog scenario")
    p.add_argument("name", choices=sorted(CATALOG))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", help="comma-separated seeds (overrides --seed)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_scenario)
    p = sub.add_parser("two-stage", help="simulator + belief selection from a config")
    p.add_argument("config")
    p.set_defaults(fn=cmd_two_stage)
    p = sub.add_parser("report", help="summarize a records.jsonl audit log")
    p.add_argument("records")
    p.set_defaults(fn=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (InvalidModelError, KeyError, ValueError, TypeError) as exc:
        msg = f"missing field {exc.args[0]!r}" if isinstance(exc, KeyError) else str(exc)
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except BeliefBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
