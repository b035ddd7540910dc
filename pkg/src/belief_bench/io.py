"""JSON documents: POMDP definitions, policies, candidate sets and run configs.

Every loader raises :class:`InvalidModelError` whose ``field`` names the
offending path (``transition[1][0][2]``) or the JSON line/column.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .belief import CorruptionSpec
from .errors import InvalidModelError
from .pomdp import History, Policy, Pomdp, random_policy

POMDP_SCHEMA = "belief-bench-pomdp/1"
CANDIDATES_SCHEMA = "belief-bench-candidates/1"


def read_json(path) -> object:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidModelError(str(exc), str(path)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidModelError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from exc


def _req(doc, key, where=""):
    if not isinstance(doc, dict):
        raise InvalidModelError("expected an object", where or "<root>")
    if key not in doc:
        raise InvalidModelError("missing field", f"{where}.{key}" if where else key)
    return doc[key]


def _array(value, where, ndim):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InvalidModelError("ragged or non-numeric array", where) from exc
    if arr.ndim != ndim:
        raise InvalidModelError(f"expected a {ndim}-d array, got {arr.ndim}-d", where)
    return arr


def pomdp_from_dict(doc: dict) -> Pomdp:
    schema = doc.get("schema") if isinstance(doc, dict) else None
    if schema not in (None, POMDP_SCHEMA):
        raise InvalidModelError(f"unsupported schema {schema!r}", "schema")
    H = _req(doc, "horizon")
    if not isinstance(H, int) or H < 1:
        raise InvalidModelError("must be a positive integer", "horizon")
    S = _req(doc, "states_per_layer")
    O = _req(doc, "obs_per_layer")
    A = _req(doc, "num_actions")
    if not isinstance(S, list) or len(S) != H + 1:
        raise InvalidModelError(f"expected {H + 1} sizes", "states_per_layer")
    if not isinstance(O, list) or len(O) != H + 1:
        raise InvalidModelError(f"expected {H + 1} sizes", "obs_per_layer")
    if not isinstance(A, int) or A < 1:
        raise InvalidModelError("must be a positive integer", "num_actions")
    init = _array(_req(doc, "init"), "init", 1)
    trans_doc, emis_doc, rew_doc = _req(doc, "transition"), _req(doc, "emission"), _req(doc, "reward")
    if not isinstance(trans_doc, list) or len(trans_doc) != H:
        raise InvalidModelError(f"expected {H} layers", "transition")
    if not isinstance(emis_doc, list) or len(emis_doc) != H + 1:
        raise InvalidModelError(f"expected {H + 1} layers", "emission")
    if not isinstance(rew_doc, list) or len(rew_doc) != H:
        raise InvalidModelError(f"expected {H} layers (reward[k] covers O_(k+1))", "reward")
    trans, emis, rew = [], [], []
    for t in range(H):
        P = _array(trans_doc[t], f"transition[{t}]", 3)
        if P.shape != (S[t], A, S[t + 1]):
            raise InvalidModelError(f"expected shape {(S[t], A, S[t + 1])}, got {P.shape}", f"transition[{t}]")
        trans.append(P)
        R = _array(rew_doc[t], f"reward[{t}]", 1)
        if R.shape != (O[t + 1],):
            raise InvalidModelError(f"expected {O[t + 1]} values", f"reward[{t}]")
        rew.append(R)
    for t in range(H + 1):
        E = _array(emis_doc[t], f"emission[{t}]", 2)
        if E.shape != (S[t], O[t]):
            raise InvalidModelError(f"expected shape {(S[t], O[t])}, got {E.shape}", f"emission[{t}]")
        emis.append(E)
    if init.shape != (S[0],):
        raise InvalidModelError(f"expected {S[0]} entries", "init")
    return Pomdp(init, tuple(trans), tuple(emis), tuple(rew), _req(doc, "r_max"), name=str(doc.get("name", "")))


def pomdp_to_dict(pomdp: Pomdp) -> dict:
    return {
        "schema": POMDP_SCHEMA,
        "name": pomdp.name,
        "horizon": pomdp.horizon,
        "states_per_layer": list(pomdp.state_sizes),
        "obs_per_layer": list(pomdp.obs_sizes),
        "num_actions": pomdp.num_actions,
        "init": pomdp.init.tolist(),
        "transition": [P.tolist() for P in pomdp.transition],
        "emission": [E.tolist() for E in pomdp.emission],
        "reward": [R.tolist() for R in pomdp.reward[1:]],
        "r_max": pomdp.r_max,
    }


def load_pomdp(path) -> Pomdp:
    return pomdp_from_dict(read_json(path))


def save_pomdp(pomdp: Pomdp, path) -> None:
    Path(path).write_text(json.dumps(pomdp_to_dict(pomdp), indent=1) + "\n")


def policy_from_dict(doc, pomdp: Pomdp, where: str = "policy") -> Policy:
    """``{"kind": "uniform" | "observation-markov" | "history-tabular" | "random", ...}``."""
    if doc is None:
        return Policy.uniform(pomdp.num_actions)
    kind = _req(doc, "kind", where)
    if kind in ("uniform", "uniform-random"):
        return Policy.uniform(pomdp.num_actions)
    if kind == "observation-markov":
        tables = _req(doc, "tables", where)
        return Policy.observation_markov([_array(tb, f"{where}.tables[{t}]", 2) for t, tb in enumerate(tables)])
    if kind == "history-tabular":
        entries = {}
        for key, row in _req(doc, "entries", where).items():
            try:
                entries[History.parse(key)] = row
            except ValueError as exc:
                raise InvalidModelError(f"bad history key {key!r}", f"{where}.entries") from exc
        return Policy.history_tabular(entries, _req(doc, "default", where))
    if kind == "random":
        return random_policy(pomdp, doc.get("seed", 0), doc.get("style", "observation-markov"))
    raise InvalidModelError(f"unknown policy kind {kind!r}", f"{where}.kind")


def spec_from_dict(doc, where: str) -> CorruptionSpec | None:
    mode = _req(doc, "mode", where)
    if mode == "exact":
        return None
    keys = {"lam", "state", "rule", "t0", "perm", "seed", "weight", "steps", "name"}
    unknown = set(doc) - keys - {"mode"}
    if unknown:
        raise InvalidModelError(f"unknown keys {sorted(unknown)}", where)
    kwargs = {k: doc[k] for k in keys if k in doc}
    if "steps" in kwargs and kwargs["steps"] is not None:
        kwargs["steps"] = frozenset(kwargs["steps"])
    if "perm" in kwargs:
        kwargs["perm"] = tuple(kwargs["perm"])
    try:
        return CorruptionSpec(mode, **kwargs)
    except InvalidModelError as exc:
        raise InvalidModelError(str(exc), where) from exc


def spec_to_dict(spec: CorruptionSpec | None) -> dict:
    if spec is None:
        return {"mode": "exact"}
    out = {"mode": spec.mode}
    for key in ("lam", "state", "rule", "t0", "perm", "seed", "weight", "name"):
        val = getattr(spec, key)
        default = CorruptionSpec.__dataclass_fields__[key].default
        if val is not None and val != default:
            out[key] = list(val) if isinstance(val, tuple) else val
    if spec.steps is not None and spec.mode != "swap-at-step":
        out["steps"] = sorted(spec.steps)
    return out


def load_candidates(path):
    """Returns ``(pomdp or None, specs)``; a referenced POMDP path is resolved next to the file."""
    doc = read_json(path)
    pomdp = None
    if isinstance(doc, dict):
        if doc.get("schema") not in (None, CANDIDATES_SCHEMA):
            raise InvalidModelError(f"unsupported schema {doc.get('schema')!r}", "schema")
        if "pomdp" in doc:
            pomdp = load_pomdp(resolve(path, doc["pomdp"]))
        items = _req(doc, "candidates")
    else:
        items = doc
    if not isinstance(items, list) or not items:
        raise InvalidModelError("expected a nonempty list", "candidates")
    return pomdp, [spec_from_dict(item, f"candidates[{i}]") for i, item in enumerate(items)]


def resolve(base, rel) -> Path:
    rel = Path(rel)
    return rel if rel.is_absolute() else Path(base).parent / rel


def load_config(path) -> dict:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise InvalidModelError("config must be an object", "<root>")
    return doc
