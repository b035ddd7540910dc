"""Conditional selection by pairwise classifiers and a Scheffe-style tournament.

For each real pair ``(X_j, Y_j)`` and each unordered candidate pair ``{i, k}``
one classifier from a finite class ``F`` over the Y-domain is trained on
synthetic draws, then applied to the real ``Y_j`` and to a fresh holdout draw
from each candidate.  The selected candidate minimizes its worst-case
disagreement score.  Latent mode binds ``X = tau_t, Y = s_t``; observation mode
binds ``X = (tau_t, a_t), Y = o_{t+1}``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .belief import BeliefSampler, belief_tables
from .errors import InvalidModelError, LayerMismatchError
from .pomdp import History, Policy, Pomdp, TrajectoryBatch, occupancies, propagate_states, sample_trajectories

LATENT = "latent"
OBSERVATION = "observation"
TAG_TRAIN = 1
MAX_FULL_DOMAIN = 4


def _all_functions(size):
    bits = np.arange(2**size)[:, None]
    return ((bits >> np.arange(size)[None, :]) & 1).astype(bool)


def _singletons_and_complements(size):
    eye = np.eye(size, dtype=bool)
    return np.concatenate([eye, ~eye])


def _dedup(tables):
    seen, out = set(), []
    for row in tables:
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(row)
    return np.array(out, dtype=bool)


class DiscriminatorClass:
    """Finite binary classifiers per Y-domain, keyed by domain tag (``"S2"``, ``"O3"``, ...)."""

    def __init__(self, layers: dict, close_under_negation: bool = True):
        self.close_under_negation = close_under_negation
        self.layers = {}
        for tag, tables in layers.items():
            tables = np.atleast_2d(np.asarray(tables, dtype=bool))
            if close_under_negation:
                tables = np.concatenate([tables, ~tables])
            tables = _dedup(tables)
            if len(tables) == 0:
                raise InvalidModelError(f"empty discriminator layer {tag}")
            self.layers[tag] = tables

    @classmethod
    def default(cls, pomdp: Pomdp, mode: str) -> "DiscriminatorClass":
        """All ``2^|Y|`` functions for ``|Y| <= 4``, else singletons and complements."""
        sizes = pomdp.state_sizes if mode == LATENT else pomdp.obs_sizes
        prefix = "S" if mode == LATENT else "O"
        layers = {}
        for t, size in enumerate(sizes):
            layers[f"{prefix}{t}"] = _all_functions(size) if size <= MAX_FULL_DOMAIN else _singletons_and_complements(size)
        return cls(layers, close_under_negation=True)

    def layer(self, tag: str) -> np.ndarray:
        if tag not in self.layers:
            raise LayerMismatchError(f"discriminator class has no layer {tag}")
        return self.layers[tag]

    def __len__(self):
        return sum(len(v) for v in self.layers.values())


def y_domain(mode: str, t: int) -> str:
    return f"S{t}" if mode == LATENT else f"O{t + 1}"


def erm_losses(F: np.ndarray, counts_a: np.ndarray, counts_b: np.ndarray) -> np.ndarray:
    """0/1 error counts of every ``f`` with ``a``-samples labeled 0 and ``b``-samples labeled 1."""
    Fi = F.astype(np.int64)
    return Fi @ counts_a + (1 - Fi) @ counts_b


def train_pair_classifier(F: np.ndarray, samples_a, samples_b) -> int:
    """Index of the ERM classifier (lowest index among ties)."""
    F = np.asarray(F, dtype=bool)
    if F.ndim != 2 or len(F) == 0:
        raise InvalidModelError("empty discriminator layer")
    samples_a, samples_b = np.asarray(samples_a), np.asarray(samples_b)
    if samples_a.size == 0 or samples_b.size == 0:
        raise InvalidModelError("both sample lists must be nonempty")
    ca = np.bincount(samples_a, minlength=F.shape[1])
    cb = np.bincount(samples_b, minlength=F.shape[1])
    if len(ca) > F.shape[1] or len(cb) > F.shape[1]:
        raise LayerMismatchError("samples fall outside the discriminator domain")
    return int(np.argmin(erm_losses(F, ca, cb)))


@dataclass(frozen=True)
class SelectionConfig:
    n: int
    N: int
    t_steps: tuple
    mode: str = LATENT
    threshold: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise InvalidModelError("n and N must be at least 1", "n")
        if self.mode not in (LATENT, OBSERVATION):
            raise InvalidModelError(f"unknown mode {self.mode!r}", "mode")
        if self.threshold is not None and self.threshold < 0:
            raise InvalidModelError("threshold must be non-negative", "threshold")
        object.__setattr__(self, "t_steps", tuple(int(t) for t in self.t_steps))
        if not self.t_steps:
            raise InvalidModelError("t_steps must be nonempty", "t_steps")


@dataclass
class SelectionReport:
    """Tournament outcome.

    ``pair_scores[i, k]`` is the mean over ``t_steps`` of the per-step score of
    ``i`` against ``k`` (diagonal 0); ``candidate_scores[i]`` is its row maximum.
    """

    labels: list
    mode: str
    pair_scores: np.ndarray
    candidate_scores: np.ndarray
    chosen: int
    version_space: list | None
    per_step: dict
    threshold: float | None = None
    aggregation: str = "mean over t_steps, then max over k"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        m = len(self.labels)
        return {
            "mode": self.mode,
            "labels": list(self.labels),
            "aggregation": self.aggregation,
            "pair_scores": [[float(self.pair_scores[i, k]) for k in range(m)] for i in range(m)],
            "candidate_scores": [float(x) for x in self.candidate_scores],
            "chosen": int(self.chosen),
            "chosen_label": self.labels[self.chosen],
            "threshold": self.threshold,
            "version_space": None if self.version_space is None else [int(i) for i in self.version_space],
            "per_step": {
                str(t): [[float(x) for x in row] for row in mat] for t, mat in sorted(self.per_step.items())
            },
            **self.extra,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "i", "k", "label_i", "label_k", "score"])
        m = len(self.labels)
        for t, mat in sorted(self.per_step.items()):
            for i in range(m):
                for k in range(m):
                    if i != k:
                        w.writerow([t, i, k, self.labels[i], self.labels[k], repr(float(mat[i, k]))])
        for i in range(m):
            for k in range(m):
                if i != k:
                    w.writerow(["mean", i, k, self.labels[i], self.labels[k], repr(float(self.pair_scores[i, k]))])
        return buf.getvalue()


def task_rng(seed: int, tag: int, t: int, j: int, i: int) -> np.random.Generator:
    """Independent stream per (seed, tag, step, real pair, candidate); scheduling-invariant."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag, t, j, i]))


def tournament_step(F: np.ndarray, real_y: np.ndarray, draw, m: int, N: int, seed: int, t: int) -> np.ndarray:
    """Pair-score matrix for one step.

    ``draw(i, j, rng, size)`` samples from candidate ``i`` at ``X_j``.  Each
    candidate's per-``j`` stream yields ``N`` training draws, then one holdout.
    """
    n = len(real_y)
    size = F.shape[1]
    Fi = F.astype(np.int64)
    sum_real = np.zeros((m, m))
    sum_hold = np.zeros((m, m))
    iu, ku = np.triu_indices(m, k=1)
    for j in range(n):
        counts = np.zeros((m, size), dtype=np.int64)
        hold = np.zeros(m, dtype=np.int64)
        for i in range(m):
            rng = task_rng(seed, TAG_TRAIN, t, j, i)
            ys = np.asarray(draw(i, j, rng, N + 1), dtype=np.int64)
            counts[i] = np.bincount(ys[:N], minlength=size)
            hold[i] = ys[N]
        fa = counts @ Fi.T  # f == 1 on class-0 samples
        fb = counts @ (1 - Fi).T  # f == 0 on class-1 samples
        loss = fa[iu] + fb[ku]
        f_idx = np.argmin(loss, axis=1)
        on_real = F[f_idx, real_y[j]]
        sum_real[iu, ku] += on_real
        sum_real[ku, iu] += on_real
        sum_hold[iu, ku] += F[f_idx, hold[iu]]
        sum_hold[ku, iu] += F[f_idx, hold[ku]]
    return np.abs(sum_real - sum_hold) / n


def finish_report(labels, mode, per_step, threshold, extra=None) -> SelectionReport:
    m = len(labels)
    mats = [per_step[t] for t in sorted(per_step)]
    pair = np.mean(mats, axis=0) if mats else np.zeros((m, m))
    cand = pair.max(axis=1) if m > 1 else np.zeros(m)
    chosen = int(np.argmin(cand))
    vs = None if threshold is None else [i for i in range(m) if cand[i] <= threshold]
    return SelectionReport(list(labels), mode, pair, cand, chosen, vs, per_step, threshold, extra=extra or {})


class ObservableSampler:
    """Sampling access to ``M_{Gamma,b}(. | tau_t, a_t)`` through ``s ~ b, s' ~ P, o ~ E``."""

    def __init__(self, pomdp: Pomdp, b: BeliefSampler, label: str | None = None):
        self.pomdp = pomdp
        self.b = b
        self.label = label or b.label

    def sample(self, history: History, action: int, rng, size=1) -> np.ndarray:
        states = np.atleast_1d(self.b.sample(history, rng, size))
        u = rng.random((2, len(states)))
        return propagate_states(self.pomdp, history.t, states, action, u[0], u[1])[1]


def _labels(cands):
    return [getattr(c, "label", str(i)) for i, c in enumerate(cands)]


def run_selection(
    pomdp: Pomdp,
    candidates: Sequence,
    pi_b: Policy,
    F: DiscriminatorClass | None,
    cfg: SelectionConfig,
    real: TrajectoryBatch | None = None,
) -> SelectionReport:
    """Tournament over ``candidates`` on ``n`` real trajectories drawn from ``pomdp`` under ``pi_b``.

    In observation mode candidates may be :class:`BeliefSampler` (paired with
    ``pomdp``) or :class:`ObservableSampler` (carrying their own simulator).
    ``real`` supplies pre-drawn traces; latent mode needs their latent column.
    """
    m = len(candidates)
    if m == 0:
        raise InvalidModelError("candidate set is empty", "candidates")
    for t in cfg.t_steps:
        limit = pomdp.horizon if cfg.mode == LATENT else pomdp.horizon - 1
        if not 0 <= t <= limit:
            raise InvalidModelError(f"step {t} outside 0..{limit} for {cfg.mode} mode", "t_steps")
    F = F or DiscriminatorClass.default(pomdp, cfg.mode)
    labels = _labels(candidates)
    if m == 1:
        return finish_report(labels, cfg.mode, {t: np.zeros((1, 1)) for t in cfg.t_steps}, cfg.threshold)
    if real is None:
        real = sample_trajectories(pomdp, pi_b, cfg.n, task_rng(cfg.seed, 0, 0, 0, 0))
    if len(real) < cfg.n:
        raise InvalidModelError(f"need {cfg.n} real traces, got {len(real)}", "n")
    if cfg.mode == OBSERVATION:
        cands = [c if isinstance(c, ObservableSampler) else ObservableSampler(pomdp, c) for c in candidates]
    else:
        cands = list(candidates)
    per_step = {}
    for t in cfg.t_steps:
        hists = [real.history(j, t) for j in range(cfg.n)]
        if cfg.mode == LATENT:
            real_y = real.latent[: cfg.n, t]
            if np.any(real_y < 0):
                raise InvalidModelError("latent-mode selection needs traces with latent states", "real")

            def draw(i, j, rng, size, hists=hists):
                return cands[i].sample(hists[j], rng, size)

        else:
            real_y = real.obs[: cfg.n, t + 1]
            acts = real.acts[: cfg.n, t]

            def draw(i, j, rng, size, hists=hists, acts=acts):
                return cands[i].sample(hists[j], int(acts[j]), rng, size)

        Fl = F.layer(y_domain(cfg.mode, t))
        per_step[t] = tournament_step(Fl, np.asarray(real_y, dtype=np.int64), draw, m, cfg.N, cfg.seed, t)
    return finish_report(labels, cfg.mode, per_step, cfg.threshold)


def default_version_space_threshold(m: int, n: int, delta: float = 0.05) -> float:
    """Concentration width used when no threshold is configured: ``sqrt(2 log(4 m^2 / delta) / n)``."""
    return math.sqrt(2.0 * math.log(4.0 * m * m / delta) / n)


# --- oracle ---------------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyResult:
    accuracy: float
    bayes_accuracy: float
    expected_tv: float


def conditional_tables(pomdp: Pomdp, b: BeliefSampler, mode: str, t: int) -> np.ndarray:
    """Exact ``P_b(Y | X)`` rows for every X at step ``t`` (oracle-only)."""
    tab = belief_tables(b)[t]
    if mode == LATENT:
        return tab
    return np.einsum("hs,sao->hao", tab, pomdp.obs_kernel[t])


def accuracy_oracle(pomdp, candidate_i, candidate_k, pi_b, f, t, mode: str = LATENT) -> AccuracyResult:
    """``E_X acc_X(f)`` with ``candidate_k`` labeled 1 and ``candidate_i`` labeled 0.

    ``f`` is a boolean table over the Y-domain.  Also returns the Bayes-optimal
    accuracy (``f*(y) = 1[P_k(y|x) > P_i(y|x)]`` per X) and ``E_X TV(P_i, P_k)``;
    X is distributed as under the true system with behavior policy ``pi_b``.
    """
    Pi = conditional_tables(pomdp, candidate_i, mode, t)
    Pk = conditional_tables(pomdp, candidate_k, mode, t)
    w = occupancies(pomdp, pi_b, t)[t]
    if mode == OBSERVATION:
        w = w[:, None] * pi_b.layer_table(pomdp.index, t)
        Pi, Pk = Pi.reshape(-1, Pi.shape[-1]), Pk.reshape(-1, Pk.shape[-1])
        w = w.reshape(-1)
    live = w > 0
    w, Pi, Pk = w[live], Pi[live], Pk[live]
    f = np.asarray(f, dtype=float)
    acc = 0.5 * (Pk @ f) + 0.5 * (Pi @ (1.0 - f))
    bayes = (Pk > Pi).astype(float)
    acc_b = 0.5 * (Pk * bayes).sum(axis=1) + 0.5 * (Pi * (1.0 - bayes)).sum(axis=1)
    tvs = 0.5 * np.abs(Pi - Pk).sum(axis=1)
    return AccuracyResult(float(w @ acc), float(w @ acc_b), float(w @ tvs))
