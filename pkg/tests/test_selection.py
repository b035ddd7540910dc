import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from belief_bench.belief import CorruptionSpec, build_candidates
from belief_bench.errors import InvalidModelError
from belief_bench.pomdp import Policy, random_pomdp
from belief_bench.scenarios import make_two_state_pomdp
from belief_bench.selection import (
    LATENT,
    OBSERVATION,
    DiscriminatorClass,
    SelectionConfig,
    accuracy_oracle,
    default_version_space_threshold,
    erm_losses,
    run_selection,
    train_pair_classifier,
)


def test_default_class_is_full_and_closed():
    p = random_pomdp(0, horizon=1, states=[3, 6], obs=[2, 5], actions=1)
    F = DiscriminatorClass.default(p, LATENT)
    assert len(F.layer("S0")) == 8
    assert len(F.layer("S1")) == 12  # singletons and complements
    G = DiscriminatorClass.default(p, OBSERVATION)
    assert len(G.layer("O1")) == 10
    rows = {r.tobytes() for r in F.layer("S1")}
    assert all((~r).tobytes() in rows for r in F.layer("S1"))


def test_erm_picks_lowest_index_tie():
    F = np.array([[True, False], [True, False], [False, True]])
    assert train_pair_classifier(F, [1, 1], [0, 0]) == 0
    assert train_pair_classifier(F, [0, 0], [1, 1]) == 2
    assert erm_losses(F, np.array([0, 2]), np.array([2, 0])).tolist() == [0, 0, 4]
    with pytest.raises(InvalidModelError):
        train_pair_classifier(F, [], [0])


def test_config_validation():
    with pytest.raises(InvalidModelError):
        SelectionConfig(0, 10, (0,))
    with pytest.raises(InvalidModelError):
        SelectionConfig(10, 10, ())
    with pytest.raises(InvalidModelError):
        SelectionConfig(10, 10, (0,), mode="psychic")


def test_single_candidate_is_chosen():
    p = make_two_state_pomdp()
    rep = run_selection(p, build_candidates(p, []), Policy.uniform(1), None, SelectionConfig(5, 5, (0,)))
    assert rep.chosen == 0 and rep.candidate_scores.tolist() == [0.0]


def test_selection_is_deterministic_and_reports():
    p = make_two_state_pomdp()
    cands = build_candidates(p, [CorruptionSpec("mix-with-uniform", lam=0.9)])
    cfg = SelectionConfig(60, 60, (1, 2), threshold=0.2, seed=3)
    a = run_selection(p, cands, Policy.uniform(1), None, cfg)
    b = run_selection(p, cands, Policy.uniform(1), None, cfg)
    assert a.to_dict() == b.to_dict()
    assert np.all(np.diag(a.pair_scores) == 0)
    assert a.version_space == [i for i in range(2) if a.candidate_scores[i] <= 0.2]
    assert a.to_csv().splitlines()[0] == "t,i,k,label_i,label_k,score"


def test_step_range_checked():
    p = make_two_state_pomdp()
    cands = build_candidates(p, [CorruptionSpec("always-state-zero")])
    with pytest.raises(InvalidModelError):
        run_selection(p, cands, Policy.uniform(1), None, SelectionConfig(5, 5, (p.horizon,), mode=OBSERVATION))


def test_threshold_formula():
    assert default_version_space_threshold(2, 400) == pytest.approx(np.sqrt(2 * np.log(16 / 0.05) / 400))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.05, 1.0), st.sampled_from([LATENT, OBSERVATION]))
def test_bayes_accuracy_identity(seed, lam, mode):
    p = random_pomdp(seed)
    pi = Policy.uniform(p.num_actions)
    exact, c = build_candidates(p, [CorruptionSpec("mix-with-uniform", lam=lam)])
    t = int(np.random.default_rng(seed).integers(0, p.horizon))
    size = p.state_sizes[t] if mode == LATENT else p.obs_sizes[t + 1]
    res = accuracy_oracle(p, exact, c, pi, np.zeros(size, dtype=bool), t, mode)
    assert 2 * (res.bayes_accuracy - 0.5) == pytest.approx(res.expected_tv, abs=1e-12)
    assert res.accuracy == pytest.approx(0.5, abs=1e-12)
    for f in DiscriminatorClass.default(p, mode).layer(f"S{t}" if mode == LATENT else f"O{t + 1}"):
        assert accuracy_oracle(p, exact, c, pi, f, t, mode).accuracy <= res.bayes_accuracy + 1e-12
