import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from belief_bench.belief import (
    belief_table,
    CorruptionSpec,
    FunctionBelief,
    build_candidates,
    exact_dist,
    make_exact_belief,
)
from belief_bench.errors import InvalidModelError, LayerMismatchError, MissingExactDistError
from belief_bench.pomdp import History, random_pomdp
from belief_bench.scenarios import make_queue_scenario


def test_exact_belief_table(small):
    p, _ = small
    b = make_exact_belief(p)
    h = History((1, 0, 1), (0, 1))
    np.testing.assert_allclose(exact_dist(b, h).probs, p.filtered.belief[2][p.index.index(h)])


def test_sample_frequencies(small):
    p, _ = small
    b = make_exact_belief(p)
    h = History((0, 1), (1,))
    draws = b.sample(h, np.random.default_rng(0), size=50000)
    freq = np.bincount(draws, minlength=p.state_sizes[1]) / 50000
    target = exact_dist(b, h).probs
    assert np.all(np.abs(freq - target) <= 4 * np.sqrt(target * (1 - target) / 50000) + 1e-12)
    assert isinstance(b.sample(h, np.random.default_rng(0)), int)


def test_mix_with_uniform(small):
    p, _ = small
    _, c = build_candidates(p, [CorruptionSpec("mix-with-uniform", lam=0.5)])
    h = History((0,))
    np.testing.assert_allclose(exact_dist(c, h).probs, 0.5 * exact_dist(make_exact_belief(p), h).probs + 0.5 / 3)
    assert c.label == "mix-with-uniform(0.5)"


def test_swap_only_at_t0(small):
    p, _ = small
    exact, c = build_candidates(p, [CorruptionSpec("swap-at-step", t0=1, perm=(2, 0, 1))])
    h0, h1 = History((0,)), History((0, 1), (0,))
    np.testing.assert_array_equal(exact_dist(c, h0).probs, exact_dist(exact, h0).probs)
    np.testing.assert_allclose(exact_dist(c, h1).probs, exact_dist(exact, h1).probs[[2, 0, 1]])


def test_point_mass_and_steps(small):
    p, _ = small
    _, c = build_candidates(p, [CorruptionSpec("point-mass-at", state=1, steps=[2])])
    h = History((0, 1, 1), (0, 0))
    assert exact_dist(c, h).probs.tolist() == [0.0, 1.0, 0.0]
    assert c.label == "point-mass-at(1)@2"


def test_queue_countdown_rule():
    sc = make_queue_scenario()
    p = sc.pomdp
    _, zero = build_candidates(p, sc.candidate_specs[1:])
    K = p.state_sizes[0] // 2
    assert exact_dist(zero, History((1, 1), (0,))).probs[K] == 1.0
    assert exact_dist(zero, History((1, 0), (0,))).probs[0] == 1.0


def test_random_dirichlet_is_seeded(small):
    p, _ = small
    spec = CorruptionSpec("random-dirichlet", seed=4, weight=0.7)
    a = build_candidates(p, [spec])[1]
    b = build_candidates(p, [spec])[1]
    h = History((1, 1), (1,))
    np.testing.assert_array_equal(exact_dist(a, h).probs, exact_dist(b, h).probs)


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"mode": "mix-with-uniform", "lam": 1.5}, "lam"),
        ({"mode": "bogus"}, "mode"),
        ({"mode": "swap-at-step", "t0": 1, "perm": (0, 0, 1)}, "perm"),
        ({"mode": "point-mass-at"}, "state"),
        ({"mode": "point-mass-at", "rule": "nope"}, "rule"),
    ],
)
def test_spec_validation(kwargs, field):
    with pytest.raises(InvalidModelError) as ei:
        CorruptionSpec(**kwargs)
    assert ei.value.field == field


def test_function_belief_has_no_exact_dist(small):
    p, _ = small
    fb = FunctionBelief(lambda h, rng, size: np.zeros(size, dtype=int), "zeros", pomdp=p)
    assert fb.sample(History((0,)), np.random.default_rng(0)) == 0
    with pytest.raises(MissingExactDistError):
        exact_dist(fb, History((0,)))
    bad = FunctionBelief(lambda h, rng, size: np.full(size, 7), "out", pomdp=p)
    with pytest.raises(LayerMismatchError):
        bad.sample(History((0,)), np.random.default_rng(0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 1), st.integers(0, 100))
def test_corruptions_stay_on_simplex(seed, lam, dseed):
    p = random_pomdp(seed)
    specs = [
        CorruptionSpec("mix-with-uniform", lam=lam),
        CorruptionSpec("random-dirichlet", seed=dseed, weight=lam),
        CorruptionSpec("always-state-zero"),
    ]
    for c in build_candidates(p, specs)[1:]:
        for t in range(p.horizon + 1):
            tb = belief_table(c, t)
            live = p.filtered.reachable(t)
            assert np.allclose(tb[live].sum(axis=1), 1.0, atol=1e-12)
            assert np.all(tb[live] >= 0)
