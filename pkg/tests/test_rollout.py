import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from belief_bench import kernels
from belief_bench.belief import CorruptionSpec, FunctionBelief, belief_tables, build_candidates, exact_dist
from belief_bench.errors import InvalidModelError, LayerMismatchError
from belief_bench.pomdp import History, exact_q, random_policy, random_pomdp
from belief_bench.rollout import (
    continuation_law,
    exact_repeated_reset_q,
    exact_single_reset_q,
    mc_q,
    mc_returns,
    single_reset_rollout,
)
from oracles import brute_q, brute_single_reset_q, histories


@pytest.fixture
def cands(small):
    p, _ = small
    return build_candidates(p, [CorruptionSpec("mix-with-uniform", lam=0.6), CorruptionSpec("swap-at-step", t0=1, perm=(1, 2, 0))])


def test_exact_oracles_against_enumeration(small, cands):
    p, pi = small
    for c in cands:
        q1 = exact_single_reset_q(p, c, pi)
        qr = exact_repeated_reset_q(p, c, pi)
        for t in range(p.horizon):
            for h in histories(p, t):
                b = exact_dist(c, h).probs
                for a in range(p.num_actions):
                    assert q1.value(h, a) == pytest.approx(brute_single_reset_q(p, pi, h, a, b), abs=1e-12)
                    ref = brute_q(p, pi, h, a, lambda hh: exact_dist(c, hh).probs)
                    assert qr.value(h, a) == pytest.approx(ref, abs=1e-12)


def test_exact_belief_reproduces_true_q(small, cands):
    p, pi = small
    q = exact_q(p, pi)
    for est in (exact_single_reset_q(p, cands[0], pi), exact_repeated_reset_q(p, cands[0], pi)):
        for t in range(p.horizon):
            np.testing.assert_allclose(est.layer(t), q.layer(t), atol=1e-10)


@pytest.mark.parametrize("mode", ["single-reset", "repeated-reset"])
def test_monte_carlo_within_4_sigma(small, cands, mode):
    p, pi = small
    h = History((1, 0), (1,))
    c = cands[2]
    exact = (exact_single_reset_q if mode == "single-reset" else exact_repeated_reset_q)(p, c, pi).value(h, 0)
    est = mc_q(p, c, h, 0, pi, mode, 100000, np.random.default_rng(1))
    assert abs(est.mean - exact) <= 4 * est.stderr


def test_stderr_scales_with_count(small, cands):
    p, pi = small
    h = History((0,))
    s1 = mc_q(p, cands[1], h, 1, pi, "single-reset", 4000, np.random.default_rng(0)).stderr
    s2 = mc_q(p, cands[1], h, 1, pi, "single-reset", 16000, np.random.default_rng(0)).stderr
    assert s2 == pytest.approx(s1 / 2, rel=0.1)
    assert mc_q(p, cands[1], h, 1, pi, "single-reset", 1, np.random.default_rng(0)).stderr == 0.0


def test_function_belief_uses_loop_path(small, cands):
    p, pi = small
    tb = cands[1]
    fb = FunctionBelief(lambda hh, rng, size: tb.sample(hh, rng, size), "wrapped", pomdp=p)
    h = History((0,))
    exact = exact_single_reset_q(p, tb, pi).value(h, 0)
    est = mc_q(p, fb, h, 0, pi, "single-reset", 20000, np.random.default_rng(2))
    assert abs(est.mean - exact) <= 4 * est.stderr


def test_backends_bit_identical(small, cands):
    if kernels.BACKEND != "compiled":
        pytest.skip("compiled extension not built")
    p, pi = small
    h = History((1,))
    for mode in ("single-reset", "repeated-reset"):
        a = mc_returns(p, cands[2], h, 1, pi, mode, 3000, np.random.default_rng(5), backend="compiled")
        b = mc_returns(p, cands[2], h, 1, pi, mode, 3000, np.random.default_rng(5), backend="python")
        assert np.array_equal(a, b)


def test_root_validation(small, cands):
    p, pi = small
    with pytest.raises(LayerMismatchError):
        single_reset_rollout(p, cands[0], History((0, 1, 1, 0), (0, 0, 0)), 0, pi, np.random.default_rng(0))
    with pytest.raises(LayerMismatchError):
        mc_q(p, cands[0], History((0,)), 3, pi, "single-reset", 10, np.random.default_rng(0))
    with pytest.raises(InvalidModelError):
        mc_q(p, cands[0], History((0,)), 0, pi, "sometimes-reset", 10, np.random.default_rng(0))


def test_continuation_laws_sum_to_one(small, cands):
    p, pi = small
    h = History((1,))
    for mode in ("single-reset", "repeated-reset", "true"):
        law = continuation_law(p, cands[1], h, 0, pi, mode)
        assert law.final().sum() == pytest.approx(1.0, abs=1e-12)
        assert sum(law.suffixes(p.index).values()) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 1))
def test_repeated_reset_with_exact_belief_is_true_law(seed, lam):
    p = random_pomdp(seed)
    pi = random_policy(p, seed + 1)
    exact, bad = build_candidates(p, [CorruptionSpec("mix-with-uniform", lam=lam)])
    h = p.index.history(0, 0)
    a = continuation_law(p, exact, h, 0, pi, "repeated-reset").final()
    b = continuation_law(p, exact, h, 0, pi, "true").final()
    c = continuation_law(p, exact, h, 0, pi, "single-reset").final()
    live = ~np.isnan(belief_tables(bad)[0][0])
    assert live.all()
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(c, b, atol=1e-12)
