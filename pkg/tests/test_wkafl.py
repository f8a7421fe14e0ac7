import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import hand_trace
from kasync.errors import UsageError
from kasync.simulator import GradientReport
from kasync.wkafl import (ServerState, WkaflParams, adapt_lr, apply_momentum, cap_norms,
                          clip_to_bound, estimate_unbiased, sagrad, server_step, similarities,
                          stage_check, staleness_weights)

PROPERTY = settings(max_examples=500, deadline=None)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def vec(dim):
    return arrays(np.float64, dim, elements=finite)


@st.composite
def vector_sets(draw, min_k=1, max_k=6):
    dim = draw(st.integers(1, 4))
    k = draw(st.integers(min_k, max_k))
    vs = [draw(vec(dim)) for _ in range(k)]
    return vs, draw(vec(dim))


def report(g, gap=0, loss=1.0, cid=0):
    return GradientReport(cid, np.asarray(g, dtype=float), loss, 0, gap)


class TestExamples:
    def test_momentum(self):
        a = apply_momentum([np.array([1.0, 0.0])], np.array([2.0, 2.0]), 0.5)
        np.testing.assert_array_equal(a[0], [2.0, 1.0])
        g = [np.array([3.0, -1.0])]
        np.testing.assert_array_equal(apply_momentum(g, np.zeros(2), 0.5)[0], g[0])
        np.testing.assert_array_equal(apply_momentum(g, np.ones(2), 0.0)[0], g[0])

    def test_clip(self):
        np.testing.assert_array_equal(clip_to_bound(np.array([3.0, 4.0]), 5), [3, 4])
        np.testing.assert_allclose(clip_to_bound(np.array([6.0, 8.0]), 5), [3, 4], rtol=1e-15)
        np.testing.assert_array_equal(clip_to_bound(np.zeros(2), 5), [0, 0])

    def test_estimate_weights(self):
        v = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        g, w = estimate_unbiased(v, [0, 1])
        np.testing.assert_allclose(w, [0.5761, 0.4239], atol=5e-5)
        np.testing.assert_allclose(w[0], 1 / (1 + 2 / math.e), rtol=1e-15)
        _, w = estimate_unbiased(v, [3, 3])
        np.testing.assert_array_equal(w, [0.5, 0.5])

    def test_estimate_huge_gap(self):
        g, w = estimate_unbiased([np.ones(2), -np.ones(2)], [0, 5000])
        assert np.all(np.isfinite(w)) and np.all(np.isfinite(g))
        assert w[1] < 1e-300 and w[0] == 1.0

    def test_sagrad_all_equal(self):
        gb = np.array([1.0, 2.0])
        agg, w = sagrad([gb, gb, gb], gb, WkaflParams(), 1)
        np.testing.assert_allclose(w, [1 / 3] * 3, rtol=1e-15)
        np.testing.assert_allclose(agg, gb, rtol=1e-15)

    def test_sagrad_two_similarities(self):
        gb = np.array([1.0, 0.0])
        v2 = np.array([0.5, math.sqrt(3) / 2])     # cosine 0.5
        _, w = sagrad([gb, v2], gb, WkaflParams(sim_min=0.0), 1)
        np.testing.assert_allclose(w, [math.e / (math.e + 1), 1 / (math.e + 1)], rtol=1e-12)
        np.testing.assert_allclose(w, [0.7311, 0.2689], atol=5e-5)

    def test_orthogonal_excluded(self):
        gb = np.array([1.0, 0.0])
        _, w = sagrad([gb, np.array([0.0, 3.0])], gb, WkaflParams(sim_min=0.1), 1)
        np.testing.assert_array_equal(w, [1.0, 0.0])

    def test_stage_two_rescale(self):
        gb = np.array([1.0, 0.0])
        v = np.array([4.0, 0.0])
        agg, w = sagrad([v], gb, WkaflParams(B=2.0), 2)
        np.testing.assert_allclose(agg, [2.0, 0.0], rtol=1e-15)
        agg, _ = sagrad([v], gb, WkaflParams(B=2.0), 1)
        np.testing.assert_array_equal(agg, v)

    def test_fallback_without_consistent_vectors(self):
        gb = np.array([1.0, 0.0])
        agg, w = sagrad([-gb], gb, WkaflParams(), 1)
        np.testing.assert_array_equal(w, [0.0])
        np.testing.assert_array_equal(agg, gb)

    def test_zero_estimate_accepts_all(self):
        np.testing.assert_array_equal(similarities([np.ones(2), -np.ones(2)], np.zeros(2)), [1, 1])

    def test_adapt_lr(self):
        assert adapt_lr(0.3, 0, 0.1) == 0.3
        assert adapt_lr(1.0, 4, 0.25) == 0.5
        assert adapt_lr(1.0, 1e12, 0.1) < 1e-10
        with pytest.raises(UsageError):
            adapt_lr(1.0, -1, 0.1)

    def test_stage_boundaries(self):
        assert stage_check([0.25, 0.5], 0.75, 1) == 2
        assert stage_check([1e6], 0.3, 2) == 2
        assert stage_check([0.75 + 1e-9], 0.75, 1) == 1

    def test_default_epsilon(self):
        assert WkaflParams(K=10).epsilon == pytest.approx(3.0)


class TestServerStep:
    def neutral(self, **kw):
        return WkaflParams(eta0=0.1, alpha=0.0, sim_min=0.0, CB=1e9, epsilon=1e-9, K=1, **kw)

    def test_single_report_is_sgd(self):
        w = np.array([1.0, -2.0, 0.5])
        g = np.array([0.3, 0.1, -0.4])
        s = server_step(ServerState.initial(w), [report(g, loss=5.0)], self.neutral())
        np.testing.assert_allclose(s.params, w - 0.1 * g, rtol=1e-15)
        assert s.stage == 1 and s.iteration == 1

    def test_identical_reports_match_single(self):
        w = np.array([1.0, -2.0])
        g = np.array([0.3, 0.1])
        one = server_step(ServerState.initial(w), [report(g, loss=5.0)], self.neutral())
        two = server_step(ServerState.initial(w), [report(g, loss=5.0), report(g, loss=5.0)],
                          self.neutral())
        np.testing.assert_allclose(two.params, one.params, rtol=1e-15)

    def test_hand_trace(self):
        assert hand_trace.max_deviation() < 1e-12

    def test_fallback_flagged(self):
        state = ServerState.initial(np.zeros(2))
        state.g_bar_prev = np.array([10.0, 0.0])
        p = WkaflParams(alpha=1.0, sim_min=0.99, CB=1e9)
        # momentum pulls both along +x, raw gradients split them apart
        s = server_step(state, [report([0.0, 30.0], cid=0), report([0.0, -30.0], cid=1)], p)
        assert s.last.fallback
        np.testing.assert_allclose(sum(s.last.weights), 1.0)


# Randomised invariants of the aggregation rule; the acceptance suite reruns these.

@PROPERTY
@given(vector_sets(), st.sampled_from([1, 2]), st.floats(-1, 1), st.floats(0.1, 5))
def test_prop_weight_simplex(data, stage, sim_min, beta):
    vs, gb = data
    p = WkaflParams(sim_min=sim_min, beta=beta)
    _, w = sagrad(vs, gb, p, stage)
    sims = similarities(vs, gb)
    assert np.all(w >= 0)
    assert np.all(w[sims < sim_min] == 0)
    if np.any(sims >= sim_min):
        assert math.isclose(w.sum(), 1.0, rel_tol=1e-12)
    else:
        assert w.sum() == 0

@PROPERTY
@given(vector_sets(), st.floats(0.1, 10))
def test_prop_stage_two_norm_cap(data, B):
    vs, gb = data
    cap = B * np.linalg.norm(gb)
    for v in cap_norms(vs, gb, B):
        assert np.linalg.norm(v) <= cap + 1e-12

@PROPERTY
@given(st.lists(st.integers(0, 200), min_size=1, max_size=8), st.integers(0, 10_000))
def test_prop_estimate_shift_invariance(gaps, c):
    a = staleness_weights(gaps)
    b = staleness_weights(np.asarray(gaps) + c)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)

@PROPERTY
@given(st.floats(1e-4, 10), st.floats(0, 1e4), st.floats(1e-3, 1e3), st.floats(0.01, 0.99))
def test_prop_adapt_lr_monotone_and_bounded(eta0, gap, inc, gamma):
    a, b = adapt_lr(eta0, gap, gamma), adapt_lr(eta0, gap + inc, gamma)
    assert b < a <= eta0
    assert adapt_lr(eta0, 0, gamma) == eta0

@PROPERTY
@given(st.lists(st.lists(st.floats(0, 3), min_size=1, max_size=4), min_size=1, max_size=30),
       st.floats(0.1, 3))
def test_prop_stage_latches(loss_seq, eps):
    stage, seen_two = 1, False
    for losses in loss_seq:
        stage = stage_check(losses, eps, stage)
        if seen_two:
            assert stage == 2
        seen_two = seen_two or stage == 2

@PROPERTY
@given(vec(3), st.floats(0.01, 20))
def test_prop_clip_idempotent_and_direction(g, CB):
    c = clip_to_bound(g, CB)
    np.testing.assert_allclose(clip_to_bound(c, CB), c, rtol=1e-12)
    assert np.linalg.norm(c) <= np.linalg.norm(g) + 1e-12
    n = np.linalg.norm(g)
    if n > 1e-6:
        np.testing.assert_allclose(c / np.linalg.norm(c), g / n, rtol=1e-9, atol=1e-12)

@PROPERTY
@given(vector_sets(), st.floats(0.01, 100))
def test_prop_scale_equivariance(data, s):
    vs, gb = data
    assume(np.linalg.norm(gb) > 1e-3 and all(np.linalg.norm(v) > 1e-3 for v in vs))
    p = WkaflParams(sim_min=0.0)
    # a cosine sitting on the threshold can flip either way under rounding
    assume(np.all(np.abs(similarities(vs, gb) - p.sim_min) > 1e-9))
    agg, w = sagrad(vs, gb, p, 1)
    agg_s, w_s = sagrad([s * v for v in vs], s * gb, p, 1)
    np.testing.assert_allclose(similarities([s * v for v in vs], s * gb),
                               similarities(vs, gb), atol=1e-12)
    np.testing.assert_allclose(w_s, w, atol=1e-12)
    np.testing.assert_allclose(agg_s, s * agg, rtol=1e-9, atol=1e-9 * s)
