"""Matching solvers: coordinate transforms, path agreement, batch parity."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implicit_boot import exact
from implicit_boot.errors import NoZFunction, UnsupportedExample
from implicit_boot.estimators import (AuxEstimate, LomaxMLE, ParetoMLE,
                                      SampleMaxEstimator)
from implicit_boot.matcher import (BoxTransform, InitRule, MatchPath,
                                   MatchResult, SolverConfig,
                                   batched_switched_match, closed_form_match,
                                   nested_match, run_match, supports_batch,
                                   switched_match)
from implicit_boot.models import Box, make_model
from implicit_boot.rng import (MasterSeed, RandomBlock, Role, StreamKey,
                               derive_seed, derive_seeds, draw_block,
                               draw_uniforms)

MS = MasterSeed(112358)


def _block(i, m):
    return draw_block(derive_seed(MS, StreamKey(i, Role.OBSERVED)), m)


# ---------------------------------------------------------------- transforms

BOXES = [
    Box(np.array([-np.inf]), np.array([np.inf])),
    Box(np.array([0.0]), np.array([np.inf])),
    Box(np.array([-np.inf]), np.array([3.0])),
    Box(np.array([0.3]), np.array([100.0])),
    Box(np.array([0.0, -np.inf, 0.3]), np.array([np.inf, np.inf, 100.0])),
]


@pytest.mark.parametrize("box", BOXES)
def test_box_transform_round_trip(box):
    tr = BoxTransform(box)
    t = np.linspace(-5.0, 5.0, 7 * box.p).reshape(7, box.p)
    x = tr.to_box(t)
    assert all(box.contains(row) for row in x)
    np.testing.assert_allclose(tr.to_unconstrained(x), t, rtol=1e-9, atol=1e-9)


@given(st.floats(min_value=-30.0, max_value=30.0))
@settings(max_examples=100, deadline=None)
def test_box_transform_monotone_per_coordinate(t):
    tr = BoxTransform(Box(np.array([0.3]), np.array([100.0])))
    a = tr.to_box(np.array([t]))[0]
    b = tr.to_box(np.array([t + 0.5]))[0]
    assert 0.3 < a < b < 100.0


def test_box_transform_center_is_inside():
    for box in BOXES:
        assert box.contains(BoxTransform(box).center())


# ---------------------------------------------------------------- scalar paths

def _uniform_instance(i, n=15):
    model = make_model("uniform")
    data = model.simulate([2.0], _block(3 * i, n))
    pi = SampleMaxEstimator().estimate(data)
    return model, SampleMaxEstimator(), pi, _block(3 * i + 1, n)


def _pareto_instance(i, n=20):
    model = make_model("pareto")
    data = model.simulate([1.3, 0.8], _block(3 * i, n))
    pi = ParetoMLE().estimate(data)
    return model, ParetoMLE(), pi, _block(3 * i + 1, n)


@pytest.mark.parametrize("maker,example", [(_uniform_instance, "uniform"),
                                           (_pareto_instance, "pareto")])
def test_all_three_paths_agree(maker, example):
    for i in range(10):
        model, est, pi, star = maker(i)
        w_star = exact.summary_from_block(example, star)
        ref = closed_form_match(example, pi, w_star.stats).theta_check
        a = nested_match(pi, model, est, star).theta_check
        b = switched_match(pi, model, est, star).theta_check
        np.testing.assert_allclose(a, ref, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(b, ref, rtol=1e-6, atol=1e-8)


def test_matching_own_noise_returns_the_generator():
    # simulated noise identical to the observed noise: the matched value is
    # the parameter that generated the data, with zero residual
    model, est = make_model("lomax"), LomaxMLE()
    blk = _block(50, 60)
    data = model.simulate([1.0, 1.5], blk)
    pi = est.estimate(data)
    res = switched_match(pi, model, est, blk)
    assert res.converged
    assert res.delta <= 1e-8
    np.testing.assert_allclose(res.theta_check, [1.0, 1.5], atol=1e-6)


def test_switched_needs_a_z_function():
    class NoZ(SampleMaxEstimator):
        has_z = False

    model, _, pi, star = _uniform_instance(0)
    with pytest.raises(NoZFunction):
        switched_match(pi, model, NoZ(), star)


def test_closed_form_rejects_unknown_example():
    with pytest.raises(UnsupportedExample):
        closed_form_match("lomax", AuxEstimate(pi=np.array([1.0])), [0.5])


def test_run_match_dispatch():
    model, est, pi, star = _uniform_instance(1)
    a = run_match(MatchPath.NESTED, pi, model, est, star)
    b = run_match(MatchPath.SWITCHED, pi, model, est, star)
    assert a.path is MatchPath.NESTED and b.path is MatchPath.SWITCHED
    np.testing.assert_allclose(a.theta_check, b.theta_check, rtol=1e-8)
    with pytest.raises(UnsupportedExample):
        run_match(MatchPath.CLOSED_FORM, pi, model, est, star)


def test_user_init_rule_requires_a_point():
    model, est, pi, star = _uniform_instance(2)
    cfg = SolverConfig(init_rule=InitRule.USER)
    with pytest.raises(ValueError):
        switched_match(pi, model, est, star, cfg)
    cfg2 = SolverConfig(init_rule=InitRule.USER, init=np.array([1.5]))
    res = switched_match(pi, model, est, star, cfg2)
    assert res.converged


def test_match_result_theta_is_immutable():
    model, est, pi, star = _uniform_instance(3)
    res = switched_match(pi, model, est, star)
    with pytest.raises(ValueError):
        res.theta_check[0] = 0.0


def test_switched_is_cheaper_than_nested_on_the_lomax_model():
    model, est = make_model("lomax"), LomaxMLE()
    ratios = []
    for i in range(50):
        data = model.simulate([1.0, 1.5], _block(100 + 2 * i, 50))
        pi = est.estimate(data)
        star = _block(101 + 2 * i, 50)
        s = switched_match(pi, model, est, star)
        n = nested_match(pi, model, est, star)
        ratios.append(s.objective_evals <= n.objective_evals)
    assert np.median(ratios) == 1.0


# ---------------------------------------------------------------- batched path

def test_supports_batch_detection():
    assert supports_batch(make_model("lomax"), LomaxMLE())
    assert not supports_batch(make_model("andrews"), SampleMaxEstimator())


def test_batched_lomax_matches_scalar_rows():
    model, est = make_model("lomax"), LomaxMLE()
    data = model.simulate([1.0, 1.5], _block(200, 50))
    pi = est.estimate(data)
    B = 40
    seeds = derive_seeds(MS, 200, Role.BOOT, np.arange(1, B + 1))
    U = draw_uniforms(seeds, 50)
    thetas, deltas, conv, _ = batched_switched_match(pi, model, est, U)
    assert conv.mean() > 0.9
    for i in range(B):
        if not conv[i]:
            continue
        ref = switched_match(pi, model, est, RandomBlock(u=U[i]))
        np.testing.assert_allclose(thetas[i], ref.theta_check,
                                   rtol=1e-5, atol=1e-7)
        assert deltas[i] <= 1e-8


def test_batched_uniform_matches_closed_form():
    model, est = make_model("uniform"), SampleMaxEstimator()
    data = model.simulate([2.0], _block(210, 15))
    pi = est.estimate(data)
    B = 30
    seeds = derive_seeds(MS, 210, Role.BOOT, np.arange(1, B + 1))
    U = draw_uniforms(seeds, 15)
    thetas, deltas, conv, _ = batched_switched_match(pi, model, est, U)
    assert conv.all()
    ref = pi.pi[0] / np.max(U, axis=1)
    np.testing.assert_allclose(thetas[:, 0], ref, rtol=1e-9)
