import math

import numpy as np
import pytest

from gamehedge.market import MarketParams, build_crr
from gamehedge.payoff import (
    PayoffSpec,
    PayoffSpecError,
    StepPath,
    audit_path_independence,
    builtin,
    discretize,
    spec_from_config,
)

MKT = MarketParams(r=0.0, kappa=0.2, mu=0.02, T=1.0, S0=100.0)


def constant_spec(c: float, delta: float) -> PayoffSpec:
    return PayoffSpec(
        name="const",
        low=lambda t, path: c,
        penalty=lambda t, path: delta,
        lipschitz_L=1.0,
        path_independent=True,
        params={"c": c, "delta": delta},
        summary_low=lambda t, s, smax, smin: np.full_like(s, c),
        summary_penalty=lambda t, s, smax, smin: np.full_like(s, delta),
    )


def test_constant_payoff_no_discounting():
    model = build_crr(MKT, 4)
    d = discretize(constant_spec(3.0, 0.5), model)
    for k in range(5):
        assert (d.f[k] == 3.0).all()
        expect_g = 3.0 if k == 4 else 3.5
        assert (d.g[k] == expect_g).all()


def test_game_put_at_the_money_root():
    model = build_crr(MKT, 4)
    d = discretize(builtin("game_put_const_penalty", K=100.0, delta=2.0), model)
    assert d.f[0][0] == 0.0
    assert d.g[0][0] == 2.0


def test_game_put_hinge_values():
    spec = builtin("game_put_const_penalty", K=100.0, delta=5.0)
    path = StepPath(np.array([0.0, 0.5]), np.array([100.0, 90.0]))
    assert spec.low(0.5, path) == 10.0
    assert spec.low(0.5, path) + spec.penalty(0.5, path) == 15.0


def test_floating_lookback_hand_enumeration():
    # node (k=2, word=[+,-]) at r=0: step values S0, S0*e^h, S0 with h = kappa*sqrt(T/n)
    model = build_crr(MKT, 4)
    d = discretize(builtin("floating_lookback"), model, layout="full")
    h = 0.2 * math.sqrt(1 / 4)
    # full-tree index at depth 2 for word [+,-]: bits 10 -> 2
    assert d.f[2][2] == pytest.approx(100.0 * math.exp(h) - 100.0, rel=1e-14)


def test_lookback_put_all_down_path():
    model = build_crr(MKT, 3)
    d = discretize(builtin("lookback_put", K=100.0, delta=1.0), model, layout="full")
    h = 0.2 * math.sqrt(1 / 3)
    term = 100.0 * math.exp(-3 * h)
    assert d.f[3][0] == pytest.approx(100.0 - term, rel=1e-13)


def test_g_dominates_f_everywhere():
    model = build_crr(MKT, 5)
    for spec in (
        builtin("game_put_const_penalty", K=100.0, delta=2.0),
        builtin("american_put", K=100.0),
        builtin("lookback_put", K=100.0, delta=2.0),
        builtin("floating_lookback", delta=1.0),
    ):
        d = discretize(spec, model, layout="full")
        for k in range(6):
            assert (d.g[k] >= d.f[k]).all()
            assert (d.f[k] >= 0).all()


def test_recombined_matches_full_for_path_independent():
    model = build_crr(MarketParams(r=0.03, kappa=0.25, mu=0.05, T=1.0, S0=100.0), 6)
    spec = builtin("game_put_const_penalty", K=105.0, delta=3.0)
    full = discretize(spec, model, layout="full")
    rec = discretize(spec, model, layout="recombined")
    for k in range(7):
        ups = np.bitwise_count(np.arange(1 << k, dtype=np.uint64)).astype(np.int64)
        assert np.allclose(full.f[k], rec.f[k][ups], rtol=1e-12, atol=0)
        assert np.allclose(full.g[k], rec.g[k][ups], rtol=1e-12, atol=0)


def test_discounting_exactness():
    params = MarketParams(r=0.07, kappa=0.25, mu=0.05, T=1.0, S0=100.0)
    model = build_crr(params, 5)
    spec = builtin("lookback_put", K=120.0, delta=1.0)
    d = discretize(spec, model, layout="full")
    # undiscounted evaluation at a node times exp(-r k T/n) reproduces f
    k = 3
    disc = math.exp(-params.r * k * model.dt)
    from gamehedge.payoff import _full_level_paths

    paths = _full_level_paths(model, k)
    times = np.arange(k + 1) * model.dt
    for i in range(1 << k):
        raw = spec.low(k * model.dt, StepPath(times, paths[i]))
        assert d.f[k][i] == pytest.approx(disc * raw, rel=1e-12)


def test_path_independence_audit():
    model = build_crr(MKT, 6)
    rng = np.random.default_rng(0)
    assert audit_path_independence(builtin("game_put_const_penalty", K=100, delta=2), model, rng)
    assert audit_path_independence(builtin("american_put", K=100), model, rng)
    assert not audit_path_independence(builtin("lookback_put", K=100, delta=2), model, rng)


def test_lipschitz_bound_on_sampled_pairs():
    # finite-difference audit of condition |F_s(v)-F_s(w)| <= L(s+1) sup|v-w|
    rng = np.random.default_rng(3)
    model = build_crr(MKT, 8)
    for spec in (
        builtin("game_put_const_penalty", K=100.0, delta=2.0),
        builtin("lookback_put", K=100.0, delta=2.0),
        builtin("floating_lookback", delta=1.0),
    ):
        for _ in range(200):
            k = int(rng.integers(1, 9))
            t = k * model.dt
            times = np.arange(k + 1) * model.dt
            va = 100.0 * np.exp(rng.normal(0, 0.2, size=k + 1))
            vb = va + rng.normal(0, 5.0, size=k + 1)
            d_sup = np.abs(va - vb).max()
            pa, pb = StepPath(times, va), StepPath(times, np.abs(vb))
            d_sup = np.abs(pa.values - pb.values).max()
            lhs = abs(spec.low(t, pa) - spec.low(t, pb)) + abs(
                spec.penalty(t, pa) - spec.penalty(t, pb)
            )
            assert lhs <= spec.lipschitz_L * (t + 1) * d_sup + 1e-9


def test_negative_payoff_rejected():
    bad = PayoffSpec(
        name="bad",
        low=lambda t, path: -1.0,
        penalty=lambda t, path: 0.0,
        lipschitz_L=1.0,
        path_independent=True,
    )
    with pytest.raises(PayoffSpecError):
        discretize(bad, build_crr(MKT, 2))


def test_unknown_name_and_config():
    with pytest.raises(PayoffSpecError):
        builtin("barrier_call", K=100)
    with pytest.raises(PayoffSpecError):
        builtin("game_put_const_penalty", K=100, delta=2, weird=1)
    spec = spec_from_config({"name": "american_put", "K": 90.0})
    assert spec.params == {"K": 90.0}
    with pytest.raises(PayoffSpecError):
        spec_from_config({"K": 90.0})


def test_american_sentinel_penalty():
    spec = builtin("american_put", K=100.0)
    path = StepPath(np.array([0.0]), np.array([100.0]))
    assert spec.penalty(0.0, path) == 1e6 * 100.0
