import math

import numpy as np
import pytest

from gamehedge.hedge import replay, shortfall_expectation
from gamehedge.market import MarketParams, build_crr
from gamehedge.payoff import PayoffSpec, builtin, discretize
from gamehedge.risk import (
    NodePolicy,
    PolicyTable,
    american_price,
    american_value_table,
    evaluate_hedge,
    game_price,
    game_value_table,
    shortfall_risk,
)

MKT = MarketParams(r=0.0, kappa=0.2, mu=0.02, T=1.0, S0=100.0)


def constant_spec(c: float, delta: float) -> PayoffSpec:
    return PayoffSpec(
        name="const",
        low=lambda t, path: c,
        penalty=lambda t, path: delta,
        lipschitz_L=1.0,
        path_independent=True,
        summary_low=lambda t, s, smax, smin: np.full_like(s, c),
        summary_penalty=lambda t, s, smax, smin: np.full_like(s, delta),
    )


def zero_exposure_table(n: int, payoffs) -> PolicyTable:
    levels = []
    for k in range(n):
        nodes = []
        for idx in range(payoffs.node_count(k)):
            nodes.append(
                NodePolicy(
                    piece_y=np.array([0.0]),
                    piece_alpha=np.array([0.0]),
                    piece_beta=np.array([0.0]),
                    piece_pin=np.array([0.0]),
                    piece_on_up=np.array([True]),
                    seller_bounds=np.empty(0),
                    buyer_bounds=np.empty(0),
                    f=float(payoffs.f[k][idx]),
                    g=float(payoffs.g[k][idx]),
                )
            )
        levels.append(nodes)
    return PolicyTable(
        n=n, layout=payoffs.layout, mode="game", levels=levels, terminal_f=payoffs.f[n]
    )


def all_words(n):
    for bits in range(1 << n):
        yield tuple(1 if (bits >> (n - 1 - j)) & 1 else -1 for j in range(n))


def test_zero_exposure_keeps_wealth_constant():
    model = build_crr(MKT, 4)
    pay = discretize(constant_spec(2.0, 1.0), model)
    pt = zero_exposure_table(4, pay)
    for word in [(1, 1, 1, 1), (-1, -1, -1, -1), (1, -1, 1, -1)]:
        traj = replay(model, pay, pt, 3.0, word)
        assert (traj.wealth == 3.0).all()
        assert (traj.gamma == 0.0).all()
        assert (traj.beta == 3.0).all()  # b0 = 1


def test_constant_payoff_fully_funded_no_shortfall():
    model = build_crr(MKT, 4)
    pay = discretize(constant_spec(5.0, 1.0), model)
    _, pt = game_value_table(model, pay)
    for word in all_words(4):
        traj = replay(model, pay, pt, 5.0, word)
        assert traj.shortfall == 0.0


def test_self_financing_identity_and_admissibility():
    model = build_crr(MKT, 5)
    pay = discretize(builtin("american_put", K=100.0), model)
    _, pt = american_value_table(model, pay)
    x = 0.5 * american_price(model, pay)
    a1, a2 = model.a1, model.a2
    for word in all_words(5):
        traj = replay(model, pay, pt, x, word)
        assert (traj.wealth >= -1e-12).all()
        for k in range(5):
            step = a1 if word[k] == 1 else a2
            assert traj.wealth[k + 1] - traj.wealth[k] == pytest.approx(
                traj.exposure[k] * step, abs=1e-12
            )
            # units decomposition reprices the portfolio
            s_disc = 100.0 * math.exp(model.step_vol * sum(word[:k]))
            assert traj.gamma[k] * s_disc + traj.beta[k] * 1.0 == pytest.approx(
                traj.wealth[k], abs=1e-10
            )


@pytest.mark.parametrize(
    "name,kw,american",
    [
        ("american_put", dict(K=100.0), True),
        ("game_put_const_penalty", dict(K=100.0, delta=2.0), False),
        ("game_put_const_penalty", dict(K=105.0, delta=3.0), False),
        ("lookback_put", dict(K=102.0, delta=4.0), False),
    ],
)
def test_exhaustive_expectation_equals_value(name, kw, american):
    n = 3
    model = build_crr(MKT, n)
    spec = builtin(name, **kw)
    pay = discretize(spec, model, layout="full" if not spec.path_independent else "auto")
    build = american_value_table if american else game_value_table
    vt, pt = build(model, pay)
    price = game_price(model, pay, american=american)
    for x in (0.0, 0.3 * price, 0.7 * price, price):
        expect = shortfall_expectation(model, pay, pt, x)
        assert expect == pytest.approx(shortfall_risk(vt, x), abs=1e-9)


def test_expectation_matches_w_recursion_for_policy():
    model = build_crr(MKT, 4)
    pay = discretize(builtin("american_put", K=100.0), model)
    vt, pt = american_value_table(model, pay)
    x = 2.5
    from gamehedge.risk import policy_strategy

    w0 = evaluate_hedge(model, pay, policy_strategy(pt), x, american=True)
    assert shortfall_expectation(model, pay, pt, x) == pytest.approx(w0, abs=1e-9)


def test_perturbed_policy_dominance():
    n = 2
    model = build_crr(MKT, n)
    pay = discretize(builtin("american_put", K=100.0), model)
    vt, pt = american_value_table(model, pay)
    x = 0.5 * american_price(model, pay)
    base = shortfall_risk(vt, x)

    def perturbed(k, idx, y):
        node = pt.levels[k][idx if pay.layout == "full" else int(idx).bit_count()]
        u = node.exposure(y) * 1.1
        return min(max(u, -y / model.a1), -y / model.a2)

    w0 = evaluate_hedge(model, pay, perturbed, x, american=True)
    assert w0 >= base - 1e-9


def _all_stopping_times(n):
    """Every adapted {0..n}-valued stopping time on the full sign tree."""

    def rec(k, idx):
        if k == n:
            return [{(k, idx): True}]
        out = [{(k, idx): True}]
        for a in rec(k + 1, 2 * idx + 1):
            for b in rec(k + 1, 2 * idx):
                d = {(k, idx): False}
                d.update(a)
                d.update(b)
                out.append(d)
        return out

    return rec(0, 0)


@pytest.mark.parametrize(
    "name,kw,american",
    [("american_put", dict(K=100.0), True), ("game_put_const_penalty", dict(K=103.0, delta=1.0), False)],
)
def test_buyer_first_attainment_rule_is_brute_force_optimal(name, kw, american):
    # the replay's buyer response must attain the max over ALL adapted stopping times
    n = 3
    model = build_crr(MKT, n)
    pay = discretize(builtin(name, **kw), model, layout="full")
    build = american_value_table if american else game_value_table
    vt, pt = build(model, pay)
    price = game_price(model, pay, american=american)
    x = 0.4 * price
    p = model.p_obj

    best = -1.0
    for eta in _all_stopping_times(n):
        total = 0.0
        for word in all_words(n):
            traj = replay(model, pay, pt, x, word)
            idx = 0
            tau = n
            for k in range(n + 1):
                if eta[(k, idx)]:
                    tau = k
                    break
                if k < n:
                    idx = 2 * idx + (1 if word[k] == 1 else 0)
            t2 = replay(model, pay, pt, x, word, buyer_stop=tau)
            ups = sum(1 for s in word if s == 1)
            total += (p**ups) * ((1 - p) ** (n - ups)) * t2.shortfall_custom
        best = max(best, total)
    value = shortfall_risk(vt, x)
    assert best == pytest.approx(value, abs=1e-9)
    assert shortfall_expectation(model, pay, pt, x) == pytest.approx(best, abs=1e-9)


def test_replay_validates_inputs():
    model = build_crr(MKT, 3)
    pay = discretize(builtin("american_put", K=100.0), model)
    _, pt = american_value_table(model, pay)
    with pytest.raises(ValueError):
        replay(model, pay, pt, 1.0, (1, -1))
    with pytest.raises(ValueError):
        replay(model, pay, pt, -1.0, (1, -1, 1))
    with pytest.raises(ValueError):
        replay(model, pay, pt, 1.0, (1, -1, 1), buyer_stop=7)
