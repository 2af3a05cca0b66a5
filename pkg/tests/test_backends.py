"""Equivalence of the compiled kernels and their pure numpy twins."""

import math

import numpy as np
import pytest

from gamehedge import _backend
from gamehedge._pwl_py import compose_arrays as compose_pure
from gamehedge._sim_py import exit_scan as scan_pure

pytestmark = pytest.mark.skipif(
    _backend.BACKEND != "compiled", reason="compiled extension not built"
)

from gamehedge import _kernels  # noqa: E402  (import guarded by the skip above)


def random_pwl_arrays(rng, max_breaks=10, scale=2.0):
    m = int(rng.integers(1, max_breaks + 1))
    if m == 1:
        return np.array([0.0]), np.array([float(rng.uniform(0, scale))])
    breaks = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 1.0, size=m - 1))])
    drops = rng.uniform(0.0, scale, size=m - 1)
    tail = 0.0 if rng.random() < 0.5 else float(rng.uniform(0, 0.3 * scale))
    vals = tail + np.concatenate([np.cumsum(drops[::-1])[::-1], [0.0]])
    return breaks, vals


def test_compose_twins_agree():
    rng = np.random.default_rng(2024)
    for trial in range(200):
        b1, v1 = random_pwl_arrays(rng)
        b2, v2 = random_pwl_arrays(rng)
        p = float(rng.uniform(0.1, 0.9))
        a1 = float(rng.uniform(0.02, 0.3))
        a2 = -float(rng.uniform(0.02, 0.3))
        Bc, Vc, Sc, Tc, Pc = _kernels.compose_arrays(b1, v1, b2, v2, p, a1, a2)
        Bp, Vp, Sp, Tp, Pp = compose_pure(b1, v1, b2, v2, p, a1, a2)
        scale = max(v1[0], v2[0], 1.0)
        ys = np.linspace(0, float(max(b1[-1], b2[-1], 1.0)) * 1.5, 200)
        vc = np.interp(ys, Bc, Vc)
        vp = np.interp(ys, Bp, Vp)
        assert np.max(np.abs(vc - vp)) <= 1e-12 * scale, trial
        # policies attain the same objective values
        for starts, types, pins, B, V in ((Sc, Tc, Pc, Bc, Vc), (Sp, Tp, Pp, Bp, Vp)):
            for y in (0.0, 0.4, 1.3):
                i = int(np.searchsorted(starts, y, side="right")) - 1
                a = a1 if types[i] == 0 else a2
                u = (pins[i] - y) / a
                val = p * np.interp(max(y + u * a1, 0.0), b1, v1) + (1 - p) * np.interp(
                    max(y + u * a2, 0.0), b2, v2
                )
                assert abs(val - np.interp(y, B, V)) <= 1e-10 * scale


def test_compose_twins_on_hinges():
    for p in (0.3, 0.5, 0.47):
        out_c = _kernels.compose_arrays(
            np.array([0.0, 1.0]), np.array([1.0, 0.0]),
            np.array([0.0, 2.0]), np.array([2.0, 0.0]), p, 0.105, -0.095,
        )
        out_p = compose_pure(
            np.array([0.0, 1.0]), np.array([1.0, 0.0]),
            np.array([0.0, 2.0]), np.array([2.0, 0.0]), p, 0.105, -0.095,
        )
        for a, b in zip(out_c, out_p):
            assert np.allclose(a, b, rtol=0, atol=1e-13)


def _run_scan(scan, z_chunks, n, bar, mu_dt, sdt, c, dt, jT):
    state = np.zeros(10)
    theta = np.zeros(n)
    signs = np.zeros(n, dtype=np.int8)
    exmax = np.zeros(n)
    exmin = np.zeros(n)
    done = False
    consumed = []
    for z in z_chunks:
        done, used = scan(z, state, n, bar, mu_dt, sdt, c, dt, jT, theta, signs, exmax, exmin)
        consumed.append(used)
        if done:
            break
    return state, theta, signs, exmax, exmin, done, consumed


def test_exit_scan_twins_bit_identical():
    rng = np.random.default_rng(99)
    n = 8
    T = 1.0
    dt = (T / n) / 64
    bar = math.sqrt(T / n)
    for trial in range(30):
        mu_dt = float(rng.normal(0, 0.2)) * dt
        c = float(rng.uniform(0, 0.5))
        jT = int(math.ceil(T / dt - 1e-9))
        chunks = [rng.standard_normal(300) for _ in range(12)]
        out_c = _run_scan(_kernels.exit_scan, chunks, n, bar, mu_dt, math.sqrt(dt), c, dt, jT)
        out_p = _run_scan(scan_pure, chunks, n, bar, mu_dt, math.sqrt(dt), c, dt, jT)
        for a, b in zip(out_c[:5], out_p[:5]):
            assert np.array_equal(a, b), trial
        assert out_c[5] == out_p[5]
        assert out_c[6] == out_p[6]


def test_value_table_same_on_both_backends(monkeypatch):
    # route bellman_compose through each kernel and compare the root function
    from gamehedge import build_crr, builtin, discretize, MarketParams
    from gamehedge.risk import american_value_table

    params = MarketParams(r=0.0, kappa=0.2, mu=0.02, T=1.0, S0=100.0)
    model = build_crr(params, 6)
    pay = discretize(builtin("american_put", K=100.0), model)

    monkeypatch.setattr(_backend, "compose_arrays", _kernels.compose_arrays)
    vt_c, _ = american_value_table(model, pay, want_policy=False)
    monkeypatch.setattr(_backend, "compose_arrays", compose_pure)
    vt_p, _ = american_value_table(model, pay, want_policy=False)

    xs = np.linspace(0, 12, 100)
    assert np.max(np.abs(vt_c.root(xs) - vt_p.root(xs))) < 1e-10
