"""Skorokhod-embedding Monte Carlo.

A drifted Brownian motion is simulated on a fine Euler grid; successive
first exits from +-sqrt(T/n) bands yield signed increments whose law is
exactly that of the binomial tree steps, so the discrete optimal hedge can
be replayed on simulated continuous paths.  The discrete estimator is an
unbiased Monte Carlo check of the recursion value; the continuous
diagnostic re-prices the realized shortfall with the true path payoffs at
the embedded stopping times (a restricted buyer adversary, reported as a
labeled diagnostic only).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._backend import exit_scan
from .market import CrrModel, MarketParams, build_crr
from .payoff import DiscretePayoffs
from .risk import PolicyTable


class BudgetError(RuntimeError):
    """Raised when the fine-grid simulation exceeds its step budget."""


_BLOCK = 4096  # paths per simulation block; reductions stay in block order


def _drift_rate(params: MarketParams, measure: str) -> float:
    if measure == "objective":
        return params.mu / params.kappa - params.kappa / 2.0
    if measure == "martingale":
        return -params.kappa / 2.0
    raise ValueError(f"unknown measure {measure!r}")


def default_dt_fine(params: MarketParams, n: int) -> float:
    return (params.T / n) / 64.0


def _check_dt(params: MarketParams, n: int, dt_fine: float) -> float:
    limit = default_dt_fine(params, n)
    if dt_fine is None:
        return limit
    if dt_fine > limit * (1 + 1e-12):
        raise ValueError(f"dt_fine must be <= (T/n)/64 = {limit:.3g}, got {dt_fine}")
    if dt_fine <= 0:
        raise ValueError("dt_fine must be positive")
    return float(dt_fine)


def _path_generator(seed: int, index: int) -> np.random.Generator:
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _scan_path(n, bar, mu_dt, sdt, c, dt, jT, gen, chunk, budget, theta, signs, exmax, exmin):
    state = np.zeros(10)
    used = 0
    while True:
        z = gen.standard_normal(chunk)
        done, consumed = exit_scan(
            z, state, n, bar, mu_dt, sdt, c, dt, jT, theta, signs, exmax, exmin
        )
        used += consumed
        if done:
            return state, used
        if used >= budget:
            raise BudgetError(
                f"no {n}-exit embedding within {budget} fine steps (dt_fine={dt:.3g})"
            )


@dataclass
class EmbeddedBlock:
    """Struct-of-arrays output of a simulation block (B paths)."""

    theta: np.ndarray    # (B, n) exit times
    signs: np.ndarray    # (B, n) +-1 as int8
    exmax: np.ndarray    # (B, n) running max of B* + (r/kappa) t at each exit
    exmin: np.ndarray
    bstar_T: np.ndarray  # (B,) B* at the first grid time >= T
    exmax_T: np.ndarray
    exmin_T: np.ndarray
    steps: np.ndarray    # (B,) fine steps consumed


def simulate_block(
    params: MarketParams,
    n: int,
    n_paths: int,
    seed: int,
    start_index: int,
    dt_fine: float,
    measure: str = "objective",
) -> EmbeddedBlock:
    """Simulate ``n_paths`` embedded paths with per-path streams keyed by
    (seed, global path index); results are independent of any block split."""
    dt = _check_dt(params, n, dt_fine)
    bar = math.sqrt(params.T / n)
    mu_dt = _drift_rate(params, measure) * dt
    sdt = math.sqrt(dt)
    c = params.r / params.kappa
    jT = int(math.ceil(params.T / dt - 1e-9))
    chunk = int(1.25 * jT) + 64
    budget = 50 * jT + 100_000

    theta = np.empty((n_paths, n))
    signs = np.empty((n_paths, n), dtype=np.int8)
    exmax = np.empty((n_paths, n))
    exmin = np.empty((n_paths, n))
    bstar_T = np.empty(n_paths)
    exmax_T = np.empty(n_paths)
    exmin_T = np.empty(n_paths)
    steps = np.empty(n_paths, dtype=np.int64)
    for i in range(n_paths):
        gen = _path_generator(seed, start_index + i)
        state, used = _scan_path(
            n, bar, mu_dt, sdt, c, dt, jT, gen, chunk, budget,
            theta[i], signs[i], exmax[i], exmin[i],
        )
        bstar_T[i] = state[7]
        exmax_T[i] = state[8]
        exmin_T[i] = state[9]
        steps[i] = used
    return EmbeddedBlock(theta, signs, exmax, exmin, bstar_T, exmax_T, exmin_T, steps)


@dataclass
class EmbeddedPath:
    """A single embedded trajectory with convergence diagnostics."""

    n: int
    theta: np.ndarray
    signs: np.ndarray
    u_n: float            # max_k |theta_k - k T/n|
    w_n: float            # max spacing plus |T - theta_n|
    z_terminal: float     # Radon-Nikodym density at theta_n
    bstar_T: float
    fine_times: Optional[np.ndarray] = None
    fine_values: Optional[np.ndarray] = None


def simulate_embedding(
    params: MarketParams,
    n: int,
    seed: int,
    dt_fine: Optional[float] = None,
    measure: str = "objective",
    path_index: int = 0,
    keep_fine: bool = False,
) -> EmbeddedPath:
    """Simulate one embedded path; optionally retain the fine B* trajectory."""
    dt = _check_dt(params, n, dt_fine)
    bar = math.sqrt(params.T / n)
    drift = _drift_rate(params, measure)
    mu_dt = drift * dt
    sdt = math.sqrt(dt)
    c = params.r / params.kappa
    jT = int(math.ceil(params.T / dt - 1e-9))
    chunk = int(1.25 * jT) + 64
    budget = 50 * jT + 100_000

    theta = np.empty(n)
    signs = np.empty(n, dtype=np.int8)
    exmax = np.empty(n)
    exmin = np.empty(n)
    gen = _path_generator(seed, path_index)
    state, used = _scan_path(
        n, bar, mu_dt, sdt, c, dt, jT, gen, chunk, budget, theta, signs, exmax, exmin
    )

    ks = np.arange(n + 1)
    th_full = np.concatenate([[0.0], theta])
    u_n = float(np.max(np.abs(th_full - ks * (params.T / n))))
    w_n = float(np.max(np.diff(th_full))) + abs(params.T - theta[-1])

    a = params.mu / params.kappa
    msum = float(signs.sum())
    if measure == "objective":
        b_drv = bar * msum - drift * theta[-1]  # driving BM under P
        z = math.exp(a * b_drv + 0.5 * a * a * theta[-1])
    else:
        b_drv = bar * msum - drift * theta[-1]  # driving BM under the martingale measure
        z = math.exp(a * b_drv - 0.5 * a * a * theta[-1])

    fine_t = fine_v = None
    if keep_fine:
        # regenerate the consumed draws from the same stream, chunked as drawn
        draws = []
        gen2 = _path_generator(seed, path_index)
        remaining = used
        while remaining > 0:
            buf = gen2.standard_normal(chunk)
            take = min(chunk, remaining)
            draws.append(buf[:take])
            remaining -= take
        z_all = np.concatenate(draws) if draws else np.empty(0)
        inc = mu_dt + sdt * z_all
        exit_steps = np.rint(theta / dt).astype(np.int64)
        fine_v = np.empty(used + 1)
        fine_v[0] = 0.0
        anchor = 0.0
        a0 = 0
        for k in range(n + 1):
            b0 = int(exit_steps[k] if k < n else used)
            if b0 > a0:
                fine_v[a0 + 1 : b0 + 1] = anchor + np.cumsum(inc[a0:b0])
            if k < n:
                anchor = anchor + float(signs[k]) * bar
                fine_v[b0] = anchor
            a0 = b0
        fine_t = np.arange(used + 1) * dt
    return EmbeddedPath(
        n=n,
        theta=theta,
        signs=signs,
        u_n=u_n,
        w_n=w_n,
        z_terminal=z,
        bstar_T=float(state[7]),
        fine_times=fine_t,
        fine_values=fine_v,
    )


def embedding_statistics(
    params: MarketParams,
    n: int,
    num_paths: int,
    seed: int,
    dt_fine: Optional[float] = None,
    measure: str = "objective",
) -> dict:
    """Pooled exit-side and density diagnostics over num_paths * n increments."""
    dt = _check_dt(params, n, dt_fine)
    drift = _drift_rate(params, measure)
    bar = math.sqrt(params.T / n)
    a = params.mu / params.kappa
    ups = 0
    tot = 0
    u_sum = 0.0
    th_sum = 0.0
    z_sum = 0.0
    z_sq = 0.0
    lag_xy = 0.0
    lag_n = 0
    done = 0
    while done < num_paths:
        b = min(_BLOCK, num_paths - done)
        blk = simulate_block(params, n, b, seed, done, dt, measure)
        ups += int((blk.signs == 1).sum())
        tot += blk.signs.size
        ks = np.arange(1, n + 1) * (params.T / n)
        u_sum += float(np.abs(blk.theta - ks).max(axis=1).sum())
        th_sum += float(blk.theta[:, -1].sum())
        b_drv = bar * blk.signs.sum(axis=1) - drift * blk.theta[:, -1]
        if measure == "objective":
            zv = np.exp(a * b_drv + 0.5 * a * a * blk.theta[:, -1])
        else:
            zv = np.exp(a * b_drv - 0.5 * a * a * blk.theta[:, -1])
        z_sum += float(zv.sum())
        z_sq += float((zv * zv).sum())
        s = blk.signs.astype(np.float64)
        if n > 1:
            lag_xy += float((s[:, :-1] * s[:, 1:]).sum())
            lag_n += s.shape[0] * (n - 1)
        done += b
    frac = ups / tot
    z_mean = z_sum / done
    z_var = max(z_sq / done - z_mean * z_mean, 0.0)
    return {
        "n_increments": tot,
        "up_fraction": frac,
        "up_stderr": math.sqrt(max(frac * (1 - frac), 1e-300) / tot),
        "mean_u_n": u_sum / done,
        "mean_theta_n": th_sum / done,
        "z_mean": z_mean,
        "z_stderr": math.sqrt(z_var / done),
        "lag1_sign_corr": (lag_xy / lag_n) if lag_n else 0.0,
    }


@dataclass
class McResult:
    estimate: float
    stderr: float
    n_paths: int
    diagnostics: dict = field(default_factory=dict)
    restricted_adversary: bool = False

    def to_dict(self) -> dict:
        out = {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "diagnostics": self.diagnostics,
        }
        if self.restricted_adversary:
            out["restricted_adversary"] = True
        return out


def _replay_block(model: CrrModel, payoffs: DiscretePayoffs, ptable: PolicyTable,
                  x: float, signs: np.ndarray) -> dict:
    """Vectorized forward replay of the policy over a block of sign paths.

    Stopping follows first attainment: the seller cancels on first entry of
    the cancellation region, the buyer exercises on first entry of the
    exercise region (both inclusive of ties), defaulting to n.
    """
    n = model.n
    B = signs.shape[0]
    a1, a2 = model.a1, model.a2
    rec = ptable.layout == "recombined"

    nodes = np.zeros((B, n + 1), dtype=np.int64)
    wealth = np.empty((B, n + 1))
    wealth[:, 0] = x
    exposures = np.zeros((B, n))
    sigma = np.full(B, n, dtype=np.int64)
    tau = np.full(B, n, dtype=np.int64)

    for k in range(n):
        idx = nodes[:, k]
        y = wealth[:, k]
        u = np.empty(B)
        for nd in np.unique(idx):
            node = ptable.levels[k][nd]
            m = idx == nd
            ym = y[m]
            s_hit = node.seller_stops(ym)
            b_hit = node.buyer_stops(ym)
            if s_hit.any():
                sg = sigma[m]
                sg[s_hit & (sg == n)] = k
                sigma[m] = sg
            if b_hit.any():
                tu = tau[m]
                tu[b_hit & (tu == n)] = k
                tau[m] = tu
            u[m] = node.exposure(ym)
        exposures[:, k] = u
        up = signs[:, k] == 1
        wealth[:, k + 1] = y + u * np.where(up, a1, a2)
        nodes[:, k + 1] = (idx + up) if rec else (2 * idx + up)

    stop = np.minimum(sigma, tau)
    q = np.empty(B)
    for lvl in range(n + 1):
        sel_s = (sigma == lvl) & (sigma < tau)
        if sel_s.any():
            q[sel_s] = payoffs.g[lvl][nodes[sel_s, lvl]]
        sel_b = (tau == lvl) & (tau <= sigma)
        if sel_b.any():
            q[sel_b] = payoffs.f[lvl][nodes[sel_b, lvl]]
    v_stop = wealth[np.arange(B), stop]
    shortfall = np.maximum(q - v_stop, 0.0)
    return {
        "nodes": nodes,
        "wealth": wealth,
        "exposures": exposures,
        "sigma": sigma,
        "tau": tau,
        "stop": stop,
        "shortfall": shortfall,
    }


def _mc_run(model, payoffs, ptable, x, num_paths, seed, dt_fine, workers, block_fn):
    """Simulate blocks (optionally in worker threads) and reduce in block order."""
    n = model.n
    dt = _check_dt(model.params, n, dt_fine)
    starts = list(range(0, num_paths, _BLOCK))
    descr = [(s, min(_BLOCK, num_paths - s)) for s in starts]

    def work(d):
        s0, cnt = d
        blk = simulate_block(model.params, n, cnt, seed, s0, dt, "objective")
        return block_fn(blk)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, descr))
    else:
        results = [work(d) for d in descr]
    return results


def _finalize(parts: list[dict], num_paths: int) -> tuple[float, float, dict]:
    s = sum(p["sum"] for p in parts)
    s2 = sum(p["sumsq"] for p in parts)
    ups = sum(p["ups"] for p in parts)
    tot = sum(p["increments"] for p in parts)
    un = sum(p["u_sum"] for p in parts)
    th = sum(p["theta_sum"] for p in parts)
    zs = sum(p["z_sum"] for p in parts)
    mean = s / num_paths
    var = max(s2 / num_paths - mean * mean, 0.0)
    stderr = math.sqrt(var / num_paths) if num_paths > 1 else math.inf
    diags = {
        "up_fraction": ups / tot,
        "mean_u_n": un / num_paths,
        "mean_theta_n": th / num_paths,
        "z_mean": zs / num_paths,
    }
    return mean, stderr, diags


def _common_diag_sums(model: CrrModel, blk: EmbeddedBlock) -> dict:
    params = model.params
    n = model.n
    bar = math.sqrt(params.T / n)
    drift = _drift_rate(params, "objective")
    a = params.mu / params.kappa
    ks = np.arange(1, n + 1) * (params.T / n)
    b_drv = bar * blk.signs.sum(axis=1) - drift * blk.theta[:, -1]
    zv = np.exp(a * b_drv + 0.5 * a * a * blk.theta[:, -1])
    return {
        "ups": int((blk.signs == 1).sum()),
        "increments": blk.signs.size,
        "u_sum": float(np.abs(blk.theta - ks).max(axis=1).sum()),
        "theta_sum": float(blk.theta[:, -1].sum()),
        "z_sum": float(zv.sum()),
    }


def mc_discrete_shortfall(
    model: CrrModel,
    payoffs: DiscretePayoffs,
    ptable: PolicyTable,
    x: float,
    num_paths: int,
    seed: int,
    dt_fine: Optional[float] = None,
    workers: int = 1,
) -> McResult:
    """Monte Carlo estimate of the expected discounted shortfall of the
    optimal hedge replayed on embedded sign paths (an unbiased estimator of
    the recursion's root value)."""
    if ptable.n != model.n:
        raise ValueError(f"policy built for n={ptable.n}, model has n={model.n}")

    def block_fn(blk: EmbeddedBlock) -> dict:
        rep = _replay_block(model, payoffs, ptable, x, blk.signs)
        sf = rep["shortfall"]
        out = _common_diag_sums(model, blk)
        out["sum"] = float(sf.sum())
        out["sumsq"] = float((sf * sf).sum())
        return out

    parts = _mc_run(model, payoffs, ptable, x, num_paths, seed, dt_fine, workers, block_fn)
    mean, stderr, diags = _finalize(parts, num_paths)
    return McResult(estimate=mean, stderr=stderr, n_paths=num_paths, diagnostics=diags)


def mc_continuous_diagnostic(
    model: CrrModel,
    payoffs: DiscretePayoffs,
    ptable: PolicyTable,
    x: float,
    num_paths: int,
    seed: int,
    dt_fine: Optional[float] = None,
    workers: int = 1,
) -> McResult:
    """Shortfall of the lifted hedge against the TRUE path payoffs.

    Stopping decisions are the lifted discrete rules, so the buyer ranges
    over the restricted family of embedded stopping times only: the result
    is a lower bound on the unrestricted continuous shortfall and is
    reported as a diagnostic, never as the continuous risk.
    """
    if ptable.n != model.n:
        raise ValueError(f"policy built for n={ptable.n}, model has n={model.n}")
    spec = payoffs.spec
    if spec.summary_low is None or spec.summary_penalty is None:
        raise ValueError(
            f"payoff {spec.name!r} lacks summary functionals for continuous evaluation"
        )
    params = model.params
    n = model.n
    T = params.T
    bar = math.sqrt(T / n)
    kappa = params.kappa
    r = params.r

    def block_fn(blk: EmbeddedBlock) -> dict:
        rep = _replay_block(model, payoffs, ptable, x, blk.signs)
        B = blk.signs.shape[0]
        sigma, tau, stop = rep["sigma"], rep["tau"], rep["stop"]
        wealth, expos, nodes = rep["wealth"], rep["exposures"], rep["nodes"]
        cums = np.concatenate(
            [np.zeros((B, 1)), np.cumsum(blk.signs.astype(np.float64), axis=1)], axis=1
        )
        nT = (blk.theta <= T).sum(axis=1)

        m = stop
        theta_m = np.where(m > 0, blk.theta[np.arange(B), np.maximum(m - 1, 0)], 0.0)
        # phi maps index m to time theta_m ^ T for m < n and to T for m = n
        t_stop = np.where(m < n, np.minimum(theta_m, T), T)

        on_grid = (m < n) & (theta_m <= T)       # stop at an exit time before T
        frozen = (m == n) & (blk.theta[:, -1] <= T)  # all exits done; portfolio frozen

        bstar = np.where(on_grid, bar * cums[np.arange(B), m], blk.bstar_T)
        ex_hi = np.where(
            on_grid,
            np.where(m > 0, blk.exmax[np.arange(B), np.maximum(m - 1, 0)], 0.0),
            blk.exmax_T,
        )
        ex_lo = np.where(
            on_grid,
            np.where(m > 0, blk.exmin[np.arange(B), np.maximum(m - 1, 0)], 0.0),
            blk.exmin_T,
        )
        s_t = params.S0 * np.exp(r * t_stop + kappa * bstar)
        s_hi = params.S0 * np.exp(kappa * ex_hi)
        s_lo = params.S0 * np.exp(kappa * ex_lo)

        fv = np.asarray(spec.summary_low(t_stop, s_t, s_hi, s_lo), dtype=np.float64)
        dv = np.asarray(spec.summary_penalty(t_stop, s_t, s_hi, s_lo), dtype=np.float64)
        disc = np.exp(-r * t_stop)
        q_true = disc * np.where(sigma < tau, fv + dv, fv)

        # portfolio value at the continuous stopping time
        v = wealth[np.arange(B), m].copy()
        interp = ~(on_grid | frozen)  # t_stop = T strictly inside an embedding interval
        if interp.any():
            j = nT[interp]
            rows = np.nonzero(interp)[0]
            base = wealth[rows, j]
            u = expos[rows, j]
            ratio = np.exp(kappa * (blk.bstar_T[rows] - bar * cums[rows, j]))
            v[rows] = base + u * (ratio - 1.0)

        sf = np.maximum(q_true - v, 0.0)
        out = _common_diag_sums(model, blk)
        out["sum"] = float(sf.sum())
        out["sumsq"] = float((sf * sf).sum())
        return out

    parts = _mc_run(model, payoffs, ptable, x, num_paths, seed, dt_fine, workers, block_fn)
    mean, stderr, diags = _finalize(parts, num_paths)
    return McResult(
        estimate=mean,
        stderr=stderr,
        n_paths=num_paths,
        diagnostics=diags,
        restricted_adversary=True,
    )
