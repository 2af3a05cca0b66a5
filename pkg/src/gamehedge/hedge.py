"""Forward replay of a hedge along realized sign paths.

Replaying the optimal policy reproduces the recursion exactly: discounted
wealth follows the one-step self-financing update
``V_{k+1} = V_k + u_k * (exp(kappa*sqrt(T/n)*xi) - 1)``, the seller cancels
on first entry of the cancellation region, the buyer best-responds on first
entry of the exercise region, and the expected realized shortfall equals
the root value function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .market import CrrModel
from .payoff import DiscretePayoffs
from .risk import PolicyTable


@dataclass
class HedgeTrajectory:
    """One replayed path: wealth, units, stopping decisions, realized shortfall.

    ``wealth`` is discounted and has n+1 entries; ``exposure[k]`` is the
    stock-value exposure chosen at step k, with ``gamma[k]`` / ``beta[k]``
    the implied stock and bond units held over (k, k+1].
    """

    word: tuple[int, ...]
    wealth: np.ndarray
    exposure: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    seller_flags: np.ndarray
    buyer_flags: np.ndarray
    sigma: int
    tau: int
    payoff_at_stop: float
    shortfall: float
    shortfall_custom: Optional[float] = None

    @property
    def stop_k(self) -> int:
        return min(self.sigma, self.tau)


def _node_index(layout: str, idx: int, sign: int) -> int:
    up = 1 if sign == 1 else 0
    return idx + up if layout == "recombined" else 2 * idx + up


def replay(
    model: CrrModel,
    payoffs: DiscretePayoffs,
    ptable: PolicyTable,
    x: float,
    word: Sequence[int],
    buyer_stop: Optional[int] = None,
) -> HedgeTrajectory:
    """Replay the policy along one sign path.

    ``buyer_stop`` optionally evaluates the realized shortfall against a
    caller-chosen buyer exercise step as well (the seller still follows the
    policy's cancellation rule).
    """
    n = model.n
    word = tuple(int(s) for s in word)
    if len(word) != n or any(s not in (-1, 1) for s in word):
        raise ValueError(f"path must be {n} signs of +-1")
    if x < 0:
        raise ValueError("initial capital must be >= 0")
    if ptable.layout != payoffs.layout:
        raise ValueError("policy and payoffs use different tree layouts")

    a1, a2 = model.a1, model.a2
    wealth = np.empty(n + 1)
    exposure = np.zeros(n)
    gamma = np.zeros(n)
    beta = np.zeros(n)
    seller_flags = np.zeros(n + 1, dtype=bool)
    buyer_flags = np.zeros(n + 1, dtype=bool)

    wealth[0] = x
    sigma, tau = n, n
    idx = 0
    m_signed = 0
    for k in range(n):
        node = ptable.levels[k][idx]
        y = float(wealth[k])
        s_hit = bool(node.seller_stops(y))
        b_hit = bool(node.buyer_stops(y))
        seller_flags[k] = s_hit
        buyer_flags[k] = b_hit
        if s_hit and sigma == n:
            sigma = k
        if b_hit and tau == n:
            tau = k
        u = float(node.exposure(y))
        exposure[k] = u
        s_disc = model.params.S0 * math.exp(model.step_vol * m_signed)
        gamma[k] = u / s_disc
        beta[k] = (y - u) / model.params.b0
        wealth[k + 1] = y + u * (a1 if word[k] == 1 else a2)
        idx = _node_index(ptable.layout, idx, word[k])
        m_signed += word[k]
    seller_flags[n] = True
    buyer_flags[n] = True

    def q_value(s: int, t: int) -> float:
        m = min(s, t)
        node_idx = _path_node_index(payoffs.layout, word, m)
        if s < t:
            return float(payoffs.g[s][node_idx])
        return float(payoffs.f[t][node_idx])

    payoff_at_stop = q_value(sigma, tau)
    shortfall = max(payoff_at_stop - wealth[min(sigma, tau)], 0.0)
    shortfall_custom = None
    if buyer_stop is not None:
        if not 0 <= buyer_stop <= n:
            raise ValueError("buyer_stop must be in 0..n")
        qc = q_value(sigma, buyer_stop)
        shortfall_custom = max(qc - wealth[min(sigma, buyer_stop)], 0.0)

    return HedgeTrajectory(
        word=word,
        wealth=wealth,
        exposure=exposure,
        gamma=gamma,
        beta=beta,
        seller_flags=seller_flags,
        buyer_flags=buyer_flags,
        sigma=sigma,
        tau=tau,
        payoff_at_stop=payoff_at_stop,
        shortfall=shortfall,
        shortfall_custom=shortfall_custom,
    )


def _path_node_index(layout: str, word: Sequence[int], k: int) -> int:
    idx = 0
    for s in word[:k]:
        idx = _node_index(layout, idx, s)
    return idx


def shortfall_expectation(
    model: CrrModel,
    payoffs: DiscretePayoffs,
    ptable: PolicyTable,
    x: float,
) -> float:
    """Exact expected shortfall of the policy by exhaustive path enumeration.

    The buyer is adversarial through the backward min/max recursion (the
    first-attainment stopping pair per path), so for the optimal policy this
    equals the engine's root value.
    """
    n = model.n
    if n > 24:
        raise ValueError("exhaustive enumeration requires n <= 24")
    p = model.p_obj
    total = 0.0
    for bits in range(1 << n):
        word = tuple(1 if (bits >> (n - 1 - j)) & 1 else -1 for j in range(n))
        traj = replay(model, payoffs, ptable, x, word)
        ups = sum(1 for s in word if s == 1)
        weight = (p ** ups) * ((1.0 - p) ** (n - ups))
        total += weight * traj.shortfall
    return total
