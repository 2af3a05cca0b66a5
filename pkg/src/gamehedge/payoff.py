"""Path-dependent payoff pairs and their discretization onto the sign tree.

A payoff spec carries two nonnegative functionals of the price path: the
buyer payoff ``F_t`` and the cancellation penalty ``Delta_t`` (the seller
pays ``G_t = F_t + Delta_t`` when cancelling first).  Discretization
evaluates both on the piecewise-constant step path of each tree node and
applies the bond discount, producing per-node low/high payoffs ``f``/``g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .market import CrrModel, stock_price_from_counts


class PayoffSpecError(ValueError):
    """Raised when a payoff functional misbehaves (e.g. returns a negative value)."""


class StepPath:
    """Right-continuous step path on [0, k*T/n] with jumps at j*T/n.

    ``values[j]`` is the level on [j*T/n, (j+1)*T/n); ``values[0] = S0``.
    """

    __slots__ = ("times", "values")

    def __init__(self, times: np.ndarray, values: np.ndarray):
        self.times = times
        self.values = values

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    @property
    def maximum(self) -> float:
        return float(self.values.max())

    @property
    def minimum(self) -> float:
        return float(self.values.min())


PathFunctional = Callable[[float, StepPath], float]
SummaryFunctional = Callable[[float, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PayoffSpec:
    """Payoff pair (F, Delta) with a declared Lipschitz constant.

    ``low`` and ``penalty`` map (t, path) to nonnegative values.  When
    ``path_independent`` is true both depend on the path only through
    (t, v_t) and tree nodes may be recombined.  ``summary_low`` /
    ``summary_penalty`` are optional vectorized forms evaluating the same
    functionals from (t, v_t, running max, running min); the continuous
    Monte Carlo diagnostic requires them.
    """

    name: str
    low: PathFunctional
    penalty: PathFunctional
    lipschitz_L: float
    path_independent: bool
    params: dict = field(default_factory=dict)
    summary_low: Optional[SummaryFunctional] = None
    summary_penalty: Optional[SummaryFunctional] = None

    def __repr__(self) -> str:  # params carry the full identity
        args = ", ".join(f"{k}={v}" for k, v in self.params.items())
        return f"PayoffSpec({self.name}({args}))"


@dataclass(frozen=True)
class DiscretePayoffs:
    """Discounted per-node payoffs on the n-step tree.

    ``layout`` is "full" (level k has 2^k nodes ordered by sign word, first
    step = most significant bit, up = 1) or "recombined" (level k has k+1
    nodes indexed by the number of up moves).  ``g[n]`` equals ``f[n]``.
    """

    n: int
    layout: str
    f: tuple[np.ndarray, ...]
    g: tuple[np.ndarray, ...]
    spec: PayoffSpec
    model: CrrModel

    def __post_init__(self) -> None:
        for k in range(self.n + 1):
            fk, gk = self.f[k], self.g[k]
            if not (np.isfinite(fk).all() and np.isfinite(gk).all()):
                raise PayoffSpecError(f"non-finite payoff at depth {k}")
            if (fk < 0).any():
                raise PayoffSpecError(f"negative low payoff at depth {k}")
            if (gk < fk).any():
                raise PayoffSpecError(f"high payoff below low payoff at depth {k}")

    def node_count(self, k: int) -> int:
        return k + 1 if self.layout == "recombined" else 1 << k

    def child_up(self, k: int, idx: int) -> int:
        """Index at depth k+1 after an up move from node ``idx`` at depth k."""
        return idx + 1 if self.layout == "recombined" else 2 * idx + 1

    def child_down(self, k: int, idx: int) -> int:
        return idx if self.layout == "recombined" else 2 * idx

    def scale(self) -> float:
        """Largest payoff across the tree; the natural tolerance scale."""
        return max(float(self.g[k].max()) for k in range(self.n + 1))


def _full_level_paths(model: CrrModel, k: int) -> np.ndarray:
    """Price paths of all 2^k nodes at depth k, shape (2^k, k+1)."""
    p = model.params
    out = np.empty((1 << k, k + 1))
    out[:, 0] = p.S0
    if k == 0:
        return out
    # bit (k-1-j) of the node index is step j+1; cumulative signed sums by bit tricks
    idx = np.arange(1 << k)
    signs = np.empty((1 << k, k))
    for j in range(k):
        signs[:, j] = np.where((idx >> (k - 1 - j)) & 1, 1.0, -1.0)
    cum = np.cumsum(signs, axis=1)
    steps = np.arange(1, k + 1)
    out[:, 1:] = p.S0 * np.exp(p.r * steps * model.dt + model.step_vol * cum)
    return out


def _recombined_path(model: CrrModel, k: int, n_up: int) -> np.ndarray:
    """A canonical path (all ups first) reaching lattice node (k, n_up)."""
    word = [1] * n_up + [-1] * (k - n_up)
    p = model.params
    vals = np.empty(k + 1)
    vals[0] = p.S0
    c = 0.0
    for j, s in enumerate(word, start=1):
        c += s
        vals[j] = p.S0 * math.exp(p.r * j * model.dt + model.step_vol * c)
    return vals


def _eval_pair(spec: PayoffSpec, t: float, path: StepPath) -> tuple[float, float]:
    fv = float(spec.low(t, path))
    dv = float(spec.penalty(t, path))
    if not (math.isfinite(fv) and math.isfinite(dv)) or fv < 0 or dv < 0:
        raise PayoffSpecError(
            f"payoff spec {spec.name!r} returned invalid values F={fv}, Delta={dv} at t={t}"
        )
    return fv, dv


def discretize(spec: PayoffSpec, model: CrrModel, layout: str = "auto") -> DiscretePayoffs:
    """Evaluate (F, G) on every node's step path and discount.

    ``f_k = exp(-r*k*T/n) * F(k*T/n, step path)`` and ``g_k`` likewise with
    ``G = F + Delta``; at the terminal depth ``g`` is set to ``f`` (the
    seller's cancellation right lapses at maturity).
    """
    if layout == "auto":
        layout = "recombined" if spec.path_independent else "full"
    if layout not in ("full", "recombined"):
        raise ValueError(f"unknown layout {layout!r}")
    if layout == "recombined" and not spec.path_independent:
        raise ValueError(f"payoff {spec.name!r} is path-dependent; recombined layout invalid")
    n = model.n
    f_levels: list[np.ndarray] = []
    g_levels: list[np.ndarray] = []
    for k in range(n + 1):
        t = k * model.dt
        disc = math.exp(-model.params.r * t)
        times = np.arange(k + 1) * model.dt
        if layout == "full":
            paths = _full_level_paths(model, k)
            fk = np.empty(paths.shape[0])
            gk = np.empty(paths.shape[0])
            for i in range(paths.shape[0]):
                fv, dv = _eval_pair(spec, t, StepPath(times, paths[i]))
                fk[i] = disc * fv
                gk[i] = disc * (fv + dv)
        else:
            fk = np.empty(k + 1)
            gk = np.empty(k + 1)
            for j in range(k + 1):
                vals = _recombined_path(model, k, j)
                fv, dv = _eval_pair(spec, t, StepPath(times, vals))
                fk[j] = disc * fv
                gk[j] = disc * (fv + dv)
        f_levels.append(fk)
        g_levels.append(gk)
    g_levels[n] = f_levels[n].copy()
    return DiscretePayoffs(
        n=n, layout=layout, f=tuple(f_levels), g=tuple(g_levels), spec=spec, model=model
    )


def audit_path_independence(spec: PayoffSpec, model: CrrModel, rng: np.random.Generator,
                            samples: int = 50) -> bool:
    """Spot-check that F and Delta agree across sign permutations at fixed (k, #up)."""
    for _ in range(samples):
        k = int(rng.integers(1, model.n + 1))
        word = rng.choice([-1, 1], size=k)
        perm = rng.permutation(word)
        t = k * model.dt

        def path_of(w: np.ndarray) -> StepPath:
            vals = np.empty(k + 1)
            vals[0] = model.params.S0
            cum = np.cumsum(w)
            steps = np.arange(1, k + 1)
            vals[1:] = model.params.S0 * np.exp(
                model.params.r * steps * model.dt + model.step_vol * cum
            )
            return StepPath(np.arange(k + 1) * model.dt, vals)

        pa, pb = path_of(np.asarray(word, float)), path_of(np.asarray(perm, float))
        if not math.isclose(spec.low(t, pa), spec.low(t, pb), rel_tol=1e-12, abs_tol=1e-12):
            return False
        if not math.isclose(spec.penalty(t, pa), spec.penalty(t, pb), rel_tol=1e-12, abs_tol=1e-12):
            return False
    return True


AMERICAN_PENALTY_FACTOR = 1.0e6  # sentinel making seller cancellation never optimal


def builtin(name: str, **params: float) -> PayoffSpec:
    """Fixture payoff library.

    Known names: ``game_put_const_penalty(K, delta)``, ``american_put(K)``,
    ``lookback_put(K, delta=0)``, ``floating_lookback(delta=0)``.
    """
    if name == "game_put_const_penalty":
        K = float(params.pop("K"))
        delta = float(params.pop("delta"))
        _reject_extras(name, params)
        if K <= 0 or delta < 0:
            raise PayoffSpecError(f"game_put_const_penalty needs K > 0, delta >= 0")
        return PayoffSpec(
            name=name,
            low=lambda t, path: max(K - path.terminal, 0.0),
            penalty=lambda t, path: delta,
            lipschitz_L=1.0,
            path_independent=True,
            params={"K": K, "delta": delta},
            summary_low=lambda t, s, smax, smin: np.maximum(K - s, 0.0),
            summary_penalty=lambda t, s, smax, smin: np.full_like(s, delta),
        )
    if name == "american_put":
        K = float(params.pop("K"))
        _reject_extras(name, params)
        if K <= 0:
            raise PayoffSpecError("american_put needs K > 0")
        delta = AMERICAN_PENALTY_FACTOR * K
        return PayoffSpec(
            name=name,
            low=lambda t, path: max(K - path.terminal, 0.0),
            penalty=lambda t, path: delta,
            lipschitz_L=1.0,
            path_independent=True,
            params={"K": K},
            summary_low=lambda t, s, smax, smin: np.maximum(K - s, 0.0),
            summary_penalty=lambda t, s, smax, smin: np.full_like(s, delta),
        )
    if name == "lookback_put":
        K = float(params.pop("K"))
        delta = float(params.pop("delta", 0.0))
        _reject_extras(name, params)
        if K <= 0 or delta < 0:
            raise PayoffSpecError("lookback_put needs K > 0, delta >= 0")
        return PayoffSpec(
            name=name,
            low=lambda t, path: max(K - path.minimum, 0.0),
            penalty=lambda t, path: delta,
            lipschitz_L=1.0,
            path_independent=False,
            params={"K": K, "delta": delta},
            summary_low=lambda t, s, smax, smin: np.maximum(K - smin, 0.0),
            summary_penalty=lambda t, s, smax, smin: np.full_like(s, delta),
        )
    if name == "floating_lookback":
        delta = float(params.pop("delta", 0.0))
        _reject_extras(name, params)
        if delta < 0:
            raise PayoffSpecError("floating_lookback needs delta >= 0")
        return PayoffSpec(
            name=name,
            low=lambda t, path: path.maximum - path.terminal,
            penalty=lambda t, path: delta,
            lipschitz_L=2.0,
            path_independent=False,
            params={"delta": delta},
            summary_low=lambda t, s, smax, smin: smax - s,
            summary_penalty=lambda t, s, smax, smin: np.full_like(s, delta),
        )
    raise PayoffSpecError(f"unknown payoff name {name!r}")


def _reject_extras(name: str, params: dict) -> None:
    if params:
        raise PayoffSpecError(f"unknown parameters for {name}: {sorted(params)}")


def spec_from_config(doc: dict) -> PayoffSpec:
    """Build a builtin payoff from a JSON-style mapping with a ``name`` field."""
    doc = dict(doc)
    try:
        name = doc.pop("name")
    except KeyError:
        raise PayoffSpecError("payoff config needs a 'name' field") from None
    return builtin(name, **doc)
