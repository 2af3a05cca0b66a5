"""n-step binomial (CRR) approximation of a Black-Scholes market.

The continuous market has bond ``b_t = b0*exp(r*t)`` and stock
``S_t = S0*exp(r*t + kappa*B*_t)`` where ``B*`` is a Brownian motion with
drift ``mu/kappa - kappa/2``.  The n-step approximation moves the stock by
``exp(r*T/n + kappa*sqrt(T/n)*xi)`` per step with signs ``xi = +-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class ParameterError(ValueError):
    """Raised for non-finite or out-of-range market parameters."""


@dataclass(frozen=True)
class MarketParams:
    """Black-Scholes market parameters.

    r : interest rate per unit time
    kappa : volatility, > 0
    mu : drift parameter of the stock exponent
    T : horizon, > 0
    S0 : initial stock price, > 0
    b0 : initial bond price, > 0
    """

    r: float
    kappa: float
    mu: float
    T: float
    S0: float
    b0: float = 1.0

    def __post_init__(self) -> None:
        for name in ("r", "kappa", "mu", "T", "S0", "b0"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ParameterError(f"{name} must be a finite number, got {v!r}")
        if self.kappa <= 0:
            raise ParameterError(f"kappa must be > 0, got {self.kappa}")
        if self.T <= 0:
            raise ParameterError(f"T must be > 0, got {self.T}")
        if self.S0 <= 0:
            raise ParameterError(f"S0 must be > 0, got {self.S0}")
        if self.b0 <= 0:
            raise ParameterError(f"b0 must be > 0, got {self.b0}")

    @classmethod
    def from_dict(cls, doc: dict) -> "MarketParams":
        """Build from a JSON-style mapping with keys r, kappa, mu, T, S0, b0."""
        required = {"r", "kappa", "mu", "T", "S0"}
        missing = required - doc.keys()
        if missing:
            raise ParameterError(f"market config missing fields: {sorted(missing)}")
        unknown = doc.keys() - (required | {"b0"})
        if unknown:
            raise ParameterError(f"unknown market fields: {sorted(unknown)}")
        return cls(
            r=float(doc["r"]),
            kappa=float(doc["kappa"]),
            mu=float(doc["mu"]),
            T=float(doc["T"]),
            S0=float(doc["S0"]),
            b0=float(doc.get("b0", 1.0)),
        )


@dataclass(frozen=True)
class PathNode:
    """A node of the (non-recombined) sign tree: depth k and the realized signs."""

    k: int
    word: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.k != len(self.word):
            raise ValueError(f"word length {len(self.word)} != depth {self.k}")
        if any(s not in (-1, 1) for s in self.word):
            raise ValueError("word entries must be +1 or -1")

    @property
    def n_up(self) -> int:
        return sum(1 for s in self.word if s == 1)


@dataclass(frozen=True)
class CrrModel:
    """Derived per-step quantities of the n-step binomial market.

    rn     : per-step rate exp(r*T/n) - 1
    a1, a2 : up/down returns exp(+-kappa*sqrt(T/n)) - 1 of the discounted stock
    p_obj  : objective up-probability
    p_mart : martingale up-probability (makes the discounted stock a martingale)
    """

    params: MarketParams
    n: int
    dt: float
    rn: float
    a1: float
    a2: float
    p_obj: float
    p_mart: float

    @property
    def step_vol(self) -> float:
        """Per-step log move kappa*sqrt(T/n)."""
        return self.params.kappa * math.sqrt(self.dt)


def build_crr(params: MarketParams, n: int) -> CrrModel:
    """Construct the n-step binomial approximation of the market.

    All derived constants come from closed forms (no iterative accumulation):
    ``rn = exp(r*T/n) - 1``, ``a1 = exp(kappa*sqrt(T/n)) - 1``,
    ``a2 = exp(-kappa*sqrt(T/n)) - 1``,
    ``p_obj = 1/(exp((kappa - 2*mu/kappa)*sqrt(T/n)) + 1)`` and
    ``p_mart = 1/(exp(kappa*sqrt(T/n)) + 1)``.
    """
    if not isinstance(n, int) or n < 1:
        raise ParameterError(f"step count n must be an integer >= 1, got {n!r}")
    dt = params.T / n
    sq = math.sqrt(dt)
    rn = math.expm1(params.r * dt)
    a1 = math.expm1(params.kappa * sq)
    a2 = math.expm1(-params.kappa * sq)
    p_obj = 1.0 / (math.exp((params.kappa - 2.0 * params.mu / params.kappa) * sq) + 1.0)
    p_mart = 1.0 / (math.exp(params.kappa * sq) + 1.0)
    return CrrModel(params=params, n=n, dt=dt, rn=rn, a1=a1, a2=a2, p_obj=p_obj, p_mart=p_mart)


def stock_price(model: CrrModel, node: PathNode) -> float:
    """Undiscounted stock price at a tree node: S0*exp(k*r*T/n + kappa*sqrt(T/n)*sum(signs))."""
    if node.k > model.n:
        raise ValueError(f"node depth {node.k} exceeds model steps {model.n}")
    return stock_price_from_counts(model, node.k, node.n_up)


def stock_price_from_counts(model: CrrModel, k: int, n_up: int) -> float:
    """Stock price at depth k after ``n_up`` up-moves (recombined coordinates)."""
    if not 0 <= n_up <= k <= model.n:
        raise ValueError(f"invalid lattice coordinates (k={k}, n_up={n_up})")
    p = model.params
    m = 2 * n_up - k
    return p.S0 * math.exp(p.r * k * model.dt + model.step_vol * m)


def discount_factor(model: CrrModel, k: int) -> float:
    """(1 + rn)^(-k), equal to exp(-r*k*T/n)."""
    if not 0 <= k <= model.n:
        raise ValueError(f"depth k={k} outside 0..{model.n}")
    return math.exp(-model.params.r * k * model.dt)


def node_from_bits(k: int, bits: int) -> PathNode:
    """Node whose word is read off the low k bits of ``bits`` (bit j is sign j+1; 1 = up).

    Bit 0 is the first step, so node index at depth k equals ``bits`` with this
    convention reversed per level; used only as a test helper.
    """
    word = tuple(1 if (bits >> j) & 1 else -1 for j in range(k))
    return PathNode(k=k, word=word)


def words_at_depth(k: int) -> Sequence[tuple[int, ...]]:
    """All 2^k sign words at depth k, in lexicographic (down-first) order."""
    out = []
    for bits in range(1 << k):
        out.append(tuple(1 if (bits >> (k - 1 - j)) & 1 else -1 for j in range(k)))
    return out
