"""Exact calculus of continuous, nonincreasing, nonnegative piecewise-linear
functions of wealth, and the constrained Bellman composition that drives the
backward recursion.

A function is stored as strictly increasing breakpoints (starting at 0) with
nonincreasing nonnegative values, linear in between and constant beyond the
last breakpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._pwl_py import CHORD_PRUNE_REL, prune_arrays


class PwlError(ValueError):
    """Raised on invalid piecewise-linear data or evaluation points."""


# structural validation tolerance (relative to the value scale)
_VALID_REL = 1e-9


class PwlFn:
    """Continuous nonincreasing nonnegative piecewise-linear function on [0, inf)."""

    __slots__ = ("breaks", "values")

    def __init__(self, breaks, values, *, validate: bool = True):
        b = np.ascontiguousarray(breaks, dtype=np.float64)
        v = np.ascontiguousarray(values, dtype=np.float64)
        if validate:
            if b.ndim != 1 or b.shape != v.shape or len(b) == 0:
                raise PwlError("breaks/values must be equal-length 1-d arrays")
            if b[0] != 0.0:
                raise PwlError(f"first breakpoint must be 0, got {b[0]}")
            if len(b) > 1 and not (np.diff(b) > 0).all():
                raise PwlError("breakpoints must be strictly increasing")
            if not np.isfinite(v).all():
                raise PwlError("values must be finite")
            scale = abs(v[0]) if len(v) else 1.0
            tol = _VALID_REL * max(scale, 1.0)
            mono = np.minimum.accumulate(v)
            if (v - mono > tol).any():
                raise PwlError("values must be nonincreasing")
            if (mono < -tol).any():
                raise PwlError("values must be nonnegative")
            v = np.maximum(mono, 0.0)
        self.breaks = b
        self.values = v

    @staticmethod
    def hinge(c: float) -> "PwlFn":
        """y -> (c - y)^+ for c >= 0."""
        if not math.isfinite(c) or c < 0:
            raise PwlError(f"hinge level must be finite and >= 0, got {c}")
        if c == 0.0:
            return PwlFn(np.array([0.0]), np.array([0.0]), validate=False)
        return PwlFn(np.array([0.0, c]), np.array([c, 0.0]), validate=False)

    @staticmethod
    def zero() -> "PwlFn":
        return PwlFn.hinge(0.0)

    def __call__(self, y):
        arr = np.asarray(y, dtype=np.float64)
        if (arr < 0).any():
            raise PwlError("evaluation points must be >= 0")
        out = np.interp(arr, self.breaks, self.values)
        return float(out) if np.isscalar(y) or arr.ndim == 0 else out

    def at0(self) -> float:
        return float(self.values[0])

    @property
    def tail(self) -> float:
        return float(self.values[-1])

    def support_end(self) -> float:
        """Smallest breakpoint from which the function is identically 0 (inf if tail > 0)."""
        if self.values[-1] != 0.0:
            return math.inf
        nz = np.nonzero(self.values > 0.0)[0]
        if len(nz) == 0:
            return 0.0
        return float(self.breaks[min(nz[-1] + 1, len(self.breaks) - 1)])

    def __repr__(self) -> str:
        return f"PwlFn({len(self.breaks)} breaks, f(0)={self.values[0]:.6g})"


def hinge(c: float) -> PwlFn:
    return PwlFn.hinge(c)


def _merge(f: PwlFn, g: PwlFn, take_min: bool, prune_rel: float = CHORD_PRUNE_REL) -> PwlFn:
    grid = np.union1d(f.breaks, g.breaks)
    vf = np.interp(grid, f.breaks, f.values)
    vg = np.interp(grid, g.breaks, g.values)
    d = vf - vg
    idx = np.nonzero(d[:-1] * d[1:] < 0)[0]
    if idx.size:
        yc = grid[idx] + (grid[idx + 1] - grid[idx]) * d[idx] / (d[idx] - d[idx + 1])
        grid = np.insert(grid, idx + 1, yc)
        vf = np.interp(grid, f.breaks, f.values)
        vg = np.interp(grid, g.breaks, g.values)
    out = np.minimum(vf, vg) if take_min else np.maximum(vf, vg)
    b, v = prune_arrays(grid, out, prune_rel)
    return PwlFn(b, v, validate=False)


def pointwise_min(f: PwlFn, g: PwlFn, prune_rel: float = CHORD_PRUNE_REL) -> PwlFn:
    """Exact lower envelope of two functions."""
    return _merge(f, g, True, prune_rel)


def pointwise_max(f: PwlFn, g: PwlFn, prune_rel: float = CHORD_PRUNE_REL) -> PwlFn:
    """Exact upper envelope of two functions."""
    return _merge(f, g, False, prune_rel)


_KINDS = {
    (0, True): "left_endpoint",    # u = -y/a1
    (1, True): "right_endpoint",   # u = -y/a2
    (0, False): "up_breakpoint",   # pins the up-argument at a breakpoint of h1
    (1, False): "down_breakpoint", # pins the down-argument at a breakpoint of h2
}


@dataclass(frozen=True)
class AffinePolicyPiece:
    """Optimal exposure rule on one wealth interval: u(y) = alpha + beta*y.

    The piece pins one of the two composed arguments: the up-argument at
    ``pin`` when ``on_up`` (so u = (pin - y)/a1), else the down-argument
    (u = (pin - y)/a2).  ``pin == 0`` corresponds to the interval endpoints
    of the feasible exposure set.
    """

    y_lo: float
    y_hi: float
    alpha: float
    beta: float
    kind: str
    pin: float
    on_up: bool

    def u(self, y: float) -> float:
        return self.alpha + self.beta * y


def bellman_compose(
    h1: PwlFn, h2: PwlFn, p: float, a1: float, a2: float,
    prune_rel: float = CHORD_PRUNE_REL,
) -> tuple[PwlFn, list[AffinePolicyPiece]]:
    """Minimize p*h1(y + u*a1) + (1-p)*h2(y + u*a2) over feasible exposures.

    The exposure u ranges over [-y/a1, -y/a2], the set keeping both next-step
    wealths nonnegative.  Returns the exact value function (again continuous,
    nonincreasing, nonnegative) and the minimizing rule as affine pieces,
    ties resolved toward the smallest u.
    """
    if not (0.0 < p < 1.0):
        raise PwlError(f"probability must be in (0,1), got {p}")
    if not (a1 > 0.0 > a2):
        raise PwlError(f"need a1 > 0 > a2, got a1={a1}, a2={a2}")
    from ._backend import compose_arrays

    B, V, starts, types, pins = compose_arrays(
        h1.breaks, h1.values, h2.breaks, h2.values, float(p), float(a1), float(a2),
        float(prune_rel),
    )
    psi = PwlFn(B, V, validate=False)
    pieces = []
    for i in range(len(starts)):
        on_up = types[i] == 0
        a = a1 if on_up else a2
        pin = float(pins[i])
        pieces.append(
            AffinePolicyPiece(
                y_lo=float(starts[i]),
                y_hi=float(starts[i + 1]) if i + 1 < len(starts) else math.inf,
                alpha=pin / a,
                beta=-1.0 / a,
                kind=_KINDS[(int(types[i]), pin == 0.0)],
                pin=pin,
                on_up=bool(on_up),
            )
        )
    return psi, pieces


def equality_intervals(f: PwlFn, g: PwlFn, tol: float) -> np.ndarray:
    """Closed intervals where |f - g| <= tol, as a flat [lo1, hi1, lo2, ...] array.

    The final upper bound may be +inf when the two functions agree on the
    common constant tail.  Intended for one-signed differences (f >= g or
    f <= g everywhere), which is how stopping regions arise.
    """
    grid = np.union1d(f.breaks, g.breaks)
    d = np.abs(np.interp(grid, f.breaks, f.values) - np.interp(grid, g.breaks, g.values))
    near = d <= tol
    m = len(grid)
    bounds: list[float] = []
    i = 0
    while i < m:
        if not near[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and near[j + 1]:
            j += 1
        lo = grid[i]
        hi = math.inf if j == m - 1 else grid[j]
        if j == i and hi != math.inf:
            hi = lo  # isolated touch point
        bounds.extend([lo, hi])
        i = j + 1
    return np.asarray(bounds)


def in_intervals(bounds: np.ndarray, y) -> np.ndarray:
    """Membership of y in the closed intervals encoded by ``equality_intervals``."""
    arr = np.asarray(y, dtype=np.float64)
    if bounds.size == 0:
        out = np.zeros(arr.shape, dtype=bool)
        return out if arr.ndim else bool(out)
    idx = np.searchsorted(bounds, arr, side="right")
    inside = (idx % 2) == 1
    # closed right endpoints
    hit_hi = np.isin(arr, bounds[1::2])
    out = inside | hit_hi
    return out if arr.ndim else bool(out)
