"""Pure numpy kernel for the constrained one-step Bellman composition.

Given nonincreasing piecewise-linear h1, h2 on [0, inf) and returns
a1 > 0 > a2, computes

    psi(y) = min_{u in [-y/a1, -y/a2]} p*h1(y + u*a1) + (1-p)*h2(y + u*a2)

exactly, as the lower envelope of finitely many candidate curves.  Writing
lam = -a2/(a1-a2), the constraint couples the two arguments through
y = lam*Y1 + (1-lam)*Y2 with Y1, Y2 >= 0, so the minimum over the interval
is attained either by pinning Y1 at a breakpoint b of h1 (candidate curve
p*h1(b) + (1-p)*h2((y-lam*b)/(1-lam)) on y >= lam*b) or by pinning Y2 at a
breakpoint of h2.  The b = 0 pins are the interval endpoints u = -y/a1 and
u = -y/a2.  Every candidate enters its domain on an already-present curve,
so the left-fold over candidates ordered by entry point stays continuous.

Ties are resolved toward the smallest minimizer u, tracked per envelope
segment through owner labels.
"""

from __future__ import annotations

import math

import numpy as np

TIE_REL = 1e-12          # relative value tolerance treating curves as tied
BREAK_FUSE_REL = 1e-14   # breakpoints closer than this (times y-scale) are fused
CHORD_PRUNE_REL = 1e-12  # knots within this (times value scale) of the chord are dropped


def compose_arrays(
    b1: np.ndarray,
    v1: np.ndarray,
    b2: np.ndarray,
    v2: np.ndarray,
    p: float,
    a1: float,
    a2: float,
    prune_rel: float = CHORD_PRUNE_REL,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Return (breaks, values, piece_start, piece_type, piece_pin).

    Policy pieces cover [0, inf): piece i applies on
    [piece_start[i], piece_start[i+1]) (last one unbounded) with
    u(y) = (piece_pin[i] - y) / (a1 if piece_type[i] == 0 else a2).
    """
    lam = -a2 / (a1 - a2)
    q = 1.0 - p
    m1, m2 = len(b1), len(b2)

    pins = np.concatenate([b1, b2])
    ctypes = np.concatenate([np.zeros(m1, np.int8), np.ones(m2, np.int8)])
    y0s = np.concatenate([lam * b1, (1.0 - lam) * b2])
    order = np.lexsort((pins, ctypes, y0s))

    tie_tol = TIE_REL * max(v1[0], v2[0], 1.0)

    # the envelope hits 0 exactly at zstar = lam*z1 + (1-lam)*z2 (both
    # arguments driven into their zero tails); beyond it the smallest
    # minimizer pins the up-argument at z1
    z1, iz1 = _support_end(b1, v1)
    z2, _ = _support_end(b2, v2)
    zstar = lam * z1 + (1.0 - lam) * z2 if (z1 < math.inf and z2 < math.inf) else math.inf
    cut = zstar * (1.0 - 1e-15) if zstar < math.inf else math.inf

    accB: np.ndarray | None = None
    accV: np.ndarray | None = None
    accO: np.ndarray | None = None
    for cid in order:
        if ctypes[cid] == 0:
            i = cid
            cB = lam * b1[i] + (1.0 - lam) * b2
            cV = p * v1[i] + q * v2
        else:
            j = cid - m1
            cB = (1.0 - lam) * b2[j] + lam * b1
            cV = q * v2[j] + p * v1
        if accB is None:
            accB, accV = cB, cV
            accO = np.full(len(cB), cid, dtype=np.int64)
            continue
        if cB[0] >= cut:
            continue  # alive only on the zero set
        # skip candidates strictly dominated on the active region; ties fall
        # through to the merge so the smallest-u resolution stays exact
        pts = np.concatenate([accB[(accB >= cB[0]) & (accB < cut)], cB[cB < cut]])
        if zstar < math.inf:
            pts = np.concatenate([pts, [cut]])
        da = np.interp(pts, accB, accV)
        dc = np.interp(pts, cB, cV)
        if (dc > da + tie_tol).all():
            continue
        accB, accV, accO = _min_merge(
            accB, accV, accO, cB, cV, int(cid), pins, ctypes, a1, a2, tie_tol
        )

    if zstar < math.inf:
        accB, accV, accO = _truncate_zero_tail(accB, accV, accO, zstar, int(iz1))

    piece_start, piece_type, piece_pin = _pieces_from_owners(accB, accO, pins, ctypes)
    B, V = prune_arrays(accB, accV, prune_rel)
    return B, V, piece_start, piece_type, piece_pin


def _support_end(b: np.ndarray, v: np.ndarray) -> tuple[float, int]:
    """(first break from which the function is identically 0, its index)."""
    if v[-1] > 0.0:
        return math.inf, -1
    nz = np.nonzero(v > 0.0)[0]
    if len(nz) == 0:
        return float(b[0]), 0
    return float(b[nz[-1] + 1]), int(nz[-1] + 1)


def _truncate_zero_tail(
    B: np.ndarray, V: np.ndarray, O: np.ndarray, zstar: float, owner: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    keep = B < zstar * (1.0 - 1e-15)
    nb = np.concatenate([B[keep], [zstar]])
    nv = np.concatenate([np.maximum(V[keep], 0.0), [0.0]])
    no = np.concatenate([O[keep], [owner]])
    return nb, nv, no


def _u_coeff(cid: int, ctypes: np.ndarray, a1: float, a2: float) -> float:
    return a1 if ctypes[cid] == 0 else a2


def _min_merge(
    accB: np.ndarray,
    accV: np.ndarray,
    accO: np.ndarray,
    cB: np.ndarray,
    cV: np.ndarray,
    cid: int,
    pins: np.ndarray,
    ctypes: np.ndarray,
    a1: float,
    a2: float,
    tie_tol: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pointwise min of the accumulated envelope with one candidate curve.

    The candidate is defined (feasible) on [cB[0], inf) only; the envelope
    is kept as-is to the left of that entry point.
    """
    y0 = cB[0]
    npre = int(np.searchsorted(accB, y0, side="left"))
    preB, preV, preO = accB[:npre], accV[:npre], accO[:npre]

    grid = np.union1d(accB[npre:], cB)
    fA = np.interp(grid, accB, accV)
    fC = np.interp(grid, cB, cV)

    d = fA - fC
    dz = np.where(np.abs(d) <= tie_tol, 0.0, d)
    s = np.sign(dz)
    flip = s[:-1] * s[1:] < 0
    idx = np.nonzero(flip)[0]
    if idx.size:
        yc = grid[idx] + (grid[idx + 1] - grid[idx]) * dz[idx] / (dz[idx] - dz[idx + 1])
        grid = np.insert(grid, idx + 1, yc)
        fA = np.interp(grid, accB, accV)
        fC = np.interp(grid, cB, cV)

    m = len(grid)
    # segment i is [grid[i], grid[i+1]); segment m-1 is the constant tail
    span = grid[-1] - grid[0] if m > 1 else 1.0
    ymid = np.empty(m)
    ymid[:-1] = 0.5 * (grid[:-1] + grid[1:])
    ymid[-1] = grid[-1] + max(1.0, 0.1 * span)
    dmid = np.interp(ymid, accB, accV) - np.interp(ymid, cB, cV)

    a_wins = dmid < -tie_tol
    c_wins = dmid > tie_tol
    tied = ~(a_wins | c_wins)

    segA = np.clip(np.searchsorted(accB, ymid, side="right") - 1, 0, len(accO) - 1)
    owners = np.where(a_wins, accO[segA], cid)

    outV = np.minimum(fA, fC)
    outB = grid

    tie_idx = np.nonzero(tied)[0]
    if tie_idx.size:
        ins_pos: list[int] = []
        ins_y: list[float] = []
        ins_owner: list[int] = []
        for i in tie_idx:
            inc = int(accO[segA[i]])
            if inc == cid:
                owners[i] = inc
                continue
            ai, ac = _u_coeff(inc, ctypes, a1, a2), _u_coeff(cid, ctypes, a1, a2)
            yl = grid[i]
            yr = grid[i + 1] if i + 1 < m else ymid[-1]
            ul_i, ul_c = (pins[inc] - yl) / ai, (pins[cid] - yl) / ac
            ur_i, ur_c = (pins[inc] - yr) / ai, (pins[cid] - yr) / ac
            wl = cid if ul_c < ul_i - 1e-15 * (1 + abs(ul_i)) else inc
            wr = cid if ur_c < ur_i - 1e-15 * (1 + abs(ur_i)) else inc
            if wl == wr:
                owners[i] = wl
            elif ai == ac:
                owners[i] = wl
            else:
                ystar = (pins[inc] * ac - pins[cid] * ai) / (ac - ai)
                if ystar <= yl or ystar >= yr:
                    owners[i] = wl
                else:
                    owners[i] = wl
                    ins_pos.append(i + 1)
                    ins_y.append(ystar)
                    ins_owner.append(wr)
        if ins_pos:
            pos = np.asarray(ins_pos)
            ys = np.asarray(ins_y)
            outB = np.insert(outB, pos, ys)
            outV = np.insert(outV, pos, np.minimum(np.interp(ys, accB, accV), np.interp(ys, cB, cV)))
            owners = np.insert(owners, pos, ins_owner)

    return (
        np.concatenate([preB, outB]),
        np.concatenate([preV, outV]),
        np.concatenate([preO, owners]),
    )


def _pieces_from_owners(
    B: np.ndarray, O: np.ndarray, pins: np.ndarray, ctypes: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    keep = np.empty(len(O), dtype=bool)
    keep[0] = True
    keep[1:] = O[1:] != O[:-1]
    starts = B[keep]
    owners = O[keep]
    # collapse runs that still share (type, pin) after owner dedup
    t = ctypes[owners].astype(np.int8)
    pn = pins[owners]
    if len(starts) > 1:
        same = (t[1:] == t[:-1]) & (pn[1:] == pn[:-1])
        mask = np.concatenate([[True], ~same])
        starts, t, pn = starts[mask], t[mask], pn[mask]
    starts = starts.copy()
    starts[0] = 0.0
    return starts, t, pn


def prune_arrays(
    B: np.ndarray, V: np.ndarray, prune_rel: float = CHORD_PRUNE_REL
) -> tuple[np.ndarray, np.ndarray]:
    """Canonicalize a PWL representation.

    Near-duplicate breakpoints are fused (keeping the later value, which
    preserves monotonicity), then interior knots are dropped greedily while
    they stay within CHORD_PRUNE_REL of the chord spanning them.  The chord
    rule bounds the value distortion per prune directly; a slope-comparison
    rule does not, because micro-segments produced by envelope crossings
    carry O(eps/width) slope noise that never matches to slope tolerance and
    the representation then grows multiplicatively across recursion levels.
    """
    if len(B) <= 1:
        return B, np.maximum(V, 0.0)
    yscale = max(B[-1], 1.0)
    db = np.diff(B)
    keep = np.concatenate([[True], db > BREAK_FUSE_REL * yscale])
    if not keep.all():
        # groups of fused knots collapse onto their first break, last value
        idx = np.nonzero(keep)[0]
        ends = np.concatenate([idx[1:] - 1, [len(B) - 1]])
        B = B[idx]
        V = V[ends]
    m = len(B)
    if m > 2:
        tol = prune_rel * max(abs(V[0]), 1.0)
        keep_idx = [0]
        a_b, a_v = B[0], V[0]
        i = 1
        while i < m - 1:
            t = (B[i] - a_b) / (B[i + 1] - a_b)
            chord = a_v + t * (V[i + 1] - a_v)
            if abs(chord - V[i]) <= tol:
                i += 1
                continue
            keep_idx.append(i)
            a_b, a_v = B[i], V[i]
            i += 1
        keep_idx.append(m - 1)
        B, V = B[keep_idx], V[keep_idx]
    V = np.maximum(V, 0.0)
    V = np.minimum.accumulate(V)
    return B, V
