"""Pure numpy twin of the first-exit scan kernel.

Walks a drifted Brownian motion on a fine Euler grid and extracts the
successive exit times of +-bar bands around moving anchors.  The overshoot
at each detected crossing is truncated to the barrier, so recorded
increments are exactly +-bar; the anchor then restarts from the snapped
value.  Alongside the exits it tracks the running extrema of
``B* + c*t`` (the tilt c turns them into price-path extrema) and a snapshot
of the state at the first grid time >= T.

The arithmetic is arranged step-compatibly with the compiled kernel
(per-segment cumulative sums restarted at each snap), so both backends
produce bit-identical outputs from the same draws.
"""

from __future__ import annotations

import numpy as np


def exit_scan(
    z: np.ndarray,
    state: np.ndarray,
    n: int,
    bar: float,
    mu_dt: float,
    sdt: float,
    c: float,
    dt: float,
    jT: int,
    theta: np.ndarray,
    signs: np.ndarray,
    exmax: np.ndarray,
    exmin: np.ndarray,
) -> tuple[bool, int]:
    """Advance the scan through the draws ``z``; returns (done, consumed).

    ``state`` is the 10-slot resume buffer
    [anchor, dev, emax, emin, k, j, recorded_T, bstar_T, exmax_T, exmin_T],
    mutated in place.  Output arrays are filled per recorded exit.
    """
    anchor = float(state[0])
    dev = float(state[1])
    emax = float(state[2])
    emin = float(state[3])
    k = int(state[4])
    j = int(state[5])
    recT = state[6] != 0.0
    bT = float(state[7])
    emaxT = float(state[8])
    eminT = float(state[9])

    N = len(z)
    i = 0
    while i < N and not (k >= n and recT):
        L = N - i
        inc = mu_dt + sdt * z[i:]
        if dev != 0.0:
            tmp = np.cumsum(np.concatenate(([dev], inc)))[1:]
        else:
            tmp = np.cumsum(inc)
        jvec = j + 1 + np.arange(L, dtype=np.float64)
        vals = anchor + (tmp + c * (jvec * dt))

        if k < n:
            hits = (tmp >= bar) | (tmp <= -bar)
            pos = int(np.argmax(hits)) if hits.any() else -1
        else:
            pos = -1
        tpos = jT - j - 1 if (not recT and jT - j - 1 < L) else -1

        if k >= n:
            # only the T-snapshot is still pending
            if tpos >= 0:
                seg = vals[: tpos + 1]
                emax = max(emax, float(seg.max()))
                emin = min(emin, float(seg.min()))
                bT = anchor + float(tmp[tpos])
                emaxT, eminT, recT = emax, emin, True
                dev = float(tmp[tpos])
                j += tpos + 1
                i += tpos + 1
            else:
                emax = max(emax, float(vals.max()))
                emin = min(emin, float(vals.min()))
                dev = float(tmp[-1])
                j += L
                i = N
            continue

        if 0 <= tpos and (pos < 0 or tpos < pos):
            seg = vals[: tpos + 1]
            emaxT = max(emax, float(seg.max()))
            eminT = min(emin, float(seg.min()))
            bT = anchor + float(tmp[tpos])
            recT = True

        if pos >= 0:
            sign = 1 if tmp[pos] >= bar else -1
            t_exit = float(j + 1 + pos) * dt
            if pos > 0:
                pre = vals[:pos]
                emax = max(emax, float(pre.max()))
                emin = min(emin, float(pre.min()))
            sval = anchor + (sign * bar + c * t_exit)
            emax = max(emax, sval)
            emin = min(emin, sval)
            theta[k] = t_exit
            signs[k] = sign
            exmax[k] = emax
            exmin[k] = emin
            anchor = anchor + sign * bar
            dev = 0.0
            k += 1
            j += pos + 1
            i += pos + 1
            if not recT and j >= jT:
                bT = anchor + dev
                emaxT, eminT, recT = emax, emin, True
        else:
            emax = max(emax, float(vals.max()))
            emin = min(emin, float(vals.min()))
            dev = float(tmp[-1])
            j += L
            i = N

    state[0] = anchor
    state[1] = dev
    state[2] = emax
    state[3] = emin
    state[4] = float(k)
    state[5] = float(j)
    state[6] = 1.0 if recT else 0.0
    state[7] = bT
    state[8] = emaxT
    state[9] = eminT
    return (k >= n and recT), i
