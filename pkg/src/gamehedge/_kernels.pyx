# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the two hot kernels.

``compose_arrays`` folds the candidate curves of the constrained Bellman
minimization into their lower envelope with owner tracking (same candidate
construction and merge semantics as gamehedge._pwl_py).  ``exit_scan``
advances the first-exit walk of the embedding simulator step-compatibly
with gamehedge._sim_py, so both backends produce identical outputs.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()


# ---------------------------------------------------------------- exit scan

def exit_scan(double[::1] z, double[::1] state, int n, double bar, double mu_dt,
              double sdt, double c, double dt, long jT,
              double[::1] theta, signed char[::1] signs,
              double[::1] exmax, double[::1] exmin):
    """See gamehedge._sim_py.exit_scan; identical contract and arithmetic."""
    cdef double anchor = state[0]
    cdef double dev = state[1]
    cdef double emax = state[2]
    cdef double emin = state[3]
    cdef long k = <long>state[4]
    cdef long j = <long>state[5]
    cdef bint recT = state[6] != 0.0
    cdef double bT = state[7]
    cdef double emaxT = state[8]
    cdef double eminT = state[9]
    cdef Py_ssize_t N = z.shape[0]
    cdef Py_ssize_t i = 0
    cdef double inc, t, val
    cdef int sign
    cdef bint exited

    while i < N:
        if k >= n and recT:
            break
        inc = mu_dt + sdt * z[i]
        dev = dev + inc
        j += 1
        t = j * dt
        exited = 0
        sign = 0
        if k < n and (dev >= bar or dev <= -bar):
            exited = 1
            sign = 1 if dev >= bar else -1
            val = anchor + (sign * bar + c * t)
        else:
            val = anchor + (dev + c * t)
        if val > emax:
            emax = val
        if val < emin:
            emin = val
        if exited:
            theta[k] = t
            signs[k] = <signed char>sign
            exmax[k] = emax
            exmin[k] = emin
            anchor = anchor + sign * bar
            dev = 0.0
            k += 1
        if (not recT) and j >= jT:
            bT = anchor + dev
            emaxT = emax
            eminT = emin
            recT = 1
        i += 1

    state[0] = anchor
    state[1] = dev
    state[2] = emax
    state[3] = emin
    state[4] = <double>k
    state[5] = <double>j
    state[6] = 1.0 if recT else 0.0
    state[7] = bT
    state[8] = emaxT
    state[9] = eminT
    return (k >= n and recT), i


# ------------------------------------------------------------- composition

cdef inline double _interp(double* xb, double* xv, int m, double x) nogil:
    cdef int lo, hi, mid
    if m == 1 or x <= xb[0]:
        return xv[0]
    if x >= xb[m - 1]:
        return xv[m - 1]
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xb[mid] <= x:
            lo = mid
        else:
            hi = mid
    if x == xb[lo]:
        return xv[lo]
    return (xv[lo + 1] - xv[lo]) / (xb[lo + 1] - xb[lo]) * (x - xb[lo]) + xv[lo]


cdef inline int _seg_of(double* xb, int m, double x) nogil:
    # index of the segment whose left knot is the last one <= x
    cdef int lo, hi, mid
    if x < xb[0]:
        return 0
    if x >= xb[m - 1]:
        return m - 1
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if xb[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


cdef bint _strictly_above(double* aB, double* aV, int am,
                          double* cB, double* cV, int cm,
                          double cut, double tie_tol) nogil:
    """True when the candidate exceeds the envelope by more than tie_tol at
    every union knot of the active region [cB[0], cut]."""
    cdef double y0 = cB[0]
    cdef int ia = 0
    cdef int ic = 0
    cdef int sa = 0
    cdef int sc = 0
    cdef double x, va, vc
    cdef bint have_cut = cut < 1e300
    while ia < am and aB[ia] < y0:
        ia += 1
    while True:
        if ia < am and aB[ia] < cut and (ic >= cm or aB[ia] <= cB[ic]):
            x = aB[ia]
            if ic < cm and cB[ic] == x:
                ic += 1
            ia += 1
        elif ic < cm and cB[ic] < cut:
            x = cB[ic]
            ic += 1
        elif have_cut:
            x = cut
            have_cut = 0
        else:
            return 1
        while sa + 1 < am and aB[sa + 1] <= x:
            sa += 1
        while sc + 1 < cm and cB[sc + 1] <= x:
            sc += 1
        if sa + 1 >= am or x <= aB[0]:
            va = aV[am - 1] if x >= aB[am - 1] else aV[0]
        elif x == aB[sa]:
            va = aV[sa]
        else:
            va = (aV[sa + 1] - aV[sa]) / (aB[sa + 1] - aB[sa]) * (x - aB[sa]) + aV[sa]
        if sc + 1 >= cm or x <= cB[0]:
            vc = cV[cm - 1] if x >= cB[cm - 1] else cV[0]
        elif x == cB[sc]:
            vc = cV[sc]
        else:
            vc = (cV[sc + 1] - cV[sc]) / (cB[sc + 1] - cB[sc]) * (x - cB[sc]) + cV[sc]
        if not (vc > va + tie_tol):
            return 0


cdef int _merge_min(double* aB, double* aV, long* aO, int am,
                    double* cB, double* cV, int cm, long cid,
                    double* oB, double* oV, long* oO,
                    double tie_tol, double* pins, signed char* ctypes,
                    double a1, double a2) except -1:
    """Min-merge of the accumulated envelope with one candidate curve defined
    on [cB[0], inf); returns the output length.  Mirrors _pwl_py._min_merge."""
    cdef double y0 = cB[0]
    cdef int npre = 0
    cdef int ia, ic, ng, i, m2, nw
    cdef double x, d0, d1, yc
    cdef double* g
    cdef double* g2
    cdef double* fa2
    cdef double* fc2
    cdef double ymid, dmid, span
    cdef double ul_i, ul_c, ur_i, ur_c, yl, yr, ystar, ai, ac, vmin, tol_ul, tol_ur
    cdef long inc_o, wl, wr

    while npre < am and aB[npre] < y0:
        npre += 1

    g = <double*>malloc((am - npre + cm) * sizeof(double))
    if g == NULL:
        raise MemoryError()

    # union grid of aB[npre:] and cB (exact duplicates collapsed)
    ia = npre
    ic = 0
    ng = 0
    while ia < am or ic < cm:
        if ic >= cm or (ia < am and aB[ia] < cB[ic]):
            x = aB[ia]
            ia += 1
        elif ia >= am or cB[ic] < aB[ia]:
            x = cB[ic]
            ic += 1
        else:
            x = aB[ia]
            ia += 1
            ic += 1
        g[ng] = x
        ng += 1

    g2 = <double*>malloc((2 * ng + 2) * sizeof(double))
    fa2 = <double*>malloc((2 * ng + 2) * sizeof(double))
    fc2 = <double*>malloc((2 * ng + 2) * sizeof(double))
    if g2 == NULL or fa2 == NULL or fc2 == NULL:
        free(g)
        free(g2)
        free(fa2)
        free(fc2)
        raise MemoryError()

    # grid extended with crossing points of the tie-zeroed difference
    m2 = 0
    for i in range(ng):
        g2[m2] = g[i]
        m2 += 1
        if i + 1 < ng:
            d0 = _interp(aB, aV, am, g[i]) - _interp(cB, cV, cm, g[i])
            d1 = _interp(aB, aV, am, g[i + 1]) - _interp(cB, cV, cm, g[i + 1])
            if d0 <= tie_tol and d0 >= -tie_tol:
                d0 = 0.0
            if d1 <= tie_tol and d1 >= -tie_tol:
                d1 = 0.0
            if d0 * d1 < 0.0:
                yc = g[i] + (g[i + 1] - g[i]) * d0 / (d0 - d1)
                g2[m2] = yc
                m2 += 1
    for i in range(m2):
        fa2[i] = _interp(aB, aV, am, g2[i])
        fc2[i] = _interp(cB, cV, cm, g2[i])

    # assemble output: untouched prefix, then per-segment winners
    nw = 0
    for i in range(npre):
        oB[nw] = aB[i]
        oV[nw] = aV[i]
        oO[nw] = aO[i]
        nw += 1

    span = g2[m2 - 1] - g2[0] if m2 > 1 else 1.0
    if span < 10.0:
        span = 10.0
    for i in range(m2):
        if i + 1 < m2:
            ymid = 0.5 * (g2[i] + g2[i + 1])
        else:
            ymid = g2[m2 - 1] + 0.1 * span
        dmid = _interp(aB, aV, am, ymid) - _interp(cB, cV, cm, ymid)
        oB[nw] = g2[i]
        vmin = fa2[i] if fa2[i] < fc2[i] else fc2[i]
        oV[nw] = vmin
        if dmid < -tie_tol:
            oO[nw] = aO[_seg_of(aB, am, ymid)]
            nw += 1
        elif dmid > tie_tol:
            oO[nw] = cid
            nw += 1
        else:
            inc_o = aO[_seg_of(aB, am, ymid)]
            if inc_o == cid:
                oO[nw] = cid
                nw += 1
                continue
            ai = a1 if ctypes[inc_o] == 0 else a2
            ac = a1 if ctypes[cid] == 0 else a2
            yl = g2[i]
            yr = g2[i + 1] if i + 1 < m2 else ymid
            ul_i = (pins[inc_o] - yl) / ai
            ul_c = (pins[cid] - yl) / ac
            ur_i = (pins[inc_o] - yr) / ai
            ur_c = (pins[cid] - yr) / ac
            tol_ul = 1e-15 * (1.0 + (ul_i if ul_i > 0 else -ul_i))
            tol_ur = 1e-15 * (1.0 + (ur_i if ur_i > 0 else -ur_i))
            wl = cid if ul_c < ul_i - tol_ul else inc_o
            wr = cid if ur_c < ur_i - tol_ur else inc_o
            if wl == wr or ai == ac:
                oO[nw] = wl
                nw += 1
            else:
                ystar = (pins[inc_o] * ac - pins[cid] * ai) / (ac - ai)
                if ystar <= yl or ystar >= yr:
                    oO[nw] = wl
                    nw += 1
                else:
                    oO[nw] = wl
                    nw += 1
                    oB[nw] = ystar
                    d0 = _interp(aB, aV, am, ystar)
                    d1 = _interp(cB, cV, cm, ystar)
                    oV[nw] = d0 if d0 < d1 else d1
                    oO[nw] = wr
                    nw += 1

    free(g)
    free(g2)
    free(fa2)
    free(fc2)
    return nw


def compose_arrays(object b1o, object v1o, object b2o, object v2o,
                   double p, double a1, double a2, double prune_rel=1e-12):
    """Compiled lower-envelope fold; see gamehedge._pwl_py.compose_arrays."""
    from ._pwl_py import _pieces_from_owners, prune_arrays

    b1 = np.ascontiguousarray(b1o, dtype=np.float64)
    v1 = np.ascontiguousarray(v1o, dtype=np.float64)
    b2 = np.ascontiguousarray(b2o, dtype=np.float64)
    v2 = np.ascontiguousarray(v2o, dtype=np.float64)

    cdef double lam = -a2 / (a1 - a2)
    cdef double q = 1.0 - p
    cdef int m1 = b1.shape[0]
    cdef int m2 = b2.shape[0]
    cdef int ncand = m1 + m2

    pins_np = np.concatenate([b1, b2])
    ctypes_np = np.concatenate([np.zeros(m1, np.int8), np.ones(m2, np.int8)])
    y0s = np.concatenate([lam * b1, (1.0 - lam) * b2])
    order_np = np.lexsort((pins_np, ctypes_np, y0s)).astype(np.int64)

    cdef double[::1] pins = pins_np
    cdef signed char[::1] ctypes = ctypes_np
    cdef long[::1] order = order_np
    cdef double[::1] B1 = b1
    cdef double[::1] V1 = v1
    cdef double[::1] B2 = b2
    cdef double[::1] V2 = v2

    cdef double tie_tol = 1e-12 * max(v1[0], v2[0], 1.0)

    cdef int cap = 8 * (m1 + m2) + 64
    cdef double* accB = <double*>malloc(cap * sizeof(double))
    cdef double* accV = <double*>malloc(cap * sizeof(double))
    cdef long* accO = <long*>malloc(cap * sizeof(long))
    cdef double* outB = <double*>malloc(cap * sizeof(double))
    cdef double* outV = <double*>malloc(cap * sizeof(double))
    cdef long* outO = <long*>malloc(cap * sizeof(long))
    cdef int cmax = m1 if m1 > m2 else m2
    cdef double* cBuf = <double*>malloc(cmax * sizeof(double))
    cdef double* cVuf = <double*>malloc(cmax * sizeof(double))

    cdef int am = 0
    cdef int cm, nw, need, t, j, i
    cdef long cid
    cdef double pin, base
    cdef double* tmpd
    cdef long* tmpo

    if (accB == NULL or accV == NULL or accO == NULL or outB == NULL or
            outV == NULL or outO == NULL or cBuf == NULL or cVuf == NULL):
        free(accB); free(accV); free(accO); free(outB); free(outV); free(outO)
        free(cBuf); free(cVuf)
        raise MemoryError()

    try:
        for t in range(ncand):
            cid = order[t]
            if cid < m1:
                pin = B1[cid]
                base = p * V1[cid]
                cm = m2
                for j in range(m2):
                    cBuf[j] = lam * pin + (1.0 - lam) * B2[j]
                    cVuf[j] = base + q * V2[j]
            else:
                pin = B2[cid - m1]
                base = q * V2[cid - m1]
                cm = m1
                for j in range(m1):
                    cBuf[j] = (1.0 - lam) * pin + lam * B1[j]
                    cVuf[j] = base + p * V1[j]
            if am == 0:
                for j in range(cm):
                    accB[j] = cBuf[j]
                    accV[j] = cVuf[j]
                    accO[j] = cid
                am = cm
                continue
            need = 4 * (am + cm) + 16
            if need > cap:
                cap = 2 * need
                accB = _regrow(accB, am, cap)
                accV = _regrow(accV, am, cap)
                accO = _regrow_l(accO, am, cap)
                free(outB); free(outV); free(outO)
                outB = <double*>malloc(cap * sizeof(double))
                outV = <double*>malloc(cap * sizeof(double))
                outO = <long*>malloc(cap * sizeof(long))
                if outB == NULL or outV == NULL or outO == NULL:
                    raise MemoryError()
            nw = _merge_min(accB, accV, accO, am, cBuf, cVuf, cm, cid,
                            outB, outV, outO, tie_tol,
                            &pins[0], &ctypes[0], a1, a2)
            tmpd = accB; accB = outB; outB = tmpd
            tmpd = accV; accV = outV; outV = tmpd
            tmpo = accO; accO = outO; outO = tmpo
            am = nw

        B_np = np.empty(am)
        V_np = np.empty(am)
        O_np = np.empty(am, dtype=np.int64)
        for i in range(am):
            B_np[i] = accB[i]
            V_np[i] = accV[i]
            O_np[i] = accO[i]
    finally:
        free(accB); free(accV); free(accO)
        free(outB); free(outV); free(outO)
        free(cBuf); free(cVuf)

    starts, types_o, pins_o = _pieces_from_owners(B_np, O_np, pins_np, ctypes_np)
    B_out, V_out = prune_arrays(B_np, V_np, prune_rel)
    return B_out, V_out, starts, types_o, pins_o


cdef double* _regrow(double* pold, int used, int cap):
    cdef double* pnew = <double*>malloc(cap * sizeof(double))
    cdef int i
    if pnew == NULL:
        raise MemoryError()
    for i in range(used):
        pnew[i] = pold[i]
    free(pold)
    return pnew


cdef long* _regrow_l(long* pold, int used, int cap):
    cdef long* pnew = <long*>malloc(cap * sizeof(long))
    cdef int i
    if pnew == NULL:
        raise MemoryError()
    for i in range(used):
        pnew[i] = pold[i]
    free(pold)
    return pnew
