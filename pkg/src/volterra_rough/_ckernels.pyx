# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sweep kernels.

Same contracts as ``_pykernels``: fused loops that avoid the large
temporaries of the numpy versions.  Ties resolve to the first tuple in
lexicographic order; NaN ratios are skipped.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, exp, log, fabs, INFINITY

cnp.import_array()

BACKEND_NAME = "cython"
cdef double TIE_RTOL = 1e-12  # keep in step with _pykernels.TIE_RTOL


cdef inline double _k(int family, double power, double tau, double r) nogil:
    cdef double gap = tau - r
    if family == 1:
        return 1.0
    if family == 2:
        return pow(gap, -power) * exp(-gap)
    return pow(gap, -power)


def kernel_audit(int family, double power, double gamma, const double[::1] pts,
                 const double[::1] etas, const double[::1] betas, double band):
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t ne = etas.shape[0], nb = betas.shape[0]
    cdef Py_ssize_t i0, i1, i2, i3, j
    cdef double s, r, q, tau, ktr, kqr, kts, kqs, d2, d3, d4, v, e
    cdef long skipped = 0, count = 0
    v1 = np.zeros(1)
    v2 = np.zeros(ne)
    v3 = np.zeros(ne)
    v4 = np.zeros(nb)
    v5 = np.zeros(ne)
    x1 = np.full((1, 4), -1, dtype=np.int64)
    x2 = np.full((ne, 4), -1, dtype=np.int64)
    x3 = np.full((ne, 4), -1, dtype=np.int64)
    x4 = np.full((nb, 4), -1, dtype=np.int64)
    x5 = np.full((ne, 4), -1, dtype=np.int64)
    cdef double[::1] m1 = v1, m2 = v2, m3 = v3, m4 = v4, m5 = v5
    cdef long long[:, ::1] a1 = x1, a2 = x2, a3 = x3, a4 = x4, a5 = x5
    for i0 in range(n):
        for i1 in range(i0 + 1, n):
            for i2 in range(i1 + 1, n):
                for i3 in range(i2 + 1, n):
                    s = pts[i0]; r = pts[i1]; q = pts[i2]; tau = pts[i3]
                    if tau - r < band:
                        skipped += 1
                        continue
                    count += 1
                    ktr = _k(family, power, tau, r)
                    kqr = _k(family, power, q, r)
                    kts = _k(family, power, tau, s)
                    kqs = _k(family, power, q, s)
                    d2 = fabs(ktr - kqr)
                    d3 = fabs(ktr - kts)
                    d4 = fabs(ktr - kqr - kts + kqs)
                    v = fabs(ktr) * pow(tau - r, gamma)
                    if v > m1[0] or a1[0, 0] < 0:
                        m1[0] = v
                        a1[0, 0] = i0; a1[0, 1] = i1; a1[0, 2] = i2; a1[0, 3] = i3
                    for j in range(ne):
                        e = etas[j]
                        v = d2 / (pow(q - r, -gamma - e) * pow(tau - q, e))
                        if v > m2[j] or a2[j, 0] < 0:
                            m2[j] = v
                            a2[j, 0] = i0; a2[j, 1] = i1; a2[j, 2] = i2; a2[j, 3] = i3
                        v = d3 / (pow(tau - r, -gamma - e) * pow(r - s, e))
                        if v > m3[j] or a3[j, 0] < 0:
                            m3[j] = v
                            a3[j, 0] = i0; a3[j, 1] = i1; a3[j, 2] = i2; a3[j, 3] = i3
                        v = d4 / (pow(q - r, -gamma - e) * pow(tau - q, e))
                        if v > m5[j] or a5[j, 0] < 0:
                            m5[j] = v
                            a5[j, 0] = i0; a5[j, 1] = i1; a5[j, 2] = i2; a5[j, 3] = i3
                    for j in range(nb):
                        e = betas[j]
                        v = d4 / (pow(q - r, -gamma - e) * pow(r - s, e))
                        if v > m4[j] or a4[j, 0] < 0:
                            m4[j] = v
                            a4[j, 0] = i0; a4[j, 1] = i1; a4[j, 2] = i2; a4[j, 3] = i3
    return [v1, v2, v3, v4, v5], [x1, x2, x3, x4, x5], skipped, count


cdef inline double _min_form(double b, double c, double e, double alpha, double gamma, double zeta) nogil:
    cdef double second = pow(e, alpha - gamma - zeta)
    cdef double first
    if b <= 0.0:
        return second
    first = pow(b, -gamma - zeta) * pow(c, alpha)
    return first if first < second else second


cdef inline void _tuple_powers(double a, double b, double c, double e, double alpha, double gamma,
                               const double[::1] etas, const double[::1] zetas, double[::1] pa,
                               double[::1] mf) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(etas.shape[0]):
        pa[k] = pow(a, etas[k])
    for k in range(zetas.shape[0]):
        mf[k] = _min_form(b, c, e, alpha, gamma, zetas[k])


def max_ratio_1(const double[::1] values, const double[::1] b, const double[::1] c, const double[::1] e,
                double alpha, double gamma):
    cdef Py_ssize_t n = values.shape[0], i
    cdef double best = -INFINITY
    if n == 0:
        return 0.0, -1
    cdef double[::1] r = np.empty(n)
    for i in range(n):
        r[i] = values[i] / _min_form(b[i], c[i], e[i], alpha, gamma, 0.0)
        if r[i] > best:  # NaN never wins
            best = r[i]
    for i in range(n):
        if r[i] >= best * (1.0 - TIE_RTOL):
            return best, i
    return best, -1


cdef double FILTER_MARGIN = 1e-9  # log-domain slack, far above the rounding of the estimate


def max_ratio_h(const double[::1] values, const double[::1] a, const double[::1] b, const double[::1] c,
                const double[::1] e,
                double alpha, double gamma, const double[::1] etas, const double[::1] zetas):
    cdef Py_ssize_t n = values.shape[0], ne = etas.shape[0], nz = zetas.shape[0]
    cdef Py_ssize_t i, ie, iz
    cdef double est, top = -INFINITY, best = -INFINITY, la, lb, lc, le, pe, pz, m, v
    if n == 0:
        return 0.0, -1, -1, -1
    # pass 1: log-domain estimate of each tuple's max; the ratio separates into an eta part and a zeta part
    cdef double[::1] rowlog = np.empty(n)
    for i in range(n):
        if values[i] == 0.0 and a[i] > 0.0 and b[i] > 0.0 and c[i] > 0.0 and e[i] > 0.0:
            est = -INFINITY
        elif values[i] > 0.0 and a[i] > 0.0 and b[i] > 0.0 and c[i] > 0.0 and e[i] > 0.0:
            la = log(a[i]); lb = log(b[i]); lc = log(c[i]); le = log(e[i])
            pe = -INFINITY
            for ie in range(ne):
                v = -etas[ie] * (la - lb)
                if v > pe:
                    pe = v
            pz = -INFINITY
            for iz in range(nz):
                m = -(gamma + zetas[iz]) * lb + alpha * lc
                v = (alpha - gamma - zetas[iz]) * le
                if v < m:
                    m = v
                v = -zetas[iz] * lb - m
                if v > pz:
                    pz = v
            est = log(values[i]) + pe + pz
        else:
            est = INFINITY  # degenerate gaps: always rechecked exactly
        rowlog[i] = est
        if est > top and est < INFINITY:
            top = est
    # pass 2: exact ratios on the candidates; loop order is the tie-break (tuple, eta, zeta)
    cdef double[::1] pa = np.empty(ne), mf = np.empty(nz)
    cdef Py_ssize_t[::1] cand = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t nc = 0, k
    for i in range(n):
        if rowlog[i] >= top - FILTER_MARGIN:
            cand[nc] = i
            nc += 1
    if nc == 0:  # every ratio is zero
        for i in range(n):
            cand[nc] = i
            nc += 1
    for k in range(nc):
        i = cand[k]
        _tuple_powers(a[i], b[i], c[i], e[i], alpha, gamma, etas, zetas, pa, mf)
        for ie in range(ne):
            for iz in range(nz):
                v = values[i] / (pa[ie] * pow(b[i], zetas[iz] - etas[ie]) * mf[iz])
                if v > best:
                    best = v
    for k in range(nc):
        i = cand[k]
        _tuple_powers(a[i], b[i], c[i], e[i], alpha, gamma, etas, zetas, pa, mf)
        for ie in range(ne):
            for iz in range(nz):
                v = values[i] / (pa[ie] * pow(b[i], zetas[iz] - etas[ie]) * mf[iz])
                if v >= best * (1.0 - TIE_RTOL):
                    return best, i, ie, iz
    return best, -1, -1, -1
