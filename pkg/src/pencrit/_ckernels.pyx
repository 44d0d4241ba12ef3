# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled contrast kernels (preferred backend).

Implements the same ``contrast_terms`` contract as the pure-numpy fallback:
per-term contrast values plus optional gradient, Hessian and per-term score
rows with respect to the full parameter vector, on the criterion scale (the
Gaussian per-term values include the 1/2 factor).  Gradient and Hessian
entries are accumulated with Kahan compensation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

BACKEND_NAME = "c"


cdef inline void kadd(double* acc, double* comp, double value) noexcept nogil:
    """Kahan-compensated accumulation: acc += value."""
    cdef double t, z
    z = value - comp[0]
    t = acc[0] + z
    comp[0] = (t - acc[0]) - z
    acc[0] = t


cdef inline double lagval(const double[:] v, Py_ssize_t t, Py_ssize_t k) noexcept nogil:
    """v[t - k] with zero truncation for pre-sample indices (0-based t)."""
    if t - k >= 0:
        return v[t - k]
    return 0.0


def arx_terms(const double[:] y, x, const double[:] theta, Py_ssize_t p, Py_ssize_t q,
              double h_floor, int order, bint want_scores):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t d = 2 + p + q
    cdef Py_ssize_t db = d - 1           # mean coordinates c, a_1..a_p, b_1..b_q
    cdef double sigma = theta[d - 1]
    cdef double h = sigma * sigma
    cdef bint clamped = h < h_floor
    if clamped:
        h = h_floor
    cdef double logh = log(h)
    cdef double inv_h = 1.0 / h

    cdef const double[:] xcol
    if q > 0:
        xcol = np.ascontiguousarray(np.asarray(x)[:, 0], dtype=np.float64)
    else:
        xcol = y  # unused

    per = np.empty(n)
    cdef double[:] per_v = per
    cdef cnp.ndarray grad_a = None
    cdef cnp.ndarray hess_a = None
    cdef cnp.ndarray scores_a = None
    cdef double[:] g_v
    cdef double[:] gc_v
    cdef double[:, :] h_v
    cdef double[:, :] hc_v
    cdef double[:, :] sc_v
    cdef bint need_sc = order >= 1 or want_scores

    gcomp = np.zeros(d)
    hcomp = np.zeros((d, d))
    g_v = gcomp  # placeholder; rebound below when needed
    if order >= 1:
        grad_a = np.zeros(d)
        g_v = grad_a
        gc_v = np.zeros(d)
    if order >= 2:
        hess_a = np.zeros((d, d))
        h_v = hess_a
        hc_v = np.zeros((d, d))
    if want_scores:
        scores_a = np.zeros((n, d))
        sc_v = scores_a

    row = np.empty(d)
    cdef double[:] row_v = row
    cdef Py_ssize_t t, i, j
    cdef double f, e, s_sig, u
    cdef double inv_sigma = 0.0 if clamped else 1.0 / sigma
    cdef double sig3 = 0.0 if clamped else 2.0 / (sigma * sigma * sigma)
    cdef double sig4 = 0.0 if clamped else 3.0 / (h * h)
    cdef double sig2 = 0.0 if clamped else 1.0 / h

    for t in range(n):
        row_v[0] = 1.0
        f = theta[0]
        for i in range(1, p + 1):
            row_v[i] = lagval(y, t, i)
            f += theta[i] * row_v[i]
        for j in range(1, q + 1):
            row_v[p + j] = lagval(xcol, t, j)
            f += theta[p + j] * row_v[p + j]
        e = y[t] - f
        per_v[t] = 0.5 * (e * e * inv_h + logh)
        if need_sc or order >= 2:
            u = -e * inv_h
            s_sig = inv_sigma * (1.0 - e * e * inv_h)
            if want_scores:
                for i in range(db):
                    sc_v[t, i] = u * row_v[i]
                sc_v[t, d - 1] = 0.0 if clamped else s_sig
            if order >= 1:
                for i in range(db):
                    kadd(&g_v[i], &gc_v[i], u * row_v[i])
                if not clamped:
                    kadd(&g_v[d - 1], &gc_v[d - 1], s_sig)
            if order >= 2:
                for i in range(db):
                    for j in range(i, db):
                        kadd(&h_v[i, j], &hc_v[i, j], row_v[i] * row_v[j] * inv_h)
                    kadd(&h_v[i, d - 1], &hc_v[i, d - 1], sig3 * row_v[i] * e)
                kadd(&h_v[d - 1, d - 1], &hc_v[d - 1, d - 1],
                     sig4 * e * e - sig2)

    if order >= 2:
        for i in range(d):
            for j in range(i):
                h_v[i, j] = h_v[j, i]
    return per, grad_a, hess_a, scores_a


def arch_terms(const double[:] y, const double[:] theta, Py_ssize_t p, double h_floor,
               int order, bint want_scores):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t d = 1 + p

    per = np.empty(n)
    cdef double[:] per_v = per
    cdef cnp.ndarray grad_a = None
    cdef cnp.ndarray hess_a = None
    cdef cnp.ndarray scores_a = None
    cdef double[:] g_v
    cdef double[:] gc_v
    cdef double[:, :] h_v
    cdef double[:, :] hc_v
    cdef double[:, :] sc_v
    if order >= 1:
        grad_a = np.zeros(d)
        g_v = grad_a
        gc_v = np.zeros(d)
    if order >= 2:
        hess_a = np.zeros((d, d))
        h_v = hess_a
        hc_v = np.zeros((d, d))
    if want_scores:
        scores_a = np.zeros((n, d))
        sc_v = scores_a

    row = np.empty(d)
    cdef double[:] row_v = row
    cdef Py_ssize_t t, i, j
    cdef double h, y2, u, v, yl
    cdef bint clamped

    for t in range(n):
        row_v[0] = 1.0
        h = theta[0]
        for i in range(1, p + 1):
            yl = lagval(y, t, i)
            row_v[i] = yl * yl
            h += theta[i] * row_v[i]
        clamped = h < h_floor
        if clamped:
            h = h_floor
        y2 = y[t] * y[t]
        per_v[t] = 0.5 * (y2 / h + log(h))
        if order >= 1 or want_scores or order >= 2:
            if clamped:
                u = 0.0
                v = 0.0
            else:
                u = 0.5 * (1.0 / h - y2 / (h * h))
                v = 0.5 * (-1.0 / (h * h) + 2.0 * y2 / (h * h * h))
            if want_scores:
                for i in range(d):
                    sc_v[t, i] = u * row_v[i]
            if order >= 1:
                for i in range(d):
                    kadd(&g_v[i], &gc_v[i], u * row_v[i])
            if order >= 2:
                for i in range(d):
                    for j in range(i, d):
                        kadd(&h_v[i, j], &hc_v[i, j], v * row_v[i] * row_v[j])

    if order >= 2:
        for i in range(d):
            for j in range(i):
                h_v[i, j] = h_v[j, i]
    return per, grad_a, hess_a, scores_a


cdef _poisson_accumulate(const double[:] y, const double[:] lam_raw, double[:, :] dlam,
                         d2_pairs, double c_floor, int order,
                         bint want_scores, Py_ssize_t d,
                         per, grad_a, hess_a, scores_a):
    """Shared Poisson assembly for a scalar intensity series.

    Adds into the provided output arrays (so the bivariate family can call it
    once per component); ``d2_pairs`` lists (i, j, column) second-derivative
    contributions of the intensity.
    """
    cdef Py_ssize_t n = y.shape[0]
    cdef double[:] per_v = per
    cdef double[:] g_v
    cdef double[:] gc_v
    cdef double[:, :] h_v
    cdef double[:, :] hc_v
    cdef double[:, :] sc_v
    if order >= 1:
        g_v = grad_a
        gc_v = np.zeros(d)
    if order >= 2:
        h_v = hess_a
        hc_v = np.zeros((d, d))
    if want_scores:
        sc_v = scores_a

    cdef Py_ssize_t t, i, j
    cdef double lam, u, v, dli
    cdef bint clamped
    for t in range(n):
        lam = lam_raw[t]
        clamped = lam < c_floor
        if clamped:
            lam = c_floor
        per_v[t] += lam - y[t] * log(lam)
        if order >= 1 or want_scores or order >= 2:
            if clamped:
                u = 0.0
                v = 0.0
            else:
                u = 1.0 - y[t] / lam
                v = y[t] / (lam * lam)
            if want_scores:
                for i in range(d):
                    sc_v[t, i] += u * dlam[t, i]
            if order >= 1:
                for i in range(d):
                    kadd(&g_v[i], &gc_v[i], u * dlam[t, i])
            if order >= 2:
                for i in range(d):
                    dli = v * dlam[t, i]
                    for j in range(i, d):
                        kadd(&h_v[i, j], &hc_v[i, j], dli * dlam[t, j])

    cdef double[:] col_v
    cdef double s, comp
    cdef Py_ssize_t ii, jj
    if order >= 2:
        for ii, jj, col in d2_pairs:
            col_v = col
            s = 0.0
            comp = 0.0
            for t in range(n):
                lam = lam_raw[t]
                if lam < c_floor:
                    continue
                kadd(&s, &comp, (1.0 - y[t] / lam) * col_v[t])
            h_v[ii, jj] += s
        for i in range(d):
            for j in range(i):
                h_v[i, j] = h_v[j, i]


cdef _poisson_outputs(Py_ssize_t n, Py_ssize_t d, int order, bint want_scores):
    per = np.zeros(n)
    grad_a = np.zeros(d) if order >= 1 else None
    hess_a = np.zeros((d, d)) if order >= 2 else None
    scores_a = np.zeros((n, d)) if want_scores else None
    return per, grad_a, hess_a, scores_a


def ingarch_p_terms(const double[:] y, const double[:] theta, Py_ssize_t p, double c_floor,
                    int order, bint want_scores):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t d = 1 + p
    lam_raw = np.empty(n)
    dlam = np.empty((n, d))
    cdef double[:] lr_v = lam_raw
    cdef double[:, :] dl_v = dlam
    cdef Py_ssize_t t, i
    cdef double lam
    for t in range(n):
        dl_v[t, 0] = 1.0
        lam = theta[0]
        for i in range(1, p + 1):
            dl_v[t, i] = lagval(y, t, i)
            lam += theta[i] * dl_v[t, i]
        lr_v[t] = lam
    per, grad_a, hess_a, scores_a = _poisson_outputs(n, d, order, want_scores)
    _poisson_accumulate(y, lam_raw, dlam, [], c_floor, order, want_scores, d,
                        per, grad_a, hess_a, scores_a)
    return per, grad_a, hess_a, scores_a


def ingarch_11_terms(const double[:] y, const double[:] theta, double c_floor,
                     int order, bint want_scores):
    """INGARCH(1,1) with the truncated-past recursion seeded at a0/(1-b1)."""
    cdef Py_ssize_t n = y.shape[0]
    cdef double a0 = theta[0], a1 = theta[1], b1 = theta[2]
    cdef double omb = 1.0 - b1
    cdef double seed = a0 / omb

    lam_raw = np.empty(n)
    dlam = np.empty((n, 3))
    cdef double[:] lr_v = lam_raw
    cdef double[:, :] dl_v = dlam
    cdef Py_ssize_t t
    cdef double lam_prev = seed
    cdef double d0 = 1.0 / omb                 # d lambda / d a0 (fixed point)
    cdef double d1_prev = 0.0                  # d lambda / d a1
    cdef double d2_prev = a0 / (omb * omb)     # d lambda / d b1
    cdef double ylag, d1, d2

    h01 = h11 = h22 = None
    cdef double[:] h01_v
    cdef double[:] h11_v
    cdef double[:] h22_v
    cdef double s01_prev = 1.0 / (omb * omb)        # d2 lambda / d a0 d b1
    cdef double s11_prev = 0.0                      # d2 lambda / d a1 d b1
    cdef double s22_prev = 2.0 * a0 / (omb ** 3)    # d2 lambda / d b1 d b1
    cdef double s01, s11, s22
    cdef bint want2 = order >= 2
    if want2:
        h01 = np.empty(n)
        h11 = np.empty(n)
        h22 = np.empty(n)
        h01_v = h01
        h11_v = h11
        h22_v = h22

    for t in range(n):
        ylag = y[t - 1] if t >= 1 else 0.0
        lam = a0 + a1 * ylag + b1 * lam_prev
        d1 = ylag + b1 * d1_prev
        d2 = lam_prev + b1 * d2_prev
        lr_v[t] = lam
        dl_v[t, 0] = d0
        dl_v[t, 1] = d1
        dl_v[t, 2] = d2
        if want2:
            s01 = d0 + b1 * s01_prev
            s11 = d1_prev + b1 * s11_prev
            s22 = 2.0 * d2_prev + b1 * s22_prev
            h01_v[t] = s01
            h11_v[t] = s11
            h22_v[t] = s22
            s01_prev = s01
            s11_prev = s11
            s22_prev = s22
        lam_prev = lam
        d1_prev = d1
        d2_prev = d2

    pairs = [(0, 2, h01), (1, 2, h11), (2, 2, h22)] if want2 else []
    per, grad_a, hess_a, scores_a = _poisson_outputs(n, 3, order, want_scores)
    _poisson_accumulate(y, lam_raw, dlam, pairs, c_floor, order, want_scores,
                        3, per, grad_a, hess_a, scores_a)
    return per, grad_a, hess_a, scores_a


def biv_ingarch_terms(const double[:, :] y, const double[:] theta, double c_floor,
                      int order, bint want_scores):
    """Bivariate linear INGARCH(1): lambda_t = a0 + A Y_{t-1}, theta length 6."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t d = 6
    lam1 = np.empty(n)
    lam2 = np.empty(n)
    dlam1 = np.zeros((n, d))
    dlam2 = np.zeros((n, d))
    cdef double[:] l1_v = lam1
    cdef double[:] l2_v = lam2
    cdef double[:, :] d1_v = dlam1
    cdef double[:, :] d2_v = dlam2
    cdef Py_ssize_t t
    cdef double y1l, y2l
    for t in range(n):
        y1l = y[t - 1, 0] if t >= 1 else 0.0
        y2l = y[t - 1, 1] if t >= 1 else 0.0
        l1_v[t] = theta[0] + theta[2] * y1l + theta[3] * y2l
        l2_v[t] = theta[1] + theta[4] * y1l + theta[5] * y2l
        d1_v[t, 0] = 1.0
        d1_v[t, 2] = y1l
        d1_v[t, 3] = y2l
        d2_v[t, 1] = 1.0
        d2_v[t, 4] = y1l
        d2_v[t, 5] = y2l

    per, grad_a, hess_a, scores_a = _poisson_outputs(n, d, order, want_scores)
    y1 = np.ascontiguousarray(np.asarray(y)[:, 0])
    y2 = np.ascontiguousarray(np.asarray(y)[:, 1])
    _poisson_accumulate(y1, lam1, dlam1, [], c_floor, order, want_scores, d,
                        per, grad_a, hess_a, scores_a)
    _poisson_accumulate(y2, lam2, dlam2, [], c_floor, order, want_scores, d,
                        per, grad_a, hess_a, scores_a)
    return per, grad_a, hess_a, scores_a


def contrast_terms(kind, y, x, theta, p, q, h_floor, c_floor, order,
                   want_scores):
    """Dispatch to the family kernel.  ``kind`` is the FamilyKind value string."""
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    order = int(order)
    want_scores = bool(want_scores)
    if kind == "ARX":
        yv = np.ascontiguousarray(y, dtype=np.float64)
        return arx_terms(yv, x, theta, p, q, h_floor, order, want_scores)
    if kind == "ARCH":
        yv = np.ascontiguousarray(y, dtype=np.float64)
        return arch_terms(yv, theta, p, h_floor, order, want_scores)
    if kind == "INGARCH_P":
        yv = np.ascontiguousarray(y, dtype=np.float64)
        return ingarch_p_terms(yv, theta, p, c_floor, order, want_scores)
    if kind == "INGARCH_11":
        yv = np.ascontiguousarray(y, dtype=np.float64)
        return ingarch_11_terms(yv, theta, c_floor, order, want_scores)
    if kind == "BIV_INGARCH":
        yv = np.ascontiguousarray(np.asarray(y).reshape(-1, 2), dtype=np.float64)
        return biv_ingarch_terms(yv, theta, c_floor, order, want_scores)
    raise ValueError(f"unknown family kind {kind!r}")
