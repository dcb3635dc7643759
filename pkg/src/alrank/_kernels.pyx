# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Pairwise lambda/cost kernels (O(n^2) per query), histogram accumulation,
best-split scan, stable partition, and tree traversal.  Mirrors the numpy
implementations in _kernels_py; alrank.kernels picks one at import.
"""

from libc.math cimport exp, fabs, log1p

import numpy as np

cimport numpy as cnp

BACKEND = "cython"


cdef inline double _softplus_neg(double t) nogil:
    # log(1 + exp(-t)) without overflow
    if t >= 0.0:
        return log1p(exp(-t))
    return -t + log1p(exp(t))


cdef inline double _inv_logistic(double t) nogil:
    # 1 / (1 + exp(t)) without overflow
    cdef double e
    if t >= 0.0:
        e = exp(-t)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(t))


def query_cost(cnp.int32_t[::1] grades, double[::1] gains, cnp.int32_t[::1] ranks,
               double[::1] disc, double inv_idcg, double[::1] scores, double sigma):
    """Pairwise surrogate cost of one query at the given scores."""
    cdef Py_ssize_t n = grades.shape[0]
    cdef Py_ssize_t i, j
    cdef double cost = 0.0
    cdef double w, t
    for i in range(n):
        for j in range(n):
            if grades[i] > grades[j]:
                w = (gains[i] - gains[j]) * fabs(disc[ranks[i]] - disc[ranks[j]]) * inv_idcg
                t = sigma * (scores[i] - scores[j])
                cost += w * _softplus_neg(t)
    return cost


def query_lambdas(cnp.int32_t[::1] grades, double[::1] gains, cnp.int32_t[::1] ranks,
                  double[::1] disc, double inv_idcg, double[::1] scores, double sigma,
                  double[::1] lam, double[::1] hess):
    """Accumulate pairwise gradients/hessians for one query into lam/hess."""
    cdef Py_ssize_t n = grades.shape[0]
    cdef Py_ssize_t i, j
    cdef double w, t, rho, g, h
    for i in range(n):
        for j in range(n):
            if grades[i] > grades[j]:
                w = (gains[i] - gains[j]) * fabs(disc[ranks[i]] - disc[ranks[j]]) * inv_idcg
                t = sigma * (scores[i] - scores[j])
                rho = _inv_logistic(t)
                g = sigma * w * rho
                h = sigma * g * (1.0 - rho)
                lam[i] -= g
                lam[j] += g
                hess[i] += h
                hess[j] += h


def hist_build(const cnp.uint8_t[:, ::1] bins, double[::1] grad, double[::1] hess,
               cnp.int32_t[::1] idx, double[:, ::1] hg, double[:, ::1] hh,
               cnp.int32_t[:, ::1] hn):
    """Per-feature (gradient, hessian, count) histograms over the given rows."""
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t d = bins.shape[1]
    cdef Py_ssize_t p, f
    cdef cnp.int32_t doc
    cdef cnp.uint8_t b
    for p in range(n):
        doc = idx[p]
        for f in range(d):
            b = bins[doc, f]
            hg[f, b] += grad[doc]
            hh[f, b] += hess[doc]
            hn[f, b] += 1


def hist_best_split(double[:, ::1] hg, double[:, ::1] hh, cnp.int32_t[:, ::1] hn,
                    double g_total, double h_total, int n_total,
                    double lambda_reg, int min_docs):
    """Best (feature, bin, gain) over all histogram cuts; feature -1 if none.

    A cut after bin b sends bins <= b left.  Scan order is feature then bin
    ascending with strict improvement, so ties pick the lexicographically
    first cut.
    """
    cdef Py_ssize_t d = hg.shape[0]
    cdef Py_ssize_t n_bins = hg.shape[1]
    cdef Py_ssize_t f, b
    cdef double gl, hl, gr, hr, gain
    cdef int nl
    cdef double parent = (g_total * g_total) / (h_total + lambda_reg) \
        if h_total + lambda_reg > 0.0 else 0.0
    # Guard against splitting on float rounding noise when the true gain is 0
    # (e.g. constant targets with lambda_reg = 0).
    cdef double eps = 1e-12 * (parent if parent > 1.0 else 1.0)
    cdef double best_gain = eps
    cdef Py_ssize_t best_f = -1, best_b = -1
    for f in range(d):
        gl = 0.0
        hl = 0.0
        nl = 0
        for b in range(n_bins - 1):
            gl += hg[f, b]
            hl += hh[f, b]
            nl += hn[f, b]
            if nl < min_docs:
                continue
            if n_total - nl < min_docs:
                break
            gr = g_total - gl
            hr = h_total - hl
            if hl + lambda_reg <= 0.0 or hr + lambda_reg <= 0.0:
                continue
            gain = (gl * gl) / (hl + lambda_reg) + (gr * gr) / (hr + lambda_reg) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_b = b
    if best_f < 0:
        return -1, -1, 0.0
    return best_f, best_b, best_gain


def partition(const cnp.uint8_t[:, ::1] bins, cnp.int32_t[::1] idx,
              Py_ssize_t feature, int split_bin):
    """Stable split of idx by bin <= split_bin on one feature."""
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t i
    left_arr = np.empty(n, dtype=np.int32)
    right_arr = np.empty(n, dtype=np.int32)
    cdef cnp.int32_t[::1] left = left_arr
    cdef cnp.int32_t[::1] right = right_arr
    cdef Py_ssize_t nl = 0, nr = 0
    for i in range(n):
        if bins[idx[i], feature] <= split_bin:
            left[nl] = idx[i]
            nl += 1
        else:
            right[nr] = idx[i]
            nr += 1
    return left_arr[:nl].copy(), right_arr[:nr].copy()


def tree_apply(const double[:, ::1] features, cnp.int32_t[::1] feat, double[::1] thr,
               cnp.int32_t[::1] left, cnp.int32_t[::1] right, double[::1] value,
               double[::1] out):
    """Route every row to a leaf; write the leaf value into out."""
    cdef Py_ssize_t n = features.shape[0]
    cdef Py_ssize_t i
    cdef cnp.int32_t node
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if features[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
