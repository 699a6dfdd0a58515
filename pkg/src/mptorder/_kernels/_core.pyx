# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend.

Semantics match ``_pyref`` exactly (same API, same random-stream
consumption order); see that module for the contract documentation.
"""

from libc.math cimport exp, isnan, log, log1p, sqrt

import numpy as np

backend_name = "cython"

cdef double NEG_INF = float("-inf")


cdef inline double _expit(double x) noexcept nogil:
    cdef double z
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


cdef void _category_probs(
    const int[::1] fp,
    const unsigned char[::1] fc,
    const double[::1] fconst,
    const long[::1] bptr,
    const long[::1] cptr,
    const double[::1] theta,
    double[::1] probs,
) noexcept nogil:
    cdef Py_ssize_t c, b, f
    cdef double p, val, x
    for c in range(cptr.shape[0] - 1):
        p = 0.0
        for b in range(cptr[c], cptr[c + 1]):
            val = 1.0
            for f in range(bptr[b], bptr[b + 1]):
                if fp[f] >= 0:
                    x = theta[fp[f]]
                else:
                    x = fconst[f]
                if fc[f]:
                    x = 1.0 - x
                val *= x
            p += val
        probs[c] = p


cdef double _loglik(
    const double[::1] y, double coef, const double[::1] probs
) noexcept nogil:
    cdef Py_ssize_t c
    cdef double ll = coef
    for c in range(y.shape[0]):
        if y[c] > 0.0:
            if probs[c] <= 0.0:
                return NEG_INF
            ll += y[c] * log(probs[c])
    return ll


cdef void _v_to_theta(
    const int[::1] ident,
    const long[::1] chptr,
    const int[::1] chth,
    const unsigned char[::1] chmeth,
    const double[::1] v,
    double[::1] theta,
) noexcept nogil:
    cdef Py_ssize_t k, c, i
    cdef double acc
    for k in range(ident.shape[0]):
        if ident[k] >= 0:
            theta[ident[k]] = v[k]
    for c in range(chptr.shape[0] - 1):
        if chmeth[c] == 0:
            acc = 1.0
            for i in range(chptr[c + 1] - 1, chptr[c] - 1, -1):
                acc *= v[chth[i]]
                theta[chth[i]] = acc
        elif chmeth[c] == 1:
            acc = 1.0
            for i in range(chptr[c], chptr[c + 1]):
                acc *= 1.0 - v[chth[i]]
                theta[chth[i]] = 1.0 - acc
        else:
            for i in range(chptr[c], chptr[c + 1]):
                theta[chth[i]] = v[chth[i]]


cdef double _log_prior_v(
    const long[::1] chptr,
    const int[::1] chth,
    const unsigned char[::1] chmeth,
    const double[::1] ba,
    const double[::1] bb,
    const double[::1] blnb,
    double lconst,
    const double[::1] v,
) noexcept nogil:
    cdef Py_ssize_t k, c, i
    cdef double lp = lconst
    cdef double vk
    for k in range(v.shape[0]):
        vk = v[k]
        if vk <= 0.0 or vk >= 1.0:
            return NEG_INF
        lp += (ba[k] - 1.0) * log(vk) + (bb[k] - 1.0) * log1p(-vk) - blnb[k]
    for c in range(chptr.shape[0] - 1):
        if chmeth[c] == 2:
            for i in range(chptr[c], chptr[c + 1] - 1):
                if v[chth[i]] > v[chth[i + 1]]:
                    return NEG_INF
    return lp


cdef double _log_target_x(
    const int[::1] fp,
    const unsigned char[::1] fc,
    const double[::1] fconst,
    const long[::1] bptr,
    const long[::1] cptr,
    const int[::1] ident,
    const long[::1] chptr,
    const int[::1] chth,
    const unsigned char[::1] chmeth,
    const double[::1] ba,
    const double[::1] bb,
    const double[::1] blnb,
    double lconst,
    const double[::1] y,
    double coef,
    const double[::1] v,
    double[::1] theta_buf,
    double[::1] probs_buf,
) noexcept nogil:
    cdef double lp = _log_prior_v(chptr, chth, chmeth, ba, bb, blnb, lconst, v)
    cdef Py_ssize_t k
    cdef double total
    if lp == NEG_INF:
        return NEG_INF
    for k in range(v.shape[0]):
        lp += log(v[k]) + log1p(-v[k])
    _v_to_theta(ident, chptr, chth, chmeth, v, theta_buf)
    _category_probs(fp, fc, fconst, bptr, cptr, theta_buf, probs_buf)
    total = lp + _loglik(y, coef, probs_buf)
    if isnan(total):
        return NEG_INF
    return total


cdef void _run_sweeps(
    const int[::1] fp,
    const unsigned char[::1] fc,
    const double[::1] fconst,
    const long[::1] bptr,
    const long[::1] cptr,
    const int[::1] ident,
    const long[::1] chptr,
    const int[::1] chth,
    const unsigned char[::1] chmeth,
    const double[::1] ba,
    const double[::1] bb,
    const double[::1] blnb,
    double lconst,
    const double[::1] y,
    double coef,
    double[::1] x,
    double[::1] v,
    double[::1] log_step,
    double[::1] batch_acc,
    const double[:, ::1] normals,
    const double[:, ::1] uniforms,
    long[::1] counters,
    double[::1] scalars,
    long warmup,
    long adapt_batch,
    double target_accept,
    long thin,
    double[:, ::1] out,
    double[::1] theta_buf,
    double[::1] probs_buf,
) noexcept nogil:
    cdef Py_ssize_t s, j
    cdef Py_ssize_t n_sweeps = normals.shape[0]
    cdef Py_ssize_t k = normals.shape[1]
    cdef double cur_lp = scalars[0]
    cdef double x_old, v_old, new_lp, delta
    cdef long g
    for s in range(n_sweeps):
        for j in range(k):
            x_old = x[j]
            v_old = v[j]
            x[j] = x_old + exp(log_step[j]) * normals[s, j]
            v[j] = _expit(x[j])
            new_lp = _log_target_x(
                fp, fc, fconst, bptr, cptr,
                ident, chptr, chth, chmeth, ba, bb, blnb, lconst,
                y, coef, v, theta_buf, probs_buf,
            )
            if log(uniforms[s, j]) < new_lp - cur_lp:
                cur_lp = new_lp
                batch_acc[j] += 1.0
                if counters[0] >= warmup:
                    counters[2] += 1
            else:
                x[j] = x_old
                v[j] = v_old
            if counters[0] >= warmup:
                counters[3] += 1
        counters[0] += 1
        g = counters[0]
        if g <= warmup and g % adapt_batch == 0:
            delta = 1.0 / sqrt(<double> g / <double> adapt_batch)
            if delta > 0.1:
                delta = 0.1
            for j in range(k):
                if batch_acc[j] / adapt_batch > target_accept:
                    log_step[j] += delta
                else:
                    log_step[j] -= delta
                batch_acc[j] = 0.0
        if g > warmup and (g - warmup - 1) % thin == 0:
            for j in range(k):
                out[counters[1], j] = v[j]
            counters[1] += 1
    scalars[0] = cur_lp


def category_probs(flat, theta):
    fp, fc, fconst, bptr, cptr, n_free = flat
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    probs = np.empty(len(cptr) - 1)
    _category_probs(fp, fc, fconst, bptr, cptr, theta, probs)
    return probs


def category_probs_batch(flat, thetas):
    fp, fc, fconst, bptr, cptr, n_free = flat
    thetas = np.ascontiguousarray(np.atleast_2d(thetas), dtype=np.float64)
    cdef Py_ssize_t n = thetas.shape[0]
    out = np.empty((n, len(cptr) - 1))
    cdef const int[::1] fp_v = fp
    cdef const unsigned char[::1] fc_v = fc
    cdef const double[::1] fconst_v = fconst
    cdef const long[::1] bptr_v = bptr
    cdef const long[::1] cptr_v = cptr
    cdef const double[:, ::1] th_v = thetas
    cdef double[:, ::1] out_v = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _category_probs(fp_v, fc_v, fconst_v, bptr_v, cptr_v, th_v[i], out_v[i])
    return out


def loglik(flat, y, log_coef, theta):
    fp, fc, fconst, bptr, cptr, n_free = flat
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    probs = np.empty(len(cptr) - 1)
    _category_probs(fp, fc, fconst, bptr, cptr, theta, probs)
    return _loglik(y, log_coef, probs)


def loglik_batch(flat, y, log_coef, thetas):
    fp, fc, fconst, bptr, cptr, n_free = flat
    thetas = np.ascontiguousarray(np.atleast_2d(thetas), dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = thetas.shape[0]
    out = np.empty(n)
    probs = np.empty(len(cptr) - 1)
    cdef const int[::1] fp_v = fp
    cdef const unsigned char[::1] fc_v = fc
    cdef const double[::1] fconst_v = fconst
    cdef const long[::1] bptr_v = bptr
    cdef const long[::1] cptr_v = cptr
    cdef const double[:, ::1] th_v = thetas
    cdef const double[::1] y_v = y
    cdef double[::1] out_v = out
    cdef double[::1] probs_v = probs
    cdef double coef = log_coef
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _category_probs(fp_v, fc_v, fconst_v, bptr_v, cptr_v, th_v[i], probs_v)
            out_v[i] = _loglik(y_v, coef, probs_v)
    return out


def v_to_theta(wmap, v):
    ident, chptr, chth, chmeth = wmap[:4]
    v = np.ascontiguousarray(v, dtype=np.float64)
    theta = np.empty_like(v)
    _v_to_theta(ident, chptr, chth, chmeth, v, theta)
    return theta


def v_to_theta_batch(wmap, vs):
    ident, chptr, chth, chmeth = wmap[:4]
    vs = np.ascontiguousarray(np.atleast_2d(vs), dtype=np.float64)
    out = np.empty_like(vs)
    cdef const int[::1] ident_v = ident
    cdef const long[::1] chptr_v = chptr
    cdef const int[::1] chth_v = chth
    cdef const unsigned char[::1] chmeth_v = chmeth
    cdef const double[:, ::1] vs_v = vs
    cdef double[:, ::1] out_v = out
    cdef Py_ssize_t i, n = vs.shape[0]
    with nogil:
        for i in range(n):
            _v_to_theta(ident_v, chptr_v, chth_v, chmeth_v, vs_v[i], out_v[i])
    return out


def log_prior_v(wmap, v):
    ident, chptr, chth, chmeth, ba, bb, blnb, lconst = wmap
    v = np.ascontiguousarray(v, dtype=np.float64)
    return _log_prior_v(chptr, chth, chmeth, ba, bb, blnb, lconst, v)


def log_prior_v_batch(wmap, vs):
    ident, chptr, chth, chmeth, ba, bb, blnb, lconst = wmap
    vs = np.ascontiguousarray(np.atleast_2d(vs), dtype=np.float64)
    cdef Py_ssize_t n = vs.shape[0]
    out = np.empty(n)
    cdef const long[::1] chptr_v = chptr
    cdef const int[::1] chth_v = chth
    cdef const unsigned char[::1] chmeth_v = chmeth
    cdef const double[::1] ba_v = ba
    cdef const double[::1] bb_v = bb
    cdef const double[::1] blnb_v = blnb
    cdef double lconst_c = lconst
    cdef const double[:, ::1] vs_v = vs
    cdef double[::1] out_v = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out_v[i] = _log_prior_v(
                chptr_v, chth_v, chmeth_v, ba_v, bb_v, blnb_v, lconst_c, vs_v[i]
            )
    return out


def log_target_x(flat, wmap, y, log_coef, v):
    fp, fc, fconst, bptr, cptr, n_free = flat
    ident, chptr, chth, chmeth, ba, bb, blnb, lconst = wmap
    v = np.ascontiguousarray(v, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    theta_buf = np.empty(int(n_free))
    probs_buf = np.empty(len(cptr) - 1)
    return _log_target_x(
        fp, fc, fconst, bptr, cptr,
        ident, chptr, chth, chmeth, ba, bb, blnb, lconst,
        y, log_coef, v, theta_buf, probs_buf,
    )


def run_sweeps(
    flat,
    wmap,
    y,
    log_coef,
    x,
    v,
    log_step,
    batch_acc,
    normals,
    uniforms,
    counters,
    scalars,
    warmup,
    adapt_batch,
    target_accept,
    thin,
    out,
):
    fp, fc, fconst, bptr, cptr, n_free = flat
    ident, chptr, chth, chmeth, ba, bb, blnb, lconst = wmap
    y = np.ascontiguousarray(y, dtype=np.float64)
    theta_buf = np.empty(int(n_free))
    probs_buf = np.empty(len(cptr) - 1)
    cdef const int[::1] fp_v = fp
    cdef const unsigned char[::1] fc_v = fc
    cdef const double[::1] fconst_v = fconst
    cdef const long[::1] bptr_v = bptr
    cdef const long[::1] cptr_v = cptr
    cdef const int[::1] ident_v = ident
    cdef const long[::1] chptr_v = chptr
    cdef const int[::1] chth_v = chth
    cdef const unsigned char[::1] chmeth_v = chmeth
    cdef const double[::1] ba_v = ba
    cdef const double[::1] bb_v = bb
    cdef const double[::1] blnb_v = blnb
    cdef double lconst_c = lconst
    cdef const double[::1] y_v = y
    cdef double coef = log_coef
    cdef double[::1] x_v = x
    cdef double[::1] v_v = v
    cdef double[::1] step_v = log_step
    cdef double[::1] acc_v = batch_acc
    cdef const double[:, ::1] normals_v = normals
    cdef const double[:, ::1] uniforms_v = uniforms
    cdef long[::1] counters_v = counters
    cdef double[::1] scalars_v = scalars
    cdef double[:, ::1] out_v = out
    cdef double[::1] theta_v = theta_buf
    cdef double[::1] probs_v = probs_buf
    cdef long warmup_c = warmup
    cdef long adapt_c = adapt_batch
    cdef double target_c = target_accept
    cdef long thin_c = thin
    with nogil:
        _run_sweeps(
            fp_v, fc_v, fconst_v, bptr_v, cptr_v,
            ident_v, chptr_v, chth_v, chmeth_v, ba_v, bb_v, blnb_v, lconst_c,
            y_v, coef,
            x_v, v_v, step_v, acc_v,
            normals_v, uniforms_v, counters_v, scalars_v,
            warmup_c, adapt_c, target_c, thin_c,
            out_v, theta_v, probs_v,
        )
