# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled LSTM sequence kernels. Same contract as the NumPy fallback:
each step is evaluated independently, double precision throughout."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double z) nogil:
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    cdef double e = exp(z)
    return e / (1.0 + e)


def lstm_step(double[:, ::1] wx, double[:, ::1] wh, double[::1] b,
              double[::1] x, double[::1] h, double[::1] c):
    cdef Py_ssize_t D = x.shape[0]
    cdef Py_ssize_t H = wh.shape[1]
    h_new_arr = np.empty(H)
    c_new_arr = np.empty(H)
    z_arr = np.empty(4 * H)
    cdef double[::1] h_new = h_new_arr, c_new = c_new_arr, z = z_arr
    cdef Py_ssize_t r, k
    cdef double acc, iv, fv, gv, ov, cv
    with nogil:
        for r in range(4 * H):
            acc = b[r]
            for k in range(D):
                acc += wx[r, k] * x[k]
            for k in range(H):
                acc += wh[r, k] * h[k]
            z[r] = acc
        for k in range(H):
            iv = _sig(z[k])
            fv = _sig(z[H + k])
            gv = tanh(z[2 * H + k])
            ov = _sig(z[3 * H + k])
            cv = fv * c[k] + iv * gv
            c_new[k] = cv
            h_new[k] = ov * tanh(cv)
    return h_new_arr, c_new_arr


def lstm_forward(double[:, ::1] wx, double[:, ::1] wh, double[::1] b,
                 double[:, ::1] xs, double[::1] h0, double[::1] c0):
    cdef Py_ssize_t T = xs.shape[0]
    cdef Py_ssize_t D = xs.shape[1]
    cdef Py_ssize_t H = wh.shape[1]
    gi_arr = np.empty((T, H))
    gf_arr = np.empty((T, H))
    gg_arr = np.empty((T, H))
    go_arr = np.empty((T, H))
    cs_arr = np.empty((T, H))
    hs_arr = np.empty((T, H))
    z_arr = np.empty(4 * H)
    h_arr = np.array(h0, dtype=np.float64)
    c_arr = np.array(c0, dtype=np.float64)
    cdef double[:, ::1] gi = gi_arr, gf = gf_arr, gg = gg_arr, go = go_arr
    cdef double[:, ::1] cs = cs_arr, hs = hs_arr
    cdef double[::1] z = z_arr, h = h_arr, c = c_arr
    cdef Py_ssize_t t, r, k
    cdef double acc, iv, fv, gv, ov, cv

    with nogil:
        for t in range(T):
            for r in range(4 * H):
                acc = b[r]
                for k in range(D):
                    acc += wx[r, k] * xs[t, k]
                for k in range(H):
                    acc += wh[r, k] * h[k]
                z[r] = acc
            for k in range(H):
                iv = _sig(z[k])
                fv = _sig(z[H + k])
                gv = tanh(z[2 * H + k])
                ov = _sig(z[3 * H + k])
                cv = fv * c[k] + iv * gv
                gi[t, k] = iv
                gf[t, k] = fv
                gg[t, k] = gv
                go[t, k] = ov
                cs[t, k] = cv
                c[k] = cv
                h[k] = ov * tanh(cv)
                hs[t, k] = h[k]
    return hs_arr, gi_arr, gf_arr, gg_arr, go_arr, cs_arr


def lstm_backward(double[:, ::1] wx, double[:, ::1] wh,
                  double[:, ::1] xs, double[::1] h0, double[::1] c0,
                  double[:, ::1] gi, double[:, ::1] gf, double[:, ::1] gg,
                  double[:, ::1] go, double[:, ::1] cs, double[:, ::1] hs,
                  double[:, ::1] dh_out, double[:, ::1] dc_out):
    cdef Py_ssize_t T = hs.shape[0]
    cdef Py_ssize_t H = hs.shape[1]
    cdef Py_ssize_t D = xs.shape[1]
    dwx_arr = np.zeros((4 * H, D))
    dwh_arr = np.zeros((4 * H, H))
    db_arr = np.zeros(4 * H)
    dx_arr = np.zeros((T, D))
    dh_next_arr = np.zeros(H)
    dc_next_arr = np.zeros(H)
    dz_arr = np.empty(4 * H)
    cdef double[:, ::1] dwx = dwx_arr, dwh = dwh_arr, dx = dx_arr
    cdef double[::1] db = db_arr, dh_next = dh_next_arr, dc_next = dc_next_arr, dz = dz_arr
    cdef Py_ssize_t t, k, r
    cdef double tc, dh, dc, do_, di, dg, df, iv, fv, gv, ov, cprev, hprev, acc

    with nogil:
        for t in range(T - 1, -1, -1):
            for k in range(H):
                iv = gi[t, k]
                fv = gf[t, k]
                gv = gg[t, k]
                ov = go[t, k]
                tc = tanh(cs[t, k])
                if t > 0:
                    cprev = cs[t - 1, k]
                else:
                    cprev = c0[k]
                dh = dh_out[t, k] + dh_next[k]
                dc = dc_out[t, k] + dc_next[k] + dh * ov * (1.0 - tc * tc)
                do_ = dh * tc
                di = dc * gv
                dg = dc * iv
                df = dc * cprev
                dz[k] = di * iv * (1.0 - iv)
                dz[H + k] = df * fv * (1.0 - fv)
                dz[2 * H + k] = dg * (1.0 - gv * gv)
                dz[3 * H + k] = do_ * ov * (1.0 - ov)
                dc_next[k] = dc * fv
            for r in range(4 * H):
                db[r] += dz[r]
                for k in range(D):
                    dwx[r, k] += dz[r] * xs[t, k]
                if t > 0:
                    for k in range(H):
                        dwh[r, k] += dz[r] * hs[t - 1, k]
                else:
                    for k in range(H):
                        dwh[r, k] += dz[r] * h0[k]
            for k in range(D):
                acc = 0.0
                for r in range(4 * H):
                    acc += wx[r, k] * dz[r]
                dx[t, k] = acc
            for k in range(H):
                acc = 0.0
                for r in range(4 * H):
                    acc += wh[r, k] * dz[r]
                dh_next[k] = acc
    return dwx_arr, dwh_arr, db_arr, dx_arr, dh_next_arr, dc_next_arr
