# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LIF time-loop kernels; see _lifnumpy for the contract.

The whole unrolled sequence (steps x batch x width) runs in fused C loops,
which is where training spends nearly all of its time. Results agree with the
numpy fallback to floating round-off (summation order differs slightly).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan, M_PI

cnp.import_array()


cdef inline double _sg(double x, double alpha) noexcept nogil:
    cdef double z = 0.5 * M_PI * alpha * x
    return 0.5 * alpha / (1.0 + z * z)


cdef inline double _relax(double x, double alpha) noexcept nogil:
    return 0.5 + atan(0.5 * M_PI * alpha * x) / M_PI


def forward_seq(x, w1, b1, w2, b2, double beta, double theta, double alpha,
                bint relaxed):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] w1v = np.ascontiguousarray(w1, dtype=np.float64)
    cdef double[::1] b1v = np.ascontiguousarray(b1, dtype=np.float64)
    cdef double[:, ::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef double[::1] b2v = np.ascontiguousarray(b2, dtype=np.float64)

    cdef Py_ssize_t steps = xv.shape[0], batch = xv.shape[1], nin = xv.shape[2]
    cdef Py_ssize_t nh = w1v.shape[0], no = w2v.shape[0]

    upre1_arr = np.empty((steps, batch, nh), dtype=np.float64)
    s1_arr = np.empty((steps, batch, nh), dtype=np.float64)
    upre2_arr = np.empty((steps, batch, no), dtype=np.float64)
    s2_arr = np.empty((steps, batch, no), dtype=np.float64)
    u1_arr = np.zeros((batch, nh), dtype=np.float64)
    u2_arr = np.zeros((batch, no), dtype=np.float64)

    cdef double[:, :, ::1] upre1 = upre1_arr
    cdef double[:, :, ::1] s1 = s1_arr
    cdef double[:, :, ::1] upre2 = upre2_arr
    cdef double[:, :, ::1] s2 = s2_arr
    cdef double[:, ::1] u1 = u1_arr
    cdef double[:, ::1] u2 = u2_arr

    cdef Py_ssize_t t, b, h, i, o
    cdef double acc, sp

    with nogil:
        for t in range(steps):
            for b in range(batch):
                for h in range(nh):
                    acc = b1v[h]
                    for i in range(nin):
                        acc += xv[t, b, i] * w1v[h, i]
                    acc += beta * u1[b, h]
                    upre1[t, b, h] = acc
                    if relaxed:
                        sp = _relax(acc - theta, alpha)
                    else:
                        sp = 1.0 if acc >= theta else 0.0
                    s1[t, b, h] = sp
                    u1[b, h] = acc - theta * sp
                for o in range(no):
                    acc = b2v[o]
                    for h in range(nh):
                        acc += s1[t, b, h] * w2v[o, h]
                    acc += beta * u2[b, o]
                    upre2[t, b, o] = acc
                    if relaxed:
                        sp = _relax(acc - theta, alpha)
                    else:
                        sp = 1.0 if acc >= theta else 0.0
                    s2[t, b, o] = sp
                    u2[b, o] = acc - theta * sp
    return s2_arr, upre1_arr, s1_arr, upre2_arr


def backward_seq(x, s1, upre1, upre2, gy, w1, w2, double beta, double theta,
                 double alpha, bint relaxed):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] s1v = np.ascontiguousarray(s1, dtype=np.float64)
    cdef double[:, :, ::1] upre1v = np.ascontiguousarray(upre1, dtype=np.float64)
    cdef double[:, :, ::1] upre2v = np.ascontiguousarray(upre2, dtype=np.float64)
    cdef double[:, :, ::1] gyv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, ::1] w1v = np.ascontiguousarray(w1, dtype=np.float64)
    cdef double[:, ::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)

    cdef Py_ssize_t steps = xv.shape[0], batch = xv.shape[1], nin = xv.shape[2]
    cdef Py_ssize_t nh = w1v.shape[0], no = w2v.shape[0]

    dw1_arr = np.zeros((nh, nin), dtype=np.float64)
    db1_arr = np.zeros(nh, dtype=np.float64)
    dw2_arr = np.zeros((no, nh), dtype=np.float64)
    db2_arr = np.zeros(no, dtype=np.float64)
    lam1_arr = np.zeros((batch, nh), dtype=np.float64)
    lam2_arr = np.zeros((batch, no), dtype=np.float64)
    gs1_arr = np.zeros((batch, nh), dtype=np.float64)

    cdef double[:, ::1] dw1 = dw1_arr
    cdef double[::1] db1 = db1_arr
    cdef double[:, ::1] dw2 = dw2_arr
    cdef double[::1] db2 = db2_arr
    cdef double[:, ::1] lam1 = lam1_arr
    cdef double[:, ::1] lam2 = lam2_arr
    cdef double[:, ::1] gs1 = gs1_arr

    cdef Py_ssize_t t, b, h, i, o
    cdef double d, lam, lo

    with nogil:
        for t in range(steps - 1, -1, -1):
            for b in range(batch):
                # output layer: new lambda2, weight grads, and gs1 = lam2 @ w2
                for h in range(nh):
                    gs1[b, h] = 0.0
                for o in range(no):
                    d = _sg(upre2v[t, b, o] - theta, alpha)
                    lam = beta * lam2[b, o]
                    if relaxed:
                        lam = lam * (1.0 - theta * d) + gyv[t, b, o] * d
                    else:
                        lam = lam + gyv[t, b, o] * d
                    lam2[b, o] = lam
                    db2[o] += lam
                    for h in range(nh):
                        dw2[o, h] += lam * s1v[t, b, h]
                        gs1[b, h] += lam * w2v[o, h]
                # hidden layer
                for h in range(nh):
                    d = _sg(upre1v[t, b, h] - theta, alpha)
                    lam = beta * lam1[b, h]
                    if relaxed:
                        lam = lam * (1.0 - theta * d) + gs1[b, h] * d
                    else:
                        lam = lam + gs1[b, h] * d
                    lam1[b, h] = lam
                    db1[h] += lam
                    for i in range(nin):
                        dw1[h, i] += lam * xv[t, b, i]
    return dw1_arr, db1_arr, dw2_arr, db2_arr
