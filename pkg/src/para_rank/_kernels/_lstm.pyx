# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled LSTM recurrence; same contract as ``fallback.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, fabs

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    cdef double e = exp(-fabs(z))
    if z >= 0:
        return 1.0 / (1.0 + e)
    return e / (1.0 + e)


def lstm_forward(const double[:, ::1] xw, const double[:, ::1] U):
    cdef Py_ssize_t T = xw.shape[0]
    cdef Py_ssize_t H = U.shape[1]
    cdef Py_ssize_t G = 4 * H
    if U.shape[0] != G or xw.shape[1] != G:
        raise ValueError("gate dimension mismatch")
    gates_arr = np.empty((T, G))
    c_arr = np.empty((T, H))
    h_arr = np.empty((T, H))
    cdef double[:, ::1] gates = gates_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] h = h_arr
    cdef Py_ssize_t t, r, k
    cdef double acc, cp
    with nogil:
        for t in range(T):
            for r in range(G):
                acc = xw[t, r]
                if t > 0:
                    for k in range(H):
                        acc = acc + U[r, k] * h[t - 1, k]
                if r < 3 * H:
                    gates[t, r] = _sigmoid(acc)
                else:
                    gates[t, r] = tanh(acc)
            for k in range(H):
                cp = c[t - 1, k] if t > 0 else 0.0
                c[t, k] = gates[t, H + k] * cp + gates[t, k] * gates[t, 3 * H + k]
                h[t, k] = gates[t, 2 * H + k] * tanh(c[t, k])
    return gates_arr, c_arr, h_arr


def lstm_backward(const double[:, ::1] gates, const double[:, ::1] c,
                  const double[:, ::1] h, const double[:, ::1] U,
                  const double[:, ::1] dh_out):
    cdef Py_ssize_t T = gates.shape[0]
    cdef Py_ssize_t H = U.shape[1]
    cdef Py_ssize_t G = 4 * H
    dz_arr = np.empty((T, G))
    dU_arr = np.zeros((G, H))
    cdef double[:, ::1] dz = dz_arr
    cdef double[:, ::1] dU = dU_arr
    cdef double[::1] dh_next = np.zeros(H)
    cdef double[::1] dc_next = np.zeros(H)
    cdef Py_ssize_t t, k, r
    cdef double i, f, o, g, tc, dh, dc, cp, hp, acc
    with nogil:
        for t in range(T - 1, -1, -1):
            for k in range(H):
                i = gates[t, k]
                f = gates[t, H + k]
                o = gates[t, 2 * H + k]
                g = gates[t, 3 * H + k]
                cp = c[t - 1, k] if t > 0 else 0.0
                tc = tanh(c[t, k])
                dh = dh_out[t, k] + dh_next[k]
                dc = dc_next[k] + dh * o * (1.0 - tc * tc)
                dz[t, k] = dc * g * i * (1.0 - i)
                dz[t, H + k] = dc * cp * f * (1.0 - f)
                dz[t, 2 * H + k] = dh * tc * o * (1.0 - o)
                dz[t, 3 * H + k] = dc * i * (1.0 - g * g)
                dc_next[k] = dc * f
            if t > 0:
                for r in range(G):
                    for k in range(H):
                        dU[r, k] += dz[t, r] * h[t - 1, k]
            for k in range(H):
                acc = 0.0
                for r in range(G):
                    acc = acc + U[r, k] * dz[t, r]
                dh_next[k] = acc
    return dz_arr, dU_arr
