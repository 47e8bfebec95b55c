"""Pure numpy LSTM recurrence. Reference for the compiled kernel in ``_lstm.pyx``.

Both kernels take the input projection ``xw = X @ W.T + b`` precomputed for
all steps (shape (T, 4H), gate order i, f, o, g) and only run the sequential
part, which is what dominates runtime.
"""

import numpy as np


def sigmoid(z):
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def lstm_forward(xw, U):
    T = xw.shape[0]
    H = U.shape[1]
    gates = np.empty((T, 4 * H))
    c = np.empty((T, H))
    h = np.empty((T, H))
    h_prev = np.zeros(H)
    c_prev = np.zeros(H)
    for t in range(T):
        z = xw[t] + U @ h_prev
        a = gates[t]
        a[: 3 * H] = sigmoid(z[: 3 * H])
        a[3 * H :] = np.tanh(z[3 * H :])
        c[t] = a[H : 2 * H] * c_prev + a[:H] * a[3 * H :]
        h[t] = a[2 * H : 3 * H] * np.tanh(c[t])
        h_prev = h[t]
        c_prev = c[t]
    return gates, c, h


def lstm_backward(gates, c, h, U, dh_out):
    """Backprop through time. Returns (dz, dU); dz are pre-activation gate grads."""
    T = gates.shape[0]
    H = U.shape[1]
    dz = np.empty((T, 4 * H))
    dU = np.zeros_like(U)
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    zero = np.zeros(H)
    for t in range(T - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        o = gates[t, 2 * H : 3 * H]
        g = gates[t, 3 * H :]
        c_prev = c[t - 1] if t > 0 else zero
        h_prev = h[t - 1] if t > 0 else zero
        tc = np.tanh(c[t])
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz[t, :H] = dc * g * i * (1.0 - i)
        dz[t, H : 2 * H] = dc * c_prev * f * (1.0 - f)
        dz[t, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dz[t, 3 * H :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dU += np.outer(dz[t], h_prev)
        dh_next = U.T @ dz[t]
    return dz, dU
