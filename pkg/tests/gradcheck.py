"""Central finite-difference gradient oracle shared by the encoder/ranker tests."""

import numpy as np

EPS = 1e-4
# Denominator floor for relative error: entries whose true gradient is below
# this are compared on an absolute scale, since the O(eps^2) truncation term
# of the central difference is not relative to the gradient's size.
REL_FLOOR = 1e-6


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def numeric_grad(f, param, eps=EPS):
    """d f / d param by central differences, perturbing ``param`` in place."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = param[idx]
        param[idx] = orig + eps
        fp = f()
        param[idx] = orig - eps
        fm = f()
        param[idx] = orig
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


def max_relative_error(f, params, grads, eps=EPS):
    """Max relative error over every entry of every parameter."""
    worst = 0.0
    for name, p in params.items():
        num = numeric_grad(f, p, eps)
        err = relative_error(grads[name], num)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
