"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature. The selection kernels agree exactly; the dense kernels agree to
rounding (~1e-12), since BLAS may order sums differently. ``tsic.kernels``
picks one at import.
"""
import numpy as np


def masked_argmax(q, mask):
    """Index of the largest ``q[i]`` with ``mask[i] != 0``; lowest index on ties.

    Returns -1 when the mask is all zero.
    """
    best = -1
    best_val = 0.0
    for i in range(q.shape[0]):
        if mask[i] and (best < 0 or q[i] > best_val):
            best = i
            best_val = q[i]
    return best


def argmin_priority(freq, size, use_size):
    """Position of the minimal ``freq * size`` (or ``freq``); first position on ties."""
    best = -1
    best_val = 0.0
    for i in range(freq.shape[0]):
        h = freq[i] * size[i] if use_size else freq[i]
        if best < 0 or h < best_val:
            best = i
            best_val = h
    return best


def mlp_forward(x, w1, b1, w2, b2):
    """Two ReLU layers. Returns (h1, h2) for a (batch, in) input."""
    h1 = x @ w1 + b1
    np.maximum(h1, 0.0, out=h1)
    h2 = h1 @ w2 + b2
    np.maximum(h2, 0.0, out=h2)
    return h1, h2


def mlp_backward(x, h1, h2, w2, dh2):
    """Gradients of the two-layer ReLU block given d(loss)/d(h2).

    Returns (dw1, db1, dw2, db2).
    """
    dz2 = dh2 * (h2 > 0.0)
    dw2 = h1.T @ dz2
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2.T) * (h1 > 0.0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    return dw1, db1, dw2, db2
