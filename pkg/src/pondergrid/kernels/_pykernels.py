"""NumPy reference kernels.

Fallback implementations of the hot inner-loop primitives. The compiled
extension (``_ckernels``) provides the same functions with identical
semantics; ``pondergrid.kernels`` picks whichever is available at import.
All 2-D entry points expect C-contiguous arrays with the reduced axis last.
"""

import math

import numpy as np
from scipy import special

_ERF_DCOEF = 2.0 / math.sqrt(math.pi)


def erf_fwd(x):
    return special.erf(x)


def erf_bwd(x, gy):
    return gy * (_ERF_DCOEF * np.exp(-x * x))


def sigmoid_fwd(x):
    return special.expit(x)


def sigmoid_bwd(y, gy):
    return gy * y * (1.0 - y)


def silu_fwd(x):
    return x * special.expit(x)


def silu_bwd(x, gy):
    s = special.expit(x)
    return gy * s * (1.0 + x * (1.0 - s))


def softmax_fwd(x):
    # x: [rows, n]
    z = x - x.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def softmax_bwd(y, gy):
    dot = (gy * y).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def rmsnorm_fwd(x, eps):
    # x: [rows, n] -> (y, rinv) with rinv: [rows]
    ms = np.mean(x * x, axis=1)
    rinv = 1.0 / np.sqrt(ms + eps)
    return x * rinv[:, None], rinv


def rmsnorm_bwd(x, rinv, gy):
    n = x.shape[1]
    dot = (gy * x).sum(axis=1)
    return gy * rinv[:, None] - x * ((rinv ** 3) * dot / n)[:, None]


def cross_entropy_fwd(logits, targets):
    # logits: [rows, vocab], targets: [rows] int64 -> (loss [rows], probs)
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1)
    rows = np.arange(logits.shape[0])
    loss = np.log(denom) - z[rows, targets]
    return loss, ez / denom[:, None]


def scatter_add_rows(out, ids, src):
    # out: [n_rows, n], ids: [k] int64, src: [k, n]; out[ids[i]] += src[i]
    np.add.at(out, ids, src)


def adamw_update(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
    """One decoupled-weight-decay Adam step, in place on flat arrays.

    bc1/bc2 are the bias-correction factors 1 - beta^t for the current step.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / bc1
    vhat = v / bc2
    p -= lr * (mhat / (np.sqrt(vhat) + eps))
    if wd != 0.0:
        p -= lr * wd * p
