# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled kernels for the hot inner-loop primitives.

Single-pass C loops over the elementwise/rowwise chains that the NumPy
fallback spells out as several temporaries. Matrix products are not here:
both backends leave those to BLAS. Semantics must match _pykernels to float
precision; the parity suite compares the two element by element.

Loops run over raw pointers (not memoryview indexing) so the compiler can
auto-vectorize; the float32 exp is a branch-free polynomial for the same
reason, while float64 keeps libm accuracy for gradient verification.
"""

import numpy as np

cimport numpy as cnp
from libc cimport math
from libc.string cimport memcpy

cnp.import_array()

ctypedef fused floating:
    float
    double


cdef inline floating _erf(floating x) noexcept nogil:
    if floating is float:
        return math.erff(x)
    else:
        return math.erf(x)


cdef inline float _fexp(float x) noexcept nogil:
    # Branch-free single-precision exp (Cephes-style, ~1 ulp): clamp, split
    # x = n*ln2 + r, degree-5 polynomial for exp(r), 2^n via exponent bits.
    # Round-to-nearest comes from the 1.5*2^23 magic add so there is no
    # data-dependent control flow and the surrounding loops can vectorize.
    cdef float z, r, p, pow2, t, fn
    cdef int n
    cdef unsigned int bits
    x = min(<float>88.02, max(<float>-87.3, x))
    z = x * <float>1.44269504088896341    # x / ln 2
    t = z + <float>12582912.0             # 1.5 * 2^23: rounds z into mantissa
    memcpy(&n, &t, 4)
    n -= 0x4B400000                       # bit pattern of the magic constant
    fn = <float>n
    r = x - fn * <float>0.693359375       # ln 2, high part
    r = r + fn * <float>2.12194440e-4     # ln 2, low-part correction
    z = r * r
    p = <float>1.9875691500e-4
    p = p * r + <float>1.3981999507e-3
    p = p * r + <float>8.3334519073e-3
    p = p * r + <float>4.1665795894e-2
    p = p * r + <float>1.6666665459e-1
    p = p * r + <float>5.0000001201e-1
    p = p * z + r + <float>1.0
    bits = <unsigned int>((n + 127) << 23)
    memcpy(&pow2, &bits, 4)
    return p * pow2


cdef inline floating _exp(floating x) noexcept nogil:
    if floating is float:
        return _fexp(x)
    else:
        return math.exp(x)


cdef inline floating _log(floating x) noexcept nogil:
    if floating is float:
        return math.logf(x)
    else:
        return math.log(x)


cdef inline floating _sqrt(floating x) noexcept nogil:
    if floating is float:
        return math.sqrtf(x)
    else:
        return math.sqrt(x)


cdef inline floating _sigmoid(floating x) noexcept nogil:
    # Single-form logistic: the clamped float exp saturates finitely and the
    # double path keeps IEEE inf, so 1/(1+exp(-x)) is correct at both tails.
    return 1 / (1 + _exp(-x))


cdef inline const floating* _cp(floating[::1] v) noexcept nogil:
    return &v[0] if v.shape[0] else NULL


cdef inline floating* _mp(floating[::1] v) noexcept nogil:
    return &v[0] if v.shape[0] else NULL


def erf_fwd(floating[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    y_arr = np.empty(n, dtype=np.asarray(x).dtype)
    cdef floating[::1] y = y_arr
    cdef const floating *px = _cp(x)
    cdef floating *py = _mp(y)
    with nogil:
        for i in range(n):
            py[i] = _erf(px[i])
    return y_arr


def erf_bwd(floating[::1] x, floating[::1] gy):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef floating c = <floating>(2.0 / math.sqrt(math.pi))
    g_arr = np.empty(n, dtype=np.asarray(x).dtype)
    cdef floating[::1] g = g_arr
    cdef const floating *px = _cp(x)
    cdef const floating *pg = _cp(gy)
    cdef floating *pd = _mp(g)
    with nogil:
        for i in range(n):
            pd[i] = pg[i] * c * _exp(-px[i] * px[i])
    return g_arr


def sigmoid_fwd(floating[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    y_arr = np.empty(n, dtype=np.asarray(x).dtype)
    cdef floating[::1] y = y_arr
    cdef const floating *px = _cp(x)
    cdef floating *py = _mp(y)
    with nogil:
        for i in range(n):
            py[i] = _sigmoid(px[i])
    return y_arr


def sigmoid_bwd(floating[::1] y, floating[::1] gy):
    cdef Py_ssize_t i, n = y.shape[0]
    g_arr = np.empty(n, dtype=np.asarray(y).dtype)
    cdef floating[::1] g = g_arr
    cdef const floating *py = _cp(y)
    cdef const floating *pg = _cp(gy)
    cdef floating *pd = _mp(g)
    with nogil:
        for i in range(n):
            pd[i] = pg[i] * py[i] * (1 - py[i])
    return g_arr


def silu_fwd(floating[::1] x):
    cdef Py_ssize_t i, n = x.shape[0]
    y_arr = np.empty(n, dtype=np.asarray(x).dtype)
    cdef floating[::1] y = y_arr
    cdef const floating *px = _cp(x)
    cdef floating *py = _mp(y)
    with nogil:
        for i in range(n):
            py[i] = px[i] * _sigmoid(px[i])
    return y_arr


def silu_bwd(floating[::1] x, floating[::1] gy):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef floating s
    g_arr = np.empty(n, dtype=np.asarray(x).dtype)
    cdef floating[::1] g = g_arr
    cdef const floating *px = _cp(x)
    cdef const floating *pg = _cp(gy)
    cdef floating *pd = _mp(g)
    with nogil:
        for i in range(n):
            s = _sigmoid(px[i])
            pd[i] = pg[i] * s * (1 + px[i] * (1 - s))
    return g_arr


def softmax_fwd(floating[:, ::1] x):
    cdef Py_ssize_t i, j, rows = x.shape[0], n = x.shape[1]
    cdef floating mx, acc
    y_arr = np.empty((rows, n), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] y = y_arr
    cdef const floating *px
    cdef floating *py
    with nogil:
        for i in range(rows):
            px = &x[i, 0]
            py = &y[i, 0]
            mx = px[0]
            for j in range(1, n):
                mx = max(mx, px[j])
            acc = 0
            for j in range(n):
                py[j] = _exp(px[j] - mx)
                acc += py[j]
            for j in range(n):
                py[j] /= acc
    return y_arr


def softmax_bwd(floating[:, ::1] y, floating[:, ::1] gy):
    cdef Py_ssize_t i, j, rows = y.shape[0], n = y.shape[1]
    cdef floating dot
    g_arr = np.empty((rows, n), dtype=np.asarray(y).dtype)
    cdef floating[:, ::1] g = g_arr
    cdef const floating *py
    cdef const floating *pg
    cdef floating *pd
    with nogil:
        for i in range(rows):
            py = &y[i, 0]
            pg = &gy[i, 0]
            pd = &g[i, 0]
            dot = 0
            for j in range(n):
                dot += pg[j] * py[j]
            for j in range(n):
                pd[j] = py[j] * (pg[j] - dot)
    return g_arr


def rmsnorm_fwd(floating[:, ::1] x, double eps):
    cdef Py_ssize_t i, j, rows = x.shape[0], n = x.shape[1]
    cdef floating ms, r
    dt = np.asarray(x).dtype
    y_arr = np.empty((rows, n), dtype=dt)
    rinv_arr = np.empty(rows, dtype=dt)
    cdef floating[:, ::1] y = y_arr
    cdef floating[::1] rinv = rinv_arr
    cdef const floating *px
    cdef floating *py
    with nogil:
        for i in range(rows):
            px = &x[i, 0]
            py = &y[i, 0]
            ms = 0
            for j in range(n):
                ms += px[j] * px[j]
            r = 1 / _sqrt(ms / n + <floating>eps)
            rinv[i] = r
            for j in range(n):
                py[j] = px[j] * r
    return y_arr, rinv_arr


def rmsnorm_bwd(floating[:, ::1] x, floating[::1] rinv, floating[:, ::1] gy):
    cdef Py_ssize_t i, j, rows = x.shape[0], n = x.shape[1]
    cdef floating dot, r, c
    g_arr = np.empty((rows, n), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] g = g_arr
    cdef const floating *px
    cdef const floating *pg
    cdef floating *pd
    with nogil:
        for i in range(rows):
            px = &x[i, 0]
            pg = &gy[i, 0]
            pd = &g[i, 0]
            dot = 0
            for j in range(n):
                dot += pg[j] * px[j]
            r = rinv[i]
            c = r * r * r * dot / n
            for j in range(n):
                pd[j] = pg[j] * r - px[j] * c
    return g_arr


def cross_entropy_fwd(floating[:, ::1] logits, cnp.int64_t[::1] targets):
    cdef Py_ssize_t i, j, rows = logits.shape[0], n = logits.shape[1]
    cdef floating mx, acc
    dt = np.asarray(logits).dtype
    loss_arr = np.empty(rows, dtype=dt)
    probs_arr = np.empty((rows, n), dtype=dt)
    cdef floating[::1] loss = loss_arr
    cdef floating[:, ::1] probs = probs_arr
    cdef const floating *pl
    cdef floating *pp
    with nogil:
        for i in range(rows):
            pl = &logits[i, 0]
            pp = &probs[i, 0]
            mx = pl[0]
            for j in range(1, n):
                mx = max(mx, pl[j])
            acc = 0
            for j in range(n):
                pp[j] = _exp(pl[j] - mx)
                acc += pp[j]
            loss[i] = _log(acc) - (pl[targets[i]] - mx)
            for j in range(n):
                pp[j] /= acc
    return loss_arr, probs_arr


def scatter_add_rows(floating[:, ::1] out, cnp.int64_t[::1] ids,
                     floating[:, ::1] src):
    cdef Py_ssize_t i, j, k = ids.shape[0], n = out.shape[1]
    cdef cnp.int64_t r
    cdef floating *po
    cdef const floating *ps
    with nogil:
        for i in range(k):
            po = &out[ids[i], 0]
            ps = &src[i, 0]
            for j in range(n):
                po[j] += ps[j]


def adamw_update(floating[::1] p, floating[::1] g, floating[::1] m,
                 floating[::1] v, double lr, double beta1, double beta2,
                 double eps, double wd, double bc1, double bc2):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef floating b1 = <floating>beta1, b2 = <floating>beta2
    cdef floating flr = <floating>lr, feps = <floating>eps
    cdef floating fbc1 = <floating>bc1, fbc2 = <floating>bc2
    cdef floating fwd_ = <floating>wd
    cdef floating mhat, vhat
    cdef floating *pp = _mp(p)
    cdef const floating *pg = _cp(g)
    cdef floating *pm = _mp(m)
    cdef floating *pv = _mp(v)
    with nogil:
        for i in range(n):
            pm[i] = b1 * pm[i] + (1 - b1) * pg[i]
            pv[i] = b2 * pv[i] + (1 - b2) * pg[i] * pg[i]
            mhat = pm[i] / fbc1
            vhat = pv[i] / fbc2
            pp[i] -= flr * (mhat / (_sqrt(vhat) + feps))
            if fwd_ != 0:
                pp[i] -= flr * fwd_ * pp[i]
    return None
