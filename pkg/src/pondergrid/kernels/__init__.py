"""Kernel backend selection.

Two interchangeable backends implement the hot primitives: ``_ckernels``
(Cython, built by setup.py) and ``_pykernels`` (NumPy + SciPy). The compiled
one is preferred when importable; set PONDERGRID_KERNELS=python or =compiled
to force a choice. ``BACKEND`` records which one is active.

Elementwise entry points here accept any array shape; rowwise ones take the
reduced axis last. Inputs are made C-contiguous before dispatch.
"""

import os

import numpy as np

from . import _pykernels

_choice = os.environ.get("PONDERGRID_KERNELS", "auto")
if _choice not in ("auto", "compiled", "python"):
    raise ValueError(f"PONDERGRID_KERNELS must be auto|compiled|python, got {_choice!r}")

_ck = None
if _choice in ("auto", "compiled"):
    try:
        from . import _ckernels as _ck
    except ImportError:
        if _choice == "compiled":
            raise
        _ck = None

BACKEND = "compiled" if _ck is not None else "python"
_impl = _ck if _ck is not None else _pykernels


def _c1(x):
    return np.ascontiguousarray(x).reshape(-1)


def _c2(x):
    a = np.ascontiguousarray(x)
    return a.reshape(-1, a.shape[-1])


if BACKEND == "compiled":

    def erf_fwd(x):
        return _impl.erf_fwd(_c1(x)).reshape(x.shape)

    def erf_bwd(x, gy):
        return _impl.erf_bwd(_c1(x), _c1(gy)).reshape(x.shape)

    def sigmoid_fwd(x):
        return _impl.sigmoid_fwd(_c1(x)).reshape(x.shape)

    def sigmoid_bwd(y, gy):
        return _impl.sigmoid_bwd(_c1(y), _c1(gy)).reshape(y.shape)

    def silu_fwd(x):
        return _impl.silu_fwd(_c1(x)).reshape(x.shape)

    def silu_bwd(x, gy):
        return _impl.silu_bwd(_c1(x), _c1(gy)).reshape(x.shape)

    def softmax_fwd(x):
        return _impl.softmax_fwd(_c2(x)).reshape(x.shape)

    def softmax_bwd(y, gy):
        return _impl.softmax_bwd(_c2(y), _c2(gy)).reshape(y.shape)

    def rmsnorm_fwd(x, eps):
        y, rinv = _impl.rmsnorm_fwd(_c2(x), float(eps))
        return y.reshape(x.shape), rinv.reshape(x.shape[:-1])

    def rmsnorm_bwd(x, rinv, gy):
        g = _impl.rmsnorm_bwd(_c2(x), _c1(rinv), _c2(gy))
        return g.reshape(x.shape)

    def cross_entropy_fwd(logits, targets):
        loss, probs = _impl.cross_entropy_fwd(
            _c2(logits), np.ascontiguousarray(targets.reshape(-1), dtype=np.int64))
        return loss.reshape(targets.shape), probs.reshape(logits.shape)

    def scatter_add_rows(out, ids, src):
        _impl.scatter_add_rows(out, np.ascontiguousarray(ids, dtype=np.int64),
                               np.ascontiguousarray(src))

    def adamw_update(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
        # p/m/v are updated in place and must be views after reshape
        assert p.flags.c_contiguous and m.flags.c_contiguous and v.flags.c_contiguous
        _impl.adamw_update(p.reshape(-1), _c1(g), m.reshape(-1), v.reshape(-1),
                           lr, beta1, beta2, eps, wd, bc1, bc2)

else:

    def erf_fwd(x):
        return _impl.erf_fwd(x)

    def erf_bwd(x, gy):
        return _impl.erf_bwd(x, gy)

    def sigmoid_fwd(x):
        return _impl.sigmoid_fwd(x)

    def sigmoid_bwd(y, gy):
        return _impl.sigmoid_bwd(y, gy)

    def silu_fwd(x):
        return _impl.silu_fwd(x)

    def silu_bwd(x, gy):
        return _impl.silu_bwd(x, gy)

    def softmax_fwd(x):
        return _impl.softmax_fwd(_c2(x)).reshape(x.shape)

    def softmax_bwd(y, gy):
        return _impl.softmax_bwd(_c2(y), _c2(gy)).reshape(y.shape)

    def rmsnorm_fwd(x, eps):
        y, rinv = _impl.rmsnorm_fwd(_c2(x), eps)
        return y.reshape(x.shape), rinv.reshape(x.shape[:-1])

    def rmsnorm_bwd(x, rinv, gy):
        g = _impl.rmsnorm_bwd(_c2(x), rinv.reshape(-1), _c2(gy))
        return g.reshape(x.shape)

    def cross_entropy_fwd(logits, targets):
        loss, probs = _impl.cross_entropy_fwd(
            _c2(logits), targets.reshape(-1).astype(np.int64))
        return loss.reshape(targets.shape), probs.reshape(logits.shape)

    def scatter_add_rows(out, ids, src):
        _impl.scatter_add_rows(out, ids, src)

    def adamw_update(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2):
        _impl.adamw_update(p, g, m, v, lr, beta1, beta2, eps, wd, bc1, bc2)
