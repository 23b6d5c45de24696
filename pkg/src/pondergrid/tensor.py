"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a NumPy array plus an optional gradient and the provenance
needed to replay the graph backwards. Arrays are float32 by default; pass
float64 arrays (or build params with dtype=np.float64) when doing
finite-difference verification, where 32-bit noise swamps the signal.

Shape discipline is deliberately strict: the only implicit broadcast allowed
anywhere is adding a length-matched 1-D bias to the trailing axis. Everything
else must go through an explicit op (``rowscale``, ``scale_axis``), so a
tensor fed back around the recurrence loop can never silently change shape.

Graph construction and backward are single-threaded per graph; independent
graphs on different threads do not share state (the no_grad flag is
thread-local).
"""

import threading
from contextlib import contextmanager

import numpy as np

from . import kernels as K


class ShapeError(ValueError):
    """Operand shapes incompatible for the requested op."""


_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad", True)


@contextmanager
def no_grad():
    """Disable graph recording (inference / evaluation)."""
    prev = _grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._bwd = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        """Accumulate a gradient that may alias another buffer (copied)."""
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g

    def _accum_owned(self, g):
        """Accumulate a freshly allocated gradient (stolen, no copy).

        Callers must pass an array they just created and hand to exactly
        one tensor; later contributions add into it in place.
        """
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def backward(self):
        """Reverse-mode sweep from a scalar node.

        After the call every reachable node with requires_grad=True holds
        d(self)/d(node) in .grad (accumulated into any existing .grad).
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar loss, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        self._accum_owned(np.ones_like(self.data))
        for node in reversed(topo):
            if node._bwd is not None and node.grad is not None:
                node._bwd(node.grad)

    # Small operator sugar; the module-level functions are the real API.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        tag = self.name or "tensor"
        return f"<{tag} {self.data.shape} {self.data.dtype}{' grad' if self.requires_grad else ''}>"


def tensor(data, dtype=None, requires_grad=False, name=None):
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=requires_grad, name=name)


def _result(data, parents, bwd):
    """Wrap an op result, recording provenance only when grad is live."""
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _p(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    """a + b. b may be a same-shaped tensor, a trailing-dim bias, or a scalar."""
    a = _p(a)
    if isinstance(b, (int, float)):
        c = float(b)

        def bwd(g):
            if a.requires_grad:
                a._accum(g)

        return _result(a.data + c, [a], bwd)
    b = _p(b)
    if a.shape == b.shape:

        def bwd(g):
            # b copies first so a may steal the child's buffer outright
            if b.requires_grad:
                b._accum(g)
            if a.requires_grad:
                a._accum_owned(g)

        return _result(a.data + b.data, [a, b], bwd)
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        # trailing-dim bias add, the one permitted broadcast
        def bwd(g):
            if a.requires_grad:
                a._accum(g)
            if b.requires_grad:
                b._accum_owned(g.reshape(-1, b.shape[0]).sum(axis=0))

        return _result(a.data + b.data, [a, b], bwd)
    raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")


def sub(a, b):
    if isinstance(b, (int, float)):
        return add(a, -float(b))
    return add(a, mul(b, -1.0))


def mul(a, b):
    """Elementwise product; same shape required, or a scalar."""
    a = _p(a)
    if isinstance(b, (int, float)):
        c = float(b)

        def bwd(g):
            if a.requires_grad:
                a._accum_owned(g * c)

        return _result(a.data * c, [a], bwd)
    b = _p(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a._accum_owned(g * b.data)
        if b.requires_grad:
            b._accum_owned(g * a.data)

    return _result(a.data * b.data, [a, b], bwd)


def rowscale(x, s):
    """Scale each trailing-axis row of x by a per-row scalar: x * s[..., None].

    s.shape must equal x.shape[:-1]. This is how per-token blend weights are
    applied to [batch, token, feature] states.
    """
    x, s = _p(x), _p(s)
    if s.shape != x.shape[:-1]:
        raise ShapeError(f"rowscale: scale shape {s.shape} != row shape {x.shape[:-1]}")
    sexp = s.data[..., None]

    def bwd(g):
        if x.requires_grad:
            x._accum_owned(g * sexp)
        if s.requires_grad:
            s._accum_owned((g * x.data).sum(axis=-1))

    return _result(x.data * sexp, [x, s], bwd)


def scale_axis(x, g1, axis):
    """Multiply x by a 1-D gain along one axis (broadcast over the others)."""
    x, g1 = _p(x), _p(g1)
    if g1.ndim != 1 or x.shape[axis] != g1.shape[0]:
        raise ShapeError(
            f"scale_axis: gain {g1.shape} does not match axis {axis} of {x.shape}")
    shape = [1] * x.ndim
    shape[axis] = g1.shape[0]
    gview = g1.data.reshape(shape)
    other = tuple(i for i in range(x.ndim) if i != (axis % x.ndim))

    def bwd(g):
        if x.requires_grad:
            x._accum_owned(g * gview)
        if g1.requires_grad:
            g1._accum_owned((g * x.data).sum(axis=other))

    return _result(x.data * gview, [x, g1], bwd)


def matmul(a, b):
    """Matrix product: [*, m, k] @ [k, n] or batch-matched [*, m, k] @ [*, k, n]."""
    a, b = _p(a), _p(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    if b.ndim != 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ, {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a._accum_owned(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.ndim == 2:
                k = a.shape[-1]
                b._accum_owned(a.data.reshape(-1, k).T @ g.reshape(-1, g.shape[-1]))
            else:
                b._accum_owned(np.swapaxes(a.data, -1, -2) @ g)

    return _result(out, [a, b], bwd)


# ---------------------------------------------------------------------------
# nonlinearities / normalizers (kernel-backed)


def sigmoid(x):
    x = _p(x)
    y = K.sigmoid_fwd(x.data)

    def bwd(g):
        if x.requires_grad:
            x._accum_owned(K.sigmoid_bwd(y, g))

    return _result(y, [x], bwd)


def erf(x):
    x = _p(x)

    def bwd(g):
        if x.requires_grad:
            x._accum_owned(K.erf_bwd(x.data, g))

    return _result(K.erf_fwd(x.data), [x], bwd)


def silu(x):
    x = _p(x)

    def bwd(g):
        if x.requires_grad:
            x._accum_owned(K.silu_bwd(x.data, g))

    return _result(K.silu_fwd(x.data), [x], bwd)


def softmax(x, axis=-1):
    """Softmax along one axis; rows sum to 1."""
    x = _p(x)
    axis = axis % x.ndim
    last = x.ndim - 1
    xd = x.data if axis == last else np.swapaxes(x.data, axis, last)
    y = K.softmax_fwd(xd)
    out = y if axis == last else np.swapaxes(y, axis, last)

    def bwd(g):
        if x.requires_grad:
            gd = g if axis == last else np.swapaxes(g, axis, last)
            gx = K.softmax_bwd(y, np.ascontiguousarray(gd))
            x._accum_owned(gx if axis == last else np.swapaxes(gx, axis, last))

    return _result(out, [x], bwd)


def rms_norm(x, eps=1e-6):
    """x / sqrt(mean(x^2, last axis) + eps); gain applied separately."""
    x = _p(x)
    y, rinv = K.rmsnorm_fwd(x.data, eps)

    def bwd(g):
        if x.requires_grad:
            x._accum_owned(K.rmsnorm_bwd(x.data, rinv, np.ascontiguousarray(g)))

    return _result(y, [x], bwd)


def rope(x, cos, sin):
    """Rotary position map on the trailing axis, split-half convention.

    x: [..., S, d] with d even; cos/sin: [S, d//2] tables for the per-row
    positions. The map is orthogonal, so backward rotates by the negated
    angles.
    """
    x = _p(x)
    d = x.shape[-1]
    if d % 2 != 0 or cos.shape != (x.shape[-2], d // 2):
        raise ShapeError(f"rope: tables {cos.shape} do not fit input {x.shape}")
    h = d // 2
    x1, x2 = x.data[..., :h], x.data[..., h:]
    out = np.concatenate([x1 * cos - x2 * sin, x1 * sin + x2 * cos], axis=-1)

    def bwd(g):
        if x.requires_grad:
            g1, g2 = g[..., :h], g[..., h:]
            x._accum_owned(np.concatenate(
                [g1 * cos + g2 * sin, -g1 * sin + g2 * cos], axis=-1))

    return _result(out, [x], bwd)


# ---------------------------------------------------------------------------
# shape ops


def reshape(x, shape):
    x = _p(x)
    out = x.data.reshape(shape)

    def bwd(g):
        if x.requires_grad:
            x._accum(g.reshape(x.shape))

    return _result(out, [x], bwd)


def transpose(x, axes):
    x = _p(x)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        if x.requires_grad:
            t = g.transpose(inv)
            c = np.ascontiguousarray(t)
            if c is t:
                x._accum(c)
            else:
                x._accum_owned(c)

    return _result(np.ascontiguousarray(x.data.transpose(axes)), [x], bwd)


def concat(parts, axis):
    parts = [_p(p) for p in parts]
    base = list(parts[0].shape)
    for p in parts[1:]:
        o = list(p.shape)
        if len(o) != len(base) or any(o[i] != base[i] for i in range(len(base)) if i != axis % len(base)):
            raise ShapeError(f"concat: shapes {[q.shape for q in parts]} differ off axis {axis}")
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, s, e in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(s, e)
                p._accum(g[tuple(idx)])

    return _result(np.concatenate([p.data for p in parts], axis=axis), parts, bwd)


def slice_axis(x, axis, start, stop):
    x = _p(x)
    idx = [slice(None)] * x.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] = g
            x._accum_owned(full)

    return _result(np.ascontiguousarray(x.data[idx]), [x], bwd)


def tsum(x, axis=None, keepdims=False):
    x = _p(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not x.requires_grad:
            return
        if axis is None:
            x._accum_owned(np.full(x.shape, g.item(), dtype=x.data.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accum_owned(np.broadcast_to(gg, x.shape).copy())

    return _result(out, [x], bwd)


def tmean(x, axis=None, keepdims=False):
    x = _p(x)
    if axis is None:
        count = x.size
    else:
        count = x.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------------------
# indexing / loss


def gather_rows(table, ids):
    """Row lookup: out[..., :] = table[ids[...], :]. Backward scatter-adds."""
    table = _p(table)
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(
            f"gather_rows: id out of range [0, {table.shape[0]}), "
            f"got min={ids.min()} max={ids.max()}")
    out = table.data[ids]

    def bwd(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            K.scatter_add_rows(gt, ids.reshape(-1),
                               np.ascontiguousarray(g.reshape(-1, table.shape[1])))
            table._accum_owned(gt)

    return _result(out, [table], bwd)


def cross_entropy_logits(logits, targets):
    """Per-position cross entropy from raw logits.

    logits: [..., vocab]; targets: int array of shape logits.shape[:-1].
    Returns per-position losses of targets.shape; reduce with tmean().
    """
    logits = _p(logits)
    targets = np.asarray(targets)
    vocab = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(
            f"cross_entropy: targets {targets.shape} != positions {logits.shape[:-1]}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise ValueError(
            f"cross_entropy: target id out of range [0, {vocab}), "
            f"got min={targets.min()} max={targets.max()}")
    loss, probs = K.cross_entropy_fwd(logits.data, targets)

    def bwd(g):
        if logits.requires_grad:
            gl = probs.copy()
            flat = gl.reshape(-1, vocab)
            flat[np.arange(flat.shape[0]), targets.reshape(-1)] -= 1.0
            logits._accum_owned(gl * g[..., None])

    return _result(loss, [logits], bwd)
