"""Dense n-d tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. Every op that touches a gradient-tracked
input records its parent tensors plus a closure that propagates the output
gradient; ``backward()`` walks that record in reverse topological order,
visiting each node exactly once. Untracked subgraphs (all inputs with
``requires_grad=False``) record nothing, so frozen backbones cost no
backward work.

Storage is float32 by default; reductions accumulate in float64 before
casting back. Building leaf tensors as float64 switches the whole graph to
double precision, which is what the finite-difference gradient checks rely
on.

conv2d runs as im2col + matmul (the matmul lands in BLAS, which does the
cache blocking); its input gradient is computed as another im2col matmul
over the stride-dilated output gradient, so no scatter-add is needed
anywhere. im2col blocks are bounded to ~16 MB and processed in batch
chunks.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy.special import erf

from .errors import NoGraphError, NumericFaultError, ShapeError

_DEBUG_NAN_CHECKS = False

# floats per im2col block before conv falls back to batch chunking
_COL_BUDGET = 1 << 23
# largest forward-column array (floats) worth keeping alive for backward;
# above this, recomputing beats the allocation cost of one huge block
_COL_CACHE_LIMIT = 1 << 25


def set_debug_nan_checks(enabled: bool) -> None:
    """When enabled, every forward op raises NumericFaultError on non-finite output."""
    global _DEBUG_NAN_CHECKS
    _DEBUG_NAN_CHECKS = bool(enabled)


class Tensor:
    """N-d array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else None)
        if self.data.dtype.kind != "f":
            self.data = self.data.astype(np.float32)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.op = "leaf"

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

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op}, grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if len(axes) > 1 else axes[0])

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=None, keepdims=False):
        return max_(self, axis=axis, keepdims=keepdims)

    def backward(self) -> None:
        """Seed d(self)/d(self)=1 and propagate through the recorded graph."""
        if not self.requires_grad:
            raise NoGraphError("backward() on a tensor with no recorded graph")
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = _topo_order(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _topo_order(root: Tensor) -> list[Tensor]:
    # iterative postorder: parents always precede children in the result
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _const(x, like: np.ndarray | None = None) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    arr = np.asarray(x)
    if arr.dtype.kind != "f":
        arr = arr.astype(like.dtype if like is not None else np.float32)
    return arr


def _accum(t: Tensor, g: np.ndarray) -> None:
    # Backward closures hand over freshly computed arrays (or views of the
    # consumer's dead gradient buffer), so the first contribution is adopted
    # without a copy; `add` copies explicitly when it would alias one buffer
    # to two parents. Read-only views (broadcasts) accumulate out-of-place.
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if g.dtype == t.data.dtype else g.astype(t.data.dtype)
    elif t.grad.flags.writeable:
        t.grad += g
    else:
        t.grad = t.grad + g


def _make(data: np.ndarray, parents: tuple, backward, op: str) -> Tensor:
    if _DEBUG_NAN_CHECKS and not np.all(np.isfinite(data)):
        raise NumericFaultError(f"non-finite output of op '{op}'")
    tracked = tuple(p for p in parents if isinstance(p, Tensor) and p.requires_grad)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    if tracked:
        out.requires_grad = True
        out._parents = tracked
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape` after numpy broadcasting expanded it."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise ---------------------------------------------------------


def add(a, b):
    at = a if isinstance(a, Tensor) else None
    bt = b if isinstance(b, Tensor) else None
    ad, bd = _const(a), _const(b, like=_const(a) if bt is None else None)
    data = ad + bd

    def backward(g):
        ga = _unbroadcast(g, ad.shape) if at is not None else None
        gb = _unbroadcast(g, bd.shape) if bt is not None else None
        if ga is not None and gb is not None and ga is gb:
            gb = gb.copy()  # never alias one buffer to two parents
        if at is not None:
            _accum(at, ga)
        if bt is not None:
            _accum(bt, gb)

    return _make(data, (a, b), backward, "add")


def mul(a, b):
    at = a if isinstance(a, Tensor) else None
    bt = b if isinstance(b, Tensor) else None
    ad, bd = _const(a), _const(b, like=_const(a) if bt is None else None)
    data = ad * bd

    def backward(g):
        if at is not None:
            _accum(at, _unbroadcast(g * bd, ad.shape))
        if bt is not None:
            _accum(bt, _unbroadcast(g * ad, bd.shape))

    return _make(data, (a, b), backward, "mul")


def power(x: Tensor, p: float):
    xd = _const(x)
    data = xd ** p

    def backward(g):
        _accum(x, g * p * xd ** (p - 1.0))

    return _make(data, (x,), backward, "pow")


def exp(x: Tensor):
    data = np.exp(_const(x))

    def backward(g):
        _accum(x, g * data)

    return _make(data, (x,), backward, "exp")


def log(x: Tensor):
    xd = _const(x)
    data = np.log(xd)

    def backward(g):
        _accum(x, g / xd)

    return _make(data, (x,), backward, "log")


def sqrt(x: Tensor):
    data = np.sqrt(_const(x))

    def backward(g):
        _accum(x, g * 0.5 / data)

    return _make(data, (x,), backward, "sqrt")


def relu(x: Tensor):
    xd = _const(x)
    data = np.maximum(xd, 0.0)

    def backward(g):
        _accum(x, g * (xd > 0))

    return _make(data, (x,), backward, "relu")


def sigmoid(x: Tensor):
    xd = _const(x)
    # stable two-branch logistic
    data = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))),
                    np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))
    data = data.astype(xd.dtype, copy=False)

    def backward(g):
        _accum(x, g * data * (1.0 - data))

    return _make(data, (x,), backward, "sigmoid")


def gelu(x: Tensor):
    xd = _const(x)
    cdf = 0.5 * (1.0 + erf(xd / np.sqrt(2.0)))
    data = (xd * cdf).astype(xd.dtype, copy=False)

    def backward(g):
        pdf = np.exp(-0.5 * xd * xd) / np.sqrt(2.0 * np.pi)
        _accum(x, g * (cdf + xd * pdf))

    return _make(data, (x,), backward, "gelu")


def softmax(x: Tensor, axis: int = -1):
    xd = _const(x)
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accum(x, data * (g - dot))

    return _make(data, (x,), backward, "softmax")


# -- shape ops ------------------------------------------------------------


def reshape(x: Tensor, shape):
    xd = _const(x)
    data = xd.reshape(shape)

    def backward(g):
        _accum(x, g.reshape(xd.shape))

    return _make(data, (x,), backward, "reshape")


def transpose(x: Tensor, axes):
    axes = tuple(axes)
    data = _const(x).transpose(axes)
    inv = tuple(np.argsort(axes))

    def backward(g):
        _accum(x, g.transpose(inv))

    return _make(data, (x,), backward, "transpose")


def concat(tensors: list, axis: int = 0):
    datas = [_const(t) for t in tensors]
    data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if isinstance(t, Tensor):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _make(data, tuple(tensors), backward, "concat")


def getitem(x: Tensor, idx):
    xd = _const(x)
    data = xd[idx]
    if isinstance(data, np.ndarray) and data.base is not None:
        data = data.copy()

    def backward(g):
        full = np.zeros_like(xd)
        full[idx] = g  # basic indexing only: no index repeats
        _accum(x, full)

    return _make(np.asarray(data), (x,), backward, "getitem")


def broadcast_to(x: Tensor, shape):
    xd = _const(x)
    data = np.broadcast_to(xd, shape).copy()

    def backward(g):
        _accum(x, _unbroadcast(g, xd.shape))

    return _make(data, (x,), backward, "broadcast_to")


# -- reductions -----------------------------------------------------------


def _keepdims_shape(shape, axis):
    if axis is None:
        return (1,) * len(shape)
    axes = axis if isinstance(axis, tuple) else (axis,)
    axes = tuple(a % len(shape) for a in axes)
    return tuple(1 if i in axes else s for i, s in enumerate(shape))


def sum_(x: Tensor, axis=None, keepdims: bool = False):
    xd = _const(x)
    data = np.sum(xd, axis=axis, keepdims=keepdims, dtype=np.float64).astype(xd.dtype, copy=False)
    kshape = _keepdims_shape(xd.shape, axis)

    def backward(g):
        _accum(x, np.broadcast_to(g.reshape(kshape), xd.shape))

    return _make(np.asarray(data), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False):
    xd = _const(x)
    n = xd.size if axis is None else np.prod(
        [xd.shape[a % xd.ndim] for a in (axis if isinstance(axis, tuple) else (axis,))])
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def max_(x: Tensor, axis=None, keepdims: bool = False):
    xd = _const(x)
    data = xd.max(axis=axis, keepdims=keepdims)
    kshape = _keepdims_shape(xd.shape, axis)

    def backward(g):
        mx = xd.max(axis=axis, keepdims=True)
        mask = (xd == mx)
        count = mask.sum(axis=axis, keepdims=True)
        _accum(x, mask * (g.reshape(kshape) / count))

    return _make(np.asarray(data), (x,), backward, "max")


# -- linear algebra ---------------------------------------------------------


def matmul(a: Tensor, b: Tensor):
    ad, bd = _const(a), _const(b)
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-d, got {ad.shape} @ {bd.shape}")
    if ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul: inner dims disagree, {ad.shape} @ {bd.shape}")
    data = np.matmul(ad, bd)
    at = a if isinstance(a, Tensor) else None
    bt = b if isinstance(b, Tensor) else None

    def backward(g):
        if at is not None:
            _accum(at, _unbroadcast(np.matmul(g, bd.swapaxes(-1, -2)), ad.shape))
        if bt is not None:
            _accum(bt, _unbroadcast(np.matmul(ad.swapaxes(-1, -2), g), bd.shape))

    return _make(data, (a, b), backward, "matmul")


# -- convolution / pooling --------------------------------------------------


def _pair(v):
    return tuple(v) if isinstance(v, (tuple, list)) else (v, v)


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int):
    """Padded input [B,C,H,W] -> columns [B, OH*OW, C*kh*kw] (copies once)."""
    B, C, H, W = xp.shape
    OH = (H - kh) // sh + 1
    OW = (W - kw) // sw + 1
    s0, s1, s2, s3 = xp.strides
    win = as_strided(xp, (B, C, OH, OW, kh, kw), (s0, s1, s2 * sh, s3 * sw, s2, s3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B, OH * OW, C * kh * kw)
    return cols, OH, OW


def _batch_chunks(B: int, per_item: int):
    step = max(1, _COL_BUDGET // max(1, per_item))
    for lo in range(0, B, step):
        yield lo, min(B, lo + step)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding=0):
    """2-d cross-correlation, NCHW layout, kernel [O, C, kh, kw]."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    xd, wd = _const(x), _const(w)
    if xd.ndim != 4 or wd.ndim != 4:
        raise ShapeError(f"conv2d: need 4-d input/kernel, got {xd.shape} and {wd.shape}")
    B, C, H, W = xd.shape
    O, Ck, kh, kw = wd.shape
    if Ck != C:
        raise ShapeError(f"conv2d: input channels {C} != kernel channels {Ck}")
    OH = (H + 2 * ph - kh) // sh + 1
    OW = (W + 2 * pw - kw) // sw + 1
    if OH < 1 or OW < 1:
        raise ShapeError(f"conv2d: kernel ({kh},{kw}) does not fit input ({H},{W}) with padding ({ph},{pw})")

    wmat = wd.reshape(O, C * kh * kw)
    bd = _const(b) if b is not None else None
    xp = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    out = np.empty((B, O, OH, OW), dtype=xd.dtype)
    per_item = OH * OW * C * kh * kw
    need_w_grad = isinstance(w, Tensor) and w.requires_grad
    # keep forward columns for the weight gradient unless that would hold
    # too much memory (then backward recomputes them chunk by chunk)
    cache_cols = need_w_grad and B * per_item <= _COL_CACHE_LIMIT
    saved_cols = None
    if cache_cols:
        saved_cols, _, _ = _im2col(xp, kh, kw, sh, sw)
        y = np.matmul(saved_cols, wmat.T)  # [B, OH*OW, O]
        out[:] = y.transpose(0, 2, 1).reshape(B, O, OH, OW)
    else:
        for lo, hi in _batch_chunks(B, per_item):
            cols, _, _ = _im2col(xp[lo:hi], kh, kw, sh, sw)
            y = np.matmul(cols, wmat.T)
            out[lo:hi] = y.transpose(0, 2, 1).reshape(hi - lo, O, OH, OW)
    if bd is not None:
        out += bd.reshape(1, O, 1, 1)

    def backward(g):
        if b is not None and isinstance(b, Tensor):
            _accum(b, g.sum(axis=(0, 2, 3)))
        gmat = g.transpose(0, 2, 3, 1).reshape(B * OH * OW, O)
        if need_w_grad:
            if saved_cols is not None:
                dw = np.matmul(gmat.T, saved_cols.reshape(B * OH * OW, C * kh * kw))
            else:
                dw = np.zeros((O, C * kh * kw), dtype=wd.dtype)
                for lo, hi in _batch_chunks(B, per_item):
                    cols, _, _ = _im2col(xp[lo:hi], kh, kw, sh, sw)
                    gm = gmat[lo * OH * OW:hi * OH * OW]
                    dw += np.matmul(gm.T, cols.reshape(-1, C * kh * kw))
            _accum(w, dw.reshape(O, C, kh, kw))
        if isinstance(x, Tensor) and x.requires_grad:
            # one gemm to per-tap contributions, then strided accumulation: the
            # taps of a window never collide within one (a, t) slice
            dxp = np.zeros((B, C, H + 2 * ph, W + 2 * pw), dtype=xd.dtype)
            Hs = (OH - 1) * sh + 1
            Ws = (OW - 1) * sw + 1
            for lo, hi in _batch_chunks(B, per_item):
                d = np.matmul(gmat[lo * OH * OW:hi * OH * OW], wmat)
                d6 = d.reshape(hi - lo, OH, OW, C, kh, kw)
                for a in range(kh):
                    for t in range(kw):
                        dxp[lo:hi, :, a:a + Hs:sh, t:t + Ws:sw] += \
                            d6[:, :, :, :, a, t].transpose(0, 3, 1, 2)
            _accum(x, dxp[:, :, ph:ph + H, pw:pw + W])

    return _make(out, (x, w) if b is None else (x, w, b), backward, "conv2d")


def maxpool2d(x: Tensor, kernel=(2, 2)):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""
    kh, kw = _pair(kernel)
    xd = _const(x)
    if xd.ndim != 4:
        raise ShapeError(f"maxpool2d: need 4-d input, got {xd.shape}")
    B, C, H, W = xd.shape
    OH, OW = H // kh, W // kw
    if OH < 1 or OW < 1:
        raise ShapeError(f"maxpool2d: window ({kh},{kw}) does not fit input ({H},{W})")
    crop = xd[:, :, :OH * kh, :OW * kw]
    win = crop.reshape(B, C, OH, kh, OW, kw).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, OH, OW, kh * kw)
    idx = win.argmax(axis=-1)
    data = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        dwin = np.zeros((B, C, OH, OW, kh * kw), dtype=g.dtype)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        dcrop = dwin.reshape(B, C, OH, OW, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, OH * kh, OW * kw)
        dx = np.zeros_like(xd)
        dx[:, :, :OH * kh, :OW * kw] = dcrop
        _accum(x, dx)

    return _make(data, (x,), backward, "maxpool2d")


# -- stochastic / loss -------------------------------------------------------


def dropout(x: Tensor, p: float, seed: int | None = None, train: bool = True):
    """Inverted dropout. Identity when eval or p == 0; all-zero when p == 1."""
    if not train or p == 0.0:
        return x
    xd = _const(x)
    if p >= 1.0:
        mask = np.zeros_like(xd)
    else:
        rng = np.random.default_rng(seed)
        mask = (rng.random(xd.shape) >= p).astype(xd.dtype) / (1.0 - p)
    data = xd * mask

    def backward(g):
        _accum(x, g * mask)

    return _make(data, (x,), backward, "dropout")


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean sigmoid binary cross-entropy, fused for numerical stability."""
    zd = _const(logits)
    yd = _const(targets, like=zd)
    if zd.shape != yd.shape:
        raise ShapeError(f"bce_with_logits: logits {zd.shape} vs targets {yd.shape}")
    per = np.maximum(zd, 0.0) - zd * yd + np.log1p(np.exp(-np.abs(zd)))
    data = np.asarray(np.mean(per, dtype=np.float64).astype(zd.dtype))
    n = float(zd.size)

    def backward(g):
        s = np.where(zd >= 0, 1.0 / (1.0 + np.exp(-np.abs(zd))),
                     np.exp(-np.abs(zd)) / (1.0 + np.exp(-np.abs(zd))))
        _accum(logits, g * (s - yd) / n)

    return _make(data, (logits,), backward, "bce_with_logits")


# -- composites --------------------------------------------------------------


def dense(x: Tensor, w: Tensor, b: Tensor | None = None):
    """x @ w (+ b); w is [in, out]."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def batch_norm_train(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5):
    """Fused training-mode batch norm over axes (0, 2, 3) of [B, C, H, W].

    Returns (out, batch_mean, batch_var) with the statistics as plain
    arrays for the caller's running-average update. Biased variance.
    """
    xd = _const(x)
    gd, bd = _const(gamma), _const(beta)
    if xd.ndim != 4:
        raise ShapeError(f"batch_norm: need 4-d input, got {xd.shape}")
    axes = (0, 2, 3)
    n = xd.shape[0] * xd.shape[2] * xd.shape[3]
    mu = xd.mean(axis=axes, keepdims=True, dtype=np.float64).astype(xd.dtype)
    xc = xd - mu
    var = np.mean(xc * xc, axis=axes, keepdims=True, dtype=np.float64).astype(xd.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    shape = (1, xd.shape[1], 1, 1)
    data = xn * gd.reshape(shape) + bd.reshape(shape)

    def backward(g):
        if isinstance(beta, Tensor):
            _accum(beta, g.sum(axis=axes))
        gxn = (g * xn).sum(axis=axes)
        if isinstance(gamma, Tensor):
            _accum(gamma, gxn)
        if isinstance(x, Tensor) and x.requires_grad:
            gm = g.sum(axis=axes, keepdims=True) / n
            dx = (gd.reshape(shape) * inv) * (g - gm - xn * gxn.reshape(shape) / n)
            _accum(x, dx)

    out = _make(data, (x, gamma, beta), backward, "batch_norm")
    return out, mu.reshape(-1), var.reshape(-1)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5):
    """Normalize over the last axis, then scale and shift."""
    mu = mean(x, axis=-1, keepdims=True)
    xc = add(x, mul(mu, -1.0))
    var = mean(mul(xc, xc), axis=-1, keepdims=True)
    inv = power(add(var, eps), -0.5)
    return add(mul(mul(xc, inv), gamma), beta)


def scaled_dot_product_attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int):
    """Multi-head attention over [B, T, D] projections; D must split across heads."""
    B, T, D = q.shape
    if D % n_heads != 0:
        raise ShapeError(f"attention: embed dim {D} not divisible by {n_heads} heads")
    dh = D // n_heads

    def split(t):
        return transpose(reshape(t, (B, T, n_heads, dh)), (0, 2, 1, 3))

    qh, kh_, vh = split(q), split(k), split(v)
    scores = mul(matmul(qh, transpose(kh_, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, vh)  # [B, H, T, dh]
    return reshape(transpose(ctx, (0, 2, 1, 3)), (B, T, D))


def global_mean_pool(x: Tensor):
    """[B, C, H, W] -> [B, C] mean over the spatial dims."""
    return mean(x, axis=(2, 3))


def global_max_pool(x: Tensor):
    """[B, C, H, W] -> [B, C] max over the spatial dims."""
    return max_(x, axis=(2, 3))
