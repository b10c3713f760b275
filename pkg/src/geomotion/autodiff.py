"""Reverse-mode automatic differentiation over NumPy arrays.

Provides the operation set the segmentation model needs: dense linear maps,
stride-1 same-padding 2-D convolution, multi-head scaled-dot-product
attention, layer normalization, ReLU, sigmoid, softmax, bilinear resize,
elementwise arithmetic, and reductions, each with a hand-written adjoint.
Training state is single precision; `grad_check` verifies adjoints against
central differences in double precision.

Convolution and bilinear resize dispatch to the compiled kernels when those
were built (see geomotion._kernels).
"""

import math

import numpy as np
from scipy.special import expit

from . import _kernels as K
from .errors import GeoMotionError


class Tensor:
    """A NumPy array with an optional gradient slot and a backward closure.

    The gradient slot, when populated, always matches the data shape. Only
    floating dtypes are accepted; graph construction is skipped entirely
    when no input requires a gradient.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate gradients of a scalar output into every graph leaf."""
        if grad is None:
            if self.data.size != 1:
                raise GeoMotionError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
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
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and node._parents == ():
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pid = id(parent)
                grads[pid] = pg if pid not in grads else grads[pid] + pg

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return index(self, key)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    return Tensor(arr)


def _make(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum a gradient down to `shape` after NumPy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def _pair(a, b):
    """Coerce operands to Tensors; Python scalars adopt the other side's
    dtype so float32 training state never silently promotes to float64."""
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.data.dtype))
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        return Tensor(np.asarray(a, dtype=b.data.dtype)), b
    return as_tensor(a), as_tensor(b)


def add(a, b):
    a, b = _pair(a, b)
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b):
    a, b = _pair(a, b)
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b):
    a, b = _pair(a, b)
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b):
    a, b = _pair(a, b)
    out = a.data / b.data
    return _make(
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * out / b.data, b.data.shape),
        ),
    )


def power(x, p):
    x = as_tensor(x)
    p = float(p)
    out = x.data**p
    return _make(out, (x,), lambda g: (g * p * x.data ** (p - 1.0),))


def log(x):
    x = as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def exp(x):
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,))


def clip(x, lo, hi):
    """Clamp to [lo, hi]; gradient passes only where the input is interior."""
    x = as_tensor(x)
    out = np.clip(x.data, lo, hi)
    mask = (x.data >= lo) & (x.data <= hi)
    return _make(out, (x,), lambda g: (g * mask,))


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    out = expit(x.data)
    return _make(out, (x,), lambda g: (g * out * (1 - out),))


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return _make(
        s, (x,), lambda g: ((g - (g * s).sum(axis=axis, keepdims=True)) * s,)
    )


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise GeoMotionError("matmul expects operands with ndim >= 2")
    out = a.data @ b.data

    def backward(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.data.shape)
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(out, (a, b), backward)


def linear(x, w, b=None):
    """x [..., D_in] @ w [D_in, D_out] + b."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.data.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    x = as_tensor(x)
    inv = np.argsort(axes)
    return _make(
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        lambda g: (g.transpose(inv),),
    )


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    sizes = [x.data.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return _make(
        np.concatenate([x.data for x in xs], axis=axis),
        xs,
        lambda g: tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis)),
    )


def index(x, key):
    """Basic (slice/integer) indexing with scatter-add adjoint."""
    x = as_tensor(x)
    out = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        return (gx,)

    return _make(out, (x,), backward)


def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    shape = x.data.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(x.data.dtype, copy=False),)

    return _make(x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in np.atleast_1d(axis)]
    )
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# ---------------------------------------------------------------------------
# neural-net layers


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgamma = (g * xhat).sum(axis=lead)
        dbeta = g.sum(axis=lead)
        dxhat = g * gamma.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx.astype(x.data.dtype, copy=False), dgamma, dbeta

    return _make(out, (x, gamma, beta), backward)


def conv2d(x, w, b=None):
    """Stride-1, zero-padded "same" convolution for [N, C, H, W] input."""
    x, w = as_tensor(x), as_tensor(w)
    b = as_tensor(b) if b is not None else None
    kh, kw = w.data.shape[2], w.data.shape[3]
    dtype = np.promote_types(x.data.dtype, w.data.dtype)
    out = K.conv2d_forward(
        np.ascontiguousarray(x.data, dtype=dtype),
        np.ascontiguousarray(w.data, dtype=dtype),
        None if b is None else b.data.astype(dtype),
    )

    def backward(g):
        g = np.ascontiguousarray(g, dtype=dtype)
        gx = K.conv2d_backward_input(g, np.ascontiguousarray(w.data, dtype=dtype))
        gw = K.conv2d_backward_weight(g, np.ascontiguousarray(x.data, dtype=dtype), kh, kw)
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, backward)


def bilinear_resize(x, oh, ow):
    """Resize [N, C, H, W] to [N, C, oh, ow] with half-pixel bilinear sampling."""
    x = as_tensor(x)
    h, w = x.data.shape[2], x.data.shape[3]
    out = K.bilinear_resize_forward(np.ascontiguousarray(x.data), oh, ow)
    return _make(
        out,
        (x,),
        lambda g: (K.bilinear_resize_backward(np.ascontiguousarray(g), h, w),),
    )


def multi_head_attention(x, wq, wk, wv, wo, bq, bk, bv, bo, num_heads,
                         return_weights=False):
    """Multi-head scaled-dot-product self-attention over tokens.

    x: [T, D]; all projection weights [D, D]. Heads must divide D.
    """
    x = as_tensor(x)
    t, d = x.data.shape
    if d % num_heads:
        raise GeoMotionError(f"heads ({num_heads}) must divide model width ({d})")
    hd = d // num_heads

    def split_heads(y):
        return transpose(reshape(y, (t, num_heads, hd)), (1, 0, 2))  # [H, T, hd]

    q = split_heads(linear(x, wq, bq))
    k = split_heads(linear(x, wk, bk))
    v = split_heads(linear(x, wv, bv))
    scores = mul(matmul(q, transpose(k, (0, 2, 1))), 1.0 / math.sqrt(hd))
    weights = softmax(scores, axis=-1)  # [H, T, T]
    ctx = matmul(weights, v)  # [H, T, hd]
    merged = reshape(transpose(ctx, (1, 0, 2)), (t, d))
    out = linear(merged, wo, bo)
    if return_weights:
        return out, weights.data
    return out


# ---------------------------------------------------------------------------
# parameters and verification


class ParamStore:
    """Named parameter registry with deterministic (insertion) order."""

    def __init__(self):
        self._params = {}

    def add(self, name, value, requires_grad=True):
        if name in self._params:
            raise GeoMotionError(f"duplicate parameter name: {name}")
        t = as_tensor(np.array(value))
        t.requires_grad = requires_grad
        self._params[name] = t
        return t

    def put(self, name, tensor):
        """Insert an existing Tensor under a name (verification harnesses)."""
        if name in self._params:
            raise GeoMotionError(f"duplicate parameter name: {name}")
        self._params[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return list(self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def state_dict(self):
        return {name: t.data.copy() for name, t in self._params.items()}

    def load_state_dict(self, state, strict=True):
        """Copy matching arrays in. With strict=False, names absent from
        either side are skipped and shape mismatches are ignored."""
        loaded = []
        for name, arr in state.items():
            if name not in self._params:
                if strict:
                    raise GeoMotionError(f"unexpected parameter: {name}")
                continue
            t = self._params[name]
            if t.data.shape != arr.shape:
                if strict:
                    raise GeoMotionError(
                        f"shape mismatch for {name}: {t.data.shape} vs {arr.shape}"
                    )
                continue
            t.data = arr.astype(t.data.dtype).copy()
            loaded.append(name)
        if strict and len(loaded) != len(self._params):
            missing = sorted(set(self._params) - set(loaded))
            raise GeoMotionError(f"missing parameters: {missing}")
        return loaded


def grad_check(fn, point, epsilon=1e-5):
    """Max relative error between the analytic gradient of a scalar-valued
    function and central differences, evaluated in double precision.

    Relative error per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    if epsilon <= 0:
        raise GeoMotionError("epsilon must be positive")
    base = point.data if isinstance(point, Tensor) else np.asarray(point)
    x = Tensor(np.array(base, dtype=np.float64), requires_grad=True)
    out = fn(x)
    if out.data.size != 1:
        raise GeoMotionError("grad_check expects a scalar-valued function")
    if not np.isfinite(out.data):
        raise GeoMotionError("non-finite function value at the check point")
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad
    analytic = analytic.reshape(-1)

    flat = x.data.reshape(-1)
    numeric = np.empty_like(flat)
    probe = Tensor(x.data)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        fp = float(fn(probe).data)
        flat[i] = orig - epsilon
        fm = float(fn(probe).data)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise GeoMotionError("non-finite function value during differencing")
        numeric[i] = (fp - fm) / (2.0 * epsilon)
    rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(rel.max()) if rel.size else 0.0
