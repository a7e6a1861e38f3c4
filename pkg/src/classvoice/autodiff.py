"""Dense-tensor math with reverse-mode differentiation.

Just enough for a 1-D convolutional voice detector: dilated/grouped conv,
activations, layer norms, linear, losses, Adam, and a finite-difference
gradient checker. Arrays are numpy; float32 is the working precision,
float64 is used when checking gradients.

Tensors are treated as immutable values outside an explicit optimizer
step, so a frozen parameter set can be evaluated from many threads at
once; only ``adam_step`` mutates data in place.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes do not satisfy an op's contract."""


class NonFiniteError(ValueError):
    """A NaN or Inf value reached an op boundary."""


class GraphError(RuntimeError):
    """The computation graph cannot be traversed (cycle, no scalar root, ...)."""


_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph construction inside the block (forward-only inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _coerce(data, dtype):
    if dtype is not None:
        return np.asarray(data).astype(dtype, copy=False)
    # float64 survives only when handed over explicitly as a numpy array;
    # python scalars/lists land in the float32 working precision
    if isinstance(data, np.ndarray) and data.dtype == np.float64:
        return data
    return np.asarray(data).astype(DEFAULT_DTYPE, copy=False)


class Tensor:
    """A dense real array with an optional gradient slot.

    ``data`` is float32 unless float64 is passed in (or forced via
    ``dtype``). Construction rejects NaN/Inf, which is what enforces
    finiteness at every op boundary: ops only consume and produce
    Tensors.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        a = _coerce(data, dtype)
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("tensor contains NaN or Inf values")
        self.data = a
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _as_tensor(other, self.dtype))

    def __radd__(self, other):
        return add(_as_tensor(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other, self.dtype))

    def __rmul__(self, other):
        return mul(_as_tensor(other, self.dtype), self)

    def __truediv__(self, other):
        return div(self, _as_tensor(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return pow_scalar(self, p)


def _as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _make(data, parents, backward_fn):
    """Build an op output, wiring the graph only when gradients are live."""
    data = np.asarray(data)
    out = Tensor(data, dtype=data.dtype)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss: Tensor):
    """Populate grad slots of everything reachable from a scalar loss.

    Traversal is reverse-topological; a back edge (cycle) raises
    GraphError, as does a loss that carries no graph.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is not connected to any tensor that requires grad")

    order = []
    state = {}  # id -> 1 visiting, 2 done
    stack = [(loss, iter(loss._parents))]
    state[id(loss)] = 1
    while stack:
        node, it = stack[-1]
        advanced = False
        for parent in it:
            s = state.get(id(parent))
            if s == 1:
                raise GraphError("cycle detected in computation graph")
            if s is None and parent._parents:
                state[id(parent)] = 1
                stack.append((parent, iter(parent._parents)))
                advanced = True
                break
            state.setdefault(id(parent), 2)
        if not advanced:
            stack.pop()
            state[id(node)] = 2
            order.append(node)

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params):
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise / reduction primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), back)


def div(a: Tensor, b: Tensor) -> Tensor:
    def back(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), back)


def neg(a: Tensor) -> Tensor:
    def back(g):
        _accum(a, -g)

    return _make(-a.data, (a,), back)


def pow_scalar(a: Tensor, p) -> Tensor:
    p = float(p)

    def back(g):
        _accum(a, g * p * a.data ** (p - 1.0))

    return _make(a.data ** p, (a,), back)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def back(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), back)


def log(a: Tensor) -> Tensor:
    def back(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), back)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def back(g):
        _accum(a, g * 0.5 / out_data)

    return _make(out_data, (a,), back)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; the gradient is zero where the clamp binds."""
    mask = (a.data > lo) & (a.data < hi)

    def back(g):
        _accum(a, g * mask)

    return _make(np.clip(a.data, lo, hi), (a,), back)


def maximum(a: Tensor, floor: float) -> Tensor:
    mask = a.data > floor

    def back(g):
        _accum(a, g * mask)

    return _make(np.maximum(a.data, floor), (a,), back)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.shape[ax]
    inv = 1.0 / n

    def back(g):
        g = g * inv
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape))

    return _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), back)


def cumsum(a: Tensor, axis: int) -> Tensor:
    def back(g):
        _accum(a, np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis))

    return _make(np.cumsum(a.data, axis=axis), (a,), back)


def concat(tensors, axis=0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accum(t, piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    """max(x, 0); the gradient at exactly 0 is 0."""
    mask = a.data > 0

    def back(g):
        _accum(a, g * mask)

    return _make(np.maximum(a.data, 0), (a,), back)


def prelu(a: Tensor, alpha: Tensor) -> Tensor:
    """x for x >= 0, alpha*x for x < 0. alpha is a learnable scalar tensor.

    Gradients at exactly x == 0 are 0 in both x and alpha.
    """
    av = alpha.data.reshape(())
    negm = a.data < 0
    slope = (a.data > 0) + av * negm  # dtype-promoting bool arithmetic
    out_data = a.data * slope

    def back(g):
        _accum(a, g * slope)
        _accum(alpha, np.array([(g * a.data * negm).sum()], dtype=alpha.dtype).reshape(alpha.shape))

    return _make(out_data, (a, alpha), back)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def back(g):
        _accum(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), back)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction.

    Shifted logits are floored at -80 so every output stays strictly
    positive even for inputs of magnitude ~1000; the perturbation is
    below 1e-34 per component.
    """
    shift = Tensor(a.data.max(axis=-1, keepdims=True), dtype=a.dtype)
    e = exp(clip(sub(a, shift), -80.0, 1.0))
    return div(e, tsum(e, axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a @ b with a 2-D ``a`` and a 2-D or batched 3-D ``b``."""
    if a.ndim != 2 or b.ndim not in (2, 3):
        raise ShapeError(f"matmul supports [m,k] @ [k,n] or [m,k] @ [B,k,n]; got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape[1]} vs {b.shape[-2]}")
    out_data = np.matmul(a.data, b.data)

    def back(g):
        if b.ndim == 2:
            _accum(a, g @ b.data.T)
            _accum(b, a.data.T @ g)
        else:
            m, k = a.shape
            gb = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(m, -1)
            bb = np.ascontiguousarray(b.data.transpose(1, 0, 2)).reshape(k, -1)
            _accum(a, gb @ bb.T)
            _accum(b, np.matmul(a.data.T, g))

    return _make(out_data, (a, b), back)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """weight @ x + bias for a vector x, batched as rows when x is 2-D."""
    if weight.ndim != 2:
        raise ShapeError(f"linear weight must be 2-D [out,in], got {weight.shape}")
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f"linear input dimension {x.shape[-1]} does not match weight in-dimension {weight.shape[1]}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear bias shape {bias.shape} does not match out-dimension {weight.shape[0]}")
    out_data = x.data @ weight.data.T
    if bias is not None:
        out_data = out_data + bias.data

    def back(g):
        if x.ndim == 1:
            _accum(weight, np.outer(g, x.data))
            _accum(x, g @ weight.data)
            if bias is not None:
                _accum(bias, g)
        else:
            _accum(weight, g.T @ x.data)
            _accum(x, g @ weight.data)
            if bias is not None:
                _accum(bias, g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out_data, parents, back)


# ---------------------------------------------------------------------------
# convolution


def conv1d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    dilation: int = 1,
    groups: int = 1,
    padding: tuple[int, int] = (0, 0),
) -> Tensor:
    """Dilated grouped 1-D convolution (stride 1).

    x is [C_in, T] or [B, C_in, T]; weight is [C_out, C_in/groups, K];
    padding is (left, right) zeros on the time axis. groups=C_in gives a
    depthwise convolution, K=1/groups=1 a pointwise one. Output length is
    T + left + right - (K-1)*dilation.
    """
    x = _as_tensor(x)
    weight = _as_tensor(weight)
    if x.ndim not in (2, 3):
        raise ShapeError(f"conv1d input must be [C,T] or [B,C,T], got {x.shape}")
    if weight.ndim != 3:
        raise ShapeError(f"conv1d weight must be [C_out, C_in/groups, K], got {weight.shape}")
    dilation = int(dilation)
    groups = int(groups)
    if dilation < 1:
        raise ShapeError(f"dilation must be positive, got {dilation}")
    if groups < 1:
        raise ShapeError(f"groups must be positive, got {groups}")

    c_in, t_in = x.shape[-2], x.shape[-1]
    c_out, cin_g, k = weight.shape
    if c_in % groups:
        raise ShapeError(f"input channels {c_in} not divisible by groups {groups}")
    if c_out % groups:
        raise ShapeError(f"output channels {c_out} not divisible by groups {groups}")
    if cin_g != c_in // groups:
        raise ShapeError(
            f"weight expects {cin_g} channels per group but input provides {c_in // groups}"
        )
    left, right = int(padding[0]), int(padding[1])
    if left < 0 or right < 0:
        raise ShapeError(f"padding must be non-negative, got {padding}")
    t_out = t_in + left + right - (k - 1) * dilation
    if t_out < 1:
        raise ShapeError(
            f"input length {t_in} with padding {padding} is too short for "
            f"kernel {k} at dilation {dilation} (needs >= {1 + (k - 1) * dilation})"
        )
    if bias is not None:
        bias = _as_tensor(bias)
        if bias.shape != (c_out,):
            raise ShapeError(f"bias shape {bias.shape} does not match output channels {c_out}")

    batched = x.ndim == 3
    xd = x.data if batched else x.data[None]
    b = xd.shape[0]
    xp = np.pad(xd, ((0, 0), (0, 0), (left, right))) if (left or right) else xd
    w = weight.data
    depthwise = groups == c_in and c_out == c_in

    if groups == 1 and k == 1:
        out = np.matmul(w[:, :, 0], xp)
    elif groups == 1:
        out = np.zeros((b, c_out, t_out), dtype=xd.dtype)
        for kk in range(k):
            out += np.matmul(w[:, :, kk], xp[:, :, kk * dilation : kk * dilation + t_out])
    elif depthwise:
        out = np.zeros((b, c_out, t_out), dtype=xd.dtype)
        for kk in range(k):
            out += w[:, 0, kk][None, :, None] * xp[:, :, kk * dilation : kk * dilation + t_out]
    else:
        xg = xp.reshape(b, groups, c_in // groups, xp.shape[-1])
        wg = w.reshape(groups, c_out // groups, cin_g, k)
        og = np.zeros((b, groups, c_out // groups, t_out), dtype=xd.dtype)
        for kk in range(k):
            og += np.einsum(
                "goi,bgit->bgot", wg[:, :, :, kk], xg[:, :, :, kk * dilation : kk * dilation + t_out]
            )
        out = og.reshape(b, c_out, t_out)
    if bias is not None:
        out += bias.data.reshape(1, -1, 1)

    def back(g):
        gb = g if batched else g[None]
        if bias is not None:
            _accum(bias, gb.sum(axis=(0, 2)))
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(w)
        if groups == 1:
            g2 = np.ascontiguousarray(gb.transpose(1, 0, 2)).reshape(c_out, -1)
            for kk in range(k):
                xs = xp[:, :, kk * dilation : kk * dilation + t_out]
                x2 = np.ascontiguousarray(xs.transpose(1, 0, 2)).reshape(c_in, -1)
                dw[:, :, kk] = g2 @ x2.T
                dxp[:, :, kk * dilation : kk * dilation + t_out] += np.matmul(w[:, :, kk].T, gb)
        elif depthwise:
            for kk in range(k):
                xs = xp[:, :, kk * dilation : kk * dilation + t_out]
                dw[:, 0, kk] = (gb * xs).sum(axis=(0, 2))
                dxp[:, :, kk * dilation : kk * dilation + t_out] += w[:, 0, kk][None, :, None] * gb
        else:
            xg = xp.reshape(b, groups, c_in // groups, xp.shape[-1])
            wg = w.reshape(groups, c_out // groups, cin_g, k)
            gg = gb.reshape(b, groups, c_out // groups, t_out)
            dwg = dw.reshape(groups, c_out // groups, cin_g, k)
            dxg = dxp.reshape(b, groups, c_in // groups, xp.shape[-1])
            for kk in range(k):
                xs = xg[:, :, :, kk * dilation : kk * dilation + t_out]
                dwg[:, :, :, kk] = np.einsum("bgot,bgit->goi", gg, xs)
                dxg[:, :, :, kk * dilation : kk * dilation + t_out] += np.einsum(
                    "goi,bgot->bgit", wg[:, :, :, kk], gg
                )
        dx = dxp[:, :, left : left + t_in] if (left or right) else dxp
        _accum(x, dx if batched else dx[0])
        _accum(weight, dw)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out if batched else out[0], parents, back)


# ---------------------------------------------------------------------------
# normalizations


def global_layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize jointly over channels and all time steps.

    x is [C, T] or [B, C, T]; gain/bias are [C, 1] and apply per channel.
    Statistics are per batch item, never across the batch. Fused forward
    and backward (the composition of primitive ops costs ~10x more here).
    """
    _check_norm_shapes(x, gain, bias)
    axes = (-2, -1)
    xd = x.data
    mu = xd.mean(axis=axes, keepdims=True)
    d = xd - mu
    var = (d * d).mean(axis=axes, keepdims=True)
    r = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xhat = d * r
    out_data = gain.data * xhat + bias.data

    def back(g):
        sum_axes = (-1,) if x.ndim == 2 else (0, -1)
        _accum(gain, (g * xhat).sum(axis=sum_axes, keepdims=x.ndim == 2).reshape(gain.shape))
        _accum(bias, g.sum(axis=sum_axes, keepdims=x.ndim == 2).reshape(bias.shape))
        h = g * gain.data
        mean_h = h.mean(axis=axes, keepdims=True)
        mean_hx = (h * xhat).mean(axis=axes, keepdims=True)
        _accum(x, r * (h - mean_h - xhat * mean_hx))

    return _make(out_data, (x, gain, bias), back)


def cumulative_layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-8) -> Tensor:
    """Normalize over channels and the time prefix 1..t at each step t.

    Column t of the output only depends on columns 1..t of the input,
    which is what makes the causal configuration causal. Fused forward
    and backward; the prefix-statistics chain rule turns into three
    suffix cumulative sums.
    """
    _check_norm_shapes(x, gain, bias)
    c, t = x.shape[-2], x.shape[-1]
    xd = x.data
    counts = (np.arange(1, t + 1, dtype=xd.dtype) * c).reshape((1,) * (x.ndim - 1) + (t,))
    s = np.cumsum(xd.sum(axis=-2, keepdims=True), axis=-1)
    q = np.cumsum((xd * xd).sum(axis=-2, keepdims=True), axis=-1)
    mu = s / counts
    var_raw = q / counts - mu * mu
    live = var_raw > 0  # clamp mask; gradient through var is zero where it binds
    var = np.maximum(var_raw, 0.0)
    r = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xhat = (xd - mu) * r
    out_data = gain.data * xhat + bias.data

    def suffix_sum(a):
        return np.flip(np.cumsum(np.flip(a, -1), axis=-1), -1)

    def back(g):
        sum_axes = (-1,) if x.ndim == 2 else (0, -1)
        _accum(gain, (g * xhat).sum(axis=sum_axes, keepdims=x.ndim == 2).reshape(gain.shape))
        _accum(bias, g.sum(axis=sum_axes, keepdims=x.ndim == 2).reshape(bias.shape))
        h = g * gain.data
        p = h.sum(axis=-2, keepdims=True)
        w = (h * xhat).sum(axis=-2, keepdims=True)
        a_coef = w * (r * r) * live / counts
        suf_p = suffix_sum(p * r / counts)
        suf_a = suffix_sum(a_coef)
        suf_amu = suffix_sum(a_coef * mu)
        _accum(x, h * r - suf_p - xd * suf_a + suf_amu)

    return _make(out_data, (x, gain, bias), back)


def _check_norm_shapes(x: Tensor, gain: Tensor, bias: Tensor):
    if x.ndim not in (2, 3):
        raise ShapeError(f"layer norm input must be [C,T] or [B,C,T], got {x.shape}")
    c = x.shape[-2]
    for name, t in (("gain", gain), ("bias", bias)):
        if t.shape != (c, 1):
            raise ShapeError(f"layer norm {name} must have shape ({c}, 1), got {t.shape}")
    if x.shape[-1] < 1:
        raise ShapeError("layer norm needs at least one time step")


def _const_like(t: Tensor, value: float) -> Tensor:
    return Tensor(np.asarray(value, dtype=t.dtype), dtype=t.dtype)


# ---------------------------------------------------------------------------
# loss


def binary_cross_entropy(p: Tensor, y) -> Tensor:
    """Summed per-class binary cross-entropy against {0,1} targets.

    p holds probabilities; they are clamped to [1e-7, 1 - 1e-7] before the
    logs. A [C] input yields the class sum; a [B, C] batch yields the mean
    over rows of the per-row class sums.
    """
    y = np.asarray(y, dtype=p.dtype)
    if y.shape != p.shape:
        raise ShapeError(f"targets shape {y.shape} does not match predictions {p.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("binary cross-entropy targets must be exactly 0 or 1")
    pc = clip(p, 1e-7, 1.0 - 1e-7)
    yt = Tensor(y, dtype=p.dtype)
    one = _const_like(p, 1.0)
    per = neg(add(mul(yt, log(pc)), mul(sub(one, yt), log(sub(one, pc)))))
    total = tsum(per)
    if p.ndim == 2:
        return mul(total, _const_like(total, 1.0 / p.shape[0]))
    return total


# ---------------------------------------------------------------------------
# optimizer and schedule


@dataclass
class AdamState:
    """Per-parameter Adam moment buffers plus the shared step counter."""

    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
            step_count=0,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        )


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place on the parameter tensors."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads, and optimizer state must have matching lengths")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient {i} shape {g.shape} does not match parameter {p.data.shape}")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


def exp_lr_schedule(epoch: int, total_epochs: int, lr_start: float, lr_end: float) -> float:
    """Geometric interpolation from lr_start (epoch 0) to lr_end (last epoch)."""
    if total_epochs < 2:
        return lr_start
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    return lr_start * (lr_end / lr_start) ** (epoch / (total_epochs - 1))


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f, x: Tensor, epsilon: float = 1e-4) -> float:
    """Compare reverse-mode gradients of scalar f(x) against central differences.

    Returns the max relative error over the entries of x. Build f's tensors
    (x and any captured parameters) in float64 so the 1e-4 tolerance is
    meaningful; x is perturbed in place during the check and restored.
    """
    x.grad = None
    out = f(x)
    if out.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, f returned shape {out.shape}")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    numeric = np.empty(flat.size, dtype=np.float64)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = float(f(x).data)
            flat[i] = orig - epsilon
            fm = float(f(x).data)
            flat[i] = orig
            numeric[i] = (fp - fm) / (2.0 * epsilon)
    numeric = numeric.reshape(x.shape)

    a = analytic.astype(np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
    return float((np.abs(a - numeric) / denom).max())
