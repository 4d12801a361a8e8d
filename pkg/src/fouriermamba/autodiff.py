"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation creates a new :class:`Tensor` holding its
parents and a vector-Jacobian product closure. :func:`backward` walks the
graph once in reverse topological order. The op set is closed: the functions
in this module plus the hooks registered by :mod:`fouriermamba.fourier` and
:mod:`fouriermamba.ssm`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

LN_EPS = 1e-6

# name -> short description; gradcheck iterates over this registry
OPS: dict[str, str] = {}


def register_op(name: str, doc: str = "") -> None:
    OPS[name] = doc


class Tensor:
    """A float64 array plus the bookkeeping of one autodiff graph node."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _vjp=None, op: str = "leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and 0 in arr.shape:
            raise ValueError(f"degenerate tensor shape {arr.shape}: every extent must be positive")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._vjp = _vjp
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def node(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable, op: str) -> Tensor:
    """Create an op output. ``vjp(g)`` returns one gradient (or None) per parent."""
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _vjp=vjp, op=op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, name: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# elementwise arithmetic

def add(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _broadcast_shape(x, y, "add")
    return node(x.data + y.data, (x, y),
                lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)), "add")


def sub(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _broadcast_shape(x, y, "sub")
    return node(x.data - y.data, (x, y),
                lambda g: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)), "sub")


def mul(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _broadcast_shape(x, y, "mul")
    return node(x.data * y.data, (x, y),
                lambda g: (_unbroadcast(g * y.data, x.shape), _unbroadcast(g * x.data, y.shape)), "mul")


def neg(x: Tensor) -> Tensor:
    return node(-x.data, (x,), lambda g: (-g,), "neg")


def scale(x: Tensor, c: float) -> Tensor:
    return node(x.data * c, (x,), lambda g: (g * c,), "scale")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return node(out, (x,), lambda g: (g * out,), "exp")


def absolute(x: Tensor) -> Tensor:
    return node(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def _sigmoid(v: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return node(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    s = _sigmoid(x.data)
    out = x.data * s
    return node(out, (x,), lambda g: (g * (s + out * (1.0 - s)),), "silu")


def softplus(x: Tensor) -> Tensor:
    v = x.data
    out = np.logaddexp(0.0, v)
    return node(out, (x,), lambda g: (g * _sigmoid(v),), "softplus")


# --------------------------------------------------------------------------
# reductions and shape ops

def sum_all(x: Tensor) -> Tensor:
    return node(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    return node(np.array(x.data.mean()), (x,), lambda g: (np.full(x.shape, float(g) / n),), "mean")


def sum_axis(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return node(out, (x,), vjp, "sum_axis")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def stack_leading(xs: Sequence[Tensor]) -> Tensor:
    """Stack along a new leading axis."""
    xs = list(xs)
    out = np.stack([t.data for t in xs], axis=0)
    return node(out, xs, lambda g: tuple(g[i] for i in range(len(xs))), "stack")


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = list(xs)
    if not xs:
        raise ValueError("concat: empty input list")
    nd = xs[0].ndim
    ax = axis % nd
    for t in xs[1:]:
        if t.ndim != nd or any(a != b for i, (a, b) in enumerate(zip(t.shape, xs[0].shape)) if i != ax):
            raise ValueError(f"concat: shapes {[t.shape for t in xs]} disagree off axis {axis}")
    sizes = [t.shape[ax] for t in xs]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in xs], axis=ax)
    return node(out, xs, lambda g: tuple(np.split(g, splits, axis=ax)), "concat")


def take(x: Tensor, idx: np.ndarray, axis: int) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate in the backward pass."""
    idx = np.asarray(idx, dtype=np.intp)
    ax = axis % x.ndim
    out = np.take(x.data, idx, axis=ax)
    injective = np.unique(idx).size == idx.size

    def vjp(g):
        gx = np.zeros(x.shape)
        gm = np.moveaxis(gx, ax, 0)
        gg = np.moveaxis(g, ax, 0)
        if injective:
            gm[idx] = gg
        else:
            np.add.at(gm, idx, gg)
        return (gx,)

    return node(out, (x,), vjp, "take")


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the two spatial axes of ``[..., H, W, C]``, keeping them as size 1."""
    if x.ndim < 3:
        raise ValueError(f"global_avg_pool expects [..., H, W, C], got {x.shape}")
    h, w = x.shape[-3], x.shape[-2]
    out = x.data.mean(axis=(-3, -2), keepdims=True)
    return node(out, (x,), lambda g: (np.broadcast_to(g / (h * w), x.shape).copy(),), "global_avg_pool")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of ``[..., H, W, C]``."""
    out = x.data.repeat(2, axis=-3).repeat(2, axis=-2)

    def vjp(g):
        s = g.shape
        g = g.reshape(s[:-3] + (s[-3] // 2, 2, s[-2] // 2, 2, s[-1]))
        return (g.sum(axis=(-4, -2)),)

    return node(out, (x,), vjp, "upsample2x")


# --------------------------------------------------------------------------
# linear layers

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` over the last axis; ``w`` is ``[Cin, Cout]``."""
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: input channels {x.shape[-1]} != weight rows {w.shape[0]}")
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def vjp(g):
        gx = g @ w.data.T
        gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        if b is None:
            return gx, gw
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    return node(out, parents, vjp, "linear")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, pad: str = "same") -> Tensor:
    """2D cross-correlation of ``[..., H, W, Cin]`` with ``w[k, k, Cin, Cout]``.

    ``pad="same"`` zero-pads by ``k // 2`` on each side; with stride 1 this
    preserves H and W. ``pad="valid"`` does not pad.
    """
    k = w.shape[0]
    if w.ndim != 4 or w.shape[1] != k:
        raise ValueError(f"conv2d: weight must be [k, k, Cin, Cout], got {w.shape}")
    if x.ndim < 3:
        raise ValueError(f"conv2d: input must be [..., H, W, Cin], got {x.shape}")
    if x.shape[-1] != w.shape[2]:
        raise ValueError(f"conv2d: input has {x.shape[-1]} channels but weight expects {w.shape[2]}")
    if stride < 1:
        raise ValueError("conv2d: stride must be positive")
    if pad not in ("same", "valid"):
        raise ValueError(f"conv2d: unknown padding {pad!r}")
    if pad == "same" and k % 2 == 0:
        raise ValueError("conv2d: same padding needs an odd kernel")
    H, W = x.shape[-3], x.shape[-2]
    if H < k or W < k:
        raise ValueError(f"conv2d: spatial extent {H}x{W} smaller than kernel {k}")

    if k == 1 and stride == 1:
        w2 = reshape(w, (w.shape[2], w.shape[3]))
        return linear(x, w2, b)

    p = k // 2 if pad == "same" else 0
    lead = x.shape[:-3]
    xd = x.data.reshape((-1,) + x.shape[-3:])
    xp = np.pad(xd, ((0, 0), (p, p), (p, p), (0, 0)))
    Ho = (xp.shape[1] - k) // stride + 1
    Wo = (xp.shape[2] - k) // stride + 1
    # patches: [B, Ho, Wo, k, k, Cin]
    patches = np.empty((xd.shape[0], Ho, Wo, k, k, xd.shape[3]))
    for i in range(k):
        for j in range(k):
            patches[:, :, :, i, j, :] = xp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride, :]
    cin, cout = w.shape[2], w.shape[3]
    pm = patches.reshape(-1, k * k * cin)
    wm = w.data.reshape(k * k * cin, cout)
    out = pm @ wm
    if b is not None:
        out = out + b.data
    out = out.reshape(lead + (Ho, Wo, cout))
    parents = (x, w) if b is None else (x, w, b)

    def vjp(g):
        gm = g.reshape(-1, cout)
        gw = (pm.T @ gm).reshape(w.shape)
        gp = (gm @ wm.T).reshape(patches.shape)
        gxp = np.zeros(xp.shape)
        for i in range(k):
            for j in range(k):
                gxp[:, i:i + stride * (Ho - 1) + 1:stride, j:j + stride * (Wo - 1) + 1:stride, :] += gp[:, :, :, i, j, :]
        gx = gxp[:, p:p + H, p:p + W, :].reshape(x.shape)
        if b is None:
            return gx, gw
        return gx, gw, gm.sum(axis=0)

    return node(out, parents, vjp, "conv2d")


def dwconv1d(seq: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Causal depthwise convolution of ``[..., L, C]`` with taps ``w[k, C]``.

    ``out[t, c] = b[c] + sum_j w[j, c] * seq[t - j, c]`` with zeros before t=0,
    so an impulse at t=0 reproduces the taps in order.
    """
    if w.ndim != 2 or w.shape[0] <= 0:
        raise ValueError(f"dwconv1d: taps must be [k, C] with k >= 1, got {w.shape}")
    if seq.ndim < 2 or seq.shape[-1] != w.shape[1] or b.shape != (w.shape[1],):
        raise ValueError(f"dwconv1d: shapes seq {seq.shape}, w {w.shape}, b {b.shape} disagree")
    k = w.shape[0]
    L = seq.shape[-2]
    x = seq.data
    out = np.broadcast_to(b.data, x.shape).copy()
    for j in range(min(k, L)):
        out[..., j:, :] += w.data[j] * x[..., :L - j, :]

    def vjp(g):
        gx = np.zeros_like(x)
        gw = np.zeros(w.shape)
        for j in range(min(k, L)):
            gx[..., :L - j, :] += w.data[j] * g[..., j:, :]
            gw[j] = (g[..., j:, :] * x[..., :L - j, :]).reshape(-1, x.shape[-1]).sum(axis=0)
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    return node(out, (seq, w, b), vjp, "dwconv1d")


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize over the last (channel) axis, then apply ``gamma``/``beta``."""
    if eps <= 0:
        raise ValueError("layernorm: eps must be positive")
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ValueError(f"layernorm: affine shapes {gamma.shape}/{beta.shape} do not match {c} channels")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def vjp(g):
        gxhat = g * gamma.data
        gx = rstd * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                     - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, c)
        return gx, (flat * xhat.reshape(-1, c)).sum(axis=0), flat.sum(axis=0)

    return node(out, (x, gamma, beta), vjp, "layernorm")


for _name in ("add", "sub", "mul", "neg", "scale", "exp", "abs", "sigmoid", "silu", "softplus",
              "sum", "mean", "sum_axis", "reshape", "stack", "concat", "take", "global_avg_pool",
              "upsample2x", "linear", "conv2d", "dwconv1d", "layernorm"):
    register_op(_name)


# --------------------------------------------------------------------------
# backward pass

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in reversed(t._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Populate ``.grad`` on every node reachable from a scalar ``root``."""
    if root.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topo_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones(root.shape)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            g = np.zeros(t.shape)
        t.grad = g
        if t._vjp is None:
            continue
        for p, gp in zip(t._parents, t._vjp(g)):
            if gp is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + gp
            else:
                grads[key] = np.asarray(gp, dtype=np.float64)


def grad_check(f: Callable[[list[Tensor]], Tensor], inputs: Sequence[np.ndarray], *,
               h: float = 1e-5, n_samples: int | None = None, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    ``f`` maps a list of Tensors to a scalar Tensor. Coordinates are either all
    of them or ``n_samples`` drawn uniformly across every input.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = f(ts)
    backward(out)
    analytic = [t.grad if t.grad is not None else np.zeros(t.shape) for t in ts]

    coords = [(i, j) for i, a in enumerate(arrays) for j in range(a.size)]
    if n_samples is not None and n_samples < len(coords):
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(coords), size=n_samples, replace=False)
        coords = [coords[k] for k in sorted(pick)]

    def evaluate(i, j, delta):
        trial = [a.copy() for a in arrays]
        trial[i].reshape(-1)[j] += delta
        return f([Tensor(a) for a in trial]).item()

    worst = 0.0
    for i, j in coords:
        num = (evaluate(i, j, h) - evaluate(i, j, -h)) / (2 * h)
        ana = float(analytic[i].reshape(-1)[j])
        denom = max(abs(ana), abs(num), 1e-8)
        worst = max(worst, abs(ana - num) / denom)
    return worst


# --------------------------------------------------------------------------
# optimisation

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """In-place Adam update without weight decay."""
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def cosine_lr(it: int, total: int, lr0: float, lr_min: float) -> float:
    if lr0 < 0 or lr_min < 0:
        raise ValueError("learning rates must be non-negative")
    if lr0 <= lr_min:
        raise ValueError(f"cosine_lr needs lr0 > lr_min, got {lr0} <= {lr_min}")
    if total <= 0:
        raise ValueError("total iterations must be positive")
    t = min(max(it, 0), total) / total
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t))
