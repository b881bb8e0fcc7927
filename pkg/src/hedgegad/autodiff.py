"""Dense float64 reverse-mode autodiff on a recording tape.

Operations executed inside ``with Tape() as tape:`` are recorded whenever one
of their inputs requires a gradient. ``backward(tape, loss)`` walks the
records in reverse and accumulates gradients into leaf tensors.

All tensors are 2-D. ``add``, ``sub`` and ``mul`` broadcast ``(n, 1)`` and
``(1, c)`` operands the way numpy does; everything else is shape-strict.
"""

from __future__ import annotations

import contextvars
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

LN_EPS = 1e-5
GUMBEL_CLAMP = 1e-12

_active_tape: contextvars.ContextVar = contextvars.ContextVar("active_tape", default=None)


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of operations; topological order equals recording order."""

    def __init__(self):
        self.records: list = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)


def _record(out_data: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Wrap a forward result and record its backward rule if needed.

    ``backward_fn(g)`` returns one gradient (or None) per input.
    """
    tape = _active_tape.get()
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.name = None
    out.requires_grad = needs and tape is not None
    if out.requires_grad:
        tape.records.append((out, tuple(inputs), backward_fn))
    return out


def backward(tape: Tape, loss: Tensor, params: Sequence[Tensor] = ()) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every requires_grad leaf.

    Tensors in ``params`` get a zero gradient buffer first if they have none,
    so unused parameters end with all-zero gradients.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"loss must be 1x1, got {loss.shape}")
    for p in params:
        if p.grad is None:
            p.zero_grad()
    if not tape.records:
        return
    produced = {id(rec[0]) for rec in tape.records}
    grads = {id(loss): np.ones((1, 1))}
    for out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            if id(t) in produced:
                prev = grads.get(id(t))
                grads[id(t)] = gi if prev is None else prev + gi
            else:
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
                t.grad += gi


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- primitives -------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    ad, bd = a.data, b.data

    def bw(g):
        return (g @ bd.T if a.requires_grad else None,
                ad.T @ g if b.requires_grad else None)

    return _record(ad @ bd, (a, b), bw)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    """Elementwise product."""
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("mul", a, b)
    ad, bd = a.data, b.data

    def bw(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return _record(ad * bd, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    return _record(a.data * c, (a,), lambda g: (g * c,))


def shift(a: Tensor, c: float) -> Tensor:
    """``a + c`` for a python scalar ``c``."""
    return _record(a.data + c, (a,), lambda g: (g,))


def transpose(a: Tensor) -> Tensor:
    return _record(a.data.T.copy(), (a,), lambda g: (g.T,))


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {[p.shape for p in parts]}")
    widths = [p.shape[1] for p in parts]
    edges = np.cumsum([0] + widths)

    def bw(g):
        return tuple(g[:, edges[k]:edges[k + 1]] for k in range(len(parts)))

    return _record(np.concatenate([p.data for p in parts], axis=1), tuple(parts), bw)


def row_mean(a: Tensor) -> Tensor:
    """Mean of each row, shape ``(n, 1)``."""
    c = a.shape[1]
    return _record(a.data.mean(axis=1, keepdims=True), (a,), lambda g: (np.broadcast_to(g / c, a.shape).copy(),))


def row_sum(a: Tensor) -> Tensor:
    return _record(a.data.sum(axis=1, keepdims=True), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def softmax_rows(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _record(s, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _record(a.data * mask, (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    s = expit(a.data)
    return _record(s, (a,), lambda g: (g * s * (1 - s),))


def layer_norm_rows(a: Tensor) -> Tensor:
    """Normalize each row to zero mean and unit variance (eps 1e-5, no affine)."""
    x = a.data
    c = x.shape[1]
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    y = xc * inv

    def bw(g):
        gm = g.mean(axis=1, keepdims=True)
        gy = (g * y).mean(axis=1, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return _record(y, (a,), bw)


def gather_rows(a: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    n = a.shape[0]

    def bw(g):
        out = np.zeros((n, g.shape[1]))
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.data[idx], (a,), bw)


def scatter_add_rows(a: Tensor, idx, n_out: int) -> Tensor:
    """``out[idx[k]] += a[k]`` into an ``(n_out, c)`` result."""
    idx = np.asarray(idx, dtype=np.int64)
    if len(idx) != a.shape[0]:
        raise ShapeError(f"scatter_add_rows: {len(idx)} indices for {a.shape[0]} rows")
    out = np.zeros((n_out, a.shape[1]))
    np.add.at(out, idx, a.data)
    return _record(out, (a,), lambda g: (g[idx],))


def log(a: Tensor) -> Tensor:
    x = a.data
    return _record(np.log(x), (a,), lambda g: (g / x,))


def square(a: Tensor) -> Tensor:
    x = a.data
    return _record(x * x, (a,), lambda g: (2.0 * x * g,))


def masked_sum(a: Tensor, mask=None) -> Tensor:
    """Sum of ``a * mask`` as a 1x1 tensor; ``mask`` is a constant array (default all ones)."""
    if mask is None:
        m = np.ones(a.shape)
    else:
        m = np.broadcast_to(np.asarray(mask, dtype=np.float64), a.shape)
    return _record(np.array([[(a.data * m).sum()]]), (a,), lambda g: (g[0, 0] * m,))


def total(a: Tensor) -> Tensor:
    return masked_sum(a)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip into ``[lo, hi]``; gradient is zero where clipping was active."""
    x = a.data
    inside = (x >= lo) & (x <= hi)
    return _record(np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


def safe_rsqrt(a: Tensor) -> Tensor:
    """``a ** -0.5`` for positive entries, 0 elsewhere."""
    x = a.data
    pos = x > 0
    y = np.zeros_like(x)
    y[pos] = x[pos] ** -0.5

    def bw(g):
        out = np.zeros_like(x)
        out[pos] = -0.5 * g[pos] * x[pos] ** -1.5
        return (out,)

    return _record(y, (a,), bw)


def detach(a: Tensor) -> Tensor:
    return Tensor(a.data.copy())


def straight_through(hard, soft: Tensor) -> Tensor:
    """Forward value ``hard``, gradient passed unchanged to ``soft``."""
    hard = np.asarray(hard, dtype=np.float64)
    if hard.shape != soft.shape:
        raise ShapeError(f"straight_through: {hard.shape} vs {soft.shape}")
    return _record(hard.copy(), (soft,), lambda g: (g,))


def mean_of(tensors: Sequence[Tensor]) -> Tensor:
    acc = tensors[0]
    for t in tensors[1:]:
        acc = add(acc, t)
    return scale(acc, 1.0 / len(tensors)) if len(tensors) > 1 else acc


# -- randomness -------------------------------------------------------------

def gumbel_noise(shape, seed=None) -> Tensor:
    """Standard Gumbel samples ``-log(-log(u))``, ``u`` clamped into (0, 1) by 1e-12.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random(shape)
    return Tensor(gumbel_from_uniform(u))


def gumbel_from_uniform(u) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return -np.log(-np.log(u))


# -- finite differences -----------------------------------------------------

def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)`` elementwise."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(fn: Callable[[], float], t: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``fn()`` w.r.t. ``t.data``, in place."""
    g = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    gf = g.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = fn()
        flat[k] = orig - step
        down = fn()
        flat[k] = orig
        gf[k] = (up - down) / (2 * step)
    return g


def gradcheck(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
              floor: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences over ``params``."""
    for p in params:
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss, params)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        numeric = numeric_grad(lambda: loss_fn().item(), p, step)
        if analytic.size:
            worst = max(worst, float(relative_error(analytic, numeric, floor).max()))
    return worst
