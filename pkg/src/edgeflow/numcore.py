"""Small dense-tensor library with tape-based reverse-mode autodiff.

Everything runs in float64 on numpy arrays.  Operations executed while a
:class:`Tape` is active are recorded; :func:`backward` then replays the tape
in reverse.  Outside a tape, ops run eagerly with no bookkeeping, which is
what inference uses.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


_TAPES: list["Tape"] = []


class Tape:
    """Records the ops of one forward pass, in execution order."""

    def __init__(self) -> None:
        self.nodes: list[Tensor] = []
        self._ids: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.pop()

    def record(self, t: "Tensor") -> None:
        self.nodes.append(t)
        self._ids.add(id(t))

    def __contains__(self, t: "Tensor") -> bool:
        return id(t) in self._ids


def _active_tape() -> Tape | None:
    return _TAPES[-1] if _TAPES else None


class Tensor:
    """An fp64 array plus an optional gradient slot."""

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if not np.isfinite(arr).all():
            raise NonFiniteError(f"non-finite value in tensor {name or ''}".strip())
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self.op})"

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad = self.grad + g

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _raise_not_scalar(t: Tensor):
    raise ShapeError(f"expected a scalar tensor, got shape {t.shape}")


class Parameter(Tensor):
    """A named, trainable tensor.  ``init`` records how it was initialised."""

    def __init__(self, name: str, data, init: str = "given"):
        super().__init__(data, requires_grad=True, name=name)
        self.init = init


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite result in op '{op}'")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.grad = None
    out.op = op
    tape = _active_tape()
    track = tape is not None and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = tuple(parents)
        out._backward = backward
        tape.record(out)
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(-g * out / b.data, b.shape))

    return _make(out, (a, b), bw, "div")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: a._accum(-g), "neg")


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: a._accum(g * out), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore"):
        out = np.log(a.data)
    return _make(out, (a,), lambda g: a._accum(g / a.data), "log")


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: a._accum(g * (1.0 - out * out)), "tanh")


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid_np(a.data)
    return _make(out, (a,), lambda g: a._accum(g * out * (1.0 - out)), "sigmoid")


def softplus(a) -> Tensor:
    """log(1 + e^x), computed without overflow."""
    a = as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _make(out, (a,), lambda g: a._accum(g * _sigmoid_np(x)), "softplus")


def relu(a) -> Tensor:
    a = as_tensor(a)
    on = a.data > 0
    return _make(np.where(on, a.data, 0.0), (a,), lambda g: a._accum(g * on), "relu")


# ---------------------------------------------------------------- structural


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}")
    k_b = b.shape[-2] if b.ndim >= 2 else b.shape[0]
    if a.shape[-1] != k_b:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def bw(g):
        A, B = a.data, b.data
        G = g
        if B.ndim == 1:
            G = G[..., None]
            B = B[:, None]
        if A.ndim == 1:
            G = G[..., None, :]
            A = A[None, :]
        if a.requires_grad:
            ga = np.matmul(G, np.swapaxes(B, -1, -2))
            if a.ndim == 1:
                ga = ga[..., 0, :]
            a._accum(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(A, -1, -2), G)
            if b.ndim == 1:
                gb = gb[..., 0]
            b._accum(_unbroadcast(gb, b.shape))

    return _make(out, (a, b), bw, "matmul")


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.shape))

    return _make(np.asarray(out, dtype=DTYPE), (a,), bw, "sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.size if axis is None else a.shape[axis]
    return tsum(a, axis=axis) * (1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _make(out, (a,), lambda g: a._accum(g.reshape(a.shape)), "reshape")


def swapaxes(a, ax1: int, ax2: int) -> Tensor:
    a = as_tensor(a)
    out = np.swapaxes(a.data, ax1, ax2)
    return _make(out, (a,), lambda g: a._accum(np.swapaxes(g, ax1, ax2)), "swapaxes")


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        shapes = " and ".join(str(t.shape) for t in ts)
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return _make(out, ts, bw, "concat")


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) if axis >= 0 else
                reshape(t, t.shape + (1,)) for t in ts]
    return concat(expanded, axis=axis)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    out = np.array(a.data[idx], dtype=DTYPE)
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(i, (slice, int, type(Ellipsis))) or i is None for i in parts)

    def bw(g):
        full = np.zeros_like(a.data)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        a._accum(full)

    return _make(out, (a,), bw, "slice")


def take_rows(table, ids) -> Tensor:
    """Embedding lookup: ``table[ids]`` for an integer array of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = table.data[ids]

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        table._accum(full)

    return _make(out, (table,), bw, "take_rows")


def pick(a, index) -> Tensor:
    """Select ``a[..., index[...]]`` along the last axis."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    if index.shape != a.shape[:-1]:
        raise ShapeError(f"pick: index shape {index.shape} vs tensor shape {a.shape}")
    out = np.take_along_axis(a.data, index[..., None], axis=-1)[..., 0]

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, index[..., None], g[..., None], axis=-1)
        a._accum(full)

    return _make(out, (a,), bw, "pick")


# ---------------------------------------------------------------- nn pieces


def masked_softmax(logits, mask, axis: int = -1) -> Tensor:
    """Softmax restricted to positions where ``mask`` is true.

    Masked positions get exactly 0.  A row with nothing allowed comes back as
    all zeros, and the row is reported in ``out.empty_rows``.
    """
    logits = as_tensor(logits)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ShapeError(f"masked_softmax: mask shape {mask.shape} vs logits shape {logits.shape}")
    z = np.where(mask, logits.data, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.where(mask, np.exp(np.where(mask, logits.data - zmax, 0.0)), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    empty = s == 0
    p = e / np.where(empty, 1.0, s)

    def bw(g):
        inner = (g * p).sum(axis=axis, keepdims=True)
        logits._accum(p * (g - inner))

    out = _make(p, (logits,), bw, "masked_softmax")
    out.empty_rows = np.squeeze(empty, axis=axis)
    return out


def softmax(logits, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    return masked_softmax(logits, np.ones(logits.shape, dtype=bool), axis=axis)


def masked_log_softmax(logits, mask, axis: int = -1) -> Tensor:
    """log of :func:`masked_softmax`; masked slots (and empty rows) hold 0."""
    logits = as_tensor(logits)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape:
        raise ShapeError(f"masked_log_softmax: mask shape {mask.shape} vs logits shape {logits.shape}")
    z = np.where(mask, logits.data, -np.inf)
    zmax = np.max(z, axis=axis, keepdims=True)
    zmax = np.where(np.isfinite(zmax), zmax, 0.0)
    e = np.where(mask, np.exp(np.where(mask, logits.data - zmax, 0.0)), 0.0)
    s = e.sum(axis=axis, keepdims=True)
    safe = np.where(s == 0, 1.0, s)
    out = np.where(mask, logits.data - zmax - np.log(safe), 0.0)
    p = e / safe

    def bw(g):
        gm = np.where(mask, g, 0.0)
        logits._accum(gm - p * gm.sum(axis=axis, keepdims=True))

    return _make(out, (logits,), bw, "masked_log_softmax")


def log_softmax(logits, axis: int = -1) -> Tensor:
    logits = as_tensor(logits)
    return masked_log_softmax(logits, np.ones(logits.shape, dtype=bool), axis=axis)


def cross_entropy(probs, target) -> Tensor:
    """Per-position negative log-likelihood ``-log probs[..., target]``."""
    return neg(log(pick(probs, target)))


def dropout(x, p: float, rng: np.random.Generator | None, train: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    x = as_tensor(x)
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an rng")
    keep = (rng.random(x.shape) >= p).astype(DTYPE) / (1.0 - p)
    return mul(x, Tensor(keep))


class AffineParams:
    def __init__(self, weight: Parameter, bias: Parameter):
        self.weight = weight
        self.bias = bias

    def __call__(self, x) -> Tensor:
        return matmul(x, self.weight) + self.bias


class FFNParams:
    """affine -> relu -> affine."""

    def __init__(self, first: AffineParams, second: AffineParams):
        self.first = first
        self.second = second

    def __call__(self, x) -> Tensor:
        return ffn(x, self)


def ffn(x, params: FFNParams) -> Tensor:
    return params.second(relu(params.first(x)))


class GRUParams:
    """Gate-stacked GRU weights, columns ordered (reset, update, new)."""

    def __init__(self, w_ih: Parameter, w_hh: Parameter, b_ih: Parameter, b_hh: Parameter):
        self.w_ih = w_ih
        self.w_hh = w_hh
        self.b_ih = b_ih
        self.b_hh = b_hh

    @property
    def hidden_dim(self) -> int:
        return self.w_hh.shape[0]


def gru_cell(x, h_prev, params: GRUParams) -> Tensor:
    """One GRU step.

    r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
    z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
    n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
    h' = (1 - z) * n + z * h
    """
    x, h_prev = as_tensor(x), as_tensor(h_prev)
    H = params.hidden_dim
    if x.shape[-1] != params.w_ih.shape[0]:
        raise ShapeError(f"gru_cell: input shape {x.shape} vs weight shape {params.w_ih.shape}")
    if h_prev.shape[-1] != H:
        raise ShapeError(f"gru_cell: state shape {h_prev.shape} vs weight shape {params.w_hh.shape}")
    gi = matmul(x, params.w_ih) + params.b_ih
    gh = matmul(h_prev, params.w_hh) + params.b_hh
    r = sigmoid(gi[..., :H] + gh[..., :H])
    z = sigmoid(gi[..., H:2 * H] + gh[..., H:2 * H])
    n = tanh(gi[..., 2 * H:] + r * gh[..., 2 * H:])
    return (1.0 - z) * n + z * h_prev


# ---------------------------------------------------------------- parameters


class ParamStore:
    """Ordered registry of named parameters with deterministic initialisation."""

    def __init__(self) -> None:
        self._params: "OrderedDict[str, Parameter]" = OrderedDict()

    def add(self, name: str, shape: Sequence[int], init: str, rng: np.random.Generator) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, _initialise(tuple(shape), init, rng), init=init)
        self._params[name] = p
        return p

    def affine(self, name: str, d_in: int, d_out: int, rng, scale: float | None = None) -> AffineParams:
        # default keeps unit output variance for unit-variance inputs
        a = scale if scale is not None else math.sqrt(3.0 / d_in)
        return AffineParams(
            self.add(f"{name}.weight", (d_in, d_out), f"uniform:{a!r}", rng),
            self.add(f"{name}.bias", (d_out,), "zeros", rng),
        )

    def ffn(self, name: str, d_in: int, d_hidden: int, d_out: int, rng) -> FFNParams:
        return FFNParams(self.affine(f"{name}.0", d_in, d_hidden, rng, scale=math.sqrt(6.0 / d_in)),
                         self.affine(f"{name}.1", d_hidden, d_out, rng))

    def gru(self, name: str, d_in: int, hidden: int, rng) -> GRUParams:
        a = 1.0 / math.sqrt(hidden)
        return GRUParams(
            self.add(f"{name}.w_ih", (d_in, 3 * hidden), f"uniform:{a!r}", rng),
            self.add(f"{name}.w_hh", (hidden, 3 * hidden), f"uniform:{a!r}", rng),
            self.add(f"{name}.b_ih", (3 * hidden,), f"uniform:{a!r}", rng),
            self.add(f"{name}.b_hh", (3 * hidden,), f"uniform:{a!r}", rng),
        )

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def num_scalars(self) -> int:
        return sum(p.size for p in self._params.values())


def _initialise(shape: tuple[int, ...], init: str, rng: np.random.Generator) -> np.ndarray:
    kind, _, arg = init.partition(":")
    if kind == "zeros":
        return np.zeros(shape, dtype=DTYPE)
    if kind == "ones":
        return np.ones(shape, dtype=DTYPE)
    if kind == "uniform":
        a = float(arg)
        return rng.uniform(-a, a, size=shape).astype(DTYPE)
    if kind == "normal":
        return rng.normal(0.0, float(arg), size=shape).astype(DTYPE)
    raise ValueError(f"unknown initialiser {init!r}")


# ---------------------------------------------------------------- gradients


def backward(tape: Tape, loss: Tensor, params: Iterable[Parameter] | None = None) -> None:
    """Fill ``.grad`` on everything upstream of ``loss``.

    Gradients on leaves accumulate, so call ``zero_grad`` between steps.  Any
    parameter in ``params`` that the loss does not reach gets an exact zero.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss not in tape:
        raise ValueError("loss was not recorded on this tape")
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def global_norm(params: Iterable[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)


def finite_diff_check(forward: Callable[[], Tensor], params: Sequence[Parameter], eps: float = 1e-5,
                      per_scalar: bool = False, atol: float = 1e-8) -> float:
    """Max relative error between autodiff and central differences.

    ``forward`` must build the scalar loss from the current parameter values.
    Each parameter tensor is scored as
    ||g_ad - g_fd|| / max(1e-8, ||g_ad|| + ||g_fd||); ``per_scalar`` applies
    the same formula to every entry instead.  Tensors (or entries) where
    both gradients are below ``atol`` score 0: a vanishing true gradient (a
    bias added to every attention key, say) leaves only rounding noise.
    """
    params = list(params)
    first = forward().item()
    second = forward().item()
    if first != second:
        raise RuntimeError("forward is not deterministic; disable dropout before checking gradients")
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = forward()
    backward(tape, loss, params)
    worst = 0.0
    for p, analytic in zip(params, [p.grad.copy() for p in params]):
        numeric = numeric_grad(forward, p, eps)
        if per_scalar:
            scale = np.abs(analytic) + np.abs(numeric)
            rel = np.where(scale <= atol, 0.0, np.abs(analytic - numeric) / np.maximum(1e-8, scale))
            err = float(rel.max()) if rel.size else 0.0
        else:
            scale = float(np.linalg.norm(analytic) + np.linalg.norm(numeric))
            if scale <= atol:
                continue
            err = float(np.linalg.norm(analytic - numeric)) / scale
        worst = max(worst, err)
    return worst


def numeric_grad(forward: Callable[[], Tensor], p: Parameter, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``forward()`` w.r.t. every entry of ``p``."""
    out = np.zeros_like(p.data)
    flat = p.data.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = forward().item()
        flat[i] = orig - eps
        down = forward().item()
        flat[i] = orig
        g[i] = (up - down) / (2.0 * eps)
    return out
