"""Reverse-mode autodiff over dense 2-D float64 arrays.

The substrate for every layer and loss in this package: a Tensor wrapper
holding values plus an optional gradient buffer, a Tape that records
operations, and the op vocabulary (matmul, activations, the softmax family,
reductions, dropout). Ops compute eagerly with numpy; when a Tape is active
and an input requires gradients, a backward rule is recorded. Gradients
accumulate additively into Tensor.grad, so callers zero between steps.

Usage:
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    with Tape() as tape:
        loss = mean_all(square(matmul(x, w)))
        tape.backward(loss)
    # w.grad now holds d(loss)/d(w)

Whether an input participates in the backward pass is decided when the op is
recorded, not when backward runs. Flipping requires_grad to False around a
forward pass therefore freezes those parameters for any later backward of
that tape (how the trainer freezes discriminators while the generator loss
flows to the students).
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

Array = np.ndarray

_TAPES: list["Tape"] = []


class Tensor:
    """Dense 2-D float64 matrix, optionally tracked for gradients.

    grad stays None until a backward pass deposits into it; treat None as
    zero. Non-finite values in forward results are an error state; they are
    checked where cheap (scalar losses, the trainer's per-epoch guard), not
    after every op.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D (scalars auto-promote); got shape {arr.shape}")
        self.data = arr
        self.grad: Array | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape  # type: ignore[return-value]

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        """Same values, cut from the tape. Shares the underlying buffer."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"


class _Record:
    __slots__ = ("output", "inputs", "needs", "vjp")

    def __init__(self, output: Tensor, inputs: tuple[Tensor, ...],
                 needs: tuple[bool, ...], vjp: Callable[[Array], tuple[Array | None, ...]]):
        self.output = output
        self.inputs = inputs
        self.needs = needs
        self.vjp = vjp


class Tape:
    """Ordered op record for one forward/backward round trip.

    Entering pushes this tape as the active recorder (innermost wins when
    nested). Records are appended in execution order, so the list is already
    topologically sorted and backward is a single reverse sweep. Tapes are
    single-threaded and meant to be short-lived: one per update step.
    """

    def __init__(self) -> None:
        self._records: list[_Record] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if not _TAPES or _TAPES[-1] is not self:
            raise RuntimeError("tape stack corrupted: exiting a tape that is not innermost")
        _TAPES.pop()

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, root: Tensor) -> None:
        """Accumulate d(root)/d(t) into t.grad for every tensor recorded as
        requiring gradients. Additive: a second call doubles the grads."""
        if root.data.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {root.data.shape}")
        grads: dict[int, Array] = {id(root): np.ones((1, 1))}
        holders: dict[int, Tensor] = {id(root): root}
        for rec in reversed(self._records):
            g = grads.get(id(rec.output))
            if g is None:
                continue  # not on the path from root
            for t, need, gi in zip(rec.inputs, rec.needs, rec.vjp(g)):
                if not need or gi is None:
                    continue
                k = id(t)
                if k in grads:
                    grads[k] = grads[k] + gi
                else:
                    grads[k] = gi
                    holders[k] = t
        for k, g in grads.items():
            t = holders[k]
            if t.requires_grad:
                t.grad = np.array(g) if t.grad is None else t.grad + g


def record_op(inputs: Sequence[Tensor], out_data: Array,
              vjp: Callable[[Array], tuple[Array | None, ...]]) -> Tensor:
    """Create an op output, recording it on the active tape when any input
    requires grad. vjp maps the upstream gradient to per-input gradients
    (None for inputs that need none); which inputs need gradients is
    snapshotted here, at record time."""
    needs = tuple(t.requires_grad for t in inputs)
    tape = _TAPES[-1] if _TAPES else None
    out = Tensor(out_data, requires_grad=tape is not None and any(needs))
    if out.requires_grad:
        tape._records.append(_Record(out, tuple(inputs), needs, vjp))
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.data.shape} x {b.data.shape}")
    na, nb = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def vjp(g: Array):
        return (g @ bd.T if na else None, ad.T @ g if nb else None)

    return record_op((a, b), ad @ bd, vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; b may be a (1, n) row vector broadcast over a's rows
    (the bias case)."""
    bcast = b.data.shape != a.data.shape
    if bcast and not (b.data.shape == (1, a.data.shape[1])):
        raise ValueError(f"add shape mismatch: {a.data.shape} + {b.data.shape}")
    na, nb = a.requires_grad, b.requires_grad

    def vjp(g: Array):
        gb = None
        if nb:
            gb = g.sum(axis=0, keepdims=True) if bcast else g
        return (g if na else None, gb)

    return record_op((a, b), a.data + b.data, vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch: {a.data.shape} - {b.data.shape}")
    na, nb = a.requires_grad, b.requires_grad

    def vjp(g: Array):
        return (g if na else None, -g if nb else None)

    return record_op((a, b), a.data - b.data, vjp)


def neg(a: Tensor) -> Tensor:
    return record_op((a,), -a.data, lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return record_op((a,), a.data * c, lambda g: (g * c,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product, same shapes. Same tensor twice is fine: the
    backward sweep accumulates both slots."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.data.shape} * {b.data.shape}")
    na, nb = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def vjp(g: Array):
        return (g * bd if na else None, g * ad if nb else None)

    return record_op((a, b), ad * bd, vjp)


def square(a: Tensor) -> Tensor:
    ad = a.data
    return record_op((a,), ad * ad, lambda g: (2.0 * ad * g,))


def hconcat(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("hconcat of nothing")
    rows = parts[0].data.shape[0]
    if any(p.data.shape[0] != rows for p in parts):
        raise ValueError("hconcat row mismatch")
    widths = [p.data.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]
    needs = [p.requires_grad for p in parts]

    def vjp(g: Array):
        pieces = np.hsplit(g, splits)
        return tuple(piece if need else None for piece, need in zip(pieces, needs))

    return record_op(tuple(parts), np.concatenate([p.data for p in parts], axis=1), vjp)


def gather_rows(a: Tensor, index: Array) -> Tensor:
    """Rows of a selected by an integer index array; duplicates allowed
    (backward scatter-adds)."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ValueError("gather_rows index must be 1-D")
    shape = a.data.shape

    def vjp(g: Array):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return record_op((a,), a.data[idx], vjp)


# ---------------------------------------------------------------------------
# activations and pointwise maps
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    # gradient at the kink is the left limit: 0
    mask = a.data > 0

    def vjp(g: Array):
        return (g * mask,)

    return record_op((a,), np.where(mask, a.data, 0.0), vjp)


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    # gradient at the kink is the left limit: slope
    mask = a.data > 0

    def vjp(g: Array):
        return (g * np.where(mask, 1.0, slope),)

    return record_op((a,), np.where(mask, a.data, slope * a.data), vjp)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    x = a.data
    pos = x > 0
    out = x.copy()
    expm = alpha * np.expm1(x[~pos])
    out[~pos] = expm
    dneg = expm + alpha  # alpha * exp(x) on the negative branch

    def vjp(g: Array):
        d = np.ones_like(x)
        d[~pos] = dneg
        return (g * d,)

    return record_op((a,), out, vjp)


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return record_op((a,), s, lambda g: (g * s * (1.0 - s),))


def log_sigmoid(a: Tensor) -> Tensor:
    """log(sigmoid(x)) computed from raw logits; never forms the probability,
    so it is finite for any finite input."""
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    d = _sigmoid(-x)  # 1 - sigmoid(x)

    def vjp(g: Array):
        return (g * d,)

    return record_op((a,), out, vjp)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return record_op((a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    x = a.data
    if np.any(x <= 0):
        raise ValueError("log of non-positive value")
    return record_op((a,), np.log(x), lambda g: (g / x,))


def clamp_min(a: Tensor, floor: float) -> Tensor:
    # left-limit convention at the boundary: entries at the floor get 0 grad
    x = a.data
    mask = x > floor

    def vjp(g: Array):
        return (g * mask,)

    return record_op((a,), np.maximum(x, floor), vjp)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with per-row max subtraction; rows sum to 1."""
    x = a.data
    e = np.exp(x - x.max(axis=1, keepdims=True))
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g: Array):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return record_op((a,), s, vjp)


def log_softmax_rows(a: Tensor) -> Tensor:
    x = a.data
    xm = x - x.max(axis=1, keepdims=True)
    out = xm - np.log(np.exp(xm).sum(axis=1, keepdims=True))
    p = np.exp(out)

    def vjp(g: Array):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return record_op((a,), out, vjp)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def row_sum(a: Tensor) -> Tensor:
    shape = a.data.shape

    def vjp(g: Array):
        return (np.broadcast_to(g, shape),)

    return record_op((a,), a.data.sum(axis=1, keepdims=True), vjp)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape

    def vjp(g: Array):
        return (np.broadcast_to(g, shape),)

    return record_op((a,), a.data.sum().reshape(1, 1), vjp)


def mean_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    n = a.data.size

    def vjp(g: Array):
        return (np.broadcast_to(g / n, shape),)

    return record_op((a,), a.data.mean().reshape(1, 1), vjp)


def masked_mean(a: Tensor, mask: Array) -> Tensor:
    """Mean of the entries in the rows selected by a boolean mask. Backward
    distributes 1/(selected rows * cols) over those rows, 0 elsewhere."""
    m = np.asarray(mask, dtype=bool)
    if m.shape != (a.data.shape[0],):
        raise ValueError(f"mask shape {m.shape} does not match {a.data.shape[0]} rows")
    count = int(m.sum())
    if count == 0:
        raise ValueError("empty mask")
    denom = count * a.data.shape[1]
    shape = a.data.shape

    def vjp(g: Array):
        out = np.zeros(shape)
        out[m] = g[0, 0] / denom
        return (out,)

    return record_op((a,), (a.data[m].sum() / denom).reshape(1, 1), vjp)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def dropout(a: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Zero entries with probability p and scale survivors by 1/(1-p) in
    training mode; identity in eval mode. Draws from the caller's stream, so
    per-model streams diverge reproducibly."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    mask = (rng.random(a.data.shape) >= p) * (1.0 / (1.0 - p))

    def vjp(g: Array):
        return (g * mask,)

    return record_op((a,), a.data * mask, vjp)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor],
                      h: float = 1e-5, samples: int = 100,
                      rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    f rebuilds the scalar loss from scratch on each call and must be
    deterministic (dropout off, any rng pinned). Up to `samples` coordinates
    per parameter tensor are probed. The error for one coordinate is
    |analytic - cd| / max(|analytic|, |cd|, 1e-8).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    for p in params:
        p.grad = None
    with Tape() as tape:
        tape.backward(f())
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1)
        take = min(samples, flat.size)
        for i in rng.choice(flat.size, size=take, replace=False):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            cd = (fp - fm) / (2.0 * h)
            an = gflat[i]
            worst = max(worst, abs(an - cd) / max(abs(an), abs(cd), 1e-8))
    return worst
