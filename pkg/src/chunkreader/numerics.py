"""Dense float64 tensors with reverse-mode automatic differentiation.

Differentiation is organized around an explicit Tape. While a tape is
active, every primitive op appends a backward closure to it; replaying the
tape in reverse propagates gradients, visiting each node exactly once.
With no active tape the same ops are plain numpy computations, which is
how inference runs. Gradient accumulation order is fixed by tape order,
so identical inputs give bit-identical results.

A tape and the tensors recorded on it belong to a single worker. Distinct
tapes are independent and may run in parallel.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "SeededRng",
    "Tensor",
    "Tape",
    "tensor",
    "parameter",
    "zeros",
    "record",
    "matmul",
    "add",
    "mul",
    "elementwise",
    "sigmoid",
    "tanh",
    "activation",
    "concat",
    "softmax",
    "dropout",
    "scale",
    "total",
    "log",
    "sqrt",
    "div",
    "row",
    "pick",
    "gather_rows",
    "stack_rows",
    "transpose",
    "broadcast_scalar",
    "finite_difference_errors",
    "finite_difference_check",
]


class ShapeError(ValueError):
    """Raised when operand shapes do not conform."""


class SeededRng:
    """Reproducible random stream: same seed gives the same draws, bit-exact."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int):
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]


class Tensor:
    """A float64 array plus an optional same-shape gradient.

    Tensors are value holders; the module-level ops do the math and record
    backward closures on the active tape. `grad` stays None until a
    backward pass touches the tensor.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.data = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(values) -> Tensor:
    """Constant tensor: participates in math but never receives gradients."""
    return Tensor(values)


def parameter(values) -> Tensor:
    """Leaf tensor that accumulates gradients during backward passes."""
    return Tensor(values, requires_grad=True)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


_tape_stack: list["Tape"] = []


class Tape:
    """Ordered record of primitive ops, replayed once in reverse by backward().

    Nodes are appended in execution order, so the record is topological by
    construction: every node's inputs precede it.
    """

    def __init__(self):
        # (output, inputs, backward closure), in execution order
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self._replayed = False

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        popped = _tape_stack.pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted")
        return False

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss) = 1 and sweep the tape in reverse.

        Gradients accumulate additively, so a tensor used twice receives
        the sum of both contributions. A tape can be replayed only once.
        """
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
        if self._replayed:
            raise RuntimeError("tape has already been replayed")
        self._replayed = True
        loss.grad = np.ones_like(loss.data)
        for out, _inputs, backward_fn in reversed(self.nodes):
            if out.grad is None:
                continue  # no path from this node to the loss
            backward_fn(out.grad)


def _active_tape() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


def record(out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """Append one primitive to the active tape.

    Recording happens only when a tape is active and some input requires a
    gradient; otherwise the op is forward-only. Custom ops can reuse this
    entry point together with accumulate().
    """
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.nodes.append((out, tuple(inputs), backward_fn))
    return out


def accumulate(t: Tensor, g: np.ndarray) -> None:
    """Add a gradient contribution to a tensor, allocating on first touch."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for 1-D/2-D operands, with numpy's promotion rules.

    Backward: dA = dC B^T and dB = A^T dC, specialized per rank so that
    vector operands keep their 1-D shape.
    """
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeError(f"matmul supports 1-D/2-D operands, got {ad.shape} x {bd.shape}")
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: inner dimensions disagree: {ad.shape} x {bd.shape}")
    out = Tensor(np.matmul(ad, bd))

    def backward_fn(g):
        if ad.ndim == 2 and bd.ndim == 2:
            accumulate(a, g @ bd.T)
            accumulate(b, ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            accumulate(a, np.outer(g, bd))
            accumulate(b, ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            accumulate(a, bd @ g)
            accumulate(b, np.outer(ad, g))
        else:  # dot product, scalar upstream gradient
            accumulate(a, g * bd)
            accumulate(b, g * ad)

    return record(out, (a, b), backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add: shapes disagree: {a.data.shape} vs {b.data.shape}")
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        accumulate(a, g)
        accumulate(b, g)

    return record(out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; backward uses the saved operands."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul: shapes disagree: {a.data.shape} vs {b.data.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad * bd)

    def backward_fn(g):
        accumulate(a, g * bd)
        accumulate(b, g * ad)

    return record(out, (a, b), backward_fn)


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """Same-shape pointwise op, kind in {"add", "mul"}."""
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise kind: {kind!r}")


def sigmoid(a: Tensor) -> Tensor:
    """Logistic function, computed without overflow for large |x|."""
    x = a.data
    positive = x >= 0
    e = np.exp(np.where(positive, -x, x))  # exponent always <= 0
    y = np.where(positive, 1.0 / (1.0 + e), e / (1.0 + e))
    out = Tensor(y)

    def backward_fn(g):
        accumulate(a, g * y * (1.0 - y))

    return record(out, (a,), backward_fn)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    out = Tensor(y)

    def backward_fn(g):
        accumulate(a, g * (1.0 - y * y))

    return record(out, (a,), backward_fn)


def activation(a: Tensor, kind: str) -> Tensor:
    """Pointwise nonlinearity, kind in {"sigmoid", "tanh"}."""
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "tanh":
        return tanh(a)
    raise ValueError(f"unknown activation kind: {kind!r}")


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the last axis; backward splits the gradient."""
    ad, bd = a.data, b.data
    if ad.ndim != bd.ndim or ad.shape[:-1] != bd.shape[:-1]:
        raise ShapeError(f"concat: shapes disagree off the last axis: {ad.shape} vs {bd.shape}")
    out = Tensor(np.concatenate([ad, bd], axis=-1))
    split = ad.shape[-1]

    def backward_fn(g):
        accumulate(a, g[..., :split])
        accumulate(b, g[..., split:])

    return record(out, (a, b), backward_fn)


def softmax(scores: Tensor) -> Tensor:
    """Stable softmax over a non-empty vector (max-subtracted exponentials)."""
    x = scores.data
    if x.ndim != 1 or x.size == 0:
        raise ShapeError(f"softmax needs a non-empty vector, got shape {x.shape}")
    e = np.exp(x - x.max())
    y = e / e.sum()
    out = Tensor(y)

    def backward_fn(g):
        accumulate(scores, y * (g - np.dot(g, y)))

    return record(out, (scores,), backward_fn)


def dropout(a: Tensor, rate: float, rng: SeededRng, training: bool) -> Tensor:
    """Inverted dropout: de-activate with probability `rate` during training,
    scale survivors by 1/(1-rate), and act as the identity at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = np.asarray(rng.random(a.data.shape)) >= rate
    mask = keep / (1.0 - rate)
    out = Tensor(a.data * mask)

    def backward_fn(g):
        accumulate(a, g * mask)

    return record(out, (a,), backward_fn)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant."""
    c = float(c)
    out = Tensor(a.data * c)

    def backward_fn(g):
        accumulate(a, g * c)

    return record(out, (a,), backward_fn)


def total(a: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    out = Tensor(a.data.sum())

    def backward_fn(g):
        accumulate(a, np.full(a.data.shape, float(g)))

    return record(out, (a,), backward_fn)


def log(a: Tensor) -> Tensor:
    out = Tensor(np.log(a.data))

    def backward_fn(g):
        accumulate(a, g / a.data)

    return record(out, (a,), backward_fn)


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)
    out = Tensor(y)

    def backward_fn(g):
        accumulate(a, g * 0.5 / y)

    return record(out, (a,), backward_fn)


def div(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise quotient of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ShapeError(f"div: shapes disagree: {a.data.shape} vs {b.data.shape}")
    ad, bd = a.data, b.data
    out = Tensor(ad / bd)

    def backward_fn(g):
        accumulate(a, g / bd)
        accumulate(b, -g * ad / (bd * bd))

    return record(out, (a, b), backward_fn)


def row(a: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a vector; backward scatters into that row."""
    if a.data.ndim != 2:
        raise ShapeError(f"row expects a matrix, got shape {a.data.shape}")
    if not 0 <= i < a.data.shape[0]:
        raise IndexError(f"row {i} out of range for shape {a.data.shape}")
    out = Tensor(a.data[i])

    def backward_fn(g):
        buf = np.zeros_like(a.data)
        buf[i] = g
        accumulate(a, buf)

    return record(out, (a,), backward_fn)


def pick(a: Tensor, i: int) -> Tensor:
    """Element i of a vector as a scalar tensor."""
    if a.data.ndim != 1:
        raise ShapeError(f"pick expects a vector, got shape {a.data.shape}")
    if not 0 <= i < a.data.shape[0]:
        raise IndexError(f"index {i} out of range for shape {a.data.shape}")
    out = Tensor(a.data[i])

    def backward_fn(g):
        buf = np.zeros_like(a.data)
        buf[i] = g
        accumulate(a, buf)

    return record(out, (a,), backward_fn)


def gather_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Select matrix rows by index (repeats allowed); backward scatter-adds,
    so rows selected twice receive both gradient contributions."""
    if a.data.ndim != 2:
        raise ShapeError(f"gather_rows expects a matrix, got shape {a.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(f"gather_rows indices out of range for shape {a.data.shape}")
    out = Tensor(a.data[idx])

    def backward_fn(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, idx, g)
        accumulate(a, buf)

    return record(out, (a,), backward_fn)


def stack_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix; backward hands row i of the
    incoming gradient to input i."""
    if not rows:
        raise ShapeError("stack_rows needs at least one row")
    for r in rows:
        if r.data.ndim != 1 or r.data.shape != rows[0].data.shape:
            raise ShapeError("stack_rows needs equal-length vectors")
    rows = tuple(rows)
    out = Tensor(np.stack([r.data for r in rows]))

    def backward_fn(g):
        for i, r in enumerate(rows):
            accumulate(r, g[i])

    return record(out, rows, backward_fn)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {a.data.shape}")
    out = Tensor(a.data.T)

    def backward_fn(g):
        accumulate(a, g.T)

    return record(out, (a,), backward_fn)


def broadcast_scalar(a: Tensor, n: int) -> Tensor:
    """Repeat a scalar into a length-n vector; backward sums the gradient."""
    if a.data.size != 1:
        raise ShapeError(f"broadcast_scalar expects a scalar, got shape {a.data.shape}")
    out = Tensor(np.full(n, a.data.reshape(())))

    def backward_fn(g):
        accumulate(a, np.asarray(g.sum()).reshape(a.data.shape))

    return record(out, (a,), backward_fn)


# ---------------------------------------------------------------------------
# gradient checking


def finite_difference_errors(
    f: Callable[[], Tensor], params: Sequence[Tensor], step: float
) -> list[float]:
    """Per-parameter max relative error between taped and central-difference
    gradients of the scalar function f.

    f() must rebuild its graph from the current parameter values on every
    call and be deterministic. Relative error per coordinate is
    |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    errors = []
    for p, grads in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = grads.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            f_plus = float(f().data)
            flat[i] = saved - step
            f_minus = float(f().data)
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = gflat[i]
            err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            if err > worst:
                worst = err
        errors.append(worst)
    return errors


def finite_difference_check(
    f: Callable[[], Tensor], params: Sequence[Tensor], step: float
) -> float:
    """Max over all parameter coordinates of the relative error between
    taped gradients and central finite differences."""
    errors = finite_difference_errors(f, params, step)
    return max(errors) if errors else 0.0
