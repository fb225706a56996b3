"""Reverse-mode differentiation over the tensor-core operations.

A Tensor wraps an ndarray and remembers how it was produced; backward()
walks the recorded graph in reverse topological order, accumulating
gradients by addition wherever a value fans out. Recording is skipped
inside no_grad() so inference pays nothing for the tape.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import kernels, tensor_ops
from .errors import ContractError, DimosrError, ShapeError

_grad_enabled = True


def grad_enabled():
    return _grad_enabled


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A value slot in the computation graph."""

    __slots__ = ("data", "grad", "name", "_parents", "_vjp")

    def __init__(self, data, parents=(), vjp=None, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.name = name
        self._parents = tuple(parents)
        self._vjp = vjp

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, name={self.name})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__


def node(data, parents, vjp):
    """Create a graph node; drops the record when gradients are disabled."""
    if _grad_enabled:
        return Tensor(data, parents, vjp)
    return Tensor(data)


def _same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op} operands must share a shape, got {a.data.shape} vs {b.data.shape}")


def add(a, b):
    _same_shape(a, b, "add")
    return node(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    _same_shape(a, b, "sub")
    return node(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return node(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a, c):
    c = float(c)
    return node(a.data * np.asarray(c, dtype=a.data.dtype), (a,), lambda g: (g * c,))


def absolute(a):
    sgn = np.sign(a.data)
    return node(np.abs(a.data), (a,), lambda g: (g * sgn,))


def mean(a):
    inv = 1.0 / a.data.size
    dt = a.data.dtype
    shape = a.data.shape
    return node(
        np.asarray(a.data.mean(), dtype=dt),
        (a,),
        lambda g: (np.full(shape, g * inv, dtype=dt),),
    )


def total(a):
    dt = a.data.dtype
    shape = a.data.shape
    return node(
        np.asarray(a.data.sum(), dtype=dt),
        (a,),
        lambda g: (np.full(shape, g, dtype=dt),),
    )


def sigmoid(a):
    s = tensor_ops.sigmoid(a.data)
    return node(s, (a,), lambda g: (g * s * (1.0 - s),))


def silu(a):
    s = tensor_ops.sigmoid(a.data)
    x = a.data
    return node(x * s, (a,), lambda g: (g * (s * (1.0 + x * (1.0 - s))),))


def conv2d(x, weight, bias=None, dilation=1, padding=0):
    """Dilated cross-correlation; differentiates w.r.t. input, kernel, bias."""
    params = tensor_ops.Conv2dParams(
        weight=weight.data,
        bias=None if bias is None else bias.data,
        dilation=dilation,
        padding=padding,
    )
    out = tensor_ops.conv2d(x.data, params)
    xp = tensor_ops.pad_zeros(np.ascontiguousarray(x.data), padding)
    wd = np.ascontiguousarray(weight.data)
    k = wd.shape[2]
    h, w = x.data.shape[2], x.data.shape[3]

    if bias is None:

        def vjp(g):
            g = np.ascontiguousarray(g)
            gxp = kernels.conv2d_grad_input(g, wd, xp.shape[2], xp.shape[3], dilation)
            gx = gxp[:, :, padding : padding + h, padding : padding + w]
            gw = kernels.conv2d_grad_weight(g, xp, k, dilation)
            return np.ascontiguousarray(gx), gw

        return node(out, (x, weight), vjp)

    def vjp_b(g):
        g = np.ascontiguousarray(g)
        gxp = kernels.conv2d_grad_input(g, wd, xp.shape[2], xp.shape[3], dilation)
        gx = gxp[:, :, padding : padding + h, padding : padding + w]
        gw = kernels.conv2d_grad_weight(g, xp, k, dilation)
        gb = g.sum(axis=(0, 2, 3))
        return np.ascontiguousarray(gx), gw, gb

    return node(out, (x, weight, bias), vjp_b)


def layer_norm(x, gain, shift, eps=tensor_ops.LAYER_NORM_EPS):
    """Channel-axis normalization; backward uses the closed-form expression
    rather than composed primitive rules, for numerical stability."""
    xd = x.data
    c = xd.shape[1]
    if gain.data.shape != (c,) or shift.data.shape != (c,):
        raise ShapeError(f"gain/shift must have shape ({c},), got "
                         f"{gain.data.shape} and {shift.data.shape}")
    mu = xd.mean(axis=1, keepdims=True)
    xc = xd - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xhat = xc * inv
    gd = gain.data
    out = gd[None, :, None, None] * xhat + shift.data[None, :, None, None]

    def vjp(g):
        gg = g * gd[None, :, None, None]
        m1 = gg.mean(axis=1, keepdims=True)
        m2 = (gg * xhat).mean(axis=1, keepdims=True)
        gx = (gg - m1 - xhat * m2) * inv
        ggain = (g * xhat).sum(axis=(0, 2, 3))
        gshift = g.sum(axis=(0, 2, 3))
        return gx, ggain, gshift

    return node(out, (x, gain, shift), vjp)


def pixel_shuffle(x, r):
    out = tensor_ops.pixel_shuffle(x.data, r)
    return node(out, (x,), lambda g: (tensor_ops.pixel_unshuffle(g, r),))


def concat_channels(parts):
    out = tensor_ops.concat_channels([p.data for p in parts])
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(
            np.ascontiguousarray(g[:, offsets[i] : offsets[i + 1]]) for i in range(len(widths))
        )

    return node(out, tuple(parts), vjp)


def chunk_channels(x, k):
    pieces = tensor_ops.chunk_channels(x.data, k)
    step = x.data.shape[1] // k
    shape = x.data.shape
    dt = x.data.dtype
    outs = []
    for i, piece in enumerate(pieces):
        lo = i * step

        def vjp(g, lo=lo):
            gx = np.zeros(shape, dtype=dt)
            gx[:, lo : lo + step] = g
            return (gx,)

        outs.append(node(piece, (x,), vjp))
    return outs


def backward(loss):
    """Propagate d(loss)/d(node) to every node reachable from the loss.

    The loss must be scalar; its own gradient is seeded with 1. Gradients
    land on .grad and add up where a node feeds several consumers.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor loss")
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")

    order = []
    state = {}  # id -> 1 while on stack, 2 when finished
    stack = [(loss, False)]
    while stack:
        t, processed = stack.pop()
        tid = id(t)
        if processed:
            state[tid] = 2
            order.append(t)
            continue
        s = state.get(tid)
        if s == 2:
            continue
        if s == 1:
            raise DimosrError("cycle detected in computation graph")
        state[tid] = 1
        stack.append((t, True))
        for p in t._parents:
            if state.get(id(p)) != 2:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for t in reversed(order):
        if t._vjp is None or t.grad is None:
            continue
        grads = t._vjp(t.grad)
        for parent, g in zip(t._parents, grads):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


class GradientTape:
    """Registry of named trainable tensors plus the backward entry point."""

    def __init__(self):
        self.parameters = {}

    def parameter(self, name, array):
        if name in self.parameters:
            raise ContractError(f"parameter {name!r} registered twice")
        t = Tensor(array, name=name)
        self.parameters[name] = t
        return t

    def gradients(self, loss):
        """Run backward and return d(loss)/d(param) for every registered
        parameter; parameters the loss never touched get zero gradients."""
        backward(loss)
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for name, t in self.parameters.items()
        }


@dataclass
class GradCheckReport:
    """Outcome of a finite-difference comparison.

    Elements whose numeric derivative is unstable across step sizes are
    counted as degenerate and excluded from the pass/fail verdict.
    """

    passed: bool
    max_rel_err: float
    tol: float
    n_checked: int
    n_degenerate: int
    worst_index: tuple = ()
    rel_err: np.ndarray = field(default=None, repr=False)

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        extra = f", degenerate={self.n_degenerate}" if self.n_degenerate else ""
        return (f"{flag}: max rel err {self.max_rel_err:.3e} over {self.n_checked} "
                f"elements (tol {self.tol:.1e}{extra})")


def _rel_err(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


def grad_check(f, x, tol=1e-4, step=1e-4, stability_tol=1e-2, indices=None):
    """Compare analytic gradients of a scalar function against central
    finite differences in float64.

    f maps a Tensor to a scalar Tensor. Each element is probed at three
    step sizes (h, h/2, h/4); probes whose estimates fail to converge
    quadratically sit on a numerical singularity (zero-variance
    normalization, an |.|-kink crossing the probe window) and are flagged
    degenerate rather than failed. Restrict the probe to `indices` to
    spot-check large inputs.
    """
    x64 = np.asarray(x, dtype=np.float64)
    xt = Tensor(x64.copy())
    loss = f(xt)
    if loss.data.size != 1:
        raise ContractError("grad_check requires a scalar-valued function")
    backward(loss)
    ga = xt.grad if xt.grad is not None else np.zeros_like(x64)

    def eval_at(arr):
        with no_grad():
            return float(f(Tensor(arr)).data)

    if indices is None:
        index_list = list(np.ndindex(*x64.shape)) if x64.ndim else [()]
    else:
        index_list = list(indices)

    rel = np.zeros(len(index_list))
    degenerate = np.zeros(len(index_list), dtype=bool)
    work = x64.copy()
    for j, idx in enumerate(index_list):
        orig = work[idx]
        estimates = []
        for h in (step, step / 2.0, step / 4.0):
            work[idx] = orig + h
            f_plus = eval_at(work)
            work[idx] = orig - h
            f_minus = eval_at(work)
            estimates.append((f_plus - f_minus) / (2.0 * h))
        work[idx] = orig
        g1, g2, g4 = estimates
        d1 = abs(g1 - g2)
        d2 = abs(g2 - g4)
        # quadratic convergence halves the step -> quarters the defect
        unstable = d1 > stability_tol * max(1.0, abs(g1), abs(g2))
        diverging = d2 > 0.4 * d1 + 1e-9 * max(1.0, abs(g4))
        if unstable or diverging:
            degenerate[j] = True
            continue
        rel[j] = _rel_err(float(ga[idx]), g4)

    checked = ~degenerate
    max_err = float(rel[checked].max()) if checked.any() else 0.0
    worst = index_list[int(np.argmax(np.where(checked, rel, -1.0)))] if checked.any() else ()
    return GradCheckReport(
        passed=bool(max_err <= tol),
        max_rel_err=max_err,
        tol=tol,
        n_checked=int(checked.sum()),
        n_degenerate=int(degenerate.sum()),
        worst_index=worst,
        rel_err=rel,
    )
