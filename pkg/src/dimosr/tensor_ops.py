"""Forward numerical kernels on rank-4 (N, C, H, W) float arrays.

Every function is a pure function of its inputs and deterministic across
invocations. float32 is the working precision; float64 is supported for
gradient checking.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ShapeError

LAYER_NORM_EPS = 1e-6


def check_nchw(x, name="input"):
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ShapeError(f"{name} must be a rank-4 (N, C, H, W) array, got "
                         f"{getattr(x, 'shape', type(x))}")


@dataclass(frozen=True)
class Conv2dParams:
    """Weights of a stride-1 dilated convolution.

    weight: (C_out, C_in, kH, kW) with kH == kW in {1, 3}; bias: (C_out,) or
    None; spatial-size-preserving 3x3 convs use padding == dilation.
    """

    weight: np.ndarray
    bias: np.ndarray | None = None
    dilation: int = 1
    padding: int = 0

    def __post_init__(self):
        w = self.weight
        if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] not in (1, 3):
            raise ShapeError(f"conv weight must be (C_out, C_in, k, k) with k in {{1, 3}}, "
                             f"got {w.shape}")
        if self.bias is not None and self.bias.shape != (w.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match C_out={w.shape[0]}")
        if self.dilation < 1:
            raise ShapeError(f"dilation must be >= 1, got {self.dilation}")
        if self.padding < 0:
            raise ShapeError(f"padding must be >= 0, got {self.padding}")


def pad_zeros(x, padding):
    if padding == 0:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xp[:, :, padding : padding + h, padding : padding + w] = x
    return xp


def conv2d(x, params: Conv2dParams):
    """Dilated cross-correlation; output (N, C_out, H_out, W_out)."""
    check_nchw(x)
    w = params.weight
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels (axis 1) but kernel expects "
                         f"{w.shape[1]} (weight axis 1)")
    k = w.shape[2]
    span = params.dilation * (k - 1)
    h_out = x.shape[2] + 2 * params.padding - span
    w_out = x.shape[3] + 2 * params.padding - span
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"kernel span {span} exceeds padded input "
                         f"{x.shape[2] + 2 * params.padding}x{x.shape[3] + 2 * params.padding}")
    xp = pad_zeros(np.ascontiguousarray(x), params.padding)
    out = kernels.conv2d_forward(xp, np.ascontiguousarray(w), params.dilation)
    if params.bias is not None:
        out += params.bias.astype(out.dtype)[None, :, None, None]
    return out


def pixel_shuffle(x, r):
    """Rearrange (N, C*r^2, H, W) into (N, C, H*r, W*r) sub-pixel order."""
    check_nchw(x)
    n, c, h, w = x.shape
    if r < 1:
        raise ShapeError(f"upscale factor must be >= 1, got {r}")
    if c % (r * r) != 0:
        raise ShapeError(f"channel count {c} (axis 1) not divisible by r^2 = {r * r}")
    if r == 1:
        return x.copy()
    c_out = c // (r * r)
    y = x.reshape(n, c_out, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y).reshape(n, c_out, h * r, w * r)


def pixel_unshuffle(x, r):
    """Inverse of pixel_shuffle; used by its gradient."""
    check_nchw(x)
    n, c, h, w = x.shape
    if h % r != 0 or w % r != 0:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by r = {r}")
    if r == 1:
        return x.copy()
    y = x.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(y).reshape(n, c * r * r, h // r, w // r)


def layer_norm(x, gain, shift, eps=LAYER_NORM_EPS):
    """Normalize each (n, h, w) site's channel vector to zero mean / unit
    variance, then apply a per-channel affine transform."""
    check_nchw(x)
    c = x.shape[1]
    if gain.shape != (c,) or shift.shape != (c,):
        raise ShapeError(f"gain/shift must have shape ({c},) to match axis 1, "
                         f"got {gain.shape} and {shift.shape}")
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = xc * inv
    return gain[None, :, None, None] * xhat + shift[None, :, None, None]


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x):
    return x * sigmoid(x)


def concat_channels(tensors):
    """Concatenate along the channel axis; all inputs share N, H, W."""
    if not tensors:
        raise ShapeError("concat_channels needs at least one tensor")
    first = tensors[0]
    check_nchw(first)
    for t in tensors[1:]:
        check_nchw(t)
        if (t.shape[0], t.shape[2:]) != (first.shape[0], first.shape[2:]):
            raise ShapeError(f"concat inputs disagree outside the channel axis: "
                             f"{first.shape} vs {t.shape}")
    return np.concatenate(tensors, axis=1)


def chunk_channels(x, k):
    """Split into k equal channel blocks covering [0, C) in order."""
    check_nchw(x)
    c = x.shape[1]
    if k < 1 or c % k != 0:
        raise ShapeError(f"channel count {c} (axis 1) not divisible into {k} chunks")
    step = c // k
    return [np.ascontiguousarray(x[:, i * step : (i + 1) * step]) for i in range(k)]
