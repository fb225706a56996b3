"""Pure-numpy convolution kernels (BLAS-backed shift-and-accumulate)."""

import numpy as np


def conv2d_forward(xp, weight, dilation):
    """Dilated cross-correlation on a pre-padded input.

    xp: (N, Ci, Hp, Wp), weight: (Co, Ci, K, K). Returns (N, Co, Ho, Wo)
    with Ho = Hp - dilation*(K-1) and likewise for Wo.
    """
    n, _, hp, wp = xp.shape
    co = weight.shape[0]
    k = weight.shape[2]
    ho = hp - dilation * (k - 1)
    wo = wp - dilation * (k - 1)
    out = np.zeros((co, n, ho, wo), dtype=xp.dtype)
    for kh in range(k):
        for kw in range(k):
            view = xp[:, :, kh * dilation : kh * dilation + ho, kw * dilation : kw * dilation + wo]
            out += np.tensordot(weight[:, :, kh, kw], view, axes=([1], [1]))
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv2d_grad_input(gout, weight, hp, wp, dilation):
    """Gradient w.r.t. the padded input; returns (N, Ci, hp, wp)."""
    n = gout.shape[0]
    ci = weight.shape[1]
    k = weight.shape[2]
    ho, wo = gout.shape[2], gout.shape[3]
    gxp = np.zeros((n, ci, hp, wp), dtype=gout.dtype)
    for kh in range(k):
        for kw in range(k):
            # (Ci, N, Ho, Wo) contribution scattered onto the padded grid
            contrib = np.tensordot(weight[:, :, kh, kw], gout, axes=([0], [1]))
            gxp[:, :, kh * dilation : kh * dilation + ho, kw * dilation : kw * dilation + wo] += (
                contrib.transpose(1, 0, 2, 3)
            )
    return gxp


def conv2d_grad_weight(gout, xp, k, dilation):
    """Gradient w.r.t. the kernel; returns (Co, Ci, k, k)."""
    co = gout.shape[1]
    ci = xp.shape[1]
    ho, wo = gout.shape[2], gout.shape[3]
    gw = np.zeros((co, ci, k, k), dtype=gout.dtype)
    for kh in range(k):
        for kw in range(k):
            view = xp[:, :, kh * dilation : kh * dilation + ho, kw * dilation : kw * dilation + wo]
            gw[:, :, kh, kw] = np.tensordot(gout, view, axes=([0, 2, 3], [0, 2, 3]))
    return gw
