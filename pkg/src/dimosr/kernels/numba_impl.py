"""Numba-compiled convolution kernels; loop order keeps the innermost axis contiguous."""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _conv2d_forward(xp, weight, out, dilation):
    n, ci, _, _ = xp.shape
    co = weight.shape[0]
    k = weight.shape[2]
    ho = out.shape[2]
    wo = out.shape[3]
    for b in range(n):
        for o in range(co):
            for h in range(ho):
                orow = out[b, o, h]
                for c in range(ci):
                    for kh in range(k):
                        xrow = xp[b, c, h + kh * dilation]
                        for kw in range(k):
                            wv = weight[o, c, kh, kw]
                            off = kw * dilation
                            for w in range(wo):
                                orow[w] += wv * xrow[w + off]


@njit(cache=True, fastmath=True)
def _conv2d_grad_input(gout, weight, gxp, dilation):
    n, co, ho, wo = gout.shape
    ci = weight.shape[1]
    k = weight.shape[2]
    for b in range(n):
        for o in range(co):
            for h in range(ho):
                grow = gout[b, o, h]
                for c in range(ci):
                    for kh in range(k):
                        gxrow = gxp[b, c, h + kh * dilation]
                        for kw in range(k):
                            wv = weight[o, c, kh, kw]
                            off = kw * dilation
                            for w in range(wo):
                                gxrow[w + off] += wv * grow[w]


@njit(cache=True, fastmath=True)
def _conv2d_grad_weight(gout, xp, gw, dilation):
    n, co, ho, wo = gout.shape
    ci = xp.shape[1]
    k = gw.shape[2]
    for b in range(n):
        for o in range(co):
            for h in range(ho):
                grow = gout[b, o, h]
                for c in range(ci):
                    for kh in range(k):
                        xrow = xp[b, c, h + kh * dilation]
                        for kw in range(k):
                            acc = 0.0
                            off = kw * dilation
                            for w in range(wo):
                                acc += grow[w] * xrow[w + off]
                            gw[o, c, kh, kw] += acc


def conv2d_forward(xp, weight, dilation):
    n = xp.shape[0]
    co = weight.shape[0]
    k = weight.shape[2]
    ho = xp.shape[2] - dilation * (k - 1)
    wo = xp.shape[3] - dilation * (k - 1)
    out = np.zeros((n, co, ho, wo), dtype=xp.dtype)
    _conv2d_forward(xp, weight, out, dilation)
    return out


def conv2d_grad_input(gout, weight, hp, wp, dilation):
    gxp = np.zeros((gout.shape[0], weight.shape[1], hp, wp), dtype=gout.dtype)
    _conv2d_grad_input(gout, weight, gxp, dilation)
    return gxp


def conv2d_grad_weight(gout, xp, k, dilation):
    gw = np.zeros((gout.shape[1], xp.shape[1], k, k), dtype=gout.dtype)
    _conv2d_grad_weight(gout, xp, gw, dilation)
    return gw
