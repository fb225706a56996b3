"""2-D discrete Fourier transforms and the frequency-domain training loss.

The transform is an unnormalized forward DFT, computed with an iterative
radix-2 kernel for power-of-two lengths and Bluestein's chirp-z algorithm
for everything else (training patches are powers of two, full evaluation
images are not). All transform arithmetic runs in complex128.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError


@dataclass
class ComplexPlane:
    """Real/imaginary parts of a transform, shape-matched pair."""

    real: object
    imag: object


def _bit_reverse_indices(n):
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (bits - 1))
    return rev


_pow2_plans = {}
_bluestein_plans = {}


def _pow2_plan(n):
    plan = _pow2_plans.get(n)
    if plan is None:
        stages = []
        m = 2
        while m <= n:
            stages.append((m, np.exp(-2j * np.pi * np.arange(m // 2) / m)))
            m <<= 1
        plan = (_bit_reverse_indices(n), stages)
        _pow2_plans[n] = plan
    return plan


def _fft_pow2(a):
    """Iterative Cooley-Tukey DIT over the last axis; len must be 2^k."""
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    rev, stages = _pow2_plan(n)
    a = a[..., rev]
    lead = a.shape[:-1]
    for m, tw in stages:
        half = m // 2
        a = a.reshape(*lead, n // m, m)
        u = a[..., :half]
        t = a[..., half:] * tw
        a = np.concatenate((u + t, u - t), axis=-1)
    return a.reshape(*lead, n)


def _ifft_pow2(a):
    return np.conj(_fft_pow2(np.conj(a))) / a.shape[-1]


def _bluestein_plan(n):
    plan = _bluestein_plans.get(n)
    if plan is None:
        m = 1 << (2 * n - 1).bit_length()
        k = np.arange(n)
        # e^{-i pi k^2 / n}; k^2 folded mod 2n to keep the phase argument small
        w = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
        b = np.zeros(m, dtype=np.complex128)
        b[:n] = np.conj(w)
        if n > 1:
            b[-(n - 1):] = np.conj(w[1:])[::-1]
        plan = (m, w, _fft_pow2(b))
        _bluestein_plans[n] = plan
    return plan


def _fft_bluestein(a):
    n = a.shape[-1]
    m, w, fb = _bluestein_plan(n)
    buf = np.zeros(a.shape[:-1] + (m,), dtype=np.complex128)
    buf[..., :n] = a * w
    conv = _ifft_pow2(_fft_pow2(buf) * fb)
    return conv[..., :n] * w


def fft1d(a, axis=-1):
    """Unnormalized forward DFT along one axis of a complex128 array."""
    a = np.asarray(a, dtype=np.complex128)
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1]
    if n & (n - 1) == 0:
        out = _fft_pow2(a)
    else:
        out = _fft_bluestein(a)
    return np.moveaxis(out, -1, axis)


def fft2_arrays(x):
    """Per-channel 2-D DFT of the trailing (H, W) axes; returns complex128."""
    return fft1d(fft1d(np.asarray(x, dtype=np.complex128), axis=-1), axis=-2)


def fft2(x):
    """Autodiff 2-D DFT of an (N, C, H, W) Tensor.

    Returns a ComplexPlane of two float64 Tensors. The transform is linear,
    so each plane's backward applies the adjoint transform of its gradient.
    """
    spec = fft2_arrays(x.data)
    dt = x.data.dtype

    def vjp_real(g):
        return (np.ascontiguousarray(fft2_arrays(g).real.astype(dt)),)

    def vjp_imag(g):
        return (np.ascontiguousarray(fft2_arrays(g).imag.astype(dt)),)

    re = ad.node(np.ascontiguousarray(spec.real), (x,), vjp_real)
    im = ad.node(np.ascontiguousarray(spec.imag), (x,), vjp_imag)
    return ComplexPlane(re, im)


def _as_tensor(x):
    return x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x))


def freq_loss(sr, hr):
    """Mean separable L1 distance between the transforms of two images.

    Computed as mean(|dRe| + |dIm|) over every bin of every channel;
    differentiable through the tape.
    """
    sr, hr = _as_tensor(sr), _as_tensor(hr)
    if sr.data.shape != hr.data.shape:
        raise ShapeError(f"freq_loss operands must share a shape, got "
                         f"{sr.data.shape} vs {hr.data.shape}")
    diff = fft2(ad.sub(sr, hr))
    return ad.add(ad.mean(ad.absolute(diff.real)), ad.mean(ad.absolute(diff.imag)))


def mae_loss(sr, hr):
    sr, hr = _as_tensor(sr), _as_tensor(hr)
    if sr.data.shape != hr.data.shape:
        raise ShapeError(f"mae operands must share a shape, got "
                         f"{sr.data.shape} vs {hr.data.shape}")
    return ad.mean(ad.absolute(ad.sub(sr, hr)))


def total_loss(sr, hr, lam=0.05):
    """Pixel MAE plus lam times the frequency loss (lam >= 0)."""
    if lam < 0:
        raise ShapeError(f"loss weight must be >= 0, got {lam}")
    base = mae_loss(sr, hr)
    if lam == 0:
        return base
    return ad.add(base, ad.scale(freq_loss(sr, hr), lam))
