"""Evaluation metrics: BT.601 luma extraction, PSNR, and windowed SSIM.

The protocol matches benchmark practice: metrics run on the Y channel of
YCbCr (studio swing), after clamping to [0, 1] and cropping a scale-sized
border from each edge. All statistics are computed in float64.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .tensor_ops import check_nchw

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class EvalProtocol:
    border_crop: int = 0
    y_only: bool = True

    def __post_init__(self):
        if self.border_crop < 0:
            raise ShapeError(f"border_crop must be >= 0, got {self.border_crop}")

    @staticmethod
    def for_scale(scale):
        return EvalProtocol(border_crop=int(scale))


def rgb_to_y(image):
    """Studio-swing BT.601 luma of an (N, 3, H, W) image in [0, 1]:
    Y = (65.481 R + 128.553 G + 24.966 B + 16) / 255."""
    check_nchw(image)
    if image.shape[1] != 3:
        raise ShapeError(f"luma extraction needs 3 channels on axis 1, got {image.shape[1]}")
    r, g, b = image[:, 0], image[:, 1], image[:, 2]
    y = (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0
    return y[:, None].astype(np.float64)


def _prepare(a, b, protocol):
    check_nchw(a)
    check_nchw(b)
    if a.shape != b.shape:
        raise ShapeError(f"metric operands must share a shape, got {a.shape} vs {b.shape}")
    a = np.clip(a.astype(np.float64), 0.0, 1.0)
    b = np.clip(b.astype(np.float64), 0.0, 1.0)
    if protocol.y_only and a.shape[1] == 3:
        a, b = rgb_to_y(a), rgb_to_y(b)
    elif a.shape[1] != 1:
        raise ShapeError(f"metrics expect 1 or 3 channels, got {a.shape[1]}")
    crop = protocol.border_crop
    if crop:
        if 2 * crop >= min(a.shape[2], a.shape[3]):
            raise ShapeError(f"border crop {crop} consumes the whole {a.shape[2]}x{a.shape[3]} "
                             f"image")
        a = a[:, :, crop:-crop, crop:-crop]
        b = b[:, :, crop:-crop, crop:-crop]
    return a, b


def psnr(a, b, protocol=EvalProtocol()):
    """Peak signal-to-noise ratio in dB against a unit dynamic range;
    identical inputs yield the +inf sentinel."""
    a, b = _prepare(a, b, protocol)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


_WINDOW_1D = _gaussian_window()


def _windowed_mean(img):
    # separable valid-mode correlation with the Gaussian window
    t = np.lib.stride_tricks.sliding_window_view(img, SSIM_WINDOW, axis=0) @ _WINDOW_1D
    return np.lib.stride_tricks.sliding_window_view(t, SSIM_WINDOW, axis=1) @ _WINDOW_1D


def ssim(a, b, protocol=EvalProtocol()):
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5, K1=0.01,
    K2=0.03, dynamic range 1) over the cropped luma plane."""
    a, b = _prepare(a, b, protocol)
    if a.shape[2] < SSIM_WINDOW or a.shape[3] < SSIM_WINDOW:
        raise ContractError(f"image {a.shape[2]}x{a.shape[3]} is smaller than the "
                            f"{SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    scores = []
    for n in range(a.shape[0]):
        x = a[n, 0]
        y = b[n, 0]
        mu_x = _windowed_mean(x)
        mu_y = _windowed_mean(y)
        sxx = _windowed_mean(x * x) - mu_x * mu_x
        syy = _windowed_mean(y * y) - mu_y * mu_y
        sxy = _windowed_mean(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * sxy + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))
