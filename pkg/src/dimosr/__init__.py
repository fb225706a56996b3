"""Self-contained single-image super-resolution engine.

Dilated multi-branch feature modulation with attention, trained with an
MAE + frequency-domain loss on top of an in-package tensor library,
reverse-mode autodiff, FFT, and Y-channel evaluation metrics.
"""

from .autodiff import GradientTape, Tensor, grad_check, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import DimosrError
from .kernels import BACKEND
from .metrics import EvalProtocol, psnr, rgb_to_y, ssim
from .model import (ModelConfig, Network, build_model, flops_count, forward,
                    param_count, preset_config)
from .optim import AdamState, TrainConfig, adam_step, cosine_lr, train
from .spectral import fft2, freq_loss, total_loss

__version__ = "0.1.0"

__all__ = [
    "AdamState", "BACKEND", "DimosrError", "EvalProtocol", "GradientTape",
    "ModelConfig", "Network", "Tensor", "TrainConfig", "adam_step",
    "build_model", "cosine_lr", "fft2", "flops_count", "forward",
    "freq_loss", "grad_check", "load_checkpoint", "no_grad", "param_count",
    "preset_config", "psnr", "rgb_to_y", "save_checkpoint", "ssim",
    "total_loss", "train",
]
