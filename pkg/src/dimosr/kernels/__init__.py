"""Backend dispatch for the hot convolution kernels.

Two interchangeable implementations exist: BLAS-backed pure numpy
(shift-and-accumulate tensordot) and numba @njit loops. On the channel
widths this architecture uses, the BLAS path measures faster (see
benchmarks/bench_conv.py), so it is the default; set DIMOSR_BACKEND=numba
to switch. Both agree to float rounding.
"""

import os

from ..errors import ConfigError

_requested = os.environ.get("DIMOSR_BACKEND", "auto").strip().lower()

if _requested in ("", "auto", "numpy"):
    from . import numpy_impl as _impl

    BACKEND = "numpy"
elif _requested == "numba":
    from . import numba_impl as _impl

    BACKEND = "numba"
else:
    raise ConfigError(f"DIMOSR_BACKEND must be 'numba', 'numpy', or 'auto', got {_requested!r}")

conv2d_forward = _impl.conv2d_forward
conv2d_grad_input = _impl.conv2d_grad_input
conv2d_grad_weight = _impl.conv2d_grad_weight
