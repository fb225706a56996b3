"""Finite-difference validation of every differentiable operation and of
whole networks, all in float64.

Three tiers: per-operation checks on small random inputs, an exhaustive
sweep of a complete (all mechanisms enabled, multi-group) miniature
network, and a sampled sweep of the full-size preset where probing every
scalar would take hours.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import model as modelmod
from . import spectral
from .autodiff import GradCheckReport, Tensor, grad_check

TOL = 1e-4
STEP = 1e-4


@dataclass
class CheckResult:
    name: str
    report: GradCheckReport

    def __str__(self):
        return f"{self.name}: {self.report}"


def _rand(rng, shape, lo=-1.0, hi=1.0):
    return rng.uniform(lo, hi, size=shape)


def _weighted_sum(t, w):
    return ad.total(ad.mul(t, Tensor(w)))


def op_checks(seed=0):
    """(name, function, probe input) for every differentiable primitive."""
    rng = np.random.default_rng(seed)
    x = _rand(rng, (2, 4, 8, 8))
    w3 = _rand(rng, (3, 4, 3, 3), -0.3, 0.3)
    w3d = _rand(rng, (4, 4, 3, 3), -0.3, 0.3)
    w1 = _rand(rng, (5, 4, 1, 1), -0.5, 0.5)
    bias = _rand(rng, (3,))
    gain = _rand(rng, (4,), 0.5, 1.5)
    shift = _rand(rng, (4,))
    mix = _rand(rng, (2, 4, 8, 8))
    mix16 = _rand(rng, (2, 4, 16, 16))
    target = _rand(rng, (2, 4, 8, 8), 0.0, 1.0)

    def conv_fn(weight, dilation, padding, b=None):
        def f(t):
            bt = None if b is None else Tensor(b)
            out = ad.conv2d(t, Tensor(weight), bt, dilation=dilation, padding=padding)
            return _weighted_sum(out, np.random.default_rng(7).uniform(-1, 1, out.data.shape))
        return f

    checks = [
        ("sum", lambda t: ad.total(t), x),
        ("mean_abs", lambda t: ad.mean(ad.absolute(t)), x),
        ("silu", lambda t: _weighted_sum(ad.silu(t), mix), x),
        ("sigmoid", lambda t: _weighted_sum(ad.sigmoid(t), mix), x),
        ("mul_fanout", lambda t: ad.total(ad.mul(t, t)), x),
        ("conv2d_3x3", conv_fn(w3, 1, 1, bias), x),
        ("conv2d_3x3_dil4", conv_fn(w3d, 4, 4), x),
        ("conv2d_1x1", conv_fn(w1, 1, 0), x),
        ("layer_norm",
         lambda t: _weighted_sum(ad.layer_norm(t, Tensor(gain), Tensor(shift)), mix), x),
        ("pixel_shuffle",
         lambda t: _weighted_sum(ad.pixel_shuffle(t, 2), mix16[:, :1]), x),
        ("concat_chunk",
         lambda t: ad.total(ad.concat_channels(
             [ad.scale(c, i + 1.0) for i, c in enumerate(ad.chunk_channels(t, 2))])), x),
        ("freq_loss", lambda t: spectral.freq_loss(t, Tensor(target)), x),
        ("total_loss", lambda t: spectral.total_loss(t, Tensor(target), 0.05), x),
    ]
    return checks


def run_op_checks(seed=0, tol=TOL):
    results = []
    for name, f, x in op_checks(seed):
        results.append(CheckResult(name, grad_check(f, x, tol=tol, step=STEP)))
    return results


def _model_loss(network, params, x, hr):
    """Composite training loss of the network with `params` substituted."""
    tensors = {k: (v if isinstance(v, Tensor) else Tensor(v)) for k, v in params.items()}
    out = modelmod._forward(network.config, tensors, x)
    return spectral.total_loss(out, hr, 0.05)


def check_network(config, seed=0, tol=TOL, sample_per_param=None, param_names=None):
    """Finite-difference the training loss against network parameters and
    the input.

    sample_per_param=None probes every scalar; an integer probes that many
    random positions per tensor (for the full-size preset).
    """
    rng = np.random.default_rng(seed + 1)
    network = modelmod.build_model(config, seed=seed, dtype=np.float64)
    x_in = rng.uniform(0.0, 1.0, size=(1, 3, 8, 8))
    hr = Tensor(rng.uniform(0.0, 1.0, size=(1, 3, 8 * config.scale, 8 * config.scale)))

    results = []
    names = param_names if param_names is not None else list(network.params)
    for name in names:
        base = network.params[name]

        def f(t, name=name):
            params = dict(network.params)
            params[name] = t
            return _model_loss(network, params, Tensor(x_in), hr)

        indices = None
        if sample_per_param is not None:
            flat = rng.choice(base.size, size=min(sample_per_param, base.size), replace=False)
            indices = [np.unravel_index(i, base.shape) for i in sorted(flat)]
        results.append(CheckResult(f"param:{name}", grad_check(f, base, tol=tol, step=STEP,
                                                               indices=indices)))

    def f_input(t):
        return _model_loss(network, network.params, t, hr)

    input_indices = None
    if sample_per_param is not None:
        flat = rng.choice(x_in.size, size=min(4 * sample_per_param, x_in.size), replace=False)
        input_indices = [np.unravel_index(i, x_in.shape) for i in sorted(flat)]
    results.append(CheckResult("input", grad_check(f_input, x_in, tol=tol, step=STEP,
                                                   indices=input_indices)))
    return results


def small_full_architecture():
    """Every mechanism present (multi-branch, both coefficient paths,
    multiple groups) at width small enough to probe exhaustively."""
    return modelmod.ModelConfig(channels=8, num_blocks=2, group_size=1, dilations=(4, 8),
                                branch_width=2, erb_hidden=4, erb_depth=2, scale=2)


def run_suite(full=False, seed=0, tol=TOL):
    """The gradcheck suite: op-level checks plus network-level checks.

    The quick tier probes the miniature network at a few positions per
    tensor; full=True probes it exhaustively and additionally spot-checks
    the full-size preset (sampled positions across first/middle/last
    blocks plus the stem, fusion, and head).
    """
    results = run_op_checks(seed=seed, tol=tol)
    tiny = check_network(small_full_architecture(), seed=seed, tol=tol,
                         sample_per_param=None if full else 2)
    results += [CheckResult(f"tiny_net/{r.name}", r.report) for r in tiny]
    if full:
        config = modelmod.preset_config("dimosr", scale=4)
        probe_blocks = (0, config.num_blocks // 2, config.num_blocks - 1)
        names = [n for n, _, _ in modelmod.param_specs(config)
                 if not n.startswith("blocks.")
                 or int(n.split(".")[1]) in probe_blocks]
        results += [CheckResult(f"dimosr_x4/{r.name}", r.report)
                    for r in check_network(config, seed=seed, tol=tol,
                                           sample_per_param=2, param_names=names)]
    return results


def suite_passed(results):
    return all(r.report.passed for r in results)
