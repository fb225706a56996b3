"""Network construction and evaluation.

The network is a shallow 3x3 conv, a stack of residual groups of
dilated-modulation blocks (each block = feature-enhancement + efficient
residual bottleneck), concatenation of the group outputs fused by a 1x1
conv, and a sub-pixel reconstruction head.
"""

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 36
    num_blocks: int = 18
    group_size: int = 6
    dilations: tuple = (4, 8, 12, 16)
    branch_width: int = 9
    erb_hidden: int = 18
    erb_depth: int = 2
    scale: int = 4
    enable_attention: bool = True
    enable_modulation: bool = True

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        for name in ("channels", "num_blocks", "group_size", "branch_width",
                     "erb_hidden", "erb_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.num_blocks % self.group_size != 0:
            raise ConfigError(f"num_blocks={self.num_blocks} not divisible by "
                              f"group_size={self.group_size}")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ConfigError(f"dilations must be non-empty positive, got {self.dilations}")
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3, or 4, got {self.scale}")

    @property
    def num_groups(self):
        return self.num_blocks // self.group_size

    @property
    def feb_active(self):
        return self.enable_attention or self.enable_modulation

    @property
    def coeff_channels(self):
        """Output width of the coefficient conv: 2C for the modulation pair
        (alpha, beta) plus C for the attention logit (gamma)."""
        c = 0
        if self.enable_modulation:
            c += 2 * self.channels
        if self.enable_attention:
            c += self.channels
        return c

    @property
    def fuse_inputs(self):
        n = int(self.enable_modulation) + int(self.enable_attention)
        return n * self.channels


# Presets: the two published configurations plus a desk-scale toy model.
# Branch width C/4, bottleneck width C/2, and two 3x3 convs per bottleneck
# reproduce the published parameter budgets within 1%.
MODEL_PRESETS = {
    "dimosr": dict(channels=36, num_blocks=18, group_size=6, dilations=(4, 8, 12, 16),
                   branch_width=9, erb_hidden=18, erb_depth=2),
    "dimosr-s": dict(channels=32, num_blocks=16, group_size=4, dilations=(4, 8, 12, 16),
                     branch_width=8, erb_hidden=16, erb_depth=2),
    "toy": dict(channels=16, num_blocks=4, group_size=2, dilations=(2, 4),
                branch_width=4, erb_hidden=8, erb_depth=2),
}


def preset_config(name, scale=4, **overrides):
    if name not in MODEL_PRESETS:
        raise ConfigError(f"unknown model preset {name!r}; choose from {sorted(MODEL_PRESETS)}")
    fields = dict(MODEL_PRESETS[name], scale=scale)
    fields.update(overrides)
    return ModelConfig(**fields)


def param_specs(config):
    """Ordered (name, shape, kind) description of every trainable tensor.

    kind is one of conv_weight / bias / gain / shift and drives
    initialization; the order fixes the checkpoint blob layout.
    """
    c = config.channels
    bw = config.branch_width
    eh = config.erb_hidden
    specs = [("shallow.weight", (c, 3, 3, 3), "conv_weight"),
             ("shallow.bias", (c,), "bias")]
    for i in range(config.num_blocks):
        p = f"blocks.{i}."
        if config.feb_active:
            specs += [(p + "feb.norm.gain", (c,), "gain"),
                      (p + "feb.norm.shift", (c,), "shift")]
            for j in range(len(config.dilations)):
                specs += [(p + f"feb.branch{j}.pre.weight", (bw, c, 1, 1), "conv_weight"),
                          (p + f"feb.branch{j}.pre.bias", (bw,), "bias"),
                          (p + f"feb.branch{j}.dil.weight", (bw, bw, 3, 3), "conv_weight"),
                          (p + f"feb.branch{j}.dil.bias", (bw,), "bias")]
            specs += [(p + "feb.coeff.weight",
                       (config.coeff_channels, bw * len(config.dilations), 1, 1), "conv_weight"),
                      (p + "feb.coeff.bias", (config.coeff_channels,), "bias"),
                      (p + "feb.fuse.weight", (c, config.fuse_inputs, 1, 1), "conv_weight"),
                      (p + "feb.fuse.bias", (c,), "bias")]
        specs += [(p + "erb.norm.gain", (c,), "gain"),
                  (p + "erb.norm.shift", (c,), "shift"),
                  (p + "erb.reduce.weight", (eh, c, 1, 1), "conv_weight"),
                  (p + "erb.reduce.bias", (eh,), "bias")]
        for k in range(config.erb_depth):
            specs += [(p + f"erb.conv{k}.weight", (eh, eh, 3, 3), "conv_weight"),
                      (p + f"erb.conv{k}.bias", (eh,), "bias")]
        specs += [(p + "erb.expand.weight", (c, eh, 1, 1), "conv_weight"),
                  (p + "erb.expand.bias", (c,), "bias")]
    s2 = 3 * config.scale * config.scale
    specs += [("fuse.weight", (c, config.num_groups * c, 1, 1), "conv_weight"),
              ("fuse.bias", (c,), "bias"),
              ("head.pre.weight", (c, c, 1, 1), "conv_weight"),
              ("head.pre.bias", (c,), "bias"),
              ("head.out.weight", (s2, c, 3, 3), "conv_weight"),
              ("head.out.bias", (s2,), "bias")]
    return specs


def init_params(config, seed, dtype=np.float32):
    """Fan-in-scaled uniform conv weights, zero biases, unit/zero norm
    affines; deterministic for a given seed and dtype."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, kind in param_specs(config):
        if kind == "conv_weight":
            fan_in = shape[1] * shape[2] * shape[3]
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
        elif kind == "gain":
            params[name] = np.ones(shape, dtype=dtype)
        else:
            params[name] = np.zeros(shape, dtype=dtype)
    return params


class Network:
    """Built model: a config plus its named parameter arrays."""

    def __init__(self, config, params):
        self.config = config
        self.params = params

    def forward(self, x):
        """Inference on an (N, 3, H, W) array in [0, 1]; returns the
        (N, 3, sH, sW) reconstruction without clamping."""
        with ad.no_grad():
            tensors = {k: ad.Tensor(v) for k, v in self.params.items()}
            return _forward(self.config, tensors, ad.Tensor(x)).data

    def forward_tracked(self, tape, x):
        """Forward pass with every parameter registered on the tape."""
        tensors = {k: tape.parameter(k, v) for k, v in self.params.items()}
        return _forward(self.config, tensors, x)


def build_model(config, seed=0, dtype=np.float32):
    return Network(config, init_params(config, seed, dtype))


def _sub(params, prefix):
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


def feb_forward(x, params, config):
    """Feature enhancement: four dilated context branches predict the
    modulation pair (alpha, beta) and attention logit gamma, which reshape
    the normalized features; a 1x1 fusion and residual close the block.
    Identity when both mechanisms are disabled."""
    if not config.feb_active:
        return x
    xn = ad.layer_norm(x, params["norm.gain"], params["norm.shift"])
    branches = []
    for j, d in enumerate(config.dilations):
        h = ad.conv2d(xn, params[f"branch{j}.pre.weight"], params[f"branch{j}.pre.bias"])
        h = ad.silu(h)
        h = ad.conv2d(h, params[f"branch{j}.dil.weight"], params[f"branch{j}.dil.bias"],
                      dilation=d, padding=d)
        branches.append(h)
    coeff = ad.conv2d(ad.concat_channels(branches), params["coeff.weight"], params["coeff.bias"])

    outs = []
    if config.enable_modulation and config.enable_attention:
        alpha, beta, gamma = ad.chunk_channels(coeff, 3)
        outs = [ad.add(ad.mul(alpha, xn), beta), ad.mul(ad.sigmoid(gamma), xn)]
    elif config.enable_modulation:
        alpha, beta = ad.chunk_channels(coeff, 2)
        outs = [ad.add(ad.mul(alpha, xn), beta)]
    else:
        outs = [ad.mul(ad.sigmoid(coeff), xn)]
    merged = outs[0] if len(outs) == 1 else ad.concat_channels(outs)
    return ad.add(x, ad.conv2d(merged, params["fuse.weight"], params["fuse.bias"]))


def erb_forward(x, params, config):
    """Residual bottleneck: normalize, squeeze to a narrower width, run the
    3x3 stack, expand back; activations follow every conv except the
    expansion."""
    h = ad.layer_norm(x, params["norm.gain"], params["norm.shift"])
    h = ad.silu(ad.conv2d(h, params["reduce.weight"], params["reduce.bias"]))
    for k in range(config.erb_depth):
        h = ad.silu(ad.conv2d(h, params[f"conv{k}.weight"], params[f"conv{k}.bias"],
                              dilation=1, padding=1))
    h = ad.conv2d(h, params["expand.weight"], params["expand.bias"])
    return ad.add(x, h)


def dmb_forward(x, params, config):
    h = feb_forward(x, _sub(params, "feb."), config)
    return erb_forward(h, _sub(params, "erb."), config)


def _forward(config, params, x):
    if x.data.ndim != 4 or x.data.shape[1] != 3:
        raise ShapeError(f"model input must be (N, 3, H, W), got {x.data.shape}")
    feat = ad.conv2d(x, params["shallow.weight"], params["shallow.bias"],
                     dilation=1, padding=1)
    group_outs = []
    for g in range(config.num_groups):
        h = feat
        for b in range(g * config.group_size, (g + 1) * config.group_size):
            h = dmb_forward(h, _sub(params, f"blocks.{b}."), config)
        feat = ad.add(feat, h)
        group_outs.append(feat)
    fused = ad.conv2d(ad.concat_channels(group_outs), params["fuse.weight"], params["fuse.bias"])
    h = ad.conv2d(fused, params["head.pre.weight"], params["head.pre.bias"])
    h = ad.conv2d(h, params["head.out.weight"], params["head.out.bias"],
                  dilation=1, padding=1)
    return ad.pixel_shuffle(h, config.scale)


def forward(network, lr_image):
    return network.forward(lr_image)


def param_count(network):
    """Exact trainable-scalar total, summed from the actual arrays."""
    return int(sum(p.size for p in network.params.values()))


def param_count_formula(config):
    """Closed-form parameter total; must agree with param_count."""
    return int(sum(int(np.prod(shape)) for _, shape, _ in param_specs(config)))


def conv_macs_per_pixel(config):
    """Multiply-accumulates of every convolution per low-resolution pixel."""
    c = config.channels
    bw = config.branch_width
    eh = config.erb_hidden
    k = len(config.dilations)
    macs = 3 * c * 9  # shallow
    per_block = c * eh + config.erb_depth * eh * eh * 9 + eh * c
    if config.feb_active:
        per_block += k * (c * bw + bw * bw * 9)
        per_block += bw * k * config.coeff_channels
        per_block += config.fuse_inputs * c
    macs += config.num_blocks * per_block
    macs += config.num_groups * c * c  # group fusion
    macs += c * c + c * (3 * config.scale ** 2) * 9  # head
    return macs


def flops_count(config, out_h, out_w):
    """Convolution MACs for an out_h x out_w output, one MAC counted as one
    FLOP, evaluated at the low-resolution working size; normalization,
    activation, and elementwise costs excluded."""
    pixels = out_h * out_w / (config.scale ** 2)
    return int(round(conv_macs_per_pixel(config) * pixels))


def config_to_dict(config):
    d = asdict(config)
    d["dilations"] = list(config.dilations)
    return d


def config_from_dict(d):
    d = dict(d)
    d["dilations"] = tuple(d["dilations"])
    return ModelConfig(**d)
