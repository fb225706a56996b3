"""Declarative run configuration.

A run is described by one TOML file with [model], [train], [eval], and
[paths] sections, optionally starting from a named preset and overridden by
dotted command-line keys (e.g. --model.enable-attention false,
--train.lambda 0). Every key must exist in the schema; unknown keys are
rejected.
"""

from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .metrics import EvalProtocol
from .model import MODEL_PRESETS, ModelConfig
from .optim import TrainConfig


def _parse_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def _parse_int(v):
    try:
        return int(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected an integer, got {v!r}") from None


def _parse_float(v):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {v!r}") from None


def _parse_dilations(v):
    if isinstance(v, (list, tuple)):
        return tuple(_parse_int(x) for x in v)
    try:
        return tuple(int(x) for x in str(v).split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {v!r}") from None


def _parse_str(v):
    return str(v)


# schema: dotted key -> (section, dataclass field, parser)
SCHEMA = {
    "model.channels": ("model", "channels", _parse_int),
    "model.num_blocks": ("model", "num_blocks", _parse_int),
    "model.group_size": ("model", "group_size", _parse_int),
    "model.dilations": ("model", "dilations", _parse_dilations),
    "model.branch_width": ("model", "branch_width", _parse_int),
    "model.erb_hidden": ("model", "erb_hidden", _parse_int),
    "model.erb_depth": ("model", "erb_depth", _parse_int),
    "model.scale": ("model", "scale", _parse_int),
    "model.enable_attention": ("model", "enable_attention", _parse_bool),
    "model.enable_modulation": ("model", "enable_modulation", _parse_bool),
    "train.iterations": ("train", "iterations", _parse_int),
    "train.batch_size": ("train", "batch_size", _parse_int),
    "train.patch_size": ("train", "patch_size", _parse_int),
    "train.lr_start": ("train", "lr_start", _parse_float),
    "train.lr_min": ("train", "lr_min", _parse_float),
    "train.lambda": ("train", "lambda_weight", _parse_float),
    "train.seed": ("train", "seed", _parse_int),
    "train.eval_every": ("train", "eval_every", _parse_int),
    "train.checkpoint_every": ("train", "checkpoint_every", _parse_int),
    "train.log_every": ("train", "log_every", _parse_int),
    "eval.border_crop": ("eval", "border_crop", _parse_int),
    "eval.y_only": ("eval", "y_only", _parse_bool),
    "paths.train_manifest": ("paths", "train_manifest", _parse_str),
    "paths.val_manifest": ("paths", "val_manifest", _parse_str),
    "paths.out_dir": ("paths", "out_dir", _parse_str),
}

# run presets: architecture preset plus a matching training recipe
RUN_PRESETS = {
    "dimosr": {"model": dict(MODEL_PRESETS["dimosr"], scale=4), "train": {}},
    "dimosr-s": {"model": dict(MODEL_PRESETS["dimosr-s"], scale=4), "train": {}},
    "toy": {
        "model": dict(MODEL_PRESETS["toy"], scale=2),
        "train": dict(iterations=2000, batch_size=4, patch_size=32,
                      eval_every=500, checkpoint_every=1000, log_every=1),
    },
}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    border_crop: int = None  # None -> model.scale
    y_only: bool = True
    train_manifest: str = None
    val_manifest: str = None
    out_dir: str = None

    def protocol(self):
        crop = self.model.scale if self.border_crop is None else self.border_crop
        return EvalProtocol(border_crop=crop, y_only=self.y_only)


def normalize_key(key):
    return key.strip().lower().replace("-", "_")


def _apply(state, dotted, value, origin):
    key = normalize_key(dotted)
    if key not in SCHEMA:
        raise ConfigError(f"unknown configuration key {dotted!r} ({origin}); "
                          f"valid keys: {', '.join(sorted(SCHEMA))}")
    section, field_name, parser = SCHEMA[key]
    state[section][field_name] = parser(value)


def build_run_config(preset=None, config_file=None, overrides=()):
    """Resolve preset -> TOML file -> dotted overrides into a RunConfig."""
    state = {"model": {}, "train": {}, "eval": {}, "paths": {}}
    if preset is not None:
        if preset not in RUN_PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(RUN_PRESETS)}")
        for section, values in RUN_PRESETS[preset].items():
            state[section].update(values)

    if config_file is not None:
        with open(config_file, "rb") as f:
            doc = tomllib.load(f)
        for section, values in doc.items():
            if not isinstance(values, dict):
                raise ConfigError(f"top-level key {section!r} in {config_file} must be a table")
            for key, value in values.items():
                _apply(state, f"{section}.{key}", value, f"from {config_file}")

    for dotted, value in overrides:
        _apply(state, dotted, value, "command-line override")

    eval_state = state["eval"]
    paths = state["paths"]
    return RunConfig(
        model=ModelConfig(**state["model"]),
        train=TrainConfig(**state["train"]),
        border_crop=eval_state.get("border_crop"),
        y_only=eval_state.get("y_only", True),
        train_manifest=paths.get("train_manifest"),
        val_manifest=paths.get("val_manifest"),
        out_dir=paths.get("out_dir"),
    )


def parse_override_tokens(tokens):
    """Turn leftover CLI tokens into (dotted key, raw value) pairs.

    Accepts --key value, --key=value, and bare --key for booleans.
    """
    pairs = []
    toks = [t for t in tokens if t != "--"]
    while toks:
        tok = toks.pop(0)
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}; overrides look like "
                              f"--section.key value")
        body = tok[2:]
        if "=" in body:
            key, value = body.split("=", 1)
        elif toks and not toks[0].startswith("--"):
            key, value = body, toks.pop(0)
        else:
            key, value = body, "true"
        pairs.append((key, value))
    return pairs
