"""Adam, cosine annealing, and the training loop.

One optimizer step owns the parameters exclusively; evaluation runs on a
graph-free forward. The sample stream is keyed by global sample index, so
a (seed, corpus) pair fully determines the batch sequence.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import data as datamod
from .checkpoint import save_checkpoint
from .errors import ConfigError, ShapeError, TrainingDiverged
from .metrics import EvalProtocol, psnr, ssim
from .spectral import total_loss


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8

    @staticmethod
    def for_params(params, beta1=0.9, beta2=0.99, eps=1e-8):
        return AdamState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam update, in place on the parameter arrays."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter "
                             f"{name!r} shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def cosine_lr(t, total, lr_start=1e-3, lr_min=1e-5):
    """Half-cosine decay from lr_start at t=0 to lr_min at t=total."""
    if t >= total:
        return lr_min
    return lr_min + 0.5 * (lr_start - lr_min) * (1.0 + math.cos(math.pi * t / total))


@dataclass
class TrainConfig:
    iterations: int = 500_000
    batch_size: int = 24
    patch_size: int = 128
    lr_start: float = 1e-3
    lr_min: float = 1e-5
    lambda_weight: float = 0.05
    seed: int = 0
    eval_every: int = 5000
    checkpoint_every: int = 10_000
    log_every: int = 100

    def __post_init__(self):
        if self.lr_min > self.lr_start:
            raise ConfigError(f"lr_min {self.lr_min} exceeds lr_start {self.lr_start}")
        if self.batch_size < 1 or self.iterations < 1 or self.patch_size < 1:
            raise ConfigError("batch_size, iterations, and patch_size must be positive")
        if self.lambda_weight < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lambda_weight}")


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    last_loss: float
    last_eval: dict = None
    loss_history: list = field(default_factory=list, repr=False)


def _draw_batch(sources, cfg, iteration):
    lrs, hrs, ids = [], [], []
    for j in range(cfg.batch_size):
        sample_idx = iteration * cfg.batch_size + j
        rng = datamod.rng_for(cfg.seed, 1, sample_idx)
        src = sources[int(rng.integers(len(sources)))]
        sample = datamod.augment(datamod.sample_patch(src, cfg.patch_size, rng), rng)
        lrs.append(sample.lr[0])
        hrs.append(sample.hr[0])
        ids.append(f"{sample.source_id}@{sample.origin}")
    return np.stack(lrs), np.stack(hrs), ids


def evaluate(network, sources, protocol=None):
    """Full-image PSNR/SSIM of the network against each source's HR."""
    protocol = protocol or EvalProtocol.for_scale(network.config.scale)
    rows = []
    for src in sources:
        sr = np.clip(network.forward(src.lr), 0.0, 1.0)
        rows.append({
            "id": src.source_id,
            "psnr": psnr(sr, src.hr, protocol),
            "ssim": ssim(sr, src.hr, protocol),
        })
    finite = [r["psnr"] for r in rows if math.isfinite(r["psnr"])]
    return {
        "images": rows,
        "psnr": float(np.mean(finite)) if finite else math.inf,
        "ssim": float(np.mean([r["ssim"] for r in rows])),
    }


def train(network, train_cfg, train_manifest, out_dir, val_manifest=None,
          progress=None):
    """Run the sample -> augment -> forward -> loss -> backward -> Adam loop.

    Writes an append-only JSON-lines metrics log plus periodic and final
    checkpoints under out_dir; aborts with a diagnostic dump if the loss
    leaves the finite range.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not train_manifest.entries:
        raise ConfigError("training manifest is empty")
    if train_manifest.scale != network.config.scale:
        raise ConfigError(f"manifest scale {train_manifest.scale} does not match model "
                          f"scale {network.config.scale}")

    sources = [datamod.load_pair(train_manifest, i) for i in range(len(train_manifest.entries))]
    val_sources = None
    if val_manifest is not None:
        val_sources = [datamod.load_pair(val_manifest, i)
                       for i in range(len(val_manifest.entries))]

    state = AdamState.for_params(network.params)
    log_path = out_dir / "train_log.jsonl"
    ckpt_path = out_dir / "checkpoint_final.dmsr"
    losses = []
    last_eval = None

    def checkpoint(path, iteration):
        save_checkpoint(
            path, network, optimizer=state,
            rng_state={"seed": train_cfg.seed,
                       "next_sample": iteration * train_cfg.batch_size},
            metadata={"iteration": iteration, "loss_tail": losses[-100:]},
        )

    with open(log_path, "w") as log:
        for i in range(train_cfg.iterations):
            lr = cosine_lr(i, train_cfg.iterations, train_cfg.lr_start, train_cfg.lr_min)
            lr_batch, hr_batch, batch_ids = _draw_batch(sources, train_cfg, i)

            tape = ad.GradientTape()
            out = network.forward_tracked(tape, ad.Tensor(lr_batch))
            loss = total_loss(out, ad.Tensor(hr_batch), train_cfg.lambda_weight)
            loss_val = float(loss.data)
            if not math.isfinite(loss_val):
                checkpoint(out_dir / "checkpoint_diverged.dmsr", i)
                raise TrainingDiverged(i, lr, batch_ids, loss_val)
            adam_step(network.params, tape.gradients(loss), state, lr)
            losses.append(loss_val)

            last = i + 1 == train_cfg.iterations
            record = None
            if last or (i + 1) % train_cfg.log_every == 0:
                record = {"iteration": i + 1, "lr": lr, "loss": loss_val}
            if val_sources and (last or (i + 1) % train_cfg.eval_every == 0):
                ev = evaluate(network, val_sources)
                last_eval = {"psnr": ev["psnr"], "ssim": ev["ssim"]}
                record = record or {"iteration": i + 1, "lr": lr, "loss": loss_val}
                record["eval"] = {"val": last_eval}
            if record:
                log.write(json.dumps(record, sort_keys=True) + "\n")
                if progress:
                    progress(record)
            if (i + 1) % train_cfg.checkpoint_every == 0 and not last:
                checkpoint(out_dir / f"checkpoint_{i + 1:07d}.dmsr", i + 1)
        checkpoint(ckpt_path, train_cfg.iterations)

    return TrainResult(
        checkpoint_path=ckpt_path,
        log_path=log_path,
        last_loss=losses[-1],
        last_eval=last_eval,
        loss_history=losses,
    )
