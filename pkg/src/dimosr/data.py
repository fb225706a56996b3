"""Image I/O, bicubic degradation, paired patch sampling, augmentation.

Images travel as (1, 3, H, W) float32 arrays in [0, 1]. The bicubic
resampler reproduces the benchmark-standard degradation: cubic kernel with
a = -0.5, antialias widening on downscale, symmetric boundary extension,
normalized weights.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, ImageFormatError, ShapeError
from .tensor_ops import check_nchw

KERNEL_ID = "bicubic_a-0.5_aa"


def rng_for(seed, *key):
    """Deterministic per-stream generator; streams are keyed by index so the
    sample sequence does not depend on worker layout."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key)))


# ---------------------------------------------------------------------------
# bicubic resampling

def _cubic(x):
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = 1.5 * ax3 - 2.5 * ax2 + 1.0
    far = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax <= 2.0, far, 0.0))


def _contributions(in_len, out_len, scale, antialias):
    # 1-based continuous coordinate of each output sample in input space
    u = (np.arange(1, out_len + 1, dtype=np.float64)) / scale + 0.5 * (1.0 - 1.0 / scale)
    kscale = scale if (antialias and scale < 1.0) else 1.0
    width = 4.0 / kscale
    left = np.floor(u - width / 2.0)
    p = int(np.ceil(width)) + 2
    raw = left[:, None] + np.arange(p)[None, :]
    weights = _cubic((u[:, None] - raw) * kscale) * kscale
    weights /= weights.sum(axis=1, keepdims=True)
    # symmetric (mirror) extension folds out-of-range taps back inside
    mirror = np.concatenate([np.arange(1, in_len + 1), np.arange(in_len, 0, -1)])
    idx = mirror[(raw.astype(np.int64) - 1) % (2 * in_len)] - 1
    keep = ~np.all(weights == 0.0, axis=0)
    return idx[:, keep], weights[:, keep]


def _resize_axis(img, axis, out_len, scale, antialias):
    idx, weights = _contributions(img.shape[axis], out_len, scale, antialias)
    moved = np.moveaxis(img, axis, 0)
    out = np.zeros((out_len,) + moved.shape[1:], dtype=np.float64)
    for p in range(idx.shape[1]):
        out += moved[idx[:, p]] * weights[:, p].reshape((-1,) + (1,) * (moved.ndim - 1))
    return np.moveaxis(out, 0, axis)


def bicubic_resize(image, scale, antialias=True):
    """Separable cubic resample of an (N, C, H, W) array.

    Output spatial dims are round(dim * scale). Downscaling widens the
    kernel by 1/scale (antialiasing) unless antialias=False.
    """
    check_nchw(image)
    if scale <= 0:
        raise ContractError(f"scale must be positive, got {scale}")
    h, w = image.shape[2], image.shape[3]
    out_h = int(round(h * scale))
    out_w = int(round(w * scale))
    if out_h < 1 or out_w < 1:
        raise ContractError(f"resampling {h}x{w} by {scale} yields a degenerate "
                            f"{out_h}x{out_w} output")
    if scale == 1.0:
        return image.copy()
    out = _resize_axis(image.astype(np.float64), 2, out_h, scale, antialias)
    out = _resize_axis(out, 3, out_w, scale, antialias)
    return out.astype(image.dtype)


# ---------------------------------------------------------------------------
# PNG I/O

def load_png(path):
    """Decode an 8-bit PNG to (1, 3, H, W) float32 in [0, 1]; grayscale is
    replicated to 3 channels, anything else is rejected."""
    with Image.open(path) as im:
        im.load()
        mode = im.mode
        if mode == "L":
            arr = np.asarray(im, dtype=np.uint8)[None, :, :].repeat(3, axis=0)
        elif mode == "RGB":
            arr = np.asarray(im, dtype=np.uint8).transpose(2, 0, 1)
        elif mode in ("I", "I;16", "I;16B", "I;16L", "I;16N"):
            raise ImageFormatError(f"{path}: 16-bit PNG not supported (8-bit RGB or "
                                   f"grayscale only)")
        else:
            raise ImageFormatError(f"{path}: unsupported color type {mode!r} (8-bit RGB or "
                                   f"grayscale only)")
    return (arr.astype(np.float32) / 255.0)[None]


def save_png(image, path):
    """Clamp to [0, 1], quantize with round-half-away-from-zero, write RGB."""
    check_nchw(image)
    if image.shape[0] != 1 or image.shape[1] != 3:
        raise ShapeError(f"save_png expects a (1, 3, H, W) image, got {image.shape}")
    v = np.clip(image[0].astype(np.float64), 0.0, 1.0)
    q = np.floor(v * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q.transpose(1, 2, 0), mode="RGB").save(path, format="PNG")


def quantize8(image):
    """Round-trip through the 8-bit on-disk representation."""
    v = np.clip(image.astype(np.float64), 0.0, 1.0)
    return (np.floor(v * 255.0 + 0.5) / 255.0).astype(np.float32)


def modcrop(image, scale):
    check_nchw(image)
    h = image.shape[2] - image.shape[2] % scale
    w = image.shape[3] - image.shape[3] % scale
    return image[:, :, :h, :w]


# ---------------------------------------------------------------------------
# paired samples

@dataclass
class PairSource:
    """A full-size HR image and its aligned LR counterpart."""

    hr: np.ndarray
    lr: np.ndarray
    scale: int
    source_id: str

    def __post_init__(self):
        s = self.scale
        if self.hr.shape[2] != s * self.lr.shape[2] or self.hr.shape[3] != s * self.lr.shape[3]:
            raise ShapeError(f"{self.source_id}: HR {self.hr.shape} is not exactly "
                             f"{s}x the LR {self.lr.shape}")


@dataclass
class PairSample:
    hr: np.ndarray
    lr: np.ndarray
    scale: int
    source_id: str
    origin: tuple

    def __post_init__(self):
        s = self.scale
        if self.hr.shape[2] != s * self.lr.shape[2] or self.hr.shape[3] != s * self.lr.shape[3]:
            raise ShapeError(f"{self.source_id}: HR patch {self.hr.shape} misaligned with "
                             f"LR patch {self.lr.shape} at scale {s}")


def make_pair_source(hr, scale, source_id="mem", lr=None, on_the_fly=False):
    """Build a PairSource from an HR image, degrading it when no LR is given.

    The default degradation matches the on-disk pipeline (bicubic then 8-bit
    quantization); on_the_fly=True keeps the float LR instead.
    """
    hr = modcrop(hr, scale)
    if lr is None:
        lr = bicubic_resize(hr, 1.0 / scale)
        if not on_the_fly:
            lr = quantize8(lr)
    return PairSource(hr=hr, lr=lr, scale=scale, source_id=source_id)


def sample_patch(source, patch_lr, rng, on_the_fly=False):
    """Crop an aligned LR/HR patch pair at a uniform-random LR origin.

    on_the_fly=True re-degrades the HR crop instead of cropping the stored
    LR, making downscale(hr patch) == lr patch exactly by construction.
    """
    s = source.scale
    lh, lw = source.lr.shape[2], source.lr.shape[3]
    if lh < patch_lr or lw < patch_lr:
        raise ContractError(f"{source.source_id}: LR {lh}x{lw} smaller than patch "
                            f"{patch_lr}; skip this image")
    top = int(rng.integers(lh - patch_lr + 1))
    left = int(rng.integers(lw - patch_lr + 1))
    hr = source.hr[:, :, s * top : s * (top + patch_lr), s * left : s * (left + patch_lr)].copy()
    if on_the_fly:
        lr = bicubic_resize(hr, 1.0 / s)
    else:
        lr = source.lr[:, :, top : top + patch_lr, left : left + patch_lr].copy()
    return PairSample(hr=hr, lr=lr, scale=s, source_id=source.source_id, origin=(top, left))


# ---------------------------------------------------------------------------
# dihedral augmentation

def dihedral_apply(arr, k):
    """Apply one of the 8 square symmetries: optional horizontal flip
    (k >= 4) followed by k % 4 quarter turns."""
    if not 0 <= k < 8:
        raise ContractError(f"dihedral index must be in [0, 8), got {k}")
    rot = k % 4
    if rot % 2 and arr.shape[2] != arr.shape[3]:
        raise ShapeError(f"quarter-turn rotation needs square patches, got "
                         f"{arr.shape[2]}x{arr.shape[3]}")
    out = arr[:, :, :, ::-1] if k >= 4 else arr
    if rot:
        out = np.rot90(out, rot, axes=(2, 3))
    return np.ascontiguousarray(out)


def dihedral_inverse(k):
    if k >= 4:  # flip-then-rotate elements are involutions
        return k
    return (4 - k) % 4


def augment(sample, rng):
    """Apply one uniformly drawn dihedral transform to both halves."""
    k = int(rng.integers(8))
    if k == 0:
        return sample
    return PairSample(
        hr=dihedral_apply(sample.hr, k),
        lr=dihedral_apply(sample.lr, k),
        scale=sample.scale,
        source_id=sample.source_id,
        origin=sample.origin,
    )


# ---------------------------------------------------------------------------
# dataset manifests

@dataclass
class ManifestEntry:
    path: str
    width: int
    height: int
    sha256: str
    lr_path: str = None


@dataclass
class DatasetManifest:
    root: str
    scale: int
    kernel_id: str = KERNEL_ID
    shuffle_seed: int = 0
    entries: list = field(default_factory=list)

    def to_json(self):
        payload = {
            "root": self.root,
            "scale": self.scale,
            "kernel_id": self.kernel_id,
            "shuffle_seed": self.shuffle_seed,
            "entries": [
                {"path": e.path, "width": e.width, "height": e.height,
                 "sha256": e.sha256, "lr_path": e.lr_path}
                for e in self.entries
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text):
        d = json.loads(text)
        return DatasetManifest(
            root=d["root"],
            scale=d["scale"],
            kernel_id=d["kernel_id"],
            shuffle_seed=d["shuffle_seed"],
            entries=[ManifestEntry(**e) for e in d["entries"]],
        )


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def ingest(directory, scale, lr_dir=None, generate_lr=True, shuffle_seed=0):
    """Scan a directory of HR PNGs into a manifest, optionally writing the
    bicubic LR set next to it. Unreadable files are reported, not fatal.

    Returns (manifest, skipped) where skipped is a list of (path, reason).
    """
    directory = Path(directory)
    lr_dir = Path(lr_dir) if lr_dir else directory / f"lr_x{scale}"
    lr_root = lr_dir.resolve()
    # the generated LR tree lives inside the corpus by default; never rescan it
    files = sorted(p for p in directory.rglob("*.png")
                   if lr_root not in p.resolve().parents)
    manifest = DatasetManifest(root=str(directory.resolve()), scale=int(scale),
                               shuffle_seed=shuffle_seed)
    skipped = []
    if generate_lr:
        lr_dir.mkdir(parents=True, exist_ok=True)
    for path in files:
        rel = path.relative_to(directory).as_posix()
        try:
            hr = load_png(path)
        except (ImageFormatError, OSError) as e:
            skipped.append((rel, str(e)))
            continue
        entry = ManifestEntry(path=rel, width=hr.shape[3], height=hr.shape[2],
                              sha256=_sha256(path))
        if generate_lr:
            cropped = modcrop(hr, scale)
            lr = quantize8(bicubic_resize(cropped, 1.0 / scale))
            lr_path = lr_dir / rel
            lr_path.parent.mkdir(parents=True, exist_ok=True)
            save_png(lr, lr_path)
            entry.lr_path = str(lr_path.resolve())
        manifest.entries.append(entry)
    if not manifest.entries:
        raise ContractError(f"no images found under {directory}")
    return manifest, skipped


def write_manifest(manifest, path):
    Path(path).write_text(manifest.to_json())


def load_manifest(path, verify_hashes=True):
    manifest = DatasetManifest.from_json(Path(path).read_text())
    root = Path(manifest.root)
    for entry in manifest.entries:
        full = root / entry.path
        if not full.exists():
            raise ContractError(f"manifest references missing file {full}")
        if verify_hashes and _sha256(full) != entry.sha256:
            raise ContractError(f"hash mismatch for {full}; dataset changed since ingest")
    return manifest


def load_pair(manifest, index):
    """Materialize one manifest entry as a PairSource, preferring the
    pre-generated LR file when the manifest carries one."""
    entry = manifest.entries[index]
    hr = load_png(Path(manifest.root) / entry.path)
    lr = None
    if entry.lr_path:
        lr = load_png(entry.lr_path)
    return make_pair_source(hr, manifest.scale, source_id=entry.path, lr=lr)
