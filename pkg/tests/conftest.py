import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))


def make_synthetic_image(rng, size=96):
    """Structured synthetic photo stand-in: smooth background, dense sharp
    shapes, and mid-frequency stripe textures (period >= 4 px, which
    survive x2 antialiasing), so bicubic leaves real headroom for a
    learned model."""
    h = w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((3, h, w))
    for c in range(3):
        img[c] = 0.5 + 0.2 * np.sin(2 * np.pi * (rng.uniform(0.5, 2) * xx / w
                                                 + rng.uniform(0.5, 2) * yy / h)
                                    + rng.uniform(0, 6.28))
    for _ in range(24):
        x0, y0 = rng.integers(0, w - 6, 2)
        bw_, bh_ = rng.integers(5, 20, 2)
        color = rng.uniform(0, 1, 3)
        patch = np.tile(color[:, None, None], (1, bh_, bw_))
        if rng.uniform() < 0.5:  # striped fill
            period = int(rng.integers(4, 9))
            axis = int(rng.integers(2))
            coords = (yy if axis == 0 else xx)[y0 : y0 + bh_, x0 : x0 + bw_]
            stripes = (coords % period) < period / 2
            other = rng.uniform(0, 1, 3)
            patch = np.where(stripes[None], color[:, None, None], other[:, None, None])
        ys, xs = min(y0 + bh_, h), min(x0 + bw_, w)
        img[:, y0:ys, x0:xs] = patch[:, : ys - y0, : xs - x0]
    for _ in range(8):
        cx, cy = rng.integers(6, w - 6, 2)
        r = int(rng.integers(3, 10))
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        img[:, mask] = rng.uniform(0, 1, 3)[:, None]
    for _ in range(10):
        x0 = int(rng.integers(0, w))
        t = int(rng.integers(1, 3))
        if rng.uniform() < 0.5:
            img[:, :, x0 : x0 + t] = rng.uniform(0, 1, 3)[:, None, None]
        else:
            img[:, x0 : x0 + t, :] = rng.uniform(0, 1, 3)[:, None, None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)[None]


@pytest.fixture(scope="session")
def synth_corpus(tmp_path_factory):
    """16 training PNGs + 1 held-out PNG with ingest manifests at x2."""
    from dimosr import data as datamod

    root = tmp_path_factory.mktemp("corpus")
    train_dir = root / "train"
    val_dir = root / "val"
    train_dir.mkdir()
    val_dir.mkdir()
    rng = np.random.default_rng(20240817)
    for i in range(16):
        datamod.save_png(make_synthetic_image(rng, 96), train_dir / f"img{i:02d}.png")
    datamod.save_png(make_synthetic_image(rng, 96), val_dir / "held_out.png")

    train_manifest, _ = datamod.ingest(train_dir, scale=2)
    val_manifest, _ = datamod.ingest(val_dir, scale=2)
    train_path = root / "train_x2.json"
    val_path = root / "val_x2.json"
    datamod.write_manifest(train_manifest, train_path)
    datamod.write_manifest(val_manifest, val_path)
    return {"root": root, "train": train_path, "val": val_path,
            "train_manifest": train_manifest, "val_manifest": val_manifest}
