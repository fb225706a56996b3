"""Checkpoint serialization.

Layout: magic "DMSR", little-endian u32 format version, u32 header length,
a JSON header (config, blob manifest, optimizer scalars, rng state,
metadata), then raw little-endian float32 blobs in manifest order. The
encoding is canonical (sorted JSON keys, fixed blob order) so that
save -> load -> save is byte-identical.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError
from .model import Network, config_from_dict, config_to_dict, param_specs

MAGIC = b"DMSR"
VERSION = 1


@dataclass
class CheckpointBundle:
    network: Network
    optimizer: object = None
    rng_state: dict = None
    metadata: dict = None


def _blob(arr):
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_checkpoint(path, network, optimizer=None, rng_state=None, metadata=None):
    """Write the network (and optional Adam state) to `path`."""
    names = [name for name, _, _ in param_specs(network.config)]
    items = [(name, network.params[name]) for name in names]
    if optimizer is not None:
        items += [(f"opt.m.{n}", optimizer.m[n]) for n in names]
        items += [(f"opt.v.{n}", optimizer.v[n]) for n in names]

    manifest = []
    blobs = []
    offset = 0
    for name, arr in items:
        raw = _blob(arr)
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)

    header = {
        "config": config_to_dict(network.config),
        "manifest": manifest,
        "optimizer": None if optimizer is None else {
            "step": optimizer.step,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
        },
        "rng": rng_state,
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(head)))
        f.write(head)
        for raw in blobs:
            f.write(raw)


def load_checkpoint(path):
    """Read a checkpoint, validating the manifest against the embedded
    model config before materializing any parameter."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, head_len = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version} unsupported "
                              f"(expected {VERSION})")
    if len(data) < 12 + head_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[12 : 12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e

    config = config_from_dict(header["config"])
    opt_header = header.get("optimizer")
    base = [(name, tuple(shape)) for name, shape, _ in param_specs(config)]
    expected = list(base)
    if opt_header is not None:
        expected += [(f"opt.m.{n}", s) for n, s in base]
        expected += [(f"opt.v.{n}", s) for n, s in base]
    manifest = header["manifest"]
    if [(e["name"], tuple(e["shape"])) for e in manifest] != expected:
        raise CheckpointError(f"{path}: manifest does not match the embedded model config")

    blob_section = data[12 + head_len :]
    arrays = {}
    claimed = []
    for entry in manifest:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if start < 0 or end > len(blob_section):
            raise CheckpointError(f"{path}: blob {entry['name']!r} [{start}, {end}) is outside "
                                  f"the {len(blob_section)}-byte blob section")
        claimed.append((start, end, entry["name"]))
        arrays[entry["name"]] = (
            np.frombuffer(blob_section, dtype="<f4", count=count, offset=start)
            .reshape(shape)
            .copy()
        )
    claimed.sort()
    for (s0, e0, n0), (s1, e1, n1) in zip(claimed, claimed[1:]):
        if s1 < e0:
            raise CheckpointError(f"{path}: blobs {n0!r} and {n1!r} overlap")

    params = {name: arrays[name] for name, _, _ in param_specs(config)}
    network = Network(config, params)

    optimizer = None
    if opt_header is not None:
        from .optim import AdamState  # deferred: optim depends on checkpoint

        optimizer = AdamState(
            m={n: arrays[f"opt.m.{n}"] for n in params},
            v={n: arrays[f"opt.v.{n}"] for n in params},
            step=opt_header["step"],
            beta1=opt_header["beta1"],
            beta2=opt_header["beta2"],
            eps=opt_header["eps"],
        )
    return CheckpointBundle(
        network=network,
        optimizer=optimizer,
        rng_state=header.get("rng"),
        metadata=header.get("metadata") or {},
    )
