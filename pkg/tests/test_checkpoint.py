import json
import struct

import numpy as np
import pytest

from dimosr.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from dimosr.errors import CheckpointError
from dimosr.model import ModelConfig, build_model, preset_config
from dimosr.optim import AdamState


def small_net(seed=0, **kw):
    cfg = dict(channels=8, num_blocks=2, group_size=1, dilations=(1, 2),
               branch_width=2, erb_hidden=4, erb_depth=2, scale=2)
    cfg.update(kw)
    return build_model(ModelConfig(**cfg), seed=seed)


def randomized_state(net, seed=1):
    rng = np.random.default_rng(seed)
    state = AdamState.for_params(net.params)
    for k in net.params:
        state.m[k] = rng.normal(size=net.params[k].shape).astype(np.float32)
        state.v[k] = rng.uniform(0, 1, size=net.params[k].shape).astype(np.float32)
    state.step = 1234
    return state


def test_round_trip_bitwise(tmp_path):
    net = small_net(seed=5)
    path = tmp_path / "a.dmsr"
    save_checkpoint(path, net, metadata={"iteration": 7})
    bundle = load_checkpoint(path)
    assert bundle.network.config == net.config
    assert bundle.metadata["iteration"] == 7
    assert bundle.network.params.keys() == net.params.keys()
    for k in net.params:
        assert np.array_equal(bundle.network.params[k], net.params[k]), k


def test_save_load_save_byte_identical(tmp_path):
    net = small_net(seed=6)
    state = randomized_state(net)
    p1, p2 = tmp_path / "a.dmsr", tmp_path / "b.dmsr"
    save_checkpoint(p1, net, optimizer=state, rng_state={"seed": 3, "next_sample": 80},
                    metadata={"iteration": 20, "loss_tail": [0.5, 0.25]})
    b = load_checkpoint(p1)
    save_checkpoint(p2, b.network, optimizer=b.optimizer, rng_state=b.rng_state,
                    metadata=b.metadata)
    assert p1.read_bytes() == p2.read_bytes()


def test_optimizer_state_round_trip(tmp_path):
    net = small_net(seed=7)
    state = randomized_state(net, seed=2)
    path = tmp_path / "opt.dmsr"
    save_checkpoint(path, net, optimizer=state)
    loaded = load_checkpoint(path).optimizer
    assert loaded.step == 1234
    assert loaded.beta1 == state.beta1 and loaded.beta2 == state.beta2
    for k in net.params:
        assert np.array_equal(loaded.m[k], state.m[k])
        assert np.array_equal(loaded.v[k], state.v[k])


def test_ablation_config_reloads_with_2c_coeff(tmp_path):
    net = small_net(seed=8, enable_attention=False)  # modulation only
    path = tmp_path / "abl.dmsr"
    save_checkpoint(path, net)
    loaded = load_checkpoint(path).network
    c = loaded.config.channels
    assert loaded.config.enable_attention is False
    assert loaded.params["blocks.0.feb.coeff.weight"].shape[0] == 2 * c


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.dmsr"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_version_mismatch_rejected(tmp_path):
    net = small_net()
    path = tmp_path / "v.dmsr"
    save_checkpoint(path, net)
    raw = bytearray(path.read_bytes())
    raw[4:8] = struct.pack("<I", 99)
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version 99"):
        load_checkpoint(path)


def test_truncated_blob_rejected(tmp_path):
    net = small_net()
    path = tmp_path / "t.dmsr"
    save_checkpoint(path, net)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 64])
    with pytest.raises(CheckpointError, match="outside"):
        load_checkpoint(path)


def _edit_header(path, edit):
    raw = path.read_bytes()
    _, head_len = struct.unpack("<II", raw[4:12])
    header = json.loads(raw[12 : 12 + head_len])
    edit(header)
    new_head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path.write_bytes(MAGIC + struct.pack("<II", 1, len(new_head)) + new_head
                     + raw[12 + head_len :])


def test_corrupt_offset_rejected(tmp_path):
    net = small_net()
    path = tmp_path / "c.dmsr"
    save_checkpoint(path, net)

    def bump(header):
        header["manifest"][-1]["offset"] += 10 ** 9

    _edit_header(path, bump)
    with pytest.raises(CheckpointError, match="outside"):
        load_checkpoint(path)


def test_overlapping_blobs_rejected(tmp_path):
    net = small_net()
    path = tmp_path / "o.dmsr"
    save_checkpoint(path, net)

    def overlap(header):
        header["manifest"][1]["offset"] = header["manifest"][0]["offset"]

    _edit_header(path, overlap)
    with pytest.raises(CheckpointError, match="overlap|match"):
        load_checkpoint(path)


def test_manifest_config_mismatch_rejected(tmp_path):
    net = small_net()
    path = tmp_path / "m.dmsr"
    save_checkpoint(path, net)

    def rename(header):
        header["manifest"][0]["name"] = "blocks.9.nonsense"

    _edit_header(path, rename)
    with pytest.raises(CheckpointError, match="does not match"):
        load_checkpoint(path)


def test_full_preset_round_trip(tmp_path):
    net = build_model(preset_config("dimosr-s", scale=4), seed=9)
    path = tmp_path / "full.dmsr"
    save_checkpoint(path, net)
    loaded = load_checkpoint(path).network
    for k in net.params:
        assert np.array_equal(loaded.params[k], net.params[k])
