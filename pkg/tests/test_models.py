import struct

import numpy as np
import pytest

from xmvae.errors import FormatError, ShapeError
from xmvae.models import (
    HEAD_SCALE,
    MAGIC,
    KeypointDecoder,
    KeypointEncoder,
    ModelSet,
    count_parameters,
    handedness_feature,
    init_weights,
    lipschitz_bound,
    load_checkpoint,
    modality,
    save_checkpoint,
)


def test_default_architecture_shapes():
    enc = KeypointEncoder(modality("2d", True))
    init_weights(enc, 0)
    g = enc.encode(np.zeros((3, 42)), np.ones(3))
    assert g.mu.shape == g.log_var.shape == (3, 32)
    dec = KeypointDecoder(modality("3d"))
    assert dec.decode(np.zeros((3, 32))).shape == (3, 63)
    # five hidden layers of 512 plus the heads
    assert count_parameters(dec) == 32 * 512 + 512 + 4 * (512 * 512 + 512) + 512 * 63 + 63
    assert count_parameters(enc) == 43 * 512 + 512 + 4 * (512 * 512 + 512) + 2 * (512 * 32 + 32)


def test_zero_weights_give_prior_and_zero_output():
    enc = KeypointEncoder(modality("2d"), 4, (8,))
    dec = KeypointDecoder(modality("3d"), 4, (8,))
    g = enc.encode(np.random.default_rng(0).normal(size=(2, 42)))
    np.testing.assert_array_equal(g.mu.data, 0.0)
    np.testing.assert_array_equal(g.log_var.data, 0.0)
    np.testing.assert_array_equal(dec.decode(np.ones((2, 4))).data, 0.0)


def test_encoder_rejects_wrong_width():
    enc = KeypointEncoder(modality("2d"), 4, (8,))
    with pytest.raises(ShapeError):
        enc.encode(np.zeros((2, 63)))


def test_flagged_encoder_needs_handedness():
    enc = KeypointEncoder(modality("2d", True), 4, (8,))
    with pytest.raises(ValueError):
        enc.encode(np.zeros((1, 42)))


def test_log_var_is_clamped():
    enc = KeypointEncoder(modality("2d"), 2, (4,))
    enc.lv_b.assign([100.0, -100.0])
    lv = enc.encode(np.zeros((1, 42))).log_var.data
    np.testing.assert_array_equal(lv, [[30.0, -30.0]])


def test_handedness_feature_encodings():
    np.testing.assert_array_equal(handedness_feature(["R", "L"], 2).ravel(), [1, -1])
    np.testing.assert_array_equal(handedness_feature([True, False], 2).ravel(), [1, -1])
    with pytest.raises(ValueError):
        handedness_feature(["X"], 1)


def test_init_is_seeded_and_log_variance_head_is_small():
    a = KeypointEncoder(modality("3d"), 8, (16, 16))
    b = KeypointEncoder(modality("3d"), 8, (16, 16))
    init_weights(a, 7)
    init_weights(b, 7)
    for pa, pb in zip(a.parameters, b.parameters):
        np.testing.assert_array_equal(pa.data, pb.data)
    limit = np.sqrt(6.0 / (16 + 8)) * HEAD_SCALE
    assert np.abs(a.lv_w.data).max() <= limit
    assert np.abs(a.mu_w.data).max() > limit
    np.testing.assert_array_equal(a.mu_b.data, 0.0)


def test_variants_share_initial_weights():
    small = ModelSet.build(["2d"], ["3d"], latent_dim=4, hidden=(8,), seed=3)
    large = ModelSet.build(["2d", "2d", "3d"], ["3d", "2d", "3d"], latent_dim=4, hidden=(8,), seed=3)
    for p in small.parameters:
        np.testing.assert_array_equal(p.data, large.state()[p.name])


def test_lipschitz_bound_holds_on_random_pairs():
    dec = KeypointDecoder(modality("3d"), 4, (16, 16))
    init_weights(dec, 1)
    rng = np.random.default_rng(2)
    z1, z2 = rng.normal(size=(200, 4)), rng.normal(size=(200, 4))
    ratio = np.linalg.norm(dec.decode(z1).data - dec.decode(z2).data, axis=1) / np.linalg.norm(z1 - z2, axis=1)
    assert ratio.max() <= lipschitz_bound(dec, 2) <= lipschitz_bound(dec)


def test_lipschitz_bound_of_identity_layers():
    dec = KeypointDecoder(modality("2d"), 42, (42,))
    dec.body.layers[0][0].assign(np.eye(42))
    dec.out_w.assign(np.eye(42))
    assert lipschitz_bound(dec, 2) == pytest.approx(1.0)


def test_checkpoint_roundtrip(tmp_path):
    models = ModelSet.build(["2d", "3d"], ["2d", "3d"], latent_dim=4, hidden=(8, 6), seed=0)
    path = tmp_path / "m.ckpt"
    models.save(path)
    again = ModelSet.load(path)
    assert again.latent_dim == 4
    assert sorted(again.encoders) == ["2d", "3d"]
    assert again.encoders["2d"].spec.handedness_flag
    for name, arr in models.state().items():
        assert again.state()[name].tobytes() == arr.tobytes()
    again.save(tmp_path / "m2.ckpt")
    assert (tmp_path / "m2.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_layout(tmp_path):
    path = tmp_path / "a.ckpt"
    save_checkpoint(path, [("w", np.array([[1.0, 2.0]]))])
    raw = path.read_bytes()
    assert raw[:6] == MAGIC
    assert struct.unpack("<I", raw[6:10]) == (1,)
    assert raw[10:11] == b"w"
    assert struct.unpack("<I", raw[11:15]) == (2,)
    assert struct.unpack("<2Q", raw[15:31]) == (1, 2)
    assert np.frombuffer(raw[31:], "<f8").tolist() == [1.0, 2.0]


def test_corrupt_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTVAE" + b"\0" * 20)
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_truncated_checkpoint(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, [("w", np.ones(4))])
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError):
        load_checkpoint(path)


def test_foreign_tensor_names_rejected(tmp_path):
    path = tmp_path / "f.ckpt"
    save_checkpoint(path, [("layer.weight", np.ones((2, 2)))])
    with pytest.raises(FormatError):
        ModelSet.load(path)
