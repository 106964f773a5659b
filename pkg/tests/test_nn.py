import struct
import zlib

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from mvgrasp.errors import NumericError, SpecError, WeightFileError
from mvgrasp.nn import Adam, BatchNorm2D, Conv2D, ConvTranspose2D, LayerSpec, adam_step, param_count
from mvgrasp.nn.layers import he_uniform
from mvgrasp.nn.weights import MAGIC, decode_weights, encode_weights, load_weights, save_weights


# ------------------------------------------------------------------ layers


def test_he_uniform_bounds(rng):
    w = he_uniform(rng, (1000,), 6, np.float64)
    assert np.abs(w).max() <= 1.0
    assert np.abs(w).max() > 0.9


def test_layer_shapes_and_grads(rng):
    conv = Conv2D(2, 4, 3, 2, rng=rng, dtype=np.float64)
    x = rng.standard_normal((3, 2, 9, 9))
    y = conv.forward(x, train=True)
    assert y.shape == (3, 4, 5, 5)
    gx = conv.backward(np.ones_like(y))
    assert gx.shape == x.shape and conv.grads["w"].shape == (4, 2, 3, 3)
    np.testing.assert_allclose(conv.grads["b"], np.full(4, 75.0))
    tconv = ConvTranspose2D(4, 2, 3, 2, rng=rng, dtype=np.float64)
    assert tconv.forward(y, train=True).shape == (3, 2, 10, 10)


def test_batchnorm_layer_buffers():
    bn = BatchNorm2D(3)
    assert set(bn.buffers()) == {"running_mean", "running_var"}
    assert not bn.stats.initialized
    bn.forward(np.random.default_rng(0).standard_normal((2, 3, 4, 4)).astype(np.float32), train=True)
    assert bn.stats.initialized


def test_layer_spec_validation():
    with pytest.raises(SpecError):
        LayerSpec("pool")
    with pytest.raises(SpecError):
        LayerSpec("conv", (3, 3), 8, stride=4)
    with pytest.raises(SpecError):
        LayerSpec("conv", (3, 3), 8, padding="valid")


def test_param_count_small_stack():
    layers = [LayerSpec("conv", (3, 3), 4), LayerSpec("batchnorm"), LayerSpec("relu"), LayerSpec("tconv", (1, 1), 2)]
    # 3*3*1*4 + 4, 2*4, 1*1*4*2 + 2
    assert param_count(layers) == 40 + 8 + 10


# ------------------------------------------------------------------ adam


def test_adam_first_step_is_lr():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    Adam(lr=0.01).step(p, {"w": np.array([5.0, -0.1, 1e-3])})
    np.testing.assert_allclose(p["w"], [0.99, -1.99, 2.99], atol=1e-7)


def _adam_reference(w, steps, lr=0.1, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = 2 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return w


def test_adam_rollout_on_quadratic():
    p = {"w": np.array([2.0])}
    opt = Adam(lr=0.1)
    for _ in range(200):
        opt.step(p, {"w": 2 * p["w"]})
    assert p["w"][0] == pytest.approx(_adam_reference(2.0, 200), abs=1e-12)
    assert abs(p["w"][0]) < 0.05


def test_adam_step_functional_and_nonfinite():
    p = {"w": np.zeros(2)}
    state = Adam()
    p, state = adam_step(p, {"w": np.ones(2)}, state)
    assert state.t == 1
    with pytest.raises(NumericError):
        state.step(p, {"w": np.array([np.nan, 0.0])})
    assert state.t == 1


# ------------------------------------------------------------------ weight files


def test_weights_roundtrip(tmp_path, rng):
    t = {"a.w": rng.standard_normal((2, 3, 4)).astype(np.float32), "b": np.arange(5, dtype=np.float32), "scalar": np.array(1.5)}
    save_weights(t, tmp_path / "w.mvgw")
    back = load_weights(tmp_path / "w.mvgw")
    assert list(back) == list(t)
    for k in t:
        assert np.array_equal(back[k], t[k].astype(np.float32))


@given(st.dictionaries(st.text(min_size=1, max_size=20), hnp.arrays(np.float32, hnp.array_shapes(max_dims=4, max_side=4)), max_size=5))
def test_weights_roundtrip_property(tensors):
    back = decode_weights(encode_weights(tensors))
    assert list(back) == list(tensors)
    for k, v in tensors.items():
        assert np.array_equal(back[k], v, equal_nan=True)


def _recrc(body):
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def test_weights_corruption_cases(tmp_path):
    blob = encode_weights({"w": np.ones((2, 2), np.float32)})
    with pytest.raises(WeightFileError, match="magic"):
        decode_weights(b"XXXX" + blob[4:])
    with pytest.raises(WeightFileError, match="checksum"):
        decode_weights(blob[:-6] + blob[-5:])
    with pytest.raises(WeightFileError):
        decode_weights(blob[:10])
    flipped = bytearray(blob)
    flipped[20] ^= 0xFF
    with pytest.raises(WeightFileError, match="checksum"):
        decode_weights(bytes(flipped))
    body = blob[:-4]
    with pytest.raises(WeightFileError, match="version"):
        decode_weights(_recrc(MAGIC + struct.pack("<I", 2) + body[8:]))
    with pytest.raises(WeightFileError, match="trailing"):
        decode_weights(_recrc(body + b"\0"))
    huge = body[:12] + struct.pack("<H", 1) + b"w" + struct.pack("<B", 2) + struct.pack("<II", 2**20, 2**20)
    with pytest.raises(WeightFileError, match="overflow"):
        decode_weights(_recrc(huge))
    with pytest.raises(WeightFileError, match="truncated"):
        decode_weights(_recrc(body[:-3]))
    with pytest.raises(WeightFileError):
        load_weights(tmp_path / "missing.mvgw")
