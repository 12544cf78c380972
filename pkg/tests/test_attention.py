"""Attention layer: pass-through, shape, distribution, and gradient checks."""

import numpy as np
import pytest

from remaster import tensor
from remaster.attention import SelfAttention, SourceRefAttention, trace_attention
from remaster.errors import ShapeError
from remaster.tensor import Tensor

from gradcheck import assert_close_gradients, finite_difference


def _layer(channels, gamma=0.7, seed=3, dtype=np.float32):
    return SourceRefAttention(channels, gamma_init=gamma,
                              rng=np.random.default_rng(seed), dtype=dtype)


def test_output_shape_and_matrix_size(rng):
    layer = _layer(64)
    h_s = Tensor(rng.standard_normal((1, 64, 5, 8, 8)).astype(np.float32))
    h_r = Tensor(rng.standard_normal((1, 64, 3, 8, 8)).astype(np.float32))
    with trace_attention() as trace:
        out = layer(h_s, h_r)
    assert out.shape == (1, 64, 5, 8, 8)
    assert trace == [(192, 320)]


def test_no_reference_is_bit_exact_passthrough(rng):
    layer = _layer(16)
    h_s = Tensor(rng.standard_normal((2, 16, 3, 4, 4)).astype(np.float32))
    out = layer(h_s, None)
    np.testing.assert_array_equal(out.data, h_s.data)


def test_zero_gamma_is_bit_exact_passthrough(rng):
    layer = _layer(16, gamma=0.0)
    h_s = Tensor(rng.standard_normal((1, 16, 3, 4, 4)).astype(np.float32))
    h_r = Tensor(rng.standard_normal((1, 16, 2, 4, 4)).astype(np.float32))
    out = layer(h_s, h_r)
    np.testing.assert_array_equal(out.data, h_s.data)


def test_single_reference_position_broadcast(rng):
    # one reference position: the softmax weight is 1, so the update is the
    # encoded reference value broadcast over every source position
    layer = _layer(8, gamma=0.9, dtype=np.float64)
    h_s = Tensor(rng.standard_normal((1, 8, 2, 3, 3)), dtype=np.float64)
    h_r = Tensor(rng.standard_normal((1, 8, 1, 1, 1)), dtype=np.float64)
    out = layer(h_s, h_r)
    vec = layer.val_enc.weight.data.reshape(8, 8) @ h_r.data.reshape(8)
    vec += layer.val_enc.bias.data
    expected = h_s.data + 0.9 * vec.reshape(1, 8, 1, 1, 1)
    np.testing.assert_allclose(out.data, expected, rtol=1e-12)


def test_self_attention_shape_and_matrix(rng):
    layer = SelfAttention(512, gamma_init=0.5, rng=np.random.default_rng(0))
    h = Tensor(rng.standard_normal((1, 512, 5, 4, 4)).astype(np.float32) * 0.1)
    with trace_attention() as trace:
        out = layer(h)
    assert out.shape == (1, 512, 5, 4, 4)
    assert trace == [(80, 80)]


def test_self_attention_zero_gamma_identity(rng):
    layer = SelfAttention(16, gamma_init=0.0, rng=np.random.default_rng(0))
    h = Tensor(rng.standard_normal((1, 16, 2, 4, 4)).astype(np.float32))
    np.testing.assert_array_equal(layer(h).data, h.data)


def test_weights_are_probability_distributions(rng):
    layer = _layer(24)
    h_s = Tensor(rng.standard_normal((2, 24, 3, 4, 4)).astype(np.float32) * 5)
    h_r = Tensor(rng.standard_normal((2, 24, 2, 4, 4)).astype(np.float32) * 5)
    w = layer.attention_weights(h_s, h_r).data
    assert (w >= 0).all()
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-5)


def test_output_dims_over_random_shape_grid(rng):
    layer = _layer(16)
    with trace_attention() as trace:
        for _ in range(5):
            ts, hs, ws = rng.integers(1, 5, size=3)
            nr, hr, wr = rng.integers(1, 5, size=3)
            h_s = Tensor(rng.standard_normal((1, 16, ts, hs, ws)).astype(np.float32))
            h_r = Tensor(rng.standard_normal((1, 16, nr, hr, wr)).astype(np.float32))
            out = layer(h_s, h_r)
            assert out.shape == h_s.shape
            assert trace[-1] == (nr * hr * wr, ts * hs * ws)
            assert trace[-1][0] * trace[-1][1] == (nr * hr * wr) * (ts * hs * ws)


def test_reference_position_permutation_invariance(rng):
    layer = _layer(16, gamma=1.3, dtype=np.float64)
    h_s = Tensor(rng.standard_normal((1, 16, 2, 3, 3)), dtype=np.float64)
    h_r_flat = rng.standard_normal((1, 16, 12))
    perm = rng.permutation(12)
    out_a = layer(h_s, Tensor(h_r_flat.reshape(1, 16, 3, 2, 2), dtype=np.float64))
    out_b = layer(h_s, Tensor(h_r_flat[:, :, perm].reshape(1, 16, 3, 2, 2), dtype=np.float64))
    np.testing.assert_allclose(out_a.data, out_b.data, atol=1e-12)


def test_invalid_channels_rejected():
    with pytest.raises(ShapeError):
        SourceRefAttention(20)


def test_batch_mismatch_rejected(rng):
    layer = _layer(8)
    h_s = Tensor(rng.standard_normal((1, 8, 2, 2, 2)).astype(np.float32))
    h_r = Tensor(rng.standard_normal((2, 8, 2, 2, 2)).astype(np.float32))
    with pytest.raises(ShapeError):
        layer(h_s, h_r)


def test_non_finite_rejected(rng):
    layer = _layer(8)
    bad = np.zeros((1, 8, 2, 2, 2), dtype=np.float32)
    bad[0, 0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        layer(Tensor(bad), Tensor(np.zeros((1, 8, 1, 2, 2), dtype=np.float32)))


def test_gradients_match_finite_differences(rng):
    layer = _layer(8, gamma=0.4, dtype=np.float64)
    h_s = Tensor(rng.standard_normal((1, 8, 2, 2, 2)), dtype=np.float64)
    h_r = Tensor(rng.standard_normal((1, 8, 2, 2, 2)), dtype=np.float64)
    proj = rng.standard_normal((1, 8, 2, 2, 2))

    params = [layer.gamma, layer.src_enc.weight, layer.ref_enc.weight,
              layer.val_enc.weight, layer.src_enc.bias]
    loss = tensor.sum_all(tensor.mul(layer(h_s, h_r), Tensor(proj, dtype=np.float64)))
    loss.backward()

    def f():
        with tensor.no_grad():
            return float((layer(h_s, h_r).data * proj).sum())

    num = finite_difference(f, [p.data for p in params])
    for p, n in zip(params, num):
        assert_close_gradients(p.grad, n)
        p.grad = None
