import numpy as np
import pytest

from protostream import encoder
from protostream.numerics import finite_difference_check


def random_params(seed, in_dim=6, hidden=4, out=3):
    return encoder.init_encoder(in_dim, hidden, out, seed=seed)


class TestForward:
    def test_zero_params_zero_feature(self):
        p = random_params(0)
        for arr in p.to_list():
            arr[...] = 0.0
        grid = np.random.default_rng(1).normal(size=(2, 3))
        np.testing.assert_array_equal(encoder.forward(p, grid), np.zeros(3))

    def test_identity_configuration(self):
        p = encoder.identity_encoder(6)
        grid = np.random.default_rng(2).normal(size=(2, 3))
        np.testing.assert_allclose(encoder.forward(p, grid), grid.ravel(), atol=1e-15)

    def test_golden_regression(self):
        # frozen output of init_encoder(8, 5, 3, seed=1234) on a seeded grid
        params = encoder.init_encoder(8, 5, 3, seed=1234)
        grid = np.random.default_rng(99).normal(size=(2, 4))
        expected = np.array([1.17358757, -0.62476296, 1.37506492])
        np.testing.assert_allclose(encoder.forward(params, grid), expected, atol=1e-8)

    def test_batch_matches_per_sample(self):
        p = random_params(3)
        grids = np.random.default_rng(4).normal(size=(5, 2, 3))
        batched = encoder.forward(p, grids)
        for i in range(5):
            np.testing.assert_allclose(batched[i], encoder.forward(p, grids[i]), atol=1e-15)

    def test_dim_mismatch(self):
        p = random_params(0)
        with pytest.raises(ValueError):
            encoder.forward(p, np.zeros((3, 3)))


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        p = random_params(5)
        grids = np.random.default_rng(6).normal(size=(4, 2, 3))
        _, cache = encoder.forward_with_cache(p, grids)
        grads = encoder.backward(p, cache, np.zeros((4, 3)))
        for g in grads:
            np.testing.assert_array_equal(g, 0.0)

    def test_single_linear_layer_outer_product(self):
        # hidden = identity passthrough, so gw for the output layer is h^T g
        p = encoder.identity_encoder(4)
        x = np.random.default_rng(7).normal(size=(1, 2, 2))
        _, cache = encoder.forward_with_cache(p, x)
        g = np.array([[1.0, -2.0, 0.5, 3.0]])
        grads = encoder.backward(p, cache, g)
        np.testing.assert_allclose(grads[2], np.outer(x.ravel(), g.ravel()), atol=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_full_network_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        grids = rng.normal(size=(3, 2, 3))
        target = rng.normal(size=(3, 3))
        base = random_params(seed)

        def loss(arrays):
            p = base.with_arrays(arrays)
            feats, cache = encoder.forward_with_cache(p, grids)
            diff = feats - target
            return 0.5 * float(np.sum(diff * diff)), encoder.backward(p, cache, diff)

        assert finite_difference_check(loss, base.to_list(), h=1e-5) < 1e-4

    def test_upstream_shape_check(self):
        p = random_params(8)
        _, cache = encoder.forward_with_cache(p, np.zeros((2, 2, 3)))
        with pytest.raises(ValueError):
            encoder.backward(p, cache, np.zeros((2, 5)))


class TestFuse:
    def test_delta_zero_returns_new(self):
        old, new = random_params(1), random_params(2)
        fused = encoder.fuse(old, new, 0.0)
        for a, b in zip(fused.to_list(), new.to_list()):
            np.testing.assert_array_equal(a, b)

    def test_delta_one_returns_old(self):
        old, new = random_params(1), random_params(2)
        fused = encoder.fuse(old, new, 1.0)
        for a, b in zip(fused.to_list(), old.to_list()):
            np.testing.assert_array_equal(a, b)

    def test_elementwise_mean(self):
        old, new = random_params(1), random_params(1)
        for arr in old.to_list():
            arr[...] = 2.0
        for arr in new.to_list():
            arr[...] = 4.0
        fused = encoder.fuse(old, new, 0.5)
        for arr in fused.to_list():
            np.testing.assert_array_equal(arr, 3.0)

    def test_self_fusion_fixed_point(self):
        p = random_params(9)
        for delta in (0.0, 0.3, 1.0):
            fused = encoder.fuse(p, p, delta)
            for a, b in zip(fused.to_list(), p.to_list()):
                np.testing.assert_allclose(a, b, atol=1e-15)

    def test_bad_delta(self):
        p = random_params(0)
        with pytest.raises(ValueError):
            encoder.fuse(p, p, 1.5)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            encoder.fuse(random_params(0), random_params(0, in_dim=8), 0.5)
