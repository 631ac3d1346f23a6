import numpy as np
import pytest

from lipcap import (
    Activation,
    ConfigError,
    LayerSpec,
    NetworkSpec,
    NormalizerCfg,
    ShapeError,
    batch_prenorm_variance,
    forward,
    forward_batch,
    forward_trace,
    validate_network,
    weight_norm_product,
)
from lipcap.witness import WitnessCfg, build_input_witness


def random_plain_net(rng, max_depth=4, max_width=6):
    depth = int(rng.integers(1, max_depth + 1))
    widths = [int(rng.integers(1, max_width + 1)) for _ in range(depth + 1)]
    layers = [
        LayerSpec(W=rng.normal(size=(widths[k + 1], widths[k])))
        for k in range(depth)
    ]
    return validate_network(NetworkSpec(widths[0], layers))


class TestValidate:
    def test_accepts_consistent_shapes(self):
        spec = NetworkSpec(
            2,
            [
                LayerSpec(W=np.ones((3, 2))),
                LayerSpec(W=np.ones((1, 3))),
            ],
        )
        validate_network(spec)

    def test_shape_mismatch(self):
        spec = NetworkSpec(2, [LayerSpec(W=np.ones((3, 2))), LayerSpec(W=np.ones((1, 2)))])
        with pytest.raises(ShapeError, match="layer 2"):
            validate_network(spec)

    def test_gn_coverage_error(self):
        spec = NetworkSpec(
            2, [LayerSpec(W=np.ones((2, 2)), norm=NormalizerCfg.gn(((0, 1, 2),)))]
        )
        with pytest.raises(ConfigError, match="layer 1"):
            validate_network(spec)

    def test_s_bound_violation(self):
        spec = NetworkSpec(2, [LayerSpec(W=[[2.0, 3.0]], s_bound=2.0)])
        with pytest.raises(ConfigError, match="exceeds"):
            validate_network(spec)


class TestForward:
    def test_relu_layer(self):
        spec = validate_network(NetworkSpec(2, [LayerSpec(W=[[1.0, -1.0]])]))
        assert forward(spec, [3.0, 1.0]).tolist() == [2.0]

    def test_bn_layer(self):
        spec = validate_network(
            NetworkSpec(
                2,
                [LayerSpec(W=[[1.0, -1.0]], norm=NormalizerCfg.bn([0.0], [3.0], eps=1.0))],
            )
        )
        assert forward(spec, [3.0, 1.0]).tolist() == [1.0]

    def test_zero_weights(self):
        rng = np.random.default_rng(31)
        spec = validate_network(
            NetworkSpec(3, [LayerSpec(W=np.zeros((4, 3))), LayerSpec(W=np.zeros((2, 4)))])
        )
        for _ in range(10):
            assert np.abs(forward(spec, rng.normal(size=3))).max() == 0.0

    def test_input_length_checked(self):
        spec = validate_network(NetworkSpec(2, [LayerSpec(W=np.ones((1, 2)))]))
        with pytest.raises(ShapeError):
            forward(spec, [1.0, 2.0, 3.0])


class TestForwardTrace:
    def test_bn_example_trace(self):
        spec = validate_network(
            NetworkSpec(
                2,
                [LayerSpec(W=[[1.0, -1.0]], norm=NormalizerCfg.bn([0.0], [3.0], eps=1.0))],
            )
        )
        out, trace = forward_trace(spec, [3.0, 1.0])
        assert trace.pre_norm[0].tolist() == [2.0]
        assert trace.post_norm[0].tolist() == [1.0]
        assert trace.post_activation[0].tolist() == [1.0]
        assert out.tolist() == [1.0]

    def test_matches_forward_on_random_nets(self):
        rng = np.random.default_rng(32)
        for _ in range(100):
            spec = random_plain_net(rng)
            x = rng.normal(size=spec.input_dim)
            out, trace = forward_trace(spec, x)
            np.testing.assert_array_equal(out, forward(spec, x))
            assert [t.size for t in trace.post_activation] == list(spec.widths[1:])


class TestWeightNormProduct:
    def test_identities(self):
        spec = validate_network(
            NetworkSpec(3, [LayerSpec(W=np.eye(3)), LayerSpec(W=np.eye(3))])
        )
        assert weight_norm_product(spec) == 1.0

    def test_products(self):
        spec = validate_network(
            NetworkSpec(
                1,
                [
                    LayerSpec(W=[[2.0]]),
                    LayerSpec(W=[[3.0]]),
                    LayerSpec(W=[[0.5]]),
                ],
            )
        )
        assert weight_norm_product(spec) == 3.0

    def test_zero_layer(self):
        spec = validate_network(
            NetworkSpec(2, [LayerSpec(W=np.ones((2, 2))), LayerSpec(W=np.zeros((1, 2)))])
        )
        assert weight_norm_product(spec) == 0.0


class TestBatchPrenormVariance:
    def test_identical_inputs(self):
        rng = np.random.default_rng(33)
        spec = random_plain_net(rng)
        x = rng.normal(size=spec.input_dim)
        batch = np.tile(x, (6, 1))
        pv = batch_prenorm_variance(spec, batch)
        assert all(v.max() == 0.0 for v in pv.per_layer)

    def test_single_unit_example(self):
        spec = validate_network(NetworkSpec(1, [LayerSpec(W=[[1.0]])]))
        pv = batch_prenorm_variance(spec, [[0.0], [2.0]])
        assert pv.per_layer[0].tolist() == [1.0]

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(34)
        for _ in range(20):
            spec = random_plain_net(rng)
            batch = rng.normal(size=(8, spec.input_dim))
            pv = batch_prenorm_variance(spec, batch)
            # independent two-pass computation from per-sample traces
            pre = [[] for _ in range(spec.depth)]
            for x in batch:
                _, tr = forward_trace(spec, x)
                for l, y in enumerate(tr.pre_norm):
                    pre[l].append(y)
            for l in range(spec.depth):
                ys = np.stack(pre[l])
                mean = ys.sum(axis=0) / ys.shape[0]
                var = ((ys - mean) ** 2).sum(axis=0) / ys.shape[0]
                np.testing.assert_allclose(pv.per_layer[l], var, rtol=1e-10, atol=1e-12)

    def test_empty_batch_rejected(self):
        rng = np.random.default_rng(35)
        spec = random_plain_net(rng)
        with pytest.raises(ShapeError):
            batch_prenorm_variance(spec, np.empty((0, spec.input_dim)))


class TestLipschitzSoundness:
    def test_unnormalized_output_distance_bounded_by_pw(self):
        rng = np.random.default_rng(36)
        for _ in range(20):
            spec = random_plain_net(rng)
            pw = weight_norm_product(spec)
            X = rng.normal(0, 2, size=(50, spec.input_dim))
            X2 = rng.normal(0, 2, size=(50, spec.input_dim))
            F1 = forward_batch(spec, X)
            F2 = forward_batch(spec, X2)
            lhs = np.abs(F1 - F2).max(axis=1)
            rhs = pw * np.abs(X - X2).max(axis=1)
            assert (lhs <= rhs * (1 + 1e-10) + 1e-12).all()

    def test_positive_homogeneity_on_witness_nets(self):
        rng = np.random.default_rng(37)
        for _ in range(20):
            k = int(rng.integers(1, 4))
            widths = tuple(int(rng.integers(1, 5)) for _ in range(k + 1))
            cfg = WitnessCfg(widths=widths, a=tuple(rng.uniform(0.2, 2.0, k)))
            spec, _ = build_input_witness(cfg)
            x = rng.uniform(0.1, 2.0, widths[0])
            alpha = float(rng.uniform(0.5, 3.0))
            np.testing.assert_allclose(
                forward(spec, alpha * x), alpha * forward(spec, x), rtol=1e-12
            )


class TestBatchModes:
    def test_batch_mode_bn_uses_batch_statistics(self):
        spec = validate_network(
            NetworkSpec(
                1,
                [
                    LayerSpec(
                        W=[[1.0]],
                        norm=NormalizerCfg.bn([5.0], [9.0], eps=1e-5),
                        activation=Activation.IDENTITY,
                    )
                ],
            )
        )
        X = np.array([[0.0], [2.0]])
        out = forward_batch(spec, X, mode="batch")
        # batch stats: mean 1, var 1 -> normalized to about -1, 1
        np.testing.assert_allclose(out.ravel(), [-1.0, 1.0], rtol=1e-5)
        frozen = forward_batch(spec, X, mode="analysis")
        np.testing.assert_allclose(frozen.ravel(), [(0 - 5) / 3, (2 - 5) / 3], rtol=1e-6)

    def test_batch_matches_single_forward(self):
        rng = np.random.default_rng(38)
        for _ in range(20):
            spec = random_plain_net(rng)
            X = rng.normal(size=(5, spec.input_dim))
            batch_out = forward_batch(spec, X)
            single = np.stack([forward(spec, x) for x in X])
            np.testing.assert_allclose(batch_out, single, rtol=1e-12, atol=1e-14)
