import numpy as np
import pytest

from lipcap import (
    ConfigError,
    LayerSpec,
    NetworkSpec,
    NormalizerCfg,
    WitnessCfg,
    build_input_witness,
    build_weight_witness,
    capacity_report,
    estimate_activation_sup,
    input_lipschitz_upper,
    loss_weight_lipschitz_upper,
    optimization_report,
    reduction_factors,
    validate_network,
    weight_lipschitz_upper,
    weight_norm_product,
)


def bn_layer(w, sigma2, eps=1.0):
    w = np.atleast_2d(np.asarray(w, dtype=float))
    n = w.shape[0]
    return LayerSpec(W=w, norm=NormalizerCfg.bn(np.zeros(n), np.full(n, sigma2), eps=eps))


class TestInputUpper:
    def test_unnormalized_identity_chain(self):
        spec = validate_network(
            NetworkSpec(2, [LayerSpec(W=np.eye(2)) for _ in range(3)])
        )
        assert input_lipschitz_upper(spec) == 1.0

    def test_norm_times_factor_product(self):
        # weight norms (2, 3) with batch-norm factors (0.5, 0.1)
        spec = validate_network(
            NetworkSpec(1, [bn_layer([[2.0]], 3.0), bn_layer([[3.0]], 99.0)])
        )
        assert abs(input_lipschitz_upper(spec) - 0.3) <= 1e-12

    def test_witness_upper_equals_exact(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            k = int(rng.integers(1, 6))
            widths = tuple(int(rng.integers(1, 8)) for _ in range(k + 1))
            cfg = WitnessCfg(widths=widths, a=tuple(rng.uniform(0.1, 3.0, k)))
            spec, exact = build_input_witness(cfg)
            assert abs(input_lipschitz_upper(spec) - exact) <= 1e-12 * max(1.0, exact)

    def test_product_identity(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            n = int(rng.integers(1, 6))
            layers = [bn_layer(rng.normal(size=(n, n)), rng.uniform(0.1, 5)) for _ in range(3)]
            spec = validate_network(NetworkSpec(n, layers))
            from lipcap.bounds import layer_norm_factors

            expected = weight_norm_product(spec) * np.prod(layer_norm_factors(spec))
            got = input_lipschitz_upper(spec)
            assert abs(got - expected) <= 1e-12 * max(1.0, abs(expected))


class TestActivationSup:
    def test_zero_network_zero_data(self):
        spec = validate_network(NetworkSpec(2, [LayerSpec(W=np.zeros((3, 2)))]))
        sups = estimate_activation_sup(spec, np.zeros((4, 2)))
        assert sups.tolist() == [0.0, 0.0]

    def test_identity_single_layer(self):
        spec = validate_network(
            NetworkSpec(1, [LayerSpec(W=[[1.0]], activation="identity")])
        )
        sups = estimate_activation_sup(spec, [[-3.0], [2.0]])
        assert sups[0] == 3.0

    def test_monotone_in_data(self):
        rng = np.random.default_rng(43)
        spec = validate_network(NetworkSpec(3, [LayerSpec(W=rng.normal(size=(4, 3)))]))
        small = rng.normal(size=(10, 3))
        large = np.vstack([small, rng.normal(size=(10, 3))])
        assert (estimate_activation_sup(spec, large) >= estimate_activation_sup(spec, small)).all()


class TestWeightUpper:
    def test_last_layer_case(self):
        # single layer with norm factor 0.5 and A_0 = 2
        spec = validate_network(NetworkSpec(1, [bn_layer([[7.0]], 3.0)]))
        w, y = weight_lipschitz_upper(spec, 1, [2.0, 123.0])
        assert (w, y) == (1.0, 0.5)

    def test_unnormalized_tail_product(self):
        spec = validate_network(
            NetworkSpec(
                1, [LayerSpec(W=[[5.0]]), LayerSpec(W=[[2.0]]), LayerSpec(W=[[3.0]])]
            )
        )
        w, y = weight_lipschitz_upper(spec, 1, [1.0, 0.0, 0.0, 0.0])
        assert (w, y) == (6.0, 6.0)

    def test_witness_y_bound_is_exact(self):
        rng = np.random.default_rng(44)
        for _ in range(10):
            widths = (3, 4, 3, 2)
            cfg = WitnessCfg(widths=widths, a=(0.0, 1.5, 2.0), pivot=1)
            lower = [LayerSpec(W=rng.normal(size=(4, 3)))]
            spec, exact_y, _ = build_weight_witness(cfg, lower)
            A = estimate_activation_sup(spec, rng.normal(size=(20, 3)))
            _, y_bound = weight_lipschitz_upper(spec, 1, A)
            assert abs(y_bound - exact_y) <= 1e-12 * max(1.0, exact_y)

    def test_loss_bound_equals_weight_bound(self):
        rng = np.random.default_rng(45)
        spec = validate_network(
            NetworkSpec(2, [LayerSpec(W=rng.normal(size=(3, 2))), LayerSpec(W=rng.normal(size=(2, 3)))])
        )
        A = estimate_activation_sup(spec, rng.normal(size=(10, 2)))
        for i in (1, 2):
            w, _ = weight_lipschitz_upper(spec, i, A)
            assert loss_weight_lipschitz_upper(spec, i, A) == w

    def test_index_range(self):
        spec = validate_network(NetworkSpec(1, [LayerSpec(W=[[1.0]])]))
        with pytest.raises(ValueError):
            weight_lipschitz_upper(spec, 2, [1.0, 1.0])

    def test_nonincreasing_when_layers_dominate(self):
        # factors in [0.6, 1] with weight norms >= 2 keep ||W_{i+1}|| * f_i >= 1
        rng = np.random.default_rng(46)
        for _ in range(10):
            layers = []
            for _ in range(4):
                sigma2 = float(rng.uniform(0.0, 1.7))  # factor 1/sqrt(s2+1) in [0.6, 1]
                layers.append(bn_layer([[float(rng.uniform(2.0, 5.0))]], sigma2))
            spec = validate_network(NetworkSpec(1, layers))
            A = np.ones(5)
            ys = [weight_lipschitz_upper(spec, i, A)[1] for i in range(1, 5)]
            assert all(ys[i + 1] <= ys[i] * (1 + 1e-12) for i in range(3))


class TestReductionFactors:
    def test_product_of_factors(self):
        spec = validate_network(
            NetworkSpec(
                1,
                [bn_layer([[1.0]], 3.0), bn_layer([[1.0]], 24.0), bn_layer([[1.0]], 99.0)],
            )
        )
        red = reduction_factors(spec)
        np.testing.assert_allclose(red.per_layer, [0.5, 0.2, 0.1], rtol=1e-12)
        assert abs(red.tight - 0.01) <= 1e-14

    def test_unnormalized_is_one(self):
        spec = validate_network(NetworkSpec(2, [LayerSpec(W=np.ones((2, 2)))]))
        red = reduction_factors(spec)
        assert red.tight == 1.0 and red.coarse == 1.0 and red.sigma_floor is None

    def test_coarse_dominates_tight(self):
        rng = np.random.default_rng(47)
        for _ in range(50):
            layers = []
            for _ in range(int(rng.integers(1, 5))):
                n = int(rng.integers(1, 5))
                layers.append(
                    LayerSpec(
                        W=rng.normal(size=(n, layers[-1].out_dim if layers else 3)),
                        norm=NormalizerCfg.bn(np.zeros(n), rng.uniform(0, 5, n), eps=0.5),
                    )
                )
            spec = validate_network(NetworkSpec(3, layers))
            red = reduction_factors(spec)
            assert red.coarse >= red.tight * (1 - 1e-12)


class TestOptimizationReport:
    def _spec(self, s=(2.0, 2.0, 2.0, 2.0)):
        layers = [LayerSpec(W=[[1.0]], s_bound=b) for b in s]
        return validate_network(NetworkSpec(1, layers))

    def test_iteration_constant(self):
        rep = optimization_report(self._spec(), alpha=0.1)
        assert rep[0].layer == 1
        assert abs(rep[0].iteration_lower - 80.0) <= 1e-12

    def test_last_pivot_uses_only_final_bound(self):
        rep = optimization_report(self._spec((2.0, 3.0, 5.0, 7.0)), alpha=1.0)
        assert rep[-1].layer == 3
        assert rep[-1].iteration_lower == 7.0

    def test_alpha_scaling(self):
        r1 = optimization_report(self._spec(), alpha=0.2)
        r2 = optimization_report(self._spec(), alpha=0.1)
        for a, b in zip(r1, r2):
            assert abs(b.iteration_lower - 2 * a.iteration_lower) <= 1e-9
            assert abs(b.evals_unnormalized - 4 * a.evals_unnormalized) <= 1e-9

    def test_missing_bounds(self):
        spec = validate_network(NetworkSpec(1, [LayerSpec(W=[[1.0]]), LayerSpec(W=[[1.0]])]))
        with pytest.raises(ConfigError):
            optimization_report(spec, alpha=0.5)

    def test_alpha_positive(self):
        with pytest.raises(ValueError):
            optimization_report(self._spec(), alpha=0.0)

    def test_normalized_evals_need_stats(self):
        rep = optimization_report(self._spec(), alpha=0.5)
        assert all(c.evals_normalized is None for c in rep)
        layers = [bn_layer([[1.0]], 3.0) for _ in range(3)]
        for l in layers:
            l.s_bound = 2.0
        spec = validate_network(NetworkSpec(1, layers))
        rep = optimization_report(spec, alpha=0.5)
        # sigma floor 2, K=3: layer 1 exponent -(K - i + 1) = -3
        assert abs(rep[0].evals_normalized - 2.0 ** (-3) * 2.0 * 2.0 / 0.25) <= 1e-12


class TestCapacityReport:
    def test_assembles_consistently(self):
        rng = np.random.default_rng(48)
        layers = [bn_layer(rng.normal(size=(3, 2)), 2.0), LayerSpec(W=rng.normal(size=(2, 3)))]
        spec = validate_network(NetworkSpec(2, layers))
        data = rng.normal(size=(20, 2))
        rep = capacity_report(spec, data=data)
        expected = rep.pw * np.prod(rep.norm_factors)
        assert abs(rep.input_upper - expected) <= 1e-12 * max(1.0, expected)
        assert rep.a_sup is not None and rep.w_bounds.shape == (2,)
