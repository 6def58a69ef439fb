import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventrerank import EnergyFunction, EventSequence, FeatureConfig, energy, energy_grad, featurize
from eventrerank.core import split_at_horizon
from eventrerank.energy import continuation_features, prefix_tail_counts

from conftest import central_diff, event_sequences, random_sequence, rel_err


def zero_fn(cfg, hidden=(64, 32)):
    fn = EnergyFunction(cfg, hidden)
    fn.theta[:] = 0.0
    return fn


class TestFeaturize:
    def test_dimension_formula(self):
        assert FeatureConfig(17, time_basis_count=8, window_count=4).dim == 120

    def test_empty_continuation(self):
        cfg = FeatureConfig(3)
        s = EventSequence([0.2, 0.4], [1, 2], 0.0, 2.0)
        f = featurize(s, (1.0, 2.0), cfg)
        K, W = 3, cfg.window_count
        assert np.all(f[: K * W] == 0)
        assert f[-1] == 0
        assert np.all(f[K * (W + 1):] == 0)

    def test_single_window_counts(self):
        cfg = FeatureConfig(2, window_count=1)
        s = EventSequence([0.5, 0.7], [0, 0], 0.0, 1.0)
        f = featurize(s, (0.0, 1.0), cfg)
        assert f[:2].tolist() == [2.0, 0.0]
        assert f[-1] == 2

    def test_layout_by_hand(self):
        cfg = FeatureConfig(2, time_basis_count=1, window_count=2)
        s = EventSequence([0.5, 1.2, 1.9], [1, 0, 1], 0.0, 2.0)
        f = featurize(s, (1.0, 2.0), cfg)
        assert f[:4].tolist() == [1, 0, 0, 1]       # window 0: type 0; window 1: type 1
        assert f[4:6].tolist() == [0, 1]            # prefix tail (0, 1]
        gaps = np.array([0.2, 0.7])
        assert f[6] == pytest.approx(gaps.mean())
        assert f[7] == pytest.approx(gaps.var())
        u0, u1 = 0.2, 0.9
        assert f[8:12] == pytest.approx([np.sin(np.pi * u0), np.cos(np.pi * u0),
                                         np.sin(np.pi * u1), np.cos(np.pi * u1)])
        assert f[12] == 2

    @settings(max_examples=60, deadline=None)
    @given(event_sequences(max_events=12), st.floats(1.0, 8.0))
    def test_split_path_matches_full_path(self, s, T):
        cfg = FeatureConfig(3)
        sp = split_at_horizon(s, T, s.t_end)
        tail = prefix_tail_counts(sp.prefix, sp.T, sp.T_prime - sp.T, 3)
        via_split = continuation_features(tail, sp.truth, sp.T, sp.T_prime, cfg)
        assert np.array_equal(featurize(s, sp, cfg), via_split)


class TestEnergyFunction:
    def test_zero_network(self, rng):
        cfg = FeatureConfig(3)
        fn = zero_fn(cfg)
        F = rng.normal(size=(10, cfg.dim))
        assert np.all(fn.energies(F) == 0)

    def test_output_layer_starts_at_zero(self):
        fn = EnergyFunction(FeatureConfig(3), rng=0)
        assert fn.energies(np.ones((2, fn.cfg.dim))).tolist() == [0.0, 0.0]

    def test_identical_features_identical_energy(self, rng):
        cfg = FeatureConfig(2, window_count=1)
        fn = EnergyFunction(cfg, rng=1)
        fn.theta[:] = rng.normal(size=fn.num_params)
        a = EventSequence([0.5, 0.7], [0, 0], 0.0, 1.0)
        b = EventSequence([0.5, 0.7], [0, 0], 0.0, 1.0)
        assert energy(fn, a, (0.0, 1.0)) == energy(fn, b, (0.0, 1.0))

    def test_linear_readout(self):
        cfg = FeatureConfig(2)
        fn = EnergyFunction(cfg, hidden=())
        W, b = fn.layers[0]
        W[:] = 0.0
        W[0, 0] = 1.0
        b[:] = 0.0
        F = np.zeros((1, cfg.dim))
        F[0, 0] = 3.0
        assert fn.energies(F)[0] == 3.0

    def test_zero_weights_bias_gradient(self):
        cfg = FeatureConfig(2)
        fn = zero_fn(cfg)
        s = EventSequence([0.5, 0.7], [0, 1], 0.0, 1.0)
        _, g = energy_grad(fn, s, (0.2, 1.0))
        assert g[-1] == 1.0

    def test_gradient_matches_finite_differences(self, rng):
        for _ in range(20):
            cfg = FeatureConfig(2, time_basis_count=2, window_count=2)
            fn = EnergyFunction(cfg, hidden=(5, 3), rng=rng)
            fn.theta[:] = rng.normal(scale=0.5, size=fn.num_params)
            s = random_sequence(rng, 8, 2, 2.0)
            _, g = energy_grad(fn, s, (1.0, 2.0))
            fd = central_diff(lambda th: energy(fn.copy(th), s, (1.0, 2.0)), fn.theta)
            assert rel_err(g, fd) <= 1e-4

    def test_saturated_unit_has_no_gradient(self):
        cfg = FeatureConfig(1, time_basis_count=1, window_count=1)
        fn = EnergyFunction(cfg, hidden=(2,))
        fn.theta[:] = 0.0
        (W1, b1), (W2, b2) = fn.layers
        b1[0] = 50.0               # unit 0 saturated
        W2[0, :] = 1.0
        F = np.ones((1, cfg.dim))
        _, g = fn.backward(F, np.ones(1))
        gW1 = g[: W1.size].reshape(W1.shape)
        assert np.all(np.abs(gW1[0]) < 1e-8)
        assert abs(g[W1.size]) < 1e-8  # bias of the saturated unit

    def test_lipschitz_along_segments(self, rng):
        """|E(a) - E(b)| <= max_segment |grad E| * |a - b| (mean-value bound)."""
        cfg = FeatureConfig(3)
        F = rng.normal(size=(1, cfg.dim))
        for _ in range(20):
            fn = EnergyFunction(cfg, hidden=(16, 8), rng=rng)
            fn.theta[:] = rng.normal(scale=0.3, size=fn.num_params)
            d = rng.normal(scale=0.05, size=fn.num_params)
            a, b = fn.theta.copy(), fn.theta + d
            L = max(np.linalg.norm(fn.copy(a + s * d).backward(F, np.ones(1))[1])
                    for s in np.linspace(0, 1, 201))
            dE = abs(fn.copy(b).energies(F)[0] - fn.copy(a).energies(F)[0])
            assert dE <= 1.01 * L * np.linalg.norm(d)

    def test_standardization_and_copy(self, rng):
        cfg = FeatureConfig(2)
        fn = EnergyFunction(cfg, rng=0)
        F = rng.normal(3.0, 2.0, size=(500, cfg.dim))
        F[:, 0] = 1.0
        fn.set_standardization(F)
        assert fn.feat_std[0] == 1.0
        assert np.allclose(fn.feat_mean[1:], 3.0, atol=0.4)
        c = fn.copy()
        assert c == fn and c.theta is not fn.theta
