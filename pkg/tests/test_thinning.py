import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from eventrerank import (
    EventSequence,
    HawkesExpModel,
    PoissonModel,
    RngStream,
    draw_noise,
    thinning_sample,
)
from eventrerank.models import IntensityModel
from eventrerank.thinning import THREADS_ENV, ThinningError, default_workers

EMPTY = EventSequence([], [], 0.0, 0.0)


def test_zero_length_horizon():
    prefix = EventSequence([0.2], [0], 0.0, 1.0)
    out = thinning_sample(PoissonModel([5.0]), prefix, 1.0, RngStream(0))
    assert len(out) == 0 and out.t_start == out.t_end == 1.0


def test_horizon_before_prefix_end():
    with pytest.raises(ValueError):
        thinning_sample(PoissonModel([1.0]), EventSequence([], [], 0.0, 1.0), 0.5, 0)


def test_poisson_counts_follow_poisson_law():
    stream = RngStream(7)
    m = PoissonModel([2.0])
    counts = np.array([len(thinning_sample(m, EMPTY, 1.0, stream.spawn(i)))
                       for i in range(10_000)])
    se = math.sqrt(2.0 / counts.size)
    assert abs(counts.mean() - 2.0) <= 3 * se
    # chi-square against Poisson(2) with the upper tail pooled
    observed = np.bincount(np.minimum(counts, 7), minlength=8)
    probs = stats.poisson.pmf(np.arange(7), 2.0)
    probs = np.append(probs, 1 - probs.sum())
    _, p = stats.chisquare(observed, probs * counts.size)
    assert p > 0.01


def test_superposition_type_fraction():
    stream = RngStream(8)
    m = PoissonModel([1.0, 3.0])
    types = np.concatenate([thinning_sample(m, EMPTY, 1.0, stream.spawn(i)).types
                            for i in range(10_000)])
    frac = types.mean()
    se = math.sqrt(0.75 * 0.25 / types.size)
    assert abs(frac - 0.75) <= 3 * se


def test_hawkes_branching_mean():
    mu, alpha, beta, T = 0.5, 0.5, 1.0, 200.0
    m = HawkesExpModel([mu], [[alpha]], [[beta]])
    stream = RngStream(9)
    counts = [len(thinning_sample(m, EMPTY, T, stream.spawn(i))) for i in range(10_000)]
    stationary = mu * T / (1 - alpha / beta)
    assert abs(np.mean(counts) - stationary) / stationary < 0.05


class TestInvariants:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32), st.floats(0.0, 3.0), st.floats(0.01, 5.0))
    def test_events_inside_window_and_increasing(self, seed, T, length):
        m = HawkesExpModel([0.5, 0.8], [[0.4, 0.3], [0.2, 0.5]], [[1.0, 2.0], [1.5, 1.0]])
        prefix = EventSequence([T / 2], [1], 0.0, T) if T > 0 else EventSequence([], [], 0.0, 0.0)
        out = thinning_sample(m, prefix, prefix.t_end + length, RngStream(seed))
        assert np.all(out.times > prefix.t_end) and np.all(out.times <= prefix.t_end + length)
        assert np.all(np.diff(out.times) > 0)
        assert set(out.types.tolist()) <= {0, 1}

    def test_deterministic_per_stream(self):
        m = HawkesExpModel([0.5], [[0.5]], [[1.0]])
        a = thinning_sample(m, EMPTY, 50.0, RngStream(3).spawn(4))
        b = thinning_sample(m, EMPTY, 50.0, RngStream(3).spawn(4))
        c = thinning_sample(m, EMPTY, 50.0, RngStream(3).spawn(5))
        assert a == b and a != c

    def test_fast_kernel_matches_generic_loop(self):
        prefix = EventSequence([0.4, 1.1], [0, 1], 0.0, 1.5)
        for m in (PoissonModel([0.7, 1.3]),
                  HawkesExpModel([0.5, 0.3], [[0.4, 0.3], [0.2, 0.5]], [[1, 2], [1.5, 1]])):
            for seed in range(5):
                fast = thinning_sample(m, prefix, 8.0, RngStream(seed))
                slow = thinning_sample(m, prefix, 8.0, RngStream(seed), fast=False)
                assert np.array_equal(fast.types, slow.types)
                assert np.allclose(fast.times, slow.times, rtol=1e-12, atol=1e-12)

    def test_safety_limit(self):
        class Runaway(IntensityModel):
            def __init__(self):
                super().__init__(1)

            def intensities(self, t, hist):
                return np.zeros(1)

            def intensity_integral(self, a, b, hist):
                return 0.0

            def upper_bound(self, t0, hist):
                return 1e6

            def batch_log_likelihood(self, seqs, with_grad=False):
                raise NotImplementedError

            def to_vector(self):
                return np.zeros(0)

            @classmethod
            def from_vector(cls, num_types, vec):
                return cls()

        with pytest.raises(ThinningError):
            thinning_sample(Runaway(), EMPTY, 1.0, 0, max_proposals=1000)


class TestDrawNoise:
    def test_shares_prefix_and_count(self):
        prefix = EventSequence([0.5, 0.9], [0, 1], 0.0, 1.0)
        m = HawkesExpModel([0.5, 0.5], np.full((2, 2), 0.2), np.ones((2, 2)))
        draws = draw_noise(m, prefix, 3.0, 5, RngStream(1))
        assert len(draws) == 5
        assert all(d.t_start == 1.0 and d.t_end == 3.0 for d in draws)

    def test_single_draw_equals_substream(self):
        m = PoissonModel([2.0])
        (one,) = draw_noise(m, EMPTY, 4.0, 1, RngStream(2))
        assert one == thinning_sample(m, EMPTY, 4.0, RngStream(2).spawn(0))

    def test_deterministic_and_worker_independent(self):
        m = PoissonModel([2.0, 1.0])
        a = draw_noise(m, EMPTY, 4.0, 8, RngStream(5))
        b = draw_noise(m, EMPTY, 4.0, 8, RngStream(5), workers=4)
        assert a == b

    def test_n_zero(self):
        with pytest.raises(ValueError):
            draw_noise(PoissonModel([1.0]), EMPTY, 1.0, 0, 0)

    def test_thread_env(self, monkeypatch):
        monkeypatch.setenv(THREADS_ENV, "3")
        assert default_workers() == 3
