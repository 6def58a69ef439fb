import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from eventrerank import (
    Dataset,
    EventSequence,
    HawkesExpModel,
    OrderingError,
    PoissonModel,
    fit_mle,
    intensity_at,
    log_likelihood,
    log_likelihood_grad,
    thinning_upper_bound,
)
from eventrerank.fitting import NumericalError, OptimizerConfig, inv_softplus, softplus
from eventrerank.models import DegenerateLikelihoodWarning
from eventrerank.synth import SynthSpec, generate

from conftest import central_diff, random_sequence, rel_err

EMPTY = EventSequence([], [], 0.0, 0.0)


def quad_log_likelihood(model, seq):
    """Independent oracle: direct kernel sums plus adaptive quadrature of the compensator."""
    K = model.num_types

    def lam(t):
        past = seq.times < t
        out = np.array(model.mu, float)
        for tj, kj in zip(seq.times[past], seq.types[past]):
            out += model.alpha[kj] * np.exp(-model.decay[kj] * (t - tj))
        return out

    events = sum(math.log(lam(t)[k]) for t, k in zip(seq.times, seq.types))
    pts = [seq.t_start, *seq.times, seq.t_end]
    comp = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            comp += integrate.quad(lambda t: lam(t).sum(), a, b, epsabs=1e-13, epsrel=1e-13)[0]
    return events - comp


class TestLogLikelihood:
    def test_poisson_closed_form(self):
        m = PoissonModel([2.0])
        s = EventSequence([0.3, 0.7], [0, 0], 0.0, 1.0)
        assert log_likelihood(m, s) == pytest.approx(2 * math.log(2) - 2, abs=1e-12)
        assert log_likelihood(m, s) == pytest.approx(-0.61371, abs=1e-5)

    def test_empty_sequence_is_minus_compensator(self):
        assert log_likelihood(PoissonModel([2.0]), EventSequence([], [], 0.0, 1.0)) == -2.0

    def test_hawkes_matches_quadrature(self):
        m = HawkesExpModel([0.5], [[1.0]], [[2.0]])
        s = EventSequence([0.0, 0.5], [0, 0], 0.0, 1.0)
        assert log_likelihood(m, s) == pytest.approx(quad_log_likelihood(m, s), abs=1e-6)

    def test_hawkes_integral_exactness_random(self, rng):
        for _ in range(25):
            K = int(rng.integers(1, 4))
            m = HawkesExpModel(rng.uniform(0.1, 1, K), rng.uniform(0, 1, (K, K)),
                               rng.uniform(0.5, 3, (K, K)))
            s = random_sequence(rng, int(rng.integers(0, 11)), K, 5.0)
            pts = [0.0, *s.times, 5.0]
            closed = sum(m.intensity_integral(a, b, s) for a, b in zip(pts[:-1], pts[1:]))
            lam = lambda t: m.intensities(t, s.window(0.0, t - 1e-15, left_closed=True)).sum()
            quad = sum(integrate.quad(lam, a, b, epsabs=1e-13, epsrel=1e-13)[0]
                       for a, b in zip(pts[:-1], pts[1:]) if b > a)
            assert closed == pytest.approx(quad, abs=1e-8)
            assert log_likelihood(m, s) == pytest.approx(quad_log_likelihood(m, s), abs=1e-8)

    def test_degenerate_returns_minus_inf(self):
        m = PoissonModel([0.0, 1.0])
        s = EventSequence([0.5], [0], 0.0, 1.0)
        with pytest.warns(DegenerateLikelihoodWarning):
            assert log_likelihood(m, s) == -math.inf

    def test_batch_is_sum(self, rng):
        m = HawkesExpModel([0.3, 0.2], [[0.2, 0.1], [0.0, 0.4]], [[1, 2], [1.5, 1]])
        seqs = [random_sequence(rng, 6, 2, 3.0) for _ in range(5)]
        assert m.batch_log_likelihood(seqs) == pytest.approx(
            sum(log_likelihood(m, s) for s in seqs), rel=1e-12)


class TestGradients:
    @pytest.mark.parametrize("family", ["poisson", "hawkes_exp"])
    def test_matches_central_differences(self, family, rng):
        for _ in range(20):
            K = int(rng.integers(1, 4))
            if family == "poisson":
                m = PoissonModel(rng.uniform(0.2, 2, K))
            else:
                m = HawkesExpModel(rng.uniform(0.2, 1, K), rng.uniform(0.05, 0.8, (K, K)),
                                   rng.uniform(0.5, 3, (K, K)))
            s = random_sequence(rng, int(rng.integers(1, 12)), K, 4.0)
            v, g = log_likelihood_grad(m, s)
            fd = central_diff(lambda x: log_likelihood(type(m).from_vector(K, x), s),
                              m.to_vector())
            assert rel_err(g, fd) <= 1e-4


class TestIntensity:
    def test_hawkes_kernel_value(self):
        m = HawkesExpModel([0.5], [[1.0]], [[2.0]])
        h = EventSequence([0.0], [0], 0.0, 0.0)
        assert intensity_at(m, 0, 0.5, h) == pytest.approx(0.5 + math.exp(-1), abs=1e-12)

    def test_poisson_history_independent(self, rng):
        m = PoissonModel([2.0])
        for t in rng.uniform(1, 10, 5):
            assert intensity_at(m, 0, t, random_sequence(rng, 4, 1, 0.99)) == 2.0

    def test_empty_history_gives_mu(self):
        m = HawkesExpModel([0.3, 0.7], np.ones((2, 2)), np.ones((2, 2)))
        assert m.intensities(4.2, EMPTY).tolist() == [0.3, 0.7]

    def test_ordering_error(self):
        h = EventSequence([0.5], [0], 0.0, 0.5)
        with pytest.raises(OrderingError):
            intensity_at(PoissonModel([1.0]), 0, 0.4, h)
        with pytest.raises(OrderingError):
            thinning_upper_bound(PoissonModel([1.0]), 0.4, h)


class TestUpperBound:
    def test_examples(self):
        assert thinning_upper_bound(HawkesExpModel([0.5], [[1]], [[2]]), 0.0, EMPTY) == 0.5
        assert thinning_upper_bound(PoissonModel([1.0, 2.0]), 0.0, EMPTY) == 3.0

    def test_hawkes_grid_domination(self):
        m = HawkesExpModel([0.5], [[1.0]], [[2.0]])
        h = EventSequence([0.0], [0], 0.0, 0.0)
        bound = thinning_upper_bound(m, 0.0, h)
        assert bound == pytest.approx(1.5)
        grid = np.linspace(0, 5, 1001)[1:]
        assert max(m.intensities(t, h).sum() for t in grid) <= bound

    def test_random_domination(self, rng):
        for _ in range(30):
            K = int(rng.integers(1, 4))
            m = HawkesExpModel(rng.uniform(0.1, 1, K), rng.uniform(0, 2, (K, K)),
                               rng.uniform(0.2, 4, (K, K)))
            h = random_sequence(rng, int(rng.integers(0, 8)), K, 3.0)
            t0 = 3.0 + float(rng.uniform(0, 0.5))
            bound = thinning_upper_bound(m, t0, h)
            grid = t0 + np.linspace(0, 5, 1001)[1:]
            assert max(m.intensities(t, h).sum() for t in grid) <= bound + 1e-12


class TestFitting:
    def test_softplus_inverse(self):
        x = np.array([1e-6, 0.3, 5.0, 40.0])
        assert np.allclose(softplus(inv_softplus(x)), x, rtol=1e-12)

    @pytest.mark.parametrize("method", ["lbfgs", "adam"])
    def test_poisson_closed_form_mle(self, method, rng):
        seqs = [random_sequence(rng, int(rng.integers(0, 30)), 1, 10.0) for _ in range(40)]
        d = Dataset(seqs, 1)
        mle = d.num_events / (10.0 * len(seqs))
        opt = OptimizerConfig(method=method, lr=0.05, max_epochs=400, patience=400)
        m = fit_mle("poisson", d, opt)
        tol = 1e-6 if method == "lbfgs" else 1e-3
        assert m.rates[0] == pytest.approx(mle, abs=tol)

    def test_hawkes_parameter_recovery(self):
        spec = SynthSpec("hawkes", {"mu": [0.2], "alpha": [[0.8]], "decay": [[1.0]]},
                         num_seqs=1000, horizon=100.0, seed=21)
        m = fit_mle("hawkes_exp", generate(spec), OptimizerConfig(method="lbfgs"))
        for got, want in ((m.mu[0], 0.2), (m.alpha[0, 0], 0.8), (m.decay[0, 0], 1.0)):
            assert abs(got - want) / want < 0.15

    def test_adam_history_and_early_stopping(self, rng):
        d = Dataset([random_sequence(rng, 10, 2, 5.0) for _ in range(20)], 2)
        hist = []
        fit_mle("hawkes_exp", d, OptimizerConfig(max_epochs=30, patience=3), dev=d, history=hist)
        assert 1 <= len(hist) <= 30
        assert {"epoch", "train_ll", "dev_ll", "wall_ms"} <= hist[0].keys()

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            fit_mle("poisson", Dataset([], 1))

    def test_non_finite_gradient_reports_sequence(self):
        d = Dataset([EventSequence([0.5], [0], 0.0, 1.0)], 2, seq_ids=["bad-seq"])
        init = PoissonModel([0.0, 1.0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with np.errstate(all="ignore"), pytest.raises(NumericalError, match="bad-seq"):
                fit_mle("poisson", d, OptimizerConfig(max_epochs=1), init=init)

    def test_model_equality_and_vector_round_trip(self):
        m = HawkesExpModel([0.1, 0.2], [[0.1, 0.2], [0.3, 0.4]], [[1, 2], [3, 4]])
        assert HawkesExpModel.from_vector(2, m.to_vector()) == m
        assert m.branching_matrix == pytest.approx(m.alpha / m.decay)
