"""Autoregressive point-process base models.

Two families are provided: a homogeneous multivariate Poisson process and a
multivariate Hawkes process with exponential kernels

    lambda_k(t) = mu[k] + sum_{t_j < t} alpha[k_j, k] * exp(-decay[k_j, k] * (t - t_j)).

Models hold their parameters in constrained form (rates >= 0, decays > 0);
:mod:`eventrerank.fitting` handles the unconstrained reparameterisation.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod

import numpy as np

import numba

from .core import EventSequence


class OrderingError(ValueError):
    """Query time is not strictly after the conditioning history."""


class DegenerateLikelihoodWarning(RuntimeWarning):
    """An observed event has zero intensity; the log-likelihood is -inf."""


class IntensityModel(ABC):
    family: str = ""

    def __init__(self, num_types: int):
        self.num_types = int(num_types)

    @abstractmethod
    def intensities(self, t: float, hist: EventSequence) -> np.ndarray:
        """All K intensities at ``t`` given events of ``hist`` strictly before ``t``."""

    @abstractmethod
    def intensity_integral(self, a: float, b: float, hist: EventSequence) -> float:
        """Integral of the total intensity over ``[a, b]``; no events may fall in ``(a, b)``."""

    @abstractmethod
    def upper_bound(self, t0: float, hist: EventSequence) -> float:
        """A finite bound on the total intensity from ``t0`` until the next event."""

    @abstractmethod
    def batch_log_likelihood(self, seqs, with_grad=False):
        """Summed log-likelihood of ``seqs`` and, optionally, its gradient
        with respect to :meth:`to_vector`."""

    @abstractmethod
    def to_vector(self) -> np.ndarray:
        ...

    @classmethod
    @abstractmethod
    def from_vector(cls, num_types: int, vec) -> "IntensityModel":
        ...

    @property
    def num_params(self) -> int:
        return self.to_vector().size

    def __eq__(self, other):
        return (
            type(self) is type(other)
            and self.num_types == other.num_types
            and np.array_equal(self.to_vector(), other.to_vector())
        )

    __hash__ = None


def _check_after(t, hist):
    if len(hist) and not t > hist.times[-1]:
        raise OrderingError(f"query time {t} is not after the last history event {hist.times[-1]}")


def _finish(value):
    if value == -math.inf:
        warnings.warn("zero intensity at an observed event", DegenerateLikelihoodWarning, stacklevel=3)
    return value


class PoissonModel(IntensityModel):
    family = "poisson"

    def __init__(self, rates):
        rates = np.array(rates, dtype=np.float64).reshape(-1)
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("Poisson rates must be finite and >= 0")
        super().__init__(rates.size)
        self.rates = rates
        self.rates.setflags(write=False)

    def intensities(self, t, hist):
        _check_after(t, hist)
        return self.rates.copy()

    def intensity_integral(self, a, b, hist):
        return float(self.rates.sum() * (b - a))

    def upper_bound(self, t0, hist):
        return float(self.rates.sum())

    def batch_log_likelihood(self, seqs, with_grad=False):
        K = self.num_types
        counts = np.zeros(K)
        duration = 0.0
        for s in seqs:
            counts += np.bincount(s.types, minlength=K)[:K]
            duration += s.t_end - s.t_start
        with np.errstate(divide="ignore"):
            logr = np.log(self.rates)
        event_term = float(np.sum(np.where(counts > 0, counts * logr, 0.0)))
        if np.any((counts > 0) & (self.rates == 0)):
            event_term = -math.inf
        value = _finish(event_term - float(self.rates.sum()) * duration)
        if not with_grad:
            return value
        with np.errstate(divide="ignore", invalid="ignore"):
            grad = np.where(counts > 0, counts / self.rates, 0.0) - duration
        return value, grad

    def to_vector(self):
        return self.rates.copy()

    @classmethod
    def from_vector(cls, num_types, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != num_types:
            raise ValueError(f"expected {num_types} rates, got {vec.size}")
        return cls(vec)

    def __repr__(self):
        return f"PoissonModel(rates={self.rates.tolist()})"


class HawkesExpModel(IntensityModel):
    family = "hawkes_exp"

    def __init__(self, mu, alpha, decay):
        mu = np.array(mu, dtype=np.float64).reshape(-1)
        K = mu.size
        alpha = np.array(alpha, dtype=np.float64).reshape(K, K)
        decay = np.array(decay, dtype=np.float64).reshape(K, K)
        if np.any(mu < 0) or np.any(alpha < 0):
            raise ValueError("mu and alpha must be >= 0")
        if np.any(decay <= 0):
            raise ValueError("decay must be > 0")
        for a in (mu, alpha, decay):
            if not np.all(np.isfinite(a)):
                raise ValueError("Hawkes parameters must be finite")
            a.setflags(write=False)
        super().__init__(K)
        self.mu, self.alpha, self.decay = mu, alpha, decay

    def excitation(self, t: float, hist: EventSequence, *, inclusive=False) -> np.ndarray:
        """Per-type excitation sum at ``t`` from events before (or at) ``t``."""
        if inclusive:
            mask = hist.times <= t
        else:
            mask = hist.times < t
        tj = hist.times[mask]
        kj = hist.types[mask]
        if tj.size == 0:
            return np.zeros(self.num_types)
        dt = (t - tj)[:, None]
        return np.sum(self.alpha[kj] * np.exp(-self.decay[kj] * dt), axis=0)

    def intensities(self, t, hist):
        _check_after(t, hist)
        return self.mu + self.excitation(t, hist)

    def intensity_integral(self, a, b, hist):
        mask = hist.times <= a
        tj, kj = hist.times[mask], hist.types[mask]
        total = float(self.mu.sum()) * (b - a)
        if tj.size:
            al, de = self.alpha[kj], self.decay[kj]
            ea = np.exp(-de * (a - tj)[:, None])
            eb = np.exp(-de * (b - tj)[:, None])
            total += float(np.sum(al / de * (ea - eb)))
        return total

    def upper_bound(self, t0, hist):
        # total intensity only decays between events, so its value just after t0 dominates
        return float(np.sum(self.mu + self.excitation(t0, hist, inclusive=True)))

    def batch_log_likelihood(self, seqs, with_grad=False):
        seqs = list(seqs)
        times, types, offsets, bounds = _pack(seqs)
        value, grad = _hawkes_ll(times, types, offsets, bounds, self.mu, self.alpha,
                                 self.decay, with_grad)
        if with_grad:
            return _finish(value), grad
        return _finish(value)

    def to_vector(self):
        return np.concatenate([self.mu, self.alpha.ravel(), self.decay.ravel()])

    @classmethod
    def from_vector(cls, num_types, vec):
        K = num_types
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != K + 2 * K * K:
            raise ValueError(f"expected {K + 2 * K * K} parameters, got {vec.size}")
        return cls(vec[:K], vec[K : K + K * K], vec[K + K * K :])

    @property
    def branching_matrix(self) -> np.ndarray:
        """Expected direct offspring of type k from one type-j event."""
        return self.alpha / self.decay

    def __repr__(self):
        return (
            f"HawkesExpModel(mu={self.mu.tolist()}, alpha={self.alpha.tolist()}, "
            f"decay={self.decay.tolist()})"
        )


def _pack(seqs):
    n = [len(s) for s in seqs]
    offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
    np.cumsum(n, out=offsets[1:])
    times = np.concatenate([s.times for s in seqs]) if seqs else np.zeros(0)
    types = np.concatenate([s.types for s in seqs]) if seqs else np.zeros(0, np.int64)
    bounds = np.array([(s.t_start, s.t_end) for s in seqs], dtype=np.float64).reshape(-1, 2)
    return times, types.astype(np.int64), offsets, bounds


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _hawkes_ll(times, types, offsets, bounds, mu, alpha, decay, with_grad):
    """Summed log-likelihood via the exponential-kernel recursion.

    R[j, k] holds sum over earlier type-j events of exp(-decay[j, k] * (t - t_l))
    and Q[j, k] the same terms weighted by (t - t_l), both at the current event.
    Gradient layout: mu (K), alpha (K*K, row-major), decay (K*K).
    """
    K = mu.shape[0]
    grad = np.zeros(K + 2 * K * K)
    value = 0.0
    mu_total = 0.0
    for k in range(K):
        mu_total += mu[k]
    R = np.zeros((K, K))
    Q = np.zeros((K, K))
    for s in range(offsets.shape[0] - 1):
        lo, hi = offsets[s], offsets[s + 1]
        t_start, t_end = bounds[s, 0], bounds[s, 1]
        duration = t_end - t_start
        value -= mu_total * duration
        if with_grad:
            for k in range(K):
                grad[k] -= duration
        R[:, :] = 0.0
        Q[:, :] = 0.0
        for i in range(lo, hi):
            ki = types[i]
            if i > lo:
                dt = times[i] - times[i - 1]
                kp = types[i - 1]
                for j in range(K):
                    for k in range(K):
                        e = math.exp(-decay[j, k] * dt)
                        r_prev = R[j, k] + (1.0 if j == kp else 0.0)
                        Q[j, k] = e * (Q[j, k] + dt * r_prev)
                        R[j, k] = e * r_prev
            lam = mu[ki]
            for j in range(K):
                lam += alpha[j, ki] * R[j, ki]
            value += math.log(lam)
            if with_grad:
                w = 1.0 / lam
                grad[ki] += w
                for j in range(K):
                    grad[K + j * K + ki] += w * R[j, ki]
                    grad[K + K * K + j * K + ki] -= w * alpha[j, ki] * Q[j, ki]
            # compensator contribution of event i over (t_i, t_end]
            D = t_end - times[i]
            for k in range(K):
                b = decay[ki, k]
                tail = math.exp(-b * D)
                om = 1.0 - tail
                value -= alpha[ki, k] / b * om
                if with_grad:
                    grad[K + ki * K + k] -= om / b
                    grad[K + K * K + ki * K + k] -= alpha[ki, k] * (D * tail / b - om / (b * b))
    return value, grad


FAMILIES = {cls.family: cls for cls in (PoissonModel, HawkesExpModel)}


def log_likelihood(model: IntensityModel, seq: EventSequence) -> float:
    """Event-term minus compensator over ``[seq.t_start, seq.t_end]``.

    Returns ``-inf`` (with a :class:`DegenerateLikelihoodWarning`) when an
    observed event has zero intensity.
    """
    if len(seq) and seq.types.max() >= model.num_types:
        raise ValueError("sequence has type ids outside the model's range")
    return model.batch_log_likelihood([seq])


def log_likelihood_grad(model: IntensityModel, seq: EventSequence):
    return model.batch_log_likelihood([seq], with_grad=True)


def intensity_at(model: IntensityModel, k: int, t: float, hist: EventSequence) -> float:
    return float(model.intensities(t, hist)[k])


def thinning_upper_bound(model: IntensityModel, t0: float, hist: EventSequence) -> float:
    if len(hist) and t0 < hist.times[-1]:
        raise OrderingError(f"t0={t0} precedes the last history event {hist.times[-1]}")
    return model.upper_bound(t0, hist)
