"""Sequence energy: global-statistics features fed through a tanh MLP.

Feature layout for K types, W windows and B time frequencies
(dimension ``K*(W+1) + 2 + 4*B + 1``):

    [0, K*W)            continuation counts, window-major (w*K + k)
    [K*W, K*(W+1))      per-type counts in the prefix tail, the last
                        (T' - T) time units before T
    +0, +1              mean and variance of continuation gaps / (T' - T),
                        the first gap measured from T
    next 2*B            sin, cos of omega_b * u_first, u = (t - T) / (T' - T)
    next 2*B            sin, cos of omega_b * u_last
    last                continuation length

Continuation-derived slots are zero for an empty continuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import EventSequence, HorizonSplit


@dataclass(frozen=True)
class FeatureConfig:
    num_types: int
    time_basis_count: int = 8
    window_count: int = 4

    def __post_init__(self):
        if self.num_types < 1 or self.time_basis_count < 1 or self.window_count < 1:
            raise ValueError("num_types, time_basis_count and window_count must all be >= 1")

    @property
    def dim(self) -> int:
        K, W, B = self.num_types, self.window_count, self.time_basis_count
        return K * (W + 1) + 2 + 2 * B * 2 + 1

    @property
    def frequencies(self) -> np.ndarray:
        return np.pi * np.arange(1, self.time_basis_count + 1)


def _window(split) -> tuple[float, float]:
    if isinstance(split, HorizonSplit):
        return split.T, split.T_prime
    T, T_prime = split
    return float(T), float(T_prime)


@numba.njit(cache=True, nogil=True)
def _continuation_features(out, ct, ck, T, H, K, W, omega):
    B = omega.shape[0]
    n = ct.shape[0]
    if n == 0:
        return
    prev = T
    s1 = 0.0
    s2 = 0.0
    for i in range(n):
        u = (ct[i] - T) / H
        w = min(int(u * W), W - 1)
        out[w * K + ck[i]] += 1.0
        g = (ct[i] - prev) / H
        s1 += g
        s2 += g * g
        prev = ct[i]
    off = K * (W + 1)
    mean = s1 / n
    out[off] = mean
    out[off + 1] = max(s2 / n - mean * mean, 0.0)
    u_first = (ct[0] - T) / H
    u_last = (ct[n - 1] - T) / H
    for b in range(B):
        out[off + 2 + b] = math.sin(omega[b] * u_first)
        out[off + 2 + B + b] = math.cos(omega[b] * u_first)
        out[off + 2 + 2 * B + b] = math.sin(omega[b] * u_last)
        out[off + 2 + 3 * B + b] = math.cos(omega[b] * u_last)
    out[out.shape[0] - 1] = n


def prefix_tail_counts(prefix: EventSequence, T: float, H: float, K: int) -> np.ndarray:
    tail = (prefix.times > T - H) & (prefix.times <= T)
    return np.bincount(prefix.types[tail], minlength=K)[:K].astype(np.float64)


def continuation_features(tail_counts, cont: EventSequence, T, T_prime, cfg: FeatureConfig):
    """Features of ``prefix + cont`` given the prefix tail counts."""
    K, W = cfg.num_types, cfg.window_count
    f = np.zeros(cfg.dim)
    f[K * W : K * (W + 1)] = tail_counts
    _continuation_features(f, cont.times, cont.types, T, T_prime - T, K, W, cfg.frequencies)
    return f


def featurize(seq: EventSequence, split, cfg: FeatureConfig) -> np.ndarray:
    """Feature vector of a completed sequence.

    ``split`` supplies ``T`` and ``T'`` (a :class:`HorizonSplit` or a pair).
    """
    T, T_prime = _window(split)
    K = cfg.num_types
    cont = (seq.times > T) & (seq.times <= T_prime)
    f = np.zeros(cfg.dim)
    f[K * cfg.window_count : K * (cfg.window_count + 1)] = prefix_tail_counts(
        seq, T, T_prime - T, K
    )
    _continuation_features(f, np.ascontiguousarray(seq.times[cont]),
                           np.ascontiguousarray(seq.types[cont]), T, T_prime - T,
                           K, cfg.window_count, cfg.frequencies)
    return f


class EnergyFunction:
    """Tanh MLP over standardised sequence features, ending in one linear unit.

    All weights live in the flat vector ``theta``; ``layers`` holds
    ``(W, b)`` views into it, W shaped (out, in).
    """

    def __init__(self, cfg: FeatureConfig, hidden=(64, 32), theta=None,
                 feat_mean=None, feat_std=None, rng=None):
        self.cfg = cfg
        self.sizes = (cfg.dim, *map(int, hidden), 1)
        n = sum(o * i + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))
        if theta is None:
            theta = self._init_theta(rng)
        theta = np.array(theta, dtype=np.float64)
        if theta.size != n:
            raise ValueError(f"expected {n} parameters, got {theta.size}")
        self.theta = theta
        self.feat_mean = np.zeros(cfg.dim) if feat_mean is None else np.array(feat_mean, float)
        self.feat_std = np.ones(cfg.dim) if feat_std is None else np.array(feat_std, float)
        self._bind()

    def _shapes(self):
        return list(zip(self.sizes[1:], self.sizes[:-1]))

    def _init_theta(self, rng):
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        parts = []
        shapes = self._shapes()
        for li, (o, i) in enumerate(shapes):
            if li == len(shapes) - 1:
                parts += [np.zeros(o * i), np.zeros(o)]
            else:
                bound = 1.0 / np.sqrt(i)
                parts += [gen.uniform(-bound, bound, o * i), gen.uniform(-bound, bound, o)]
        return np.concatenate(parts)

    def _bind(self):
        self.layers = []
        pos = 0
        for o, i in self._shapes():
            W = self.theta[pos : pos + o * i].reshape(o, i)
            pos += o * i
            b = self.theta[pos : pos + o]
            pos += o
            self.layers.append((W, b))

    @property
    def num_params(self) -> int:
        return self.theta.size

    def copy(self, theta=None) -> "EnergyFunction":
        return EnergyFunction(
            self.cfg, self.sizes[1:-1],
            self.theta.copy() if theta is None else theta,
            self.feat_mean.copy(), self.feat_std.copy(),
        )

    def set_standardization(self, features: np.ndarray, floor: float = 1e-8):
        features = np.asarray(features, dtype=np.float64)
        self.feat_mean = features.mean(axis=0)
        std = features.std(axis=0)
        self.feat_std = np.where(std > floor, std, 1.0)

    def _forward(self, F):
        x = (np.atleast_2d(F) - self.feat_mean) / self.feat_std
        acts = [x]
        for li, (W, b) in enumerate(self.layers):
            x = x @ W.T + b
            if li < len(self.layers) - 1:
                x = np.tanh(x)
            acts.append(x)
        return acts

    def energies(self, F: np.ndarray) -> np.ndarray:
        """Energies for a (n, D) feature matrix."""
        return self._forward(F)[-1][:, 0]

    def backward(self, F: np.ndarray, dE: np.ndarray):
        """Energies and ``sum_n dE[n] * dE_n/dtheta`` for a feature batch."""
        acts = self._forward(F)
        delta = np.asarray(dE, dtype=np.float64).reshape(-1, 1)
        grads = []
        for li in range(len(self.layers) - 1, -1, -1):
            W, _ = self.layers[li]
            a_in = acts[li]
            grads.append((delta.T @ a_in, delta.sum(axis=0)))
            if li:
                delta = (delta @ W) * (1.0 - a_in * a_in)
        grads.reverse()
        flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
        return acts[-1][:, 0], flat

    def __eq__(self, other):
        return (
            isinstance(other, EnergyFunction)
            and self.cfg == other.cfg
            and self.sizes == other.sizes
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.feat_mean, other.feat_mean)
            and np.array_equal(self.feat_std, other.feat_std)
        )

    __hash__ = None

    def __repr__(self):
        return f"EnergyFunction(sizes={self.sizes}, params={self.num_params})"


def energy(fn: EnergyFunction, seq: EventSequence, split) -> float:
    return float(fn.energies(featurize(seq, split, fn.cfg))[0])


def energy_grad(fn: EnergyFunction, seq: EventSequence, split):
    """Energy and its gradient with respect to ``fn.theta``."""
    e, g = fn.backward(featurize(seq, split, fn.cfg), np.ones(1))
    return float(e[0]), g
