"""Thinning sampler for continuations of a prefix.

Each proposal step draws ``dt ~ Exp(lambda*)`` from the bound at the current
time, accepts with probability ``sum_k lambda_k / lambda*`` and, on
acceptance, picks the type proportionally to the intensities. The bound is
recomputed after every proposal, accepted or not, which is valid because the
intensities in this package never increase between events.

Poisson and exponential-Hawkes models run through a compiled kernel; any other
:class:`IntensityModel` uses the generic loop over its public methods.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numba
import numpy as np

from .core import EventSequence
from .models import HawkesExpModel, IntensityModel, PoissonModel
from .rng import RngStream, as_generator

MAX_PROPOSALS = 10_000_000
THREADS_ENV = "EVENTRERANK_THREADS"


class ThinningError(RuntimeError):
    """The proposal safety limit was hit, which points at a bad intensity bound."""


def default_workers() -> int:
    value = os.environ.get(THREADS_ENV)
    if value:
        return max(1, int(value))
    return os.cpu_count() or 1


@numba.njit(cache=True, nogil=True, error_model="numpy")
def _thin_hawkes(gen, mu, alpha, decay, state, t0, t_end, max_proposals):
    K = mu.shape[0]
    S = state.copy()
    tl = t0
    t = t0
    cap = 32
    times = np.empty(cap)
    types = np.empty(cap, np.int64)
    lam = np.empty(K)
    n = 0
    proposals = 0
    while True:
        lstar = 0.0
        for k in range(K):
            v = mu[k]
            for j in range(K):
                v += alpha[j, k] * S[j, k] * math.exp(-decay[j, k] * (t - tl))
            lstar += v
        if lstar <= 0.0:
            break
        proposals += 1
        if proposals > max_proposals:
            return times[:n], types[:n], False
        t = t - math.log1p(-gen.random()) / lstar
        if t > t_end:
            break
        total = 0.0
        for k in range(K):
            v = mu[k]
            for j in range(K):
                v += alpha[j, k] * S[j, k] * math.exp(-decay[j, k] * (t - tl))
            lam[k] = v
            total += v
        if gen.random() * lstar <= total:
            target = gen.random() * total
            k = 0
            acc = lam[0]
            while acc < target and k < K - 1:
                k += 1
                acc += lam[k]
            for j in range(K):
                for kk in range(K):
                    S[j, kk] *= math.exp(-decay[j, kk] * (t - tl))
            for kk in range(K):
                S[k, kk] += 1.0
            tl = t
            if n == cap:
                cap *= 2
                nt = np.empty(cap)
                nk = np.empty(cap, np.int64)
                nt[:n] = times[:n]
                nk[:n] = types[:n]
                times, types = nt, nk
            times[n] = t
            types[n] = k
            n += 1
    return times[:n], types[:n], True


def _kernel_params(model):
    if isinstance(model, HawkesExpModel):
        return model.mu, model.alpha, model.decay
    K = model.num_types
    return model.rates, np.zeros((K, K)), np.ones((K, K))


@numba.njit(cache=True, nogil=True)
def _prefix_state(times, types, decay, t0):
    K = decay.shape[0]
    S = np.zeros((K, K))
    for i in range(times.shape[0]):
        j = types[i]
        for k in range(K):
            S[j, k] += math.exp(-decay[j, k] * (t0 - times[i]))
    return S


def _hawkes_state(model, prefix, t0):
    """Per-(source, target) excitation sums at ``t0``, before scaling by alpha."""
    if isinstance(model, HawkesExpModel) and len(prefix):
        return _prefix_state(prefix.times, prefix.types, model.decay, t0)
    return np.zeros((model.num_types, model.num_types))


def _thin_generic(model, prefix, T_prime, gen, max_proposals):
    times, types = list(prefix.times), list(prefix.types)
    start = len(times)
    t = prefix.t_end
    proposals = 0
    hist = prefix
    while True:
        lstar = model.upper_bound(t, hist)
        if lstar <= 0.0:
            break
        proposals += 1
        if proposals > max_proposals:
            raise ThinningError(f"more than {max_proposals} proposals; last bound {lstar}")
        t = t - math.log1p(-gen.random()) / lstar
        if t > T_prime:
            break
        lam = model.intensities(t, hist)
        total = float(lam.sum())
        if gen.random() * lstar <= total:
            k = int(np.searchsorted(np.cumsum(lam), gen.random() * total, side="left"))
            times.append(t)
            types.append(min(k, model.num_types - 1))
            hist = EventSequence(times, types, prefix.t_start, t)
    return EventSequence(times[start:], types[start:], prefix.t_end, T_prime)


def thinning_sample(
    model: IntensityModel,
    prefix: EventSequence,
    T_prime: float,
    rng,
    *,
    max_proposals: int = MAX_PROPOSALS,
    fast: bool = True,
) -> EventSequence:
    """Draw one continuation over ``(prefix.t_end, T_prime]``.

    ``rng`` is an :class:`RngStream` (the draw is then a pure function of the
    stream), an int seed, or a live ``numpy.random.Generator``.
    """
    T = prefix.t_end
    if T_prime < T:
        raise ValueError(f"T_prime={T_prime} precedes the prefix end {T}")
    gen = as_generator(rng)
    if T_prime == T:
        return EventSequence([], [], T, T_prime)
    if fast and isinstance(model, (HawkesExpModel, PoissonModel)):
        return _thin_fast(model, _kernel_params(model), _hawkes_state(model, prefix, T),
                          T, T_prime, gen, max_proposals)
    return _thin_generic(model, prefix, T_prime, gen, max_proposals)


def _thin_fast(model, params, state, T, T_prime, gen, max_proposals):
    mu, alpha, decay = params
    times, types, ok = _thin_hawkes(gen, mu, alpha, decay, state, T, T_prime, max_proposals)
    if not ok:
        raise ThinningError(f"more than {max_proposals} proposals for {model!r} after t={T}")
    return EventSequence._trusted(times, types, T, T_prime)


def draw_noise(
    model: IntensityModel,
    prefix: EventSequence,
    T_prime: float,
    N: int,
    rng,
    *,
    workers: int | None = 1,
) -> list[EventSequence]:
    """N independent continuations; draw n uses substream ``rng.spawn(n)``.

    Results do not depend on ``workers``.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not isinstance(rng, RngStream):
        rng = RngStream(rng)
    streams = [rng.spawn(n) for n in range(N)]
    T = prefix.t_end
    if T_prime > T and isinstance(model, (HawkesExpModel, PoissonModel)):
        # the prefix state is shared by all N draws
        params, state = _kernel_params(model), _hawkes_state(model, prefix, T)

        def one(s):
            return _thin_fast(model, params, state, T, T_prime, s.generator(), MAX_PROPOSALS)
    else:
        def one(s):
            return thinning_sample(model, prefix, T_prime, s)

    workers = default_workers() if workers is None else workers
    if workers <= 1 or N == 1:
        return [one(s) for s in streams]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, streams))
