import numpy as np
import pytest
from hypothesis import strategies as st

from eventrerank import EventSequence


@st.composite
def event_sequences(draw, max_events=8, num_types=3, t_end=10.0, min_gap=1e-3):
    """Strictly increasing typed events on [0, t_end]."""
    n = draw(st.integers(0, max_events))
    raw = draw(st.lists(st.floats(0.0, t_end, allow_nan=False), min_size=n, max_size=n,
                        unique=True))
    times = sorted(raw)
    kept = []
    for t in times:
        if not kept or t - kept[-1] >= min_gap:
            kept.append(t)
    types = draw(st.lists(st.integers(0, num_types - 1), min_size=len(kept),
                          max_size=len(kept)))
    return EventSequence(kept, types, 0.0, t_end)


def random_sequence(rng, n, K, t_end):
    times = np.sort(rng.uniform(0, t_end, n))
    times = np.unique(times)
    return EventSequence(times, rng.integers(0, K, times.size), 0.0, t_end)


def rel_err(a, b):
    """Norm-wise relative error of ``a`` against reference ``b``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def central_diff(f, x, h=1e-5):
    x = np.asarray(x, float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
