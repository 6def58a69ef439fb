"""Event sequences on a continuous timeline and prefix/horizon splits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

TIE_EPSILON = 1e-9


class SequenceError(ValueError):
    """An event sequence violates its ordering or range invariants."""


class HorizonRangeError(ValueError):
    pass


class SequenceLengthError(ValueError):
    pass


class Event(NamedTuple):
    time: float
    type_id: int


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class EventSequence:
    """Strictly increasing typed events observed over ``[t_start, t_end]``.

    Times and types are held as read-only numpy arrays; ``events`` gives the
    tuple-of-``Event`` view.
    """

    __slots__ = ("times", "types", "t_start", "t_end")

    def __init__(self, times, types, t_start: float = 0.0, t_end: float | None = None):
        times = np.array(times, dtype=np.float64).reshape(-1)
        types = np.array(types, dtype=np.int64).reshape(-1)
        if times.shape != types.shape:
            raise SequenceError("times and types differ in length")
        if t_end is None:
            t_end = float(times[-1]) if times.size else float(t_start)
        t_start, t_end = float(t_start), float(t_end)
        if not (math.isfinite(t_start) and math.isfinite(t_end)) or t_end < t_start:
            raise SequenceError(f"invalid window [{t_start}, {t_end}]")
        if times.size:
            if not np.all(np.isfinite(times)) or times.min() < 0:
                raise SequenceError("event times must be finite and >= 0")
            if np.any(np.diff(times) <= 0):
                raise SequenceError("event times must be strictly increasing")
            if times[0] < t_start or times[-1] > t_end:
                raise SequenceError(
                    f"events outside [{t_start}, {t_end}]: first {times[0]}, last {times[-1]}"
                )
            if types.min() < 0:
                raise SequenceError("type ids must be >= 0")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "types", _frozen(types))
        object.__setattr__(self, "t_start", t_start)
        object.__setattr__(self, "t_end", t_end)

    def __setattr__(self, name, value):
        raise AttributeError("EventSequence is immutable")

    @classmethod
    def _trusted(cls, times, types, t_start, t_end):
        """Build without validation; for sampler output that is valid by construction."""
        self = object.__new__(cls)
        for name, value in (("times", _frozen(times)), ("types", _frozen(types)),
                            ("t_start", float(t_start)), ("t_end", float(t_end))):
            object.__setattr__(self, name, value)
        return self

    @classmethod
    def from_events(cls, events: Iterable[Event | tuple], t_start=0.0, t_end=None):
        events = list(events)
        times = [e[0] for e in events]
        types = [e[1] for e in events]
        return cls(times, types, t_start, t_end)

    @property
    def events(self) -> tuple[Event, ...]:
        return tuple(Event(float(t), int(k)) for t, k in zip(self.times, self.types))

    def __len__(self):
        return self.times.size

    def __iter__(self):
        return iter(self.events)

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return (
            self.t_start == other.t_start
            and self.t_end == other.t_end
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.types, other.types)
        )

    def __hash__(self):
        return hash((self.t_start, self.t_end, self.times.tobytes(), self.types.tobytes()))

    def __repr__(self):
        return f"EventSequence(n={len(self)}, window=[{self.t_start}, {self.t_end}])"

    def window(self, lo: float, hi: float, *, left_closed=False) -> "EventSequence":
        """Events with ``lo < t <= hi`` (or ``lo <= t`` when left_closed), re-windowed."""
        if left_closed:
            mask = (self.times >= lo) & (self.times <= hi)
        else:
            mask = (self.times > lo) & (self.times <= hi)
        return EventSequence(self.times[mask], self.types[mask], lo, hi)

    def append(self, continuation: "EventSequence") -> "EventSequence":
        """Concatenate a continuation that starts where this sequence ends."""
        return EventSequence(
            np.concatenate([self.times, continuation.times]),
            np.concatenate([self.types, continuation.types]),
            self.t_start,
            continuation.t_end,
        )

    def counts(self, num_types: int) -> np.ndarray:
        return np.bincount(self.types, minlength=num_types)[:num_types]


@dataclass(frozen=True)
class HorizonSplit:
    prefix: EventSequence
    truth: EventSequence
    T: float
    T_prime: float

    def __post_init__(self):
        if not self.T < self.T_prime:
            raise HorizonRangeError(f"T={self.T} must be < T_prime={self.T_prime}")
        if self.prefix.t_end != self.T or self.truth.t_start != self.T:
            raise HorizonRangeError("prefix/truth windows do not meet at T")
        if self.truth.t_end != self.T_prime:
            raise HorizonRangeError("truth window must end at T_prime")

    @property
    def completed(self) -> EventSequence:
        return self.prefix.append(self.truth)


@dataclass(frozen=True)
class Dataset:
    sequences: list
    num_types: int
    time_unit: str = "1"
    seq_ids: list = field(default=None)

    def __post_init__(self):
        if self.num_types < 1:
            raise ValueError("num_types must be >= 1")
        for i, s in enumerate(self.sequences):
            if len(s) and s.types.max() >= self.num_types:
                raise SequenceError(
                    f"sequence {i}: type id {s.types.max()} >= num_types {self.num_types}"
                )
        if self.seq_ids is None:
            object.__setattr__(self, "seq_ids", [str(i) for i in range(len(self.sequences))])
        elif len(self.seq_ids) != len(self.sequences):
            raise ValueError("seq_ids and sequences differ in length")

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def num_events(self) -> int:
        return sum(len(s) for s in self.sequences)


def perturb_ties(times: Sequence[float], eps: float = TIE_EPSILON) -> np.ndarray:
    """Break timestamp ties by shifting the i-th duplicate in a run by ``eps * i``."""
    times = np.asarray(times, dtype=np.float64).copy()
    if times.size < 2:
        return times
    dup = 0
    shifted = 0
    base = times.copy()
    for i in range(1, times.size):
        dup = dup + 1 if base[i] == base[i - 1] else 0
        if dup:
            times[i] = base[i] + eps * dup
            shifted += 1
    if shifted:
        logger.warning("perturbed %d duplicate timestamp(s) by multiples of %g", shifted, eps)
    return times


def split_at_horizon(seq: EventSequence, T: float, T_prime: float) -> HorizonSplit:
    """Prefix holds events with ``t <= T``; truth holds ``T < t <= T_prime``."""
    if not seq.t_start <= T:
        raise HorizonRangeError(f"T={T} is before the sequence start {seq.t_start}")
    if not T < T_prime:
        raise HorizonRangeError(f"T_prime={T_prime} must exceed T={T}")
    if not T_prime <= seq.t_end:
        raise HorizonRangeError(f"T_prime={T_prime} is after the sequence end {seq.t_end}")
    prefix = seq.window(seq.t_start, T, left_closed=True)
    truth = seq.window(T, T_prime)
    return HorizonSplit(prefix, truth, float(T), float(T_prime))


def split_by_token_budget(seq: EventSequence, budget: int) -> HorizonSplit:
    """Put the last ``budget`` events in the continuation.

    T is the time of the (len - budget)-th event (1-based), T' is ``seq.t_end``.
    """
    n = len(seq)
    if budget < 1 or n <= budget:
        raise SequenceLengthError(f"sequence has {n} events, needs more than {budget}")
    T = float(seq.times[n - budget - 1])
    return split_at_horizon(seq, T, seq.t_end)


def split_dataset(
    data: Dataset, *, T=None, T_prime=None, token_budget=None, horizon=None
) -> list[HorizonSplit]:
    """Split every sequence with one policy.

    ``T``/``T_prime``: a global horizon. ``horizon``: per-sequence
    ``T' = t_end``, ``T = t_end - horizon``. ``token_budget``: per-sequence
    split keeping that many continuation tokens.
    """
    out = []
    for s in data.sequences:
        if token_budget is not None:
            out.append(split_by_token_budget(s, token_budget))
        elif horizon is not None:
            out.append(split_at_horizon(s, max(s.t_start, s.t_end - horizon), s.t_end))
        else:
            out.append(split_at_horizon(s, T, T_prime))
    return out
