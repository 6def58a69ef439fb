"""Synthetic datasets with known generating processes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, EventSequence
from .models import HawkesExpModel, PoissonModel
from .rng import RngStream
from .thinning import thinning_sample

GENERATORS = ("poisson", "hawkes", "hawkes_budgeted")
MIN_ACCEPT_RATE = 1e-3


class SynthSpecError(ValueError):
    pass


@dataclass
class SynthSpec:
    """What to generate.

    ``params`` holds ``rates`` for ``poisson`` or ``mu``/``alpha``/``decay``
    for the Hawkes generators. ``budget`` maps type id to the maximum number
    of events of that type allowed over the whole horizon
    (``hawkes_budgeted`` only).
    """

    generator: str
    params: dict
    num_seqs: int
    horizon: float
    seed: int = 0
    budget: dict = field(default_factory=dict)
    time_unit: str = "1"

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise SynthSpecError(f"generator must be one of {GENERATORS}")
        if self.num_seqs < 1 or not self.horizon > 0:
            raise SynthSpecError("num_seqs must be >= 1 and horizon > 0")
        self.budget = {int(k): int(v) for k, v in self.budget.items()}
        if self.generator == "hawkes_budgeted":
            if not self.budget:
                raise SynthSpecError("hawkes_budgeted needs a per-type budget")
            if any(v < 0 for v in self.budget.values()):
                raise SynthSpecError("budgets must be >= 0")
        try:
            model = self.model()
        except (ValueError, KeyError, TypeError) as exc:
            raise SynthSpecError(f"invalid {self.generator} parameters: {exc}") from exc
        if any(k >= model.num_types for k in self.budget):
            raise SynthSpecError("budget refers to a type outside the model")

    def model(self):
        p = self.params
        if self.generator == "poisson":
            return PoissonModel(p["rates"])
        return HawkesExpModel(p["mu"], p["alpha"], p["decay"])

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "generator": self.generator,
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
            "num_seqs": self.num_seqs,
            "horizon": self.horizon,
            "seed": self.seed,
            "budget": {str(k): v for k, v in self.budget.items()},
            "time_unit": self.time_unit,
        }


def within_budget(seq: EventSequence, budget: dict) -> bool:
    if not budget:
        return True
    counts = np.bincount(seq.types, minlength=max(budget) + 1)
    return all(counts[k] <= cap for k, cap in budget.items())


def generate(spec: SynthSpec, rng=None) -> Dataset:
    """Roll out ``spec.num_seqs`` sequences over ``[0, spec.horizon]``.

    For ``hawkes_budgeted`` each rollout is redrawn until it respects the
    budget; a :class:`SynthSpecError` is raised once more than 1000 rollouts
    have been made and fewer than 0.1% of them were accepted.
    """
    stream = rng if isinstance(rng, RngStream) else RngStream(spec.seed if rng is None else rng)
    stream = stream.named("synth")
    model = spec.model()
    empty = EventSequence([], [], 0.0, 0.0)
    budget = spec.budget if spec.generator == "hawkes_budgeted" else {}
    seqs = []
    attempts = 0
    for i in range(spec.num_seqs):
        s_i = stream.spawn(i)
        a = 0
        while True:
            seq = thinning_sample(model, empty, spec.horizon, s_i.spawn(a))
            attempts += 1
            a += 1
            if within_budget(seq, budget):
                break
            if attempts > 1000 and len(seqs) / attempts < MIN_ACCEPT_RATE:
                raise SynthSpecError(
                    f"budget {budget} rejects more than {100 * (1 - MIN_ACCEPT_RATE):.1f}% "
                    f"of rollouts ({attempts} tried, {len(seqs)} accepted)"
                )
        seqs.append(EventSequence(seq.times, seq.types, 0.0, spec.horizon))
    return Dataset(seqs, model.num_types, spec.time_unit, [f"synth-{i}" for i in range(len(seqs))])


def acceptance_rate(model, horizon: float, budget: dict, draws: int, rng) -> float:
    """Fraction of plain rollouts from ``model`` that respect ``budget``."""
    stream = rng if isinstance(rng, RngStream) else RngStream(rng)
    empty = EventSequence([], [], 0.0, 0.0)
    ok = sum(within_budget(thinning_sample(model, empty, horizon, stream.spawn(i)), budget)
             for i in range(draws))
    return ok / draws
