"""Long-horizon prediction by normalised importance sampling over base-model proposals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .core import EventSequence
from .energy import EnergyFunction, continuation_features, prefix_tail_counts
from .fitting import NumericalError
from .models import IntensityModel
from .thinning import draw_noise


class NonFiniteEnergyError(NumericalError, ValueError):
    """An energy came out NaN or infinite, so proposals cannot be weighted."""


@dataclass(frozen=True)
class InferConfig:
    M: int = 20

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")


@dataclass(frozen=True)
class WeightedProposal:
    continuation: EventSequence
    weight: float
    energy: float


def normalized_weights(energies) -> np.ndarray:
    """Softmax of the negated energies."""
    E = np.asarray(energies, dtype=np.float64)
    if not np.all(np.isfinite(E)):
        raise NonFiniteEnergyError("energies must be finite", energies=E.tolist())
    return np.exp(log_softmax(-E))


def predict(
    base: IntensityModel,
    energy: EnergyFunction,
    prefix: EventSequence,
    T_prime: float,
    cfg: InferConfig | None = None,
    rng=0,
):
    """Draw M continuations from ``base``, weight them by ``exp(-energy)``.

    Returns ``(chosen, proposals)``: the highest-weighted continuation (lowest
    proposal index on ties) and every proposal with its normalised weight.
    """
    cfg = cfg or InferConfig()
    T = prefix.t_end
    conts = draw_noise(base, prefix, T_prime, cfg.M, rng)
    tail = prefix_tail_counts(prefix, T, T_prime - T, energy.cfg.num_types)
    F = np.stack([continuation_features(tail, c, T, T_prime, energy.cfg) for c in conts])
    E = energy.energies(F)
    w = normalized_weights(E)
    proposals = [WeightedProposal(c, float(wi), float(ei)) for c, wi, ei in zip(conts, w, E)]
    # lowest energy is the highest weight; argmin keeps the first on ties
    return conts[int(np.argmin(E))], proposals


def consensus_decode(proposals, risk):
    """Minimum-Bayes-risk decoding over weighted proposals (not provided)."""
    raise NotImplementedError("consensus decoding is not implemented; use the top-weighted proposal")
