"""Noise-contrastive training of the energy function against a frozen base model.

All losses are stated in minimised form (negated objectives). Index 0 of an
energy vector is always the observed sequence, indices 1..N the noise draws.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, logsumexp

from .core import EventSequence, HorizonSplit
from .energy import EnergyFunction, continuation_features, prefix_tail_counts
from .fitting import Adam, NumericalError, OptimizerConfig
from .metrics import otd
from .models import IntensityModel
from .rng import as_stream
from .thinning import draw_noise

logger = logging.getLogger(__name__)


def binary_nce_loss(energies):
    """-[log sigma(-E_0) + sum_n log sigma(E_n)] and its partials."""
    E = np.asarray(energies, dtype=np.float64)
    # -log sigma(-x) = softplus(x), -log sigma(x) = softplus(-x)
    loss = np.logaddexp(0.0, E[0]) + np.sum(np.logaddexp(0.0, -E[1:]))
    grad = np.empty_like(E)
    grad[0] = expit(E[0])
    grad[1:] = -expit(-E[1:])
    return float(loss), grad


def multi_nce_loss(energies):
    """E_0 + log sum_n exp(-E_n) and its partials ``[n == 0] - softmax(-E)_n``."""
    E = np.asarray(energies, dtype=np.float64)
    loss = E[0] + logsumexp(-E)
    grad = -np.exp(log_softmax(-E))
    grad[0] += 1.0
    return float(loss), grad


def distance_margin_reg(energies, distances, beta: float):
    """sum_n max(0, beta * d_n + E_0 - E_n) over the noise draws.

    The subgradient at an exactly-zero margin is taken as zero.
    """
    E = np.asarray(energies, dtype=np.float64)
    d = np.asarray(distances, dtype=np.float64)
    if d.shape != (E.size - 1,):
        raise ValueError(f"need {E.size - 1} distances, got {d.size}")
    if np.any(d < 0):
        raise ValueError("distances must be >= 0")
    margin = beta * d + E[0] - E[1:]
    active = margin > 0
    grad = np.zeros_like(E)
    grad[0] = active.sum()
    grad[1:] = -active.astype(np.float64)
    return float(np.sum(np.where(active, margin, 0.0))), grad


OBJECTIVES = {"binary": binary_nce_loss, "multi": multi_nce_loss}


@dataclass
class TrainConfig:
    objective: str = "multi"
    N: int = 5
    beta: float = 1.0
    regularize: bool = False
    reg_weight: float = 1.0
    c_del: float = 1.0
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(lr=1e-3))
    epochs: int = 50
    patience: int = 10
    resample_noise: bool = True

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {sorted(OBJECTIVES)}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.regularize and not self.beta > 0:
            raise ValueError("beta must be > 0 when regularizing")


@dataclass(frozen=True)
class ContrastiveBatch:
    split: HorizonSplit
    positive: EventSequence
    noises: tuple

    def __post_init__(self):
        pre = self.split.prefix
        for s in (self.positive, *self.noises):
            n = len(pre)
            if (
                len(s) < n
                or not np.array_equal(s.times[:n], pre.times)
                or not np.array_equal(s.types[:n], pre.types)
            ):
                raise ValueError("all sequences in a contrastive batch must share the prefix")

    @property
    def sequences(self):
        return (self.positive, *self.noises)


def make_batch(base, split: HorizonSplit, N: int, rng) -> ContrastiveBatch:
    noises = draw_noise(base, split.prefix, split.T_prime, N, rng)
    return ContrastiveBatch(split, split.completed, tuple(split.prefix.append(c) for c in noises))


class _ContrastSet:
    """Features (S, N+1, D) and, when needed, distances (S, N) for one noise draw."""

    def __init__(self, base, splits, cfg: TrainConfig, fcfg, stream, need_dist):
        S, N = len(splits), cfg.N
        self.F = np.empty((S, N + 1, fcfg.dim))
        self.dist = np.zeros((S, N)) if need_dist else None
        for i, sp in enumerate(splits):
            noises = draw_noise(base, sp.prefix, sp.T_prime, N, stream.spawn(i))
            tail = prefix_tail_counts(sp.prefix, sp.T, sp.T_prime - sp.T, fcfg.num_types)
            self.F[i, 0] = continuation_features(tail, sp.truth, sp.T, sp.T_prime, fcfg)
            for n, cont in enumerate(noises):
                self.F[i, n + 1] = continuation_features(tail, cont, sp.T, sp.T_prime, fcfg)
                if need_dist:
                    self.dist[i, n] = otd(sp.truth, cont, cfg.c_del)


def _batch_loss(fn: EnergyFunction, cs: _ContrastSet, idx, cfg: TrainConfig, with_grad=True):
    loss_fn = OBJECTIVES[cfg.objective]
    F = cs.F[idx]
    B, N1, D = F.shape
    E = fn.energies(F.reshape(-1, D)).reshape(B, N1)
    dE = np.zeros_like(E)
    total = omega = 0.0
    for b in range(B):
        loss, g = loss_fn(E[b])
        dE[b] = g
        total += loss
        if cfg.regularize:
            om, go = distance_margin_reg(E[b], cs.dist[idx[b]], cfg.beta)
            omega += om
            dE[b] += cfg.reg_weight * go
    total += cfg.reg_weight * omega
    if not with_grad:
        return total / B, omega / B, E
    _, grad = fn.backward(F.reshape(-1, D), dE.reshape(-1) / B)
    return total / B, omega / B, E, grad


def contrast_loss(fn: EnergyFunction, cs: _ContrastSet, cfg: TrainConfig):
    """Mean loss and mean regularizer over every split of a contrast set."""
    idx = np.arange(cs.F.shape[0])
    loss, omega, _ = _batch_loss(fn, cs, idx, cfg, with_grad=False)
    return loss, omega


def train_energy(
    base: IntensityModel,
    energy: EnergyFunction,
    data: list,
    cfg: TrainConfig | None = None,
    rng=0,
    dev: list | None = None,
    history: list | None = None,
) -> EnergyFunction:
    """Fit ``energy`` by noise-contrastive estimation with ``base`` as the noise model.

    ``data`` and ``dev`` are lists of :class:`HorizonSplit`. Feature
    standardisation is fixed from the first epoch's training contrast set.
    Returns a copy holding the parameters with the lowest dev loss; the input
    ``energy`` is not modified. One record per epoch (epoch 0 = before any
    update) is appended to ``history``.
    """
    cfg = cfg or TrainConfig()
    if not data:
        raise ValueError("train_energy needs at least one split")
    stream = as_stream(rng)
    fn = energy.copy()
    fcfg = fn.cfg
    need_dist = cfg.regularize
    opt = cfg.optimizer
    adam = Adam(fn.num_params, opt.lr, opt.betas, opt.eps)

    def contrast(splits, name, epoch):
        return _ContrastSet(base, splits, cfg, fcfg, stream.named(name).spawn(epoch), need_dist)

    t_start = time.perf_counter()
    train_cs = contrast(data, "noise", 0)
    fn.set_standardization(train_cs.F.reshape(-1, fcfg.dim))
    dev_cs = contrast(dev, "dev-noise", 0) if dev else None

    def dev_loss():
        cs = dev_cs if dev_cs is not None else train_cs
        return contrast_loss(fn, cs, cfg)

    best_loss, _ = dev_loss()
    best_theta = fn.theta.copy()
    if history is not None:
        tl, tom = contrast_loss(fn, train_cs, cfg)
        history.append({"epoch": 0, "train_loss": tl, "dev_loss": best_loss, "omega": tom,
                        "wall_ms": round(1000 * (time.perf_counter() - t_start), 3)})
    stale = 0
    order_stream = stream.named("order")
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        if cfg.resample_noise and epoch > 1:
            train_cs = contrast(data, "noise", epoch - 1)
        order = order_stream.spawn(epoch).generator().permutation(len(data))
        sum_loss = sum_omega = 0.0
        for start in range(0, len(order), opt.batch_size):
            idx = order[start : start + opt.batch_size]
            loss, omega, E, grad = _batch_loss(fn, train_cs, idx, cfg)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NumericalError(
                    "non-finite contrastive loss", epoch=epoch, batch_start=start,
                    splits=idx.tolist(), energies=E.tolist(),
                )
            fn.theta[:] = adam.step(fn.theta, grad)
            sum_loss += loss * len(idx)
            sum_omega += omega * len(idx)
        dl, _ = dev_loss()
        record = {"epoch": epoch, "train_loss": sum_loss / len(data), "dev_loss": dl,
                  "omega": sum_omega / len(data),
                  "wall_ms": round(1000 * (time.perf_counter() - t0), 3)}
        if history is not None:
            history.append(record)
        logger.debug("energy epoch %d train %.5f dev %.5f", epoch, record["train_loss"], dl)
        if not math.isfinite(dl):
            raise NumericalError("non-finite dev loss", epoch=epoch)
        if dl < best_loss:
            best_loss, best_theta, stale = dl, fn.theta.copy(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return fn.copy(best_theta)
