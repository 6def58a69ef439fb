"""Maximum-likelihood training of base models."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .core import Dataset
from .models import FAMILIES, HawkesExpModel, IntensityModel, PoissonModel
from .rng import as_stream

logger = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite value; carries diagnostics."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        detail = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        super().__init__(f"{message} ({detail})" if detail else message)


@dataclass
class OptimizerConfig:
    method: str = "adam"  # "adam" or "lbfgs"
    lr: float = 1e-2
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    tol: float = 1e-9
    seed: int = 0


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return y + np.log(-np.expm1(-y))


class Adam:
    def __init__(self, size, lr=1e-2, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        """Return updated params for a gradient of the loss being minimised."""
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _initial_model(family, data: Dataset) -> IntensityModel:
    K = data.num_types
    duration = sum(s.t_end - s.t_start for s in data.sequences)
    rate = max(data.num_events / max(duration, 1e-12), 1e-3)
    if family == "poisson":
        return PoissonModel(np.full(K, rate / K))
    if family == "hawkes_exp":
        return HawkesExpModel(np.full(K, 0.5 * rate / K), np.full((K, K), 0.1), np.ones((K, K)))
    raise ValueError(f"unknown model family {family!r}")


def _grad_check(model, seqs, ids, grad):
    if np.all(np.isfinite(grad)):
        return
    for sid, s in zip(ids, seqs):
        _, g = model.batch_log_likelihood([s], with_grad=True)
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                "non-finite log-likelihood gradient",
                params=model.to_vector().tolist(),
                sequence_id=sid,
            )
    raise NumericalError("non-finite log-likelihood gradient", params=model.to_vector().tolist())


def fit_mle(
    family: str,
    data: Dataset,
    opt: OptimizerConfig | None = None,
    dev: Dataset | None = None,
    init: IntensityModel | None = None,
    history: list | None = None,
) -> IntensityModel:
    """Fit a base model by maximising the summed log-likelihood of ``data``.

    Parameters are optimised in softplus space. With ``method="adam"`` the
    data are visited in shuffled minibatches and the parameters with the best
    held-out log-likelihood (``dev``, or the training data when no dev set is
    given) are returned after ``patience`` epochs without improvement. With
    ``method="lbfgs"`` a full-batch quasi-Newton solve is run instead.

    One record per epoch is appended to ``history`` when provided.
    """
    opt = opt or OptimizerConfig()
    if len(data) == 0:
        raise ValueError("fit_mle needs a non-empty dataset")
    cls = FAMILIES[family]
    K = data.num_types
    model = init if init is not None else _initial_model(family, data)
    u = inv_softplus(model.to_vector())
    seqs = data.sequences
    ids = data.seq_ids
    dev_seqs = dev.sequences if dev is not None else seqs
    n_dev = max(len(dev_seqs), 1)

    def build(u_):
        return cls.from_vector(K, softplus(u_))

    if opt.method == "lbfgs":
        n = len(seqs)

        def objective(u_):
            m = build(u_)
            v, g = m.batch_log_likelihood(seqs, with_grad=True)
            _grad_check(m, seqs, ids, g)
            return -v / n, -g * expit(u_) / n

        res = minimize(
            objective, u, jac=True, method="L-BFGS-B",
            options={"maxiter": 10_000, "gtol": opt.tol, "ftol": 1e-14},
        )
        model = build(res.x)
        if history is not None:
            history.append({
                "epoch": int(res.nit),
                "train_ll": -float(res.fun),
                "dev_ll": model.batch_log_likelihood(dev_seqs) / n_dev,
            })
        return model

    if opt.method != "adam":
        raise ValueError(f"unknown optimizer {opt.method!r}")
    adam = Adam(u.size, opt.lr, opt.betas, opt.eps)
    order_rng = as_stream(opt.seed).named("base-fit").generator()
    best_u, best_dev = u.copy(), build(u).batch_log_likelihood(dev_seqs) / n_dev
    stale = 0
    for epoch in range(1, opt.max_epochs + 1):
        t0 = time.perf_counter()
        order = order_rng.permutation(len(seqs))
        train_ll = 0.0
        for start in range(0, len(order), opt.batch_size):
            idx = order[start : start + opt.batch_size]
            batch = [seqs[i] for i in idx]
            m = build(u)
            v, g = m.batch_log_likelihood(batch, with_grad=True)
            _grad_check(m, batch, [ids[i] for i in idx], g)
            train_ll += v
            u = adam.step(u, -g * expit(u) / len(batch))
        dev_ll = build(u).batch_log_likelihood(dev_seqs) / n_dev
        if history is not None:
            history.append({
                "epoch": epoch,
                "train_ll": train_ll / len(seqs),
                "dev_ll": dev_ll,
                "wall_ms": round(1000 * (time.perf_counter() - t0), 3),
            })
        logger.debug("base epoch %d train_ll %.5f dev_ll %.5f", epoch, train_ll / len(seqs), dev_ll)
        if not math.isfinite(dev_ll):
            raise NumericalError("non-finite held-out log-likelihood", epoch=epoch,
                                 params=softplus(u).tolist())
        if dev_ll > best_dev:
            best_dev, best_u, stale = dev_ll, u.copy(), 0
        else:
            stale += 1
            if stale >= opt.patience:
                break
    return build(best_u)
