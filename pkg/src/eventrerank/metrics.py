"""Evaluation metrics and diagnostics for long-horizon predictions."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import stats

from .core import EventSequence

DEFAULT_CDEL_GRID = (0.05, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0)


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class OtdConfig:
    c_del: float = 1.0
    c_del_grid: tuple = DEFAULT_CDEL_GRID

    def __post_init__(self):
        if self.c_del <= 0 or any(c <= 0 for c in self.c_del_grid):
            raise ValueError("deletion costs must be > 0")
        object.__setattr__(self, "c_del_grid", tuple(float(c) for c in self.c_del_grid))


def count_rmse(truth: EventSequence, pred: EventSequence, K: int) -> float:
    """sqrt(mean_k (C_k - C_hat_k)^2) over per-type token counts."""
    diff = truth.counts(K) - pred.counts(K)
    return math.sqrt(float(np.dot(diff, diff)) / K)


@numba.njit(cache=True, nogil=True)
def _otd_table(ta, ka, tb, kb, c_del):
    n, m = ta.shape[0], tb.shape[0]
    D = np.empty((n + 1, m + 1))
    D[0, 0] = 0.0
    for j in range(1, m + 1):
        D[0, j] = D[0, j - 1] + c_del
    for i in range(1, n + 1):
        D[i, 0] = D[i - 1, 0] + c_del
        for j in range(1, m + 1):
            best = D[i - 1, j] + c_del
            ins = D[i, j - 1] + c_del
            if ins < best:
                best = ins
            if kb[j - 1] == ka[i - 1]:
                sub = D[i - 1, j - 1] + abs(ta[i - 1] - tb[j - 1])
                if sub < best:
                    best = sub
            D[i, j] = best
    # backtrack, preferring a match, then a deletion from ``a``
    ia = np.empty(min(n, m), np.int64)
    ib = np.empty(min(n, m), np.int64)
    p = 0
    i, j = n, m
    while i > 0 and j > 0:
        if ka[i - 1] == kb[j - 1] and D[i, j] == D[i - 1, j - 1] + abs(ta[i - 1] - tb[j - 1]):
            ia[p] = i - 1
            ib[p] = j - 1
            p += 1
            i -= 1
            j -= 1
        elif D[i, j] == D[i - 1, j] + c_del:
            i -= 1
        else:
            j -= 1
    return ia[:p][::-1].copy(), ib[:p][::-1].copy()


def otd_alignment(truth: EventSequence, pred: EventSequence, c_del: float):
    """Optimal monotone alignment between two sequences.

    Matching two events of the same type costs ``|t_a - t_b|``; every
    unmatched event costs ``c_del``. Returns ``(cost, matches)`` where matches
    is a list of index pairs. The cost is re-summed over the chosen alignment
    (exact sum of match costs plus ``c_del`` per unmatched event) so it does
    not depend on the order the table was filled in.
    """
    if c_del <= 0:
        raise ValueError("c_del must be > 0")
    ia, ib = _otd_table(truth.times, truth.types, pred.times, pred.types, float(c_del))
    n, m = len(truth), len(pred)
    cost = math.fsum(np.abs(truth.times[ia] - pred.times[ib]).tolist())
    cost += c_del * (n + m - 2 * ia.size)
    return cost, list(zip(ia.tolist(), ib.tolist()))


def otd(truth: EventSequence, pred: EventSequence, c_del: float) -> float:
    return otd_alignment(truth, pred, c_del)[0]


def otd_sweep(truth: EventSequence, pred: EventSequence, cfg: OtdConfig | None = None):
    """OTD at every grid value of c_del, plus their arithmetic mean."""
    cfg = cfg or OtdConfig()
    by_c = {c: otd(truth, pred, c) for c in cfg.c_del_grid}
    return by_c, float(np.mean(list(by_c.values())))


@dataclass
class EvalReport:
    rmse: float
    otd_by_cdel: dict
    otd_mean: float
    per_type_counts: dict = field(default_factory=dict)
    num_sequences: int = 0

    def to_dict(self) -> dict:
        return {
            "num_sequences": self.num_sequences,
            "rmse": self.rmse,
            "otd_by_cdel": {repr(float(c)): v for c, v in self.otd_by_cdel.items()},
            "otd_mean": self.otd_mean,
            "per_type_counts": {k: np.asarray(v).tolist() for k, v in self.per_type_counts.items()},
        }


def evaluate(pairs, K: int, cfg: OtdConfig | None = None) -> EvalReport:
    """Corpus metrics over ``(truth, pred)`` pairs; per-pair values are averaged."""
    cfg = cfg or OtdConfig()
    pairs = list(pairs)
    if not pairs:
        raise InsufficientDataError("no prediction pairs to evaluate")
    rmse = float(np.mean([count_rmse(t, p, K) for t, p in pairs]))
    per_c = {c: float(np.mean([otd(t, p, c) for t, p in pairs])) for c in cfg.c_del_grid}
    counts = {
        "truth": np.array([t.counts(K) for t, _ in pairs]),
        "pred": np.array([p.counts(K) for _, p in pairs]),
    }
    return EvalReport(rmse, per_c, float(np.mean(list(per_c.values()))), counts, len(pairs))


@dataclass
class CascadingReport:
    groups: dict
    slope: float | None
    intercept: float | None
    p_value: float | None
    r_value: float | None
    num_points: int
    degenerate: bool

    def to_dict(self) -> dict:
        return {
            "groups": {str(k): v for k, v in sorted(self.groups.items())},
            "regression": {
                "slope": self.slope,
                "intercept": self.intercept,
                "p_value": self.p_value,
                "r_value": self.r_value,
                "num_points": self.num_points,
                "degenerate": self.degenerate,
            },
        }


def cascading_analysis(pairs) -> CascadingReport:
    """Position-aligned cascading-error diagnostics.

    Groups sequences by the 1-based position of the first type error and pools
    the type error rate over the tokens after it. Then regresses the mean
    absolute time error of tokens 2.. on the absolute time error of token 1
    (two-sided t-test on the slope).
    """
    pairs = list(pairs)
    if len(pairs) < 3:
        raise InsufficientDataError(f"need at least 3 pairs for the regression, got {len(pairs)}")
    groups: dict = {}
    xs, ys = [], []
    for truth, pred in pairs:
        L = min(len(truth), len(pred))
        if L == 0:
            continue
        wrong = truth.types[:L] != pred.types[:L]
        if wrong.any():
            first = int(np.argmax(wrong))
            g = groups.setdefault(first + 1, {"num_sequences": 0, "subsequent_tokens": 0,
                                              "subsequent_errors": 0})
            g["num_sequences"] += 1
            g["subsequent_tokens"] += L - first - 1
            g["subsequent_errors"] += int(wrong[first + 1 :].sum())
        if L >= 2:
            err = np.abs(truth.times[:L] - pred.times[:L])
            xs.append(float(err[0]))
            ys.append(float(err[1:].mean()))
    for g in groups.values():
        tok = g["subsequent_tokens"]
        g["error_rate"] = g["subsequent_errors"] / tok if tok else None
    if len(xs) < 3:
        raise InsufficientDataError(f"need at least 3 aligned pairs of length >= 2, got {len(xs)}")
    x, y = np.array(xs), np.array(ys)
    if np.ptp(x) == 0:
        return CascadingReport(groups, None, None, None, None, len(xs), True)
    fit = stats.linregress(x, y)
    return CascadingReport(groups, float(fit.slope), float(fit.intercept), float(fit.pvalue),
                           float(fit.rvalue), len(xs), False)


def energy_histogram_export(label: str, energies, bins: int = 30, range=None):
    """Histogram rows ``(label, bin_lo, bin_hi, count)``."""
    energies = np.asarray(list(energies), dtype=np.float64)
    if energies.size == 0:
        raise ValueError("energy histogram needs at least one value")
    counts, edges = np.histogram(energies, bins=bins, range=range)
    return [(label, float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


def histogram_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["population", "bin_lo", "bin_hi", "count"])
    for r in rows:
        w.writerow([r[0], repr(r[1]), repr(r[2]), r[3]])
    return buf.getvalue()


def fold_means(values, folds: int = 10) -> np.ndarray:
    """Means of ``values`` over contiguous, near-equal folds."""
    values = np.asarray(values, dtype=np.float64)
    return np.array([chunk.mean() for chunk in np.array_split(values, folds) if chunk.size])


def paired_permutation_test(a, b, *, n_resamples: int = 10_000, rng=0) -> float:
    """Two-sided sign-flip permutation test on paired scores.

    All 2^n sign patterns are enumerated for n <= 16, otherwise
    ``n_resamples`` random patterns are used.
    """
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = d.size
    if n == 0:
        raise InsufficientDataError("no paired scores")
    observed = abs(d.mean())
    if n <= 16:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
    else:
        gen = np.random.default_rng(rng)
        signs = gen.choice((1.0, -1.0), size=(n_resamples, n))
    null = np.abs(signs @ d) / n
    return float(np.mean(null >= observed - 1e-12))
