"""Entropy-risk machinery: KL divergence, pointwise/Bayes/worst-case risk.

All risks are in nats.  Infinite risk is a meaningful verdict (an estimator
that can output 0 or 1 while the truth is interior), so it propagates as a
genuine float inf rather than an error.  Whether a mass term "counts" is
decided mathematically, not in floats: for alpha > 0 every count has
positive probability at every p, even where the float pmf underflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from ._optimize import golden_section_max
from ._parallel import thread_map
from .estimators import DiscretePrior, Estimator
from .model import (
    TrialModel,
    _check_probability,
    _log_binom_coeffs,
    _mass_window,
    _q_pair,
    pmf_table,
)

_TRUNCATE_ABOVE = 4096  # full 0..N sums below this; tail-clipped windows above


def kl_bernoulli(estimate: float, truth: float) -> float:
    """KL divergence from the truth to the estimate, in nats.

    Argument order matches risk notation R(p_hat; p): estimate first.
    Returns +inf exactly when (estimate=0, truth>0) or (estimate=1, truth<1),
    with the convention 0*ln(0) = 0.
    """
    e = _check_probability(estimate, "estimate")
    t = _check_probability(truth, "truth")
    with np.errstate(divide="ignore", invalid="ignore"):
        heads = 0.0 if t == 0.0 else float(xlogy(t, np.float64(t) / np.float64(e)))
        tails = (
            0.0
            if t == 1.0
            else float(xlogy(1.0 - t, np.float64(1.0 - t) / np.float64(1.0 - e)))
        )
    return heads + tails


def risk_grid(model: TrialModel, size: int = 2001) -> np.ndarray:
    """Evaluation grid on [0, 1] with both endpoints.

    On top of ``size`` uniform points, each boundary window [0, 4/sqrt(N)]
    is densified so the risk peak near p ~ 1/sqrt(N) cannot slip between
    grid points.
    """
    size = max(int(size), 65)
    base = np.linspace(0.0, 1.0, size)
    window = min(4.0 / math.sqrt(model.trials), 0.25)
    edge = np.linspace(0.0, window, max(64, size // 5))
    return np.unique(np.concatenate([base, edge, 1.0 - edge]))


def _boundary_entries(est: Estimator):
    zero = np.isneginf(est.log_estimates)
    one = np.isneginf(est.log_one_minus)
    return zero, one


def pointwise_risk(model: TrialModel, est: Estimator, p: float) -> float:
    """Expected entropy risk sum_n Pr(n|p) * KL(p_hat(n); p) at a single p."""
    p = _check_probability(p)
    q, mq = _q_pair(model, p)
    zero, one = _boundary_entries(est)
    if q == 0.0:
        bad = (zero[0] and p > 0.0) or (one[0] and p < 1.0)
    elif mq == 0.0:
        bad = (zero[-1] and p > 0.0) or (one[-1] and p < 1.0)
    else:
        bad = (p > 0.0 and bool(zero.any())) or (p < 1.0 and bool(one.any()))
    if bad:
        return math.inf
    f = pmf_table(model, p)
    pos = f > 0.0
    value = float(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p))
    if p > 0.0:
        value -= p * float(f[pos] @ est.log_estimates[pos])
    if p < 1.0:
        value -= (1.0 - p) * float(f[pos] @ est.log_one_minus[pos])
    return max(value, 0.0)


def bayes_risk(model: TrialModel, est: Estimator, prior: DiscretePrior) -> float:
    """Prior-averaged pointwise risk."""
    total = 0.0
    for p, w in zip(prior.points, prior.weights):
        r = pointwise_risk(model, est, float(p))
        if math.isinf(r):
            return math.inf
        total += w * r
    return total


def _risk_curve(model: TrialModel, est: Estimator, ps: np.ndarray) -> np.ndarray:
    """Vectorized pointwise risk over an ascending grid.

    Requires finite log tables (no effectively-0/1 entries).  Above
    _TRUNCATE_ABOVE trials, each chunk sums only counts within 14 sigma
    (+40) of the chunk's mass region; the discarded tail contributes less
    than e^-90 of a nat.
    """
    big_n = model.trials
    a = model.noise
    log_e = est.log_estimates
    log_1me = est.log_one_minus
    log_coeff = _log_binom_coeffs(big_n)
    out = np.empty(ps.size)

    degenerate = np.zeros(ps.size, dtype=bool)
    if a == 0.0:
        degenerate = (ps == 0.0) | (ps == 1.0)
    interior = np.nonzero(~degenerate)[0]

    chunk = 512
    spans = [interior[i:i + chunk] for i in range(0, interior.size, chunk)]

    def eval_span(idx: np.ndarray) -> np.ndarray:
        p = ps[idx]
        slope = 1.0 - 2.0 * a
        q = a + p * slope
        mq = (1.0 - a) - p * slope
        if big_n <= _TRUNCATE_ABOVE:
            n_lo, n_hi = 0, big_n
        else:
            n_lo, n_hi = _mass_window(big_n, q[0], q[-1])
        ns = np.arange(n_lo, n_hi + 1, dtype=np.float64)
        log_pmf = log_coeff[n_lo:n_hi + 1][None, :] + (
            ns[None, :] * np.log(q)[:, None]
            + (big_n - ns)[None, :] * np.log(mq)[:, None]
        )
        f = np.exp(log_pmf)
        head = f @ log_e[n_lo:n_hi + 1]
        tail = f @ log_1me[n_lo:n_hi + 1]
        c = xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)
        return np.maximum(c - p * head - (1.0 - p) * tail, 0.0)

    for idx, vals in zip(spans, thread_map(eval_span, spans)):
        out[idx] = vals
    for i in np.nonzero(degenerate)[0]:
        out[i] = pointwise_risk(model, est, float(ps[i]))
    return out


def _grid_values(model: TrialModel, est: Estimator, ps: np.ndarray) -> np.ndarray:
    zero, one = _boundary_entries(est)
    if zero.any() or one.any():
        # pointwise_risk short-circuits to inf at every interior p
        return np.array([pointwise_risk(model, est, float(p)) for p in ps])
    return _risk_curve(model, est, ps)


def _refined_maxima(
    model: TrialModel,
    est: Estimator,
    grid: np.ndarray,
    values: np.ndarray,
    refine_top: int = 12,
    xtol: float = 1e-10,
):
    """Grid-local maxima, refined off-grid by golden-section search."""
    if np.isinf(values).any():
        return [(0.5, math.inf)]
    left = np.concatenate(([-np.inf], values[:-1]))
    right = np.concatenate((values[1:], [-np.inf]))
    idx = np.nonzero((values >= left) & (values >= right))[0]
    idx = idx[np.argsort(values[idx])[::-1][:refine_top]]

    def f(p):
        return pointwise_risk(model, est, p)

    found = []
    for i in sorted(idx):
        lo = grid[i - 1] if i > 0 else grid[0]
        hi = grid[i + 1] if i < grid.size - 1 else grid[-1]
        x, fx = golden_section_max(f, lo, hi, xtol=xtol)
        if values[i] >= fx:
            x, fx = float(grid[i]), float(values[i])
        if found and abs(x - found[-1][0]) < 1e-8:
            if fx > found[-1][1]:
                found[-1] = (x, fx)
        else:
            found.append((float(x), float(fx)))
    return found


def max_risk(model: TrialModel, est: Estimator, grid_size: int = 2001):
    """Worst-case risk over p in [0, 1] and its location.

    Estimators with an entry at exactly 0 or 1 have infinite worst-case
    risk; p = 0.5 is returned as the witnessing truth (every count has
    positive probability there).
    """
    zero, one = _boundary_entries(est)
    if zero.any() or one.any():
        return math.inf, 0.5
    grid = risk_grid(model, grid_size)
    values = _risk_curve(model, est, grid)
    maxima = _refined_maxima(model, est, grid, values)
    best_p, best_r = max(maxima, key=lambda m: m[1])
    grid_best = int(np.argmax(values))
    if values[grid_best] > best_r:
        best_p, best_r = float(grid[grid_best]), float(values[grid_best])
    return best_r, best_p


@dataclass
class RiskProfile:
    """Sampled risk profile p -> R(p) with refined local maxima."""

    model: TrialModel
    estimator_label: str
    grid: np.ndarray
    values: np.ndarray
    maxima: list

    def __post_init__(self):
        if self.grid[0] != 0.0 or self.grid[-1] != 1.0:
            raise ValueError("risk profile grid must cover [0, 1] inclusive")

    def max_risk(self):
        best_p, best_r = max(self.maxima, key=lambda m: m[1])
        i = int(np.argmax(self.values))
        if self.values[i] > best_r:
            return float(self.values[i]), float(self.grid[i])
        return best_r, best_p


def risk_profile(
    model: TrialModel,
    est: Estimator,
    grid_size: int = 2001,
    *,
    extra_points=None,
    refine_top: int = 12,
) -> RiskProfile:
    """Tabulate pointwise risk on the (densified) grid and locate maxima."""
    grid = risk_grid(model, grid_size)
    if extra_points is not None and len(extra_points):
        grid = np.unique(np.concatenate([grid, np.asarray(extra_points, dtype=float)]))
    values = _grid_values(model, est, grid)
    maxima = _refined_maxima(model, est, grid, values, refine_top=refine_top)
    return RiskProfile(model, est.label, grid, values, maxima)
