"""Bimodal-risk lower bound R2(p') on achievable risk.

For an anchor p', consider two-point priors w*delta(p') + (1-w)*delta(p'')
and maximise the Bayes risk of each prior's own posterior-mean estimator
over (w, p'').  The maximum quantifies how hard p' is to distinguish from
the single most confusable alternative; it lower-bounds the minimax risk.
Reported values are themselves inner-maximisation lower bounds, which errs
in the conservative direction.

The two-point posterior mean is evaluated in closed form (this is the hot
loop of the 2-D maximisation), and count sums are clipped to the binomial
mass windows of the two support points at large N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit, xlogy

from ._parallel import thread_map
from .model import TrialModel, _check_probability, _log_binom_coeffs, _mass_window, _q_pair
from .risk import _TRUNCATE_ABOVE, risk_grid

_TINY = 1e-320


@dataclass
class BimodalResult:
    """R2 at one anchor, with the maximising witness (w, p'')."""

    anchor: float
    risk: float
    witness_weight: float
    witness_point: float
    w_steps: int
    point_grid_size: int


def _columns_for(model: TrialModel, q_values) -> np.ndarray:
    """Union of mass-window count ranges for the given effective probs."""
    big_n = model.trials
    if big_n <= _TRUNCATE_ABOVE:
        return np.arange(big_n + 1)
    spans = [_mass_window(big_n, float(q), float(q)) for q in q_values]
    ranges = [np.arange(lo, hi + 1) for lo, hi in spans]
    return np.unique(np.concatenate(ranges))


def _log_f_at(model: TrialModel, p: float, cols: np.ndarray) -> np.ndarray:
    """log Pr(n | p) restricted to the given count columns."""
    q, mq = _q_pair(model, p)
    big_n = model.trials
    log_coeff = _log_binom_coeffs(big_n)[cols]
    if q == 0.0 or mq == 0.0:
        hit = big_n if q == 1.0 else 0
        return np.where(cols == hit, 0.0, -np.inf)
    ns = cols.astype(np.float64)
    return log_coeff + (ns * math.log(q) + (big_n - ns) * math.log(mq))


def _risk_against(p: float, f: np.ndarray, log_e: np.ndarray, log_1me: np.ndarray) -> float:
    """sum_n f(n) KL(est(n); p) from log estimate tables on one column set."""
    pos = f > 0.0
    value = float(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p))
    if p > 0.0:
        value -= p * float(f[pos] @ log_e[pos])
    if p < 1.0:
        value -= (1.0 - p) * float(f[pos] @ log_1me[pos])
    return max(value, 0.0)


def two_point_bayes_risk(model: TrialModel, w: float, p1: float, p2: float) -> float:
    """Bayes risk of the prior w*delta(p1) + (1-w)*delta(p2) under its own
    posterior-mean estimator.

    Degenerate priors (w in {0, 1} or p1 = p2) have zero Bayes risk.
    """
    w = float(w)
    if not (0.0 <= w <= 1.0):
        raise ValueError(f"weight must lie in [0, 1], got {w!r}")
    p1 = _check_probability(p1, "p1")
    p2 = _check_probability(p2, "p2")
    if w == 0.0 or w == 1.0 or p1 == p2:
        return 0.0
    q1, _ = _q_pair(model, p1)
    q2, _ = _q_pair(model, p2)
    cols = _columns_for(model, (q1, q2))
    log_f1 = _log_f_at(model, p1, cols)
    log_f2 = _log_f_at(model, p2, cols)
    t1 = math.log(w) + log_f1
    t2 = math.log1p(-w) + log_f2
    log_den = np.logaddexp(t1, t2)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_e = np.logaddexp(t1 + (math.log(p1) if p1 > 0.0 else -math.inf),
                             t2 + (math.log(p2) if p2 > 0.0 else -math.inf)) - log_den
        log_1me = np.logaddexp(t1 + (math.log1p(-p1) if p1 < 1.0 else -math.inf),
                               t2 + (math.log1p(-p2) if p2 < 1.0 else -math.inf)) - log_den
    r1 = _risk_against(p1, np.exp(log_f1), log_e, log_1me)
    r2 = _risk_against(p2, np.exp(log_f2), log_e, log_1me)
    return w * r1 + (1.0 - w) * r2


def _coarse_scan(model: TrialModel, anchor: float, p2_grid: np.ndarray, ws: np.ndarray):
    """Best (value, w, p2) over the coarse grid.

    Vectorized over a p2 block: the posterior weight of the anchor is
    s = expit(log(w f1) - log((1-w) f2)), so est = p2 + (anchor - p2) * s in
    closed form.  Estimates are floored at 1e-320 before the log; the floor
    only binds at counts whose probability is below e^-700, so the risk
    error is < 1e-300.
    """
    big_n = model.trials
    a = model.noise
    q1, _ = _q_pair(model, anchor)
    log_coeff = _log_binom_coeffs(big_n)
    if big_n <= _TRUNCATE_ABOVE:
        w1_lo, w1_hi = 0, big_n
    else:
        w1_lo, w1_hi = _mass_window(big_n, q1, q1)

    best = (-1.0, float(ws[len(ws) // 2]), anchor)
    slope = 1.0 - 2.0 * a
    block = 256
    for start in range(0, p2_grid.size, block):
        p2 = p2_grid[start:start + block]
        q2 = a + p2 * slope
        mq2 = (1.0 - a) - p2 * slope
        interior = (q2 > 0.0) & (q2 < 1.0)
        if not np.all(interior):
            # alpha = 0 endpoints: evaluate the few degenerate rows exactly
            for p_deg in p2[~interior]:
                for w in ws:
                    val = two_point_bayes_risk(model, float(w), anchor, float(p_deg))
                    if val > best[0]:
                        best = (val, float(w), float(p_deg))
            p2, q2, mq2 = p2[interior], q2[interior], mq2[interior]
            if p2.size == 0:
                continue
        if big_n <= _TRUNCATE_ABOVE:
            cols = np.arange(big_n + 1)
        else:
            b_lo, b_hi = _mass_window(big_n, float(q2[0]), float(q2[-1]))
            lo, hi = min(w1_lo, b_lo), max(w1_hi, b_hi)
            if hi - lo > (w1_hi - w1_lo) + (b_hi - b_lo) + 2:
                cols = np.unique(np.concatenate(
                    [np.arange(w1_lo, w1_hi + 1), np.arange(b_lo, b_hi + 1)]
                ))
            else:
                cols = np.arange(lo, hi + 1)
        ns = cols.astype(np.float64)
        log_f1 = _log_f_at(model, anchor, cols)
        log_f2 = log_coeff[cols][None, :] + (
            ns[None, :] * np.log(q2)[:, None] + (big_n - ns)[None, :] * np.log(mq2)[:, None]
        )
        f1 = np.exp(log_f1)
        f2 = np.exp(log_f2)
        base = log_f1[None, :] - log_f2
        c1 = float(xlogy(anchor, anchor) + xlogy(1.0 - anchor, 1.0 - anchor))
        c2 = xlogy(p2, p2) + xlogy(1.0 - p2, 1.0 - p2)
        pos1 = f1 > 0.0
        for w in ws:
            s = expit(base + (math.log(w) - math.log1p(-w)))
            log_e = np.log(np.maximum(p2[:, None] + (anchor - p2[:, None]) * s, _TINY))
            log_1me = np.log(np.maximum(
                (1.0 - p2[:, None]) + (p2[:, None] - anchor) * s, _TINY
            ))
            r1 = c1 - anchor * (log_e[:, pos1] @ f1[pos1]) \
                - (1.0 - anchor) * (log_1me[:, pos1] @ f1[pos1])
            r2 = c2 - p2 * np.einsum("ij,ij->i", f2, log_e) \
                - (1.0 - p2) * np.einsum("ij,ij->i", f2, log_1me)
            vals = w * np.maximum(r1, 0.0) + (1.0 - w) * np.maximum(r2, 0.0)
            i = int(np.argmax(vals))
            if vals[i] > best[0]:
                best = (float(vals[i]), float(w), float(p2[i]))
    return best


def bimodal_risk(
    model: TrialModel,
    anchor: float,
    *,
    w_steps: int = 51,
    grid_size: int = 2001,
    refine: bool = True,
) -> BimodalResult:
    """Maximise the two-point Bayes risk anchored at p' = ``anchor``.

    Coarse stage: w on an open grid in [0.02, 0.98] crossed with p'' on the
    boundary-densified risk grid (w in {0, 1} gives zero risk and is skipped).
    A Nelder-Mead polish in logit coordinates then refines the best cell.
    """
    anchor = _check_probability(anchor, "anchor")
    if anchor > 0.5:
        # exploit p -> 1-p symmetry so mirrored anchors agree exactly
        res = bimodal_risk(
            model, 1.0 - anchor, w_steps=w_steps, grid_size=grid_size, refine=refine
        )
        return BimodalResult(
            anchor, res.risk, res.witness_weight, 1.0 - res.witness_point,
            res.w_steps, res.point_grid_size,
        )

    p2_grid = risk_grid(model, grid_size)
    ws = np.linspace(0.02, 0.98, w_steps)
    value, w_best, p2_best = _coarse_scan(model, anchor, p2_grid, ws)
    risk = two_point_bayes_risk(model, w_best, anchor, p2_best)

    if refine and risk > 0.0:
        x0 = np.array([
            logit(min(max(w_best, 1e-9), 1.0 - 1e-9)),
            logit(min(max(p2_best, 1e-12), 1.0 - 1e-12)),
        ])

        def neg(theta):
            return -two_point_bayes_risk(
                model, float(expit(theta[0])), anchor, float(expit(theta[1]))
            )

        res = minimize(
            neg, x0, method="Nelder-Mead",
            options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 600},
        )
        if -res.fun > risk:
            risk = -float(res.fun)
            w_best = float(expit(res.x[0]))
            p2_best = float(expit(res.x[1]))
    return BimodalResult(anchor, risk, w_best, p2_best, w_steps, p2_grid.size)


def bimodal_profile(
    model: TrialModel,
    anchors,
    *,
    w_steps: int = 51,
    grid_size: int = 2001,
    refine: bool = True,
):
    """Map bimodal_risk over an anchor grid (anchors evaluated in parallel)."""
    anchors = [float(a) for a in np.asarray(anchors, dtype=float)]

    def one(a):
        return bimodal_risk(model, a, w_steps=w_steps, grid_size=grid_size, refine=refine)

    return thread_map(one, anchors)
