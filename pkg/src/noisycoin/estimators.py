"""Point estimators for the noisy coin, tabulated over n = 0..N.

Includes raw linear inversion (which may leave [0, 1]), its clipped
maximum-likelihood form, the noiseless add-beta and Braess rules, hedged
maximum likelihood (HML), and posterior means for discrete and symmetric
Beta priors.

Every estimator also carries log(p_hat) and log(1 - p_hat) tables.  Risk
evaluation works on the log tables, so posterior means whose entries are
closer to 0 or 1 than float64 can represent (possible for alpha = 0 at
large N) still produce finite, correct risks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp, roots_jacobi

from .model import TrialModel, _check_count, log_pmf_table

_BISECT_STEPS = 64


@dataclass
class Estimator:
    """A tabulated map n -> p_hat(n) for one trial model.

    ``estimates`` has length N+1.  Every entry lies in [0, 1] unless the
    table is flagged ``unconstrained`` (raw linear inversion only).
    """

    model: TrialModel
    estimates: np.ndarray
    label: str
    unconstrained: bool = False
    log_estimates: np.ndarray | None = field(default=None, repr=False)
    log_one_minus: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        est = np.asarray(self.estimates, dtype=np.float64).copy()
        if est.shape != (self.model.trials + 1,):
            raise ValueError(
                f"estimates must have length N+1 = {self.model.trials + 1}, "
                f"got shape {est.shape}"
            )
        if not self.unconstrained and (np.any(est < 0.0) or np.any(est > 1.0)):
            raise ValueError(f"estimator {self.label!r} has entries outside [0, 1]")
        if self.log_estimates is None:
            clipped = np.clip(est, 0.0, 1.0)
            with np.errstate(divide="ignore"):
                self.log_estimates = np.log(clipped)
                self.log_one_minus = np.log1p(-clipped)
        else:
            self.log_estimates = np.asarray(self.log_estimates, dtype=np.float64).copy()
            self.log_one_minus = np.asarray(self.log_one_minus, dtype=np.float64).copy()
            if self.log_estimates.shape != est.shape or self.log_one_minus.shape != est.shape:
                raise ValueError("log tables must match the estimates table in shape")
        for arr in (est, self.log_estimates, self.log_one_minus):
            arr.flags.writeable = False
        self.estimates = est

    def __call__(self, n: int) -> float:
        return float(self.estimates[_check_count(self.model, n)])


@dataclass
class DiscretePrior:
    """Weighted support points on [0, 1], stored sorted ascending.

    Weights must be strictly positive and sum to 1 (within 1e-12 on input;
    stored exactly normalized).
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).copy()
        wts = np.asarray(self.weights, dtype=np.float64).copy()
        if pts.ndim != 1 or pts.shape != wts.shape or pts.size == 0:
            raise ValueError("points and weights must be equal-length 1-D sequences")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("support points must lie in [0, 1]")
        order = np.argsort(pts)
        pts, wts = pts[order], wts[order]
        if pts.size > 1 and np.any(np.diff(pts) <= 0.0):
            raise ValueError("support points must be distinct")
        if np.any(wts <= 0.0):
            raise ValueError("weights must be strictly positive")
        total = wts.sum()
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 within 1e-12, got {total!r}")
        wts /= total
        pts.flags.writeable = False
        wts.flags.writeable = False
        self.points = pts
        self.weights = wts

    @classmethod
    def from_pairs(cls, pairs) -> "DiscretePrior":
        pts, wts = zip(*pairs)
        return cls(np.array(pts, dtype=float), np.array(wts, dtype=float))

    def __len__(self) -> int:
        return self.points.size


def _check_beta(beta) -> float:
    beta = float(beta)
    if not beta > 0.0:
        raise ValueError(f"hedging parameter beta must be > 0, got {beta!r}")
    return beta


# ---------------------------------------------------------------------------
# Linear inversion / maximum likelihood
# ---------------------------------------------------------------------------

def linear_inversion(model: TrialModel, n: int) -> float:
    """(n/N - alpha) / (1 - 2*alpha); may fall outside [0, 1]."""
    n = _check_count(model, n)
    return (n / model.trials - model.noise) / (1.0 - 2.0 * model.noise)


def maximum_likelihood(model: TrialModel, n: int) -> float:
    """Linear inversion clipped to [0, 1].

    The clip realises the piecewise form: 0 for n < alpha*N, the inverted
    frequency for alpha*N <= n <= N*(1-alpha), 1 for n > N*(1-alpha).
    """
    return min(1.0, max(0.0, linear_inversion(model, n)))


def linear_inversion_estimator(model: TrialModel) -> Estimator:
    n = np.arange(model.trials + 1, dtype=np.float64)
    table = (n / model.trials - model.noise) / (1.0 - 2.0 * model.noise)
    return Estimator(model, table, "linear-inversion", unconstrained=True)


def ml_estimator(model: TrialModel) -> Estimator:
    table = np.clip(linear_inversion_estimator(model).estimates, 0.0, 1.0)
    return Estimator(model, table, "ml")


# ---------------------------------------------------------------------------
# Noiseless rules: add-beta and Braess
# ---------------------------------------------------------------------------

def _require_noiseless(model: TrialModel, rule: str):
    if model.noise != 0.0:
        raise ValueError(
            f"{rule} is only well-founded for alpha = 0 (fictitious counts have "
            f"no effect once n < alpha*N is possible); use hedged_ml for "
            f"alpha = {model.noise}"
        )


def add_beta(model: TrialModel, beta: float, n: int) -> float:
    """(n + beta) / (N + 2*beta).  Requires alpha = 0."""
    _require_noiseless(model, "add_beta")
    beta = _check_beta(beta)
    n = _check_count(model, n)
    return (n + beta) / (model.trials + 2.0 * beta)


def add_beta_estimator(model: TrialModel, beta: float) -> Estimator:
    _require_noiseless(model, "add_beta")
    beta = _check_beta(beta)
    n = np.arange(model.trials + 1, dtype=np.float64)
    return Estimator(model, (n + beta) / (model.trials + 2.0 * beta), f"add-{beta:g}")


def braess(model: TrialModel, n: int) -> float:
    """The five-case near-minimax rule for the noiseless coin (N >= 2).

    Cases are applied in the order displayed: n = 0, n = 1, n = N-1, n = N,
    otherwise.
    """
    _require_noiseless(model, "braess")
    if model.trials < 2:
        raise ValueError("braess requires N >= 2")
    n = _check_count(model, n)
    big_n = model.trials
    if n == 0:
        return (n + 0.5) / (big_n + 1.25)
    if n == 1:
        return (n + 1.0) / (big_n + 1.75)
    if n == big_n - 1:
        return (n + 0.75) / (big_n + 1.75)
    if n == big_n:
        return (n + 0.75) / (big_n + 1.25)
    return (n + 0.75) / (big_n + 1.5)


def braess_estimator(model: TrialModel) -> Estimator:
    table = [braess(model, n) for n in range(model.trials + 1)]
    return Estimator(model, np.array(table), "braess")


# ---------------------------------------------------------------------------
# Hedged maximum likelihood
# ---------------------------------------------------------------------------
#
# The hedged log-likelihood b*ln(p) + b*ln(1-p) + n*ln(q) + (N-n)*ln(1-q)
# is strictly concave in q on (alpha, 1-alpha) and diverges to -inf at both
# ends, so its stationarity condition -- the cubic
#
#   (N+2b) q^3 - (N+n+3b) q^2 + (n + b + N a - N a^2) q + n a^2 - n a = 0
#
# -- has exactly one root there.  We solve in the shifted coordinate
# t = q - alpha, whose constant term b*a*(1-a)*(1-2a) is known in closed
# form; this keeps full precision when the root sits within O(beta/N) of
# the boundary.


def _shifted_cubic_coeffs(model: TrialModel, beta: float, n):
    a = model.noise
    big_n = model.trials
    c3 = big_n + 2.0 * beta
    c2 = 3.0 * c3 * a - (big_n + n + 3.0 * beta)
    c1 = (1.0 - 2.0 * a) * (n - big_n * a) + beta * (1.0 - 6.0 * a * (1.0 - a))
    c0 = beta * a * (1.0 - a) * (1.0 - 2.0 * a)
    return c3, c2, c1, c0


def hedged_ml(model: TrialModel, beta: float, n: int) -> float:
    """Hedged-ML estimate: the hedged-likelihood maximiser, always in (0, 1).

    At alpha = 0 the cubic factors exactly and the estimate reduces to the
    add-beta value (n + beta) / (N + 2*beta).
    """
    beta = _check_beta(beta)
    n = _check_count(model, n)
    a = model.noise
    if a == 0.0:
        return (n + beta) / (model.trials + 2.0 * beta)
    c3, c2, c1, c0 = _shifted_cubic_coeffs(model, beta, n)

    def f(t):
        return ((c3 * t + c2) * t + c1) * t + c0

    t_hi = 1.0 - 2.0 * a
    if not (f(0.0) > 0.0 and f(t_hi) < 0.0):
        raise RuntimeError(
            f"hedged-ML cubic failed to bracket a root in [alpha, 1-alpha] "
            f"for N={model.trials}, alpha={a}, beta={beta}, n={n}"
        )
    t = brentq(f, 0.0, t_hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps)
    return min(max(t / t_hi, 0.0), 1.0)


def hml_estimator(model: TrialModel, beta: float) -> Estimator:
    """Full HML table, solved by vectorized bisection on the shifted cubic.

    Semantics match the scalar ``hedged_ml``; bisecting the bracket 64
    times pins each root to well below 1e-12 absolute in q.
    """
    beta = _check_beta(beta)
    big_n = model.trials
    a = model.noise
    ns = np.arange(big_n + 1, dtype=np.float64)
    if a == 0.0:
        return Estimator(model, (ns + beta) / (big_n + 2.0 * beta), f"hml-{beta:g}")
    c3, c2, c1, c0 = _shifted_cubic_coeffs(model, beta, ns)

    def f(t):
        return ((c3 * t + c2) * t + c1) * t + c0

    t_hi = 1.0 - 2.0 * a
    if not (c0 > 0.0 and np.all(f(np.full(big_n + 1, t_hi)) < 0.0)):
        raise RuntimeError(
            f"hedged-ML cubic failed to bracket roots for N={big_n}, "
            f"alpha={a}, beta={beta}"
        )
    lo = np.zeros(big_n + 1)
    hi = np.full(big_n + 1, t_hi)
    for _ in range(_BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        pos = f(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    table = 0.5 * (lo + hi) / t_hi
    return Estimator(model, table, f"hml-{beta:g}")


# ---------------------------------------------------------------------------
# Bayes (posterior-mean) estimators
# ---------------------------------------------------------------------------

def _posterior_log_tables(model: TrialModel, points: np.ndarray, weights: np.ndarray):
    """log(p_hat) and log(1 - p_hat) of the posterior mean, for n = 0..N.

    Everything stays in log space so the tables remain finite and accurate
    even when the posterior is concentrated within e^-1000 of one support
    point.  Raises ValueError if some n has zero likelihood at every
    support point.
    """
    log_w = np.log(weights)
    shifted = np.stack(
        [log_pmf_table(model, float(p)) for p in points]
    ) + log_w[:, None]
    log_den = logsumexp(shifted, axis=0)
    dead = ~np.isfinite(log_den)
    if np.any(dead):
        n_bad = int(np.nonzero(dead)[0][0])
        raise ValueError(
            f"degenerate posterior: every support point has zero likelihood "
            f"at n={n_bad}"
        )
    with np.errstate(divide="ignore"):
        log_pts = np.log(points)
        log_1m_pts = np.log1p(-points)
    log_e = logsumexp(shifted + log_pts[:, None], axis=0) - log_den
    log_1me = logsumexp(shifted + log_1m_pts[:, None], axis=0) - log_den
    return log_e, log_1me


def bayes_mean_discrete(model: TrialModel, prior: DiscretePrior) -> Estimator:
    """Posterior mean under a discrete prior, for every n = 0..N."""
    log_e, log_1me = _posterior_log_tables(model, prior.points, prior.weights)
    table = np.clip(np.exp(log_e), 0.0, 1.0)
    return Estimator(
        model,
        table,
        f"bayes-discrete-{len(prior)}pt",
        log_estimates=log_e,
        log_one_minus=log_1me,
    )


def bayes_mean_beta(
    model: TrialModel,
    beta_prior_param: float,
    *,
    start_order: int = 200,
    max_order: int = 3200,
    rtol: float = 1e-10,
) -> Estimator:
    """Posterior mean under the symmetric Beta(b, b) prior.

    For alpha = 0 this is the closed form (n + b) / (N + 2b).  For alpha > 0
    the two moments are integrated by Gauss-Jacobi quadrature with weight
    p^(b-1) (1-p)^(b-1), which absorbs the prior's endpoint singularities
    (the remaining integrand is a polynomial in p); the order is doubled
    until two successive tables agree to ``rtol`` relative.
    """
    b = _check_beta(beta_prior_param)
    big_n = model.trials
    ns = np.arange(big_n + 1, dtype=np.float64)
    if model.noise == 0.0:
        return Estimator(model, (ns + b) / (big_n + 2.0 * b), f"bayes-beta-{b:g}")

    def table_at(order: int) -> np.ndarray:
        x, w = roots_jacobi(order, b - 1.0, b - 1.0)
        p = 0.5 * (x + 1.0)
        q = model.noise + p * (1.0 - 2.0 * model.noise)
        log_q = np.log(q)
        log_mq = np.log1p(-q)
        numer = np.empty(big_n + 1)
        denom = np.empty(big_n + 1)
        block = max(1, 4_000_000 // order)
        for start in range(0, big_n + 1, block):
            cols = ns[start:start + block]
            log_lik = log_q[:, None] * cols[None, :] + log_mq[:, None] * (big_n - cols)[None, :]
            shift = np.max(log_lik, axis=0)
            rel = np.exp(log_lik - shift[None, :]) * w[:, None]
            numer[start:start + block] = p @ rel
            denom[start:start + block] = rel.sum(axis=0)
        return numer / denom

    prev = table_at(start_order)
    order = start_order
    while order < max_order:
        order *= 2
        cur = table_at(order)
        if np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300)) <= rtol:
            return Estimator(model, cur, f"bayes-beta-{b:g}")
        prev = cur
    raise RuntimeError(
        f"Beta-prior posterior mean did not converge to rtol={rtol} by "
        f"quadrature order {max_order} (N={big_n}, alpha={model.noise}, b={b})"
    )
