"""Noisy-binomial sampling family.

A coin with bias ``p`` is flipped ``N`` times, and each recorded outcome is
inverted independently with a known probability ``alpha < 1/2``.  The count
of recorded heads is then binomial with the *effective* probability
``q = alpha + p*(1 - 2*alpha)``, which lives in ``[alpha, 1 - alpha]``.

All probability-mass computations go through log-gamma so they stay finite
and accurate for trial counts up to at least 10**6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class TrialModel:
    """The pair (trials, noise) defining one noisy-binomial family.

    Parameters
    ----------
    trials : int
        Number of coin flips N, at least 1.
    noise : float
        Flip probability alpha in [0, 1/2).  alpha = 1/2 is rejected: the
        data then carry no information about p and every inversion formula
        divides by (1 - 2*alpha).
    """

    trials: int
    noise: float = 0.0

    def __post_init__(self):
        if not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if not (0.0 <= self.noise < 0.5):
            raise ValueError(f"noise must satisfy 0 <= alpha < 1/2, got {self.noise!r}")


def _check_probability(p, name="p"):
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")
    return float(p)


def _check_count(model: TrialModel, n, name="n"):
    if not isinstance(n, (int, np.integer)) or not (0 <= n <= model.trials):
        raise ValueError(f"{name} must be an integer in [0, {model.trials}], got {n!r}")
    return int(n)


def _q_pair(model: TrialModel, p: float) -> tuple[float, float]:
    # Returns (q, 1-q) with exact p <-> 1-p swap symmetry: for p > 1/2 the
    # subtraction 1-p is exact (Sterbenz), so both branches evaluate the
    # same floating-point expressions with the roles of the two outcomes
    # exchanged.
    a = model.noise
    if p > 0.5:
        q_m, mq_m = _q_pair(model, 1.0 - p)
        return mq_m, q_m
    slope = 1.0 - 2.0 * a
    return a + p * slope, (1.0 - a) - p * slope


def effective_prob(model: TrialModel, p: float) -> float:
    """Probability q = alpha + p*(1 - 2*alpha) of recording heads."""
    p = _check_probability(p)
    return _q_pair(model, p)[0]


def invert_effective_prob(model: TrialModel, q: float) -> float:
    """Inverse map (q - alpha) / (1 - 2*alpha).

    The result may fall outside [0, 1]; clipping is the caller's decision.
    """
    return (float(q) - model.noise) / (1.0 - 2.0 * model.noise)


@lru_cache(maxsize=64)
def _log_binom_coeffs(trials: int) -> np.ndarray:
    n = np.arange(trials + 1, dtype=np.float64)
    out = gammaln(trials + 1.0) - (gammaln(n + 1.0) + gammaln(trials - n + 1.0))
    out.flags.writeable = False
    return out


def log_pmf_table(model: TrialModel, p: float) -> np.ndarray:
    """log Pr(n | p) for every n = 0..N, as one vector.

    Entries are -inf exactly where the mass is zero (only possible when
    alpha = 0 and p is 0 or 1).
    """
    p = _check_probability(p)
    q, mq = _q_pair(model, p)
    big_n = model.trials
    if q == 0.0 or mq == 0.0:
        out = np.full(big_n + 1, -np.inf)
        out[big_n if q == 1.0 else 0] = 0.0
        return out
    n = np.arange(big_n + 1, dtype=np.float64)
    # Parenthesised so the mirrored table p -> 1-p is bitwise identical.
    return _log_binom_coeffs(big_n) + (n * math.log(q) + (big_n - n) * math.log(mq))


def pmf_table(model: TrialModel, p: float) -> np.ndarray:
    """Pr(n | p) for every n = 0..N."""
    return np.exp(log_pmf_table(model, p))


def pmf(model: TrialModel, p: float, n: int) -> float:
    """Binomial mass at n with parameter q = effective_prob(model, p)."""
    p = _check_probability(p)
    n = _check_count(model, n)
    q, mq = _q_pair(model, p)
    big_n = model.trials
    if q == 0.0:
        return 1.0 if n == 0 else 0.0
    if mq == 0.0:
        return 1.0 if n == big_n else 0.0
    log_coeff = math.lgamma(big_n + 1) - (math.lgamma(n + 1) + math.lgamma(big_n - n + 1))
    return math.exp(log_coeff + (n * math.log(q) + (big_n - n) * math.log(mq)))


def _mass_window(trials: int, q_lo: float, q_hi: float) -> tuple[int, int]:
    # Count window [n_lo, n_hi] holding all but < e^-90 of the binomial mass
    # for every q in [q_lo, q_hi]; used to clip O(N) sums at large N.
    var_peak = 0.25 if q_lo <= 0.5 <= q_hi else max(q_lo * (1.0 - q_lo), q_hi * (1.0 - q_hi))
    margin = 14.0 * math.sqrt(trials * var_peak) + 40.0
    n_lo = max(0, int(math.floor(trials * q_lo - margin)))
    n_hi = min(trials, int(math.ceil(trials * q_hi + margin)))
    return n_lo, n_hi


def log_likelihood(model: TrialModel, n: int, p: float) -> float:
    """n*ln(q) + (N-n)*ln(1-q), with the convention 0*ln(0) = 0.

    Constant factors (the binomial coefficient) are dropped.  Returns -inf
    exactly when a term with positive exponent has zero base.
    """
    p = _check_probability(p)
    n = _check_count(model, n)
    q, mq = _q_pair(model, p)

    def term(count: int, base: float) -> float:
        if count == 0:
            return 0.0
        if base == 0.0:
            return -math.inf
        return count * math.log(base)

    return term(n, q) + term(model.trials - n, mq)
