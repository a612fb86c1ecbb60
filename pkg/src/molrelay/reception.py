"""Ligand-receptor reception: binding statistics and threshold decisions.

Reception is a bank of n independent receptors, each bound with the
steady-state probability given by the competitive binding law below; the
observation is the binomial bound count. Binomial masses and tails are
computed in log space with compensated summation so that they stay accurate
for the receptor counts used here (n <= 1000), with no normal or Poisson
approximation anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class BindingContext:
    """Inputs of one binding-probability evaluation.

    ``blocker_concentrations`` is a sequence of (concentration, blocking
    dissociation constant) pairs for foreign molecule types competing for the
    same receptors. Concentrations in mol/L.
    """

    own_concentration: float
    blocker_concentrations: tuple[tuple[float, float], ...]
    kappa_d: float
    n_receptors: int

    def __post_init__(self):
        if self.own_concentration < 0:
            raise ValueError("concentration must be nonnegative")
        if self.kappa_d <= 0:
            raise ValueError("dissociation constant must be positive")
        for c, kb in self.blocker_concentrations:
            if c < 0 or kb <= 0:
                raise ValueError("blocker entries must have c >= 0 and kappa > 0")
        if self.n_receptors < 1:
            raise ValueError("receptor count must be >= 1")


def binding_fraction(c, kappa_d, blockers: Iterable[tuple[float, float]] = ()):
    """Steady-state probability that one receptor is bound by its own ligand.

    c / (c + sum_j kappa_d * c_j / kappa_block_j + kappa_d), the Hill-type
    competitive form. Accepts scalars or numpy arrays for ``c`` and the
    blocker concentrations.
    """
    denom = c + kappa_d
    for c_j, kappa_block_j in blockers:
        denom = denom + kappa_d * c_j / kappa_block_j
    return c / denom


def binding_probability(ctx: BindingContext) -> float:
    return float(binding_fraction(ctx.own_concentration, ctx.kappa_d,
                                  ctx.blocker_concentrations))


def log_binom_pmf(n: int, p: float, y) -> np.ndarray:
    """log P{Y = y} for Y ~ Binomial(n, p); y may be an array."""
    y = np.asarray(y, dtype=float)
    if p == 0.0:
        return np.where(y == 0, 0.0, -np.inf)
    if p == 1.0:
        return np.where(y == n, 0.0, -np.inf)
    return (
        gammaln(n + 1) - gammaln(y + 1) - gammaln(n - y + 1)
        + y * math.log(p) + (n - y) * math.log1p(-p)
    )


def bound_count_pmf(n: int, p: float, y: int) -> float:
    """P{Y = y} for Y ~ Binomial(n, p), accurate in log space."""
    if not (0 <= y <= n):
        raise ValueError(f"y must be in [0, {n}], got {y}")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0, 1], got {p}")
    return float(np.exp(log_binom_pmf(n, p, y)))


def binom_pmf_vector(n: int, p: float) -> np.ndarray:
    """The full pmf of Binomial(n, p) over y = 0..n."""
    return np.exp(log_binom_pmf(n, p, np.arange(n + 1)))


def bound_count_tail(n: int, p: float, tau) -> tuple[float, float]:
    """(P{Y <= tau}, P{Y > tau}) for Y ~ Binomial(n, p).

    ``tau`` may be fractional; the event boundary is floor(tau). Each tail is
    summed over its own terms with compensated summation, so small tails keep
    full relative accuracy instead of suffering 1 - (near one) cancellation.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p must be in [0, 1], got {p}")
    k = math.floor(tau)
    if k < 0:
        return 0.0, 1.0
    if k >= n:
        return 1.0, 0.0
    logs = log_binom_pmf(n, p, np.arange(n + 1))
    lower = math.fsum(map(math.exp, logs[: k + 1]))
    upper = math.fsum(map(math.exp, logs[k + 1:]))
    return min(lower, 1.0), min(upper, 1.0)


def lower_tail(n: int, p: float, tau) -> float:
    return bound_count_tail(n, p, tau)[0]


def upper_tail(n: int, p: float, tau) -> float:
    return bound_count_tail(n, p, tau)[1]


def sample_bound_count(n: int, p, rng: np.random.Generator):
    """Draw Binomial(n, p) bound counts from a caller-owned generator.

    ``p`` may be an array, producing one draw per entry. Reproducible for a
    fixed seed and draw order.
    """
    return rng.binomial(n, p)


def threshold_decode(y, tau) -> int:
    """Decode 1 iff the bound count strictly exceeds the threshold."""
    y_arr = np.asarray(y)
    result = (y_arr > tau).astype(np.int64)
    if result.ndim == 0:
        return int(result)
    return result
