"""Closed-form error-probability machinery for both relaying schemes.

Covers the no-interference closed forms, the steady-state fixed points of the
coupled phase-1/phase-2 error recursions under one super slot of channel
memory, the numeric MAP relay threshold for the SNC scheme, the adaptive
maximum-likelihood thresholds of the second phase, and the
no-error-propagation (NoE) approximations used as lower-bound surrogates.

Conventions: ``phase1`` maps the pair of transmitted bits (b1, b2) to the
probability that the relay's forwarded bit differs from their XOR;
``phase2[i]`` maps the relay's transmitted bit to the probability that
transceiver i misreads it. Bits are python ints in {0, 1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from molrelay.channel import ChannelGains, LinkGains
from molrelay.config import SystemConfig, release_for_concentration, unit_convert
from molrelay.reception import (
    binding_fraction,
    binom_pmf_vector,
    bound_count_tail,
)

BitPair = tuple[int, int]
BIT_PAIRS: tuple[BitPair, ...] = ((0, 0), (0, 1), (1, 0), (1, 1))


class AnalysisError(ValueError):
    pass


@dataclass
class ErrorBreakdown:
    """Per-phase conditional error probabilities and their combination."""

    scheme: str
    phase1: dict[BitPair, float]
    phase2: dict[int, dict[int, float]]
    pe1: float
    pe2: float
    avg_bep: float
    noe: Optional[tuple[float, float]] = None
    extras: dict = field(default_factory=dict)


def _miss_all(n: int, p: float) -> float:
    """(1 - p)^n: probability that none of n receptors binds."""
    return math.exp(n * math.log1p(-p)) if p < 1.0 else 0.0


def _xor_error(p_a: float, p_b: float) -> float:
    """Error probability of an XOR of two independently decoded bits."""
    return p_a * (1.0 - p_b) + (1.0 - p_a) * p_b


def per_transceiver_error(phase1: dict[BitPair, float],
                          phase2_i: dict[int, float]) -> float:
    """End-to-end error at one transceiver, averaged over equiprobable bits.

    Conditioned on (b1, b2): the recovered bit is wrong iff exactly one of
    {relay forwarded the wrong XOR, transceiver misread the relay} happened.
    """
    total = 0.0
    for b1, b2 in BIT_PAIRS:
        xor = b1 ^ b2
        r = phase1[(b1, b2)]
        total += r * (1.0 - phase2_i[1 - xor]) + (1.0 - r) * phase2_i[xor]
    return 0.25 * total


def combine_phases(phase1: dict[BitPair, float],
                   phase2: dict[int, dict[int, float]]) -> tuple[float, float, float]:
    """(pe1, pe2, avg_bep) from the two phases' conditional error maps."""
    pe1 = per_transceiver_error(phase1, phase2[1])
    pe2 = per_transceiver_error(phase1, phase2[2])
    return pe1, pe2, 0.5 * (pe1 + pe2)


def relay_prior_zero(phase1: dict[BitPair, float]) -> float:
    """Stationary P{relay transmits 0} under i.i.d. uniform bits.

    The relay's bit equals the XOR unless phase 1 erred, so
    (1/4) * [2 - P(E|0,0) - P(E|1,1) + P(E|0,1) + P(E|1,0)].
    """
    return 0.25 * (
        2.0
        - phase1[(0, 0)]
        - phase1[(1, 1)]
        + phase1[(0, 1)]
        + phase1[(1, 0)]
    )


def _breakdown(scheme, phase1, phase2, noe=None, extras=None) -> ErrorBreakdown:
    pe1, pe2, avg = combine_phases(phase1, phase2)
    return ErrorBreakdown(
        scheme=scheme, phase1=dict(phase1), phase2={1: dict(phase2[1]), 2: dict(phase2[2])},
        pe1=pe1, pe2=pe2, avg_bep=avg, noe=noe, extras=extras or {},
    )


# -- no-interference closed forms ---------------------------------------------


def _require_budgets(cfg: SystemConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise AnalysisError(f"cfg.{name} must be set for this computation")


def _phase2_no_isi(cfg: SystemConfig, gains: ChannelGains) -> dict[int, dict[int, float]]:
    """Zero-threshold relay-bit decoding errors without interference.

    A silent relay produces no molecules, so only misses matter:
    P(error | relay sent 1) = (1 - p_b)^(n receptors).
    """
    out = {}
    for i, (link, n3) in enumerate(((gains.rt1, cfg.n3T1), (gains.rt2, cfg.n3T2)), start=1):
        signal = unit_convert(cfg.zeta_R, link.pi1)
        p = binding_fraction(signal, cfg.kappa_d3)
        out[i] = {0: 0.0, 1: _miss_all(n3, p)}
    return out


def pnc_no_isi(cfg: SystemConfig, gains: ChannelGains) -> ErrorBreakdown:
    """Exact error breakdown of the reaction-based scheme without interference.

    Equal bits annihilate completely, so the relay cannot err on them; for a
    single sender the only error is that no receptor of the matching group
    binds.
    """
    _require_budgets(cfg, "zeta_T1", "zeta_T2", "zeta_R")
    sig1 = unit_convert(cfg.zeta_T1, gains.t1r.pi1)
    sig2 = unit_convert(cfg.zeta_T2, gains.t2r.pi1)
    p1 = binding_fraction(sig1, cfg.kappa_d1)
    p2 = binding_fraction(sig2, cfg.kappa_d2)
    phase1 = {
        (0, 0): 0.0,
        (1, 1): 0.0,
        (1, 0): _miss_all(cfg.n1R, p1),
        (0, 1): _miss_all(cfg.n2R, p2),
    }
    return _breakdown("pnc", phase1, _phase2_no_isi(cfg, gains))


def snc_relay_binding_no_isi(cfg: SystemConfig, gains: ChannelGains,
                             i: int, b_i: int, b_other: int) -> float:
    """Relay binding probability for receptor group i in the SNC scheme.

    The foreign molecule type does not react here, so it competes for the
    receptors through the blocking dissociation constant.
    """
    own_link = gains.toward_relay(i)
    other_link = gains.toward_relay(3 - i)
    zeta_own = cfg.zeta_T1 if i == 1 else cfg.zeta_T2
    zeta_other = cfg.zeta_T2 if i == 1 else cfg.zeta_T1
    kappa = cfg.kappa_d1 if i == 1 else cfg.kappa_d2
    kappa_block = cfg.kappa_block_12 if i == 1 else cfg.kappa_block_21
    c_own = b_i * unit_convert(zeta_own, own_link.pi1)
    c_other = b_other * unit_convert(zeta_other, other_link.pi1)
    blockers = ((c_other, kappa_block),) if kappa_block is not None else ()
    return float(binding_fraction(c_own, kappa, blockers))


def snc_no_isi(cfg: SystemConfig, gains: ChannelGains) -> ErrorBreakdown:
    """Exact error breakdown of the XOR-at-relay scheme without interference.

    Each receptor group decodes its own transceiver's bit at threshold zero;
    the forwarded XOR errs iff exactly one group errs, which produces the
    cross term at (1, 1).
    """
    _require_budgets(cfg, "zeta_T1", "zeta_T2", "zeta_R")
    phase1 = {}
    for b1, b2 in BIT_PAIRS:
        e1 = _miss_all(cfg.n1R, snc_relay_binding_no_isi(cfg, gains, 1, b1, b2)) if b1 else 0.0
        e2 = _miss_all(cfg.n2R, snc_relay_binding_no_isi(cfg, gains, 2, b2, b1)) if b2 else 0.0
        phase1[(b1, b2)] = _xor_error(e1, e2)
    return _breakdown("snc", phase1, _phase2_no_isi(cfg, gains))


def map_threshold_no_isi(priors: tuple[float, float],
                         pmf0: np.ndarray, pmf1: np.ndarray) -> int:
    """MAP threshold when the null observation is noiseless silence.

    With pmf0 a point mass at zero, every positive count favors 1 under MAP
    as soon as the alternative assigns it mass, and a count of zero favors 0
    (thresholds are nonnegative), hence the result is 0. The degenerate
    all-silent alternative also maps to 0; the decision is then always 0.
    """
    p0, p1 = priors
    pmf0 = np.asarray(pmf0, dtype=float)
    pmf1 = np.asarray(pmf1, dtype=float)
    if pmf0[0] != 1.0 or np.any(pmf0[1:] != 0.0):
        raise AnalysisError("null pmf must be a point mass at zero")
    favors_one = np.nonzero(p1 * pmf1[1:] > p0 * pmf0[1:])[0]
    if favors_one.size == 0:
        return 0
    return int(favors_one[0] + 1) - 1


# -- adaptive thresholds of the second phase ------------------------------------


def adaptive_threshold_phase2(pb_table: Callable[[int, int], float] | dict,
                              n: int, prev_decoded: int) -> float:
    """Maximum-likelihood threshold at a transceiver given its previous decode.

    ``pb_table`` gives the binding probability as a function of (current
    relay bit, previous relay bit). With a previously decoded 0 the null
    hypothesis is silence and the threshold is exactly zero; otherwise it is
    the log-likelihood crossing point of the two binomials:
    n * log((1-p0)/(1-p1)) / log(p1 (1-p0) / (p0 (1-p1))).
    """
    lookup = pb_table if callable(pb_table) else lambda b, bp: pb_table[(b, bp)]
    p1 = lookup(1, prev_decoded)
    p0 = lookup(0, prev_decoded)
    if p0 == 0.0:
        return 0.0
    if p1 <= p0:
        raise AnalysisError(
            f"signal must raise the binding probability (p1={p1} <= p0={p0})"
        )
    num = n * math.log((1.0 - p0) / (1.0 - p1))
    den = math.log(p1 * (1.0 - p0) / (p0 * (1.0 - p1)))
    return num / den


def phase2_binding_table(cfg: SystemConfig, link: LinkGains) -> dict[tuple[int, int], float]:
    """Binding probabilities at one transceiver given (current, previous) relay bits."""
    s_now = unit_convert(cfg.zeta_R, link.pi1)
    s_prev = unit_convert(cfg.zeta_R, link.pi(3))
    return {
        (b, bp): float(binding_fraction(b * s_now + bp * s_prev, cfg.kappa_d3))
        for b in (0, 1)
        for bp in (0, 1)
    }


def phase2_threshold_table(cfg: SystemConfig, link: LinkGains,
                           n: int) -> dict[tuple[int, ...], float]:
    """ML thresholds for every history of previously decoded relay bits.

    Generalizes the single-slot rule to ``floor(q/2)`` remembered decodes:
    the hypothesized interference is the superposition of the remembered
    bits' residues, and the threshold is the binomial likelihood crossing.
    An all-zero history gives a zero threshold.
    """
    m = link.half_memory
    s_now = unit_convert(cfg.zeta_R, link.pi1)
    residues = [unit_convert(cfg.zeta_R, link.pi(2 * l + 1)) for l in range(1, m + 1)]
    out: dict[tuple[int, ...], float] = {}
    for code in range(2 ** m):
        history = tuple((code >> l) & 1 for l in range(m))
        isi = sum(h * r for h, r in zip(history, residues))
        p0 = float(binding_fraction(isi, cfg.kappa_d3))
        p1 = float(binding_fraction(s_now + isi, cfg.kappa_d3))
        if p0 == 0.0:
            out[history] = 0.0
        else:
            num = n * math.log((1.0 - p0) / (1.0 - p1))
            den = math.log(p1 * (1.0 - p0) / (p0 * (1.0 - p1)))
            out[history] = num / den
    return out


def _phase2_error_step(n: int, pb: dict[tuple[int, int], float],
                       taus: dict[int, float], prior_zero: float,
                       a_prev: dict[int, float]) -> dict[int, float]:
    """One update of the phase-2 conditional errors.

    Marginalizes over the previous relay bit (stationary prior) and the
    transceiver's decode of it (previous iterate), with the adapted threshold
    chosen by that decode. The error region is {Y > tau} when the relay is
    silent and {Y <= tau} when it transmitted.
    """
    priors = {0: prior_zero, 1: 1.0 - prior_zero}
    out = {}
    for b in (0, 1):
        total = 0.0
        for bp in (0, 1):
            for bhat in (0, 1):
                w = a_prev[bp] if bhat != bp else 1.0 - a_prev[bp]
                if w == 0.0:
                    continue
                lower, upper = bound_count_tail(n, pb[(b, bp)], taus[bhat])
                total += priors[bp] * w * (upper if b == 0 else lower)
        out[b] = total
    return out


# -- reaction-based scheme with interference ------------------------------------

#: Decode-deviation pattern (decoded minus true, for each transceiver's bit)
#: labeling the nine equivalence classes of previous-slot outcomes.
GROUP_DELTAS: dict[int, tuple[int, int]] = {
    1: (0, 0),
    2: (1, 0),
    3: (0, -1),
    4: (0, 1),
    5: (-1, 0),
    6: (1, 1),
    7: (-1, -1),
    8: (1, -1),
    9: (-1, 1),
}

_DELTA_TO_GROUP = {delta: g for g, delta in GROUP_DELTAS.items()}

#: Members (b1_prev, b2_prev, decoded_b1, decoded_b2) of each group.
GROUP_MEMBERS: dict[int, tuple[tuple[int, int, int, int], ...]] = {
    g: tuple(
        (b1, b2, h1, h2)
        for b1 in (0, 1) for b2 in (0, 1) for h1 in (0, 1) for h2 in (0, 1)
        if (h1 - b1, h2 - b2) == delta
    )
    for g, delta in GROUP_DELTAS.items()
}


def _require_unit_memory(gains: ChannelGains) -> None:
    for lg in (gains.t1r, gains.t2r, gains.rt1, gains.rt2):
        if lg.half_memory > 1:
            raise AnalysisError(
                "the steady-state analysis covers at most one interfering super "
                f"slot per link; link {lg.link.value} has floor(q/2)={lg.half_memory}. "
                "Use the simulator for higher memories."
            )


def pnc_group_concentrations(group: int, b1: int, b2: int,
                             nu1: float, nu2: float,
                             c_pnc: float) -> tuple[float, float]:
    """Post-reaction relay concentrations for one previous-outcome group.

    A decode deviation of +-1 on transceiver j's bit shifts the pre-reaction
    surplus of type-1 molecules by -+nu_j * c (the mistimed cancellation
    release), so the surplus is (b1 - b2 + nu2*d2 - nu1*d1) * c and perfect
    reaction keeps only its positive part on one side.
    """
    d1, d2 = GROUP_DELTAS[group]
    surplus = (b1 - b2 + nu2 * d2 - nu1 * d1) * c_pnc
    return max(surplus, 0.0), max(-surplus, 0.0)


def pnc_relay_error_from_concentrations(cfg: SystemConfig, c1: float, c2: float,
                                        b1: int, b2: int) -> float:
    """Relay phase-1 error given post-reaction concentrations, from first principles.

    With zero thresholds the relay transmits iff any receptor of the
    surviving group binds; the forwarded bit errs when that disagrees with
    the true XOR. Which group fires is irrelevant to the forwarded bit.
    """
    if c1 > 0.0 and c2 > 0.0:
        raise AnalysisError("post-reaction concentrations cannot both be positive")
    if c1 > 0.0:
        p_send = 1.0 - _miss_all(cfg.n1R, float(binding_fraction(c1, cfg.kappa_d1)))
    elif c2 > 0.0:
        p_send = 1.0 - _miss_all(cfg.n2R, float(binding_fraction(c2, cfg.kappa_d2)))
    else:
        p_send = 0.0
    xor = b1 ^ b2
    return p_send if xor == 0 else 1.0 - p_send


def pnc_group_error(cfg: SystemConfig, group: int, b1: int, b2: int,
                    nu1: float, nu2: float, c_pnc: float) -> float:
    """Phase-1 error for one group and current bit pair (first-principles path)."""
    c1, c2 = pnc_group_concentrations(group, b1, b2, nu1, nu2, c_pnc)
    return pnc_relay_error_from_concentrations(cfg, c1, c2, b1, b2)


def pnc_group_error_closed_form(cfg: SystemConfig, group: int, b1: int, b2: int,
                                nu1: float, nu2: float, c_pnc: float) -> float:
    """Phase-1 error for one group as an explicit closed form.

    Tabulated per group with nu_plus = nu1 + nu2 and nu_minus = nu1 - nu2,
    assuming nu1 >= nu2 (relabel the transceivers otherwise).
    """
    if nu1 < nu2:
        raise AnalysisError("closed forms assume nu1 >= nu2; swap roles first")
    k1, k2 = cfg.kappa_d1, cfg.kappa_d2
    n1, n2 = cfg.n1R, cfg.n2R

    def silent(kappa: float, n: int, amount: float) -> float:
        """(kappa / (amount*c + kappa))^n: no receptor of that group binds."""
        return (kappa / (amount * c_pnc + kappa)) ** n

    nu_p, nu_m = nu1 + nu2, nu1 - nu2
    table: dict[int, tuple[float, float, float]] = {}
    if group == 1:
        eq, e10, e01 = 0.0, silent(k1, n1, 1.0), silent(k2, n2, 1.0)
    elif group == 2:
        eq = 1.0 - silent(k2, n2, nu1)
        e10, e01 = silent(k1, n1, 1.0 - nu1), silent(k2, n2, 1.0 + nu1)
    elif group == 3:
        eq = 1.0 - silent(k2, n2, nu2)
        e10, e01 = silent(k1, n1, 1.0 - nu2), silent(k2, n2, 1.0 + nu2)
    elif group == 4:
        eq = 1.0 - silent(k1, n1, nu2)
        e10, e01 = silent(k1, n1, 1.0 + nu2), silent(k2, n2, 1.0 - nu2)
    elif group == 5:
        eq = 1.0 - silent(k1, n1, nu1)
        e10, e01 = silent(k1, n1, 1.0 + nu1), silent(k2, n2, 1.0 - nu1)
    elif group == 6:
        eq = 1.0 - silent(k2, n2, nu_m)
        e10, e01 = silent(k1, n1, 1.0 - nu_m), silent(k2, n2, 1.0 + nu_m)
    elif group == 7:
        eq = 1.0 - silent(k1, n1, nu_m)
        e10, e01 = silent(k1, n1, 1.0 + nu_m), silent(k2, n2, 1.0 - nu_m)
    elif group == 8:
        eq = 1.0 - silent(k2, n2, nu_p)
        e10 = silent(k1, n1, 1.0 - nu_p) if nu_p < 1.0 else silent(k2, n2, nu_p - 1.0)
        e01 = silent(k2, n2, 1.0 + nu_p)
    elif group == 9:
        eq = 1.0 - silent(k1, n1, nu_p)
        e10 = silent(k1, n1, 1.0 + nu_p)
        e01 = silent(k2, n2, 1.0 - nu_p) if nu_p < 1.0 else silent(k1, n1, nu_p - 1.0)
    else:
        raise AnalysisError(f"group must be 1..9, got {group}")
    if (b1, b2) in ((0, 0), (1, 1)):
        return eq
    return e10 if (b1, b2) == (1, 0) else e01


def pnc_group_weights(phase1_prev: dict[BitPair, float],
                      phase2_prev: dict[int, dict[int, float]]) -> dict[int, float]:
    """Stationary weights of the nine previous-outcome groups.

    Each weight sums, over the group's members, the joint probability of the
    two cross decodes given the previous true bits. The decode of transceiver
    1's bit happens at transceiver 2 and vice versa; when the relay itself
    erred in the previous slot, a *correct* read of the (wrong) relay bit
    flips the recovered message, so the error/no-error roles exchange. The
    weights sum to 4 (one per previous bit pair).
    """
    weights = {g: 0.0 for g in GROUP_DELTAS}
    for g, members in GROUP_MEMBERS.items():
        for b1p, b2p, h1, h2 in members:
            xor = b1p ^ b2p
            r = phase1_prev[(b1p, b2p)]
            e_at_2 = phase2_prev[2][xor]
            e_at_1 = phase2_prev[1][xor]
            f1_ok = e_at_2 if h1 != b1p else 1.0 - e_at_2
            f2_ok = e_at_1 if h2 != b2p else 1.0 - e_at_1
            e_at_2_c = phase2_prev[2][1 - xor]
            e_at_1_c = phase2_prev[1][1 - xor]
            f1_err = (1.0 - e_at_2_c) if h1 != b1p else e_at_2_c
            f2_err = (1.0 - e_at_1_c) if h2 != b2p else e_at_1_c
            weights[g] += (1.0 - r) * f1_ok * f2_ok + r * f1_err * f2_err
    return weights


def pnc_isi_fixed_point(cfg: SystemConfig, gains: ChannelGains,
                        tol: float = 1e-12, max_iter: int = 10000) -> ErrorBreakdown:
    """Steady state of the coupled error recursions for the reaction scheme.

    Synchronously iterates the phase-1 conditional errors (group weights from
    the previous iterate feeding the per-group closed errors) and the phase-2
    conditional errors (stationary relay-bit prior and adaptive thresholds)
    until the sup-norm change of all twelve scalars falls below ``tol``.
    """
    _require_unit_memory(gains)
    _require_budgets(cfg, "c_PNC", "zeta_R")
    nu1 = gains.t1r.odd_nus()[0] if gains.t1r.half_memory >= 1 else 0.0
    nu2 = gains.t2r.odd_nus()[0] if gains.t2r.half_memory >= 1 else 0.0
    c = cfg.c_PNC

    group_errors = {
        g: {pair: pnc_group_error(cfg, g, *pair, nu1, nu2, c) for pair in BIT_PAIRS}
        for g in GROUP_DELTAS
    }

    pb = {1: phase2_binding_table(cfg, gains.rt1), 2: phase2_binding_table(cfg, gains.rt2)}
    taus = {
        i: {bhat: adaptive_threshold_phase2(pb[i], n, bhat) for bhat in (0, 1)}
        for i, n in ((1, cfg.n3T1), (2, cfg.n3T2))
    }

    phase1 = {pair: group_errors[1][pair] for pair in BIT_PAIRS}
    phase2 = {
        i: {0: 0.0, 1: bound_count_tail(n, pb[i][(1, 0)], 0.0)[0]}
        for i, n in ((1, cfg.n3T1), (2, cfg.n3T2))
    }

    weights = None
    for iteration in range(1, max_iter + 1):
        weights = pnc_group_weights(phase1, phase2)
        prior_zero = relay_prior_zero(phase1)
        phase1_new = {
            pair: 0.25 * sum(weights[g] * group_errors[g][pair] for g in GROUP_DELTAS)
            for pair in BIT_PAIRS
        }
        phase2_new = {
            i: _phase2_error_step(n, pb[i], taus[i], prior_zero, phase2[i])
            for i, n in ((1, cfg.n3T1), (2, cfg.n3T2))
        }
        residual = max(
            max(abs(phase1_new[pair] - phase1[pair]) for pair in BIT_PAIRS),
            max(abs(phase2_new[i][b] - phase2[i][b]) for i in (1, 2) for b in (0, 1)),
        )
        phase1, phase2 = phase1_new, phase2_new
        if residual < tol:
            break
    else:
        raise AnalysisError(
            f"fixed point did not converge in {max_iter} iterations "
            f"(last residual {residual:.3e})"
        )
    extras = {
        "group_weights": weights,
        "group_errors": group_errors,
        "relay_prior_zero": relay_prior_zero(phase1),
        "thresholds_phase2": taus,
        "iterations": iteration,
        "residual": residual,
        "nu": (nu1, nu2),
    }
    return _breakdown("pnc", phase1, phase2, extras=extras)


# -- XOR-at-relay scheme with interference --------------------------------------


def snc_isi_release_distribution(gains_link: LinkGains, c_snc: float,
                                 m_trunc: int = 30) -> tuple[list[tuple[float, float]], float]:
    """Stationary release-count atoms under one interfering super slot.

    The release after a run of j consecutive ones follows the alternating
    recursion x <- base - nu3 * x from zero, and a run of length j ends with
    probability 2^-(j+1); atom m (1-based) is the release after m-1 ones with
    weight 2^-m. Returns the first ``m_trunc`` atoms and the discarded tail
    mass 2^-m_trunc.
    """
    if gains_link.half_memory > 1:
        raise AnalysisError("release atoms are defined for floor(q/2) <= 1")
    nu3 = gains_link.odd_nus()[0] if gains_link.half_memory == 1 else 0.0
    if nu3 >= 1.0:
        raise AnalysisError(f"normalized gain {nu3} >= 1: unstable recursion")
    base = release_for_concentration(c_snc, gains_link.pi1)
    atoms = []
    x = 0.0
    for m in range(1, m_trunc + 1):
        atoms.append((x, 2.0 ** -m))
        x = base - nu3 * x
    return atoms, 2.0 ** -m_trunc


def _snc_relay_concentration(bit: int, c_snc: float, release_prev: float,
                             pi3: float) -> float:
    """Relay-side concentration of one molecule type in the SNC scheme.

    A transmitted 1 always lands exactly on the target concentration (the
    adaptive rate cancels the transmitter's own residue); a 0 leaves only the
    previous release's residue.
    """
    return c_snc if bit else unit_convert(release_prev, pi3)


def _snc_binding_given_state(cfg: SystemConfig, gains: ChannelGains, i: int,
                             b_i: int, b_other: int,
                             x_prev_1: float, x_prev_2: float) -> float:
    own_link = gains.toward_relay(i)
    other_link = gains.toward_relay(3 - i)
    x_own = x_prev_1 if i == 1 else x_prev_2
    x_other = x_prev_2 if i == 1 else x_prev_1
    c_own = _snc_relay_concentration(b_i, cfg.c_SNC, x_own, own_link.pi(3))
    c_other = _snc_relay_concentration(b_other, cfg.c_SNC, x_other, other_link.pi(3))
    kappa = cfg.kappa_d1 if i == 1 else cfg.kappa_d2
    kappa_block = cfg.kappa_block_12 if i == 1 else cfg.kappa_block_21
    blockers = ((c_other, kappa_block),) if kappa_block is not None else ()
    return float(binding_fraction(c_own, kappa, blockers))


def snc_isi_threshold(cfg: SystemConfig, gains: ChannelGains,
                      m_trunc: int = 30) -> tuple[int, int]:
    """Numeric MAP relay thresholds under one interfering super slot.

    For each receptor group, evaluates the signed posterior-difference
    statistic of its bit over all counts y, marginalizing the two previous
    releases over their stationary atoms, and returns the largest count still
    favoring 0 (group size if no count favors 1).
    """
    _require_unit_memory(gains)
    _require_budgets(cfg, "c_SNC")
    atoms1, _ = snc_isi_release_distribution(gains.t1r, cfg.c_SNC, m_trunc)
    atoms2, _ = snc_isi_release_distribution(gains.t2r, cfg.c_SNC, m_trunc)
    taus = []
    for i, n in ((1, cfg.n1R), (2, cfg.n2R)):
        diff = np.zeros(n + 1)
        for b_other in (0, 1):
            for x1, w1 in atoms1:
                for x2, w2 in atoms2:
                    weight = 0.5 * w1 * w2
                    p_one = _snc_binding_given_state(cfg, gains, i, 1, b_other, x1, x2)
                    p_zero = _snc_binding_given_state(cfg, gains, i, 0, b_other, x1, x2)
                    diff += weight * (binom_pmf_vector(n, p_one) - binom_pmf_vector(n, p_zero))
        favors_one = np.nonzero(diff > 0.0)[0]
        taus.append(int(favors_one[0]) - 1 if favors_one.size else n)
    return taus[0], taus[1]


def snc_isi_phase1(cfg: SystemConfig, gains: ChannelGains,
                   taus: tuple[int, int], m_trunc: int = 30) -> tuple[
                       dict[BitPair, float], dict[int, dict[BitPair, float]]]:
    """Phase-1 conditional errors of the SNC scheme under interference.

    The release history is decode-independent, so these are exact (not a
    fixed point). The two receptor groups observe the same pair of previous
    releases (and, with blocking, each other's concentration), so their
    errors are combined by the XOR rule inside the marginalization over the
    stationary release atoms, where they are conditionally independent.
    Also returns the per-group marginal errors for diagnostics.
    """
    _require_unit_memory(gains)
    _require_budgets(cfg, "c_SNC")
    atoms1, _ = snc_isi_release_distribution(gains.t1r, cfg.c_SNC, m_trunc)
    atoms2, _ = snc_isi_release_distribution(gains.t2r, cfg.c_SNC, m_trunc)
    phase1: dict[BitPair, float] = {}
    per_group: dict[int, dict[BitPair, float]] = {1: {}, 2: {}}
    for b1, b2 in BIT_PAIRS:
        total = 0.0
        marg1 = 0.0
        marg2 = 0.0
        for x1, w1 in atoms1:
            for x2, w2 in atoms2:
                p1 = _snc_binding_given_state(cfg, gains, 1, b1, b2, x1, x2)
                p2 = _snc_binding_given_state(cfg, gains, 2, b2, b1, x1, x2)
                lo1, up1 = bound_count_tail(cfg.n1R, p1, taus[0])
                lo2, up2 = bound_count_tail(cfg.n2R, p2, taus[1])
                e1 = up1 if b1 == 0 else lo1
                e2 = up2 if b2 == 0 else lo2
                w = w1 * w2
                total += w * _xor_error(e1, e2)
                marg1 += w * e1
                marg2 += w * e2
        phase1[(b1, b2)] = total
        per_group[1][(b1, b2)] = marg1
        per_group[2][(b2, b1)] = marg2
    return phase1, per_group


def snc_isi_fixed_point(cfg: SystemConfig, gains: ChannelGains,
                        tol: float = 1e-12, max_iter: int = 10000,
                        m_trunc: int = 30) -> ErrorBreakdown:
    """Steady-state error breakdown of the SNC scheme under interference.

    Phase 1 is exact and static; only the phase-2 conditionals iterate (the
    threshold adaptation feeds back the transceiver's own previous decode).
    """
    _require_budgets(cfg, "c_SNC", "zeta_R")
    taus_relay = snc_isi_threshold(cfg, gains, m_trunc)
    phase1, per_group = snc_isi_phase1(cfg, gains, taus_relay, m_trunc)
    prior_zero = relay_prior_zero(phase1)

    pb = {1: phase2_binding_table(cfg, gains.rt1), 2: phase2_binding_table(cfg, gains.rt2)}
    taus = {
        i: {bhat: adaptive_threshold_phase2(pb[i], n, bhat) for bhat in (0, 1)}
        for i, n in ((1, cfg.n3T1), (2, cfg.n3T2))
    }
    phase2 = {
        i: {0: 0.0, 1: bound_count_tail(n, pb[i][(1, 0)], 0.0)[0]}
        for i, n in ((1, cfg.n3T1), (2, cfg.n3T2))
    }
    for iteration in range(1, max_iter + 1):
        phase2_new = {
            i: _phase2_error_step(n, pb[i], taus[i], prior_zero, phase2[i])
            for i, n in ((1, cfg.n3T1), (2, cfg.n3T2))
        }
        residual = max(abs(phase2_new[i][b] - phase2[i][b]) for i in (1, 2) for b in (0, 1))
        phase2 = phase2_new
        if residual < tol:
            break
    else:
        raise AnalysisError(f"phase-2 recursion did not converge (residual {residual:.3e})")
    extras = {
        "relay_thresholds": taus_relay,
        "per_group_phase1": per_group,
        "relay_prior_zero": prior_zero,
        "thresholds_phase2": taus,
        "iterations": iteration,
        "residual": residual,
    }
    return _breakdown("snc", phase1, phase2, extras=extras)


# -- no-error-propagation approximations ----------------------------------------


def _phase2_noe(cfg: SystemConfig, gains: ChannelGains,
                prior_zero: float) -> dict[int, dict[int, float]]:
    """Phase-2 conditional errors when all previous decodes are correct.

    The decode of the previous relay bit is pinned to its true value, so the
    threshold always matches the actual interference state.
    """
    out = {}
    for i, n in ((1, cfg.n3T1), (2, cfg.n3T2)):
        link = gains.toward_transceiver(i)
        pb = phase2_binding_table(cfg, link)
        taus = {bhat: adaptive_threshold_phase2(pb, n, bhat) for bhat in (0, 1)}
        conditionals = {}
        for b in (0, 1):
            total = 0.0
            for bp, prior in ((0, prior_zero), (1, 1.0 - prior_zero)):
                lower, upper = bound_count_tail(n, pb[(b, bp)], taus[bp])
                total += prior * (upper if b == 0 else lower)
            conditionals[b] = total
        out[i] = conditionals
    return out


def pnc_noe(cfg: SystemConfig, gains: ChannelGains) -> tuple[float, float]:
    """No-error-propagation error probabilities of the reaction scheme.

    Correct previous decodes cancel all interference in phase 1 (errors fall
    back to the no-interference forms with the target concentration) and pin
    the phase-2 threshold to the true previous relay bit. Closed form, no
    iteration; empirically a lower fence for the full recursion.
    """
    _require_unit_memory(gains)
    _require_budgets(cfg, "c_PNC", "zeta_R")
    phase1 = {
        pair: pnc_group_error(cfg, 1, *pair, 0.0, 0.0, cfg.c_PNC) for pair in BIT_PAIRS
    }
    phase2 = _phase2_noe(cfg, gains, relay_prior_zero(phase1))
    pe1, pe2, _ = combine_phases(phase1, phase2)
    return pe1, pe2


def pnc_noe_compact(cfg: SystemConfig, gains: ChannelGains) -> tuple[float, float]:
    """Compact algebraic variant of :func:`pnc_noe`.

    Merges the phase-2 miss and false-alarm tails into one weight
    (1/16)(4-u^2) w1 + (1/16)(2-u)^2 w2 + u/4, which matches the exact form
    to second order in the relay error mass u. Kept for reference.
    """
    _require_unit_memory(gains)
    _require_budgets(cfg, "c_PNC", "zeta_R")
    u = sum(
        pnc_group_error(cfg, 1, *pair, 0.0, 0.0, cfg.c_PNC)
        for pair in ((1, 0), (0, 1))
    )
    out = []
    for i, n in ((1, cfg.n3T1), (2, cfg.n3T2)):
        link = gains.toward_transceiver(i)
        pb = phase2_binding_table(cfg, link)
        tau1 = adaptive_threshold_phase2(pb, n, 1)
        w1 = bound_count_tail(n, pb[(1, 0)], 0.0)[0] + bound_count_tail(n, pb[(0, 1)], tau1)[1]
        w2 = bound_count_tail(n, pb[(1, 1)], tau1)[0]
        out.append((4.0 - u * u) / 16.0 * w1 + (2.0 - u) ** 2 / 16.0 * w2 + 0.25 * u)
    return out[0], out[1]


def snc_noe(cfg: SystemConfig, gains: ChannelGains,
            m_trunc: int = 30) -> tuple[float, float]:
    """No-error-propagation error probabilities of the XOR-at-relay scheme.

    Phase 1 is already decode-independent and stays exact; only the phase-2
    threshold feedback is pinned to the true previous relay bit. A lower
    bound on the full error since the relay error probability is below 1/2.
    """
    _require_budgets(cfg, "c_SNC", "zeta_R")
    taus_relay = snc_isi_threshold(cfg, gains, m_trunc)
    phase1, _ = snc_isi_phase1(cfg, gains, taus_relay, m_trunc)
    phase2 = _phase2_noe(cfg, gains, relay_prior_zero(phase1))
    pe1, pe2, _ = combine_phases(phase1, phase2)
    return pe1, pe2


def snc_noe_compact(cfg: SystemConfig, gains: ChannelGains,
                    m_trunc: int = 30) -> tuple[float, float]:
    """Compact algebraic variant of :func:`snc_noe` (reference only)."""
    _require_budgets(cfg, "c_SNC", "zeta_R")
    taus_relay = snc_isi_threshold(cfg, gains, m_trunc)
    phase1, _ = snc_isi_phase1(cfg, gains, taus_relay, m_trunc)
    u1 = phase1[(0, 0)] + phase1[(1, 1)]
    u2 = phase1[(0, 1)] + phase1[(1, 0)]
    out = []
    for i, n in ((1, cfg.n3T1), (2, cfg.n3T2)):
        link = gains.toward_transceiver(i)
        pb = phase2_binding_table(cfg, link)
        tau1 = adaptive_threshold_phase2(pb, n, 1)
        w1 = bound_count_tail(n, pb[(1, 0)], 0.0)[0] + bound_count_tail(n, pb[(0, 1)], tau1)[1]
        w2 = bound_count_tail(n, pb[(1, 1)], tau1)[0]
        out.append(
            ((2.0 - u1) ** 2 - u2 * u2) / 16.0 * w1
            + ((2.0 - u2) ** 2 - u1 * u1) / 16.0 * w2
            + 0.25 * (u1 + u2)
        )
    return out[0], out[1]


# -- generalized relay threshold for higher memories (simulation support) -------


def snc_relay_threshold_multimem(cfg: SystemConfig, gains: ChannelGains,
                                 enum_bits: int = 14,
                                 max_atoms: int = 64) -> tuple[int, int]:
    """Numeric MAP relay thresholds for ``floor(q/2) >= 2`` links.

    The stationary law of the residual interference concentration (seen when
    the transmitter is silent) is enumerated exactly over the trailing
    ``enum_bits`` bits of the transmit sequence (older contributions zeroed;
    the truncation error decays geometrically), then clustered to at most
    ``max_atoms`` weighted atoms before the posterior-difference search.
    Reduces to the single-slot construction at unit memory.
    """
    _require_budgets(cfg, "c_SNC")

    def isi_atoms(link: LinkGains) -> list[tuple[float, float]]:
        m = link.half_memory
        nus = np.asarray(link.odd_nus())
        base = release_for_concentration(cfg.c_SNC, link.pi1)
        codes = np.arange(2 ** enum_bits, dtype=np.int64)
        hist = np.zeros((m, codes.size))
        for step in range(enum_bits):
            bits = (codes >> step) & 1
            x = bits * (base - nus @ hist)
            hist = np.vstack([x, hist[:-1]])
        isi = np.zeros(codes.size)
        for row, pi in zip(hist, link.odd_pis()[1:]):
            isi += unit_convert(row, pi)
        vals = np.sort(isi)
        weight = 2.0 ** -enum_bits
        if vals.size <= max_atoms:
            return [(float(v), weight) for v in vals]
        edges = np.linspace(0, vals.size, max_atoms + 1).astype(int)
        return [
            (float(vals[a:b].mean()), weight * (b - a))
            for a, b in zip(edges[:-1], edges[1:])
            if b > a
        ]

    atoms = {1: isi_atoms(gains.t1r), 2: isi_atoms(gains.t2r)}
    taus = []
    for i, n in ((1, cfg.n1R), (2, cfg.n2R)):
        kappa = cfg.kappa_d1 if i == 1 else cfg.kappa_d2
        kappa_block = cfg.kappa_block_12 if i == 1 else cfg.kappa_block_21
        own_atoms = atoms[i]
        other_atoms = atoms[3 - i]
        diff = np.zeros(n + 1)
        for b_other in (0, 1):
            for c_other_isi, w_other in other_atoms:
                c_other = cfg.c_SNC if b_other else c_other_isi
                blockers = ((c_other, kappa_block),) if kappa_block is not None else ()
                p_one = float(binding_fraction(cfg.c_SNC, kappa, blockers))
                contrib_one = binom_pmf_vector(n, p_one)
                contrib_zero = np.zeros(n + 1)
                for c_own_isi, w_own in own_atoms:
                    p_zero = float(binding_fraction(c_own_isi, kappa, blockers))
                    contrib_zero += w_own * binom_pmf_vector(n, p_zero)
                diff += 0.5 * w_other * (contrib_one - contrib_zero)
        favors_one = np.nonzero(diff > 0.0)[0]
        taus.append(int(favors_one[0]) - 1 if favors_one.size else n)
    return taus[0], taus[1]
