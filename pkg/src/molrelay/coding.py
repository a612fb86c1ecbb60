"""Protocol state machines for the two relaying schemes.

SNC: on-off keying toward the relay, relay decodes both messages and
forwards their logical XOR. With channel memory, a transmitter with bit 1
shrinks its release so that its own residual interference plus the new
release always produce the same target concentration at the relay; with bit
0 it stays silent.

PNC: the two molecule types annihilate in the medium (perfect reaction), so
the XOR happens physically. With channel memory, each transceiver releases
extra molecules to chemically cancel the *other* side's estimated residue,
reconstructed from its previously decoded bits and its own release history,
so it may transmit even when its bit is 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from molrelay.channel import ChannelGains, LinkGains
from molrelay.config import release_for_concentration


class InvariantViolation(RuntimeError):
    """An internal protocol invariant failed (negative release, double decode)."""


class UnstableChannelError(ValueError):
    """Normalized-gain sums reach 1; adaptive releases would be unbounded."""


def react_perfect(c1, c2):
    """Perfect annihilation of two co-located reactive concentrations.

    Returns (max(c1-c2, 0), max(c2-c1, 0)); the lesser species is wiped out
    and the difference is conserved.
    """
    return np.maximum(c1 - c2, 0.0), np.maximum(c2 - c1, 0.0)


def transceiver_recover(b_own: int, b_relay: int) -> int:
    """Recover the other side's bit from the decoded relay bit: own XOR relay."""
    return int(b_own) ^ int(b_relay)


def relay_step_pnc(y1: int, y2: int, tau1, tau2, zeta_r: float):
    """Relay behavior in the PNC scheme for one super slot.

    Each receptor group decodes its own post-reaction bound count; the relay
    releases zeta_r molecules if either group fired. Under perfect reaction
    at most one group can see molecules, so both firing is an invariant
    violation.
    """
    b1 = int(y1 > tau1)
    b2 = int(y2 > tau2)
    if b1 and b2:
        raise InvariantViolation(
            f"both relay receptor groups decoded 1 (y1={y1}, y2={y2}); "
            "impossible under perfect reaction"
        )
    return b1, b2, (b1 + b2) * zeta_r


def relay_step_snc(y1: int, y2: int, tau1, tau2, zeta_r: float):
    """Relay behavior in the SNC scheme: decode both, forward the XOR."""
    b1 = int(y1 > tau1)
    b2 = int(y2 > tau2)
    return b1, b2, (b1 ^ b2) * zeta_r


# -- per-node rolling memory -------------------------------------------------


def _zero_deque(depth: int) -> deque:
    return deque([0.0] * depth, maxlen=depth) if depth > 0 else deque(maxlen=0)


@dataclass
class SncTransceiverState:
    """Own-release history of one SNC transmitter (most recent first)."""

    memory: int
    releases: deque = field(init=False)

    def __post_init__(self):
        self.releases = _zero_deque(self.memory)

    def push(self, x: float) -> None:
        if self.memory > 0:
            self.releases.appendleft(x)


@dataclass
class PncTransceiverState:
    """Rolling memory of one PNC transmitter.

    ``own_releases`` must reach back far enough for the cross products of the
    two links' interference coefficients (depth floor(q_self/2) +
    floor(q_other/2)); ``decoded_other`` holds the previously decoded bits of
    the other transceiver (depth floor(q_other/2)). Cold start is all-zero:
    an empty medium.
    """

    own_memory: int
    other_memory: int
    own_releases: deque = field(init=False)
    decoded_other: deque = field(init=False)

    def __post_init__(self):
        self.own_releases = _zero_deque(self.own_memory + self.other_memory)
        self.decoded_other = _zero_deque(self.other_memory)

    def push(self, x: float, decoded_other_bit: Optional[int] = None) -> None:
        if self.own_memory + self.other_memory > 0:
            self.own_releases.appendleft(x)
        if decoded_other_bit is not None and self.other_memory > 0:
            self.decoded_other.appendleft(int(decoded_other_bit))


# -- release rules -------------------------------------------------------------


def snc_max_release(gains: LinkGains, c_snc: float) -> float:
    """Largest possible SNC release: the cold-start bit-1 burst."""
    return release_for_concentration(c_snc, gains.pi1)


def snc_release(bit: int, state: SncTransceiverState, gains: LinkGains,
                c_snc: float) -> float:
    """Adaptive SNC release count (mol) for the current super slot.

    Bit 0 transmits nothing. Bit 1 transmits the cold-start burst minus the
    contribution needed to cancel the transmitter's own residual
    interference, keeping the target concentration at the relay constant.
    """
    if not bit:
        return 0.0
    x_max = snc_max_release(gains, c_snc)
    x = x_max
    for nu, past in zip(gains.odd_nus(), state.releases):
        x -= nu * past
    if x < -1e-12 * x_max:
        raise InvariantViolation(
            f"negative SNC release {x}; history exceeds the stable envelope"
        )
    return max(x, 0.0)


def pnc_cross_coefficients(gains_self: LinkGains, gains_other: LinkGains) -> np.ndarray:
    """Coefficients of the own-release history in the PNC release recursion.

    Entry j (0-based) multiplies the release j+1 slots old and equals
    sum over l1 + l2 = j + 1 of nu_{2*l1+1}(self) * nu_{2*l2+1}(other)
    with l1, l2 >= 1, so entry 0 is always zero.
    """
    nus_self = gains_self.odd_nus()
    nus_other = gains_other.odd_nus()
    depth = len(nus_self) + len(nus_other)
    coeff = np.zeros(depth)
    for l1, a in enumerate(nus_self, start=1):
        for l2, b in enumerate(nus_other, start=1):
            coeff[l1 + l2 - 1] += a * b
    return coeff


def pnc_max_release(gains_self: LinkGains, gains_other: LinkGains,
                    c_pnc: float) -> float:
    """Stable upper envelope of the PNC release recursion.

    (release for c_pnc) * (1 + sum nu_other) / (1 - sum nu_self * sum nu_other),
    attained when the transmitter and the decoded other-bits are all ones.
    """
    s_self = sum(gains_self.odd_nus())
    s_other = sum(gains_other.odd_nus())
    if s_self * s_other >= 1.0:
        raise UnstableChannelError(
            f"interference product {s_self * s_other} >= 1; increase the slot "
            "duration to reduce the normalized gains"
        )
    base = release_for_concentration(c_pnc, gains_self.pi1)
    return base * (1.0 + s_other) / (1.0 - s_self * s_other)


def pnc_release(bit: int, state: PncTransceiverState, gains_self: LinkGains,
                gains_other: LinkGains, c_pnc: float) -> float:
    """Adaptive PNC release count (mol) for the current super slot.

    base * (bit + sum_l nu_other_{2l+1} * decoded_other[l-1])
    + sum_{l1,l2} nu_self_{2l1+1} * nu_other_{2l2+1} * own[l1+l2-1],
    where base is the release that produces c_pnc at the relay. The second
    term releases molecules purely to cancel the other side's residue, so the
    result can be positive even for bit 0.
    """
    base = release_for_concentration(c_pnc, gains_self.pi1)
    x = float(bit) * base
    for nu, decoded in zip(gains_other.odd_nus(), state.decoded_other):
        x += base * nu * decoded
    coeff = pnc_cross_coefficients(gains_self, gains_other)
    for c_j, past in zip(coeff, state.own_releases):
        x += c_j * past
    return x


# -- budgets -------------------------------------------------------------------


def snc_avg_release(gains: LinkGains, c_snc: float) -> float:
    """Long-run mean SNC release under i.i.d. uniform bits.

    Derived by replacing the releases and bits in the recursion with their
    stationary means: base / (2 + sum of odd nus).
    """
    return snc_max_release(gains, c_snc) / (2.0 + sum(gains.odd_nus()))


def pnc_avg_release(gains_self: LinkGains, gains_other: LinkGains,
                    c_pnc: float) -> float:
    """Long-run mean PNC release under i.i.d. uniform bits.

    base * (1 + sum nu_other) / (2 * (1 - sum nu_self * sum nu_other)).
    """
    s_self = sum(gains_self.odd_nus())
    s_other = sum(gains_other.odd_nus())
    if s_self * s_other >= 1.0:
        raise UnstableChannelError(
            f"interference product {s_self * s_other} >= 1"
        )
    base = release_for_concentration(c_pnc, gains_self.pi1)
    return base * (1.0 + s_other) / (2.0 * (1.0 - s_self * s_other))


def calibrate_budgets(gains: ChannelGains, target_x_avg: float) -> tuple[float, float]:
    """Target concentrations giving both schemes the same mean release.

    Returns (c_snc, c_pnc) such that the average over the two transceivers of
    the long-run mean release equals ``target_x_avg`` (mol) for each scheme,
    using the closed-form stationary means.
    """
    if target_x_avg <= 0:
        raise ValueError("target mean release must be positive")
    snc_unit = 0.5 * (snc_avg_release(gains.t1r, 1.0) + snc_avg_release(gains.t2r, 1.0))
    pnc_unit = 0.5 * (
        pnc_avg_release(gains.t1r, gains.t2r, 1.0)
        + pnc_avg_release(gains.t2r, gains.t1r, 1.0)
    )
    return target_x_avg / snc_unit, target_x_avg / pnc_unit


def ensure_stable(gains: ChannelGains) -> None:
    """Reject gain configurations whose adaptive releases would diverge.

    The SNC recursion needs each link's odd-nu sum below 1 to keep releases
    nonnegative; the PNC recursion needs the product of the two links' sums
    below 1 to stay bounded.
    """
    for link_gains in (gains.t1r, gains.t2r):
        s = sum(link_gains.odd_nus())
        if s >= 1.0:
            raise UnstableChannelError(
                f"odd normalized-gain sum {s} >= 1 on link {link_gains.link.value}"
            )
    s1 = sum(gains.t1r.odd_nus())
    s2 = sum(gains.t2r.odd_nus())
    if s1 * s2 >= 1.0:
        raise UnstableChannelError(
            f"interference product {s1 * s2} >= 1 across the uplink pair"
        )
