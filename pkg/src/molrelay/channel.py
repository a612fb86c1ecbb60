"""Deterministic Fick-diffusion channel.

The point-release Green's function of three-dimensional diffusion gives the
per-mol concentration gain at distance r and delay t. Slot-synchronous
sampling of that gain at t0, t0+ts, t0+2*ts, ... produces the per-slot gain
vector of each directed link, truncated at the link's memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from molrelay.config import SystemConfig


class Link(str, Enum):
    """Directed links of the two-way relay topology."""

    T1R = "t1r"
    T2R = "t2r"
    RT1 = "rt1"
    RT2 = "rt2"


def impulse_response(r, t, D):
    """Diffusion gain (m^-3) at distance ``r`` (m) and delay ``t`` (s).

    Evaluates 1[t>0] * (4*pi*D*t)^(-3/2) * exp(-r^2 / (4*D*t)). Accepts
    scalars or numpy arrays; t <= 0 yields 0 by definition.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(
            t > 0.0,
            (4.0 * np.pi * D * np.where(t > 0.0, t, 1.0)) ** -1.5
            * np.exp(-(r * r) / (4.0 * D * np.where(t > 0.0, t, 1.0))),
            0.0,
        )
    if value.ndim == 0:
        return float(value)
    return value


def peak_time(r: float, D: float) -> float:
    """Delay at which the diffusion gain at distance ``r`` is maximal: r^2/(6D)."""
    return r * r / (6.0 * D)


def link_geometry(cfg: SystemConfig, link: Link) -> tuple[float, float, int]:
    """(distance, diffusion coefficient, memory) of a directed link.

    Transceiver-to-relay links carry the transceiver's own molecule type;
    relay-to-transceiver links carry molecule type 3.
    """
    link = Link(link)
    if link is Link.T1R:
        return cfg.d1, cfg.D1, cfg.qT1R
    if link is Link.T2R:
        return cfg.d2, cfg.D2, cfg.qT2R
    if link is Link.RT1:
        return cfg.d1, cfg.D3, cfg.qRT1
    return cfg.d2, cfg.D3, cfg.qRT2


def choose_t0(cfg: SystemConfig) -> float:
    """Sampling offset that puts every link at or past its gain peak.

    Returns max(d1^2/6D1, d2^2/6D2, d1^2/6D3, d2^2/6D3) so all sampled gain
    sequences are decreasing.
    """
    return max(
        peak_time(cfg.d1, cfg.D1),
        peak_time(cfg.d2, cfg.D2),
        peak_time(cfg.d1, cfg.D3),
        peak_time(cfg.d2, cfg.D3),
    )


def choose_ts_for_memory(
    cfg: SystemConfig,
    q: int,
    target_nu: float = 0.05,
    rel_tol: float = 1e-9,
) -> float:
    """Slot duration such that the first truncated normalized gain hits ``target_nu``.

    Solves for ts > 0 such that the worst-case (largest) ratio
    h(d, t0 + (q+1)*ts) / h(d, t0) across the four links equals ``target_nu``.
    Requires cfg.t0 to be set at or past every link's gain peak, which makes
    the ratio continuous and strictly decreasing in ts, so bracketing plus
    bisection is exact.
    """
    if not (0.0 < target_nu < 1.0):
        raise ValueError(f"target_nu must be in (0, 1), got {target_nu}")
    if cfg.t0 is None:
        raise ValueError("cfg.t0 must be set before choosing ts")
    t0 = cfg.t0
    geoms = [link_geometry(cfg, link)[:2] for link in Link]
    for d, D in geoms:
        if t0 < peak_time(d, D) * (1 - 1e-12):
            raise ValueError(
                f"t0={t0} is before the gain peak {peak_time(d, D)} of a link; "
                "the tail ratio is not monotone there"
            )
    peaks = [impulse_response(d, t0, D) for d, D in geoms]

    def worst_nu(ts: float) -> float:
        t = t0 + (q + 1) * ts
        return max(
            impulse_response(d, t, D) / peak
            for (d, D), peak in zip(geoms, peaks)
        )

    lo = t0 * 1e-12
    if worst_nu(lo) <= target_nu:
        raise ValueError("no bracketing interval: ratio already below target at ts -> 0")
    hi = t0
    while worst_nu(hi) > target_nu:
        hi *= 2.0
        if hi > t0 * 1e12:
            raise ValueError("no bracketing interval found for ts")
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if worst_nu(mid) > target_nu:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class LinkGains:
    """Sampled per-slot gains of one directed link.

    ``pis[l-1]`` is the gain (m^-3) of a release l-1 slots old at measurement
    time, for l = 1..q+1; gains beyond the memory are zero. ``nus`` are the
    gains normalized by the first one, for l >= 2.
    """

    link: Link
    q: int
    pis: tuple[float, ...]

    def __post_init__(self):
        if len(self.pis) != self.q + 1:
            raise ValueError(f"expected {self.q + 1} gains, got {len(self.pis)}")
        if self.pis[0] <= 0:
            raise ValueError("first-slot gain must be positive")

    @property
    def pi1(self) -> float:
        return self.pis[0]

    def pi(self, l: int) -> float:
        """Gain at slot index l >= 1 (zero beyond the memory)."""
        if l < 1:
            raise ValueError("slot index starts at 1")
        return self.pis[l - 1] if l <= self.q + 1 else 0.0

    def nu(self, l: int) -> float:
        """Normalized gain pi_l / pi_1 for l >= 2 (zero beyond the memory)."""
        if l < 2:
            raise ValueError("normalized gains are defined for l >= 2")
        return self.pi(l) / self.pi1

    @property
    def nus(self) -> tuple[float, ...]:
        return tuple(p / self.pi1 for p in self.pis[1:])

    @property
    def half_memory(self) -> int:
        """Number of interfering same-phase slots: floor(q / 2)."""
        return self.q // 2

    def odd_nus(self) -> tuple[float, ...]:
        """nu_{2l+1} for l = 1..floor(q/2): the same-phase ISI coefficients.

        Both communication phases alternate slots, so only odd sample indices
        interfere with a given phase.
        """
        return tuple(self.nu(2 * l + 1) for l in range(1, self.half_memory + 1))

    def odd_pis(self) -> tuple[float, ...]:
        """pi_{2l+1} for l = 0..floor(q/2), starting with the signal gain."""
        return tuple(self.pi(2 * l + 1) for l in range(self.half_memory + 1))


def link_gains(cfg: SystemConfig, link: Link, q: Optional[int] = None) -> LinkGains:
    """Sample one link's gain vector at t0 + (l-1)*ts for l = 1..q+1."""
    if cfg.t0 is None or cfg.ts is None:
        raise ValueError("cfg.t0 and cfg.ts must be set before sampling gains")
    d, D, q_cfg = link_geometry(cfg, link)
    if q is None:
        q = q_cfg
    pis = tuple(
        float(impulse_response(d, cfg.t0 + (l - 1) * cfg.ts, D))
        for l in range(1, q + 2)
    )
    return LinkGains(link=Link(link), q=q, pis=pis)


@dataclass(frozen=True)
class ChannelGains:
    """Gain vectors of all four directed links."""

    t1r: LinkGains
    t2r: LinkGains
    rt1: LinkGains
    rt2: LinkGains

    @classmethod
    def from_config(cfg_cls, cfg: SystemConfig) -> "ChannelGains":
        return cfg_cls(
            t1r=link_gains(cfg, Link.T1R),
            t2r=link_gains(cfg, Link.T2R),
            rt1=link_gains(cfg, Link.RT1),
            rt2=link_gains(cfg, Link.RT2),
        )

    def toward_relay(self, i: int) -> LinkGains:
        """Transceiver-i-to-relay link (i in {1, 2})."""
        return self.t1r if i == 1 else self.t2r

    def toward_transceiver(self, i: int) -> LinkGains:
        return self.rt1 if i == 1 else self.rt2
