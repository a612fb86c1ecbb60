"""Slot-level stochastic simulator with full error propagation.

The simulator is the independent cross-check of every closed form: it runs
the actual protocol state machines (adaptive releases, perfect reaction,
binomial receptor binding, threshold decoding, XOR recovery) super slot by
super slot, with exactly two randomness sources: the message bits and the
receptor binding. The channel itself is deterministic.

Determinism contract: the super-slot budget is split over ``n_blocks``
blocks of ``chains_per_block`` independent chains. Each block owns one
generator seeded from (seed, block index) and advances all its chains in
lock step, drawing per slot, in order: message bits, relay bound counts
(group 1 then 2), transceiver bound counts (1 then 2). Results are merged by
block index, so the report is bit-identical for any worker count. Each chain
discards a warmup prefix so that the release recursions are stationary.

Genie mode pins all *fed-back* decodes (the decoded other-transceiver bits
entering the release recursion and the decoded previous relay bit selecting
the adaptive threshold) to their true values while the decodes that are
counted stay stochastic; this is exactly the counterfactual behind the
no-error-propagation approximations.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from molrelay import analysis
from molrelay.channel import ChannelGains
from molrelay.coding import ensure_stable, pnc_cross_coefficients, react_perfect
from molrelay.config import L_PER_M3, SystemConfig, release_for_concentration

SCHEMES = ("pnc", "snc")


class SimulationInvariantError(RuntimeError):
    """A per-slot protocol invariant failed; carries the offending trace."""

    def __init__(self, message: str, trace: "TrialTrace"):
        super().__init__(f"{message}\noffending super slot: {trace}")
        self.trace = trace


@dataclass
class TrialTrace:
    """Full record of one simulated super slot (for dumps and diagnostics)."""

    slot: int
    b1: int
    b2: int
    x1: float
    x2: float
    x3: float
    c1_pre: float
    c2_pre: float
    c1: float
    c2: float
    c3_t1: float
    c3_t2: float
    y1: int
    y2: int
    y3_t1: int
    y3_t2: int
    relay_decision_1: int
    relay_decision_2: int
    relay_sent: int
    relay_decoded_t1: int
    relay_decoded_t2: int
    recovered_t1: int
    recovered_t2: int
    err_t1: bool
    err_t2: bool

    def to_json_line(self) -> str:
        return json.dumps(dataclasses.asdict(self))


@dataclass
class SimReport:
    """Aggregated outcome of one simulation run."""

    scheme: str
    seed: int
    genie: bool
    requested_superslots: int
    trials: int
    errors_t1: int
    errors_t2: int
    pe1: float
    pe2: float
    avg_bep: float
    stderr1: float
    stderr2: float
    stderr_avg: float
    mean_release_t1: float
    mean_release_t2: float
    max_release_t1: float
    max_release_t2: float
    relay_thresholds: tuple[float, float]
    warmup: int
    n_blocks: int
    chains_per_block: int
    release_samples_t1: Optional[np.ndarray] = None
    traces: Optional[list[TrialTrace]] = None

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc.pop("release_samples_t1")
        doc.pop("traces")
        return doc


def _stderr(p: float, n: int) -> float:
    return math.sqrt(p * (1.0 - p) / n) if n > 0 else float("nan")


@dataclass
class _Engine:
    """Precomputed constants and vectorized per-slot dynamics for one setup."""

    cfg: SystemConfig
    scheme: str
    gains: ChannelGains
    genie: bool

    def __post_init__(self):
        cfg, gains = self.cfg, self.gains
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if cfg.zeta_R is None:
            raise ValueError("cfg.zeta_R must be set for simulation")
        self.m1 = gains.t1r.half_memory
        self.m2 = gains.t2r.half_memory
        self.mr1 = gains.rt1.half_memory
        self.mr2 = gains.rt2.half_memory
        if self.m1 or self.m2:
            ensure_stable(gains)

        self.nus1 = np.asarray(gains.t1r.odd_nus())
        self.nus2 = np.asarray(gains.t2r.odd_nus())

        target = cfg.c_SNC if self.scheme == "snc" else cfg.c_PNC
        if target is not None:
            self.base1 = release_for_concentration(target, gains.t1r.pi1)
            self.base2 = release_for_concentration(target, gains.t2r.pi1)
        elif self.m1 == 0 and self.m2 == 0 and cfg.zeta_T1 is not None \
                and cfg.zeta_T2 is not None:
            # pure on-off keying: burst the raw budgets (memoryless links only)
            self.base1 = cfg.zeta_T1
            self.base2 = cfg.zeta_T2
        else:
            name = "c_SNC" if self.scheme == "snc" else "c_PNC"
            raise ValueError(f"cfg.{name} must be set for the {self.scheme} "
                             "scheme with channel memory")
        if self.scheme == "snc":
            self.xmax1 = self.base1
            self.xmax2 = self.base2
        else:
            s1 = float(self.nus1.sum())
            s2 = float(self.nus2.sum())
            self.xmax1 = self.base1 * (1.0 + s2) / (1.0 - s1 * s2)
            self.xmax2 = self.base2 * (1.0 + s1) / (1.0 - s1 * s2)
            self.cross1 = pnc_cross_coefficients(gains.t1r, gains.t2r)
            self.cross2 = pnc_cross_coefficients(gains.t2r, gains.t1r)
        self.podd_t1r = np.asarray(gains.t1r.odd_pis())
        self.podd_t2r = np.asarray(gains.t2r.odd_pis())
        self.podd_rt1 = np.asarray(gains.rt1.odd_pis())
        self.podd_rt2 = np.asarray(gains.rt2.odd_pis())

        self.kappa1 = cfg.kappa_d1
        self.kappa2 = cfg.kappa_d2
        self.kappa3 = cfg.kappa_d3
        self.block_12 = (
            self.kappa1 / cfg.kappa_block_12 if cfg.kappa_block_12 is not None else 0.0
        )
        self.block_21 = (
            self.kappa2 / cfg.kappa_block_21 if cfg.kappa_block_21 is not None else 0.0
        )

        self.relay_taus = self._relay_thresholds()
        self.tau_table_t1 = self._phase2_taus(gains.rt1, cfg.n3T1)
        self.tau_table_t2 = self._phase2_taus(gains.rt2, cfg.n3T2)
        self.depth_own = {
            "snc": (max(self.m1, 1), max(self.m2, 1)),
            "pnc": (max(self.m1 + self.m2, 1), max(self.m1 + self.m2, 1)),
        }[self.scheme]

    def _relay_thresholds(self) -> tuple[float, float]:
        if self.scheme == "pnc":
            return (0.0, 0.0)
        if self.m1 == 0 and self.m2 == 0:
            return (0.0, 0.0)
        if max(self.m1, self.m2) <= 1:
            return tuple(float(t) for t in analysis.snc_isi_threshold(self.cfg, self.gains))
        return tuple(float(t) for t in analysis.snc_relay_threshold_multimem(self.cfg, self.gains))

    def _phase2_taus(self, link, n) -> np.ndarray:
        table = analysis.phase2_threshold_table(self.cfg, link, n)
        m = link.half_memory
        flat = np.zeros(2 ** m)
        for history, tau in table.items():
            code = sum(bit << l for l, bit in enumerate(history))
            flat[code] = tau
        return flat

    @property
    def buffer_depth(self) -> int:
        return max(*self.depth_own, self.mr1, self.mr2, 1)

    def default_warmup(self) -> int:
        return max(10, 2 * self.buffer_depth)

    def run_block(self, seed_seq: np.random.SeedSequence, chains: int,
                  slots: int, warmup: int, collect_cap: int = 0,
                  record_traces: int = 0) -> dict:
        """Advance ``chains`` chains for ``slots`` slots; count errors past warmup."""
        cfg, scheme, genie = self.cfg, self.scheme, self.genie
        rng = np.random.default_rng(seed_seq)
        C = chains
        d1own, d2own = self.depth_own
        x1h = np.zeros((d1own, C))
        x2h = np.zeros((d2own, C))
        dec2at1 = np.zeros((max(self.m2, 1), C), dtype=np.int64)
        dec1at2 = np.zeros((max(self.m1, 1), C), dtype=np.int64)
        x3h = np.zeros((max(self.mr1, self.mr2, 1), C))
        prevdec1 = np.zeros((max(self.mr1, 1), C), dtype=np.int64)
        prevdec2 = np.zeros((max(self.mr2, 1), C), dtype=np.int64)
        pow1 = (1 << np.arange(self.mr1)).reshape(-1, 1)
        pow2 = (1 << np.arange(self.mr2)).reshape(-1, 1)

        zeta_r = cfg.zeta_R
        err1 = 0
        err2 = 0
        counted = 0
        sum_x1 = 0.0
        sum_x2 = 0.0
        max_x1 = 0.0
        max_x2 = 0.0
        samples: list[np.ndarray] = []
        sample_count = 0
        traces: list[TrialTrace] = []

        for t in range(slots):
            bits = rng.integers(0, 2, size=(2, C))
            b1 = bits[0]
            b2 = bits[1]
            if scheme == "snc":
                x1 = b1 * (self.base1 - (self.nus1 @ x1h[: self.m1]))
                x2 = b2 * (self.base2 - (self.nus2 @ x2h[: self.m2]))
            else:
                x1 = b1 * self.base1 + self.base1 * (
                    self.nus2 @ dec2at1[: self.m2]
                ) + (self.cross1 @ x1h[: len(self.cross1)])
                x2 = b2 * self.base2 + self.base2 * (
                    self.nus1 @ dec1at2[: self.m1]
                ) + (self.cross2 @ x2h[: len(self.cross2)])

            bad = (x1 > self.xmax1 * (1.0 + 1e-9)) | (x1 < -self.xmax1 * 1e-9) \
                | (x2 > self.xmax2 * (1.0 + 1e-9)) | (x2 < -self.xmax2 * 1e-9)
            if np.any(bad):
                k = int(np.nonzero(bad)[0][0])
                raise SimulationInvariantError(
                    "release outside the stable envelope",
                    self._partial_trace(t, k, bits, x1, x2),
                )

            c1_pre = (self.podd_t1r[0] * x1 + self.podd_t1r[1:] @ x1h[: self.m1]) / L_PER_M3
            c2_pre = (self.podd_t2r[0] * x2 + self.podd_t2r[1:] @ x2h[: self.m2]) / L_PER_M3
            if scheme == "pnc":
                c1, c2 = react_perfect(c1_pre, c2_pre)
            else:
                c1, c2 = c1_pre, c2_pre
            p1 = c1 / (c1 + self.block_12 * c2 + self.kappa1)
            p2 = c2 / (c2 + self.block_21 * c1 + self.kappa2)
            y1 = rng.binomial(cfg.n1R, p1)
            y2 = rng.binomial(cfg.n2R, p2)
            d1 = y1 > self.relay_taus[0]
            d2 = y2 > self.relay_taus[1]

            if scheme == "pnc":
                both = d1 & d2
                if np.any(both):
                    k = int(np.nonzero(both)[0][0])
                    raise SimulationInvariantError(
                        "both relay receptor groups decoded 1 under perfect reaction",
                        self._partial_trace(t, k, bits, x1, x2, c1_pre, c2_pre,
                                            c1, c2, y1, y2),
                    )
                relay_sent = d1 | d2
            else:
                relay_sent = d1 ^ d2
            x3 = relay_sent * zeta_r

            c3t1 = (self.podd_rt1[0] * x3 + self.podd_rt1[1:] @ x3h[: self.mr1]) / L_PER_M3
            c3t2 = (self.podd_rt2[0] * x3 + self.podd_rt2[1:] @ x3h[: self.mr2]) / L_PER_M3
            p3t1 = c3t1 / (c3t1 + self.kappa3)
            p3t2 = c3t2 / (c3t2 + self.kappa3)
            y3t1 = rng.binomial(cfg.n3T1, p3t1)
            y3t2 = rng.binomial(cfg.n3T2, p3t2)

            if self.mr1:
                tau_t1 = self.tau_table_t1[(prevdec1[: self.mr1] * pow1).sum(axis=0)]
            else:
                tau_t1 = 0.0
            if self.mr2:
                tau_t2 = self.tau_table_t2[(prevdec2[: self.mr2] * pow2).sum(axis=0)]
            else:
                tau_t2 = 0.0
            dr1 = (y3t1 > tau_t1).astype(np.int64)
            dr2 = (y3t2 > tau_t2).astype(np.int64)
            rec1 = b1 ^ dr1
            rec2 = b2 ^ dr2
            slot_err1 = rec1 != b2
            slot_err2 = rec2 != b1

            if t >= warmup:
                err1 += int(slot_err1.sum())
                err2 += int(slot_err2.sum())
                counted += C
                sum_x1 += float(x1.sum())
                sum_x2 += float(x2.sum())
                max_x1 = max(max_x1, float(x1.max()))
                max_x2 = max(max_x2, float(x2.max()))
                if collect_cap and sample_count < collect_cap:
                    take = min(C, collect_cap - sample_count)
                    samples.append(np.asarray(x1[:take], dtype=float).copy())
                    sample_count += take

            if record_traces and t < record_traces and C == 1:
                traces.append(TrialTrace(
                    slot=t, b1=int(b1[0]), b2=int(b2[0]),
                    x1=float(x1[0]), x2=float(x2[0]), x3=float(x3[0]),
                    c1_pre=float(c1_pre[0]), c2_pre=float(c2_pre[0]),
                    c1=float(np.asarray(c1)[0]), c2=float(np.asarray(c2)[0]),
                    c3_t1=float(c3t1[0]), c3_t2=float(c3t2[0]),
                    y1=int(y1[0]), y2=int(y2[0]),
                    y3_t1=int(y3t1[0]), y3_t2=int(y3t2[0]),
                    relay_decision_1=int(d1[0]), relay_decision_2=int(d2[0]),
                    relay_sent=int(relay_sent[0]),
                    relay_decoded_t1=int(dr1[0]), relay_decoded_t2=int(dr2[0]),
                    recovered_t1=int(rec1[0]), recovered_t2=int(rec2[0]),
                    err_t1=bool(slot_err1[0]), err_t2=bool(slot_err2[0]),
                ))

            for j in range(x1h.shape[0] - 1, 0, -1):
                x1h[j] = x1h[j - 1]
                x2h[j] = x2h[j - 1]
            x1h[0] = x1
            x2h[0] = x2
            for j in range(x3h.shape[0] - 1, 0, -1):
                x3h[j] = x3h[j - 1]
            x3h[0] = x3
            for buf, new in ((dec2at1, b2 if genie else rec1),
                             (dec1at2, b1 if genie else rec2),
                             (prevdec1, relay_sent if genie else dr1),
                             (prevdec2, relay_sent if genie else dr2)):
                for j in range(buf.shape[0] - 1, 0, -1):
                    buf[j] = buf[j - 1]
                buf[0] = new

        return {
            "err1": err1, "err2": err2, "counted": counted,
            "sum_x1": sum_x1, "sum_x2": sum_x2,
            "max_x1": max_x1, "max_x2": max_x2,
            "samples": np.concatenate(samples) if samples else np.empty(0),
            "traces": traces,
        }

    def _partial_trace(self, t, k, bits, x1, x2, c1_pre=None, c2_pre=None,
                       c1=None, c2=None, y1=None, y2=None) -> TrialTrace:
        def pick(arr):
            return float(np.asarray(arr)[k]) if arr is not None else float("nan")

        return TrialTrace(
            slot=t, b1=int(bits[0][k]), b2=int(bits[1][k]),
            x1=float(x1[k]), x2=float(x2[k]), x3=float("nan"),
            c1_pre=pick(c1_pre), c2_pre=pick(c2_pre), c1=pick(c1), c2=pick(c2),
            c3_t1=float("nan"), c3_t2=float("nan"),
            y1=int(pick(y1)) if y1 is not None else -1,
            y2=int(pick(y2)) if y2 is not None else -1,
            y3_t1=-1, y3_t2=-1,
            relay_decision_1=-1, relay_decision_2=-1, relay_sent=-1,
            relay_decoded_t1=-1, relay_decoded_t2=-1,
            recovered_t1=-1, recovered_t2=-1, err_t1=False, err_t2=False,
        )


def _plan(n_superslots: int, n_blocks: int, chains_per_block: int,
          warmup: int) -> tuple[int, int, int]:
    """(chains per block, slots per chain, counted slots per chain).

    Deterministic in its inputs only. Shrinks the chain count when the slot
    budget is too small to give every chain a healthy post-warmup stretch.
    """
    if n_superslots < 1:
        raise ValueError("n_superslots must be positive")
    min_counted = max(4 * warmup, 16)
    cpb = max(1, min(chains_per_block, n_superslots // (n_blocks * min_counted)))
    counted_per_chain = math.ceil(n_superslots / (n_blocks * cpb))
    return cpb, counted_per_chain + warmup, counted_per_chain


def _merge(engine: _Engine, results: list[dict], *, scheme, seed, genie,
           n_superslots, warmup, n_blocks, cpb) -> SimReport:
    err1 = sum(r["err1"] for r in results)
    err2 = sum(r["err2"] for r in results)
    counted = sum(r["counted"] for r in results)
    pe1 = err1 / counted
    pe2 = err2 / counted
    avg = 0.5 * (pe1 + pe2)
    samples = [r["samples"] for r in results if r["samples"].size]
    traces = [tr for r in results for tr in r["traces"]]
    return SimReport(
        scheme=scheme,
        seed=seed,
        genie=genie,
        requested_superslots=n_superslots,
        trials=counted,
        errors_t1=err1,
        errors_t2=err2,
        pe1=pe1,
        pe2=pe2,
        avg_bep=avg,
        stderr1=_stderr(pe1, counted),
        stderr2=_stderr(pe2, counted),
        stderr_avg=_stderr(avg, counted),
        mean_release_t1=sum(r["sum_x1"] for r in results) / counted,
        mean_release_t2=sum(r["sum_x2"] for r in results) / counted,
        max_release_t1=max(r["max_x1"] for r in results),
        max_release_t2=max(r["max_x2"] for r in results),
        relay_thresholds=engine.relay_taus,
        warmup=warmup,
        n_blocks=n_blocks,
        chains_per_block=cpb,
        release_samples_t1=np.concatenate(samples) if samples else None,
        traces=traces or None,
    )


def simulate(cfg: SystemConfig, scheme: str, gains: ChannelGains,
             n_superslots: int, seed: int, warmup: Optional[int] = None,
             genie: bool = False, n_blocks: int = 8,
             chains_per_block: int = 128, collect_releases: int = 0,
             trace_limit: int = 0) -> SimReport:
    """Run the full two-phase pipeline and estimate the error probabilities.

    ``trace_limit`` > 0 switches to a single sequential chain and records
    the first ``trace_limit`` super slots as :class:`TrialTrace` entries.
    """
    engine = _Engine(cfg, scheme, gains, genie)
    if warmup is None:
        warmup = engine.default_warmup()
    if trace_limit:
        n_blocks, chains_per_block = 1, 1
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_blocks)
    if trace_limit:
        slots = max(n_superslots, trace_limit, warmup + 1)
        results = [engine.run_block(children[0], 1, slots, warmup,
                                    record_traces=trace_limit)]
        return _merge(engine, results, scheme=scheme, seed=seed, genie=genie,
                      n_superslots=n_superslots, warmup=warmup,
                      n_blocks=1, cpb=1)
    cpb, slots, _ = _plan(n_superslots, n_blocks, chains_per_block, warmup)
    cap_per_block = math.ceil(collect_releases / n_blocks) if collect_releases else 0
    results = [
        engine.run_block(children[b], cpb, slots, warmup, collect_cap=cap_per_block)
        for b in range(n_blocks)
    ]
    return _merge(engine, results, scheme=scheme, seed=seed, genie=genie,
                  n_superslots=n_superslots, warmup=warmup,
                  n_blocks=n_blocks, cpb=cpb)


def _block_job(args):
    engine, child, cpb, slots, warmup, cap = args
    return engine.run_block(child, cpb, slots, warmup, collect_cap=cap)


def simulate_parallel(cfg: SystemConfig, scheme: str, gains: ChannelGains,
                      n_superslots: int, seed: int,
                      warmup: Optional[int] = None, genie: bool = False,
                      n_blocks: int = 8, chains_per_block: int = 128,
                      collect_releases: int = 0,
                      n_workers: int = 1) -> SimReport:
    """Like :func:`simulate`, dispatching blocks over worker processes.

    The block partition and per-block seeding are fixed by (seed, n_blocks),
    so the merged report is bit-identical for every ``n_workers``.
    """
    engine = _Engine(cfg, scheme, gains, genie)
    if warmup is None:
        warmup = engine.default_warmup()
    cpb, slots, _ = _plan(n_superslots, n_blocks, chains_per_block, warmup)
    cap_per_block = math.ceil(collect_releases / n_blocks) if collect_releases else 0
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    jobs = [(engine, children[b], cpb, slots, warmup, cap_per_block)
            for b in range(n_blocks)]
    if n_workers <= 1:
        results = [_block_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_block_job, jobs))
    return _merge(engine, results, scheme=scheme, seed=seed, genie=genie,
                  n_superslots=n_superslots, warmup=warmup,
                  n_blocks=n_blocks, cpb=cpb)


def dump_traces(report: SimReport, path) -> int:
    """Write the report's recorded traces as JSON lines; returns the count."""
    traces = report.traces or []
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(tr.to_json_line() + "\n")
    return len(traces)
