"""Monte Carlo time-tag generation for HBT and HOM measurements.

Random streams are derived from one 64-bit seed with
``numpy.random.SeedSequence`` spawn keys, one per subsystem (emission,
loss, routing, darks, jitter), so switching one subsystem off never moves
the draws of another. Emission draws are further split into fixed blocks
of pulses, which makes every pulse's draws independent of the run length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .contaminant import ContaminantParams
from .core.config import Config
from .core.params import BeamSplitterCoeffs, DetectorModel, OpticalPath, PulseSchedule, path_efficiency
from .core.tags import TimeTagStream

EMISSION, LOSS, ROUTING, DARKS, JITTER = range(5)
BLOCK = 1 << 18


def subsystem_rng(seed: int, subsystem: int, block=None) -> np.random.Generator:
    key = (subsystem,) if block is None else (subsystem, *np.atleast_1d(block).tolist())
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class Envelope:
    """Photon arrival-time profile after retrieval starts.

    Density proportional to exp(-t/decay) - exp(-t/rise) (pure exponential
    when rise = 0), truncated to [0, truncation) and renormalized there.
    """

    rise: float = 0.0
    decay: float = 200e-9
    truncation: float = 1.4e-6

    def __post_init__(self):
        if self.rise < 0 or self.decay <= 0 or self.truncation <= 0:
            raise ValueError("envelope needs rise >= 0, decay > 0, truncation > 0")
        if self.rise == self.decay:
            raise ValueError("rise and decay constants must differ")

    def _raw_cdf(self, t):
        t = np.asarray(t, float)
        if self.rise == 0:
            return 1 - np.exp(-t / self.decay)
        a, b = self.decay, self.rise
        return 1 - (a * np.exp(-t / a) - b * np.exp(-t / b)) / (a - b)

    def pdf(self, t):
        t = np.asarray(t, float)
        if self.rise == 0:
            raw = np.exp(-t / self.decay) / self.decay
        else:
            raw = (np.exp(-t / self.decay) - np.exp(-t / self.rise)) / (self.decay - self.rise)
        norm = float(self._raw_cdf(self.truncation))
        return np.where((t >= 0) & (t < self.truncation), raw / norm, 0.0)

    def quantile(self, u) -> np.ndarray:
        """Inverse CDF on [0, truncation); one uniform per delay."""
        u = np.asarray(u, float)
        if self.rise == 0:
            return -self.decay * np.log1p(-u * float(self._raw_cdf(self.truncation)))
        grid = np.linspace(0.0, self.truncation, 20001)
        cdf = self._raw_cdf(grid)
        return np.interp(u, cdf / cdf[-1], grid)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.quantile(rng.random(n))


@dataclass(frozen=True)
class SourceModel:
    """Photon source: contaminant chain, two-photon events, envelope, overlap.

    ``p2`` is the probability of a second photon given that a first one is
    emitted; :func:`p2_for_g2` converts a target g2(0).
    """

    cp: ContaminantParams
    p2: float = 0.0
    envelope: Envelope = field(default_factory=Envelope)
    mode_overlap: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p2 <= 1.0:
            raise ValueError("p2 must lie in [0, 1]")
        if not 0.0 <= self.mode_overlap <= 1.0:
            raise ValueError("mode_overlap must lie in [0, 1]")


def p2_for_g2(g2: float, p_gen: float) -> float:
    """Conditional two-photon probability giving ``g2`` at mean generation ``p_gen``.

    Solves 2 q / (p_gen (1 + q)**2) = g2 for the small root q.
    """
    x = g2 * p_gen
    if x == 0:
        return 0.0
    if x > 0.5:
        raise ValueError("g2 * p_gen must be <= 1/2")
    return x / ((1 - x) + math.sqrt(1 - 2 * x))  # small root, no cancellation


def g2_of_p2(p2: float, p_gen: float) -> float:
    return 2 * p2 / (p_gen * (1 + p2) ** 2)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    schedule: PulseSchedule
    topology: str = "HBT"
    hom_delay: float = 4.92e-6
    hom_parallel: bool = True
    n_trains: int = 1
    path: OpticalPath = field(default_factory=OpticalPath)
    detectors: DetectorModel = field(default_factory=DetectorModel)
    beamsplitter: BeamSplitterCoeffs = field(default_factory=BeamSplitterCoeffs.ideal)
    input_split: float = 0.5  # HOM: probability of taking the short arm

    def __post_init__(self):
        topo = self.topology.upper()
        if topo not in ("HBT", "HOM"):
            raise ValueError(f"invalid topology {self.topology!r}")
        object.__setattr__(self, "topology", topo)
        if topo == "HOM":
            k = round(self.hom_delay / self.schedule.t_p)
            if k < 1 or abs(k * self.schedule.t_p - self.hom_delay) > 1e-9:
                raise ValueError("hom_delay must be a positive integer multiple of t_p (within 1 ns)")
        if self.n_trains < 1:
            raise ValueError("n_trains must be >= 1")

    @property
    def n_pulses(self) -> int:
        return self.schedule.n_pulses

    @property
    def total_pulses(self) -> int:
        return self.schedule.n_pulses * self.n_trains

    @property
    def delay_periods(self) -> int:
        return round(self.hom_delay / self.schedule.t_p)

    @property
    def duration_ns(self) -> int:
        return int(round(self.total_pulses * self.schedule.t_p * 1e9))


@dataclass(frozen=True, eq=False)
class Emissions:
    """Per-pulse outcomes plus per-photon (pulse, time) records."""

    counts: np.ndarray        # uint8 photons per pulse
    contaminated: np.ndarray  # uint8 contaminant present per pulse
    photon_pulse: np.ndarray  # int64 global pulse index (0-based)
    photon_time: np.ndarray   # int64 ns

    @property
    def n_photons(self) -> int:
        return self.photon_pulse.size

    def select(self, keep: np.ndarray) -> "Emissions":
        pulse = self.photon_pulse[keep]
        counts = np.bincount(pulse, minlength=self.counts.size).astype(np.uint8)
        return Emissions(counts, self.contaminated, pulse, self.photon_time[keep])

    def success(self, train_len: int) -> np.ndarray:
        """(n_trains, train_len) boolean: at least one photon on that pulse."""
        return (self.counts > 0).reshape(-1, train_len)


def pulse_start_ns(pulse, t_p: float) -> np.ndarray:
    return np.rint(np.asarray(pulse, np.float64) * (t_p * 1e9)).astype(np.int64)


def simulate_emissions(src: SourceModel, sched: PulseSchedule, seed: int, n_trains: int = 1,
                       backend: str | None = None) -> Emissions:
    """Sample contaminant presence, photon number and emission times pulse by pulse.

    Each train of ``sched.n_pulses`` pulses starts contaminant-free; trains
    follow each other back to back in time.
    """
    total = sched.n_pulses * n_trains
    cp = src.cp
    blocks = list(enumerate(range(0, total, BLOCK)))
    # every block draws full-length arrays, so a pulse's uniforms never
    # depend on how many pulses the run has
    u_chain = np.concatenate([subsystem_rng(seed, EMISSION, (b, 0)).random(BLOCK)[: min(BLOCK, total - start)]
                              for b, start in blocks])
    present = kernels.contaminant_chain(u_chain, cp.survive, cp.p_c, sched.n_pulses, backend=backend)
    del u_chain

    counts = np.empty(total, np.uint8)
    pulses, delays = [], []
    for b, start in blocks:
        stop = min(start + BLOCK, total)
        m = stop - start
        u = subsystem_rng(seed, EMISSION, (b, 1)).random((4, BLOCK))[:, :m]
        emit = (present[start:stop] == 0) & (u[0] < cp.p_max)
        two = emit & (u[1] < src.p2)
        counts[start:stop] = emit.astype(np.uint8) + two
        first = np.flatnonzero(emit)
        second = np.flatnonzero(two)
        pulses += [first + start, second + start]
        delays += [src.envelope.quantile(u[2, first]), src.envelope.quantile(u[3, second])]
    pulse = np.concatenate(pulses) if pulses else np.empty(0, np.int64)
    delay = np.concatenate(delays) if delays else np.empty(0)
    # floor to whole ns and stay strictly inside [0, truncation) so no photon
    # lands on the closing edge of the gate
    last = max(int(round(src.envelope.truncation * 1e9)) - 1, 0)
    delay_ns = np.minimum(np.floor(delay * 1e9).astype(np.int64), last)
    t = pulse_start_ns(pulse, sched.t_p) + int(round(sched.gate_start * 1e9)) + delay_ns
    order = np.lexsort((t, pulse))
    return Emissions(counts, present, pulse[order].astype(np.int64), t[order])


def apply_losses(emissions: Emissions, path: OpticalPath, det_eff: float, seed: int) -> Emissions:
    """Independent Bernoulli thinning with the total path x detector efficiency."""
    eff = path_efficiency(path) * det_eff
    if not 0.0 <= eff <= 1.0:
        raise ValueError("efficiencies must lie in [0, 1]")
    if eff == 1.0:
        return emissions
    u = subsystem_rng(seed, LOSS).random(emissions.n_photons)
    return emissions.select(u < eff)


def hom_outcome_table(bs: BeamSplitterCoeffs, parallel: bool, overlap: float) -> dict[str, float]:
    """Outcome probabilities for one photon in each input port.

    Port 1 carries the short-arm photon (H when parallel, V otherwise),
    port 2 the delayed photon (H). Keys: A3B4, A4B3, AB3, AB4 for two
    detected photons; A3, A4, B3, B4 for one; none. A/B are the port 1/2
    photons, 3/4 the outputs (detector channels 1/2).
    """
    T1, R1 = bs.power(1, "H" if parallel else "V")
    T2, R2 = bs.power(2, "H")
    c = overlap if parallel else 0.0
    k = math.cos(bs.alpha)
    cross = 2.0 * c * k * math.sqrt(T1 * R1 * T2 * R2)
    p34 = max(T1 * T2 + R1 * R2 + cross, 0.0)
    p33 = T1 * R2 * (1 + c)
    p44 = R1 * T2 * (1 + c)
    L1, L2 = 1 - T1 - R1, 1 - T2 - R2
    singles = {"A3": T1 * L2, "B3": R2 * L1, "A4": R1 * L2, "B4": T2 * L1, "none": L1 * L2}
    # interference moves weight in or out of the two-photon outcomes; the
    # remainder is shared among the one/zero-photon outcomes in proportion
    two = p34 + p33 + p44
    rest = sum(singles.values())
    scale = max(1.0 - two, 0.0) / rest if rest > 0 else 0.0
    split = T1 * T2 / (T1 * T2 + R1 * R2) if T1 * T2 + R1 * R2 > 0 else 0.5
    table = {"A3B4": p34 * split, "A4B3": p34 * (1 - split), "AB3": p33, "AB4": p44}
    table.update({k_: v * scale for k_, v in singles.items()})
    total = sum(table.values())
    return {k_: v / total for k_, v in table.items()}


def _route_single(u, T, R):
    """Channel (1, 2) or 0 for lost."""
    return np.where(u < T, 1, np.where(u < T + R, 2, 0)).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class SimResult:
    stream: TimeTagStream
    origin: np.ndarray  # uint8 per tag: 1 source photon, 0 dark count
    emissions: Emissions


def route_and_detect(emissions: Emissions, cfg: SimConfig, overlap: float = 1.0,
                     return_origin: bool = False):
    """Route photons through the HBT or HOM splitter, add jitter and dark counts."""
    bs = cfg.beamsplitter
    rng = subsystem_rng(cfg.seed, ROUTING)
    pulse = emissions.photon_pulse
    times = emissions.photon_time.copy()
    n = pulse.size

    if cfg.topology == "HBT":
        T, R = bs.power(1, "H")
        ch = _route_single(rng.random(n), T, R)
    elif cfg.topology == "HOM":
        ch = np.zeros(n, np.uint8)
        long_arm = rng.random(n) >= cfg.input_split
        k = cfg.delay_periods
        times[long_arm] += int(round(cfg.hom_delay * 1e9))
        slot = pulse + k * long_arm
        nslots = int(slot.max()) + 1 if n else 0
        n1 = np.bincount(slot[~long_arm], minlength=nslots)
        n2 = np.bincount(slot[long_arm], minlength=nslots)
        paired = ((n1 == 1) & (n2 == 1))[slot] if n else np.zeros(0, bool)

        pol1 = "H" if cfg.hom_parallel else "V"
        u_single = rng.random(n)
        lone = ~paired
        for arm_mask, port, pol in ((~long_arm, 1, pol1), (long_arm, 2, "H")):
            sel = lone & arm_mask
            t_, r_ = bs.power(port, pol)
            to3, to4 = (t_, r_) if port == 1 else (r_, t_)
            ch[sel] = _route_single(u_single[sel], to3, to4)

        a_idx = np.flatnonzero(paired & ~long_arm)
        b_idx = np.flatnonzero(paired & long_arm)
        a_idx = a_idx[np.argsort(slot[a_idx], kind="stable")]
        b_idx = b_idx[np.argsort(slot[b_idx], kind="stable")]
        table = hom_outcome_table(bs, cfg.hom_parallel, overlap)
        names = list(table)
        cum = np.cumsum([table[k_] for k_ in names])
        pick = np.minimum(np.searchsorted(cum, rng.random(a_idx.size), side="right"), len(names) - 1)
        a_ch = np.zeros(a_idx.size, np.uint8)
        b_ch = np.zeros(a_idx.size, np.uint8)
        for i, name in enumerate(names):
            sel = pick == i
            if name == "none":
                continue
            if name.startswith("AB"):
                out = 1 if name[2] == "3" else 2
                a_ch[sel] = out
                b_ch[sel] = out
            else:
                for who, digit in zip(name[::2], name[1::2]):
                    target = a_ch if who == "A" else b_ch
                    target[sel] = 1 if digit == "3" else 2
        ch[a_idx] = a_ch
        ch[b_idx] = b_ch
    else:
        raise ValueError(f"invalid topology {cfg.topology!r}")

    det = cfg.detectors
    if det.jitter > 0:
        jit = subsystem_rng(cfg.seed, JITTER).normal(0.0, det.jitter * 1e9, n)
        times = np.maximum(times + np.rint(jit).astype(np.int64), 0)

    drng = subsystem_rng(cfg.seed, DARKS)
    parts, origins = {}, {}
    dur = cfg.duration_ns
    for c in (1, 2):
        dark_n = drng.poisson(det.background(c) * dur * 1e-9)
        darks = drng.integers(0, dur, dark_n) if dark_n else np.empty(0, np.int64)
        photons = times[ch == c]
        parts[c] = np.concatenate([photons, darks])
        origins[c] = np.concatenate([np.ones(photons.size, np.uint8), np.zeros(darks.size, np.uint8)])

    chans = np.concatenate([np.full(parts[c].size, c, np.uint8) for c in (1, 2)])
    ts = np.concatenate([parts[1], parts[2]]).astype(np.int64)
    org = np.concatenate([origins[1], origins[2]])
    order = np.lexsort((org, chans, ts))
    stream = TimeTagStream(chans[order], ts[order])
    if return_origin:
        return SimResult(stream, org[order], emissions)
    return stream


def source_from_config(cfg: Config) -> SourceModel:
    s = cfg.source
    cp = ContaminantParams(s.p_c, s.tau_c, s.p_max, cfg.schedule.t_p)
    env = Envelope(s.envelope_rise, s.envelope_decay, cfg.schedule.gate_window)
    return SourceModel(cp, s.p2, env, s.mode_overlap)


def sim_config_from_config(cfg: Config, seed: int | None = None, topology: str | None = None,
                           pulses: int | None = None) -> SimConfig:
    sim = cfg.simulation
    sched = cfg.schedule if pulses is None else cfg.schedule.replace(n_pulses=int(pulses))
    return SimConfig(
        seed=sim.seed if seed is None else int(seed),
        schedule=sched,
        topology=topology or sim.topology,
        hom_delay=sim.hom_delay,
        hom_parallel=sim.hom_parallel,
        n_trains=sim.n_trains,
        path=cfg.optics,
        detectors=cfg.detectors,
        beamsplitter=cfg.beamsplitter,
    )


def simulate(src: SourceModel, cfg: SimConfig, return_origin: bool = False, backend: str | None = None):
    """Emission, losses, routing and darks in one call."""
    em = simulate_emissions(src, cfg.schedule, cfg.seed, cfg.n_trains, backend=backend)
    em = apply_losses(em, cfg.path, cfg.detectors.efficiency, cfg.seed)
    return route_and_detect(em, cfg, overlap=src.mode_overlap, return_origin=return_origin)
