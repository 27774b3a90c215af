"""Time-tag analysis: gating, coincidence histograms, accidental-coincidence
reconstruction, integrated g2(0), HOM visibility and mode overlap.

Internally all times are integer nanoseconds. Histograms cover
``[-tau_max, tau_max)`` with uniform bins; the zero-delay bin edge sits on
tau = 0.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .core.params import BeamSplitterCoeffs, PulseSchedule
from .core.tags import TimeTagStream

DEFAULT_SIDE_PEAKS = tuple(m for k in range(10, 51) for m in (-k, k))


def _ns(seconds: float) -> int:
    v = seconds * 1e9
    r = round(v)
    if abs(v - r) > 1e-6 * max(1.0, abs(v)):
        raise ValueError(f"{seconds!r} s is not a whole number of nanoseconds")
    return int(r)


def _period_ns(sched: PulseSchedule) -> float:
    t = sched.t_p * 1e9
    return float(round(t)) if abs(t - round(t)) < 1e-6 else t


def gate_phase(timestamps, sched: PulseSchedule) -> np.ndarray:
    """Time since the most recent gate opening, in ns."""
    t = np.asarray(timestamps, np.int64)
    start = round(sched.gate_start * 1e9)
    tp = _period_ns(sched)
    if float(tp).is_integer():
        return np.mod(t - start, int(tp))
    return np.mod((t - start).astype(np.float64), tp)


def gate(stream: TimeTagStream, sched: PulseSchedule) -> tuple[TimeTagStream, TimeTagStream]:
    """Split into (in-gate, out-of-gate) tags; the gate is the closed-open
    interval [retrieval start, retrieval start + gate_window) of each period."""
    inside = gate_phase(stream.timestamps, sched) < round(sched.gate_window * 1e9)
    return (
        TimeTagStream(stream.channels[inside], stream.timestamps[inside]),
        TimeTagStream(stream.channels[~inside], stream.timestamps[~inside]),
    )


@dataclass(frozen=True, eq=False)
class RateProfiles:
    """Per-channel in-gate photon rate P_i(t) and flat background B_i.

    ``photon[c]`` is tabulated on ``bin_ns`` bins from the gate opening, in
    events/s per pulse, with the background already removed. Noise can make
    individual bins slightly negative; they are kept so that the
    reconstructed background stays unbiased.
    """

    bin_ns: int
    gate_ns: int
    photon: dict
    background: dict
    n_pulses: int

    def expected_photons(self, channel: int) -> float:
        """Mean in-gate source detections per pulse."""
        return float(np.sum(self.photon[channel]) * self.bin_ns * 1e-9)


def rate_profiles(out_tags: TimeTagStream, in_tags: TimeTagStream, sched: PulseSchedule,
                  n_pulses: int | None = None, bin_width: float = 20e-9,
                  channels=(1, 2)) -> RateProfiles:
    n_pulses = sched.n_pulses if n_pulses is None else int(n_pulses)
    if len(out_tags) + len(in_tags) == 0:
        raise ValueError("empty stream")
    bin_ns = _ns(bin_width)
    gate_ns = _ns(sched.gate_window)
    if gate_ns % bin_ns:
        raise ValueError("gate window must be a whole number of profile bins")
    nb = gate_ns // bin_ns
    out_time = n_pulses * (sched.t_p - sched.gate_window)
    photon, background = {}, {}
    for c in channels:
        b = out_tags.channel(c).size / out_time if out_time > 0 else 0.0
        phase = gate_phase(in_tags.channel(c), sched)
        hist = np.bincount((phase // bin_ns).astype(np.int64), minlength=nb)[:nb]
        rate = hist / (n_pulses * bin_ns * 1e-9)
        photon[c] = rate - b
        background[c] = b
    return RateProfiles(bin_ns, gate_ns, photon, background, n_pulses)


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    bin_ns: int
    tau_max_ns: int
    counts: np.ndarray
    n_pulses: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.counts.size * self.bin_ns != 2 * self.tau_max_ns:
            raise ValueError("counts length does not match the binning")

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.counts.size + 1) * self.bin_ns - self.tau_max_ns

    @property
    def centers(self) -> np.ndarray:
        return self.edges[:-1] + 0.5 * self.bin_ns

    def same_binning(self, other: "CoincidenceHistogram") -> bool:
        return self.bin_ns == other.bin_ns and self.tau_max_ns == other.tau_max_ns

    def window(self, center_ns: float, half_width_ns: float) -> np.ndarray:
        c = self.centers
        return (c >= center_ns - half_width_ns) & (c < center_ns + half_width_ns)

    def integrate(self, center_ns: float, half_width_ns: float) -> float:
        lo, hi = center_ns - half_width_ns, center_ns + half_width_ns
        if lo < -self.tau_max_ns or hi > self.tau_max_ns:
            raise ValueError(f"window [{lo}, {hi}) ns outside histogram range")
        return float(self.counts[self.window(center_ns, half_width_ns)].sum())

    def mirrored(self) -> "CoincidenceHistogram":
        return replace(self, counts=self.counts[::-1].copy())

    def __sub__(self, other: "CoincidenceHistogram") -> "CoincidenceHistogram":
        if not self.same_binning(other):
            raise ValueError("histograms have different binning")
        return replace(self, counts=self.counts - other.counts)


def coincidences(tags1, tags2, bin_width: float, tau_max: float, n_pulses: int = 0,
                 backend: str | None = None) -> CoincidenceHistogram:
    """All-pairs histogram of t2 - t1 over [-tau_max, tau_max)."""
    bin_ns, tmax_ns = _ns(bin_width), _ns(tau_max)
    counts = kernels.coincidence_histogram(tags1, tags2, bin_ns, tmax_ns, backend=backend)
    return CoincidenceHistogram(bin_ns, tmax_ns, counts, n_pulses)


def histogram_range(sched: PulseSchedule, side_peaks=DEFAULT_SIDE_PEAKS, bin_width: float = 20e-9) -> float:
    """Smallest tau_max (s) holding every requested peak window, on whole bins."""
    bin_ns = _ns(bin_width)
    reach = max(abs(m) for m in side_peaks) * sched.t_p * 1e9 + sched.gate_window * 1e9
    n = math.ceil(reach / bin_ns)
    return n * bin_ns * 1e-9


def _peak_shape(profiles: RateProfiles, c1: int, c2: int) -> np.ndarray:
    """Expected accidental pairs per pulse versus tau offset, in profile bins.

    Entry k holds the mass of tau in [(k - G) * bin, (k - G + 1) * bin),
    k = 0 .. 2G - 1, for one gate pair.
    """
    d = profiles.bin_ns * 1e-9
    a1 = profiles.photon[c1] * d
    a2 = profiles.photon[c2] * d
    b1 = np.full_like(a1, profiles.background[c1] * d)
    b2 = np.full_like(a2, profiles.background[c2] * d)
    # X[l] = sum_i u1_i u2_{i+l}, l = -(G-1) .. G-1
    X = np.correlate(b2, a1, "full") + np.correlate(a2, b1, "full") + np.correlate(b2, b1, "full")
    G = a1.size
    # piecewise-constant rates: each lag is a triangle split evenly between
    # the two bins touching tau = l * bin
    shape = np.zeros(2 * G)
    shape[:-1] += 0.5 * X
    shape[1:] += 0.5 * X
    return shape


def background_profile(profiles: RateProfiles, sched: PulseSchedule, like: CoincidenceHistogram,
                       channels=(1, 2)) -> CoincidenceHistogram:
    """Accidental (photon-background and background-background) coincidences.

    Evaluated on the binning of ``like`` for every pulse-period peak that
    fits in its range. The histogram bin must be a whole number of profile bins.
    """
    c1, c2 = channels
    fine = profiles.bin_ns
    if like.bin_ns % fine:
        raise ValueError("histogram bin must be a multiple of the profile bin")
    factor = like.bin_ns // fine
    shape = _peak_shape(profiles, c1, c2) * profiles.n_pulses
    G = profiles.gate_ns // fine
    nfine = 2 * like.tau_max_ns // fine
    acc = np.zeros(nfine)
    tp = sched.t_p * 1e9
    m_max = int(like.tau_max_ns // tp) + 1
    for m in range(-m_max, m_max + 1):
        shift = int(round(m * tp / fine))
        start = shift - G + like.tau_max_ns // fine
        lo, hi = max(start, 0), min(start + 2 * G, nfine)
        if lo < hi:
            acc[lo:hi] += shape[lo - start:hi - start]
    counts = acc.reshape(-1, factor).sum(axis=1)
    return CoincidenceHistogram(like.bin_ns, like.tau_max_ns, counts, profiles.n_pulses,
                                {"kind": "background"})


@dataclass(frozen=True)
class G2Result:
    g2_raw: float
    g2_raw_err: float
    g2_back: float
    g2_back_err: float
    g2_sub: float
    g2_sub_err: float
    side_peaks: tuple
    window_ns: float
    central_counts: float
    central_background: float
    side_mean: float


def g2_zero(data: CoincidenceHistogram, back: CoincidenceHistogram, sched: PulseSchedule,
            side_peaks=DEFAULT_SIDE_PEAKS, window: float | None = None) -> G2Result:
    """Integrated zero-delay coincidences normalized by the mean side peak.

    Each peak is integrated over one gate width centred on tau = m * t_p.
    g2_back is the accidental part of the zero-delay peak on the same
    normalization as g2_raw; g2_sub uses background-subtracted peaks and is
    NaN when the subtracted side peaks average to zero or less.
    """
    side_peaks = tuple(int(m) for m in side_peaks)
    if not side_peaks or 0 in side_peaks:
        raise ValueError("side_peaks must be non-empty and exclude 0")
    if not data.same_binning(back):
        raise ValueError("data and background histograms differ in binning")
    hw = 0.5 * (sched.gate_window if window is None else window) * 1e9
    tp = sched.t_p * 1e9
    c0 = data.integrate(0.0, hw)
    b0 = back.integrate(0.0, hw)
    s = np.array([data.integrate(m * tp, hw) for m in side_peaks])
    sb = np.array([back.integrate(m * tp, hw) for m in side_peaks])
    if s.sum() <= 0:
        raise ValueError("zero side-peak counts")
    k = len(side_peaks)
    norm = s.mean()
    norm_sub = (s - sb).mean()
    raw = c0 / norm
    raw_err = raw * math.sqrt(1 / max(c0, 1.0) + 1 / s.sum()) if c0 > 0 else math.sqrt(1.0) / norm
    g_back = b0 / norm
    g_back_err = g_back * math.sqrt(1 / s.sum())
    if norm_sub > 0:
        sub = (c0 - b0) / norm_sub
        sub_err = math.sqrt(max(c0, 1.0)) / norm_sub
        if c0 - b0 != 0:
            sub_err = math.hypot(sub_err, abs(sub) * math.sqrt(s.sum()) / (k * norm_sub))
    else:
        # nothing left above the accidentals (e.g. a background-only stream)
        sub = sub_err = math.nan
    return G2Result(float(raw), float(raw_err), float(g_back), float(g_back_err), float(sub), float(sub_err),
                    side_peaks, 2 * hw, c0, b0, float(norm))


def _coincidence_probability(bs: BeamSplitterCoeffs, pol1: str, c: float, g2: float) -> float:
    """Coincidence probability per P1**2 for one photon in each port (port 2 is H)."""
    T1, R1 = bs.power(1, pol1)
    T2, R2 = bs.power(2, "H")
    return T1 * T2 + R1 * R2 + (T1 * R1 + T2 * R2) * g2 + 2 * c * math.cos(bs.alpha) * math.sqrt(T1 * R1 * T2 * R2)


def visibility_forward(c: float, g2: float, bs: BeamSplitterCoeffs) -> float:
    """HOM visibility for mode overlap ``c`` through a lossy, polarization-dependent splitter.

    Distinguishable reference: port-1 photon V, port-2 photon H, overlap 0.
    Interfering case: both H with overlap c.
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError("c must lie in [0, 1]")
    if g2 < 0:
        raise ValueError("g2 must be >= 0")
    ref = _coincidence_probability(bs, "V", 0.0, g2)
    if ref == 0:
        raise ValueError("degenerate splitter: zero distinguishable coincidence probability")
    return (ref - _coincidence_probability(bs, "H", c, g2)) / ref


def mode_overlap(V: float, g2: float, bs: BeamSplitterCoeffs) -> float:
    """Invert :func:`visibility_forward` for the overlap (it is affine in c)."""
    if g2 < 0:
        raise ValueError("g2 must be >= 0")
    ref = _coincidence_probability(bs, "V", 0.0, g2)
    if ref == 0:
        raise ValueError("degenerate splitter: zero distinguishable coincidence probability")
    v0 = (ref - _coincidence_probability(bs, "H", 0.0, g2)) / ref
    v1 = (ref - _coincidence_probability(bs, "H", 1.0, g2)) / ref
    if v1 == v0:
        raise ValueError("visibility does not depend on overlap for this splitter")
    c = (V - v0) / (v1 - v0)
    if not -1e-12 <= c <= 1 + 1e-12:
        raise ValueError(f"visibility {V} outside attainable range [{min(v0, v1):.6g}, {max(v0, v1):.6g}]")
    return min(max(c, 0.0), 1.0)


def hom_visibility(C_par: CoincidenceHistogram, C_perp: CoincidenceHistogram, window: float,
                   back_par: CoincidenceHistogram | None = None,
                   back_perp: CoincidenceHistogram | None = None) -> tuple[float, float]:
    """1 - C_par/C_perp over the zero-delay window (``window`` wide, seconds).

    With background histograms, accidentals are subtracted from both first.
    Returns (visibility, Poisson standard error).
    """
    if not C_par.same_binning(C_perp):
        raise ValueError("histograms differ in binning")
    hw = 0.5 * window * 1e9
    x, y = C_par.integrate(0.0, hw), C_perp.integrate(0.0, hw)
    if y <= 0:
        raise ValueError("zero counts in the perpendicular histogram")
    if back_par is None and back_perp is None:
        v = 1.0 - x / y
        err = (x / y) * math.sqrt(1.0 / max(x, 1.0) + 1.0 / y)
        return v, err
    bx = back_par.integrate(0.0, hw) if back_par is not None else 0.0
    by = back_perp.integrate(0.0, hw) if back_perp is not None else 0.0
    num, den = x - bx, y - by
    if den <= 0:
        raise ValueError("perpendicular peak vanishes after background subtraction")
    v = 1.0 - num / den
    err = math.sqrt(max(x, 1.0) / den**2 + (num**2) * y / den**4)
    return v, err


@dataclass
class HBTAnalysis:
    data: CoincidenceHistogram
    background: CoincidenceHistogram
    profiles: RateProfiles
    g2: G2Result

    @property
    def subtracted(self) -> CoincidenceHistogram:
        return self.data - self.background


def analyze_hbt(stream: TimeTagStream, sched: PulseSchedule, n_pulses: int | None = None,
                bin_width: float = 20e-9, side_peaks=DEFAULT_SIDE_PEAKS,
                backend: str | None = None) -> HBTAnalysis:
    """Gate, histogram, reconstruct accidentals and integrate g2(0)."""
    n_pulses = sched.n_pulses if n_pulses is None else n_pulses
    inside, outside = gate(stream, sched)
    prof = rate_profiles(outside, inside, sched, n_pulses, bin_width)
    tau_max = histogram_range(sched, side_peaks, bin_width)
    data = coincidences(inside.channel(1), inside.channel(2), bin_width, tau_max, n_pulses, backend)
    back = background_profile(prof, sched, data)
    return HBTAnalysis(data, back, prof, g2_zero(data, back, sched, side_peaks))


def write_histogram_csv(path: str | os.PathLike, data: CoincidenceHistogram,
                        back: CoincidenceHistogram | None = None) -> None:
    back_counts = back.counts if back is not None else np.zeros(data.counts.size)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["tau_ns", "counts", "background", "subtracted"])
        for t, c, b in zip(data.centers, data.counts, back_counts):
            out.writerow([f"{t:g}", int(c), f"{b:.9g}", f"{c - b:.9g}"])


@dataclass
class HOMAnalysis:
    parallel: HBTAnalysis
    perpendicular: HBTAnalysis
    visibility_raw: float
    visibility_raw_err: float
    visibility: float
    visibility_err: float
    overlap: float | None


def analyze_hom(par: TimeTagStream, perp: TimeTagStream, sched: PulseSchedule,
                bs: BeamSplitterCoeffs, n_pulses: int | None = None, g2: float = 0.0,
                bin_width: float = 20e-9, side_peaks=DEFAULT_SIDE_PEAKS,
                backend: str | None = None) -> HOMAnalysis:
    """Raw and background-subtracted visibility from parallel and
    perpendicular runs, and the mode overlap implied by the latter."""
    a = analyze_hbt(par, sched, n_pulses, bin_width, side_peaks, backend)
    b = analyze_hbt(perp, sched, n_pulses, bin_width, side_peaks, backend)
    v_raw, e_raw = hom_visibility(a.data, b.data, sched.gate_window)
    v, e = hom_visibility(a.data, b.data, sched.gate_window, a.background, b.background)
    try:
        c = mode_overlap(v, g2, bs)
    except ValueError:
        c = None
    return HOMAnalysis(a, b, v_raw, e_raw, v, e, c)
