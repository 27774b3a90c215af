"""Immutable parameter containers shared by every module.

All frequencies are angular (rad/s) and all durations are seconds. The
containers validate themselves on construction and raise
:class:`ValidationError` naming the offending field.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

TWO_PI = 2.0 * math.pi
MHZ = TWO_PI * 1e6  # 2pi x 1 MHz in rad/s


class ValidationError(ValueError):
    """A parameter violates its documented invariant."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


class PhysicsWarning(UserWarning):
    pass


def _require(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise ValidationError(name, message)


def _finite(name: str, value: float) -> None:
    _require(math.isfinite(value), name, f"must be finite, got {value!r}")


@dataclass(frozen=True)
class PhysicalParams:
    """Drive, detuning and decay parameters of the blockaded ensemble.

    ``delta_p`` is the intermediate-state detuning during the write stage,
    ``delta_2ph`` the two-photon detuning, ``delta_ret`` the intermediate
    detuning of the control field during retrieval. ``n_collective`` is the
    atom number N (the write coupling is enhanced by sqrt(N)).
    """

    omega_p: float
    omega_c_write: float
    delta_p: float
    delta_2ph: float
    gamma_ge: float
    gamma_gr: float
    gamma_cr: float
    gamma_gc: float
    n_collective: float
    od: float
    omega_c_ret: float | None = None
    delta_ret: float | None = None

    def __post_init__(self):
        if self.omega_c_ret is None:
            object.__setattr__(self, "omega_c_ret", self.omega_c_write)
        if self.delta_ret is None:
            object.__setattr__(self, "delta_ret", self.delta_p)
        for name in (
            "omega_p", "omega_c_write", "omega_c_ret", "delta_p", "delta_2ph",
            "delta_ret", "gamma_ge", "gamma_gr", "gamma_cr", "gamma_gc",
            "n_collective", "od",
        ):
            _finite(name, getattr(self, name))
        for name in ("gamma_ge", "gamma_gr", "gamma_cr", "gamma_gc"):
            _require(getattr(self, name) >= 0, name, "decay rates must be >= 0")
        _require(self.od >= 0, "od", "optical depth must be >= 0")
        _require(self.n_collective >= 1, "n_collective", "must be >= 1")
        if not (self.gamma_ge > self.gamma_gr > self.gamma_cr):
            warnings.warn(
                "expected gamma_ge > gamma_gr > gamma_cr "
                f"(got {self.gamma_ge:.4g}, {self.gamma_gr:.4g}, {self.gamma_cr:.4g})",
                PhysicsWarning,
                stacklevel=3,
            )

    @property
    def sqrt_n(self) -> float:
        return math.sqrt(self.n_collective)

    def replace(self, **changes) -> "PhysicalParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class PulseSchedule:
    """Write / store / retrieve timing of one pulse period.

    The detection gate opens at the start of retrieval (``t_w + t_s`` into
    each period) and stays open for ``gate_window``.
    """

    t_w: float
    t_s: float
    t_r: float
    t_p: float
    n_pulses: int = 1
    duty_cycle: float = 1.0
    gate_window: float = 1.4e-6

    def __post_init__(self):
        for name in ("t_w", "t_s", "t_r", "t_p", "gate_window"):
            value = getattr(self, name)
            _finite(name, value)
            _require(value > 0, name, "durations must be > 0")
        _require(
            self.t_w + self.t_s + self.t_r <= self.t_p * (1 + 1e-12),
            "t_p",
            f"t_w + t_s + t_r = {self.t_w + self.t_s + self.t_r:.6g} s exceeds t_p = {self.t_p:.6g} s",
        )
        _require(self.gate_window <= self.t_p, "gate_window", "must not exceed t_p")
        _require(0 < self.duty_cycle <= 1, "duty_cycle", "must lie in (0, 1]")
        _require(int(self.n_pulses) == self.n_pulses and self.n_pulses >= 1, "n_pulses", "must be a positive integer")
        object.__setattr__(self, "n_pulses", int(self.n_pulses))

    @property
    def rep_rate(self) -> float:
        return 1.0 / self.t_p

    @property
    def gate_start(self) -> float:
        return self.t_w + self.t_s

    def replace(self, **changes) -> "PulseSchedule":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class OpticalPath:
    """Ordered (label, efficiency) stages between the atoms and the detectors."""

    stages: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        stages = tuple((str(label), float(eff)) for label, eff in self.stages)
        for label, eff in stages:
            _require(0.0 <= eff <= 1.0, f"optics.{label}", f"efficiency {eff} outside [0, 1]")
        object.__setattr__(self, "stages", stages)

    @property
    def efficiencies(self) -> tuple[float, ...]:
        return tuple(eff for _, eff in self.stages)

    def __add__(self, other: "OpticalPath") -> "OpticalPath":
        return OpticalPath(self.stages + other.stages)


def path_efficiency(path: OpticalPath | Iterable[float] | Iterable[tuple[str, float]]) -> float:
    """Total transmission of an optical path (empty path -> 1.0)."""
    if isinstance(path, OpticalPath):
        effs: Iterable[float] = path.efficiencies
    else:
        effs = [p[1] if isinstance(p, tuple) else p for p in path]
    return float(math.prod(float(e) for e in effs))


@dataclass(frozen=True)
class DetectorModel:
    """Per-channel background rate (1/s), detection efficiency and Gaussian jitter (s)."""

    background_rates: tuple[float, ...] = (0.0, 0.0)
    efficiency: float = 1.0
    jitter: float = 0.0

    def __post_init__(self):
        rates = tuple(float(b) for b in self.background_rates)
        for i, b in enumerate(rates):
            _require(math.isfinite(b) and b >= 0, f"background_rates[{i}]", "must be >= 0")
        _require(0.0 <= self.efficiency <= 1.0, "efficiency", "must lie in [0, 1]")
        _require(math.isfinite(self.jitter) and self.jitter >= 0, "jitter", "must be >= 0")
        object.__setattr__(self, "background_rates", rates)

    def background(self, channel: int) -> float:
        """Background rate of 1-based ``channel`` (missing channels count as 0)."""
        idx = channel - 1
        return self.background_rates[idx] if 0 <= idx < len(self.background_rates) else 0.0


# Measured power coefficients (T, R) of the HOM combining splitter.
HOM_SPLITTER_POWER = {
    "1H": (0.502, 0.421),
    "1V": (0.484, 0.428),
    "2H": (0.511, 0.426),
}


@dataclass(frozen=True)
class BeamSplitterCoeffs:
    """Amplitude transmission/reflection per input port and polarization.

    Lossy splitters are allowed (``t**2 + r**2 <= 1``). Only the phase sum
    ``alpha = phi1 + phi2`` enters any observable; the default is pi.
    """

    t1_H: float
    r1_H: float
    t1_V: float
    r1_V: float
    t2_H: float
    r2_H: float
    t2_V: float | None = None
    r2_V: float | None = None
    phi1: float = math.pi
    phi2: float = 0.0

    def __post_init__(self):
        if self.t2_V is None:
            object.__setattr__(self, "t2_V", self.t2_H)
        if self.r2_V is None:
            object.__setattr__(self, "r2_V", self.r2_H)
        for port in (1, 2):
            for pol in "HV":
                t, r = self.amplitudes(port, pol)
                _require(t >= 0 and math.isfinite(t), f"t{port}_{pol}", "must be >= 0")
                _require(r >= 0 and math.isfinite(r), f"r{port}_{pol}", "must be >= 0")
                _require(t * t + r * r <= 1 + 1e-12, f"t{port}_{pol}", f"t^2 + r^2 = {t * t + r * r:.6g} > 1")
        _finite("phi1", self.phi1)
        _finite("phi2", self.phi2)

    @classmethod
    def from_power(cls, T1_H, R1_H, T1_V, R1_V, T2_H, R2_H, T2_V=None, R2_V=None, phi1=math.pi, phi2=0.0):
        s = math.sqrt
        return cls(
            s(T1_H), s(R1_H), s(T1_V), s(R1_V), s(T2_H), s(R2_H),
            None if T2_V is None else s(T2_V), None if R2_V is None else s(R2_V),
            phi1, phi2,
        )

    @classmethod
    def ideal(cls) -> "BeamSplitterCoeffs":
        return cls.symmetric(0.5, 0.5)

    @classmethod
    def symmetric(cls, T: float, R: float) -> "BeamSplitterCoeffs":
        """Same power coefficients on both ports and polarizations."""
        return cls.from_power(T, R, T, R, T, R, T, R)

    @classmethod
    def measured_hom(cls) -> "BeamSplitterCoeffs":
        c = HOM_SPLITTER_POWER
        return cls.from_power(*c["1H"], *c["1V"], *c["2H"])

    @property
    def alpha(self) -> float:
        return self.phi1 + self.phi2

    def amplitudes(self, port: int, pol: str) -> tuple[float, float]:
        return getattr(self, f"t{port}_{pol}"), getattr(self, f"r{port}_{pol}")

    def power(self, port: int, pol: str) -> tuple[float, float]:
        t, r = self.amplitudes(port, pol)
        return t * t, r * r


@dataclass(frozen=True)
class SourceSettings:
    """Source-side simulation inputs read from the optional ``[source]`` section."""

    p_c: float = 0.019
    tau_c: float = 65e-6
    p_max: float = 0.35
    p2: float = 0.0
    mode_overlap: float = 1.0
    envelope_rise: float = 0.0
    envelope_decay: float = 200e-9


@dataclass(frozen=True)
class SimulationSettings:
    """Run controls read from the optional ``[simulation]`` section."""

    seed: int = 0
    topology: str = "HBT"
    hom_delay: float = 4.92e-6
    hom_parallel: bool = True
    n_trains: int = 1

    def __post_init__(self):
        _require(self.topology.upper() in ("HBT", "HOM"), "topology", "must be HBT or HOM")
        object.__setattr__(self, "topology", self.topology.upper())
        _require(self.n_trains >= 1, "n_trains", "must be >= 1")


def stage_list(values: Sequence[float]) -> OpticalPath:
    """Unlabelled path from bare efficiencies (labels stage0, stage1, ...)."""
    return OpticalPath(tuple((f"stage{i}", float(v)) for i, v in enumerate(values)))
