"""Config files: a flat INI-style ``[section]`` / ``key = value`` format.

Grammar (``configparser`` dialect, keys are case sensitive)::

    [physics]        omega_p, omega_c_write, omega_c_ret*, delta_p, delta_2ph,
                     delta_ret*, gamma_ge, gamma_gr, gamma_cr, gamma_gc,
                     n_collective, od, x2pi*
    [schedule]       t_w, t_s, t_r, t_p, n_pulses*, duty_cycle*, gate_window*
    [optics]*        <label> = <efficiency>, one line per stage, in path order
    [detectors]*     background_rates (comma list, 1/s), efficiency, jitter (s)
    [beamsplitter]*  t1_H, r1_H, t1_V, r1_V, t2_H, r2_H, t2_V*, r2_V*,
                     phi1*, phi2*, power*
    [source]*        p_c, tau_c, p_max, p2, mode_overlap, envelope_rise, envelope_decay
    [simulation]*    seed, topology (HBT|HOM), hom_delay, hom_parallel, n_trains

Starred entries are optional. ``x2pi = true`` means every frequency in
``[physics]`` is written in units of 2pi x MHz; otherwise rad/s.
``power = true`` means the splitter entries are power coefficients T, R
rather than amplitudes. Omitted ``phi1``/``phi2`` give alpha = pi.
Durations are seconds.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .params import (
    MHZ,
    BeamSplitterCoeffs,
    DetectorModel,
    OpticalPath,
    PhysicalParams,
    PulseSchedule,
    SimulationSettings,
    SourceSettings,
    ValidationError,
)

FREQUENCY_KEYS = (
    "omega_p", "omega_c_write", "omega_c_ret", "delta_p", "delta_2ph", "delta_ret",
    "gamma_ge", "gamma_gr", "gamma_cr", "gamma_gc",
)
PHYSICS_KEYS = FREQUENCY_KEYS + ("n_collective", "od")
SPLITTER_KEYS = ("t1_H", "r1_H", "t1_V", "r1_V", "t2_H", "r2_H", "t2_V", "r2_V")


class ConfigError(ValueError):
    """The config file could not be parsed."""


@dataclass(frozen=True)
class Config:
    physics: PhysicalParams
    schedule: PulseSchedule
    optics: OpticalPath = field(default_factory=OpticalPath)
    detectors: DetectorModel = field(default_factory=DetectorModel)
    beamsplitter: BeamSplitterCoeffs = field(default_factory=BeamSplitterCoeffs.ideal)
    source: SourceSettings = field(default_factory=SourceSettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)

    def __iter__(self):
        # unpacks as (physics, schedule, optics, detectors, beamsplitter)
        return iter((self.physics, self.schedule, self.optics, self.detectors, self.beamsplitter))


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    p.optionxform = str
    return p


def _float(section: str, key: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"{section}.{key}", f"not a number: {raw!r}") from None


def _bool(section: str, key: str, raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"{section}.{key}", f"not a boolean: {raw!r}")


def _check_keys(section: str, got, allowed) -> None:
    unknown = sorted(set(got) - set(allowed))
    if unknown:
        raise ValidationError(f"{section}.{unknown[0]}", "unknown key")


def _physics(sec) -> PhysicalParams:
    _check_keys("physics", sec, PHYSICS_KEYS + ("x2pi",))
    scale = MHZ if _bool("physics", "x2pi", sec.get("x2pi", "false")) else 1.0
    kw = {}
    for key in PHYSICS_KEYS:
        if key in sec:
            value = _float("physics", key, sec[key])
            kw[key] = value * scale if key in FREQUENCY_KEYS else value
    required = [k for k in PHYSICS_KEYS if k not in ("omega_c_ret", "delta_ret")]
    for key in required:
        if key not in kw:
            raise ValidationError(f"physics.{key}", "missing")
    return PhysicalParams(**kw)


def _schedule(sec) -> PulseSchedule:
    keys = ("t_w", "t_s", "t_r", "t_p", "n_pulses", "duty_cycle", "gate_window")
    _check_keys("schedule", sec, keys)
    kw = {}
    for key in keys:
        if key in sec:
            kw[key] = _float("schedule", key, sec[key])
    for key in ("t_w", "t_s", "t_r", "t_p"):
        if key not in kw:
            raise ValidationError(f"schedule.{key}", "missing")
    if "n_pulses" in kw:
        if kw["n_pulses"] != int(kw["n_pulses"]):
            raise ValidationError("schedule.n_pulses", "must be an integer")
        kw["n_pulses"] = int(kw["n_pulses"])
    return PulseSchedule(**kw)


def _optics(sec) -> OpticalPath:
    return OpticalPath(tuple((k, _float("optics", k, v)) for k, v in sec.items()))


def _detectors(sec) -> DetectorModel:
    _check_keys("detectors", sec, ("background_rates", "efficiency", "jitter"))
    kw = {}
    if "background_rates" in sec:
        parts = [p for p in sec["background_rates"].replace(" ", "").split(",") if p]
        kw["background_rates"] = tuple(_float("detectors", "background_rates", p) for p in parts)
    for key in ("efficiency", "jitter"):
        if key in sec:
            kw[key] = _float("detectors", key, sec[key])
    return DetectorModel(**kw)


def _beamsplitter(sec) -> BeamSplitterCoeffs:
    _check_keys("beamsplitter", sec, SPLITTER_KEYS + ("phi1", "phi2", "power"))
    power = _bool("beamsplitter", "power", sec.get("power", "false"))
    kw = {}
    for key in SPLITTER_KEYS:
        if key in sec:
            v = _float("beamsplitter", key, sec[key])
            if power:
                if v < 0:
                    raise ValidationError(f"beamsplitter.{key}", "power coefficient must be >= 0")
                v = math.sqrt(v)
            kw[key] = v
    for key in SPLITTER_KEYS[:6]:
        if key not in kw:
            raise ValidationError(f"beamsplitter.{key}", "missing")
    for key in ("phi1", "phi2"):
        if key in sec:
            kw[key] = _float("beamsplitter", key, sec[key])
    return BeamSplitterCoeffs(**kw)


def _source(sec) -> SourceSettings:
    names = [f.name for f in dataclasses.fields(SourceSettings)]
    _check_keys("source", sec, names)
    return SourceSettings(**{k: _float("source", k, sec[k]) for k in names if k in sec})


def _simulation(sec) -> SimulationSettings:
    names = [f.name for f in dataclasses.fields(SimulationSettings)]
    _check_keys("simulation", sec, names)
    kw = {}
    if "seed" in sec:
        kw["seed"] = int(sec["seed"])
    if "topology" in sec:
        kw["topology"] = sec["topology"].strip()
    if "hom_delay" in sec:
        kw["hom_delay"] = _float("simulation", "hom_delay", sec["hom_delay"])
    if "hom_parallel" in sec:
        kw["hom_parallel"] = _bool("simulation", "hom_parallel", sec["hom_parallel"])
    if "n_trains" in sec:
        kw["n_trains"] = int(sec["n_trains"])
    return SimulationSettings(**kw)


def parse_config(text: str) -> Config:
    """Parse config text; see the module docstring for the grammar."""
    p = _parser()
    try:
        p.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    known = {"physics", "schedule", "optics", "detectors", "beamsplitter", "source", "simulation"}
    extra = sorted(set(p.sections()) - known)
    if extra:
        raise ConfigError(f"unknown section [{extra[0]}]")
    for name in ("physics", "schedule"):
        if not p.has_section(name):
            raise ConfigError(f"missing section [{name}]")
    kw = dict(physics=_physics(p["physics"]), schedule=_schedule(p["schedule"]))
    if p.has_section("optics"):
        kw["optics"] = _optics(p["optics"])
    if p.has_section("detectors"):
        kw["detectors"] = _detectors(p["detectors"])
    if p.has_section("beamsplitter"):
        kw["beamsplitter"] = _beamsplitter(p["beamsplitter"])
    if p.has_section("source"):
        kw["source"] = _source(p["source"])
    if p.has_section("simulation"):
        kw["simulation"] = _simulation(p["simulation"])
    return Config(**kw)


def load_config(path: str | os.PathLike) -> Config:
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not a text file") from exc
    return parse_config(text)


def dump_config(cfg: Config) -> str:
    """Serialize losslessly (rad/s, amplitudes, repr floats)."""
    p = _parser()
    ph = cfg.physics
    p["physics"] = {"x2pi": "false", **{k: repr(float(getattr(ph, k))) for k in PHYSICS_KEYS}}
    sc = cfg.schedule
    p["schedule"] = {
        "t_w": repr(sc.t_w), "t_s": repr(sc.t_s), "t_r": repr(sc.t_r), "t_p": repr(sc.t_p),
        "n_pulses": str(sc.n_pulses), "duty_cycle": repr(sc.duty_cycle), "gate_window": repr(sc.gate_window),
    }
    p["optics"] = {label: repr(eff) for label, eff in cfg.optics.stages}
    det = cfg.detectors
    p["detectors"] = {
        "background_rates": ", ".join(repr(b) for b in det.background_rates),
        "efficiency": repr(det.efficiency),
        "jitter": repr(det.jitter),
    }
    bs = cfg.beamsplitter
    p["beamsplitter"] = {"power": "false", **{k: repr(float(getattr(bs, k))) for k in SPLITTER_KEYS},
                         "phi1": repr(bs.phi1), "phi2": repr(bs.phi2)}
    p["source"] = {f.name: repr(float(getattr(cfg.source, f.name))) for f in dataclasses.fields(SourceSettings)}
    sim = cfg.simulation
    p["simulation"] = {
        "seed": str(sim.seed), "topology": sim.topology, "hom_delay": repr(sim.hom_delay),
        "hom_parallel": "true" if sim.hom_parallel else "false", "n_trains": str(sim.n_trains),
    }
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()


def save_config(cfg: Config, path: str | os.PathLike) -> None:
    Path(path).write_text(dump_config(cfg))
