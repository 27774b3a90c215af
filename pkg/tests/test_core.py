import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rydsps.core import (
    MHZ,
    BeamSplitterCoeffs,
    ConfigError,
    DetectorModel,
    OpticalPath,
    PhysicalParams,
    PhysicsWarning,
    PulseSchedule,
    TagFormatError,
    TimeTagStream,
    ValidationError,
    dump_config,
    load_config,
    parse_config,
    path_efficiency,
    read_tags,
    stage_list,
    write_tags,
)

from .conftest import bundled

MINIMAL = """
[physics]
x2pi = true
omega_p = 1.0
omega_c_write = 6.8
delta_p = 50
delta_2ph = -2
gamma_ge = 6.9
gamma_gr = 0.088
gamma_cr = 0.005
gamma_gc = 0.0025
n_collective = 400
od = 13

[schedule]
t_w = 370e-9
t_s = 350e-9
t_r = 1.78e-6
t_p = 2.5e-6
"""


def test_config_values_in_rad_per_s(base_cfg):
    ph = base_cfg.physics
    assert ph.omega_c_write == pytest.approx(2 * math.pi * 6.8e6, rel=1e-15)
    assert ph.gamma_ge == pytest.approx(2 * math.pi * 6.9e6, rel=1e-15)
    assert ph.sqrt_n == pytest.approx(20.0)
    assert ph.od == 13


def test_config_unpacks_to_five_types(base_cfg):
    physics, schedule, optics, detectors, bs = base_cfg
    assert isinstance(physics, PhysicalParams)
    assert isinstance(schedule, PulseSchedule)
    assert isinstance(optics, OpticalPath)
    assert isinstance(detectors, DetectorModel)
    assert isinstance(bs, BeamSplitterCoeffs)


def test_missing_phases_give_alpha_pi():
    text = MINIMAL + "\n[beamsplitter]\npower = true\nt1_H = 0.5\nr1_H = 0.5\nt1_V = 0.5\nr1_V = 0.5\nt2_H = 0.5\nr2_H = 0.5\n"
    assert parse_config(text).beamsplitter.alpha == math.pi


def test_optional_fields_default():
    cfg = parse_config(MINIMAL)
    assert cfg.physics.omega_c_ret == cfg.physics.omega_c_write
    assert cfg.physics.delta_ret == cfg.physics.delta_p
    assert cfg.schedule.n_pulses == 1 and cfg.schedule.duty_cycle == 1.0
    assert cfg.schedule.gate_window == 1.4e-6
    assert cfg.optics.stages == ()
    assert cfg.detectors.background_rates == (0.0, 0.0)


def test_schedule_overrun_names_field():
    text = MINIMAL.replace("t_r = 1.78e-6", "t_r = 2.0e-6")
    with pytest.raises(ValidationError) as err:
        parse_config(text)
    assert err.value.field == "t_p"


@pytest.mark.parametrize("bad, field", [
    ("gamma_gr = 0.088", "physics.gamma_gr"),
    ("od = 13", "physics.od"),
])
def test_malformed_numbers_name_field(bad, field):
    key = bad.split(" = ")[0]
    with pytest.raises(ValidationError) as err:
        parse_config(MINIMAL.replace(bad, f"{key} = abc"))
    assert err.value.field == field


def test_negative_decay_rejected():
    with pytest.raises(ValidationError) as err:
        parse_config(MINIMAL.replace("gamma_gc = 0.0025", "gamma_gc = -1"))
    assert err.value.field == "gamma_gc"


def test_unknown_key_and_section_rejected():
    with pytest.raises(ValidationError):
        parse_config(MINIMAL.replace("od = 13", "od = 13\nodd = 1"))
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "\n[extras]\na = 1\n")


def test_parse_error_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("not an ini file")
    with pytest.raises(ConfigError):
        parse_config("[physics]\nx2pi = true\n")  # schedule missing


def test_hierarchy_violation_warns_not_rejects():
    with pytest.warns(PhysicsWarning):
        PhysicalParams(1.0, 1.0, 1.0, 0.0, gamma_ge=1.0, gamma_gr=2.0, gamma_cr=0.1, gamma_gc=0.0,
                       n_collective=1, od=1)


def test_valid_hierarchy_is_silent():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        PhysicalParams(1.0, 1.0, 1.0, 0.0, 3.0, 2.0, 1.0, 0.0, 1, 1)


@pytest.mark.parametrize("name", ["baseline.ini", "improved.ini", "desk_hbt.ini", "desk_hom.ini"])
def test_dump_round_trip(name):
    cfg = load_config(bundled(name))
    again = parse_config(dump_config(cfg))
    assert again == cfg
    assert dump_config(again) == dump_config(cfg)


def test_schedule_properties():
    s = PulseSchedule(370e-9, 350e-9, 1.78e-6, 2.5e-6)
    assert s.rep_rate == pytest.approx(4e5)
    assert s.gate_start == pytest.approx(720e-9)
    with pytest.raises(ValidationError):
        PulseSchedule(1e-7, 1e-7, 1e-7, 1e-6, gate_window=2e-6)
    with pytest.raises(ValidationError):
        PulseSchedule(1e-7, 1e-7, 1e-7, 1e-6, duty_cycle=0)


def test_path_efficiency_measured_chain(base_cfg):
    # 0.75 * 0.79 * 0.75 * 0.38 * 0.67
    assert path_efficiency(base_cfg.optics) == pytest.approx(0.113144, abs=5e-5)
    assert path_efficiency([0.75, 0.79, 0.75, 0.38, 0.67]) == pytest.approx(0.75 * 0.79 * 0.75 * 0.38 * 0.67, rel=1e-15)


def test_path_efficiency_trivial():
    assert path_efficiency([]) == 1.0
    assert path_efficiency(OpticalPath()) == 1.0
    assert path_efficiency([0.5]) == 0.5
    assert path_efficiency([("fiber", 0.5)]) == 0.5


effs = st.lists(st.floats(0.0, 1.0), max_size=8)


@given(effs, effs)
def test_path_efficiency_multiplicative(a, b):
    joined = stage_list(a) + stage_list(b)
    assert path_efficiency(joined) == pytest.approx(path_efficiency(a) * path_efficiency(b), rel=1e-12, abs=1e-300)
    assert 0.0 <= path_efficiency(joined) <= 1.0


@given(effs, st.randoms(use_true_random=False))
def test_path_efficiency_order_independent(a, rnd):
    b = list(a)
    rnd.shuffle(b)
    assert path_efficiency(b) == pytest.approx(path_efficiency(a), rel=1e-12, abs=1e-300)


def test_efficiency_out_of_range():
    with pytest.raises(ValidationError):
        OpticalPath((("x", 1.2),))


def test_beamsplitter_lossless_bound():
    with pytest.raises(ValidationError):
        BeamSplitterCoeffs.from_power(0.6, 0.5, 0.5, 0.5, 0.5, 0.5)
    bs = BeamSplitterCoeffs.measured_hom()
    assert bs.power(1, "H") == pytest.approx((0.502, 0.421))
    assert bs.power(2, "V") == bs.power(2, "H")


def test_detector_background_lookup():
    d = DetectorModel((80.0, 100.0))
    assert d.background(1) == 80.0 and d.background(2) == 100.0 and d.background(3) == 0.0
    with pytest.raises(ValidationError):
        DetectorModel((-1.0,))


# --- tag files ---------------------------------------------------------------

tag_lists = st.lists(st.tuples(st.integers(1, 4), st.integers(0, 2**62)), max_size=50)


def _stream(pairs):
    parts = {}
    for c, t in pairs:
        parts.setdefault(c, []).append(t)
    return TimeTagStream.merge(parts)


@pytest.mark.parametrize("fmt", ["csv", "binary"])
@given(pairs=tag_lists)
def test_tag_round_trip(tmp_path_factory, fmt, pairs):
    s = _stream(pairs)
    path = tmp_path_factory.mktemp("tags") / f"t.{fmt}"
    write_tags(s, path, fmt)
    assert read_tags(path) == s


def test_tag_csv_layout(tmp_path):
    s = TimeTagStream(np.array([2, 1]), np.array([5, 7]))
    write_tags(s, tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text() == "channel,timestamp_ns\n2,5\n1,7\n"


def test_tag_binary_layout(tmp_path):
    s = TimeTagStream(np.array([1]), np.array([258]))
    write_tags(s, tmp_path / "a.bin", "binary")
    raw = (tmp_path / "a.bin").read_bytes()
    assert raw == b"TTAG1" + bytes([1]) + (258).to_bytes(8, "little")


def test_tag_errors(tmp_path):
    with pytest.raises(ValueError):
        TimeTagStream(np.array([1, 1]), np.array([5, 3]))
    (tmp_path / "bad.csv").write_text("chan,t\n1,2\n")
    with pytest.raises(TagFormatError):
        read_tags(tmp_path / "bad.csv")
    (tmp_path / "bad.bin").write_bytes(b"TTAG1" + b"\x00" * 5)
    with pytest.raises(TagFormatError):
        read_tags(tmp_path / "bad.bin")


def test_stream_is_immutable():
    s = TimeTagStream(np.array([1]), np.array([1]))
    with pytest.raises(ValueError):
        s.timestamps[0] = 3
