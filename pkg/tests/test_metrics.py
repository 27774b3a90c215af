import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rydsps import metrics as mt


def meas(P, V, g2, R=1.0, duty=1.0, label=""):
    return mt.SourceMeasurement(P, V, g2, R, duty, label)


def test_eta_examples():
    assert mt.single_mode_efficiency(meas(0.3, 0.9, 0.0)) == 0.3 * 0.9
    # reported as 0.139; the formula gives 0.13846
    assert mt.single_mode_efficiency(meas(0.141, 0.982, 1e-4)) == pytest.approx(0.1385, abs=1e-4)
    assert mt.single_mode_efficiency(meas(0.337, 0.93, 0.027)) == pytest.approx(0.312, abs=5e-4)


def test_decompose_examples():
    eta, p1, p2 = mt.decompose(meas(0.4, 0.8, 0.0))
    assert p2 == 0.0 and eta == pytest.approx(0.32, abs=1e-15) and p1 == pytest.approx(0.08, abs=1e-15)
    eta, p1, p2 = mt.decompose(meas(0.5, 1.0, 0.0))
    assert p1 == 0.0 and eta == 0.5
    eta, p1, p2 = mt.decompose(meas(0.141, 0.982, 1e-4))
    assert eta == pytest.approx(0.1385, abs=1e-4)
    assert p2 == pytest.approx(1e-4 * 0.141**2 / 2, rel=1e-3)
    P, V, g2 = mt.recompose(eta, p1, p2)
    assert (P, V, g2) == pytest.approx((0.141, 0.982, 1e-4), rel=1e-10)


def test_decompose_errors():
    with pytest.raises(ValueError):
        mt.decompose(meas(0.5, 0.0, 0.1))
    with pytest.raises(ValueError):
        mt.decompose(meas(0.9, 0.9, 1.05))  # 1 - 2 g2 P < 0


def test_fidelity_and_brightness():
    # the rounded inputs give 0.986; the unrounded eta gives the reported 0.982
    assert mt.fidelity(0.139, 0.141) == pytest.approx(0.982, rel=0.005)
    assert mt.source_metrics(meas(0.141, 0.982, 1e-4)).fidelity == pytest.approx(0.982, abs=5e-4)
    assert mt.fidelity(0.2, 0.2) == 1.0
    assert mt.fidelity(0.0, 0.2) == 0.0
    with pytest.raises(ValueError):
        mt.fidelity(0.1, 0.0)
    assert mt.brightness(0.139, 13e3, 0.6) == pytest.approx(1.084e3, rel=1e-3)
    assert mt.brightness(0.139, 13e3, 0.6) == pytest.approx(1.11e3, rel=0.03)
    assert mt.brightness(1.0, 5e5, 1.0) == 5e5
    assert mt.brightness(0.0, 5e5, 0.5) == 0.0
    with pytest.raises(ValueError):
        mt.brightness(0.1, 0.0)


def test_measurement_validation():
    with pytest.raises(ValueError):
        meas(1.2, 0.9, 0.0)
    with pytest.raises(ValueError):
        meas(0.5, 0.9, -0.1)
    with pytest.raises(ValueError):
        meas(0.5, 0.9, 2.0)  # P g2 = 1
    with pytest.raises(ValueError):
        meas(0.5, 0.9, 0.0, R=0.0)


def test_table_rows():
    kir = mt.source_metrics(meas(0.10, 0.94, 0.006, 76e6, 1.0))
    assert kir.eta == pytest.approx(0.094, rel=0.03)
    assert kir.brightness == pytest.approx(7.14e6, rel=0.03)
    assert kir.fidelity == pytest.approx(0.940, rel=0.03)
    mucke = mt.source_metrics(meas(0.39, 0.64, 0.02, 0.01e6, 1.0))
    assert mucke.eta == pytest.approx(0.249, rel=0.03)
    assert mucke.fidelity == pytest.approx(0.637, rel=0.03)


def test_benchmark_table_collects_errors():
    rows = [meas(0.3, 0.9, 0.01, 1e6, 1.0, "ok"), meas(0.9, 0.9, 1.05, 1e6, 1.0, "bad")]
    table = mt.benchmark_table(rows)
    assert [r.label for r in table.rows] == ["ok"]
    assert table.errors[0][0] == "bad"
    text = table.to_csv()
    assert text.splitlines()[0] == "label,eta,F,brightness"
    assert text.splitlines()[1].startswith("ok,")
    assert mt.benchmark_table([]).to_csv().splitlines() == ["label,eta,F,brightness"]


def test_read_measurements():
    text = "# comment\nlabel,R_Hz,duty,P,V,g2,extra\na,1e6,0.5,0.2,0.9,0.01,x\nb,1e6,0.5,1.7,0.9,0.01,x\n"
    rows, errors = mt.read_measurements(io.StringIO(text))
    assert [r.label for r in rows] == ["a"] and errors[0][0] == "b"
    with pytest.raises(ValueError):
        mt.read_measurements(io.StringIO("label,P,V\na,0.1,0.2\n"))


def test_reference_table_inputs():
    refs = mt.reference_sources()
    assert len(refs) == 16
    this = next(r for r in refs if r["label"] == "this_work")
    assert (this["R_Hz"], this["duty"], this["P"], this["V"], this["g2"]) == (13e3, 0.6, 0.141, 0.982, 1e-4)
    assert len(mt.reference_measurements()) == 16


valid = st.tuples(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(0.0, 0.49))


@given(valid)
def test_decompose_recompose_identity(x):
    P, V, g2 = x
    m = meas(P, V, g2)
    P2, V2, g22 = mt.recompose(*mt.decompose(m))
    assert P2 == pytest.approx(P, abs=1e-10)
    assert V2 == pytest.approx(V, abs=1e-10)
    assert g22 == pytest.approx(g2, abs=1e-10)


def test_decompose_recompose_1000_random():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        P, V = rng.uniform(1e-3, 1, 2)
        g2 = rng.uniform(0, 0.49)
        out = mt.recompose(*mt.decompose(meas(P, V, g2)))
        worst = max(worst, max(abs(a - b) for a, b in zip(out, (P, V, g2))))
    assert worst < 1e-10


@given(valid, st.floats(1e-4, 0.05))
def test_eta_monotone(x, h):
    P, V, g2 = x
    eta = mt.single_mode_efficiency(meas(P, V, g2))
    assert mt.single_mode_efficiency(meas(P, min(V + h, 1.0), g2)) >= eta
    assert mt.single_mode_efficiency(meas(P, V, g2 + h)) <= eta
    if P + h <= 1:
        # dEta/dP > 0 while P g2 stays below the turning point of the series
        if (P + h) * g2 < 0.45:
            assert mt.single_mode_efficiency(meas(P + h, V, g2)) >= eta


@given(valid, st.floats(1.0, 1e9), st.floats(0.01, 1.0), st.floats(1.0, 1e9), st.floats(0.01, 1.0))
def test_fidelity_ignores_rate(x, R1, d1, R2, d2):
    P, V, g2 = x
    a = mt.source_metrics(meas(P, V, g2, R1, d1))
    b = mt.source_metrics(meas(P, V, g2, R2, d2))
    assert a.fidelity == b.fidelity
    assert a.fidelity == pytest.approx(a.eta / P, abs=1e-12)
    assert a.eta <= P
