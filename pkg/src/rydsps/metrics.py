"""Single-photon source figures of merit.

A source is characterised by its emission probability P, HOM visibility V,
g2(0), clock rate R and duty cycle. P splits into the single-mode part eta,
single photons in other modes P1' and multi-photon events P2.
"""
from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from importlib import resources


@dataclass(frozen=True)
class SourceMeasurement:
    P: float
    V: float
    g2: float
    R: float = 1.0
    duty: float = 1.0
    label: str = ""

    def __post_init__(self):
        for name in ("P", "V", "duty"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if not self.g2 >= 0:
            raise ValueError("g2 must be >= 0")
        if not self.P * self.g2 < 1:
            raise ValueError("P * g2 must be < 1")
        if not self.R > 0:
            raise ValueError("R must be > 0")


@dataclass(frozen=True)
class SourceMetrics:
    label: str
    eta: float
    fidelity: float
    brightness: float
    P1_prime: float
    P2: float
    eta_exact: float


def single_mode_efficiency(m: SourceMeasurement) -> float:
    """Second-order-in-g2 estimate eta = P V (1 - P g2 (1 + P g2) / 2)."""
    x = m.P * m.g2
    return m.P * m.V * (1.0 - 0.5 * x * (1.0 + x))


def decompose(m: SourceMeasurement) -> tuple[float, float, float]:
    """Exact (eta, P1', P2) from P = eta + P1' + P2, V = eta / (eta + P1'),
    g2 = 2 P2 / (eta + P1' + 2 P2)**2."""
    if m.V <= 0:
        raise ValueError("V must be > 0 to decompose")
    disc = 1.0 - 2.0 * m.g2 * m.P
    if disc < 0:
        raise ValueError("no physical root: g2 too large for this P")
    u = 2.0 * m.P / (1.0 + math.sqrt(disc))  # u = P + P2
    p2 = u - m.P
    q = m.P - p2
    if not (0.0 <= p2 <= m.P and q >= 0):
        raise ValueError("no physical root: multi-photon part exceeds P")
    eta = m.V * q
    return eta, q - eta, p2


def recompose(eta: float, p1_prime: float, p2: float) -> tuple[float, float, float]:
    """(P, V, g2) from a decomposition."""
    q = eta + p1_prime
    return q + p2, (eta / q if q else 0.0), 2.0 * p2 / (q + 2.0 * p2) ** 2


def fidelity(eta: float, P: float) -> float:
    if P <= 0:
        raise ValueError("P must be > 0")
    return eta / P


def brightness(eta: float, R: float, duty: float = 1.0) -> float:
    if R <= 0:
        raise ValueError("R must be > 0")
    return eta * R * duty


def source_metrics(m: SourceMeasurement) -> SourceMetrics:
    eta = single_mode_efficiency(m)
    eta_x, p1, p2 = decompose(m)
    return SourceMetrics(m.label, eta, fidelity(eta, m.P), brightness(eta, m.R, m.duty), p1, p2, eta_x)


@dataclass
class BenchmarkTable:
    rows: list
    errors: list  # (label, message)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        out = csv.writer(buf)
        out.writerow(["label", "eta", "F", "brightness"])
        for r in self.rows:
            out.writerow([r.label, f"{r.eta:.9g}", f"{r.fidelity:.9g}", f"{r.brightness:.9g}"])
        return buf.getvalue() if fh is None else ""


def benchmark_table(rows) -> BenchmarkTable:
    """Metrics for each row; invalid rows are reported, not fatal."""
    good, bad = [], []
    for m in rows:
        try:
            good.append(source_metrics(m))
        except ValueError as exc:
            bad.append((getattr(m, "label", ""), str(exc)))
    return BenchmarkTable(good, bad)


def read_measurements(fh) -> tuple[list, list]:
    """Parse ``label,R_Hz,duty,P,V,g2`` CSV (extra columns ignored, ``#`` lines skipped).

    Returns (measurements, errors) where errors lists unparseable rows.
    """
    lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    need = {"label", "R_Hz", "duty", "P", "V", "g2"}
    missing = need - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"missing columns: {', '.join(sorted(missing))}")
    out, errors = [], []
    for row in reader:
        try:
            out.append(SourceMeasurement(float(row["P"]), float(row["V"]), float(row["g2"]),
                                         float(row["R_Hz"]), float(row["duty"]), row["label"]))
        except ValueError as exc:
            errors.append((row.get("label", ""), str(exc)))
    return out, errors


def load_measurements(path: str | os.PathLike) -> tuple[list, list]:
    with open(path, newline="") as fh:
        return read_measurements(fh)


def reference_sources() -> list[dict]:
    """Bundled published source comparison, with reported values as floats."""
    text = resources.files("rydsps").joinpath("data/sources.csv").read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    rows = []
    for row in csv.DictReader(lines):
        rows.append({k: (v if k in ("label", "type") else float(v)) for k, v in row.items()})
    return rows


def reference_measurements() -> list[SourceMeasurement]:
    return [SourceMeasurement(r["P"], r["V"], r["g2"], r["R_Hz"], r["duty"], r["label"])
            for r in reference_sources()]
