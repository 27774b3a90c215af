"""Retrieval of a stored spin wave into a propagating photon.

Two independent routes give the retrieval efficiency: the kernel double
integral over the spin-wave profile, and the time integral of the emitted
intensity at the exit face of the medium. Both work in dimensionless units
(distance in medium lengths, time rescaled by the intermediate-state width).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning
from scipy.special import i0e

from .core.params import PhysicalParams


class QuadratureError(RuntimeError):
    pass


class SeriesError(RuntimeError):
    pass


def f_of_xs(x_s: float, delta_tilde: float) -> float:
    return 2.0 / (2.0 + x_s * (1.0 + delta_tilde**2))


@dataclass(frozen=True)
class RetrievalParams:
    d: float
    delta_tilde: float
    omega_tilde: float
    gamma_s_tilde: float
    x_s: float
    f_xs: float

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError("d must be > 0")
        if not self.x_s >= 0:
            raise ValueError("x_s must be >= 0")
        if not 0 < self.f_xs <= 1:
            raise ValueError("f(x_s) must lie in (0, 1]")
        if abs(self.f_xs - f_of_xs(self.x_s, self.delta_tilde)) >= 1e-12:
            raise ValueError("f_xs inconsistent with x_s and delta_tilde")

    @classmethod
    def build(cls, d, delta_tilde, omega_tilde, gamma_s_tilde) -> "RetrievalParams":
        if omega_tilde == 0:
            raise ValueError("omega_tilde must be nonzero")
        x_s = 2.0 * gamma_s_tilde / abs(omega_tilde) ** 2
        return cls(d, delta_tilde, omega_tilde, gamma_s_tilde, x_s, f_of_xs(x_s, delta_tilde))

    def replace(self, **changes) -> "RetrievalParams":
        kw = dict(d=self.d, delta_tilde=self.delta_tilde, omega_tilde=self.omega_tilde,
                  gamma_s_tilde=self.gamma_s_tilde)
        kw.update(changes)
        return RetrievalParams.build(**kw)


def dimensionless_params(params: PhysicalParams) -> RetrievalParams:
    """Retrieval-stage parameters; uses ``delta_ret`` and ``omega_c_ret``."""
    if params.gamma_ge <= 0:
        raise ValueError("gamma_ge must be > 0")
    if params.omega_c_ret <= 0:
        raise ValueError("omega_c_ret must be > 0")
    return RetrievalParams.build(
        d=params.od / 2.0,
        delta_tilde=2.0 * params.delta_ret / params.gamma_ge,
        omega_tilde=params.omega_c_ret / params.gamma_ge,
        gamma_s_tilde=(params.gamma_gr + params.gamma_cr) / params.gamma_ge,
    )


class SpinWaveProfile:
    """Spin-wave amplitude S(z) on z in [0, 1], tabulated and linearly interpolated.

    Outside [0, 1] the profile is zero.
    """

    def __init__(self, z, values):
        z = np.asarray(z, float)
        values = np.asarray(values)
        if z.ndim != 1 or z.shape != values.shape or z.size < 2:
            raise ValueError("need matching 1-D z and values with at least two samples")
        if np.any(np.diff(z) <= 0) or z[0] > 0 or z[-1] < 1:
            raise ValueError("z must be increasing and cover [0, 1]")
        if not np.all(np.isfinite(values)):
            raise ValueError("profile values must be finite")
        self.z = z
        self.values = values

    @classmethod
    def uniform(cls, amplitude: float = 1.0) -> "SpinWaveProfile":
        return cls(np.array([0.0, 1.0]), np.array([amplitude, amplitude], float))

    @classmethod
    def from_function(cls, fn: Callable, n: int = 1001) -> "SpinWaveProfile":
        z = np.linspace(0.0, 1.0, n)
        return cls(z, np.asarray(fn(z)))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.values) or not np.any(self.values.imag)

    def __call__(self, z):
        z = np.asarray(z, float)
        inside = (z >= 0) & (z <= 1)
        if np.iscomplexobj(self.values):
            out = np.interp(z, self.z, self.values.real) + 1j * np.interp(z, self.z, self.values.imag)
        else:
            out = np.interp(z, self.z, self.values)
        return np.where(inside, out, 0.0)


def kernel(zbar, zbar_prime, rp: RetrievalParams):
    """Retrieval kernel K_r(z, z'); Hermitian under swapping its arguments.

    The Bessel factor is carried as exp(x) * i0e(x) with exp(x) folded into
    the exponent so large optical depths do not overflow.
    """
    z = np.asarray(zbar, float)
    zp = np.asarray(zbar_prime, float)
    if np.any((z < 0) | (z > 1) | (zp < 0) | (zp > 1)):
        raise ValueError("kernel arguments must lie in [0, 1]")
    a = 0.5 * rp.d * rp.f_xs
    x = rp.d * np.sqrt(z * zp) * rp.f_xs
    xs, dt = rp.x_s, rp.delta_tilde
    expo = -a * ((1 + xs * (1 - 1j * dt)) * z + (1 + xs * (1 + 1j * dt)) * zp) + x
    return a * np.exp(expo) * i0e(x)


def _quad2(fn, rtol):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, err = integrate.dblquad(fn, 0.0, 1.0, 0.0, 1.0, epsabs=1e-13, epsrel=rtol)
        except IntegrationWarning as exc:
            raise QuadratureError(str(exc)) from exc
    return val, err


def _panel_integral(S: SpinWaveProfile, rp: RetrievalParams, rtol: float) -> complex:
    """Tensor Gauss-Legendre over the panels between profile nodes.

    S(1 - z) is linear on each panel, so the integrand is smooth there and
    the rule converges quickly; the order doubles until two successive
    estimates agree.
    """
    edges = np.unique(np.clip(1.0 - S.z, 0.0, 1.0))
    prev = None
    for order in (4, 8, 16):
        x, w = np.polynomial.legendre.leggauss(order)
        half = 0.5 * np.diff(edges)[:, None]
        mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
        z = (mid + half * x).ravel()
        v = (half * w).ravel() * S(1.0 - z)
        total = 0j
        for i in range(0, z.size, 512):
            blk = slice(i, i + 512)
            total += v[blk] @ (kernel(z[blk, None], z[None, :], rp) @ np.conj(v))
        if prev is not None and abs(total - prev) <= rtol * abs(total) + 1e-13:
            return complex(total)
        prev = total
    raise QuadratureError(f"panel quadrature did not reach rtol {rtol:g} (last change {abs(total - prev):.3g})")


def retrieval_integral(S: SpinWaveProfile, rp: RetrievalParams, rtol: float = 1e-8) -> complex:
    """Full complex double integral of K_r S(1-z) S*(1-z').

    Single-piece (linear) profiles go to adaptive dblquad; tabulated
    profiles with interior nodes are integrated panel by panel.
    """
    if S.is_zero:
        return 0j
    if S.z.size > 2:
        return _panel_integral(S, rp, rtol)

    def integrand(zp, z):
        return kernel(z, zp, rp) * S(1 - z) * np.conj(S(1 - zp))

    re, _ = _quad2(lambda zp, z: float(np.real(integrand(zp, z))), rtol)
    im, _ = _quad2(lambda zp, z: float(np.imag(integrand(zp, z))), rtol)
    return complex(re, im)


def retrieval_efficiency(S: SpinWaveProfile, rp: RetrievalParams, rtol: float = 1e-8) -> float:
    """Retrieval efficiency from the kernel double integral.

    Raises QuadratureError if the imaginary residue exceeds 1e-8 of the
    real part or the result leaves [0, 1 + 1e-8].
    """
    val = retrieval_integral(S, rp, rtol)
    if abs(val.imag) > 1e-8 * abs(val.real) + 1e-14:
        raise QuadratureError(f"imaginary residue {val.imag:.3g} too large for real part {val.real:.6g}")
    if not (-1e-12 <= val.real <= 1 + 1e-8):
        raise QuadratureError(f"retrieval efficiency {val.real:.6g} outside [0, 1]")
    return float(val.real)


def i0_series(z, max_terms: int = 200, tol: float = 1e-16):
    """Modified Bessel I0 of complex argument by its power series."""
    z = np.asarray(z, complex)
    q = 0.25 * z * z
    term = np.ones_like(z)
    total = term.copy()
    for k in range(1, max_terms + 1):
        term = term * q / (k * k)
        total = total + term
        if np.all(np.abs(term) <= tol * np.abs(total)):
            return total
    raise SeriesError(f"I0 series did not converge in {max_terms} terms (max |z| = {np.abs(z).max():.3g})")


def _z_nodes(panels: int = 8, order: int = 24):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    nodes = np.concatenate([0.5 * (b - a) * x + 0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:])])
    weights = np.concatenate([0.5 * (b - a) * w for a, b in zip(edges[:-1], edges[1:])])
    return nodes, weights


_ZN, _ZW = _z_nodes()


def _drive(omega_tilde_of_t, rp):
    if omega_tilde_of_t is None:
        return lambda t: np.full(np.shape(t), rp.omega_tilde, float)
    if callable(omega_tilde_of_t):
        return lambda t: np.asarray(np.vectorize(omega_tilde_of_t, otypes=[complex])(t))
    value = complex(omega_tilde_of_t)
    return lambda t: np.full(np.shape(t), value)


def _h_of_t(t, omega_tilde_of_t, rp):
    """Integrated drive intensity from 0 to each t."""
    t = np.asarray(t, float)
    if omega_tilde_of_t is None or not callable(omega_tilde_of_t):
        w = rp.omega_tilde if omega_tilde_of_t is None else omega_tilde_of_t
        return abs(w) ** 2 * t
    f = lambda s: abs(omega_tilde_of_t(s)) ** 2
    return np.array([integrate.quad(f, 0.0, float(ti), limit=200)[0] for ti in np.ravel(t)]).reshape(t.shape)


def _field(t, h, omega, S, rp):
    a = 1.0 / (1.0 + 1j * rp.delta_tilde)
    t = np.atleast_1d(t)[:, None]
    h = np.atleast_1d(h)[:, None]
    z = _ZN[None, :]
    integrand = a * np.exp(-(h + rp.d * z) * a) * i0_series(2.0 * np.sqrt(h * rp.d * z) * a) * S(1.0 - z)
    inner = integrand @ _ZW
    return -math.sqrt(rp.d) * np.atleast_1d(omega) * np.exp(-rp.gamma_s_tilde * t[:, 0]) * inner


def field_envelope(t_tilde, S: SpinWaveProfile, rp: RetrievalParams, omega_tilde_of_t=None):
    """Emitted field amplitude at the exit face at dimensionless times ``t_tilde``.

    ``omega_tilde_of_t`` is the control drive (callable, constant, or None for
    the constant ``rp.omega_tilde``).
    """
    t = np.asarray(t_tilde, float)
    if np.any(t < 0):
        raise ValueError("t_tilde must be >= 0")
    flat = np.atleast_1d(t).ravel()
    h = _h_of_t(flat, omega_tilde_of_t, rp)
    E = _field(flat, h, _drive(omega_tilde_of_t, rp)(flat), S, rp)
    return E.reshape(t.shape) if t.ndim else complex(E[0])


def emitted_efficiency(
    S: SpinWaveProfile,
    rp: RetrievalParams,
    omega_tilde_of_t=None,
    panel: float | None = None,
    cutoff: float = 1e-12,
    max_panels: int = 20000,
) -> float:
    """Time integral of |E|^2 at the exit face.

    Integrates panel by panel (24-point Gauss-Legendre) and stops once the
    integrand in a whole panel has fallen below ``cutoff`` times its running
    peak.
    """
    if panel is None:
        w = abs(rp.omega_tilde) if omega_tilde_of_t is None or not callable(omega_tilde_of_t) else 1.0
        panel = 0.5 / max(w * w, 1e-6)
    x, wts = np.polynomial.legendre.leggauss(24)
    total, peak = 0.0, 0.0
    for k in range(max_panels):
        a = k * panel
        t = a + 0.5 * panel * (x + 1)
        vals = np.abs(field_envelope(t, S, rp, omega_tilde_of_t)) ** 2
        total += 0.5 * panel * float(vals @ wts)
        peak = max(peak, float(vals.max()))
        if peak > 0 and vals.max() < cutoff * peak:
            return total
        if peak == 0 and k >= 100:
            return 0.0
    raise QuadratureError("emitted intensity did not decay within max_panels")


def envelope_table(S: SpinWaveProfile, rp: RetrievalParams, t_max: float, n: int = 500):
    """Rows (t_tilde, re E, im E, |E|^2) on a uniform grid."""
    t = np.linspace(0.0, t_max, n)
    E = field_envelope(t, S, rp)
    return np.column_stack([t, E.real, E.imag, np.abs(E) ** 2])


def generation_probability(eta_w: float, eta_s: float, eta_r: float) -> float:
    for name, v in (("eta_w", eta_w), ("eta_s", eta_s), ("eta_r", eta_r)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} = {v} outside [0, 1]")
    return eta_w * eta_s * eta_r
