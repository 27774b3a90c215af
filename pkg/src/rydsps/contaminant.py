"""Long-lived contaminant Rydberg excitations as a two-state Markov chain.

A contaminant is created on a pulse with probability ``p_c`` and, once
present, survives each pulse period with probability exp(-t_p / tau_c).
While present it blocks photon generation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares


class FitError(RuntimeError):
    pass


class DegenerateDataError(FitError):
    pass


@dataclass(frozen=True)
class ContaminantParams:
    p_c: float
    tau_c: float
    p_max: float
    t_p: float

    def __post_init__(self):
        if not 0.0 <= self.p_c <= 1.0:
            raise ValueError("p_c must lie in [0, 1]")
        if not self.tau_c > 0:
            raise ValueError("tau_c must be > 0")
        if not 0.0 <= self.p_max <= 1.0:
            raise ValueError("p_max must lie in [0, 1]")
        if not self.t_p > 0:
            raise ValueError("t_p must be > 0")
        if not abs(self.ratio) < 1:
            raise ValueError("|exp(-t_p/tau_c) - p_c| must be < 1")

    @property
    def survive(self) -> float:
        """Per-period survival probability of a present contaminant."""
        return math.exp(-self.t_p / self.tau_c)

    @property
    def ratio(self) -> float:
        """Geometric ratio of the approach to steady state."""
        return self.survive - self.p_c

    def with_period(self, t_p: float) -> "ContaminantParams":
        return ContaminantParams(self.p_c, self.tau_c, self.p_max, t_p)


def presence_prob(n, cp: ContaminantParams):
    """Probability that a contaminant is present on pulse ``n`` (1-based)."""
    n = np.asarray(n)
    if np.any(n < 1):
        raise ValueError("pulse index must be >= 1")
    lam = cp.ratio
    out = cp.p_c * (1.0 - lam ** n.astype(float)) / (1.0 - lam)
    return float(out) if out.ndim == 0 else out


def presence_recursion(n_max: int, cp: ContaminantParams) -> np.ndarray:
    """P_1..P_n_max by direct iteration of the one-step update."""
    out = np.empty(n_max)
    p = cp.p_c
    s = cp.survive
    for i in range(n_max):
        if i:
            p = p * s + (1.0 - p) * cp.p_c
        out[i] = p
    return out


def photon_prob(n, cp: ContaminantParams):
    """Probability of generating a photon on pulse ``n``."""
    return cp.p_max * (1.0 - presence_prob(n, cp))


def steady_state(cp: ContaminantParams) -> float:
    return cp.p_max * (1.0 - cp.p_c / (1.0 - cp.survive + cp.p_c))


def steady_state_curve(t_p, p_c: float, tau_c: float, p_max: float):
    """Steady-state generation probability as a function of pulse period."""
    t_p = np.asarray(t_p, float)
    s = np.exp(-t_p / tau_c)
    return p_max * (1.0 - p_c / (1.0 - s + p_c))


def pulse_autocorrelation(m, cp: ContaminantParams):
    """Normalized photon-photon correlation between pulses |m| periods apart.

    The stationary two-state chain decays with eigenvalue
    exp(-t_p/tau_c) - p_c per period, so the exponent is |m|.
    """
    m = np.asarray(m)
    if np.any(m == 0):
        raise ValueError("m must be nonzero")
    out = 1.0 + cp.p_c * cp.ratio ** np.abs(m).astype(float) / (1.0 - cp.survive)
    return float(out) if out.ndim == 0 else out


def creation_linear_model(t_s: float, rate: float, density_scale: float = 1.0) -> float:
    """Creation probability growing linearly with storage time and density."""
    if t_s < 0:
        raise ValueError("t_s must be >= 0")
    return float(min(max(rate * t_s * density_scale, 0.0), 1.0))


@dataclass
class FitResult:
    params: ContaminantParams
    covariance: np.ndarray  # over (p_c, tau_c, p_max)
    residual_norm: float
    chi2: float
    dof: int
    start_index: int

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))


def _model(theta, n, t_p):
    p_c, log_tau, p_max = theta
    lam = math.exp(-t_p / math.exp(log_tau)) - p_c
    return p_max * (1.0 - p_c * (1.0 - lam ** n) / (1.0 - lam))


def fit_pulse_train(
    n,
    rate,
    stderr=None,
    t_p: float = 2.5e-6,
    n_trials=None,
    weighted: bool = True,
    tau_starts=None,
    max_nfev: int = 2000,
) -> FitResult:
    """Weighted least-squares fit of (p_c, tau_c, p_max) to per-pulse success rates.

    Weights are 1/stderr**2 when ``stderr`` is given; otherwise the binomial
    variance rate(1-rate)/n_trials when ``n_trials`` is given; otherwise 1.
    ``weighted=False`` forces unit weights. tau_c is fitted as log(tau_c);
    five log-spaced starting values are tried and the lowest residual wins
    (ties go to the earliest start).
    """
    n = np.asarray(n, float)
    y = np.asarray(rate, float)
    if n.shape != y.shape or n.ndim != 1:
        raise ValueError("n and rate must be 1-D and equally long")
    if np.unique(n).size < 5:
        raise ValueError("need at least 5 distinct pulse indices")
    if np.any((y < 0) | (y > 1)):
        raise ValueError("success rates must lie in [0, 1]")
    if np.ptp(y) == 0:
        raise DegenerateDataError("constant counts: tau_c is unidentifiable")

    if not weighted:
        sigma = np.ones_like(y)
    elif stderr is not None:
        sigma = np.asarray(stderr, float)
    elif n_trials is not None:
        sigma = np.sqrt(np.clip(y * (1 - y), 1e-12, None) / np.asarray(n_trials, float))
    else:
        sigma = np.ones_like(y)
    if np.any(sigma <= 0):
        raise ValueError("uncertainties must be positive")

    def resid(theta):
        return (y - _model(theta, n, t_p)) / sigma

    if tau_starts is None:
        span = (n.max() - n.min() + 1) * t_p
        tau_starts = np.logspace(np.log10(t_p), np.log10(span), 5)
    head = y[n <= np.quantile(n, 0.1)].mean()
    tail = y[n >= np.quantile(n, 0.9)].mean()
    pmax0 = min(max(head, 1e-3), 1.0)

    best = None
    for k, tau0 in enumerate(tau_starts):
        s0 = math.exp(-t_p / tau0)
        # steady-state depletion fixes p_c once tau is guessed
        frac = min(max(1.0 - tail / pmax0, 1e-4), 0.9)
        pc0 = frac * (1 - s0) / (1 - frac)
        theta0 = np.array([min(pc0, 0.5), math.log(tau0), pmax0])
        try:
            sol = least_squares(resid, theta0, method="lm", x_scale="jac", max_nfev=max_nfev)
        except (ValueError, FloatingPointError):
            continue
        if not sol.success or not np.all(np.isfinite(sol.x)):
            continue
        cost = float(sol.cost)
        if best is None or cost < best[0]:
            best = (cost, k, sol)
    if best is None:
        raise FitError("least-squares fit did not converge from any start")
    cost, k, sol = best

    jac = _fd_jacobian(resid, sol.x)
    try:
        cov_theta = np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError as exc:
        raise FitError("singular Jacobian at optimum") from exc
    dof = max(n.size - 3, 1)
    chi2 = 2 * cost
    if not weighted or (stderr is None and n_trials is None):
        cov_theta = cov_theta * chi2 / dof
    p_c, log_tau, p_max = sol.x
    tau = math.exp(log_tau)
    # map (p_c, log tau, p_max) -> (p_c, tau, p_max)
    J = np.diag([1.0, tau, 1.0])
    cov = J @ cov_theta @ J.T
    try:
        params = ContaminantParams(float(p_c), tau, float(p_max), t_p)
    except ValueError as exc:
        raise FitError(f"fit left the physical region: {exc}") from exc
    return FitResult(params, cov, float(np.linalg.norm(sol.fun)), chi2, dof, k)


def _fd_jacobian(fn, x, rel=1e-6):
    f0 = fn(x)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = rel * max(abs(x[i]), 1e-3)
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        J[:, i] = (fn(xp) - fn(xm)) / (2 * h)
    return J
