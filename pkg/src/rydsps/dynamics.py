"""Four-level master-equation model of the collective write and storage stages.

Basis order is (g, e, r, c): ground, intermediate, Rydberg, contaminant.
The blockaded ensemble is treated as one super-atom whose probe coupling is
enhanced by sqrt(N). Units: rad/s, hbar = 1.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import DOP853

from .core.params import PhysicalParams, PulseSchedule

G, E, R, C = range(4)
DIM = 4

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8


class IntegrationError(RuntimeError):
    def __init__(self, t: float, message: str):
        self.t = t
        super().__init__(f"integration failed at t = {t:.6g} s: {message}")


def ground_state() -> np.ndarray:
    rho = np.zeros((DIM, DIM), complex)
    rho[G, G] = 1.0
    return rho


def check_density_matrix(rho: np.ndarray) -> None:
    """Raise ValueError unless ``rho`` is Hermitian, unit-trace and positive."""
    rho = np.asarray(rho)
    if rho.shape != (DIM, DIM):
        raise ValueError(f"density matrix must be {DIM}x{DIM}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > HERMITIAN_TOL:
        raise ValueError(f"not Hermitian (max deviation {herm:.3g})")
    tr = np.trace(rho).real
    if abs(tr - 1) > TRACE_TOL:
        raise ValueError(f"trace {tr!r} != 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()
    if lo < -POSITIVITY_TOL:
        raise ValueError(f"negative eigenvalue {lo:.3g}")


def hamiltonian(params: PhysicalParams, stage: str = "write") -> np.ndarray:
    """Rotating-frame Hamiltonian; the store stage switches both drives off."""
    if stage == "write":
        wp, wc = params.sqrt_n * params.omega_p, params.omega_c_write
    elif stage == "store":
        wp = wc = 0.0
    else:
        raise ValueError(f"unknown stage {stage!r}")
    h = np.zeros((DIM, DIM), complex)
    h[G, E] = h[E, G] = wp
    h[E, R] = h[R, E] = wc
    h[E, E] = -2 * params.delta_p
    h[R, R] = -2 * params.delta_2ph
    return 0.5 * h


def jump_operators(params: PhysicalParams) -> list[np.ndarray]:
    """e->g, r->g, r->c, c->g decay channels."""
    ops = []
    for rate, to, frm in (
        (params.gamma_ge, G, E),
        (params.gamma_gr, G, R),
        (params.gamma_cr, C, R),
        (params.gamma_gc, G, C),
    ):
        op = np.zeros((DIM, DIM), complex)
        op[to, frm] = np.sqrt(rate)
        ops.append(op)
    return ops


def liouvillian(h: np.ndarray, jumps: list[np.ndarray]) -> np.ndarray:
    """Superoperator acting on row-major ``rho.ravel()``."""
    eye = np.eye(DIM)
    L = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op in jumps:
        n = op.conj().T @ op
        L += np.kron(op, op.conj()) - 0.5 * (np.kron(n, eye) + np.kron(eye, n.T))
    return L


def raman_detuning(params: PhysicalParams) -> float:
    """Two-photon detuning that cancels the differential light shift.

    Second order in the couplings: the write-stage effective g-r transition
    is resonant at delta = (Omega_c**2 - N Omega_p**2) / (4 Delta_p).
    """
    return (params.omega_c_write**2 - params.n_collective * params.omega_p**2) / (4 * params.delta_p)


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray   # (n,) seconds, strictly increasing
    states: np.ndarray  # (n, 4, 4) complex

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.shape != (self.times.size, DIM, DIM):
            raise ValueError("trajectory shape mismatch")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def population(self, level: int) -> np.ndarray:
        return self.states[:, level, level].real

    def rho_at(self, t: float) -> np.ndarray:
        ts = self.times
        if t < ts[0] - 1e-18 or t > ts[-1] * (1 + 1e-12) + 1e-18:
            raise ValueError(f"t = {t:.6g} s outside trajectory [{ts[0]:.6g}, {ts[-1]:.6g}]")
        k = int(np.searchsorted(ts, t))
        if k < ts.size and abs(ts[k] - t) <= 1e-12 * max(abs(t), 1e-12):
            return self.states[k]
        k = min(max(k, 1), ts.size - 1)
        w = (t - ts[k - 1]) / (ts[k] - ts[k - 1])
        return (1 - w) * self.states[k - 1] + w * self.states[k]

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["time_s", "rho_gg", "rho_ee", "rho_rr", "rho_cc", "trace"])
            for t, rho in zip(self.times, self.states):
                d = np.diag(rho).real
                out.writerow([repr(float(t)), *(repr(float(x)) for x in d), repr(float(d.sum()))])


def _integrate(L, y0, t0, t1, rtol, atol):
    def rhs(t, y):
        return L @ y

    solver = DOP853(rhs, t0, y0, t1, rtol=rtol, atol=atol)
    times, states = [], []
    while solver.status == "running":
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(solver.t, msg or "step size underflow")
        # re-symmetrize to keep rounding drift out of the Hermitian part
        rho = solver.y.reshape(DIM, DIM)
        solver.y[:] = (0.5 * (rho + rho.conj().T)).ravel()
        times.append(solver.t)
        states.append(solver.y.copy())
    return times, states


def evolve(
    rho0: np.ndarray,
    params: PhysicalParams,
    schedule: PulseSchedule,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> Trajectory:
    """Write for ``t_w`` then store for ``t_s``; all four decay channels act throughout."""
    check_density_matrix(rho0)
    jumps = jump_operators(params)
    y = np.asarray(rho0, complex).ravel().copy()
    times, states = [0.0], [y.copy()]
    t = 0.0
    for stage, duration in (("write", schedule.t_w), ("store", schedule.t_s)):
        L = liouvillian(hamiltonian(params, stage), jumps)
        ts, ys = _integrate(L, y, t, t + duration, rtol, atol)
        times += ts
        states += ys
        t += duration
        y = states[-1]
    return Trajectory(np.asarray(times), np.asarray(states).reshape(-1, DIM, DIM))


def write_efficiency(traj: Trajectory, t_w: float) -> float:
    """Rydberg population at the end of the write pulse."""
    if traj.times[-1] < t_w * (1 - 1e-12):
        raise ValueError("trajectory too short for t_w")
    return float(traj.rho_at(t_w)[R, R].real)


def storage_efficiency(traj: Trajectory, t_w: float, t_s: float) -> float:
    """Fraction of the Rydberg population that survives the storage time."""
    if traj.times[-1] < (t_w + t_s) * (1 - 1e-12):
        raise ValueError("trajectory too short for t_w + t_s")
    written = traj.rho_at(t_w)[R, R].real
    if written < 1e-12:
        raise ValueError(f"Rydberg population {written:.3g} after writing is too small to normalize")
    return float(traj.rho_at(t_w + t_s)[R, R].real / written)


def write_store_efficiencies(params: PhysicalParams, schedule: PulseSchedule) -> tuple[float, float]:
    traj = evolve(ground_state(), params, schedule)
    return write_efficiency(traj, schedule.t_w), storage_efficiency(traj, schedule.t_w, schedule.t_s)
