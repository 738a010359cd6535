"""Time-domain evolution of the truncated open system.

Two independent integrators for the nonlinear Liouville dynamics on leads
cut at length L: a fourth-order Runge-Kutta loop directly on the density
matrix (scales to L of several hundred), and a short-time contraction
solve for the nonlinear propagator U(t) on windows sized by explicit
Lipschitz bounds (slow, but a faithful construction used for
cross-checks).  Plateau diagnostics compare late-time observables with the
steady-state solver.

The truncation is trustworthy only before finite-size reflections return:
the band group velocity is at most 2 t_c, so runs beyond 0.8 * L / (2 t_c)
emit RecurrenceHorizonWarning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.integrate import cumulative_simpson

from .exceptions import NoPlateauError, RecurrenceHorizonWarning, WindowTooLargeError
from .model import SystemSpec, assemble_truncated, fermi_dirac, is_density_matrix
from .ness import SteadyStateResult

__all__ = [
    "EvolutionState",
    "Trajectory",
    "initial_state_truncated",
    "evolve_liouville",
    "picard_propagator",
    "steady_diagnostics",
    "SteadyComparison",
]


@dataclass(frozen=True)
class EvolutionState:
    """Snapshot of the truncated evolution at one time."""

    t: float
    rho: np.ndarray
    U: Optional[np.ndarray]
    trace: float
    trace_defect: float
    herm_defect: float
    unitarity_defect: float
    occupations: np.ndarray
    current: float


@dataclass(frozen=True)
class Trajectory:
    """Recorded observables of one Liouville run plus the final state."""

    times: np.ndarray
    occupations: np.ndarray          # (nt, N)
    currents: np.ndarray
    trace_defects: np.ndarray
    herm_defects: np.ndarray
    energies: np.ndarray
    final: EvolutionState
    L: int
    dt: float


def initial_state_truncated(spec: SystemSpec, L: int, rho_s: np.ndarray) -> np.ndarray:
    """Block density matrix: thermal lead blocks + supplied sample density.

    Lead blocks are Fermi functions of the truncated hard-wall chains,
    built by diagonalization; at beta = inf they degenerate to spectral
    projectors below mu.
    """
    rho_s = np.asarray(rho_s, dtype=complex)
    if rho_s.shape != (spec.N, spec.N):
        raise ValueError(f"rho_s must be {spec.N}x{spec.N}, got {rho_s.shape}")
    if not is_density_matrix(rho_s, tol=1e-8):
        raise ValueError("rho_s must be Hermitian with eigenvalues in [0, 1]")
    L = int(L)
    dim = 2 * L + spec.N
    chain = np.zeros((L, L))
    idx = np.arange(L)
    chain[idx[:-1], idx[1:]] = spec.t_c
    chain[idx[1:], idx[:-1]] = spec.t_c
    evals, evecs = np.linalg.eigh(chain)

    rho = np.zeros((dim, dim), dtype=complex)
    for j, block in ((1, slice(0, L)), (2, slice(L, 2 * L))):
        beta, mu = spec.reservoir(j)
        occ = fermi_dirac(evals, beta, mu)
        rho[block, block] = (evecs * occ) @ evecs.T
    rho[2 * L:, 2 * L:] = rho_s
    return rho


def _embedded_pair(spec: SystemSpec, L: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index/amplitude data for <S1| rho |L1> in the truncated ordering."""
    s_rows = np.arange(2 * L, 2 * L + spec.N)
    l_idx = np.array([site for site, _ in spec.L1_support])
    l_amp = np.array([amp for _, amp in spec.L1_support])
    return s_rows, l_idx, l_amp


def _observables(rho: np.ndarray, spec: SystemSpec,
                 s_rows, l_idx, l_amp) -> Tuple[np.ndarray, float]:
    occ = np.diagonal(rho)[s_rows].real.copy()
    z = np.vdot(spec.S1, rho[np.ix_(s_rows, l_idx)] @ l_amp)
    current = 2.0 * spec.tau * z.imag
    return occ, float(current)


def recurrence_horizon(L: int, t_c: float) -> float:
    """Safe evolution horizon 0.8 * L / (2 t_c) of the truncated leads."""
    return 0.8 * L / (2.0 * t_c)


def evolve_liouville(spec: SystemSpec, L: int, rho_i: np.ndarray, t_end: float,
                     dt: float, record_stride: Optional[int] = None) -> Trajectory:
    """Integrate  i d rho/dt = [H + V{rho}, rho]  with classical RK4.

    The mean-field diagonal is refreshed from the sample occupations at
    every stage.  Stage derivatives are assembled as -i (P - P+) with
    P = (H + V) rho, which keeps rho exactly Hermitian in floating point.
    Observables are recorded every ``record_stride`` steps (default:
    roughly every 0.5 / t_c of evolution).
    """
    L = int(L)
    if t_end > recurrence_horizon(L, spec.t_c):
        warnings.warn(
            f"t_end={t_end:.4g} exceeds the recurrence horizon "
            f"{recurrence_horizon(L, spec.t_c):.4g} of L={L} leads",
            RecurrenceHorizonWarning, stacklevel=2)
    H = sp.csr_matrix(assemble_truncated(spec, L).matrix)
    s_rows, l_idx, l_amp = _embedded_pair(spec, L)
    lam_nu = spec.lam * spec.nu

    def deriv(rho: np.ndarray) -> np.ndarray:
        P = H @ rho
        if spec.lam != 0.0:
            v = lam_nu @ np.diagonal(rho)[s_rows].real
            P[s_rows, :] += v[:, None] * rho[s_rows, :]
        return -1j * (P - P.conj().T)

    nsteps = int(round(t_end / dt))
    if record_stride is None:
        record_stride = max(1, int(round(0.5 / (spec.t_c * dt))))
    rho = np.array(rho_i, dtype=complex)
    trace0 = float(np.trace(rho).real)

    times, occs, currs, trdef, hdef, ens = [], [], [], [], [], []

    def record(t: float):
        occ, cur = _observables(rho, spec, s_rows, l_idx, l_amp)
        times.append(t)
        occs.append(occ)
        currs.append(cur)
        trdef.append(abs(float(np.trace(rho).real) - trace0))
        hdef.append(float(np.abs(rho - rho.conj().T).max()))
        ens.append(float((H @ rho).trace().real))

    record(0.0)
    t = 0.0
    for step in range(1, nsteps + 1):
        k1 = deriv(rho)
        k2 = deriv(rho + (0.5 * dt) * k1)
        k3 = deriv(rho + (0.5 * dt) * k2)
        k4 = deriv(rho + dt * k3)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = step * dt
        if step % record_stride == 0 or step == nsteps:
            record(t)

    occ, cur = _observables(rho, spec, s_rows, l_idx, l_amp)
    final = EvolutionState(
        t=t, rho=rho, U=None, trace=float(np.trace(rho).real),
        trace_defect=trdef[-1], herm_defect=hdef[-1], unitarity_defect=0.0,
        occupations=occ, current=cur)
    return Trajectory(times=np.array(times), occupations=np.array(occs),
                      currents=np.array(currs), trace_defects=np.array(trdef),
                      herm_defects=np.array(hdef), energies=np.array(ens),
                      final=final, L=L, dt=dt)


def _cumulative_simpson_complex(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """cumulative_simpson casts complex input to real; integrate parts."""
    re = cumulative_simpson(values.real, x=x, axis=0, initial=0.0)
    im = cumulative_simpson(values.imag, x=x, axis=0, initial=0.0)
    return re + 1j * im


def picard_window_width(spec: SystemSpec, norm_H: float) -> float:
    """Admissible contraction window from the explicit Lipschitz bounds.

    With the generator restricted to the radius-1/2 ball around a unit
    operator, the local Lipschitz constant is |H| + 4 lambda |nu|_1 (3/2)^2
    and the local bound (3/2)(|H| + lambda |nu|_1 (3/2)^2); the window must
    stay below the reciprocal of both (factor 2 on the bound).
    """
    lip = norm_H + 4.0 * spec.lam * spec.nu_norm1 * 2.25
    mx = 1.5 * (norm_H + spec.lam * spec.nu_norm1 * 2.25)
    return 0.95 * min(1.0 / lip, 1.0 / (2.0 * mx))


def picard_propagator(spec: SystemSpec, L: int, rho_i: np.ndarray, t_end: float,
                      dt: Optional[float] = None, tol: float = 1e-13,
                      max_iter: int = 200) -> EvolutionState:
    """Construct U(t) from the integral equation U = Id - i Int G(U).

    Successive windows of admissible width are solved by fixed-point
    iteration with cumulative Simpson quadrature on a sub-grid of spacing
    ``dt`` (default: window/16).  The measured per-iteration contraction
    must stay below 0.95, otherwise the window is rejected.

    Returns the final state with both U(t_end) and rho = U rho_i U+.
    """
    H = assemble_truncated(spec, int(L)).matrix
    dim = H.shape[0]
    rho_i = np.asarray(rho_i, dtype=complex)
    norm_H = float(np.abs(np.linalg.eigvalsh(H)).max())
    delta = picard_window_width(spec, norm_H)
    s_rows = slice(2 * L, 2 * L + spec.N)
    lam_nu = spec.lam * spec.nu

    def gen(U: np.ndarray) -> np.ndarray:
        out = H @ U
        if spec.lam != 0.0:
            rows = U[s_rows, :]
            mid = rows @ rho_i
            occ = np.einsum("ij,ij->i", mid, rows.conj()).real
            out[s_rows, :] += (lam_nu @ occ)[:, None] * U[s_rows, :]
        return out

    U = np.eye(dim, dtype=complex)
    t = 0.0
    while t < t_end - 1e-12:
        width = min(delta, t_end - t)
        n_sub = max(4, int(math.ceil(width / dt)) if dt else 16)
        n_sub += n_sub % 2  # Simpson wants an even panel count
        s_grid = np.linspace(0.0, width, n_sub + 1)
        stack = np.broadcast_to(U, (n_sub + 1, dim, dim)).copy()
        prev_delta = None
        for _ in range(max_iter):
            G = np.stack([gen(stack[i]) for i in range(n_sub + 1)])
            integ = _cumulative_simpson_complex(G, s_grid)
            new = U[None, :, :] - 1j * integ
            change = float(np.abs(new - stack).max())
            stack = new
            if prev_delta is not None and prev_delta > 0:
                ratio = change / prev_delta
                if ratio > 0.95 and change > 10 * tol:
                    raise WindowTooLargeError(ratio, width)
            prev_delta = change
            if change < tol:
                break
        else:
            raise WindowTooLargeError(1.0, width)
        U = stack[-1]
        t += width

    rho = U @ rho_i @ U.conj().T
    udef = float(np.abs(U.conj().T @ U - np.eye(dim)).max())
    occ = np.diagonal(rho)[s_rows].real.copy()
    s_idx, l_idx, l_amp = _embedded_pair(spec, int(L))
    z = np.vdot(spec.S1, rho[np.ix_(s_idx, l_idx)] @ l_amp)
    return EvolutionState(
        t=t, rho=rho, U=U, trace=float(np.trace(rho).real),
        trace_defect=abs(float(np.trace(rho).real - np.trace(rho_i).real)),
        herm_defect=float(np.abs(rho - rho.conj().T).max()),
        unitarity_defect=udef, occupations=occ,
        current=float(2.0 * spec.tau * z.imag))


@dataclass(frozen=True)
class SteadyComparison:
    """Plateau observables of a trajectory against the steady-state solver."""

    plateau_current: float
    plateau_occupations: np.ndarray
    current_reference: float
    current_rel_dev: float
    occupation_dev: float
    drift: float
    rho_s_occupation_dev: Optional[float]


def steady_diagnostics(trajectory: Trajectory, ness_result: SteadyStateResult,
                       second_trajectory: Optional[Trajectory] = None,
                       plateau_fraction: float = 0.2,
                       drift_tol: float = 1e-3) -> SteadyComparison:
    """Plateau-average the trajectory tail and compare with the NESS.

    The last ``plateau_fraction`` of recorded samples must have settled
    (relative drift below ``drift_tol``); the window averages are then
    compared against the steady current and occupations.  A second
    trajectory (different initial sample density) turns on the
    initial-state-independence comparison.

    Raises
    ------
    NoPlateauError
        If the tail still drifts beyond tolerance.
    """
    n = trajectory.times.size
    k0 = max(0, int(math.floor(n * (1.0 - plateau_fraction))))
    window_occ = trajectory.occupations[k0:]
    window_cur = trajectory.currents[k0:]

    cur_scale = max(float(np.abs(trajectory.currents).max()), 1e-12)
    drifts = [float(np.ptp(window_cur)) / max(abs(window_cur.mean()), 0.05 * cur_scale)]
    for k in range(window_occ.shape[1]):
        col = window_occ[:, k]
        drifts.append(float(np.ptp(col)) / max(abs(col.mean()), 1e-3))
    drift = max(drifts)
    if drift > drift_tol:
        raise NoPlateauError(
            f"observables still drift by {drift:.3e} (> {drift_tol:g}) over "
            "the plateau window")

    plateau_cur = float(window_cur.mean())
    plateau_occ = window_occ.mean(axis=0)
    ref = ness_result.current_1
    rel = abs(plateau_cur - ref) / max(abs(ref), 1e-12)
    occ_dev = float(np.abs(plateau_occ - ness_result.occupations).max())

    rho_s_dev = None
    if second_trajectory is not None:
        m = second_trajectory.times.size
        m0 = max(0, int(math.floor(m * (1.0 - plateau_fraction))))
        other = second_trajectory.occupations[m0:].mean(axis=0)
        rho_s_dev = float(np.abs(other - plateau_occ).max())

    return SteadyComparison(
        plateau_current=plateau_cur, plateau_occupations=plateau_occ,
        current_reference=ref, current_rel_dev=rel, occupation_dev=occ_dev,
        drift=drift, rho_s_occupation_dev=rho_s_dev)
