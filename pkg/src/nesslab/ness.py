"""Self-consistent nonequilibrium steady state in the band representation.

The steady state of the open mean-field system is encoded by channel
amplitudes w[n](E, sigma): the components of the sample basis vectors in
the representation where the coupled dynamics is diagonal, after the
late-time mean-field correction.  They satisfy a fixed point: given the
steady occupations c_k (band integrals of |w_k|^2 against each reservoir
occupation), the amplitudes at every energy solve an N x N affine system
driven by the free (lambda = 0) amplitudes.  Sweeping between the nodewise
solves and the c integrals converges geometrically for weak mean field.

Everything downstream is a quadrature over the same grid: steady
occupations, the interacting transmission density, the two-terminal steady
current, general compact observables, the static effective-potential
approximation (exact to second order in lambda), and the
occupation-number fixed point usable at equal reservoirs.

The per-node solves inside a sweep are independent (batched); the
occupation refresh is the only synchronization point, so results are
deterministic for a fixed grid and sweep order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .exceptions import NoConvergenceError, NotEquilibriumError
from .greens import resolvent_H_batch, sample_block_inverse
from .grids import EnergyGrid, band_grid
from .model import CompactVector, SystemSpec, hartree_potential
from .scattering import _fourier_L, transmittance0, wave_transform

__all__ = [
    "SpectralAmplitudes",
    "SteadyStateResult",
    "MNResult",
    "free_amplitudes",
    "solve_w",
    "steady_amplitude",
    "steady_transmittance",
    "steady_current",
    "steady_occupations",
    "steady_expectation",
    "effective_hamiltonian",
    "effective_transmittance",
    "effective_expectation",
    "mn_fixed_point",
    "solve_steady_state",
]


@dataclass(frozen=True)
class SpectralAmplitudes:
    """Converged channel amplitudes on the quadrature grid.

    ``values[n, sigma-1, i]`` is w_n(E_i, sigma); ``c`` holds the steady
    sample occupations that close the fixed point.
    """

    grid: EnergyGrid
    values: np.ndarray
    c: np.ndarray
    iterations: int
    residual: float
    residual_history: Tuple[float, ...]

    def potential_diagonal(self, spec: SystemSpec) -> np.ndarray:
        """Diagonal of the self-consistent steady mean-field potential."""
        return spec.lam * (spec.nu @ self.c)


@dataclass(frozen=True)
class SteadyStateResult:
    """Steady-state summary: amplitudes, occupations, transmission, current."""

    amplitudes: SpectralAmplitudes
    occupations: np.ndarray
    c: np.ndarray
    transmittance: np.ndarray
    current_1: float
    iterations: int
    residual: float

    @property
    def grid(self) -> EnergyGrid:
        return self.amplitudes.grid


def free_amplitudes(spec: SystemSpec, E, extra_potential: Optional[np.ndarray] = None,
                    sinv: Optional[np.ndarray] = None) -> np.ndarray:
    """Decoupled-state amplitudes -tau (F L_sigma)(E) conj((S^-1 S_sigma)_n).

    These drive the self-consistent update and are the exact amplitudes at
    lambda = 0 (``extra_potential`` shifts the sample block, giving the
    amplitudes of a static effective Hamiltonian instead).
    """
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    if sinv is None:
        sinv, _ = sample_block_inverse(E_arr, spec, extra_potential)
    FL = _fourier_L(spec, E_arr)
    w0 = np.empty((spec.N, 2, E_arr.size), dtype=complex)
    for j in (1, 2):
        y = np.einsum("eij,j->ei", sinv, spec.sample_coupling(j))
        w0[:, j - 1, :] = -spec.tau * FL[:, j - 1][None, :] * y.conj().T
    return w0


def _occupations_from(values: np.ndarray, rw: np.ndarray) -> np.ndarray:
    return np.einsum("se,nse->n", rw, np.abs(values) ** 2)


def solve_w(spec: SystemSpec, grid: Optional[EnergyGrid] = None,
            tol: float = 1e-12, max_sweeps: int = 500, mixing: float = 1.0,
            lambda0: Optional[float] = None) -> SpectralAmplitudes:
    """Solve the steady-state amplitude fixed point on the band grid.

    Each sweep solves, at every node and channel, the affine N x N system

        w_n + lambda * sum_j conj(S(E)^-1)[n, j] (nu c)_j w_j = w0_n,

    then refreshes the occupation scalars c_k by quadrature.  The sweep map
    contracts in c for weak mean field; convergence is declared on the sup
    change of c.  For ``lam`` at or above ``lambda0`` (when supplied) the
    solve is still attempted, with divergence detection.

    Raises
    ------
    NoConvergenceError
        Residual plateau/growth or sweep budget exhausted.
    SingularSError
        Propagated from a near-singular Schur complement at a grid node.
    """
    if grid is None:
        grid = band_grid(spec)
    if lambda0 is not None and spec.lam >= lambda0:
        warnings.warn(
            f"lambda={spec.lam:.4g} >= lambda0={lambda0:.4g}: contraction is "
            "no longer guaranteed; attempting anyway", stacklevel=2)

    E = grid.E
    sinv, _ = sample_block_inverse(E, spec)
    w0 = free_amplitudes(spec, E, sinv=sinv)
    rw = grid.reservoir_weights(spec)

    if spec.lam == 0.0 or spec.nu_norm1 == 0.0:
        c = _occupations_from(w0, rw)
        return SpectralAmplitudes(grid=grid, values=w0, c=c, iterations=1,
                                  residual=0.0, residual_history=())

    N = spec.N
    kernel = sinv.conj()                      # (nE, N, N)
    rhs = np.moveaxis(w0, 0, 2)               # (2, nE, N) -> solve per (sigma, node)
    c = np.zeros(N)
    history = []
    values = w0
    rising = 0
    for sweep in range(1, max_sweeps + 1):
        d = spec.lam * (spec.nu @ c)
        A = np.eye(N)[None, :, :] + kernel * d[None, None, :]
        x = np.linalg.solve(A[None, :, :, :], rhs[:, :, :, None])[..., 0]
        values = np.moveaxis(x, 2, 0)          # (N, 2, nE)
        c_new = _occupations_from(values, rw)
        res = float(np.abs(c_new - c).max())
        history.append(res)
        if res < tol:
            return SpectralAmplitudes(grid=grid, values=values, c=c_new,
                                      iterations=sweep, residual=res,
                                      residual_history=tuple(history))
        rising = rising + 1 if len(history) > 1 and res >= history[-2] else 0
        if rising >= 5 or res > 1e3 * (history[0] + 1.0):
            raise NoConvergenceError(res, sweep, what="steady-state amplitudes")
        c = c + mixing * (c_new - c)
    raise NoConvergenceError(history[-1], max_sweeps, what="steady-state amplitudes")


def steady_amplitude(psi: CompactVector, amplitudes: SpectralAmplitudes,
                     spec: SystemSpec) -> np.ndarray:
    """Band amplitude of a compact vector in the steady representation.

    Returns an (nE, 2) array: the free outgoing-wave transform of ``psi``
    plus the mean-field correction carried by the converged sample
    amplitudes,

        a_psi(E, s) = wt_psi(E, s)
                      - lambda sum_j (nu c)_j conj(<psi|R(E)|zeta_j>) w_j(E, s).
    """
    grid = amplitudes.grid
    E = grid.E
    out = np.empty((E.size, 2), dtype=complex)
    for sigma in (1, 2):
        out[:, sigma - 1] = wave_transform(psi, E, sigma, spec)
    d = spec.lam * (spec.nu @ amplitudes.c)
    if np.any(d != 0.0):
        res = np.empty((E.size, spec.N), dtype=complex)
        for j in range(spec.N):
            zeta = CompactVector.sample_basis(j, spec.N)
            res[:, j] = resolvent_H_batch(E, spec, psi, zeta)
        corr = -np.einsum("j,ej,jse->es", d, res.conj(),
                          amplitudes.values)
        out = out + corr
    return out


def steady_transmittance(amplitudes: SpectralAmplitudes, spec: SystemSpec) -> np.ndarray:
    """Interacting transmission density on the grid.

    Assembled from the two rank-one current channels: with u, v the
    lead-2-channel steady amplitudes of the lead-1 coupling pair,

        2 pi T(E) = tau * (|  (u - i v)/sqrt(2) |^2 - | (u + i v)/sqrt(2) |^2).

    At lambda = 0 this reduces pointwise to the scattering transmission
    |T_12(E)|^2 computed independently from the T-matrix.
    """
    a_s = steady_amplitude(CompactVector(sample=spec.S1), amplitudes, spec)
    a_l = steady_amplitude(CompactVector(lead1=spec.L1_support), amplitudes, spec)
    u = a_s[:, 1]
    v = a_l[:, 1]
    f_plus = (u - 1j * v) / np.sqrt(2.0)
    f_minus = (u + 1j * v) / np.sqrt(2.0)
    return spec.tau * (np.abs(f_plus) ** 2 - np.abs(f_minus) ** 2) / (2.0 * np.pi)


def steady_current(spec: SystemSpec, result) -> float:
    """Steady particle current into lead 1.

    2 pi * integral of (f_2(E) - f_1(E)) * T(E) over the band, evaluated on
    the shared grid (whose panels resolve both Fermi windows exactly).
    Positive sign = net flow into lead 1.
    """
    if isinstance(result, SteadyStateResult):
        grid, trans = result.grid, result.transmittance
    else:
        amplitudes, trans = result
        grid = amplitudes.grid
    rw = grid.reservoir_weights(spec)
    return float(2.0 * np.pi * ((rw[1] - rw[0]) * trans).sum())


def steady_occupations(result, spec: SystemSpec,
                       clamp_tol: float = 1e-8) -> np.ndarray:
    """Steady sample occupations <zeta_k| rho_infinity |zeta_k>.

    Computed from the converged amplitudes as occupation-weighted band
    norms; values are required to land in [0, 1] up to ``clamp_tol`` and
    are clipped to the unit interval.  The sample part of the initial
    state never enters.
    """
    amplitudes = result.amplitudes if isinstance(result, SteadyStateResult) else result
    rw = amplitudes.grid.reservoir_weights(spec)
    occ = _occupations_from(amplitudes.values, rw)
    if occ.min() < -clamp_tol or occ.max() > 1.0 + clamp_tol:
        raise ValueError(f"steady occupations outside [0,1] beyond tolerance: {occ}")
    return np.clip(occ, 0.0, 1.0)


def steady_expectation(f: CompactVector, g: CompactVector,
                       amplitudes: SpectralAmplitudes, spec: SystemSpec) -> complex:
    """Steady expectation of the compact observable |f><g|."""
    a_f = steady_amplitude(f, amplitudes, spec)
    a_g = steady_amplitude(g, amplitudes, spec)
    rw = amplitudes.grid.reservoir_weights(spec)
    return complex(np.einsum("se,es,es->", rw, a_g.conj(), a_f))


def effective_hamiltonian(spec: SystemSpec, grid: Optional[EnergyGrid] = None
                          ) -> Tuple[np.ndarray, SystemSpec]:
    """Static mean-field potential of the decoupled-state steady density.

    s_k is the lambda = 0 steady occupation of sample site k; the returned
    potential is the mean field it generates, and the returned spec view
    carries h_s + V_eff.  Observables of this static system approximate the
    self-consistent ones to second order in lambda.
    """
    if grid is None:
        grid = band_grid(spec)
    w0 = free_amplitudes(spec, grid.E)
    s = _occupations_from(w0, grid.reservoir_weights(spec))
    v_eff = hartree_potential(np.diag(s), spec)
    return v_eff, replace(spec, h_s=spec.h_s + v_eff)


def effective_transmittance(spec: SystemSpec, grid: Optional[EnergyGrid] = None,
                            energies=None, check_tol: float = 1e-8) -> np.ndarray:
    """Transmission density of the static effective Hamiltonian.

    Evaluated through two independent assemblies, asserted equal: the
    T-matrix of the shifted sample block, and the two-channel current
    representation built from outgoing-wave transforms of the lead-1
    coupling pair under the effective spec.
    """
    if grid is None:
        grid = band_grid(spec)
    E = np.asarray(energies, dtype=float) if energies is not None else grid.E
    v_eff, spec_eff = effective_hamiltonian(spec, grid)
    route_t = transmittance0(E, spec, extra_potential=v_eff)

    u = wave_transform(CompactVector(sample=spec.S1), E, 2, spec_eff)
    v = wave_transform(CompactVector(lead1=spec.L1_support), E, 2, spec_eff)
    route_c = spec.tau * 0.5 * (np.abs(u - 1j * v) ** 2
                                - np.abs(u + 1j * v) ** 2) / (2.0 * np.pi)
    scale = max(1e-300, float(np.abs(route_t).max()))
    mismatch = float(np.abs(route_t - route_c).max())
    if mismatch > check_tol * max(1.0, scale):
        raise RuntimeError(
            f"effective-transmittance assemblies disagree by {mismatch:.3e}")
    return route_t


def effective_expectation(f: CompactVector, g: CompactVector, spec: SystemSpec,
                          grid: Optional[EnergyGrid] = None) -> complex:
    """Expectation of |f><g| in the static effective steady density."""
    if grid is None:
        grid = band_grid(spec)
    _, spec_eff = effective_hamiltonian(spec, grid)
    a_f = np.stack([wave_transform(f, grid.E, s, spec_eff) for s in (1, 2)])
    a_g = np.stack([wave_transform(g, grid.E, s, spec_eff) for s in (1, 2)])
    rw = grid.reservoir_weights(spec)
    return complex(np.einsum("se,se,se->", rw, a_g.conj(), a_f))


@dataclass(frozen=True)
class MNResult:
    """Occupation-number fixed point at equal reservoirs.

    ``s`` is the decoupled-state occupation vector (the order-lambda
    almost-fixed-point), ``gap`` its sup distance to the converged
    occupations.
    """

    n: np.ndarray
    iterations: int
    residual: float
    s: np.ndarray
    gap: float

    def __iter__(self):
        return iter((self.n, self.iterations))


def mn_fixed_point(spec: SystemSpec, grid: Optional[EnergyGrid] = None,
                   tol: float = 1e-12, max_iter: int = 500) -> MNResult:
    """Self-consistent occupation numbers from the spectral-density route.

    Iterates  n_k <- (1/pi) * integral f(E) Im [ (S(E) + V(n))^-1 ]_kk dE
    with V(n) the mean-field diagonal of n.  Only meaningful when both
    reservoirs share (beta, mu): the steady state is then a thermal
    function of the dressed Hamiltonian and the sample occupations close
    on themselves.

    Raises
    ------
    NotEquilibriumError
        If the reservoirs are biased.
    """
    if not spec.equal_reservoirs:
        raise NotEquilibriumError(
            "occupation fixed point requires equal reservoir (beta, mu)")
    if grid is None:
        grid = band_grid(spec)
    fw = grid.fermi_weights(spec.beta1, spec.mu1)

    def occ_map(n_vec: np.ndarray) -> np.ndarray:
        v = spec.lam * (spec.nu @ n_vec)
        sinv, _ = sample_block_inverse(grid.E, spec, np.diag(v))
        dens = np.diagonal(sinv, axis1=1, axis2=2).imag / np.pi
        return fw @ dens

    s = occ_map(np.zeros(spec.N))
    if spec.lam == 0.0 or spec.nu_norm1 == 0.0:
        return MNResult(n=s, iterations=1, residual=0.0, s=s, gap=0.0)

    n_vec = s.copy()
    for it in range(1, max_iter + 1):
        n_new = occ_map(n_vec)
        res = float(np.abs(n_new - n_vec).max())
        n_vec = n_new
        if res < tol:
            return MNResult(n=n_vec, iterations=it, residual=res, s=s,
                            gap=float(np.abs(n_vec - s).max()))
    raise NoConvergenceError(res, max_iter, what="occupation fixed point")


def solve_steady_state(spec: SystemSpec, grid: Optional[EnergyGrid] = None,
                       tol: float = 1e-12, max_sweeps: int = 500,
                       mixing: float = 1.0,
                       lambda0: Optional[float] = None) -> SteadyStateResult:
    """Full steady-state pipeline: amplitudes, occupations, T(E), current."""
    amps = solve_w(spec, grid=grid, tol=tol, max_sweeps=max_sweeps,
                   mixing=mixing, lambda0=lambda0)
    occ = steady_occupations(amps, spec)
    trans = steady_transmittance(amps, spec)
    current = steady_current(spec, (amps, trans))
    return SteadyStateResult(amplitudes=amps, occupations=occ, c=amps.c,
                             transmittance=trans, current_1=current,
                             iterations=amps.iterations, residual=amps.residual)
