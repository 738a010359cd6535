"""Closed-form lattice Green functions and resolvent boundary values.

Everything here is evaluated exactly at the real-axis boundary (no numerical
eps limit): the half-line chain Green function, the sample-space Schur
complement S(E) that encodes the lead self-energies, the four resolvent
blocks of the coupled Hamiltonian, a singular-value scan of S(E) over the
spectral window, and the late-time decay constants of the sample propagator.

Energies may also be complex with positive imaginary part (used by the
truncated-lattice cross checks); real energies inside the band mean the
limit from the upper half plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .exceptions import NonDecayingPropagatorError, SingularSError
from .model import CompactVector, SystemSpec, Support

__all__ = [
    "dirichlet_green",
    "full_line_green",
    "lead_self_energy",
    "SEMatrix",
    "s_matrix",
    "s_matrix_batch",
    "sample_block_inverse",
    "resolvent_H",
    "resolvent_H_batch",
    "SpectralConditionReport",
    "spectral_condition_check",
    "DispersiveConstants",
    "dispersive_constants",
    "sample_propagator",
    "COND_THRESHOLD",
]

COND_THRESHOLD = 1e10


def _branch_theta(z: np.ndarray, t_c: float) -> np.ndarray:
    """arccos(z / 2 t_c) on the branch with Im(theta) <= 0.

    That branch makes |exp(-i theta)| <= 1, which selects the decaying root
    and hence the resolvent continuation matching the limit from above.
    """
    theta = np.arccos(z / (2.0 * t_c))
    return np.where(theta.imag > 0, -theta, theta)


def dirichlet_green(n: int, m: int, E, t_c: float):
    """Boundary value <n| (D - E - i0)^(-1) |m> of the hard-wall chain.

    D is the half-line hopping operator with hopping t_c and a wall at
    site -1.  With E = 2 t_c cos(theta) the value inside the band is

        (exp(-i theta (n+m+2)) - exp(-i theta |n-m|)) / (2 i t_c sin(theta)),

    continued to the exact band edges (where it is real rational in the
    site indices) and to real energies outside the band (real valued) or
    complex energies in the upper half plane.

    Parameters
    ----------
    n, m : int
        Sites, >= 0.
    E : scalar or ndarray
        Real energy (+i0 limit implied) or complex with Im E > 0.
    t_c : float
        Hopping energy.
    """
    if n < 0 or m < 0:
        raise ValueError("site indices must be >= 0")
    z = np.asarray(E, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)

    a = n + m + 2
    b = abs(n - m)
    theta = _branch_theta(z, t_c)
    sin_t = np.sin(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (np.exp(-1j * theta * a) - np.exp(-1j * theta * b)) / (2j * t_c * sin_t)

    at_top = (z == 2.0 * t_c)
    if at_top.any():
        val = np.where(at_top, (b - a) / (2.0 * t_c) + 0j, val)
    at_bottom = (z == -2.0 * t_c)
    if at_bottom.any():
        val = np.where(at_bottom, (-1.0) ** (n + m) * (a - b) / (2.0 * t_c) + 0j, val)

    return complex(val[0]) if scalar else val


def full_line_green(d: int, E_complex, t_c: float):
    """Translation-invariant Green function of the infinite hopping chain.

    Evaluated from the roots of w^2 - (z/t_c) w + 1 = 0 by selecting the
    root inside the unit disk:  g_z(d) = w^|d| / (t_c (w - 1/w)).  Defined
    for complex z off the real band and for real z with |z| > 2 t_c; real
    energies on the open band (the branch cut) are rejected.

    Parameters
    ----------
    d : int
        Site offset n - m (the function is even in d).
    E_complex : scalar or ndarray
        Energy, off the cut.
    t_c : float
        Hopping energy.
    """
    z = np.asarray(E_complex, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)

    on_cut = (z.imag == 0) & (np.abs(z.real) <= 2.0 * t_c)
    if on_cut.any():
        raise ValueError("full-line Green function is not defined on the band cut")

    zeta = z / t_c
    sq = np.sqrt(zeta * zeta - 4.0)
    w_a = (zeta + sq) / 2.0
    w_b = (zeta - sq) / 2.0
    inner = np.where(np.abs(w_a) < np.abs(w_b), w_a, w_b)
    outer = 1.0 / inner
    val = inner ** abs(int(d)) / (t_c * (inner - outer))
    return complex(val[0]) if scalar else val


def lead_self_energy(support: Support, E, t_c: float):
    """<L| (D - E - i0)^(-1) |L> for a compactly supported lead vector."""
    z = np.asarray(E, dtype=complex)
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    out = np.zeros_like(z)
    for n, an in support:
        for m, am in support:
            out += np.conj(an) * am * dirichlet_green(n, m, z, t_c)
    return complex(out[0]) if scalar else out


@dataclass(frozen=True)
class SEMatrix:
    """The Schur complement S(E) on the sample space at one energy.

    ``matrix`` is h_s - E - tau^2 * sum_j Sigma_j(E) |S_j><S_j| (with any
    extra potential folded into h_s), ``lead_selfenergy`` the two scalars
    Sigma_j(E).
    """

    E: float
    matrix: np.ndarray
    lead_selfenergy: Tuple[complex, complex]


def s_matrix_batch(E, spec: SystemSpec,
                   extra_potential: Optional[np.ndarray] = None):
    """S(E) on an energy array.

    Returns
    -------
    smat : (nE, N, N) complex ndarray
    sigma : (nE, 2) complex ndarray
        Lead self-energies Sigma_1, Sigma_2.
    """
    z = np.atleast_1d(np.asarray(E, dtype=complex))
    nE = z.size
    hs = spec.h_s
    if extra_potential is not None:
        extra = np.asarray(extra_potential, dtype=complex)
        if extra.shape != (spec.N, spec.N):
            raise ValueError(f"extra potential must be {spec.N}x{spec.N}")
        hs = hs + extra
    smat = np.broadcast_to(hs, (nE, spec.N, spec.N)).copy()
    smat[:, np.arange(spec.N), np.arange(spec.N)] -= z[:, None]
    sigma = np.empty((nE, 2), dtype=complex)
    for j in (1, 2):
        sig = lead_self_energy(spec.lead_support(j), z, spec.t_c)
        sigma[:, j - 1] = sig
        Sj = spec.sample_coupling(j)
        proj = np.outer(Sj, Sj.conj())
        smat -= spec.tau ** 2 * sig[:, None, None] * proj
    return smat, sigma


def s_matrix(E: float, spec: SystemSpec,
             extra_potential: Optional[np.ndarray] = None) -> SEMatrix:
    """Assemble S(E) at a single energy."""
    smat, sigma = s_matrix_batch(np.asarray([E]), spec, extra_potential)
    return SEMatrix(E=float(np.real(E)), matrix=smat[0],
                    lead_selfenergy=(complex(sigma[0, 0]), complex(sigma[0, 1])))


def sample_block_inverse(E, spec: SystemSpec,
                         extra_potential: Optional[np.ndarray] = None,
                         cond_threshold: float = COND_THRESHOLD):
    """Batched S(E)^(-1) with a condition-number guard.

    Raises
    ------
    SingularSError
        If the 1-norm condition estimate exceeds ``cond_threshold`` at
        some node (boundary-value formulas break down there).
    """
    z = np.atleast_1d(np.asarray(E, dtype=complex))
    smat, sigma = s_matrix_batch(z, spec, extra_potential)
    try:
        sinv = np.linalg.inv(smat)
    except np.linalg.LinAlgError as exc:
        raise SingularSError(E=z[0], cond=np.inf) from exc
    norm_s = np.abs(smat).sum(axis=1).max(axis=1)
    norm_i = np.abs(sinv).sum(axis=1).max(axis=1)
    cond = norm_s * norm_i
    bad = ~np.isfinite(cond) | (cond > cond_threshold)
    if bad.any():
        k = int(np.argmax(bad))
        raise SingularSError(E=complex(z[k]), cond=float(cond[k]))
    return sinv, sigma


def _lead_pairing(sup_f: Support, sup_g: Support, E, t_c: float):
    """<f| R_lead |g> for two supports on the same lead (conjugate-linear in f)."""
    z = np.atleast_1d(np.asarray(E, dtype=complex))
    out = np.zeros_like(z)
    for n, an in sup_f:
        for m, am in sup_g:
            out += np.conj(an) * am * dirichlet_green(n, m, z, t_c)
    return out


def resolvent_H_batch(E, spec: SystemSpec, f: CompactVector, g: CompactVector,
                      extra_potential: Optional[np.ndarray] = None,
                      cond_threshold: float = COND_THRESHOLD):
    """<f| (H - E - i0)^(-1) |g> on an energy array.

    Assembled from the four Schur blocks, so no eps limit is taken: the
    sample-sample block is S(E)^(-1), the mixed blocks carry one lead
    resolvent and one S(E)^(-1) factor, and the lead-lead block is the
    decoupled lead resolvent plus a tau^2 backscattering correction.
    """
    z = np.atleast_1d(np.asarray(E, dtype=complex))
    t_c, tau = spec.t_c, spec.tau
    out = np.zeros(z.shape, dtype=complex)

    f_s, g_s = f.sample, g.sample
    # the Schur inverse only enters through the sample block or the
    # backscattering correction; skip it (and its singularity guard) when
    # the energy never meets the sample space
    needs_sinv = (f_s is not None) or (g_s is not None) or tau != 0.0
    sinv = None
    if needs_sinv:
        sinv, _ = sample_block_inverse(z, spec, extra_potential, cond_threshold)

    if f_s is not None and g_s is not None:
        out += np.einsum("i,eij,j->e", f_s.conj(), sinv, g_s)

    # lead resolvent pairings used by several blocks
    fRL = {}   # <f_lead_j | R_L | L_j>
    Lg = {}    # <L_j | R_L | g_lead_j>
    for j in (1, 2):
        Lj = spec.lead_support(j)
        if f.lead(j):
            fRL[j] = _lead_pairing(f.lead(j), Lj, z, t_c)
        if g.lead(j):
            Lg[j] = _lead_pairing(Lj, g.lead(j), z, t_c)

    if f_s is not None:
        for j in (1, 2):
            if j in Lg:
                coef = np.einsum("i,eij,j->e", f_s.conj(), sinv, spec.sample_coupling(j))
                out += -tau * coef * Lg[j]
    if g_s is not None:
        for j in (1, 2):
            if j in fRL:
                coef = np.einsum("i,eij,j->e", spec.sample_coupling(j).conj(), sinv, g_s)
                out += -tau * fRL[j] * coef

    for j in (1, 2):
        if f.lead(j) and g.lead(j):
            out += _lead_pairing(f.lead(j), g.lead(j), z, t_c)
    if tau != 0.0:
        for j in (1, 2):
            for k in (1, 2):
                if j in fRL and k in Lg:
                    coef = np.einsum("i,eij,j->e", spec.sample_coupling(j).conj(),
                                     sinv, spec.sample_coupling(k))
                    out += tau ** 2 * fRL[j] * coef * Lg[k]
    return out


def resolvent_H(E, spec: SystemSpec, f_support: CompactVector,
                g_support: CompactVector,
                extra_potential: Optional[np.ndarray] = None) -> complex:
    """Single-energy resolvent matrix element <f|(H - E - i0)^(-1)|g>."""
    return complex(resolvent_H_batch(np.asarray([E]), spec, f_support,
                                     g_support, extra_potential)[0])


@dataclass(frozen=True)
class SpectralConditionReport:
    """Minimum singular value of S(E) over a spectral window."""

    min_singular: float
    argmin_E: float
    energies: np.ndarray
    smin: np.ndarray

    @property
    def positive(self) -> bool:
        return self.min_singular > 0.0


def spectral_condition_check(spec: SystemSpec, grid=None, e_margin: float = 0.5,
                             n_grid: int = 4001,
                             extra_potential: Optional[np.ndarray] = None
                             ) -> SpectralConditionReport:
    """Scan the smallest singular value of S(E) across the band and margins.

    A positive margin certifies (numerically) that the coupled Hamiltonian
    has no bound states in the scanned window and that all boundary-value
    formulas are usable.  A (near-)zero margin is reported, not raised.
    """
    if grid is None:
        edge = spec.band_edge + e_margin * spec.t_c
        grid = np.linspace(-edge, edge, int(n_grid))
    grid = np.asarray(grid, dtype=float)
    smat, _ = s_matrix_batch(grid, spec, extra_potential)
    smin = np.linalg.svd(smat, compute_uv=False)[:, -1]
    k = int(np.argmin(smin))
    return SpectralConditionReport(min_singular=float(smin[k]),
                                   argmin_E=float(grid[k]),
                                   energies=grid, smin=smin)


def sample_propagator(spec: SystemSpec, times, grid=None,
                      extra_potential: Optional[np.ndarray] = None):
    """Matrix elements <basis_j| exp(i t H) |basis_n> on the sample.

    Spectral synthesis: the band density F(E) = (S^-1 - S^-1adj)/(2 pi i)
    is integrated against exp(i t E).  Under a positive spectral margin F
    carries all the weight, so this equals the true propagator.

    Returns
    -------
    amps : (nt, N, N) complex ndarray
    weight : (N,) ndarray
        Integrated diagonal spectral weight (should be 1 per site when no
        spectral weight hides outside the band).
    """
    if grid is None:
        from .grids import band_grid
        grid = band_grid(spec, oversample=4.0)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sinv, _ = sample_block_inverse(grid.E, spec, extra_potential)
    F = (sinv - sinv.conj().transpose(0, 2, 1)) / (2j * np.pi)
    WF = grid.weights[:, None, None] * F
    weight = np.einsum("eij->ij", WF).diagonal().real.copy()
    amps = np.empty((times.size, spec.N, spec.N), dtype=complex)
    chunk = max(1, int(2e6 / max(grid.E.size, 1)))
    for lo in range(0, times.size, chunk):
        ts = times[lo:lo + chunk]
        phases = np.exp(1j * np.multiply.outer(ts, grid.E))
        amps[lo:lo + chunk] = np.einsum("te,eij->tij", phases, WF)
    return amps, weight


@dataclass(frozen=True)
class DispersiveConstants:
    """Integrated propagator bound M and the mean-field threshold 1/(12 |nu|_1 M)."""

    M: float
    lambda0: float
    tail_constant: float
    sum_rule_defect: float
    envelope_slope: float
    T_max: float

    def __iter__(self):
        return iter((self.M, self.lambda0))


def dispersive_constants(spec: SystemSpec, T_max: float = 200.0, grid=None,
                         ds: float = 0.02, sum_rule_tol: float = 0.02,
                         growth_slope_tol: float = 0.3) -> DispersiveConstants:
    """Estimate M = max_jn int_0^inf |<j| exp(i s H) |n>| ds and lambda0.

    The s-integral runs to T_max with a fitted C * t^(-3/2) tail beyond
    (late-time decay law of the band-edge square-root singularities).  Two
    guards reject systems where the estimate is meaningless:

    * missing spectral weight in the band (bound states, or a resonance
      far too narrow for the grid), detected by the diagonal sum rule;
    * growth of t^(3/2)-scaled amplitudes across the last decade of s.

    Raises
    ------
    NonDecayingPropagatorError
    """
    report = spectral_condition_check(spec)
    if report.min_singular < 1e-12:
        raise NonDecayingPropagatorError(
            f"spectral margin {report.min_singular:.3e} vanishes near "
            f"E={report.argmin_E:.6g}; propagator cannot decay"
        )
    if grid is None:
        from .grids import band_grid
        grid = band_grid(spec, oversample=4.0)

    times = np.arange(0.0, T_max + ds, ds)
    amps, weight = sample_propagator(spec, times, grid=grid)
    defect = float(np.abs(weight - 1.0).max())
    if defect > sum_rule_tol:
        raise NonDecayingPropagatorError(
            f"band spectral weight misses the sum rule by {defect:.3e}; "
            "bound states or an unresolved resonance are present"
        )

    absamp = np.abs(amps)                       # (nt, N, N)
    m_raw = np.trapezoid(absamp, dx=ds, axis=0)
    late = times >= max(1.0, T_max / 10.0)
    t_late = times[late]
    scaled = t_late[:, None, None] ** 1.5 * absamp[late]
    C = float(scaled.max())
    tail = 2.0 * C / math.sqrt(T_max)

    # growth trend of the late-time envelope (block maxima, log-log slope)
    env = scaled.reshape(t_late.size, -1).max(axis=1)
    nbin = 12
    edges = np.geomspace(t_late[0], t_late[-1], nbin + 1)
    tb, yb = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mask = (t_late >= lo) & (t_late <= hi)
        if mask.any():
            tb.append(math.sqrt(lo * hi))
            yb.append(env[mask].max())
    slope = float(np.polyfit(np.log(tb), np.log(np.maximum(yb, 1e-300)), 1)[0])
    if slope > growth_slope_tol:
        raise NonDecayingPropagatorError(
            f"t^1.5-scaled propagator grows (slope {slope:.2f}) over the "
            "last decade; integrated bound is unreliable"
        )

    M = float(m_raw.max() + tail)
    nu1 = spec.nu_norm1
    lambda0 = math.inf if nu1 == 0 else 1.0 / (12.0 * nu1 * M)
    return DispersiveConstants(M=M, lambda0=lambda0, tail_constant=C,
                               sum_rule_defect=defect, envelope_slope=slope,
                               T_max=T_max)
