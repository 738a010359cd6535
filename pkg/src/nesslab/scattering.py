"""Stationary scattering machinery for the coupled chain-sample system.

Generalized eigenfunctions of the decoupled leads, their finite sine
transform, scattering eigenfunctions of the coupled Hamiltonian built from
the resolvent blocks, the outgoing-wave spectral transform of compactly
supported vectors, and the two-lead T-matrix with its transmission
probability density.

Phase convention: the lead transform is the real sine transform, so all
phases below are pinned by it; only moduli and sesquilinear combinations
are contract-level quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .greens import dirichlet_green, resolvent_H_batch, sample_block_inverse
from .model import CompactVector, SystemSpec

__all__ = [
    "lead_eigenfunction",
    "fourier_lead",
    "GeneralizedEigenfunction",
    "lippmann_schwinger",
    "defect_residual",
    "wave_transform",
    "t_matrix",
    "scattering_matrix",
    "transmittance0",
]


def lead_eigenfunction(n, E, t_c: float):
    """Normalized band eigenfunction of the hard-wall chain at energy E.

    value(n) = sin((n+1) theta) / sqrt(pi t_c sin theta),  E = 2 t_c cos theta.

    Defined on the open band |E| < 2 t_c only.
    """
    E_arr = np.asarray(E, dtype=float)
    if np.any(np.abs(E_arr) >= 2.0 * t_c):
        raise ValueError("energy outside the open band (-2 t_c, 2 t_c)")
    theta = np.arccos(E_arr / (2.0 * t_c))
    n_arr = np.asarray(n)
    val = np.sin((n_arr + 1) * theta) / np.sqrt(np.pi * t_c * np.sin(theta))
    return val if val.ndim else float(val)


def fourier_lead(f: Sequence, E, t_c: float):
    """Band component <Psi0_E, f> of a compactly supported lead vector.

    ``f`` is a (site, amplitude) sequence.  The transform kernel is real,
    so no conjugation acts on the amplitudes.
    """
    E_arr = np.asarray(E, dtype=float)
    out = np.zeros(np.shape(E_arr), dtype=complex)
    for site, amp in f:
        out = out + amp * lead_eigenfunction(int(site), E_arr, t_c)
    return out if out.ndim else complex(out)


def _fourier_L(spec: SystemSpec, E):
    """(nE, 2) array of lead-vector transforms at the grid energies."""
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    out = np.empty((E_arr.size, 2), dtype=complex)
    for j in (1, 2):
        out[:, j - 1] = fourier_lead(spec.lead_support(j), E_arr, spec.t_c)
    return out


@dataclass(frozen=True)
class GeneralizedEigenfunction:
    """Scattering eigenfunction on a finite window of sites.

    ``lead1`` / ``lead2`` hold the values at lead sites 0..window-1,
    ``sample`` the N sample components.  ``sign`` is +1 for the outgoing
    (+i0) solution and -1 for the incoming one.
    """

    E: float
    lead: int
    sign: int
    window: int
    lead1: np.ndarray
    lead2: np.ndarray
    sample: np.ndarray

    def lead_values(self, j: int) -> np.ndarray:
        return self.lead1 if j == 1 else self.lead2


def lippmann_schwinger(E: float, lead: int, sign: int, spec: SystemSpec,
                       window: int = 24) -> GeneralizedEigenfunction:
    """Generalized eigenfunction of the coupled Hamiltonian at band energy E.

    The incident wave lives on ``lead``; the correction is the resolvent
    applied to the single sample-supported vector produced by the
    tunneling term, assembled in closed form from the Schur blocks.
    """
    if lead not in (1, 2):
        raise ValueError("lead must be 1 or 2")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    window = int(window)
    if window <= spec.max_support_index + 1:
        raise ValueError("window must extend beyond the lead supports")

    t_c, tau = spec.t_c, spec.tau
    sinv_p, _ = sample_block_inverse(np.asarray([E]), spec)
    sinv = sinv_p[0] if sign == 1 else sinv_p[0].conj().T
    FL = complex(fourier_lead(spec.lead_support(lead), E, t_c))
    S_in = spec.sample_coupling(lead)

    sites = np.arange(window)
    psi0 = lead_eigenfunction(sites, E, t_c)
    sample = -tau * np.conj(FL) * (sinv @ S_in)

    leads = []
    for j in (1, 2):
        vals = np.zeros(window, dtype=complex) + (psi0 if j == lead else 0.0)
        if tau != 0.0:
            Sj = spec.sample_coupling(j)
            if sign == 1:
                kappa = complex(np.vdot(Sj, sinv_p[0] @ S_in))
            else:
                kappa = np.conj(complex(np.vdot(S_in, sinv_p[0] @ Sj)))
            rl = np.zeros(window, dtype=complex)
            for site, amp in spec.lead_support(j):
                gcol = np.array([dirichlet_green(int(mm), site, E, t_c)
                                 for mm in sites])
                if sign == -1:
                    gcol = gcol.conj()
                rl += amp * gcol
            vals = vals + tau ** 2 * np.conj(FL) * kappa * rl
        leads.append(vals)

    return GeneralizedEigenfunction(E=float(E), lead=lead, sign=int(sign),
                                    window=window, lead1=leads[0],
                                    lead2=leads[1], sample=sample)


def defect_residual(gef: GeneralizedEigenfunction, spec: SystemSpec) -> float:
    """Max |(H - E) psi| over the checkable window sites.

    Covers every lead site whose hopping neighbours are inside the window
    (coupling entries included) and all sample rows.
    """
    E, t_c, tau = gef.E, spec.t_c, spec.tau
    worst = 0.0
    for j in (1, 2):
        psi = gef.lead_values(j)
        amp_at = dict(spec.lead_support(j))
        for m in range(gef.window - 1):
            val = t_c * psi[m + 1] + (t_c * psi[m - 1] if m >= 1 else 0.0)
            if m in amp_at:
                val += tau * amp_at[m] * np.vdot(spec.sample_coupling(j), gef.sample)
            worst = max(worst, abs(val - E * psi[m]))
    hs_psi = spec.h_s @ gef.sample
    for j in (1, 2):
        psi = gef.lead_values(j)
        overlap = sum(np.conj(amp) * psi[site] for site, amp in spec.lead_support(j))
        hs_psi = hs_psi + tau * overlap * spec.sample_coupling(j)
    worst = max(worst, float(np.abs(hs_psi - E * gef.sample).max(initial=0.0)))
    return worst


def wave_transform(psi: CompactVector, E, sigma: int, spec: SystemSpec,
                   extra_potential: Optional[np.ndarray] = None):
    """Outgoing-wave spectral component of a compactly supported vector.

    Returns the (E, sigma) entry of the representation in which the
    coupled dynamics is diagonal, i.e. the overlap of the outgoing
    scattering eigenfunction with ``psi``:

        (F Pi_sigma psi)(E) - tau (F L_sigma)(E) <S_sigma|(H-E+i0)^(-1)|psi>.

    Vectorized over E.
    """
    if sigma not in (1, 2):
        raise ValueError("sigma must be 1 or 2")
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    scalar = np.ndim(E) == 0
    out = fourier_lead(psi.lead(sigma), E_arr, spec.t_c)
    out = np.asarray(out, dtype=complex).reshape(E_arr.shape).copy()
    if spec.tau != 0.0:
        FL = fourier_lead(spec.lead_support(sigma), E_arr, spec.t_c)
        s_vec = CompactVector(sample=spec.sample_coupling(sigma))
        res = resolvent_H_batch(E_arr, spec, psi, s_vec, extra_potential)
        out -= spec.tau * FL * np.conj(res)
    return complex(out[0]) if scalar else out


def t_matrix(E, spec: SystemSpec,
             extra_potential: Optional[np.ndarray] = None):
    """Two-lead T-matrix fibers T_jk(E) on the open band.

    T_jk(E) = -tau^2 (F L_j)(E) conj((F L_k)(E)) <S_j| S(E)^(-1) |S_k>,
    from which the scattering matrix is Id - 2 pi i T(E).
    """
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    scalar = np.ndim(E) == 0
    sinv, _ = sample_block_inverse(E_arr, spec, extra_potential)
    FL = _fourier_L(spec, E_arr)
    T = np.empty((E_arr.size, 2, 2), dtype=complex)
    for j in (1, 2):
        for k in (1, 2):
            coef = np.einsum("i,eij,j->e", spec.sample_coupling(j).conj(), sinv,
                             spec.sample_coupling(k))
            T[:, j - 1, k - 1] = -spec.tau ** 2 * FL[:, j - 1] * FL[:, k - 1].conj() * coef
    return T[0] if scalar else T


def scattering_matrix(E, spec: SystemSpec,
                      extra_potential: Optional[np.ndarray] = None):
    """Unitary on-shell scattering matrix Id - 2 pi i T(E)."""
    T = t_matrix(E, spec, extra_potential)
    return np.eye(2) - 2j * np.pi * T


def transmittance0(E, spec: SystemSpec,
                   extra_potential: Optional[np.ndarray] = None):
    """Non-interacting transmission density |T_12(E)|^2 between the leads.

    With ``extra_potential`` this is the transmission of the shifted sample
    Hamiltonian h_s + extra_potential (static mean-field evaluations).
    """
    T = t_matrix(E, spec, extra_potential)
    if T.ndim == 2:
        return float(abs(T[0, 1]) ** 2)
    return np.abs(T[:, 0, 1]) ** 2
