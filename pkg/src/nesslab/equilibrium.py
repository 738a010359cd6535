"""Self-consistent thermal state of the isolated sample.

The sample is held at inverse temperature beta_s with its mean particle
number pinned; the mean-field potential makes the thermal density matrix a
fixed-point problem.  For weak mean-field strength the iteration contracts
at a rate proportional to lambda and the fixed point is unique.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import NoConvergenceError
from .model import SystemSpec, fermi_dirac, hartree_potential

__all__ = ["SampleEquilibrium", "solve_mu", "solve_sample_equilibrium"]

# Fermi tails beyond 50/beta_s change the trace by less than exp(-50)
_BRACKET_PAD = 50.0


@dataclass(frozen=True)
class SampleEquilibrium:
    """Converged thermal sample state.

    ``rho_s`` commutes with the mean-field Hamiltonian it generates, its
    trace equals the pinned particle number, and ``ratio`` is the observed
    per-sweep contraction of the iteration.
    """

    rho_s: np.ndarray
    mu_s: float
    iterations: int
    residual: float
    ratio: float


def _thermal_density(hmat: np.ndarray, beta_s: float, mu: float) -> np.ndarray:
    evals, evecs = np.linalg.eigh(hmat)
    occ = fermi_dirac(evals, beta_s, mu)
    return (evecs * occ) @ evecs.conj().T


def solve_mu(gamma: np.ndarray, spec: SystemSpec) -> float:
    """Chemical potential pinning Tr f(h_s + V{gamma} - mu) to n_particles.

    The trace is strictly increasing in mu with range (0, N), so the root
    exists, is unique, and a bracketed solve cannot fail.
    """
    hmat = spec.h_s + hartree_potential(gamma, spec)
    evals = np.linalg.eigvalsh(hmat)

    def excess(x: float) -> float:
        return float(fermi_dirac(evals, spec.beta_s, x).sum() - spec.n_particles)

    lo = float(evals.min()) - _BRACKET_PAD / spec.beta_s
    hi = float(evals.max()) + _BRACKET_PAD / spec.beta_s
    return float(brentq(excess, lo, hi, xtol=1e-14, rtol=8.9e-16))


def solve_sample_equilibrium(spec: SystemSpec, tol: float = 1e-12,
                             max_iter: int = 500,
                             mixing: float = 1.0) -> SampleEquilibrium:
    """Iterate gamma -> f(h_s + V{gamma} - mu(gamma)) to its fixed point.

    Starts from the uniform density (n_particles/N) Id.  Plain iteration by
    default; if the residual oscillates the update is damped to 0.5, which
    extends the usable lambda range past the guaranteed-contraction regime.

    Raises
    ------
    NoConvergenceError
        If the sweep budget is exhausted above tolerance.
    """
    N = spec.N
    gamma = (spec.n_particles / N) * np.eye(N, dtype=complex)
    mix = mixing
    residuals = []
    for it in range(1, max_iter + 1):
        mu = solve_mu(gamma, spec)
        hmat = spec.h_s + hartree_potential(gamma, spec)
        new = _thermal_density(hmat, spec.beta_s, mu)
        res = float(np.abs(new - gamma).max())
        residuals.append(res)
        if res < tol:
            ratio = (residuals[-1] / residuals[-2]
                     if len(residuals) > 1 and residuals[-2] > 0 else 0.0)
            return SampleEquilibrium(rho_s=new, mu_s=mu, iterations=it,
                                     residual=res, ratio=ratio)
        gamma = (1.0 - mix) * gamma + mix * new
        if mix == 1.0 and len(residuals) >= 4:
            r = residuals[-4:]
            if r[1] > r[0] and r[3] > r[2]:
                mix = 0.5
    raise NoConvergenceError(residuals[-1], max_iter, what="sample equilibrium")
