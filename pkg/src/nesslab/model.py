"""Physical system definition and Hamiltonian assembly.

The open system is two semi-infinite hopping chains (leads) with a hard wall
at site -1, coupled to a finite N-dimensional sample through one rank-one
tunneling term per lead.  This module holds the immutable system
specification, the mean-field (Hartree) potential, the Fermi function, and
the finite-volume truncation used by the time-domain oracle.

Global index convention for truncated operators: lead-1 sites ascending,
then lead-2 sites ascending, then the sample basis.

All types here are immutable value objects once constructed (arrays are
marked read-only), so instances can be shared across threads freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "SystemSpec",
    "TruncatedOperator",
    "CompactVector",
    "fermi_dirac",
    "hartree_potential",
    "assemble_truncated",
    "is_hermitian",
    "is_density_matrix",
]

_HERM_TOL = 1e-12
_IMAG_DIAG_TOL = 1e-12

Support = Tuple[Tuple[int, complex], ...]


def _as_support(pairs: Sequence[Tuple[int, complex]]) -> Support:
    out = []
    for site, amp in pairs:
        site = int(site)
        if site < 0:
            raise ValueError(f"lead site index must be >= 0, got {site}")
        out.append((site, complex(amp)))
    out.sort(key=lambda p: p[0])
    sites = [s for s, _ in out]
    if len(set(sites)) != len(sites):
        raise ValueError("duplicate site in lead support")
    return tuple(out)


def is_hermitian(a: np.ndarray, tol: float = _HERM_TOL) -> bool:
    """True if ``a`` equals its conjugate transpose to relative tolerance."""
    a = np.asarray(a)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    return bool(np.abs(a - a.conj().T).max(initial=0.0) <= tol * scale)


def is_density_matrix(a: np.ndarray, trace: Optional[float] = None,
                      tol: float = 1e-10) -> bool:
    """True if ``a`` is Hermitian with eigenvalues in [0, 1] (and given trace)."""
    a = np.asarray(a)
    if not is_hermitian(a, tol):
        return False
    ev = np.linalg.eigvalsh(a)
    if ev.min() < -tol or ev.max() > 1.0 + tol:
        return False
    if trace is not None and abs(np.trace(a).real - trace) > max(tol, 1e-10):
        return False
    return True


def fermi_dirac(E, beta, mu):
    """Reservoir occupation 1/(exp(beta*(E-mu)) + 1), overflow safe.

    ``beta = inf`` degenerates to the indicator of (-inf, mu], with the
    midpoint value 1/2 exactly at E = mu.  Accepts scalars or arrays in E.

    Parameters
    ----------
    E : float or ndarray
        Energy.
    beta : float
        Inverse temperature, in (0, inf].
    mu : float
        Chemical potential.
    """
    if not (beta > 0):
        raise ValueError(f"beta must be positive (or inf), got {beta}")
    E = np.asarray(E, dtype=float)
    if math.isinf(beta):
        out = np.where(E < mu, 1.0, np.where(E > mu, 0.0, 0.5))
        return out if out.ndim else float(out)
    # evaluate through exp(-|x|) only, so large |beta*(E-mu)| cannot overflow
    x = beta * (E - mu)
    ex = np.exp(-np.abs(x))
    out = np.where(x >= 0, ex / (1.0 + ex), 1.0 / (1.0 + ex))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SystemSpec:
    """Full specification of leads, sample, coupling, and reservoirs.

    Parameters
    ----------
    t_c : float
        Lead hopping energy, > 0.  Sets the band [-2 t_c, 2 t_c].
    tau : float
        Tunneling strength, >= 0 (0 gives the decoupled system, useful
        for diagnostics).
    N : int
        Sample dimension.
    h_s : (N, N) complex ndarray
        Hermitian sample Hamiltonian.
    nu : (N, N) real ndarray
        Mean-field kernel: site j feels lambda * sum_k nu[j, k] * occ[k].
    lam : float
        Mean-field strength lambda, >= 0.
    S1, S2 : (N,) complex ndarray
        Sample-side coupling vectors, nonzero.
    L1_support, L2_support : sequence of (site, amplitude)
        Compactly supported lead-side coupling vectors, at least one
        nonzero amplitude each.
    beta1, beta2 : float
        Reservoir inverse temperatures in (0, inf].
    mu1, mu2 : float
        Reservoir chemical potentials.
    beta_s : float
        Sample inverse temperature (finite, > 0).
    n_particles : float
        Mean sample particle number, in (0, N).
    """

    t_c: float
    tau: float
    N: int
    h_s: np.ndarray
    nu: np.ndarray
    lam: float
    S1: np.ndarray
    S2: np.ndarray
    L1_support: Support
    L2_support: Support
    beta1: float = np.inf
    beta2: float = np.inf
    mu1: float = 0.0
    mu2: float = 0.0
    beta_s: float = 1.0
    n_particles: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "N", int(self.N))
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not self.t_c > 0:
            raise ValueError("t_c must be > 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not (0.0 < self.n_particles < self.N):
            raise ValueError("n_particles must lie strictly between 0 and N")
        if not (self.beta_s > 0 and math.isfinite(self.beta_s)):
            raise ValueError("beta_s must be finite and > 0")
        for name in ("beta1", "beta2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0 (or inf)")

        h_s = np.array(self.h_s, dtype=complex)
        if h_s.shape != (self.N, self.N):
            raise ValueError(f"h_s must be {self.N}x{self.N}, got {h_s.shape}")
        if not is_hermitian(h_s):
            raise ValueError("h_s must be Hermitian to machine tolerance")
        nu = np.array(self.nu, dtype=float)
        if nu.shape != (self.N, self.N):
            raise ValueError(f"nu must be {self.N}x{self.N}, got {nu.shape}")

        S1 = np.array(self.S1, dtype=complex).reshape(self.N)
        S2 = np.array(self.S2, dtype=complex).reshape(self.N)
        if np.linalg.norm(S1) == 0 or np.linalg.norm(S2) == 0:
            raise ValueError("coupling vectors S1, S2 must be nonzero")
        L1 = _as_support(self.L1_support)
        L2 = _as_support(self.L2_support)
        for j, L in ((1, L1), (2, L2)):
            if not any(amp != 0 for _, amp in L):
                raise ValueError(f"L{j}_support must carry a nonzero amplitude")

        for arr in (h_s, nu, S1, S2):
            arr.setflags(write=False)
        object.__setattr__(self, "h_s", h_s)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "S1", S1)
        object.__setattr__(self, "S2", S2)
        object.__setattr__(self, "L1_support", L1)
        object.__setattr__(self, "L2_support", L2)

    # -- convenience views -------------------------------------------------

    @property
    def band_edge(self) -> float:
        return 2.0 * self.t_c

    @property
    def nu_norm1(self) -> float:
        """Entrywise 1-norm of the mean-field kernel."""
        return float(np.abs(self.nu).sum())

    def lead_support(self, j: int) -> Support:
        if j == 1:
            return self.L1_support
        if j == 2:
            return self.L2_support
        raise ValueError(f"lead index must be 1 or 2, got {j}")

    def sample_coupling(self, j: int) -> np.ndarray:
        if j == 1:
            return self.S1
        if j == 2:
            return self.S2
        raise ValueError(f"lead index must be 1 or 2, got {j}")

    def reservoir(self, j: int) -> Tuple[float, float]:
        """(beta, mu) of reservoir j."""
        if j == 1:
            return (self.beta1, self.mu1)
        if j == 2:
            return (self.beta2, self.mu2)
        raise ValueError(f"lead index must be 1 or 2, got {j}")

    @property
    def equal_reservoirs(self) -> bool:
        return self.beta1 == self.beta2 and self.mu1 == self.mu2

    @property
    def max_support_index(self) -> int:
        return max(s for s, _ in self.L1_support + self.L2_support)


def hartree_potential(gamma: np.ndarray, spec: SystemSpec) -> np.ndarray:
    """Diagonal mean-field potential of a sample density matrix.

    Entry j of the returned N x N diagonal matrix is
    ``lam * sum_k nu[j, k] * gamma[k, k]``.  The map is linear in ``gamma``
    and produces a real diagonal.  Only the real part of the diagonal enters;
    an imaginary residue above 1e-12 on the diagonal is rejected since the
    input is then not a density matrix.

    Parameters
    ----------
    gamma : (N, N) ndarray
        Sample density matrix (Hermitian expected; diagonal must be real).
    spec : SystemSpec

    Returns
    -------
    (N, N) real diagonal ndarray.
    """
    gamma = np.asarray(gamma)
    if gamma.shape != (spec.N, spec.N):
        raise ValueError(f"gamma must be {spec.N}x{spec.N}, got {gamma.shape}")
    diag = np.diagonal(gamma)
    scale = max(1.0, float(np.abs(diag).max(initial=0.0)))
    if np.abs(diag.imag).max(initial=0.0) > _IMAG_DIAG_TOL * scale:
        raise ValueError("gamma diagonal carries an imaginary residue > 1e-12")
    v = spec.lam * (spec.nu @ diag.real)
    return np.diag(v)


@dataclass(frozen=True)
class TruncatedOperator:
    """Finite-volume Hermitian matrix on leads cut at length L.

    Sites 0..L-1 survive on each lead (hard wall beyond), so the total
    dimension is 2L + N.  ``index`` maps (subsystem, local index) to the
    global row, with subsystem in {"lead1", "lead2", "sample"}.
    """

    L: int
    N: int
    matrix: np.ndarray

    @property
    def total_dim(self) -> int:
        return 2 * self.L + self.N

    def index(self, subsystem: str, i: int) -> int:
        if subsystem == "lead1":
            if not 0 <= i < self.L:
                raise IndexError(f"lead-1 site {i} outside 0..{self.L - 1}")
            return i
        if subsystem == "lead2":
            if not 0 <= i < self.L:
                raise IndexError(f"lead-2 site {i} outside 0..{self.L - 1}")
            return self.L + i
        if subsystem == "sample":
            if not 0 <= i < self.N:
                raise IndexError(f"sample index {i} outside 0..{self.N - 1}")
            return 2 * self.L + i
        raise ValueError(f"unknown subsystem {subsystem!r}")

    @property
    def sample_slice(self) -> slice:
        return slice(2 * self.L, 2 * self.L + self.N)

    def lead_slice(self, j: int) -> slice:
        if j == 1:
            return slice(0, self.L)
        if j == 2:
            return slice(self.L, 2 * self.L)
        raise ValueError(f"lead index must be 1 or 2, got {j}")

    def embed(self, vec: "CompactVector") -> np.ndarray:
        """Embed a compactly supported vector into the truncated space."""
        out = np.zeros(self.total_dim, dtype=complex)
        for j, support in ((1, vec.lead1), (2, vec.lead2)):
            for site, amp in support:
                if site >= self.L:
                    raise ValueError(f"support site {site} outside truncation L={self.L}")
                out[self.index(f"lead{j}", site)] = amp
        if vec.sample is not None:
            out[self.sample_slice] = vec.sample
        return out


def assemble_truncated(spec: SystemSpec, L: int,
                       gamma_opt: Optional[np.ndarray] = None) -> TruncatedOperator:
    """Finite-volume matrix of the coupled Hamiltonian.

    Builds lead blocks as L-site hard-wall hopping chains (tridiagonal with
    off-diagonal t_c), the sample block ``h_s`` (plus the mean-field
    potential of ``gamma_opt`` when given), and the rank-one tunneling
    between each lead support and the sample.

    Parameters
    ----------
    spec : SystemSpec
    L : int
        Lead truncation length; must exceed the largest coupled lead site
        by at least one extra site.
    gamma_opt : optional (N, N) ndarray
        Sample density whose mean-field potential is added to h_s.
    """
    L = int(L)
    if L <= spec.max_support_index + 1:
        raise ValueError(
            f"L={L} too small for lead supports (max coupled site "
            f"{spec.max_support_index})"
        )
    N = spec.N
    dim = 2 * L + N
    H = np.zeros((dim, dim), dtype=complex)

    hop = spec.t_c * np.ones(L - 1)
    for block in (slice(0, L), slice(L, 2 * L)):
        idx = np.arange(block.start, block.stop)
        H[idx[:-1], idx[1:]] = hop
        H[idx[1:], idx[:-1]] = hop

    hs = spec.h_s.copy()
    if gamma_opt is not None:
        hs = hs + hartree_potential(gamma_opt, spec)
    H[2 * L:, 2 * L:] = hs

    for j in (1, 2):
        offset = 0 if j == 1 else L
        Sj = spec.sample_coupling(j)
        for site, amp in spec.lead_support(j):
            row = offset + site
            H[row, 2 * L:] = spec.tau * amp * Sj.conj()
            H[2 * L:, row] = spec.tau * np.conj(amp) * Sj
    return TruncatedOperator(L=L, N=N, matrix=H)


@dataclass(frozen=True)
class CompactVector:
    """Compactly supported vector on the full system.

    Lead parts are (site, amplitude) tuples, the sample part is a dense
    length-N array (or None for a purely lead-supported vector).
    """

    lead1: Support = ()
    lead2: Support = ()
    sample: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "lead1", _as_support(self.lead1))
        object.__setattr__(self, "lead2", _as_support(self.lead2))
        if self.sample is not None:
            s = np.array(self.sample, dtype=complex).reshape(-1)
            s.setflags(write=False)
            object.__setattr__(self, "sample", s)

    def lead(self, j: int) -> Support:
        return self.lead1 if j == 1 else self.lead2

    @property
    def norm2(self) -> float:
        """Squared norm."""
        total = sum(abs(a) ** 2 for _, a in self.lead1)
        total += sum(abs(a) ** 2 for _, a in self.lead2)
        if self.sample is not None:
            total += float(np.vdot(self.sample, self.sample).real)
        return total

    @staticmethod
    def sample_basis(n: int, N: int) -> "CompactVector":
        e = np.zeros(N, dtype=complex)
        e[n] = 1.0
        return CompactVector(sample=e)

    @staticmethod
    def from_sample(vec: np.ndarray) -> "CompactVector":
        return CompactVector(sample=np.asarray(vec, dtype=complex))

    @staticmethod
    def from_lead(j: int, support: Sequence[Tuple[int, complex]]) -> "CompactVector":
        if j == 1:
            return CompactVector(lead1=tuple(support))
        if j == 2:
            return CompactVector(lead2=tuple(support))
        raise ValueError(f"lead index must be 1 or 2, got {j}")
