"""Band quadrature grids shared by every energy integral in the package.

All integrals over the band [-2 t_c, 2 t_c] are done in the angle variable
E = 2 t_c cos(theta): that removes the square-root behaviour at the band
edges, so Gauss-Legendre panels in theta converge fast.  The interval
[0, pi] is partitioned at physically special angles before node placement:

* each reservoir chemical potential, with geometrically nested panels when
  the Fermi edge is sharper than the base resolution (including beta = inf,
  where the breakpoint alone makes the indicator exact per panel);
* each in-band sample level, with nested panels sized by its golden-rule
  width, so narrow resonances are resolved even when far below the base
  node spacing.

One node set serves amplitudes, occupation integrals, currents, and norm
checks alike, which keeps self-consistency loops free of interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Optional

import numpy as np

from .model import SystemSpec, fermi_dirac
from .scattering import fourier_lead

__all__ = ["EnergyGrid", "band_grid"]

_FERMI_NEST = (1.0, 0.25, 0.0625, 0.015625)
_RES_NEST = (64.0, 16.0, 4.0, 1.0, 0.25)
_MIN_PANEL_NODES = 12


@lru_cache(maxsize=None)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class EnergyGrid:
    """Quadrature nodes strictly inside the band, ascending in energy.

    ``weights`` carry the full dE measure, so ``weights @ values``
    approximates the band integral of a smooth integrand.
    """

    t_c: float
    E: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    breakpoints: np.ndarray
    base_nodes: int

    def __post_init__(self):
        for arr in (self.E, self.theta, self.weights, self.breakpoints):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.E.size

    def integrate(self, values, axis: int = -1):
        """Band integral of node values (last axis indexes nodes by default)."""
        return np.tensordot(np.asarray(values), self.weights, axes=([axis], [0]))

    def fermi_weights(self, beta: float, mu: float) -> np.ndarray:
        """Weights for integrals against the reservoir occupation f(E)."""
        return self.weights * fermi_dirac(self.E, beta, mu)

    def reservoir_weights(self, spec: SystemSpec) -> np.ndarray:
        """(2, size) stack of Fermi-weighted quadratures, one per lead."""
        return np.stack([self.fermi_weights(*spec.reservoir(j)) for j in (1, 2)])


def _nested_points(center: float, offsets: Iterable[float], edge: float) -> List[float]:
    pts = [center]
    for off in offsets:
        for s in (-1.0, 1.0):
            x = center + s * off
            if abs(x) < edge:
                pts.append(x)
    return pts


def _golden_rule_widths(spec: SystemSpec) -> List[tuple]:
    """(level, width) for each in-band sample level; width 0 if decoupled."""
    evals, evecs = np.linalg.eigh(spec.h_s)
    out = []
    edge = spec.band_edge
    for k, eps in enumerate(evals):
        if abs(eps) >= edge * (1.0 - 1e-9):
            continue
        gamma = 0.0
        for j in (1, 2):
            fl = fourier_lead(spec.lead_support(j), float(eps), spec.t_c)
            ov = np.vdot(evecs[:, k], spec.sample_coupling(j))
            gamma += 2.0 * math.pi * spec.tau ** 2 * abs(fl) ** 2 * abs(ov) ** 2
        out.append((float(eps), float(gamma)))
    return out


def band_grid(spec: SystemSpec, n_base: int = 512, oversample: float = 1.0,
              extra_potential: Optional[np.ndarray] = None) -> EnergyGrid:
    """Build the partitioned theta-space Gauss-Legendre grid for ``spec``.

    Parameters
    ----------
    spec : SystemSpec
    n_base : int
        Base node budget spread over [0, pi] proportionally to panel width
        (config key ``theta_nodes``); refinement panels add a few nodes
        each on top.
    oversample : float
        Multiplies all panel node counts (time-quadrature consumers use
        more nodes to resolve fast phase factors).
    extra_potential : optional (N, N) ndarray
        Folded into the sample levels used for resonance placement.
    """
    if n_base < 64:
        raise ValueError("n_base must be >= 64")
    t_c = spec.t_c
    edge = spec.band_edge
    special: List[float] = []

    for j in (1, 2):
        beta, mu = spec.reservoir(j)
        if abs(mu) >= edge:
            continue
        special.append(mu)
        if math.isfinite(beta):
            base = 45.0 / beta
            offsets = [min(off, t_c) for off in (base * f for f in _FERMI_NEST)]
            special.extend(_nested_points(mu, offsets, edge)[1:])

    spec_levels = spec
    if extra_potential is not None:
        from dataclasses import replace
        spec_levels = replace(spec, h_s=spec.h_s + np.asarray(extra_potential))
    for eps, gamma in _golden_rule_widths(spec_levels):
        if gamma <= 0.0:
            continue
        if gamma >= 0.1 * t_c:
            continue
        pad = 2.0 * spec.lam * spec.nu_norm1
        offsets = [min(gamma * f + (pad if f == _RES_NEST[0] else 0.0), 0.5 * t_c)
                   for f in _RES_NEST]
        special.extend(_nested_points(eps, offsets, edge))

    thetas = {0.0, math.pi}
    for x in special:
        if abs(x) < edge:
            thetas.add(float(np.arccos(x / edge)))
    bounds = np.array(sorted(thetas))
    keep = np.concatenate([[True], np.diff(bounds) > 1e-12])
    bounds = bounds[keep]
    if bounds[-1] != math.pi:
        bounds = np.append(bounds, math.pi)

    nodes_t, nodes_w = [], []
    budget = n_base * oversample
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        width = hi - lo
        n = max(_MIN_PANEL_NODES, int(round(budget * width / math.pi)))
        x, w = _leggauss(n)
        nodes_t.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        nodes_w.append(0.5 * (hi - lo) * w)
    theta = np.concatenate(nodes_t)
    wtheta = np.concatenate(nodes_w)

    E = edge * np.cos(theta)
    weights = wtheta * edge * np.sin(theta)
    order = np.argsort(E, kind="stable")
    breaks = edge * np.cos(bounds[::-1])
    return EnergyGrid(t_c=t_c, E=E[order], theta=theta[order],
                      weights=weights[order], breakpoints=breaks,
                      base_nodes=int(n_base))
