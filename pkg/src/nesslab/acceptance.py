"""Quantitative verification battery with pinned tolerances.

Each check validates one closed-form or solver contract against an
independent route (direct lattice inversion, analytic benchmark, scaling
law, or the time-domain integrator) and reports a single pass/fail line.
The battery backs both the test suite and the ``verify`` CLI command.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import expm, solve_banded

from . import dynamics, greens, ness, scattering
from .grids import band_grid
from .model import CompactVector, SystemSpec

__all__ = ["CheckResult", "CHECKS", "list_checks", "run_check", "run_all",
           "benchmark_dot", "broad_dot", "random_spec"]


# ---------------------------------------------------------------------------
# canonical systems

def benchmark_dot(lam: float = 0.0, beta1: float = np.inf, beta2: float = np.inf,
                  mu1: float = -0.2, mu2: float = 0.2) -> SystemSpec:
    """Narrow-resonance single dot with the analytic S(E) benchmark values."""
    return SystemSpec(t_c=1.0, tau=0.2, N=1, h_s=[[0.5]], nu=[[1.0]], lam=lam,
                      S1=[1.0], S2=[1.0], L1_support=[(0, 1.0)],
                      L2_support=[(0, 1.0)], beta1=beta1, beta2=beta2,
                      mu1=mu1, mu2=mu2, beta_s=2.0, n_particles=0.5)


def broad_dot(lam: float = 0.05, beta1: float = np.inf, beta2: float = np.inf,
              mu1: float = -0.3, mu2: float = 0.3) -> SystemSpec:
    """Well-hybridized single dot used for self-consistent and time runs."""
    return SystemSpec(t_c=1.0, tau=0.6, N=1, h_s=[[0.2]], nu=[[1.0]], lam=lam,
                      S1=[1.0], S2=[1.0], L1_support=[(0, 1.0)],
                      L2_support=[(0, 1.0)], beta1=beta1, beta2=beta2,
                      mu1=mu1, mu2=mu2, beta_s=2.0, n_particles=0.5)


def random_spec(rng: np.random.Generator, lam: float = 0.0,
                equal_reservoirs: bool = False,
                margin_floor: float = 0.05) -> SystemSpec:
    """Random in-band resonant system with a certified spectral margin."""
    while True:
        N = int(rng.integers(1, 4))
        levels = rng.uniform(-1.2, 1.2, size=N)
        basis = np.linalg.qr(rng.normal(size=(N, N))
                             + 1j * rng.normal(size=(N, N)))[0]
        h_s = basis @ np.diag(levels) @ basis.conj().T
        h_s = (h_s + h_s.conj().T) / 2
        S1 = rng.normal(size=N) + 1j * rng.normal(size=N)
        S2 = rng.normal(size=N) + 1j * rng.normal(size=N)
        S1 /= np.linalg.norm(S1)
        S2 /= np.linalg.norm(S2)
        nu = rng.uniform(-1.0, 1.0, size=(N, N))
        mu = float(rng.uniform(-0.6, 0.6))
        if equal_reservoirs:
            beta = float(rng.choice([2.5, 8.0, np.inf]))
            res = dict(beta1=beta, beta2=beta, mu1=mu, mu2=mu)
        else:
            res = dict(beta1=np.inf, beta2=np.inf, mu1=mu - 0.2, mu2=mu + 0.2)
        spec = SystemSpec(t_c=1.0, tau=float(rng.uniform(0.5, 0.8)), N=N,
                          h_s=h_s, nu=nu, lam=lam, S1=S1, S2=S2,
                          L1_support=[(0, 1.0)], L2_support=[(0, 1.0)],
                          beta_s=2.0, n_particles=N / 2.0, **res)
        if greens.spectral_condition_check(spec).min_singular > margin_floor:
            return spec


# ---------------------------------------------------------------------------
# helpers

def _chain_green_oracle(n: int, m: int, z: complex, t_c: float, L: int) -> complex:
    """<n|(chain - z)^(-1)|m> by direct banded solve of an L-site hard-wall chain."""
    ab = np.zeros((3, L), dtype=complex)
    ab[0, 1:] = t_c
    ab[1, :] = -z
    ab[2, :-1] = t_c
    rhs = np.zeros(L, dtype=complex)
    rhs[m] = 1.0
    return complex(solve_banded((1, 1), ab, rhs)[n])


def _loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, dtype=float)),
                            np.log(np.maximum(np.asarray(y, dtype=float), 1e-300)),
                            1)[0])


# ---------------------------------------------------------------------------
# the checks


def check_green_exactness() -> Tuple[bool, str]:
    """C01: closed-form chain Green function vs direct lattice inversion."""
    t_start = time.monotonic()
    rng = np.random.default_rng(20250801)
    t_c = 1.0
    L = 1_200_000
    eps = 1e-5
    worst = 0.0
    for k in range(50):
        n = int(rng.integers(0, 25))
        m = int(rng.integers(0, 25))
        if k < 35:
            E = float(rng.uniform(-1.9, 1.9))
        else:
            E = float(rng.choice([-1.0, 1.0]) * rng.uniform(2.05, 3.0))
        z = E + 1j * eps
        ref = _chain_green_oracle(n, m, z, t_c, L)
        worst = max(worst, abs(greens.dirichlet_green(n, m, z, t_c) - ref))

    thr = 0.0
    for n, m in ((0, 0), (3, 1), (7, 7), (2, 9)):
        a, b = n + m + 2, abs(n - m)
        top = (b - a) / (2 * t_c)
        bot = (-1.0) ** (n + m) * (a - b) / (2 * t_c)
        thr = max(thr, abs(greens.dirichlet_green(n, m, 2 * t_c, t_c) - top))
        thr = max(thr, abs(greens.dirichlet_green(n, m, -2 * t_c, t_c) - bot))
    elapsed = time.monotonic() - t_start
    ok = worst < 1e-3 and thr < 1e-12 and elapsed < 30.0
    return ok, (f"max |closed - inverted| = {worst:.3e} (< 1e-3), "
                f"band-edge defect {thr:.3e} (< 1e-12), {elapsed:.1f}s (< 30s)")


def check_image_formula() -> Tuple[bool, str]:
    """C02: wall Green function equals the free-line image combination."""
    rng = np.random.default_rng(7)
    t_c = 1.0
    worst = 0.0
    for k in range(100):
        n = int(rng.integers(0, 20))
        m = int(rng.integers(0, 20))
        if k % 2:
            z = complex(rng.uniform(-3, 3), rng.uniform(0.01, 1.0))
        else:
            z = complex(rng.choice([-1, 1]) * rng.uniform(2.001, 4.0), 0.0)
        img = (greens.full_line_green(n - m, z, t_c)
               - greens.full_line_green(n + m + 2, z, t_c))
        worst = max(worst, abs(greens.dirichlet_green(n, m, z, t_c) - img))
    return worst < 1e-10, f"max image-formula defect = {worst:.3e} (< 1e-10)"


def check_single_dot() -> Tuple[bool, str]:
    """C03: single-dot S(E) and transmission against the analytic benchmark."""
    spec = benchmark_dot()
    alpha, tau, t_c = 0.5, spec.tau, spec.t_c
    E = np.linspace(-2 * t_c, 2 * t_c, 2001)[1:-1]
    f = alpha - E + tau ** 2 * E / t_c ** 2 \
        - 1j * tau ** 2 * np.sqrt(4 * t_c ** 2 - E ** 2) / t_c ** 2
    smat, _ = greens.s_matrix_batch(E, spec)
    s_err = float(np.abs(smat[:, 0, 0] - f).max())

    f0 = alpha + 0j - 1j * tau ** 2 * 2.0
    t_ref = tau ** 4 * 1.0 / (np.pi ** 2 * abs(f0) ** 2)
    t_err = abs(scattering.transmittance0(0.0, spec) - t_ref)
    ok = s_err < 1e-12 and t_err < 1e-8
    return ok, (f"S(E) vs analytic: {s_err:.3e} (< 1e-12), "
                f"T0(0)={t_ref:.4e} defect {t_err:.3e} (< 1e-8)")


def check_route_equivalence() -> Tuple[bool, str]:
    """C04: steady transmission at lambda=0 equals the T-matrix route."""
    spec = broad_dot(lam=0.0)
    grid = band_grid(spec)
    result = ness.solve_steady_state(spec, grid=grid)
    ref = scattering.transmittance0(grid.E, spec)
    worst = float(np.abs(result.transmittance - ref).max())
    return worst < 1e-8, (f"pointwise |T_lambda - T_0| = {worst:.3e} on "
                          f"{grid.size} nodes (< 1e-8)")


def check_zero_bias() -> Tuple[bool, str]:
    """C05: equal reservoirs give zero steady current for random systems."""
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(5):
        base = random_spec(rng, equal_reservoirs=True)
        for lam in (0.0, 0.05):
            spec = replace(base, lam=lam)
            result = ness.solve_steady_state(spec)
            worst = max(worst, abs(result.current_1))
    return worst < 1e-9, f"max |current| over 10 runs = {worst:.3e} (< 1e-9)"


def check_contraction_rate() -> Tuple[bool, str]:
    """C06: sweep residuals contract at least as fast as lambda/lambda0."""
    dot = benchmark_dot()
    consts = greens.dispersive_constants(dot)
    lam = consts.lambda0 / 4.0
    spec = replace(dot, lam=lam)
    amps = ness.solve_w(spec, tol=1e-13)
    hist = np.asarray(amps.residual_history)
    if hist.size < 3:
        return False, f"only {hist.size} sweeps recorded; cannot measure a rate"
    ratios = hist[1:] / hist[:-1]
    rate = float(np.exp(np.mean(np.log(ratios[1:]))))
    bound = 1.1 * lam / consts.lambda0
    ok = rate <= bound
    return ok, (f"measured ratio {rate:.4f} <= 1.1*lambda/lambda0 = {bound:.4f} "
                f"(lambda0={consts.lambda0:.5f}, {hist.size} sweeps)")


def _observable_pairs(rng: np.random.Generator, N: int) -> List[Tuple[CompactVector, CompactVector]]:
    pairs = []
    for _ in range(3):
        def rand_vec():
            lead1 = [(int(rng.integers(0, 4)), complex(rng.normal(), rng.normal()))]
            sample = rng.normal(size=N) + 1j * rng.normal(size=N)
            return CompactVector(lead1=lead1, sample=0.5 * sample)
        pairs.append((rand_vec(), rand_vec()))
    return pairs


def check_effective_order2() -> Tuple[bool, str]:
    """C07: static effective potential reproduces observables to O(lambda^2)."""
    lams = (0.02, 0.04, 0.08)
    t_gaps = []
    obs_gaps = {0: [], 1: [], 2: []}
    rng = np.random.default_rng(11)
    pairs = _observable_pairs(rng, 1)
    for lam in lams:
        spec = broad_dot(lam=lam)
        grid = band_grid(spec)
        result = ness.solve_steady_state(spec, grid=grid)
        t_eff = ness.effective_transmittance(spec, grid=grid)
        t_gaps.append(grid.integrate(np.abs(result.transmittance - t_eff)))
        for i, (f, g) in enumerate(pairs):
            w_full = ness.steady_expectation(f, g, result.amplitudes, spec)
            w_eff = ness.effective_expectation(f, g, spec, grid=grid)
            obs_gaps[i].append(abs(w_full - w_eff))
    slope_t = _loglog_slope(lams, t_gaps)
    slopes_o = [_loglog_slope(lams, obs_gaps[i]) for i in range(3)]
    ok = abs(slope_t - 2.0) <= 0.3 and all(abs(s - 2.0) <= 0.3 for s in slopes_o)
    return ok, (f"L1 transmission slope {slope_t:.2f} (2.0 +- 0.3), "
                f"observable slopes {[f'{s:.2f}' for s in slopes_o]}")


def check_occupation_fixed_point() -> Tuple[bool, str]:
    """C08: occupation fixed point vs decoupled and steady occupations."""
    lams = (0.02, 0.04, 0.08)
    gaps_s, ident, gaps_eff = [], 0.0, []
    for lam in lams:
        spec = broad_dot(lam=lam, beta1=6.0, beta2=6.0, mu1=0.15, mu2=0.15)
        grid = band_grid(spec)
        mn = ness.mn_fixed_point(spec, grid=grid)
        result = ness.solve_steady_state(spec, grid=grid)
        gaps_s.append(mn.gap)
        ident = max(ident, float(np.abs(result.occupations - mn.n).max()))
        w0_eff = ness.free_amplitudes(
            ness.effective_hamiltonian(spec, grid)[1], grid.E)
        occ_eff = np.einsum("se,nse->n", grid.reservoir_weights(spec),
                            np.abs(w0_eff) ** 2)
        gaps_eff.append(float(np.abs(occ_eff - mn.n).max()))
    slope_s = _loglog_slope(lams, gaps_s)
    slope_eff = _loglog_slope(lams, gaps_eff)
    ok = slope_s >= 0.8 and abs(slope_eff - 2.0) <= 0.4 and ident < 1e-8
    return ok, (f"|n - s| slope {slope_s:.2f} (>= 0.8); steady vs fixed-point "
                f"occupations agree to {ident:.2e} (< 1e-8, exact identity); "
                f"|n_eff - n| slope {slope_eff:.2f} (2.0 +- 0.4)")


def check_time_domain(L: int = 600, t_end: float = 50.0, dt: float = 0.045
                      ) -> Tuple[bool, str]:
    """C09: time-domain plateau matches the steady current; initial-state freedom."""
    t_start = time.monotonic()
    spec = broad_dot(lam=0.05)
    result = ness.solve_steady_state(spec)
    trajs = []
    for n0 in (0.25, 0.75):
        rho_i = dynamics.initial_state_truncated(spec, L, np.array([[n0]]))
        trajs.append(dynamics.evolve_liouville(spec, L, rho_i, t_end, dt))
    comp = dynamics.steady_diagnostics(trajs[0], result,
                                       second_trajectory=trajs[1])
    elapsed = time.monotonic() - t_start
    ok = (comp.current_rel_dev < 0.02 and comp.rho_s_occupation_dev < 1e-3
          and elapsed < 600.0)
    return ok, (f"plateau current {comp.plateau_current:.6f} vs steady "
                f"{comp.current_reference:.6f}: rel dev {comp.current_rel_dev:.4f} "
                f"(< 0.02); occupations between initial sample states differ by "
                f"{comp.rho_s_occupation_dev:.2e} (< 1e-3); {elapsed:.0f}s (< 600s)")


def check_picard(L: int = 24) -> Tuple[bool, str]:
    """C10: windowed integral-equation propagator vs exponential and RK4."""
    spec0 = broad_dot(lam=0.0)
    rho_s = np.array([[0.5]])
    rho_i = dynamics.initial_state_truncated(spec0, L, rho_s)
    state0 = dynamics.picard_propagator(spec0, L, rho_i, t_end=0.12)
    H = dynamics.assemble_truncated(spec0, L).matrix
    lin_err = float(np.abs(state0.U - expm(-1j * state0.t * H)).max())

    spec = broad_dot(lam=0.05)
    rho_i = dynamics.initial_state_truncated(spec, L, rho_s)
    Hn = float(np.abs(np.linalg.eigvalsh(dynamics.assemble_truncated(spec, L).matrix)).max())
    t5 = 5 * dynamics.picard_window_width(spec, Hn)
    state = dynamics.picard_propagator(spec, L, rho_i, t_end=t5)
    traj = dynamics.evolve_liouville(spec, L, rho_i, t5, dt=t5 / 4000)
    overlap = float(np.abs(state.rho - traj.final.rho).max())
    ok = (lin_err < 1e-8 and state.unitarity_defect < 1e-8 and overlap < 1e-6)
    return ok, (f"linear window vs exponential {lin_err:.2e} (< 1e-8); "
                f"unitarity defect after 5 windows {state.unitarity_defect:.2e} "
                f"(< 1e-8); vs RK4 {overlap:.2e} (< 1e-6)")


def check_dispersive_decay() -> Tuple[bool, str]:
    """C11: t^(3/2)-scaled dot propagator stays bounded on [1, 100]."""
    spec = benchmark_dot()
    times = np.arange(1.0, 100.0 + 0.05, 0.05)
    amps, _ = greens.sample_propagator(spec, times)
    scaled = times ** 1.5 * np.abs(amps[:, 0, 0])
    sup = float(scaled.max())
    late = times >= 10.0
    tl, yl = times[late], scaled[late]
    edges = np.geomspace(tl[0], tl[-1], 11)
    tb, yb = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = (tl >= lo) & (tl <= hi)
        if m.any():
            tb.append(math.sqrt(lo * hi))
            yb.append(yl[m].max())
    slope = _loglog_slope(tb, yb)
    ok = math.isfinite(sup) and slope <= 0.2
    return ok, (f"sup t^1.5 |amp| = {sup:.4f} (finite), last-decade envelope "
                f"slope {slope:.2f} (<= 0.2, no growth)")


def check_reservoir_continuity() -> Tuple[bool, str]:
    """C12: currents at beta = 1e4 and beta = inf agree to 1e-3 relative."""
    hot = broad_dot(lam=0.05, beta1=1e4, beta2=1e4)
    cold = broad_dot(lam=0.05)
    i_hot = ness.solve_steady_state(hot).current_1
    i_cold = ness.solve_steady_state(cold).current_1
    rel = abs(i_hot - i_cold) / max(abs(i_cold), 1e-300)
    return rel < 1e-3, (f"current {i_hot:.8f} (beta=1e4) vs {i_cold:.8f} "
                        f"(beta=inf): rel diff {rel:.2e} (< 1e-3)")


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class CheckResult:
    check_id: str
    title: str
    passed: bool
    details: str
    elapsed: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.check_id} {self.title}: {self.details}"


CHECKS: List[Tuple[str, str, Callable[[], Tuple[bool, str]]]] = [
    ("C01", "green-function exactness vs lattice inversion", check_green_exactness),
    ("C02", "image-formula identity", check_image_formula),
    ("C03", "single-dot analytic benchmark", check_single_dot),
    ("C04", "lambda=0 transmission route equivalence", check_route_equivalence),
    ("C05", "zero-bias zero current", check_zero_bias),
    ("C06", "sweep contraction rate vs lambda/lambda0", check_contraction_rate),
    ("C07", "O(lambda^2) effective-potential law", check_effective_order2),
    ("C08", "occupation fixed point comparisons", check_occupation_fixed_point),
    ("C09", "time-domain convergence to the steady state", check_time_domain),
    ("C10", "windowed propagator construction", check_picard),
    ("C11", "dispersive decay of the dot propagator", check_dispersive_decay),
    ("C12", "reservoir-parameter continuity", check_reservoir_continuity),
]


def list_checks() -> List[Tuple[str, str]]:
    return [(cid, title) for cid, title, _ in CHECKS]


def run_check(check_id: str) -> CheckResult:
    for cid, title, fn in CHECKS:
        if cid == check_id:
            t0 = time.monotonic()
            passed, details = fn()
            return CheckResult(cid, title, passed, details, time.monotonic() - t0)
    raise KeyError(f"unknown check id {check_id!r}")


def run_all(printer: Optional[Callable[[str], None]] = print,
            only: Optional[List[str]] = None) -> List[CheckResult]:
    results = []
    for cid, title, _ in CHECKS:
        if only and cid not in only:
            continue
        result = run_check(cid)
        results.append(result)
        if printer is not None:
            printer(result.line())
    return results
