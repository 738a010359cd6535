import numpy as np
import pytest

from nesslab.equilibrium import solve_mu, solve_sample_equilibrium
from nesslab.model import SystemSpec, hartree_potential


def sample_only_spec(h_s, nu, lam, beta_s, n_particles):
    N = len(h_s)
    return SystemSpec(t_c=1.0, tau=0.4, N=N, h_s=h_s, nu=nu, lam=lam,
                      S1=np.ones(N), S2=np.ones(N),
                      L1_support=[(0, 1.0)], L2_support=[(0, 1.0)],
                      beta_s=beta_s, n_particles=n_particles)


class TestSolveMu:
    def test_half_filled_level(self):
        spec = sample_only_spec([[0.37]], [[1.0]], 0.0, 2.0, 0.5)
        assert solve_mu(np.array([[0.5]]), spec) == pytest.approx(0.37, abs=1e-12)

    def test_particle_hole_symmetry(self):
        spec = sample_only_spec([[-1.0, 0], [0, 1.0]], np.zeros((2, 2)), 0.0, 1.5, 1.0)
        assert solve_mu(0.5 * np.eye(2), spec) == pytest.approx(0.0, abs=1e-12)

    def test_two_level_quarter_filling(self):
        # frozen from a scalar bracketed root of
        # 1/(exp(-mu)+1) + 1/(exp(1-mu)+1) = 1/2 at beta_s = 1
        spec = sample_only_spec([[0.0, 0], [0, 1.0]], np.zeros((2, 2)), 0.0, 1.0, 0.5)
        assert solve_mu(0.25 * np.eye(2), spec) == pytest.approx(
            -0.6613981715500932, abs=1e-10)

    def test_trace_is_pinned(self, rng):
        spec = sample_only_spec([[0.2, 0.1], [0.1, -0.4]], np.eye(2), 0.2, 3.0, 1.3)
        gamma = np.diag(rng.uniform(0, 1, 2)).astype(complex)
        mu = solve_mu(gamma, spec)
        evals = np.linalg.eigvalsh(spec.h_s + hartree_potential(gamma, spec))
        from nesslab.model import fermi_dirac
        assert fermi_dirac(evals, spec.beta_s, mu).sum() == pytest.approx(1.3, abs=1e-12)


class TestSampleEquilibrium:
    def test_noninteracting_single_shot(self):
        spec = sample_only_spec([[0.3, 0.05], [0.05, -0.2]], np.eye(2), 0.0, 2.0, 1.0)
        eq = solve_sample_equilibrium(spec)
        assert eq.iterations <= 2
        evals, evecs = np.linalg.eigh(np.asarray(spec.h_s))
        from nesslab.model import fermi_dirac
        ref = (evecs * fermi_dirac(evals, 2.0, eq.mu_s)) @ evecs.conj().T
        np.testing.assert_allclose(eq.rho_s, ref, atol=1e-11)

    def test_single_site_pinned_by_trace(self):
        for lam in (0.0, 0.3, 1.5):
            spec = sample_only_spec([[0.8]], [[2.0]], lam, 2.0, 0.37)
            eq = solve_sample_equilibrium(spec)
            assert eq.rho_s[0, 0] == pytest.approx(0.37, abs=1e-11)

    def test_two_level_against_damped_scf_oracle(self):
        # independent scalar SCF (diagonal problem, mixing 0.5) gives
        # occupations [0.61694719, 0.38305281] and mu = 0.3
        spec = sample_only_spec([[0.0, 0], [0, 0.5]], np.eye(2), 0.1, 2.0, 1.0)
        eq = solve_sample_equilibrium(spec)
        np.testing.assert_allclose(np.diagonal(eq.rho_s).real,
                                   [0.6169471945498705, 0.3830528054501294],
                                   atol=1e-8)
        assert eq.mu_s == pytest.approx(0.3, abs=1e-9)

    def test_invariants_at_fixed_point(self, rng):
        h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        h = (h + h.conj().T) / 2
        nu = rng.uniform(-1, 1, (3, 3))
        spec = sample_only_spec(h, nu, 0.15, 2.5, 1.7)
        eq = solve_sample_equilibrium(spec)
        assert np.trace(eq.rho_s).real == pytest.approx(1.7, abs=1e-10)
        evals = np.linalg.eigvalsh(eq.rho_s)
        assert evals.min() > -1e-12 and evals.max() < 1.0 + 1e-12
        hmat = spec.h_s + hartree_potential(eq.rho_s, spec)
        comm = hmat @ eq.rho_s - eq.rho_s @ hmat
        assert np.abs(comm).max() < 1e-8

    def test_iterates_stay_in_density_set(self):
        # trace pinned and spectrum in [0, 1] along the whole iteration
        spec = sample_only_spec([[0.0, 0.2], [0.2, 0.6]], 2 * np.eye(2), 0.4, 3.0, 0.9)
        eq = solve_sample_equilibrium(spec, tol=1e-13)
        assert np.trace(eq.rho_s).real == pytest.approx(0.9, abs=1e-10)
        evals = np.linalg.eigvalsh(eq.rho_s)
        assert evals.min() > -1e-13 and evals.max() < 1.0

    def test_contraction_scales_linearly_in_lam(self, rng):
        # measured Lipschitz ratio of one sweep grows linearly with lam
        h = np.diag([0.0, 0.4, -0.3])
        nu = np.ones((3, 3)) * 0.4 + 0.6 * np.eye(3)
        lams = np.array([0.01, 0.03, 0.06, 0.1, 0.2])
        ratios = []
        for lam in lams:
            spec = sample_only_spec(h, nu, float(lam), 2.0, 1.5)

            def sweep(gamma):
                mu = solve_mu(gamma, spec)
                hmat = spec.h_s + hartree_potential(gamma, spec)
                evals, evecs = np.linalg.eigh(hmat)
                from nesslab.model import fermi_dirac
                return (evecs * fermi_dirac(evals, spec.beta_s, mu)) @ evecs.conj().T

            worst = 0.0
            for _ in range(5):
                d1 = rng.uniform(0.2, 0.8, 3)
                d2 = rng.uniform(0.2, 0.8, 3)
                g1 = np.diag(1.5 * d1 / d1.sum()).astype(complex)
                g2 = np.diag(1.5 * d2 / d2.sum()).astype(complex)
                num = np.linalg.norm(sweep(g1) - sweep(g2), 2)
                den = np.linalg.norm(g1 - g2, 2)
                worst = max(worst, num / den)
            ratios.append(worst)
        slope = np.polyfit(np.log(lams), np.log(ratios), 1)[0]
        assert slope == pytest.approx(1.0, abs=0.3)
