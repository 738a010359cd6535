import numpy as np
import pytest

from nesslab.exceptions import NonDecayingPropagatorError, SingularSError
from nesslab.greens import (
    dirichlet_green,
    dispersive_constants,
    full_line_green,
    resolvent_H,
    s_matrix,
    s_matrix_batch,
    sample_block_inverse,
    spectral_condition_check,
)
from nesslab.model import CompactVector, SystemSpec

from oracles import chain_green_banded, truncated_resolvent

from dataclasses import replace


def dot_f(E, alpha, tau, t_c):
    """Analytic single-dot Schur scalar."""
    E = np.asarray(E, dtype=float)
    return alpha - E + tau ** 2 * E / t_c ** 2 \
        - 1j * tau ** 2 * np.sqrt(4 * t_c ** 2 - E ** 2) / t_c ** 2


class TestDirichletGreen:
    def test_band_center_values(self):
        assert dirichlet_green(0, 0, 0.0, 1.0) == pytest.approx(1j, abs=1e-15)
        assert dirichlet_green(0, 1, 0.0, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_band_edges(self):
        assert dirichlet_green(0, 0, 2.0, 1.0) == pytest.approx(-1.0, abs=1e-15)
        assert dirichlet_green(0, 0, -2.0, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_against_banded_inversion(self):
        # direct solve of a long truncated chain at matched complex energy
        rng = np.random.default_rng(3)
        for _ in range(6):
            n, m = int(rng.integers(0, 12)), int(rng.integers(0, 12))
            z = complex(rng.uniform(-1.8, 1.8), 4e-5)
            ref = chain_green_banded(n, m, z, 1.0)
            assert dirichlet_green(n, m, z, 1.0) == pytest.approx(ref, abs=2e-4)

    def test_off_site_band_center_vs_inversion(self):
        ref = chain_green_banded(0, 1, 0.0 + 1e-5j, 1.0, L=1_200_000)
        assert dirichlet_green(0, 1, 0.0, 1.0) == pytest.approx(ref, abs=1e-4)

    def test_defect_equation(self):
        rng = np.random.default_rng(5)
        worst = 0.0
        for _ in range(30):
            E = float(rng.uniform(-1.95, 1.95))
            m = int(rng.integers(0, 6))
            G = [dirichlet_green(n, m, E, 1.0) for n in range(10)]
            worst = max(worst, abs(G[1] - E * G[0] - (m == 0)))
            for n in range(1, 8):
                worst = max(worst, abs(G[n + 1] + G[n - 1] - E * G[n] - (n == m)))
        assert worst < 1e-12

    def test_threshold_continuity(self):
        # the limit is linear in theta = arccos(E / 2 t_c); a two-point
        # Richardson step removes that slope and exposes the limit value
        theta = 1e-5
        for sign in (1.0, -1.0):
            g1 = dirichlet_green(2, 5, sign * 2.0 * np.cos(theta), 1.0)
            g2 = dirichlet_green(2, 5, sign * 2.0 * np.cos(theta / 2), 1.0)
            at = dirichlet_green(2, 5, sign * 2.0, 1.0)
            assert abs(2 * g2 - g1 - at) < 1e-8

    def test_real_outside_band(self):
        for E in (2.3, -2.7, 5.0):
            val = dirichlet_green(1, 4, E, 1.0)
            assert abs(val.imag) < 1e-14

    def test_surface_element_identity(self):
        # <0|(D - E - i0)^(-1)|0> = -E/(2 t_c^2) + i sqrt(4 t_c^2 - E^2)/(2 t_c^2)
        E = np.linspace(-1.99, 1.99, 41)
        t_c = 1.3
        vals = dirichlet_green(0, 0, E, t_c)
        ref = -E / (2 * t_c ** 2) + 1j * np.sqrt(4 * t_c ** 2 - E ** 2) / (2 * t_c ** 2)
        np.testing.assert_allclose(vals, ref, atol=1e-13)

    def test_positive_spectral_density(self):
        E = np.linspace(-1.9, 1.9, 31)
        for n in (0, 2, 7):
            assert np.all(dirichlet_green(n, n, E, 1.0).imag >= 0)


class TestFullLineGreen:
    def test_even_in_offset(self):
        z = 1.1 + 0.3j
        assert full_line_green(4, z, 1.0) == pytest.approx(full_line_green(-4, z, 1.0))

    def test_real_value_outside_band(self):
        val = full_line_green(0, 3.0, 1.0)
        assert val == pytest.approx(-1.0 / np.sqrt(5.0), abs=1e-14)

    def test_rejects_band_cut(self):
        with pytest.raises(ValueError):
            full_line_green(0, 1.0, 1.0)

    def test_image_formula_at_complex_energy(self):
        z = 1.2 + 0.01j
        n, m = 2, 5
        img = full_line_green(n - m, z, 1.0) - full_line_green(n + m + 2, z, 1.0)
        assert abs(dirichlet_green(n, m, z, 1.0) - img) < 1e-10

    def test_image_formula_outside_band(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            n, m = int(rng.integers(0, 15)), int(rng.integers(0, 15))
            E = float(rng.choice([-1, 1]) * rng.uniform(2.01, 4.0))
            img = full_line_green(n - m, E, 1.0) - full_line_green(n + m + 2, E, 1.0)
            assert abs(dirichlet_green(n, m, E, 1.0) - img) < 1e-10


class TestSMatrix:
    def test_single_dot_analytic(self, dot):
        E = np.linspace(-1.999, 1.999, 101)
        smat, _ = s_matrix_batch(E, dot)
        np.testing.assert_allclose(smat[:, 0, 0], dot_f(E, 0.5, 0.2, 1.0), atol=1e-13)

    def test_decoupled(self):
        spec = SystemSpec(t_c=1.0, tau=0.0, N=2, h_s=[[0.4, 0.1], [0.1, -0.3]],
                          nu=np.zeros((2, 2)), lam=0.0, S1=[1, 0], S2=[0, 1],
                          L1_support=[(0, 1.0)], L2_support=[(0, 1.0)],
                          n_particles=1.0)
        se = s_matrix(0.7, spec)
        np.testing.assert_allclose(se.matrix, spec.h_s - 0.7 * np.eye(2), atol=1e-15)

    def test_extra_potential_folds_into_sample_block(self, dot):
        extra = np.array([[0.2]])
        a = s_matrix(0.3, dot, extra_potential=extra).matrix
        shifted = replace(dot, h_s=dot.h_s + extra)
        b = s_matrix(0.3, shifted).matrix
        np.testing.assert_allclose(a, b, atol=1e-15)

    def test_singular_detection(self):
        spec = SystemSpec(t_c=1.0, tau=0.0, N=1, h_s=[[0.3]], nu=[[1.0]], lam=0.0,
                          S1=[1.0], S2=[1.0], L1_support=[(0, 1.0)],
                          L2_support=[(0, 1.0)], n_particles=0.5)
        with pytest.raises(SingularSError):
            sample_block_inverse(np.array([0.3]), spec)

    def test_sqrt_expansion_near_threshold(self, dot):
        # S(E)^(-1) is analytic in kappa = sqrt(2 t_c - E): a cubic fit in
        # kappa halves its residual by ~2^4 when the window is halved
        def fit_residual(kmax):
            kappa = np.linspace(0.0, kmax, 60)[1:]
            E = 2.0 - kappa ** 2
            vals = 1.0 / dot_f(E, 0.5, 0.2, 1.0)
            V = np.vander(kappa, 4, increasing=True)
            res = vals - V @ np.linalg.lstsq(V, vals, rcond=None)[0]
            return np.abs(res).max()

        assert fit_residual(0.1) / fit_residual(0.2) < 0.15


class TestResolvent:
    def test_single_dot_inverse_f(self, dot):
        zeta = CompactVector.sample_basis(0, 1)
        for E in (-1.2, 0.0, 0.7):
            val = resolvent_H(E, dot, zeta, zeta)
            assert val == pytest.approx(1.0 / complex(dot_f(E, 0.5, 0.2, 1.0)), abs=1e-13)

    def test_decoupled_reduces_to_lead_green(self, dot):
        spec = replace(dot, tau=0.0)
        f = CompactVector(lead1=[(1, 1.0)])
        g = CompactVector(lead1=[(4, 1.0)])
        val = resolvent_H(0.5, spec, f, g)
        assert val == pytest.approx(complex(dirichlet_green(1, 4, 0.5, 1.0)), abs=1e-14)

    def test_against_truncated_lattice(self, small_random_spec):
        spec = small_random_spec
        z = 0.3 + 1e-4j
        f = CompactVector(lead1=[(0, 1.0), (2, 0.5j)],
                          sample=np.ones(spec.N) / np.sqrt(spec.N))
        g = CompactVector(lead2=[(1, 1.0)], sample=np.linspace(0.2, 0.5, spec.N))
        ref = truncated_resolvent(spec, z, f, g, L=200_000)
        val = resolvent_H(z, spec, f, g)
        assert val == pytest.approx(ref, abs=2e-6)

    def test_hermitian_symmetry_via_oracle(self, small_random_spec):
        # <f|(H-E-i0)^(-1)|g> equals conj(<g|(H-E+i0)^(-1)|f>)
        spec = small_random_spec
        z = -0.4 + 1e-4j
        f = CompactVector(lead1=[(0, 1.0)])
        g = CompactVector(sample=np.ones(spec.N))
        swapped = truncated_resolvent(spec, np.conj(z), g, f, L=200_000)
        assert resolvent_H(z, spec, f, g) == pytest.approx(np.conj(swapped), abs=2e-6)


class TestSpectralCondition:
    def test_single_dot_margin(self, dot):
        report = spectral_condition_check(dot)
        bound = 0.2 ** 2 * np.sqrt(4 - 0.5 ** 2)
        assert report.min_singular >= bound * 0.9
        assert abs(report.argmin_E - 0.5) < 0.3

    def test_out_of_band_level_flagged(self, dot):
        spec = replace(dot, h_s=np.array([[3.0]]), tau=0.1)
        report = spectral_condition_check(spec, e_margin=1.5)
        assert report.min_singular < 1e-3
        assert abs(report.argmin_E - 3.0 / (1 - 0.01)) < 0.05

    def test_two_levels_positive(self):
        spec = SystemSpec(t_c=1.0, tau=0.5, N=2, h_s=[[0.4, 0.0], [0.0, -0.6]],
                          nu=np.eye(2), lam=0.0, S1=[0.8, 0.6], S2=[0.6, -0.8],
                          L1_support=[(0, 1.0)], L2_support=[(0, 1.0)],
                          n_particles=1.0)
        assert spectral_condition_check(spec).min_singular > 0.05


class TestDispersiveConstants:
    def test_kernel_scaling(self, dot):
        a = dispersive_constants(dot, T_max=60.0)
        b = dispersive_constants(replace(dot, nu=2.0 * dot.nu), T_max=60.0)
        assert a.M == pytest.approx(b.M, rel=1e-12)
        assert b.lambda0 == pytest.approx(a.lambda0 / 2.0, rel=1e-12)

    def test_bounded_scaled_amplitude(self, dot):
        consts = dispersive_constants(dot, T_max=120.0)
        assert np.isfinite(consts.M) and consts.M > 0
        assert consts.envelope_slope <= 0.3
        assert consts.sum_rule_defect < 1e-10

    def test_decoupled_dot_rejected(self, dot):
        with pytest.raises(NonDecayingPropagatorError):
            dispersive_constants(replace(dot, tau=1e-6), T_max=60.0)
