import numpy as np
import pytest

from nesslab.model import (
    CompactVector,
    SystemSpec,
    assemble_truncated,
    fermi_dirac,
    hartree_potential,
    is_density_matrix,
)


def make_spec(**over):
    base = dict(t_c=1.0, tau=0.3, N=2, h_s=[[0.1, 0.05], [0.05, -0.2]],
                nu=[[1.0, 0.2], [0.2, 1.0]], lam=0.1,
                S1=[1.0, 0.0], S2=[0.0, 1.0],
                L1_support=[(0, 1.0)], L2_support=[(0, 1.0)],
                beta1=2.0, beta2=2.0, mu1=0.0, mu2=0.0,
                beta_s=2.0, n_particles=1.0)
    base.update(over)
    return SystemSpec(**base)


class TestFermiDirac:
    def test_midpoint(self):
        assert fermi_dirac(0.3, 5.0, 0.3) == pytest.approx(0.5)

    def test_zero_temperature_indicator(self):
        assert fermi_dirac(-0.1, np.inf, 0.0) == 1.0
        assert fermi_dirac(0.1, np.inf, 0.0) == 0.0
        assert fermi_dirac(0.0, np.inf, 0.0) == 0.5

    def test_log3_value(self):
        assert fermi_dirac(np.log(3.0), 1.0, 0.0) == pytest.approx(0.25, abs=1e-15)

    def test_monotone_and_bounded(self):
        E = np.linspace(-50, 50, 3001)
        f = fermi_dirac(E, 3.7, 0.4)
        assert np.all(np.diff(f) <= 0)
        assert f.min() >= 0.0 and f.max() <= 1.0

    def test_overflow_safe(self):
        assert fermi_dirac(1e6, 1e6, 0.0) == 0.0
        assert fermi_dirac(-1e6, 1e6, 0.0) == 1.0

    def test_invalid_beta(self):
        with pytest.raises(ValueError):
            fermi_dirac(0.0, 0.0, 0.0)


class TestHartreePotential:
    def test_lambda_zero_kills_potential(self, rng):
        spec = make_spec(lam=0.0)
        gamma = rng.uniform(0, 1, (2, 2))
        gamma = (gamma + gamma.T) / 2
        assert np.all(hartree_potential(gamma, spec) == 0.0)

    def test_single_site_value(self):
        spec = make_spec(N=1, h_s=[[0.0]], nu=[[2.0]], lam=0.1, S1=[1.0],
                         S2=[1.0], n_particles=0.5)
        v = hartree_potential(np.array([[0.5]]), spec)
        assert v == pytest.approx(np.array([[0.1]]))

    def test_linearity(self, rng):
        spec = make_spec()
        g1 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        g1 = g1 + g1.conj().T
        g2 = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        g2 = g2 + g2.conj().T
        lhs = hartree_potential(g1 + g2, spec)
        rhs = hartree_potential(g1, spec) + hartree_potential(g2, spec)
        np.testing.assert_allclose(lhs, rhs, atol=1e-14)

    def test_norm_bound(self, rng):
        # operator norm of the potential is at most lam * |nu|_1 * |rho|
        spec = make_spec()
        for _ in range(20):
            a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            rho = a @ a.conj().T
            rho /= max(1.0, np.linalg.norm(rho, 2))
            v = hartree_potential(rho, spec)
            assert np.linalg.norm(v, 2) <= spec.lam * spec.nu_norm1 * np.linalg.norm(rho, 2) + 1e-14

    def test_real_diagonal_output(self, rng):
        spec = make_spec()
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = a @ a.conj().T
        v = hartree_potential(rho, spec)
        assert np.all(v == np.diag(np.diagonal(v).real))

    def test_rejects_imaginary_diagonal(self):
        spec = make_spec()
        bad = np.array([[0.5 + 1e-6j, 0], [0, 0.5]])
        with pytest.raises(ValueError):
            hartree_potential(bad, spec)

    def test_dimension_mismatch(self):
        spec = make_spec()
        with pytest.raises(ValueError):
            hartree_potential(np.eye(3), spec)


class TestSystemSpec:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            make_spec(h_s=[[0.0, 1.0], [0.0, 0.0]])

    def test_rejects_bad_particle_number(self):
        with pytest.raises(ValueError):
            make_spec(n_particles=2.5)
        with pytest.raises(ValueError):
            make_spec(n_particles=0.0)

    def test_rejects_zero_coupling_vector(self):
        with pytest.raises(ValueError):
            make_spec(S1=[0.0, 0.0])
        with pytest.raises(ValueError):
            make_spec(L1_support=[(0, 0.0)])

    def test_rejects_negative_parameters(self):
        with pytest.raises(ValueError):
            make_spec(t_c=-1.0)
        with pytest.raises(ValueError):
            make_spec(lam=-0.1)
        with pytest.raises(ValueError):
            make_spec(tau=-0.5)

    def test_immutable_arrays(self):
        spec = make_spec()
        with pytest.raises(ValueError):
            spec.h_s[0, 0] = 9.0


class TestAssembleTruncated:
    def test_decoupled_is_block_diagonal(self):
        spec = make_spec(tau=0.0)
        op = assemble_truncated(spec, 8)
        H = op.matrix
        assert np.all(H[:16, 16:] == 0) and np.all(H[16:, :16] == 0)
        assert np.all(H[:8, 8:16] == 0)

    def test_lead_block_spectrum(self):
        # hard-wall chain eigenvalues 2 t_c cos(k pi / (L+1))
        spec = make_spec(tau=0.0)
        L = 40
        H = assemble_truncated(spec, L).matrix
        evals = np.sort(np.linalg.eigvalsh(H[:L, :L]))
        k = np.arange(1, L + 1)
        expected = np.sort(2.0 * spec.t_c * np.cos(k * np.pi / (L + 1)))
        np.testing.assert_allclose(evals, expected, atol=1e-12)
        assert evals.min() > -2 * spec.t_c and evals.max() < 2 * spec.t_c

    def test_seven_by_seven_coupling_entries(self):
        spec = make_spec(N=1, h_s=[[0.3]], nu=[[1.0]], S1=[1.0], S2=[1.0],
                         n_particles=0.5, tau=0.25)
        op = assemble_truncated(spec, 3)
        H = op.matrix
        assert H.shape == (7, 7)
        assert H[op.index("lead1", 0), op.index("sample", 0)] == pytest.approx(0.25)
        assert H[op.index("lead2", 0), op.index("sample", 0)] == pytest.approx(0.25)
        assert H[op.index("sample", 0), op.index("sample", 0)] == pytest.approx(0.3)
        assert np.abs(H - H.conj().T).max() == 0.0

    def test_hermitian_with_complex_amplitudes(self):
        spec = make_spec(S1=[0.3 + 0.4j, 0.1], L1_support=[(0, 0.6), (2, 0.2j)])
        H = assemble_truncated(spec, 6).matrix
        assert np.abs(H - H.conj().T).max() < 1e-15

    def test_mean_field_shift(self):
        spec = make_spec()
        gamma = np.diag([0.7, 0.3]).astype(complex)
        H0 = assemble_truncated(spec, 6).matrix
        H1 = assemble_truncated(spec, 6, gamma_opt=gamma).matrix
        from nesslab.model import hartree_potential
        np.testing.assert_allclose(H1[12:, 12:] - H0[12:, 12:],
                                   hartree_potential(gamma, spec), atol=1e-15)

    def test_too_small_truncation(self):
        spec = make_spec(L1_support=[(5, 1.0)])
        with pytest.raises(ValueError):
            assemble_truncated(spec, 6)


class TestCompactVector:
    def test_norm(self):
        v = CompactVector(lead1=[(0, 1.0), (3, 0.5)], sample=np.array([1j, 0]))
        assert v.norm2 == pytest.approx(1 + 0.25 + 1)

    def test_embed(self):
        spec = make_spec()
        op = assemble_truncated(spec, 5)
        v = CompactVector(lead2=[(1, 2.0)], sample=np.array([0, 1.0]))
        vec = op.embed(v)
        assert vec[op.index("lead2", 1)] == 2.0
        assert vec[op.index("sample", 1)] == 1.0
        assert np.count_nonzero(vec) == 2

    def test_duplicate_site_rejected(self):
        with pytest.raises(ValueError):
            CompactVector(lead1=[(0, 1.0), (0, 2.0)])


def test_density_matrix_predicate(rng):
    a = rng.normal(size=(3, 3))
    rho = a @ a.T
    rho /= np.trace(rho)
    assert is_density_matrix(rho, trace=1.0)
    assert not is_density_matrix(rho + 0.1 * np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]))
