import numpy as np
import pytest

from dataclasses import replace

from nesslab.dynamics import (
    evolve_liouville,
    initial_state_truncated,
    picard_propagator,
    picard_window_width,
    recurrence_horizon,
    steady_diagnostics,
)
from nesslab.equilibrium import solve_sample_equilibrium
from nesslab.exceptions import NoPlateauError, RecurrenceHorizonWarning
from nesslab.model import assemble_truncated
from nesslab.ness import solve_steady_state

from oracles import exact_unitary_evolution


RHO_HALF = np.array([[0.5]], dtype=complex)


class TestInitialState:
    def test_zero_temperature_rank(self, broad):
        spec = replace(broad, mu1=0.0, mu2=0.0)
        L = 40
        rho = initial_state_truncated(spec, L, RHO_HALF)
        rank = int(round(np.trace(rho[:L, :L]).real))
        assert rank == L // 2
        evals = np.linalg.eigvalsh(rho[:L, :L])
        np.testing.assert_allclose(np.sort(evals)[-rank:], 1.0, atol=1e-12)

    def test_infinite_temperature_limit(self, broad):
        spec = replace(broad, beta1=1e-9, beta2=1e-9)
        rho = initial_state_truncated(spec, 12, RHO_HALF)
        np.testing.assert_allclose(rho[:12, :12], 0.5 * np.eye(12), atol=1e-9)

    def test_sample_block_carries_particle_number(self, broad):
        eq = solve_sample_equilibrium(broad)
        rho = initial_state_truncated(broad, 10, eq.rho_s)
        assert np.trace(rho[20:, 20:]).real == pytest.approx(broad.n_particles,
                                                             abs=1e-10)

    def test_rejects_non_density(self, broad):
        with pytest.raises(ValueError):
            initial_state_truncated(broad, 10, np.array([[1.7]]))


class TestEvolveLiouville:
    def test_stationary_when_fully_decoupled(self, broad):
        spec = replace(broad, tau=0.0, lam=0.0)
        rho_i = initial_state_truncated(spec, 16, RHO_HALF)
        traj = evolve_liouville(spec, 16, rho_i, t_end=3.0, dt=0.05)
        assert np.abs(traj.final.rho - rho_i).max() < 1e-12

    def test_linear_case_against_eigensolver(self, broad):
        spec = replace(broad, lam=0.0)
        L, t_end = 90, 18.0
        rho_i = initial_state_truncated(spec, L, RHO_HALF)
        traj = evolve_liouville(spec, L, rho_i, t_end, dt=0.01)
        H = assemble_truncated(spec, L).matrix
        ref = exact_unitary_evolution(H, rho_i, t_end)
        assert np.abs(traj.final.rho - ref).max() < 1e-7

    def test_trace_hermiticity_purity(self, broad):
        L = 40
        rho_i = initial_state_truncated(broad, L, RHO_HALF)
        traj = evolve_liouville(broad, L, rho_i, t_end=10.0, dt=0.01)
        assert traj.trace_defects.max() < 1e-8
        assert traj.herm_defects.max() < 1e-12
        evals = np.linalg.eigvalsh(traj.final.rho)
        assert evals.min() > -1e-8 and evals.max() < 1 + 1e-8

    def test_energy_conserved_without_mean_field(self, broad):
        spec = replace(broad, lam=0.0)
        L = 40
        rho_i = initial_state_truncated(spec, L, RHO_HALF)
        traj = evolve_liouville(spec, L, rho_i, t_end=8.0, dt=0.02)
        assert np.abs(traj.energies - traj.energies[0]).max() < 1e-7

    def test_recurrence_warning(self, broad):
        rho_i = initial_state_truncated(broad, 14, RHO_HALF)
        with pytest.warns(RecurrenceHorizonWarning):
            evolve_liouville(broad, 14, rho_i, t_end=8.0, dt=0.1)
        assert recurrence_horizon(14, 1.0) == pytest.approx(5.6)

    def test_truncated_propagator_decay(self, broad):
        # |<dot| exp(i t H_trunc) |dot>| t^1.5 stays bounded before recurrence
        spec = replace(broad, lam=0.0)
        L = 240
        H = assemble_truncated(spec, L).matrix
        evals, evecs = np.linalg.eigh(H)
        comp = np.abs(evecs[2 * L, :]) ** 2
        times = np.arange(1.0, 0.8 * L / 2.0, 0.5)
        amp = np.abs((comp[None, :] * np.exp(1j * np.outer(times, evals))).sum(axis=1))
        scaled = times ** 1.5 * amp
        assert scaled[times > times[-1] / 3].max() <= 2.0 * scaled.max()
        assert np.isfinite(scaled).all()


class TestPicard:
    def test_linear_window_matches_exponential(self, broad):
        from scipy.linalg import expm
        spec = replace(broad, lam=0.0)
        L = 16
        rho_i = initial_state_truncated(spec, L, RHO_HALF)
        state = picard_propagator(spec, L, rho_i, t_end=0.1)
        ref = expm(-1j * state.t * assemble_truncated(spec, L).matrix)
        assert np.abs(state.U - ref).max() < 1e-9

    def test_identity_at_time_zero(self, broad):
        L = 12
        rho_i = initial_state_truncated(broad, L, RHO_HALF)
        state = picard_propagator(broad, L, rho_i, t_end=0.0)
        np.testing.assert_array_equal(state.U, np.eye(2 * L + broad.N))

    def test_unitarity_and_rk4_agreement(self, broad):
        L = 16
        rho_i = initial_state_truncated(broad, L, RHO_HALF)
        Hn = float(np.abs(np.linalg.eigvalsh(
            assemble_truncated(broad, L).matrix)).max())
        t_end = 3 * picard_window_width(broad, Hn)
        state = picard_propagator(broad, L, rho_i, t_end=t_end)
        assert state.unitarity_defect < 1e-10
        traj = evolve_liouville(broad, L, rho_i, t_end, dt=t_end / 2000)
        assert np.abs(state.rho - traj.final.rho).max() < 1e-7

    def test_window_width_formula(self, broad):
        w = picard_window_width(broad, 2.0)
        lip = 2.0 + 4 * broad.lam * broad.nu_norm1 * 2.25
        mx = 1.5 * (2.0 + broad.lam * broad.nu_norm1 * 2.25)
        assert w == pytest.approx(0.95 * min(1 / lip, 1 / (2 * mx)))


class TestSteadyDiagnostics:
    def test_plateau_comparison_small_scale(self, broad):
        spec = replace(broad, lam=0.0)
        result = solve_steady_state(spec)
        L, t_end = 180, 40.0
        rho_i = initial_state_truncated(spec, L, RHO_HALF)
        traj = evolve_liouville(spec, L, rho_i, t_end, dt=0.05)
        comp = steady_diagnostics(traj, result, drift_tol=2e-2)
        assert comp.current_rel_dev < 0.05
        assert comp.occupation_dev < 5e-3

    def test_no_plateau_raises(self, broad):
        result = solve_steady_state(replace(broad, lam=0.0))
        spec = replace(broad, lam=0.0)
        rho_i = initial_state_truncated(spec, 60, RHO_HALF)
        traj = evolve_liouville(spec, 60, rho_i, t_end=6.0, dt=0.05)
        with pytest.raises(NoPlateauError):
            steady_diagnostics(traj, result, drift_tol=1e-6)
