"""Tests for weighted subspace fitting and the variable-projection solver."""
import dataclasses
import logging

import numpy as np
import pytest

from tdfit import fitting
from tdfit.errors import (
    ArgumentError,
    DegenerateDataError,
    InitializerFailedError,
    PeakDeficitError,
    SingularManifoldError,
)
from tdfit.fitting import (
    SolverOptions,
    build_blocks,
    estimate_delays,
    linear_coeffs,
    recover_gains,
    varpro_solve,
    vp_jacobian,
    wsf_cost,
)
from tdfit.hankel import signal_subspace
from tdfit.model import BandPlan, MultipathChannel, vandermonde

from .conftest import BANDWIDTH, T_S


@pytest.fixture
def noiseless_problem(small_plan, two_paths, make_estimates):
    estimates = make_estimates(two_paths, small_plan)
    basis = signal_subspace(estimates, 2, q_cols=6)
    return build_blocks(basis, estimates[0].sigmas), estimates


@pytest.fixture
def noisy_problem(small_plan, two_paths, make_estimates):
    estimates = make_estimates(two_paths, small_plan, sigmas=[0.05, 0.1, 0.2], snapshots=4, seed=3)
    basis = signal_subspace(estimates, 2, q_cols=6)
    return build_blocks(basis, estimates[0].sigmas), estimates


class TestBuildBlocks:
    def test_selection_rows(self, small_plan, two_paths, make_estimates):
        """Test the selection blocks have the expected rows."""
        basis = signal_subspace(make_estimates(two_paths, small_plan), 2, q_cols=13)
        prob = build_blocks(basis, [0.0] * 3)
        assert basis.p_rows == 4
        assert prob.script_u.shape == (18, 2)
        u0 = basis.band_block(0)
        np.testing.assert_array_equal(prob.script_u[0:3], u0[0:3])
        np.testing.assert_array_equal(prob.script_u[3:6], u0[1:4])
        np.testing.assert_array_equal(prob.script_u[6:9], basis.band_block(1)[0:3])

    def test_uniform_noise_gives_constant_weights(self, noiseless_problem):
        """Test uniform noise gives constant weights."""
        prob, estimates = noiseless_problem
        basis = signal_subspace(estimates, 2, q_cols=6)
        weights = build_blocks(basis, [0.3, 0.3, 0.3]).weights
        np.testing.assert_allclose(weights, weights[0])
        np.testing.assert_array_equal(prob.weights, 1.0)

    def test_weights_follow_band_noise(self, noisy_problem):
        """Test the weights follow each band's noise level."""
        prob, _ = noisy_problem
        per_block = 2 * (prob.p_rows - 1)
        np.testing.assert_allclose(prob.weights[:per_block], 1 / 0.05**2)
        np.testing.assert_allclose(prob.weights[-per_block:], 1 / 0.2**2)

    def test_mixed_zero_sigma_rejected(self, noiseless_problem):
        """Test a mix of zero and nonzero noise levels is rejected."""
        _, estimates = noiseless_problem
        basis = signal_subspace(estimates, 2, q_cols=6)
        with pytest.raises(ArgumentError):
            build_blocks(basis, [0.0, 0.1, 0.1])

    def test_unweighted(self, noisy_problem):
        """Test unweighted blocks have unit weights."""
        prob, estimates = noisy_problem
        basis = signal_subspace(estimates, 2, q_cols=6)
        np.testing.assert_array_equal(build_blocks(basis, [0.05, 0.1, 0.2], False).weights, 1.0)

    def test_exponents(self, noiseless_problem):
        """Test the exponents follow the band offsets."""
        prob, _ = noiseless_problem
        e = prob.exponents
        assert e.size == prob.script_u.shape[0]
        assert e[:10].tolist() == list(range(10))
        assert e[10:20].tolist() == list(range(1, 11))
        assert e[20] == 16


class TestWsfCost:
    def test_shift_relations_hold_on_noiseless_data(self, noiseless_problem, two_paths):
        """Test the cost vanishes at the truth on noiseless data."""
        prob, _ = noiseless_problem
        cost, _ = wsf_cost(two_paths.delays, prob)
        assert cost < 1e-18

    def test_linear_coeffs_map_basis_to_manifold(self, noiseless_problem, two_paths):
        """Test the linear coefficients map U onto the manifold."""
        prob, _ = noiseless_problem
        c = linear_coeffs(two_paths.delays, prob)
        phis = np.exp(-1j * prob.plan.subcarrier_spacing * two_paths.delays)
        m2 = vandermonde(phis, prob.p_rows - 1)
        # script_u = A C, so the first block satisfies U_{0,1} = M'' C
        np.testing.assert_allclose(prob.script_u[: prob.p_rows - 1], m2 @ c, atol=1e-10)

    def test_perturbation_increases_cost(self, small_plan, one_path, make_estimates):
        """Test moving away from the truth raises the cost."""
        basis = signal_subspace(make_estimates(one_path, small_plan), 1, q_cols=6)
        prob = build_blocks(basis, [0.0] * 3)
        at_truth, _ = wsf_cost(one_path.delays, prob)
        moved, _ = wsf_cost(one_path.delays + 0.5 * T_S, prob)
        assert moved > at_truth

    def test_weight_scaling_scales_cost(self, noisy_problem, two_paths):
        """Test scaling the weights scales the cost."""
        prob, _ = noisy_problem
        scaled = dataclasses.replace(prob, weights=3.0 * prob.weights)
        delays = two_paths.delays + 0.1 * T_S
        np.testing.assert_allclose(wsf_cost(delays, scaled)[0], 3.0 * wsf_cost(delays, prob)[0])

    def test_coinciding_delays(self, noiseless_problem):
        """Test coinciding delays give a singular manifold."""
        prob, _ = noiseless_problem
        with pytest.raises(SingularManifoldError):
            wsf_cost([3 * T_S, 3 * T_S], prob)

    def test_wrong_delay_count(self, noiseless_problem):
        """Test a delay vector of the wrong length is rejected."""
        prob, _ = noiseless_problem
        with pytest.raises(ArgumentError):
            wsf_cost([T_S], prob)

    def test_residual_is_flat_vector(self, noisy_problem, two_paths):
        """Test the residual is a vector matching the Jacobian rows and the cost."""
        prob, _ = noisy_problem
        delays = two_paths.delays + 0.05 * T_S
        cost, residual = wsf_cost(delays, prob)
        assert residual.ndim == 1
        assert residual.size == prob.script_u.size
        assert residual.size == vp_jacobian(delays, prob).shape[0]
        assert np.vdot(residual, residual).real == pytest.approx(cost)


def _finite_difference(prob, delays, h=1e-6 * T_S):
    columns = []
    for k in range(len(delays)):
        up, down = np.array(delays, float), np.array(delays, float)
        up[k] += h
        down[k] -= h
        r_up = wsf_cost(up, prob)[1]
        r_down = wsf_cost(down, prob)[1]
        columns.append((r_up - r_down) / (2 * h))
    return np.stack(columns, axis=1)


class TestJacobian:
    def test_exact_matches_finite_differences(self, noisy_problem, two_paths):
        """Test the exact Jacobian against finite differences."""
        prob, _ = noisy_problem
        delays = two_paths.delays + np.array([0.07, -0.04]) * T_S
        fd = _finite_difference(prob, delays)
        jac = vp_jacobian(delays, prob, exact=True)
        assert np.linalg.norm(jac - fd) <= 1e-6 * np.linalg.norm(fd)

    def test_kaufman_exact_at_zero_residual(self, noiseless_problem, two_paths):
        """Test the Kaufman Jacobian is exact at zero residual."""
        prob, _ = noiseless_problem
        fd = _finite_difference(prob, two_paths.delays)
        jac = vp_jacobian(two_paths.delays, prob, exact=False)
        assert np.linalg.norm(jac - fd) <= 1e-6 * np.linalg.norm(fd)

    def test_kaufman_is_approximation_away_from_zero_residual(self, noisy_problem, two_paths):
        """Test the Kaufman Jacobian differs from the exact one under noise."""
        prob, _ = noisy_problem
        delays = two_paths.delays + 0.2 * T_S
        exact = vp_jacobian(delays, prob, exact=True)
        kaufman = vp_jacobian(delays, prob, exact=False)
        assert not np.allclose(exact, kaufman)


class TestVarproSolve:
    def test_init_at_truth(self, noiseless_problem, two_paths):
        """Test a start at the truth converges at once."""
        prob, estimates = noiseless_problem
        fit = varpro_solve(prob, two_paths.delays, estimates=estimates)
        assert fit.converged
        assert fit.iterations <= 2
        assert fit.cost < 1e-18

    def test_recovers_from_perturbed_init(self, single_band_plan, make_estimates):
        """Test a perturbed start converges to the truth."""
        ch = MultipathChannel(gains=[1.0, 0.7j], delays=[2.0 * T_S, 6.0 * T_S])
        estimates = make_estimates(ch, single_band_plan)
        prob = build_blocks(signal_subspace(estimates, 2), estimates[0].sigmas)
        fit = varpro_solve(prob, ch.delays + 0.3 * T_S, estimates=estimates)
        assert fit.converged
        np.testing.assert_allclose(fit.delays, ch.delays, atol=1e-9 * T_S)

    def test_recovers_across_bands(self, small_plan, two_paths, make_estimates):
        """Test a multiband fit recovers the delays."""
        estimates = make_estimates(two_paths, small_plan)
        prob = build_blocks(signal_subspace(estimates, 2), estimates[0].sigmas)
        fit = varpro_solve(prob, two_paths.delays + np.array([0.03, -0.03]) * T_S)
        np.testing.assert_allclose(fit.delays, two_paths.delays, atol=1e-9 * T_S)
        assert np.all(np.isnan(fit.gains))

    def test_weight_scaling_leaves_trajectory_unchanged(self, noisy_problem, two_paths):
        """Test scaling the weights leaves the iterates unchanged."""
        prob, _ = noisy_problem
        scaled = dataclasses.replace(prob, weights=4.0 * prob.weights)
        init = two_paths.delays + np.array([0.1, -0.1]) * T_S
        a = varpro_solve(prob, init)
        b = varpro_solve(scaled, init)
        np.testing.assert_allclose(a.delays, b.delays, rtol=0, atol=1e-12 * T_S)
        assert a.iterations == b.iterations
        assert b.cost == pytest.approx(4.0 * a.cost, rel=1e-9)

    def test_exact_jacobian_option(self, noisy_problem, two_paths):
        """Test the exact Jacobian reaches the same fit."""
        prob, _ = noisy_problem
        init = two_paths.delays + 0.05 * T_S
        kaufman = varpro_solve(prob, init)
        exact = varpro_solve(prob, init, SolverOptions(jacobian="exact"))
        np.testing.assert_allclose(kaufman.delays, exact.delays, atol=1e-8 * T_S)

    def test_iteration_cap(self, noisy_problem, two_paths):
        """Test the iteration cap stops the solver."""
        prob, _ = noisy_problem
        fit = varpro_solve(prob, two_paths.delays + 0.05 * T_S, SolverOptions(max_iterations=1))
        assert fit.iterations <= 1
        assert not fit.converged

    def test_delays_sorted(self, noiseless_problem, two_paths):
        """Test fitted delays come out sorted."""
        prob, _ = noiseless_problem
        fit = varpro_solve(prob, two_paths.delays[::-1] + 0.01 * T_S)
        assert np.all(np.diff(fit.delays) > 0)

    def test_bad_options(self):
        """Test invalid solver options are rejected."""
        with pytest.raises(ArgumentError):
            SolverOptions(jacobian="newton")
        with pytest.raises(ArgumentError):
            SolverOptions(damping=0.0)


class TestRecoverGains:
    def test_noiseless_gains(self, small_plan, two_paths, make_estimates):
        """Test noiseless gains are recovered."""
        estimates = make_estimates(two_paths, small_plan)
        gains = recover_gains(two_paths.delays, estimates)
        np.testing.assert_allclose(gains, two_paths.gains, rtol=1e-10)

    def test_noisy_gains_close(self, small_plan, two_paths, make_estimates):
        """Test noisy gains land close to the truth."""
        estimates = make_estimates(two_paths, small_plan, sigmas=[0.01] * 3, snapshots=5)
        gains = recover_gains(two_paths.delays, estimates)
        np.testing.assert_allclose(gains, two_paths.gains, atol=0.02)


class TestEstimateDelays:
    def test_noiseless_pipeline(self, small_plan, two_paths, make_estimates):
        """Test the full pipeline is exact on noiseless data."""
        fit = estimate_delays(make_estimates(two_paths, small_plan), 2)
        np.testing.assert_allclose(fit.delays, two_paths.delays, atol=1e-9 * T_S)
        np.testing.assert_allclose(fit.gains, two_paths.gains, rtol=1e-8)

    def test_weighted_equals_unweighted_for_uniform_noise(
        self, small_plan, two_paths, make_estimates
    ):
        """Test weighting changes nothing under uniform noise."""
        estimates = make_estimates(two_paths, small_plan, sigmas=[0.25] * 3, snapshots=4, seed=9)
        weighted = estimate_delays(estimates, 2, weighted=True)
        unweighted = estimate_delays(estimates, 2, weighted=False)
        np.testing.assert_allclose(weighted.delays, unweighted.delays, atol=1e-10 * T_S)

    def test_random_instances_recovered_exactly(self, desk_plan, make_estimates):
        """Noiseless K = 1..3 instances with separation >= 0.1 T_s."""
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(50):
            k = int(rng.integers(1, 4))
            while True:
                delays = np.sort(rng.uniform(1.0, 60.0, k))
                if k == 1 or np.min(np.diff(delays)) >= 0.1:
                    break
            gains = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2)
            ch = MultipathChannel(gains=gains, delays=delays * T_S)
            fit = estimate_delays(make_estimates(ch, desk_plan), k)
            worst = max(worst, np.max(np.abs(fit.delays - ch.delays)) / T_S)
        assert worst < 1e-9

    def test_more_paths_than_rank(self, small_plan, one_path, make_estimates):
        """Test asking for more paths than the data rank raises."""
        with pytest.raises(DegenerateDataError):
            estimate_delays(make_estimates(one_path, small_plan), 2)

    def test_falls_back_to_music(self, small_plan, two_paths, make_estimates, monkeypatch, caplog):
        """Test a failed initializer falls back to MI-MUSIC."""
        def failing(*args, **kwargs):
            raise InitializerFailedError("pairing matrix is ill-conditioned")

        monkeypatch.setattr(fitting, "init_multiresolution", failing)
        caplog.set_level(logging.WARNING, logger="tdfit")
        fit = estimate_delays(make_estimates(two_paths, small_plan), 2)
        assert "MI-MUSIC" in caplog.text
        np.testing.assert_allclose(fit.delays, two_paths.delays, atol=1e-9 * T_S)

    def test_wrong_wrap_start_is_moved(
        self, small_plan, two_paths, make_estimates, monkeypatch, caplog
    ):
        """Test a start one fine-stage period off is moved back before solving."""
        # fine-stage period on this plan: N * T_s / n_{L-1} = 16 / 40 T_s
        off_by_one = two_paths.delays + np.array([0.4 * T_S, 0.0])

        def no_peaks(*args, **kwargs):
            raise PeakDeficitError("no peaks")

        monkeypatch.setattr(fitting, "init_multiresolution", lambda *a, **k: off_by_one)
        monkeypatch.setattr(fitting, "mimusic_baseline", no_peaks)
        caplog.set_level(logging.DEBUG, logger="tdfit")
        fit = estimate_delays(make_estimates(two_paths, small_plan), 2)
        assert "wrap search moved" in caplog.text
        np.testing.assert_allclose(fit.delays, two_paths.delays, atol=1e-9 * T_S)

    def test_restarts_from_music_when_cheaper(
        self, small_plan, two_paths, make_estimates, monkeypatch, caplog
    ):
        """Test a spurious start is replaced by the lower-cost MI-MUSIC solution."""
        spurious = np.array([2.0 * T_S, 12.0 * T_S])
        monkeypatch.setattr(fitting, "init_multiresolution", lambda *a, **k: spurious)
        caplog.set_level(logging.DEBUG, logger="tdfit")
        estimates = make_estimates(two_paths, small_plan)
        frozen = SolverOptions(max_iterations=0)
        fit = estimate_delays(estimates, 2, options=frozen)
        assert "MI-MUSIC restart lowered the cost" in caplog.text
        np.testing.assert_allclose(fit.delays, two_paths.delays, atol=1e-3 * T_S)
        solved = estimate_delays(estimates, 2)
        np.testing.assert_allclose(solved.delays, two_paths.delays, atol=1e-9 * T_S)
        assert solved.cost < 1e-18

    def test_single_band(self, make_estimates):
        """Test a single-band plan is fitted exactly."""
        plan = BandPlan(f0=0.0, bandwidth=BANDWIDTH, n_subcarriers=32, band_offsets=[0])
        ch = MultipathChannel(gains=[1.0, -0.5], delays=[3.0 * T_S, 7.25 * T_S])
        fit = estimate_delays(make_estimates(ch, plan), 2)
        np.testing.assert_allclose(fit.delays, ch.delays, atol=1e-9 * T_S)
