import math
from types import SimpleNamespace

import numpy as np
import pytest

from pairkin import diagnostics as dg
from pairkin.equilibria import Equilibrium
from pairkin.phase import (
    PhaseGrid,
    StatePair,
    conserved_mass_difference,
    equilibrium_state,
    make_state,
    projection_pi,
    rho_infinity_pair,
    state_diff,
    weighted_inner,
    weighted_norm_sq,
)

from conftest import bounded_state


def uniform_state(grid, r1, r2, t=0.0):
    nx = grid.nx
    return make_state(np.full(nx, r1), np.full(nx, r2), grid, unchecked=True, t=t)


class TestEntropy:
    def test_vanishes_at_equilibrium(self, grid32):
        F = uniform_state(grid32, *rho_infinity_pair(0.7))
        eq = equilibrium_state(F, grid32)
        assert abs(dg.entropy_H(F, eq, grid32)) <= 1e-14

    def test_uniform_doubling_closed_form(self, grid32):
        # f_i = 2 f_i_inf with unit equilibrium densities:
        # H = sum_i rho_i_inf (k ln k - k + 1), k = 2
        F = uniform_state(grid32, 2.0, 2.0)
        eq = equilibrium_state(uniform_state(grid32, 1.0, 1.0), grid32)
        expected = 2.0 * (2.0 * math.log(2.0) - 1.0)
        assert dg.entropy_H(F, eq, grid32) == pytest.approx(expected, abs=1e-12)

    def test_nonnegative_on_random_states(self, grid32, rng):
        for _ in range(5):
            F = bounded_state(grid32, rng)
            eq = equilibrium_state(F, grid32)
            assert dg.entropy_H(F, eq, grid32) >= 0.0

    def test_rejects_nonpositive(self, grid32):
        F = uniform_state(grid32, 1.0, 1.0)
        F.f1[0, 0] = 0.0
        eq = equilibrium_state(F, grid32)
        with pytest.raises(ValueError):
            dg.entropy_H(F, eq, grid32)


class TestDissipationD12:
    def test_zero_on_thermal_states(self, grid32):
        r = 1.0 + 0.4 * np.cos(2 * np.pi * grid32.x1d)
        F = make_state(r, 1.0 / r, grid32, unchecked=True)
        d1, d2 = dg.dissipation_D12(F, grid32)
        assert abs(d1) <= 1e-14 and abs(d2) <= 1e-14

    def test_positive_for_velocity_perturbation(self, grid32):
        v = grid32.v[:, 0]
        h1 = 1.0 + 0.1 * np.broadcast_to(v * np.exp(-v * v), (32, 32))
        F = make_state(h1, np.ones(32), grid32, unchecked=True)
        d1, d2 = dg.dissipation_D12(F, grid32)
        assert d1 > 1e-8
        assert abs(d2) <= 1e-14

    def test_two_node_toy_grid_hand_evaluation(self):
        # 2 velocity nodes, hand-checkable: D1 = sum_x h sum_k w (f - rho chi) ln(f/(rho chi))
        nodes = np.array([[-1.0], [1.0]])
        weights = np.array([1.0, 1.0])
        values = np.array([0.5, 0.5])
        chi = Equilibrium(1, nodes, weights, values, 1.0, 1.0)
        grid = PhaseGrid(d=1, nx=4, chi1=chi, chi2=chi)
        f1 = np.tile(np.array([0.9, 0.3]), (4, 1))   # rho1 = 1.2 everywhere
        f2 = np.tile(np.array([0.5, 0.5]), (4, 1))
        F = StatePair(f1, f2)
        rho1 = 1.2
        expected = sum(
            w * (f - rho1 * c) * math.log(f / (rho1 * c))
            for w, f, c in zip(weights, [0.9, 0.3], values)
        )
        d1, d2 = dg.dissipation_D12(F, grid)
        assert d1 == pytest.approx(expected, rel=1e-13)
        assert abs(d2) <= 1e-15


class TestDissipationD3:
    def test_zero_at_unit_thermal_pair(self, grid32):
        F = uniform_state(grid32, 1.0, 1.0)
        assert abs(dg.dissipation_D3(F, grid32)) <= 1e-14

    def test_uniform_scaling_closed_form(self, grid32):
        # f1 = 2 chi1, f2 = chi2 gives (2 - 1) ln 2
        F = uniform_state(grid32, 2.0, 1.0)
        assert dg.dissipation_D3(F, grid32) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_zero_at_global_equilibrium_with_mass_imbalance(self, grid32):
        F = uniform_state(grid32, *rho_infinity_pair(1.2))
        assert abs(dg.dissipation_D3(F, grid32)) <= 1e-13

    def test_factorized_matches_naive_double_loop(self, rng):
        import pairkin
        g8 = pairkin.gaussian_grid(1, 8, 8, 8.0)
        for _ in range(5):
            F = bounded_state(g8, rng)
            fast = dg.dissipation_D3(F, g8)
            naive = dg.dissipation_D3_naive(F, g8)
            assert abs(fast - naive) <= 1e-12

    def test_negative_value_is_hard_error(self, grid32, monkeypatch):
        F = uniform_state(grid32, 1.0, 1.0)
        monkeypatch.setattr(dg.kernels, "d3_sum", lambda *a: -1.0)
        with pytest.raises(ArithmeticError):
            dg.dissipation_D3(F, grid32)


class TestReactionResidual:
    def test_zero_at_unit_thermal_pair(self, grid32):
        F = uniform_state(grid32, 1.0, 1.0)
        R = dg.reaction_R(F, grid32)
        assert np.abs(R.f1).max() <= 1e-14
        assert np.abs(R.f2).max() <= 1e-14

    def test_zero_at_global_equilibrium(self, grid32):
        F = uniform_state(grid32, *rho_infinity_pair(0.9))
        eq = equilibrium_state(F, grid32)
        assert dg.reaction_norm_sq(F, eq, grid32) <= 1e-25

    def test_doubled_first_species_closed_form(self, grid32):
        # f1 = 2 chi1, f2 = chi2: R = (-chi1, -chi2), |R|^2 = 1/r1inf + 1/r2inf
        F = uniform_state(grid32, 2.0, 1.0)
        eq = equilibrium_state(F, grid32)
        R = dg.reaction_R(F, grid32)
        assert np.allclose(R.f1, -grid32.chi1.values, atol=1e-14)
        assert np.allclose(R.f2, -grid32.chi2.values, atol=1e-14)
        expected = 1.0 / eq.rho1_inf + 1.0 / eq.rho2_inf   # = sqrt(5) at m = 1
        assert expected == pytest.approx(math.sqrt(5.0), abs=1e-12)
        assert dg.reaction_norm_sq(F, eq, grid32) == pytest.approx(expected, rel=1e-10)


class TestOperatorA:
    def test_annihilates_macroscopic_states(self, grid32, rng):
        F = bounded_state(grid32, rng)
        P = projection_pi(F, grid32)
        AP = dg.operator_A_apply(P, grid32)
        assert np.abs(AP.f1).max() <= 1e-12
        assert np.abs(AP.f2).max() <= 1e-12

    def test_single_mode_hand_solution(self, grid32):
        # f1 = chi1 (1 + a v sin(2 pi x)), theta = 1:
        # J1 = a theta sin(2 pi x), w1 = -2 pi a cos(2 pi x)/(1 + 4 pi^2)
        a = 0.25
        x = grid32.x1d
        h1 = 1.0 + a * np.outer(np.sin(2 * np.pi * x), grid32.v[:, 0])
        F = make_state(h1, np.ones(32), grid32, unchecked=True)
        AF = dg.operator_A_apply(F, grid32)
        w1 = AF.f1[:, 16] / grid32.chi1.values[16]
        expected = -2 * np.pi * a * np.cos(2 * np.pi * x) / (1 + 4 * np.pi**2)
        assert np.allclose(w1, expected, atol=1e-10)

    def test_operator_norm_bounded_by_half(self, grid32, rng):
        for _ in range(10):
            F = bounded_state(grid32, rng)
            eq = equilibrium_state(F, grid32)
            diff = state_diff(F, eq.f_inf)
            lhs = math.sqrt(weighted_norm_sq(dg.operator_A_apply(diff, grid32), eq, grid32))
            rhs = 0.5 * math.sqrt(weighted_norm_sq(diff, eq, grid32))
            assert lhs <= rhs + 1e-12


class TestOperatorAstar:
    def test_adjoint_identity(self, grid32, rng):
        worst = 0.0
        for _ in range(20):
            F = bounded_state(grid32, rng)
            G = bounded_state(grid32, rng)
            eq = equilibrium_state(F, grid32)
            lhs = weighted_inner(dg.operator_A_apply(F, grid32), G, eq, grid32)
            rhs = weighted_inner(F, dg.operator_Astar_apply(G, grid32), eq, grid32)
            worst = max(worst, abs(lhs - rhs))
        assert worst <= 1e-10

    def test_constant_density_maps_to_zero(self, grid32):
        G = uniform_state(grid32, 1.7, 0.6)
        out = dg.operator_Astar_apply(G, grid32)
        assert np.abs(out.f1).max() <= 1e-13

    def test_single_mode_solution(self, grid32):
        # rho_G = cos(2 pi x): u = cos(2 pi x)/(1 + 4 pi^2 theta),
        # A* G = -2 pi sin(2 pi x)/(1 + 4 pi^2 theta) chi v
        theta = grid32.chi1.temperature_like
        G = make_state(1.0 + np.cos(2 * np.pi * grid32.x1d), np.ones(32),
                       grid32, unchecked=True)
        out = dg.operator_Astar_apply(G, grid32)
        v = grid32.v[:, 0]
        expected = (-2 * np.pi * np.sin(2 * np.pi * grid32.x1d)[:, None]
                    / (1 + 4 * np.pi**2 * theta)) * grid32.chi1.values * v
        assert np.allclose(out.f1, expected, atol=1e-12)


class TestModifiedEntropy:
    def test_zero_at_equilibrium(self, grid32):
        F = uniform_state(grid32, *rho_infinity_pair(-0.3))
        eq = equilibrium_state(F, grid32)
        assert abs(dg.modified_entropy_Gamma(F, eq, grid32, 0.05)) <= 1e-13

    def test_purely_macroscopic_coupling_vanishes(self, grid32):
        r = 1.0 + 0.3 * np.cos(2 * np.pi * grid32.x1d)
        F = make_state(r, 1.0 / r, grid32, unchecked=True)
        eq = equilibrium_state(F, grid32)
        gamma = dg.modified_entropy_Gamma(F, eq, grid32, 0.05)
        assert gamma == pytest.approx(dg.entropy_H(F, eq, grid32), abs=1e-12)

    def test_coupling_bounded_by_half_distance(self, grid32, rng):
        # |Gamma - H| <= (delta/2) |F - Finf|^2 since A has norm 1/2
        delta = 0.05
        for _ in range(5):
            F = bounded_state(grid32, rng)
            eq = equilibrium_state(F, grid32)
            dist2 = weighted_norm_sq(state_diff(F, eq.f_inf), eq, grid32)
            gap = abs(dg.modified_entropy_Gamma(F, eq, grid32, delta)
                      - dg.entropy_H(F, eq, grid32))
            assert gap <= 0.5 * delta * dist2 + 1e-14

    def test_rejects_nonpositive_delta(self, grid32):
        F = uniform_state(grid32, 1.0, 1.0)
        eq = equilibrium_state(F, grid32)
        with pytest.raises(ValueError):
            dg.modified_entropy_Gamma(F, eq, grid32, 0.0)


class TestInequalities:
    def test_random_states_pass_all_four(self, grid32, rng):
        for _ in range(10):
            F = bounded_state(grid32, rng)
            eq = equilibrium_state(F, grid32)
            rep = dg.verify_inequalities(F, eq, grid32)
            assert rep.ok, str(rep)
            assert len(rep.checks) == 4

    def test_equilibrium_degenerates_to_zero(self, grid32):
        F = uniform_state(grid32, *rho_infinity_pair(0.5))
        eq = equilibrium_state(F, grid32)
        rep = dg.verify_inequalities(F, eq, grid32)
        assert rep.ok
        by_name = {c.name: c for c in rep.checks}
        assert abs(by_name["positivity_ATPi"].lhs) <= 1e-13

    def test_macroscopic_state_passes(self, grid32):
        r = 1.0 + 0.3 * np.cos(2 * np.pi * grid32.x1d)
        F = make_state(r, 1.0 / r, grid32, unchecked=True)
        eq = equilibrium_state(F, grid32)
        rep = dg.verify_inequalities(F, eq, grid32)
        assert rep.ok

    def test_reaction_chain_lower_bound(self, grid32, rng):
        for _ in range(5):
            F = bounded_state(grid32, rng)
            eq = equilibrium_state(F, grid32)
            lhs, rhs = dg.reaction_chain_check(F, eq, grid32)
            assert lhs >= rhs - 1e-12


class TestDecayFit:
    @staticmethod
    def synthetic(values, times):
        return [SimpleNamespace(t=t, Gamma=v) for t, v in zip(times, values)]

    def test_exact_exponential(self):
        t = np.linspace(0.0, 2.0, 40)
        recs = self.synthetic(np.exp(-3.0 * t), t)
        fit = dg.decay_rate_fit(recs)
        assert fit.rate == pytest.approx(3.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_noisy_exponential(self, rng):
        t = np.linspace(0.0, 2.0, 80)
        noise = 1.0 + 0.01 * rng.standard_normal(t.size)
        recs = self.synthetic(np.exp(-3.0 * t) * noise, t)
        fit = dg.decay_rate_fit(recs)
        assert fit.rate == pytest.approx(3.0, abs=0.1)

    def test_window_selection(self):
        t = np.linspace(0.0, 2.0, 60)
        vals = np.where(t < 1.0, 1.0, np.exp(-(t - 1.0)))
        fit = dg.decay_rate_fit(self.synthetic(vals, t), window=(1.0, 2.0))
        assert fit.rate == pytest.approx(1.0, abs=1e-10)

    def test_all_zero_is_equilibrium_sentinel(self):
        t = np.linspace(0.0, 1.0, 20)
        fit = dg.decay_rate_fit(self.synthetic(np.zeros_like(t), t))
        assert fit.at_equilibrium
        assert math.isinf(fit.rate)

    def test_too_few_points_rejected(self):
        t = np.linspace(0.0, 1.0, 5)
        with pytest.raises(ValueError):
            dg.decay_rate_fit(self.synthetic(np.exp(-t), t))


class TestEntropyBalance:
    def test_equilibrium_trajectory_is_exact(self, grid32):
        F = uniform_state(grid32, *rho_infinity_pair(0.2))
        eq = equilibrium_state(F, grid32)
        recs = [dg.compute_record(StatePair(F.f1, F.f2, t), eq, grid32, 0.05)
                for t in (0.0, 0.1, 0.2, 0.3)]
        rep = dg.entropy_balance_check(recs, sigma=1.0)
        assert rep.max_rel_mismatch == 0.0
        assert rep.max_abs_mismatch <= 1e-13

    def test_requires_uniform_spacing(self, grid32, rng):
        F = bounded_state(grid32, rng)
        eq = equilibrium_state(F, grid32)
        recs = [dg.compute_record(StatePair(F.f1, F.f2, t), eq, grid32, 0.05)
                for t in (0.0, 0.1, 0.35)]
        with pytest.raises(ValueError):
            dg.entropy_balance_check(recs, sigma=1.0)


class TestDecayRateStability:
    def test_rate_stable_under_grid_refinement(self):
        import pairkin
        from pairkin.solver import ModelParams, SolverConfig, run
        rates = []
        for nx, nv in ((32, 32), (64, 64)):
            grid = pairkin.gaussian_grid(1, nx, nv, 8.0)
            F0 = pairkin.make_initial_condition(
                pairkin.ProfileSpec("cosine", base=1.1, amplitude=0.5),
                pairkin.ProfileSpec("cosine", base=0.9, amplitude=0.2, mode=2),
                grid, 0.5, 2.0)
            cfg = SolverConfig(dt=4e-3, t_final=2.0, cadence=10, rho_m=0.5, rho_M=2.0)
            _, recs = run(F0, ModelParams(1.0, 1.0), cfg, grid)
            rates.append(dg.decay_rate_fit(recs, (1.0, 2.0), "Gamma").rate)
        assert abs(rates[1] - rates[0]) <= 0.2 * abs(rates[0])


class TestEntropyBalanceSigmaZero:
    def test_balance_reduces_to_reaction_dissipation(self, grid32, cosine_ic):
        from pairkin.solver import ModelParams, SolverConfig, run
        cfg = SolverConfig(dt=1e-3, t_final=0.1, cadence=1, rho_m=0.5, rho_M=2.0)
        _, recs = run(cosine_ic, ModelParams(1.0, 0.0), cfg, grid32)
        rep = dg.entropy_balance_check(recs, sigma=0.0)
        assert rep.max_rel_mismatch <= 1e-3


class TestRecordsAndSinks:
    def test_record_consistency(self, grid32, rng):
        F = bounded_state(grid32, rng)
        eq = equilibrium_state(F, grid32)
        rec = dg.compute_record(F, eq, grid32, 0.05)
        assert rec.massdiff == pytest.approx(conserved_mass_difference(F, grid32), abs=1e-14)
        assert rec.Gamma == pytest.approx(rec.H + 0.05 * rec.coupling, rel=1e-12)
        assert rec.dist2 >= rec.micro2 - 1e-14
        assert min(rec.H, rec.D1, rec.D2, rec.D3) >= 0.0

    def test_csv_sink_roundtrip(self, grid32, rng, tmp_path):
        F = bounded_state(grid32, rng)
        eq = equilibrium_state(F, grid32)
        rec = dg.compute_record(F, eq, grid32, 0.05)
        path = tmp_path / "diag.csv"
        with dg.CsvSink(path) as sink:
            sink.emit(rec)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ",".join(dg.CSV_COLUMNS)
        values = [float(tok) for tok in lines[1].split(",")]
        assert values == pytest.approx(rec.row(), rel=1e-16)

    def test_delta_sweep_from_run_records(self, grid32, cosine_ic):
        from pairkin.solver import ModelParams, SolverConfig, run
        cfg = SolverConfig(dt=0.002, t_final=1.0, cadence=10, rho_m=0.5, rho_M=2.0)
        _, recs = run(cosine_ic, ModelParams(1.0, 1.0), cfg, grid32)
        rows = dg.delta_sweep(recs)
        assert [r.delta for r in rows] == [0.2, 0.1, 0.05, 0.01]
        assert all(r.monotone for r in rows)
        assert all(r.rate > 0 for r in rows)
