import numpy as np
import pytest

from bulkvac import (
    QueueModel,
    SolverOptions,
    StabilityError,
    build_characteristic,
    erlang,
    solve,
    solve_boundary,
    vacation_termination,
    validate_map,
)
from conftest import mm1_model, random_stable_model, small_model, sweep_model, table_model


class TestCharacteristic:
    def test_mm1_characteristic_roots(self):
        # h=H=1 exponential service: roots of z(mu+lam-lam z) - mu are 1 and mu/lam
        lam, mu = 3.0, 5.0
        char = build_characteristic(mm1_model(lam, mu))
        vals = sorted(abs(r.value) for r in char.roots)
        # vacation kernel pole contributes nothing to the characteristic itself
        assert any(abs(r.value - 1.0) < 1e-9 for r in char.roots)
        assert any(abs(r.value - mu / lam) < 1e-6 for r in char.roots)
        assert sum(r.multiplicity for r in char.roots.closed_disk()) == 1
        del vals

    def test_row_sums_vanish_at_one(self, sv_result):
        M1 = sv_result.characteristic.service_matrix(1.0)
        np.testing.assert_allclose(M1 @ np.ones(2), 0.0, atol=1e-12)

    def test_cramer_versus_direct_identity(self):
        # with an arbitrary unknown assignment, the Cramer solution must satisfy
        # the defining balance Psi(z) (z^H I - A^(H)(z)) = rhs(z)
        char = build_characteristic(table_model("sv"))
        rng = np.random.default_rng(0)
        x = rng.standard_normal((char.H, char.m))
        gamma = char.gamma_at(x)
        z0 = 0.4 - 0.1j
        psi = char.cramer_at(z0, x, gamma, full_batch=False)
        lhs = psi @ char.service_matrix(z0)
        rhs = char.rhs_at(z0, x, gamma, full_batch=False)
        assert np.abs(lhs - rhs).max() / np.abs(rhs).max() < 1e-8

    def test_root_structure_table_config(self, sv_result, mv_result):
        for res in (sv_result, mv_result):
            closed = res.characteristic.roots.closed_disk()
            assert sum(r.multiplicity for r in closed) == 18
            ones = [r for r in closed if abs(r.value - 1) < 1e-7]
            assert len(ones) == 1 and ones[0].multiplicity == 1

    def test_unstable_model_rejected(self):
        arr = validate_map([[-50.0]], [[50.0]])
        model = QueueModel(arr, 1, 1, {1: erlang(1, 10.0)}, {0: erlang(1, 5.0)})
        with pytest.raises(StabilityError):
            build_characteristic(model)


class TestVacationTermination:
    def test_sv_explicit_map(self):
        model = small_model("sv")
        rng = np.random.default_rng(1)
        xi_small = rng.uniform(0.0, 0.1, (model.h, 2))
        joint, gamma_small, sources = vacation_termination(model, xi_small, 40)
        # under single vacation gamma+(k,k) = xi+(k) B^(k)_0 directly
        from bulkvac import Kernel
        for k in range(model.h):
            B0 = Kernel(model.arrivals, model.vacations[k]).coefficients(0)[0]
            np.testing.assert_allclose(joint[k, k], xi_small[k] @ B0, atol=1e-14)
        np.testing.assert_allclose(sources, xi_small, atol=1e-14)

    def test_mv_sequential_resolution(self):
        model = small_model("mv")
        rng = np.random.default_rng(2)
        xi_small = rng.uniform(0.0, 0.1, (model.h, 2))
        joint, gamma_small, sources = vacation_termination(model, xi_small, 60)
        # resolved gamma+(k) must satisfy the fixed point equation
        from bulkvac import Kernel
        co = {k: Kernel(model.arrivals, model.vacations[k]).coefficients(60)
              for k in range(model.h)}
        for k in range(model.h):
            acc = np.zeros(2)
            for j in range(k + 1):
                acc += sources[j] @ co[j][k - j]
            np.testing.assert_allclose(gamma_small[k], acc, atol=1e-12)

    def test_table_values_sv(self, sv_result):
        gp = sv_result.embedded.gamma_plus_joint
        assert gp[4, 4, 0] == pytest.approx(0.00218, abs=1e-4)
        assert gp[4, 4, 1] == pytest.approx(0.00156, abs=1e-4)

    def test_table_values_mv(self, mv_result):
        gp = mv_result.embedded.gamma_plus_joint
        assert gp[4, 4, 0] == pytest.approx(0.00272, abs=1e-4)


class TestBoundary:
    def test_mm1_embedded_law(self):
        # vacations negligible: queue at departures is geometric(1-rho)
        lam, mu = 0.7, 1.0
        res = solve(mm1_model(lam, mu, vac_rate=1e8))
        rho = lam / mu
        # condition on service completions: instant vacation terminations are
        # embedded events too, one per empty-leaving departure
        joint = res.embedded.xi_plus_joint[:, 0, 0]
        marginal = joint / joint.sum()
        n = np.arange(60)
        expected = (1 - rho) * rho ** n
        np.testing.assert_allclose(marginal[:60], expected, atol=1e-6)

    def test_component_agreement(self, sv_result):
        assert sv_result.boundary.component_agreement < 1e-6

    def test_column_totals(self, sv_result, mv_result):
        tot_sv = sv_result.embedded.xi_plus_joint.sum(axis=0)
        assert tot_sv[0, 0] == pytest.approx(0.0353, abs=2e-4)
        tot_mv = mv_result.embedded.xi_plus_joint.sum(axis=0)
        assert tot_mv[4, 0] == pytest.approx(0.36214, abs=2e-4)

    def test_nonnegative(self, sv_result):
        assert sv_result.boundary.xi_plus.min() >= 0
        assert sv_result.boundary.gamma_plus_small.min() >= 0


class TestEmbedded:
    def test_normalization(self, sv_result, mv_result):
        for res in (sv_result, mv_result):
            assert abs(res.embedded.total_mass() - 1.0) < 1e-8

    def test_table_cells(self, sv_result):
        xp = sv_result.embedded.xi_plus_joint
        assert xp[0, 0, 0] == pytest.approx(0.00243, abs=1e-4)
        assert xp[2, 4, 0] == pytest.approx(0.00888, abs=1e-4)
        assert xp[4, 4, 0] == pytest.approx(0.01086, abs=1e-4)

    def test_small_column_vanishes(self, sv_result):
        # the r=5 column is numerically zero beyond n ~ 31 at table precision
        xp = sv_result.embedded.xi_plus_joint
        assert np.abs(xp[31:, 0, :]).max() <= 5e-6

    def test_marginal_matches_unknowns(self, sv_result):
        assert sv_result.diagnostics.marginal_consistency < 1e-7


class TestSigmaE:
    def test_mv_E_equals_w_hat(self, mv_result):
        assert mv_result.arbitrary.E_factor == pytest.approx(mv_result.arbitrary.w_hat, rel=1e-12)

    def test_sigma_inverse_equals_E(self, sv_result, mv_result):
        # the embedded-epoch normalizer coincides with the mean inter-event time
        for res in (sv_result, mv_result):
            assert res.embedded.sigma_inverse == pytest.approx(1.0 / res.arbitrary.E_factor,
                                                               rel=1e-9)

    def test_dormancy_probability(self, sv_result):
        assert sv_result.report.P_dor == pytest.approx(0.0032, abs=2e-4)


class TestArbitrary:
    def test_normalization(self, sv_result, mv_result):
        for res in (sv_result, mv_result):
            assert abs(res.arbitrary.total_mass() - 1.0) < 1e-7

    def test_table_cells(self, sv_result, mv_result):
        assert sv_result.arbitrary.R_dormant[4, 0] == pytest.approx(0.00126, abs=1e-4)
        assert sv_result.arbitrary.gamma_joint[4, 4, 0] == pytest.approx(0.00308, abs=1e-4)
        assert mv_result.arbitrary.gamma_joint[4, 4, 0] == pytest.approx(0.00388, abs=1e-4)

    def test_dormancy_flow_balance(self, sv_result):
        # R(n,0) D e = sum_{m<=n} gamma+(m) e / E for every dormant level
        model = sv_result.model
        R = sv_result.arbitrary.R_dormant
        gm = sv_result.embedded.gamma_plus_marginal
        E = sv_result.arbitrary.E_factor
        D = np.asarray(model.arrivals.D)
        e = np.ones(2)
        for n in range(model.h):
            lhs = R[n] @ D @ e
            rhs = gm[: n + 1].sum(axis=0) @ e / E
            assert lhs == pytest.approx(rhs, rel=1e-8)

    def test_mv_has_no_dormant_component(self, mv_result):
        assert mv_result.arbitrary.R_dormant is None


class TestMeasures:
    def test_littles_law_exact(self, sv_result):
        rep = sv_result.report
        lam = sv_result.model.arrivals.rate
        assert rep.W_q == rep.L_q / lam
        assert rep.W_s == rep.L_s / lam

    def test_mode_probabilities_sum_to_one(self, sv_result, mv_result):
        for res in (sv_result, mv_result):
            rep = res.report
            assert rep.P_dor + rep.P_busy + rep.P_vac == pytest.approx(1.0, abs=1e-7)
        assert mv_result.report.P_dor == 0.0

    def test_queue_marginal_row(self, sv_result):
        assert sv_result.report.queue_length[4] == pytest.approx(0.04250, abs=1e-4)


class TestCrossRoute:
    def test_identity_on_table_configs(self, sv_result, mv_result):
        rng = np.random.default_rng(3)
        pts = 0.9 * np.sqrt(rng.uniform(0.1, 1, 10)) * np.exp(2j * np.pi * rng.uniform(size=10))
        assert sv_result.identity_error(pts) < 1e-7
        assert mv_result.identity_error(pts) < 1e-7

    def test_identity_on_small_model(self):
        res = solve(small_model("mv"))
        rng = np.random.default_rng(4)
        pts = 0.85 * np.sqrt(rng.uniform(0.1, 1, 10)) * np.exp(2j * np.pi * rng.uniform(size=10))
        assert res.identity_error(pts) < 1e-7


class TestStructuralProperties:
    def test_policy_limit_sv_equals_mv(self):
        # with vacations scaled a thousandfold shorter, the policies coincide
        arr = validate_map([[-3.0, 1.0], [0.5, -2.5]], [[1.5, 0.5], [0.8, 1.2]])
        services = {2: erlang(2, 2.2), 3: erlang(2, 3.0)}
        scale = 1e3
        vacations = {0: erlang(2, 1.4 * scale), 1: erlang(2, 2.0 * scale)}
        L = {}
        for policy in ("sv", "mv"):
            model = QueueModel(arr, 2, 3, services, vacations, policy)
            L[policy] = solve(model).report.L_q
        assert abs(L["sv"] - L["mv"]) < 1e-3

    def test_monotone_in_arrival_scale(self):
        values = []
        for scale in (1.0, 1.3, 1.6):
            values.append(solve(sweep_model(scale, "qsiv")).report.L_q)
        assert values[0] < values[1] < values[2]

    def test_random_stable_models(self):
        rng = np.random.default_rng(2024)
        for trial in range(6):
            model = random_stable_model(rng)
            res = solve(model)
            assert abs(res.embedded.total_mass() - 1.0) < 1e-8, trial
            assert abs(res.arbitrary.total_mass() - 1.0) < 1e-7, trial
            closed = res.characteristic.roots.closed_disk()
            assert sum(r.multiplicity for r in closed) == model.m * model.H


class TestFullDeterminantStructure:
    def test_full_matrix_determinant_degree(self):
        # the unreduced characteristic matrix determinant has degree at most
        # m(H + deg dH) = 2(9+6) = 30 and matches direct evaluation off-grid
        from bulkvac.polynomials import det_poly
        char = build_characteristic(table_model("sv"))

        def entry(z):
            return char._dH(z) * char.service_matrix(z)

        p = det_poly(entry, 2, 32)
        assert p.degree <= 30
        z0 = 0.37 + 0.2j
        direct = np.linalg.det(entry(z0))
        assert abs(p(z0) - direct) / abs(direct) < 1e-8

    def test_sigma_matches_simulated_event_rate(self):
        # sigma^{-1} = E is the mean time between embedded events
        from bulkvac import simulate
        model = small_model("sv")
        res = solve(model)
        est = simulate(model, seed=31, total_events=2_000_000)
        rate_sim = est.embedded_events / est.duration
        assert rate_sim == pytest.approx(res.embedded.sigma_inverse, rel=0.02)


class TestBoundaryDirect:
    def test_solve_boundary_standalone(self):
        model = small_model("sv")
        unknowns = solve_boundary(model, SolverOptions())
        assert unknowns.xi_plus.shape == (model.H, model.arrivals.m)
        assert unknowns.condition_number < 1e6
