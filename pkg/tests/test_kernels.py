import numpy as np
import pytest

from bulkvac import Kernel, SolverError, erlang, exponential, kernel_coefficients, kernel_eval, validate_map
from conftest import table_model


@pytest.fixture(scope="module")
def table():
    return table_model("sv")


class TestPointwise:
    def test_row_stochastic_at_one(self, table):
        e = np.ones(2)
        for r, law in table.services.items():
            K = kernel_eval(table.arrivals, law, 1.0)
            np.testing.assert_allclose(K @ e, e, atol=1e-10)
        for k, law in table.vacations.items():
            K = kernel_eval(table.arrivals, law, 1.0)
            np.testing.assert_allclose(K @ e, e, atol=1e-10)

    def test_scalar_reduces_to_lst(self):
        # exponential service against Poisson arrivals: mu / (mu + lam - lam z)
        lam, mu = 3.0, 5.0
        arr = validate_map([[-lam]], [[lam]])
        law = exponential(mu)
        rng = np.random.default_rng(5)
        for _ in range(20):
            z = rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1)
            z /= max(1.0, abs(z))
            got = kernel_eval(arr, law, z)[0, 0]
            assert got == pytest.approx(mu / (mu + lam - lam * z), abs=1e-12)

    def test_scalar_lst_identity_general_ph(self):
        # for m=1 the kernel equals the service LST at lam(1-z)
        lam = 2.0
        arr = validate_map([[-lam]], [[lam]])
        law = erlang(3, 1.5)
        rng = np.random.default_rng(6)
        for _ in range(20):
            z = rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1)
            z /= max(1.0, abs(z))
            got = kernel_eval(arr, law, z)[0, 0]
            assert abs(got - law.lst(lam * (1 - z))) < 1e-12

    def test_mean_arrivals_identity(self, table):
        # stationary-weighted derivative at 1 equals lambda * mean duration
        arr = table.arrivals
        for law in list(table.services.values()) + list(table.vacations.values()):
            ker = Kernel(arr, law)
            got = float(arr.stationary @ ker.eval_deriv(1.0) @ np.ones(2))
            assert got == pytest.approx(arr.rate * law.mean, abs=1e-8 * arr.rate * law.mean)

    def test_singular_point_reported(self, table):
        ker = Kernel(table.arrivals, table.services[9])
        pole = ker.denominator_roots()[0][0]
        with pytest.raises(SolverError, match="singular"):
            ker.eval(pole)


class TestCoefficients:
    def test_geometric_for_exponential(self):
        lam, mu = 3.0, 5.0
        arr = validate_map([[-lam]], [[lam]])
        co = kernel_coefficients(arr, exponential(mu), 30)
        expected = (mu / (mu + lam)) * (lam / (mu + lam)) ** np.arange(31)
        np.testing.assert_allclose(co.matrices[:, 0, 0], expected, rtol=1e-12)

    def test_partial_sums_monotone_nonnegative(self, table):
        co = kernel_coefficients(table.arrivals, table.vacations[4], 200)
        assert co.matrices.min() >= 0
        sums = np.cumsum(co.matrices.sum(axis=(1, 2)))
        assert np.all(np.diff(sums) >= -1e-15)
        assert co.partial_sum() @ np.ones(2) == pytest.approx([1.0, 1.0], abs=1e-8)

    def test_series_matches_pointwise_vacation(self, table):
        ker = Kernel(table.arrivals, table.vacations[4])
        co = ker.coefficients(400)
        z = 0.3
        series = np.tensordot(z ** np.arange(401), co.matrices, axes=(0, 0))
        np.testing.assert_allclose(series, ker.eval(z), atol=1e-10)

    def test_series_matches_pointwise_service(self, table):
        ker = Kernel(table.arrivals, table.services[9])
        co = ker.coefficients(300)
        z = 0.5
        series = np.tensordot(z ** np.arange(301), co.matrices, axes=(0, 0))
        np.testing.assert_allclose(series, ker.eval(z), atol=1e-10)

    def test_residual_target_failure(self, table):
        ker = Kernel(table.arrivals, table.vacations[0])
        with pytest.raises(SolverError, match="residual"):
            ker.coefficients(5, residual_target=1e-12)


class TestDenominatorRoots:
    def test_all_outside_unit_disk(self, table):
        for law in list(table.services.values()) + list(table.vacations.values()):
            roots = Kernel(table.arrivals, law).denominator_roots()
            assert roots, "kernel must have at least one pole"
            assert min(abs(b) for b, _ in roots) > 1 + 1e-8

    def test_erlang_multiplicity_structure(self, table):
        # three-phase Erlang service: each pole location carries multiplicity 3
        roots = Kernel(table.arrivals, table.services[9]).denominator_roots()
        assert sorted(q for _, q in roots) == [3, 3]
        roots2 = Kernel(table.arrivals, table.vacations[0]).denominator_roots()
        assert sorted(q for _, q in roots2) == [2, 2]

    def test_pole_matches_rational_blowup(self, table):
        ker = Kernel(table.arrivals, table.vacations[0])
        b, _ = min(ker.denominator_roots(), key=lambda t: abs(t[0]))
        near = ker.eval(b + 1e-6)
        far = ker.eval(b + 1e-2)
        assert np.abs(near).max() > 100 * np.abs(far).max()
