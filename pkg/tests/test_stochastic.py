"""Coefficient laws, error distributions and finite-step bands."""

import numpy as np
import pytest
import scipy.integrate
from scipy.stats import ortho_group

from clearnet import (
    basis_jacobian,
    clear,
    confidence_bands,
    deviation_distribution,
    deviation_tail_cdf,
    gaussian_mgf,
    make_rng,
    orthonormal_basis,
    sample_coefficients,
    society_distribution,
    society_gaussian_cdf,
    society_uniform_cdf,
)
from clearnet.errors import NumericsError
from clearnet.perturb import PerturbationBasis
from clearnet.stochastic import _coefficient_matrix

from helpers import (
    four_bank_society_system,
    four_bank_system,
    random_regular_system,
)


def society_operator():
    system = four_bank_society_system()
    solution = clear(system)
    basis = orthonormal_basis(
        system.relative_liabilities, system.total_obligations, "fixed"
    )
    return system, basis_jacobian(system, solution, basis)


def ks_distance(sorted_samples, cdf):
    n = len(sorted_samples)
    grid = np.arange(1, n + 1) / n
    values = np.array([cdf(v) for v in sorted_samples])
    return max(
        np.abs(values - grid).max(), np.abs(values - (grid - 1.0 / n)).max()
    )


class TestCoefficientLaws:
    def test_uniform_stays_in_the_ball(self):
        rng = make_rng(0)
        draws = sample_coefficients(5, "uniform", rng, size=20_000)
        assert np.linalg.norm(draws, axis=1).max() <= 1.0 + 1e-12

    def test_uniform_second_moment(self):
        # Oracle: E ||z||^2 over the unit ball via the radial density d r^(d-1).
        d = 5
        moment, _ = scipy.integrate.quad(lambda r: r**2 * d * r ** (d - 1), 0.0, 1.0)
        assert moment == pytest.approx(d / (d + 2), abs=1e-12)
        draws = sample_coefficients(d, "uniform", make_rng(1), size=100_000)
        empirical = float(np.mean(np.sum(draws**2, axis=1)))
        assert abs(empirical - moment) <= 0.01 * moment

    def test_gaussian_moments(self):
        draws = sample_coefficients(4, "gaussian", make_rng(2), size=100_000)
        assert np.abs(draws.mean(axis=0)).max() <= 0.02
        assert np.all((draws.var(axis=0) > 0.97) & (draws.var(axis=0) < 1.03))

    def test_law_aliases_and_errors(self):
        rng = make_rng(3)
        assert sample_coefficients(3, "uniform-ball", rng).shape == (3,)
        with pytest.raises(ValueError):
            sample_coefficients(3, "cauchy", rng)
        with pytest.raises(ValueError):
            sample_coefficients(0, "uniform", rng)

    def test_chunked_sampling_deterministic_across_threads(self):
        a = _coefficient_matrix(4, "uniform", 70_000, seed=11, threads=1)
        b = _coefficient_matrix(4, "uniform", 70_000, seed=11, threads=3)
        assert np.array_equal(a, b)
        c = _coefficient_matrix(4, "uniform", 70_000, seed=12, threads=1)
        assert not np.array_equal(a, c)


class TestDeviationDistribution:
    def test_determinism(self):
        _, operator = society_operator()
        first = deviation_distribution(operator, "uniform", 20_000, seed=0)
        second = deviation_distribution(operator, "uniform", 20_000, seed=0)
        assert np.array_equal(first.samples, second.samples)

    def test_upper_tail_is_sharp(self):
        _, operator = society_operator()
        report = deviation_distribution(operator, "uniform", 50_000, seed=1)
        top = operator.eigenvalues.max()
        assert report.empirical_cdf(top) == 1.0
        assert deviation_tail_cdf(top, operator.eigenvalues) == 1.0
        # The bound is attained in the limit: samples approach it.
        assert report.samples.max() >= 0.8 * top

    def test_equal_eigenvalue_radius_law(self):
        # With all eigenvalues equal to c the deviation is c ||z||^2, whose
        # CDF is (alpha / c)^(d/2); brute-force Monte Carlo cross-check.
        c, d, n = 2.5, 4, 100_000
        draws = sample_coefficients(d, "uniform", make_rng(4), size=n)
        samples = c * np.sum(draws**2, axis=1)
        lam = np.full(d, c)
        for alpha in (0.2 * c, 0.5 * c, 0.9 * c):
            exact = deviation_tail_cdf(alpha, lam)
            assert exact == pytest.approx((alpha / c) ** (d / 2), rel=1e-12)
            empirical = np.mean(samples <= alpha)
            sigma = np.sqrt(exact * (1.0 - exact) / n)
            assert abs(empirical - exact) <= 3.0 * sigma + 1e-12

    def test_lower_tail_on_a_full_rank_system(self):
        rng = np.random.default_rng(65)
        for _ in range(100):
            system, solution = random_regular_system(rng, density=0.45)
            basis = orthonormal_basis(
                system.relative_liabilities, system.total_obligations, "fixed"
            )
            operator = basis_jacobian(system, solution, basis)
            lam = operator.eigenvalues
            if lam.size == 0 or lam.min() <= 1e-10 * lam.max():
                continue
            report = deviation_distribution(operator, "uniform", 200_000, seed=2)
            alpha = 0.9 * lam.min()
            exact = deviation_tail_cdf(alpha, lam)
            empirical = report.empirical_cdf(alpha)
            sigma = np.sqrt(max(exact * (1 - exact), 1e-12) / report.n_samples)
            assert abs(empirical - exact) <= 3.0 * sigma + 1e-3
            assert "lower_tail" in report.analytic
            return
        pytest.skip("no full-rank instance drawn")

    def test_gaussian_mgf_matches_monte_carlo(self):
        _, operator = society_operator()
        report, lam = (
            deviation_distribution(operator, "gaussian", 200_000, seed=3),
            operator.eigenvalues,
        )
        t = 0.1 / lam.max()
        exact = gaussian_mgf(t, lam)
        empirical = float(np.mean(np.exp(t * report.samples)))
        assert abs(empirical - exact) <= 0.03 * exact
        assert "mgf" in report.analytic

    def test_mgf_divergence_guard(self):
        with pytest.raises(ValueError):
            gaussian_mgf(1.0, [1.0, 2.0])

    def test_basis_independence(self):
        system, operator = society_operator()
        solution = clear(system)
        basis = operator.basis
        rotation = ortho_group.rvs(basis.dimension, random_state=7)
        rotated = PerturbationBasis(
            basis.vectors @ rotation, basis.n, basis.support, basis.weights
        )
        other = basis_jacobian(system, solution, rotated)
        first = deviation_distribution(operator, "uniform", 50_000, seed=4)
        second = deviation_distribution(other, "uniform", 50_000, seed=5)
        # Same law sampled through two bases: compare empirical CDFs.
        grid = np.quantile(first.samples, np.linspace(0.05, 0.95, 19))
        gaps = [
            abs(first.empirical_cdf(v) - second.empirical_cdf(v)) for v in grid
        ]
        assert max(gaps) <= 0.02


class TestSocietyDistribution:
    def test_exact_cdf_values(self):
        system, operator = society_operator()
        report = society_distribution(
            operator, system.society_weights, "uniform", 10_000, seed=0
        )
        norm = report.society_norm
        d = operator.dimension
        assert society_uniform_cdf(0.0, norm, d) == 0.5
        assert society_uniform_cdf(norm, norm, d) == 1.0
        assert society_uniform_cdf(-norm, norm, d) == 0.0
        assert society_gaussian_cdf(norm, norm) == pytest.approx(0.84134474606854, abs=1e-10)
        assert report.analytic["cdf_at_zero"] == 0.5

    def test_uniform_ks_distance(self):
        system, operator = society_operator()
        report = society_distribution(
            operator, system.society_weights, "uniform", 40_000, seed=1
        )
        d = operator.dimension
        distance = ks_distance(
            report.samples, lambda v: society_uniform_cdf(v, report.society_norm, d)
        )
        assert distance <= 0.015

    def test_gaussian_ks_distance(self):
        system, operator = society_operator()
        report = society_distribution(
            operator, system.society_weights, "gaussian", 40_000, seed=2
        )
        distance = ks_distance(
            report.samples, lambda v: society_gaussian_cdf(v, report.society_norm)
        )
        assert distance <= 0.015

    def test_gaussian_variance(self):
        system, operator = society_operator()
        report = society_distribution(
            operator, system.society_weights, "gaussian", 200_000, seed=3
        )
        assert float(report.samples.var()) == pytest.approx(
            report.society_norm**2, rel=0.02
        )

    def test_degenerate_norm_gives_point_mass(self):
        system, operator = society_operator()
        report = society_distribution(
            operator, np.zeros(4), "uniform", 1_000, seed=4
        )
        assert report.society_norm == 0.0
        assert np.all(report.samples == 0.0)
        assert report.analytic["point_mass_at"] == 0.0

    def test_samples_are_sorted(self):
        system, operator = society_operator()
        report = society_distribution(
            operator, system.society_weights, "uniform", 5_000, seed=5
        )
        assert np.all(np.diff(report.samples) >= 0)


class TestConfidenceBands:
    def test_zero_step_bands_vanish(self):
        system = four_bank_society_system()
        bands = confidence_bands(system, "uniform", [0.0], [0.5, 0.9], 2_000, seed=0)
        for row in bands.rows:
            assert row.low == row.high == 0.0

    def test_small_step_matches_first_order(self):
        system = four_bank_society_system()
        bands = confidence_bands(
            system, "uniform", [1e-4], [0.9], 20_000, seed=1
        )
        row = bands.rows[0]
        assert row.low == pytest.approx(row.first_order_low, rel=0.01)
        assert row.high == pytest.approx(row.first_order_high, rel=0.01)
        assert row.rejected_fraction == 0.0

    def test_median_stays_near_zero(self):
        # Symmetry of the coefficient laws; steps kept small enough that
        # rejection (which skews the conditional law) stays negligible.
        system = four_bank_society_system()
        grids = {"uniform": [0.05, 0.2], "gaussian": [0.02, 0.05]}
        for law, grid in grids.items():
            bands = confidence_bands(system, law, grid, [0.0, 0.9], 100_000, seed=2)
            widths = {
                row.h: row.high - row.low for row in bands.rows if row.level == 0.9
            }
            for row in bands.rows:
                if row.level == 0.0:
                    assert row.rejected_fraction <= 0.01
                    assert abs(row.low) <= 0.02 * widths[row.h]

    def test_rejections_counted(self):
        system = four_bank_society_system()
        bands = confidence_bands(
            system, "gaussian", [0.5], [0.9], 5_000, seed=3
        )
        row = bands.rows[0]
        assert 0.0 <= row.rejected_fraction < 1.0

    def test_all_rejected_raises(self):
        system = four_bank_society_system()
        with pytest.raises(NumericsError):
            confidence_bands(system, "uniform", [1e9], [0.9], 200, seed=4)

    def test_requires_society(self):
        with pytest.raises(ValueError):
            confidence_bands(four_bank_system(), "uniform", [0.1], [0.5], 100, seed=5)

    def test_deterministic(self):
        system = four_bank_society_system()
        a = confidence_bands(system, "uniform", [0.1], [0.5], 4_000, seed=6)
        b = confidence_bands(system, "uniform", [0.1], [0.5], 4_000, seed=6)
        assert a.rows == b.rows
