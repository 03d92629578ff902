"""Worst-case directions, their bounds, and basis independence."""

import numpy as np
import pytest
from scipy.stats import ortho_group

from clearnet import (
    FinancialSystem,
    basis_jacobian,
    clear,
    deviation_bounds,
    directional_derivative,
    is_admissible,
    orthonormal_basis,
    society_bounds,
    worst_case_deviation,
    worst_society_shortfall,
)
from clearnet.errors import NumericsError
from clearnet.perturb import PerturbationBasis

from helpers import (
    FOUR_BANK_WORST_DELTA,
    align_sign,
    four_bank_society_system,
    four_bank_system,
    random_regular_system,
    random_unit_direction,
)


def fixed_basis(system):
    return orthonormal_basis(
        system.relative_liabilities, system.total_obligations, "fixed"
    )


class TestWorstCaseDeviation:
    def test_matches_known_four_bank_direction(self):
        system = four_bank_system()
        report = worst_case_deviation(system, fixed_basis(system))
        aligned = align_sign(report.optimizer, FOUR_BANK_WORST_DELTA)
        assert np.abs(aligned - FOUR_BANK_WORST_DELTA).max() <= 5e-3
        assert abs(np.linalg.norm(report.optimizer) - 1.0) <= 1e-9
        assert report.sign_ambiguous

    def test_optimizer_is_admissible(self):
        rng = np.random.default_rng(50)
        system, _ = random_regular_system(rng, n=6)
        basis = fixed_basis(system)
        report = worst_case_deviation(system, basis)
        ok, violations = is_admissible(
            report.optimizer,
            system.relative_liabilities,
            system.total_obligations,
            "fixed",
        )
        assert ok, violations

    def test_no_default_network_has_zero_objective(self):
        base = four_bank_system()
        rich = FinancialSystem.from_liabilities(
            base.liabilities, base.total_obligations
        )
        report = worst_case_deviation(rich, fixed_basis(rich))
        assert report.objective == 0.0

    def test_random_directions_never_beat_the_optimum(self):
        # Sampling oracle for the maximization over the unit ball.
        system = four_bank_system()
        solution = clear(system)
        basis = fixed_basis(system)
        report = worst_case_deviation(system, basis)
        rng = np.random.default_rng(51)
        worst_seen = 0.0
        for _ in range(1000):
            delta = random_unit_direction(basis, rng)
            value = np.sum(directional_derivative(system, solution, delta) ** 2)
            worst_seen = max(worst_seen, value)
            assert value <= report.objective + 1e-9
        assert worst_seen > 0.5 * report.objective  # the bound is live

    def test_objective_symmetry_in_sign(self):
        system = four_bank_system()
        solution = clear(system)
        report = worst_case_deviation(system, fixed_basis(system))
        forward = np.sum(directional_derivative(system, solution, report.optimizer) ** 2)
        backward = np.sum(
            directional_derivative(system, solution, -report.optimizer) ** 2
        )
        assert forward == pytest.approx(backward, rel=1e-12)
        assert forward == pytest.approx(report.objective, rel=1e-9)

    def test_empty_basis_reports_zero(self):
        pi = np.array([[0.0, 1.0], [1.0, 0.0]])
        system = FinancialSystem.from_liabilities(
            [[0.0, 2.0], [3.0, 0.0]], [1.0, 0.5]
        )
        basis = orthonormal_basis(pi, system.total_obligations, "fixed")
        assert basis.dimension == 0
        report = worst_case_deviation(system, basis)
        assert report.objective == 0.0 and report.optimizer is None

    def test_first_order_realization(self):
        from clearnet import h_star_star, perturbed_system

        system = four_bank_system()
        solution = clear(system)
        report = worst_case_deviation(system, fixed_basis(system))
        h = 1e-3 * h_star_star(system, report.optimizer)
        shifted = clear(perturbed_system(system, report.optimizer, h)).payments
        realized = np.sum((shifted - solution.payments) ** 2) / (h * h)
        assert realized == pytest.approx(report.objective, rel=0.02)

    def test_normalizations(self):
        system = four_bank_system()
        basis = fixed_basis(system)
        plain = worst_case_deviation(system, basis, "none")
        by_clearing = worst_case_deviation(system, basis, "clearing")
        by_liability = worst_case_deviation(system, basis, "liabilities")
        assert by_clearing.objective != pytest.approx(plain.objective)
        assert by_liability.objective > 0
        # Custom matrix equal to the clearing normalization must agree.
        solution = clear(system)
        custom = worst_case_deviation(system, basis, np.diag(1.0 / solution.payments))
        assert custom.objective == pytest.approx(by_clearing.objective, rel=1e-12)
        assert custom.normalization == "custom"

    def test_zero_payment_normalization_rejected(self):
        # Bank 0 has no assets and no incoming value: it pays exactly zero.
        system = FinancialSystem.from_liabilities(
            [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]],
            [0.0, 0.5, 1.0],
        )
        assert clear(system).payments[0] == 0.0
        basis = fixed_basis(system)
        with pytest.raises(NumericsError):
            worst_case_deviation(system, basis, "clearing")


class TestDeviationBounds:
    def test_complete_network_attains_the_bound(self):
        lower, upper = deviation_bounds(four_bank_system())
        assert lower == pytest.approx(upper, rel=1e-9)

    def test_chain_network_has_trivial_lower_bound(self):
        # One outgoing link per bank: the fixed support admits no direction.
        chain = FinancialSystem.from_liabilities(
            [[0, 1, 0], [0, 0, 2], [3, 0, 0]], [0.5, 0.5, 0.1]
        )
        assert clear(chain).defaults.sum() == 2
        lower, upper = deviation_bounds(chain)
        assert lower == 0.0
        assert upper > 0.0

    def test_ordering_on_random_networks(self):
        rng = np.random.default_rng(52)
        for _ in range(10):
            system, _ = random_regular_system(rng, density=0.4)
            lower, upper = deviation_bounds(system)
            assert lower <= upper + 1e-12


class TestSocietyShortfall:
    def test_synthetic_society_fixture(self):
        system = four_bank_society_system()
        solution = clear(system)
        basis = fixed_basis(system)
        report = worst_society_shortfall(system, basis)
        assert report.objective < 0
        derivative = directional_derivative(system, solution, report.optimizer)
        attained = float(system.society_weights @ derivative)
        assert attained == pytest.approx(report.objective, abs=1e-8)
        ok, violations = is_admissible(
            report.optimizer,
            system.relative_liabilities,
            system.total_obligations,
            "fixed",
        )
        assert ok, violations

    def test_random_directions_never_go_lower(self):
        system = four_bank_society_system()
        solution = clear(system)
        basis = fixed_basis(system)
        report = worst_society_shortfall(system, basis)
        rng = np.random.default_rng(53)
        for _ in range(1000):
            delta = random_unit_direction(basis, rng)
            change = float(
                system.society_weights
                @ directional_derivative(system, solution, delta)
            )
            assert change >= report.objective - 1e-9

    def test_sign_asymmetry(self):
        system = four_bank_society_system()
        solution = clear(system)
        report = worst_society_shortfall(system, fixed_basis(system))
        flipped = float(
            system.society_weights
            @ directional_derivative(system, solution, -report.optimizer)
        )
        assert flipped == pytest.approx(-report.objective, rel=1e-9)
        assert flipped > 0

    def test_no_default_society_system(self):
        base = four_bank_society_system()
        rich = FinancialSystem.from_liabilities(
            base.liabilities,
            base.total_obligations,
            society_liabilities=base.society_liabilities,
        )
        report = worst_society_shortfall(rich, fixed_basis(rich))
        assert report.objective == 0.0 and report.optimizer is None

    def test_all_default_society_system(self):
        system = FinancialSystem.from_liabilities(
            10.0 * np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0.0]]),
            [0.1, 0.1, 0.1],
            society_liabilities=[1.0, 1.0, 1.0],
        )
        solution = clear(system)
        assert solution.defaults.all()
        report = worst_society_shortfall(system, fixed_basis(system))
        assert report.objective == 0.0

    def test_society_required(self):
        system = four_bank_system()
        with pytest.raises(ValueError):
            worst_society_shortfall(system, fixed_basis(system))


class TestSocietyBounds:
    def test_complete_network_attains_the_bound(self):
        lower, upper = society_bounds(four_bank_society_system())
        assert lower == pytest.approx(upper, rel=1e-9)
        assert upper <= 0.0

    def test_no_default_gives_zeros(self):
        base = four_bank_society_system()
        rich = FinancialSystem.from_liabilities(
            base.liabilities,
            base.total_obligations,
            society_liabilities=base.society_liabilities,
        )
        assert society_bounds(rich) == (0.0, 0.0)

    def test_ordering_on_random_networks(self):
        rng = np.random.default_rng(54)
        count = 0
        for _ in range(20):
            system, _ = random_regular_system(rng, density=0.4, society=True)
            lower, upper = society_bounds(system)
            assert lower <= upper + 1e-12
            assert upper <= 1e-12
            count += 1
        assert count == 20


class TestBasisIndependence:
    def test_objectives_and_norms(self):
        system = four_bank_society_system()
        solution = clear(system)
        basis = fixed_basis(system)
        rotation = ortho_group.rvs(basis.dimension, random_state=99)
        rotated = PerturbationBasis(
            basis.vectors @ rotation, basis.n, basis.support, basis.weights
        )

        deviation_a = worst_case_deviation(system, basis)
        deviation_b = worst_case_deviation(system, rotated)
        assert deviation_a.objective == pytest.approx(deviation_b.objective, rel=1e-9)

        society_a = worst_society_shortfall(system, basis)
        society_b = worst_society_shortfall(system, rotated)
        assert society_a.objective == pytest.approx(society_b.objective, rel=1e-9)
        # The society optimizer itself is basis-independent, not only its value.
        assert np.abs(society_a.optimizer - society_b.optimizer).max() <= 1e-9

        op_a = basis_jacobian(system, solution, basis)
        op_b = basis_jacobian(system, solution, rotated)
        norm_a = np.linalg.norm(op_a.jacobian.T @ system.society_weights)
        norm_b = np.linalg.norm(op_b.jacobian.T @ system.society_weights)
        assert norm_a == pytest.approx(norm_b, rel=1e-9)
