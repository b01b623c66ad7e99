import numpy as np
from django.test import SimpleTestCase

from geometry.fields import PoincareConformalFactor, RadialVectorField, ZeroScalarField
from geometry.scene import ThermostatScene
from transport.connections import ConnectionPair, PolynomialMatrixField, ZeroMatrixField, random_pair

from .constants import MIN_CONVERGENCE_ORDER, RESIDUAL_FLOOR
from .exceptions import BandwidthOverflow, GridMismatchError, InvalidCurvatureBound, NonUnitaryConnectionError
from .generators import random_band_limited, random_pure_mode, random_weight
from .grid import BundleFunction, BundleGrid
from .operators import apply_eta, apply_frame, apply_V, apply_X, check_bandwidth, lift
from .services import (
    IDENTITIES,
    adjoint_residual,
    carleman_check,
    commutator_check,
    convergence_study,
    energy_identity,
    finite_degree_profile,
    inner_product,
    mode_leakage,
    mu_degree_shift,
    norm,
    restriction_identity,
    star_curvature_report,
    structural_reports,
    verification_suite,
)


def curved_scene() -> ThermostatScene:
    return ThermostatScene(radius=0.8, sigma=PoincareConformalFactor(), efield=RadialVectorField(0.2))


class GridTest(SimpleTestCase):

    def test_liouville_volume_of_flat_disk(self):
        grid = BundleGrid(ThermostatScene(), 32, 8)
        one = BundleFunction(grid, grid.inside[:, :, None] * np.ones(grid.shape))
        self.assertAlmostEqual(norm(one) ** 2, 2.0 * np.pi ** 2, places=10)

    def test_modes_are_orthogonal(self):
        scene = curved_scene()
        rng = np.random.default_rng(0)
        grid = BundleGrid(scene, 24, 16)
        u = random_pure_mode(scene, rng, 1).on(grid)
        w = random_pure_mode(scene, rng, 2).on(grid)
        self.assertLess(abs(inner_product(u, w)), 1e-12 * norm(u) * norm(w))

    def test_grids_must_match(self):
        scene = ThermostatScene()
        with self.assertRaises(GridMismatchError):
            BundleFunction.zeros(BundleGrid(scene, 16, 8)) + BundleFunction.zeros(BundleGrid(scene, 24, 8))

    def test_rejects_odd_fiber_resolution(self):
        with self.assertRaises(ValueError):
            BundleGrid(ThermostatScene(), 16, 7)


class FrameOperatorTest(SimpleTestCase):

    def test_vertical_derivative_is_spectral(self):
        scene = ThermostatScene()
        grid = BundleGrid(scene, 16, 16)
        u = random_pure_mode(scene, np.random.default_rng(1), 2).on(grid)
        np.testing.assert_allclose(apply_V(u).values, 2j * u.values, atol=1e-12)

    def test_geodesic_vector_field_on_a_coordinate(self):
        grid = BundleGrid(ThermostatScene(), 32, 8)
        first = lift(grid, grid.points[..., 0] * grid.inside)
        core = grid.core_mask()
        result = apply_X(first).values[core]
        np.testing.assert_allclose(result, np.broadcast_to(np.cos(grid.thetas), result.shape), atol=1e-12)

    def test_bandwidth_guard(self):
        scene = ThermostatScene()
        grid = BundleGrid(scene, 16, 16)
        u = random_pure_mode(scene, np.random.default_rng(2), 7).on(grid)
        with self.assertRaises(BandwidthOverflow):
            check_bandwidth(u)
        with self.assertRaises(BandwidthOverflow):
            apply_frame(u, 'X')

    def test_eta_does_not_depend_on_the_convention(self):
        scene = curved_scene()
        func = random_band_limited(scene, np.random.default_rng(3), k_max=2)
        bracket = func.on(BundleGrid(scene, 24, 16, 'bracket'))
        rotation = func.on(BundleGrid(scene, 24, 16, 'rotation'))
        for sign in (1, -1):
            np.testing.assert_allclose(apply_eta(bracket, sign).values, apply_eta(rotation, sign).values, atol=1e-12)

    def test_mu_shifts_the_degree(self):
        scene = curved_scene()
        u = random_pure_mode(scene, np.random.default_rng(4), 2).on(BundleGrid(scene, 24, 16))
        self.assertLess(mu_degree_shift(u, 1), 1e-20)
        self.assertLess(mu_degree_shift(u, -1), 1e-20)

    def test_restriction_to_a_mode(self):
        scene = curved_scene()
        rng = np.random.default_rng(5)
        pair = random_pair(rng, 2, unitary=True)
        u = random_pure_mode(scene, rng, 3, components=(2,)).on(BundleGrid(scene, 24, 16))
        residuals = restriction_identity(u, pair, 3)
        self.assertLess(residuals['plus'], 1e-12)
        self.assertLess(residuals['minus'], 1e-12)

    def test_restriction_needs_a_pure_mode(self):
        scene = curved_scene()
        u = random_band_limited(scene, np.random.default_rng(6), k_max=2).on(BundleGrid(scene, 24, 16))
        self.assertGreater(mode_leakage(u, 0), 1e-3)
        with self.assertRaises(ValueError):
            restriction_identity(u, ConnectionPair.zero(1), 0)


class IdentityConvergenceTest(SimpleTestCase):

    def setUp(self):
        self.scene = curved_scene()
        self.rng = np.random.default_rng(7)
        self.resolutions = ((48, 16), (96, 16))

    def assertConverges(self, report):
        if report.residuals[-1] <= RESIDUAL_FLOOR:
            return
        self.assertLess(report.residuals[-1], report.residuals[0])
        self.assertGreaterEqual(report.order, MIN_CONVERGENCE_ORDER)

    def test_round_off_residuals_converge_without_an_order(self):
        func = random_band_limited(self.scene, self.rng, k_max=2, degree=2)
        report = convergence_study('G_decomposition', self.scene, self.resolutions, func)
        self.assertLessEqual(report.residuals[-1], RESIDUAL_FLOOR)
        self.assertConverges(report)
        self.assertTrue(report.passed)

    def test_structural_equations(self):
        func = random_band_limited(self.scene, self.rng, k_max=2, degree=2)
        for convention in ('bracket', 'rotation'):
            for name in ('structural_X_V', 'structural_V_Xperp', 'structural_X_Xperp'):
                report = convergence_study(name, self.scene, self.resolutions, func, convention=convention)
                self.assertConverges(report)

    def test_commutators(self):
        scalar = random_band_limited(self.scene, self.rng, k_max=2, degree=2)
        vector = random_band_limited(self.scene, self.rng, k_max=2, degree=2, components=(2,))
        pair = random_pair(self.rng, 2, unitary=False)
        self.assertConverges(convergence_study('eta_commutator', self.scene, self.resolutions, scalar))
        self.assertConverges(convergence_study('mu_commutator', self.scene, self.resolutions, scalar))
        self.assertConverges(convergence_study('mu_connection_commutator', self.scene, self.resolutions,
                                               vector, pair=pair))

    def test_field_identities(self):
        pair = random_pair(self.rng, 2, unitary=True)
        phi = random_weight(self.scene, self.rng)
        for name in ('lambda_divergence', 'weight_laplacian', 'curvature_fiber'):
            report = convergence_study(name, self.scene, self.resolutions, pair=pair, phi=phi)
            self.assertLess(report.residuals[-1], 1e-4)

    def test_decomposition_is_exact(self):
        func = random_band_limited(self.scene, self.rng, k_max=2, degree=2)
        report = convergence_study('G_decomposition', self.scene, self.resolutions[:1], func)
        self.assertLess(report.residual, 1e-12)
        self.assertTrue(report.passed)

    def test_single_resolution_reports(self):
        u = random_band_limited(self.scene, self.rng, k_max=2, degree=2).on(BundleGrid(self.scene, 48, 16))
        report = commutator_check(u, 'mu')
        self.assertIn('lambda_divergence', report.extras)
        self.assertLess(report.residual, 1e-2)
        self.assertEqual(len(structural_reports(u)), 3)
        with self.assertRaises(ValueError):
            commutator_check(u, 'muA')


class AdjointTest(SimpleTestCase):

    def setUp(self):
        scene = curved_scene()
        rng = np.random.default_rng(8)
        grid = BundleGrid(scene, 64, 16)
        self.u = random_band_limited(scene, rng, k_max=2, degree=2).on(grid)
        self.w = random_band_limited(scene, rng, k_max=2, degree=2).on(grid)

    def test_vertical_adjoint_is_exact(self):
        self.assertLess(adjoint_residual('V', self.u, self.w), 1e-13)

    def test_horizontal_adjoints(self):
        for which in ('X_perp', 'eta', 'G'):
            self.assertLess(adjoint_residual(which, self.u, self.w), 1e-3)

    def test_unknown_relation(self):
        with self.assertRaises(ValueError):
            adjoint_residual('X_plus', self.u, self.w)


class EnergyIdentityTest(SimpleTestCase):

    def setUp(self):
        self.scene = curved_scene()
        self.rng = np.random.default_rng(9)
        self.grid = BundleGrid(self.scene, 64, 16)

    def test_plain_identity(self):
        for k in (-2, 0, 1, 3):
            u = random_pure_mode(self.scene, self.rng, k, degree=2).on(self.grid)
            report = energy_identity(u, 'plain', k=k)
            self.assertLess(report.residual, 1e-3)
            self.assertEqual(report.extras['k'], k)

    def test_weighted_identity(self):
        pair = random_pair(self.rng, 2, unitary=True)
        phi = random_weight(self.scene, self.rng)
        u = random_pure_mode(self.scene, self.rng, 2, degree=2, components=(2,)).on(self.grid)
        report = energy_identity(u, 'weighted', phi=phi, pair=pair, k=2)
        self.assertLess(report.residual, 1e-3)

    def test_weighted_identity_without_weight_or_connection_is_plain(self):
        u = random_pure_mode(self.scene, self.rng, 2, degree=2, components=(2,)).on(self.grid)
        plain = energy_identity(u, 'plain', k=2)
        weighted = energy_identity(u, 'weighted', phi=ZeroScalarField(), pair=ConnectionPair.zero(2), k=2)
        scale = abs(plain.extras['lhs']) + abs(plain.extras['rhs'])
        self.assertLess(abs(weighted.extras['lhs'] - plain.extras['lhs']), 1e-10 * scale)
        self.assertLess(abs(weighted.extras['rhs'] - plain.extras['rhs']), 1e-10 * scale)
        self.assertAlmostEqual(weighted.residual, plain.residual, delta=1e-10)

    def test_weighted_identity_needs_unitary_connection(self):
        pair = random_pair(self.rng, 2, unitary=False)
        u = random_pure_mode(self.scene, self.rng, 1, degree=2, components=(2,)).on(self.grid)
        with self.assertRaises(NonUnitaryConnectionError):
            energy_identity(u, 'weighted', pair=pair, k=1)


class CarlemanTest(SimpleTestCase):

    def test_estimate_holds_on_negative_curvature(self):
        scene = ThermostatScene(radius=0.8, sigma=PoincareConformalFactor())
        grid = BundleGrid(scene, 48, 16)
        rng = np.random.default_rng(10)
        for _ in range(3):
            u = random_band_limited(scene, rng, k_max=3, degree=2).on(grid)
            for s in (1.0, 3.0):
                result = carleman_check(u, s, 1)
                self.assertTrue(result.holds)
                self.assertAlmostEqual(result.kappa, 1.0, places=6)

    def test_flat_scene_has_no_kappa(self):
        scene = ThermostatScene()
        u = random_band_limited(scene, np.random.default_rng(11), k_max=1).on(BundleGrid(scene, 16, 8))
        with self.assertRaises(InvalidCurvatureBound):
            carleman_check(u, 1.0, 1)

    def test_weight_parameters(self):
        scene = ThermostatScene()
        u = BundleFunction.zeros(BundleGrid(scene, 16, 8))
        with self.assertRaises(ValueError):
            carleman_check(u, 0.0, 1, kappa=1.0)


class StarCurvatureTest(SimpleTestCase):

    def setUp(self):
        self.grid = BundleGrid(ThermostatScene(), 48, 8)

    def test_non_unitary_example(self):
        # A = x^2 dx^1 has *F_A = -1 on the flat disk
        pair = ConnectionPair(PolynomialMatrixField([(0, 1, [[1.0]])]), ZeroMatrixField(1), ZeroMatrixField(1))
        report = star_curvature_report(pair, self.grid, eigenvalues=False)
        np.testing.assert_allclose(report.star[self.grid.inside][:, 0, 0], -1.0, atol=1e-12)
        self.assertLess(report.fiber_residual, 1e-8)
        with self.assertRaises(NonUnitaryConnectionError):
            star_curvature_report(pair, self.grid)

    def test_unitary_example_conditions(self):
        # A = i x^1 dx^2: i *F_A = -1
        pair = ConnectionPair(ZeroMatrixField(1), PolynomialMatrixField([(1, 0, [[1j]])]), ZeroMatrixField(1))
        report = star_curvature_report(pair, self.grid, kappa=2.0, chi=1, k_max=3)
        self.assertAlmostEqual(report.integral_min, -np.pi, places=8)
        self.assertAlmostEqual(report.integral_max, -np.pi, places=8)
        self.assertAlmostEqual(report.sup_norm, 1.0, places=12)
        self.assertFalse(any(report.condition_lower.values()))
        self.assertFalse(any(report.condition_upper.values()))
        self.assertTrue(report.condition_k_bound)
        self.assertEqual(report.smallest_admissible_k, 1)
        self.assertIn('smallest_admissible_k', report.to_dict())


class DegreeProfileTest(SimpleTestCase):

    def test_profile_folds_signed_degrees(self):
        scene = ThermostatScene()
        func = random_band_limited(scene, np.random.default_rng(12), degrees=[-2, 2])
        profile = finite_degree_profile(func.on(BundleGrid(scene, 24, 16)))
        self.assertLess(profile.tail_fraction(2), 1e-14)
        self.assertAlmostEqual(profile.tail_fraction(1), 1.0, places=12)
        self.assertEqual(len(profile.rows()), 9)


class VerificationSuiteTest(SimpleTestCase):

    def test_suite_layout(self):
        scene = curved_scene()
        result = verification_suite(scene, seed=1, resolutions=((24, 16), (32, 16)),
                                    energy_samples=1, carleman_samples=1)
        self.assertEqual(len(result['identities']), len(IDENTITIES))
        self.assertGreaterEqual(len(result['energy']), 1)
        self.assertEqual({r['identity'] for r in result['identities']}, set(IDENTITIES))
