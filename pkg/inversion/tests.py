import tempfile

import numpy as np
from diskcache import Cache
from django.test import SimpleTestCase

from fiber_calculus.grid import BundleGrid
from flow.fan import BoundaryFan
from geometry.fields import RadialVectorField
from geometry.scene import ThermostatScene
from transport.connections import (
    ConnectionPair,
    ConstantMatrixField,
    ExponentialMatrixField,
    PolynomialMatrixField,
    ZeroMatrixField,
    random_pair,
)
from transport.services import kernel_element, ray_transform
from transport.tensors import PolynomialTensorField

from .basis import BoundaryVanishingBasis, DiskQuadrature, ForwardBasis, PolynomialBasis
from .exceptions import GaugeNotBoundaryFixed, InvalidBasis, InvalidRegularization
from .services import (
    assemble_forward,
    finite_degree_experiment,
    kernel_analysis,
    kernel_split,
    natural_kernel_basis,
    rebasing_invariance,
    reconstruct,
    rigidity_experiment,
)


def phase_gauge(amplitude: float = 0.8) -> ExponentialMatrixField:
    """exp(i a (1 - |x|^2)), the identity on the unit circle."""
    m = np.array([[1j * amplitude]])
    return ExponentialMatrixField(PolynomialMatrixField([(0, 0, m), (2, 0, -m), (0, 2, -m)]))


def bubble_gauge(rng, amplitude: float = 0.6) -> ExponentialMatrixField:
    m = amplitude * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    m = 0.5 * (m - m.conj().T)
    return ExponentialMatrixField(PolynomialMatrixField([(0, 0, m), (2, 0, -m), (0, 2, -m)]))


class BasisTest(SimpleTestCase):

    def setUp(self):
        self.scene = ThermostatScene(efield=RadialVectorField(0.3))

    def test_polynomials_are_orthonormal(self):
        basis = PolynomialBasis(self.scene, 5)
        quadrature = basis.quadrature
        values = basis.values(quadrature.points)
        gram = values.T @ (quadrature.weights[:, None] * values)
        np.testing.assert_allclose(gram, np.eye(basis.size), atol=1e-10)

    def test_quadrature_measures_the_disk(self):
        self.assertAlmostEqual(float(np.sum(DiskQuadrature.build(self.scene).weights)), np.pi, places=12)

    def test_projection_recovers_polynomial_tensor(self):
        basis = ForwardBasis(self.scene, 1, 2, 3)
        rng = np.random.default_rng(1)
        table = rng.normal(size=(3, 2, 2)) + 1j * rng.normal(size=(3, 2, 2))
        f = PolynomialTensorField(1, 2, [(0, 0), (1, 0), (1, 2)], table)
        coefficients = basis.f.project(f)
        rebuilt = basis.f.field(coefficients)
        points = np.array([[0.1, -0.3], [0.5, 0.2], [-0.4, 0.4]])
        np.testing.assert_allclose(rebuilt.coefficients(points), f.coefficients(points), atol=1e-10)

    def test_column_count(self):
        for order, n, degree in ((0, 1, 2), (1, 2, 3), (2, 1, 4)):
            basis = ForwardBasis(self.scene, order, n, degree)
            polynomials = (degree + 1) * (degree + 2) // 2
            self.assertEqual(basis.size, polynomials * (2 * order + 1) * n)

    def test_induced_columns_match_fields(self):
        basis = ForwardBasis(self.scene, 2, 1, 2)
        x = np.array([[0.2, 0.1], [-0.5, 0.3]])
        theta = np.array([0.4, 2.0])
        columns = basis.induced(self.scene, x, theta)
        index = basis.f.size + 4
        unit = np.zeros(basis.size)
        unit[index] = 1.0
        np.testing.assert_allclose(columns[:, :, index], basis.source(unit).induced(self.scene, x, theta), atol=1e-13)

    def test_order_out_of_range(self):
        with self.assertRaises(InvalidBasis):
            ForwardBasis(self.scene, 3, 1, 2)
        with self.assertRaises(InvalidBasis):
            PolynomialBasis(self.scene, -1)

    def test_boundary_vanishing_basis(self):
        p_basis = BoundaryVanishingBasis(self.scene, 0, 1, 4)
        self.assertEqual(p_basis.size, 10)
        self.assertEqual(BoundaryVanishingBasis(self.scene, 1, 2, 2).size, 3 * 2 * 2)
        self.assertEqual(BoundaryVanishingBasis(self.scene, 0, 1, 0).size, 0)
        betas = np.linspace(0.0, 2.0 * np.pi, 9)
        circle = np.stack([np.cos(betas), np.sin(betas)], axis=-1)
        for i in range(p_basis.size):
            self.assertLess(np.max(np.abs(p_basis.element(i).coefficients(circle))), 1e-14)


class ForwardMapTest(SimpleTestCase):

    def setUp(self):
        self.scene = ThermostatScene()
        self.fan = BoundaryFan.build(self.scene, 8, 6)

    def test_constant_column_is_the_exit_time(self):
        forward = assemble_forward(self.scene, ConnectionPair.zero(1), self.fan, 0, 0)
        chords = 2.0 * np.cos(self.fan.alpha)
        np.testing.assert_allclose(forward.matrix[:, 0] * np.sqrt(np.pi), chords, atol=1e-8)

    def test_shapes(self):
        forward = assemble_forward(self.scene, ConnectionPair.zero(2), self.fan, 1, 2)
        self.assertEqual(forward.real_shape, (2 * 2 * self.fan.size, 6 * 3 * 2))
        self.assertEqual(forward.to_dict()['rows_real'], 2 * 2 * self.fan.size)

    def test_matrix_reproduces_ray_transform(self):
        rng = np.random.default_rng(3)
        pair = random_pair(rng, 2, unitary=True)
        forward = assemble_forward(self.scene, pair, self.fan, 1, 3)
        coefficients = rng.normal(size=forward.basis.size) + 1j * rng.normal(size=forward.basis.size)
        direct = ray_transform(self.scene, pair, forward.basis.source(coefficients), self.fan).values
        np.testing.assert_allclose(forward.apply(coefficients), direct, atol=1e-8)

    def test_kernel_pair_coefficients_are_annihilated(self):
        scene = ThermostatScene(efield=RadialVectorField(0.3))
        fan = BoundaryFan.build(scene, 8, 6)
        forward = assemble_forward(scene, ConnectionPair.zero(1), fan, 1, 4)
        p = BoundaryVanishingBasis(scene, 0, 1, 4).element(1)
        coefficients = forward.basis.coefficients(kernel_element(scene, ConnectionPair.zero(1), p))
        self.assertLess(np.max(np.abs(forward.apply(coefficients))), 1e-7)

    def test_cached_matrix_is_reused(self):
        with tempfile.TemporaryDirectory() as directory, Cache(directory) as cache:
            first = assemble_forward(self.scene, ConnectionPair.zero(1), self.fan, 0, 1, cache=cache, cache_key='k')
            self.assertIn('forward:k', cache)
            second = assemble_forward(self.scene, ConnectionPair.zero(1), self.fan, 0, 1, cache=cache, cache_key='k')
            np.testing.assert_array_equal(first.matrix, second.matrix)


class KernelSplitTest(SimpleTestCase):

    def test_clear_gap(self):
        rank, gap, ambiguous = kernel_split(np.array([1.0, 0.5, 0.1, 1e-12, 1e-13]), 5)
        self.assertEqual(rank, 3)
        self.assertAlmostEqual(gap, 1e11, delta=1.0)
        self.assertFalse(ambiguous)

    def test_no_small_values(self):
        self.assertEqual(kernel_split(np.array([1.0, 0.5]), 2), (2, None, False))

    def test_ambiguous_gap_is_reported(self):
        rank, gap, ambiguous = kernel_split(np.array([1.0, 1e-4, 5e-7, 1e-7]), 4)
        self.assertEqual(rank, 2)
        self.assertAlmostEqual(gap, 200.0)
        self.assertTrue(ambiguous)

    def test_missing_rows_count_as_zero(self):
        rank, _, _ = kernel_split(np.array([1.0, 0.3]), 4)
        self.assertEqual(rank, 2)


class KernelAnalysisTest(SimpleTestCase):

    def setUp(self):
        self.scene = ThermostatScene(efield=RadialVectorField(0.3))
        self.fan = BoundaryFan.build(self.scene, 16, 10)

    def test_kernel_is_natural_for_one_forms(self):
        pair = ConnectionPair.zero(1)
        forward = assemble_forward(self.scene, pair, self.fan, 1, 4)
        report = kernel_analysis(forward, self.scene, pair)
        # p = (1 - |x|^2) q with deg q <= 3
        self.assertEqual(report.natural_dimension, 10)
        self.assertEqual(report.kernel_dimension, 10)
        self.assertFalse(report.gap_ambiguous)
        self.assertLess(report.max_angle, 1e-3)
        self.assertLess(np.max(report.natural_residuals), report.threshold)
        self.assertTrue(np.all((report.principal_angles >= 0.0) & (report.principal_angles <= np.pi / 2)))

    def test_functions_have_no_kernel(self):
        pair = ConnectionPair.zero(1)
        report = kernel_analysis(assemble_forward(self.scene, pair, self.fan, 0, 3), self.scene, pair)
        self.assertEqual(report.kernel_dimension, 0)
        self.assertEqual(report.natural_dimension, 0)

    def test_kernel_with_unitary_pair(self):
        pair = random_pair(np.random.default_rng(5), 2, unitary=True)
        forward = assemble_forward(self.scene, pair, self.fan, 1, 3)
        report = kernel_analysis(forward, self.scene, pair)
        self.assertEqual(report.natural_dimension, 2)
        self.assertEqual(report.kernel_dimension, 2)
        self.assertLess(report.max_angle, 1e-3)

    def test_natural_pairs_leaving_the_span_are_dropped(self):
        # A p has degree deg p, so only p of degree <= 3 keep [dp + A p, 0] inside degree 3
        pair = ConnectionPair(ConstantMatrixField([[0.4j]]), ConstantMatrixField([[-0.2j]]), ZeroMatrixField(1))
        forward = assemble_forward(self.scene, pair, self.fan, 1, 3)
        report = kernel_analysis(forward, self.scene, pair)
        self.assertEqual(report.natural_dimension, 3)
        self.assertEqual(report.kernel_dimension, 3)
        self.assertLess(report.max_angle, 1e-3)

    def test_natural_basis_is_orthonormal_and_annihilated(self):
        pair = ConnectionPair.zero(1)
        forward = assemble_forward(self.scene, pair, self.fan, 1, 3)
        natural = natural_kernel_basis(self.scene, pair, forward.basis)
        self.assertEqual(natural.shape, (forward.basis.size, 6))
        np.testing.assert_allclose(natural.conj().T @ natural, np.eye(6), atol=1e-10)
        scale = np.linalg.norm(forward.matrix, 2)
        self.assertLess(np.linalg.norm(forward.matrix @ natural) / scale, 1e-7)

    def test_singular_values_survive_rebasing(self):
        rng = np.random.default_rng(6)
        pair = random_pair(rng, 2, unitary=True)
        forward = assemble_forward(self.scene, pair, BoundaryFan.build(self.scene, 8, 6), 1, 2)
        q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        self.assertLess(rebasing_invariance(self.scene, pair, forward, q), 1e-7)


class ReconstructionTest(SimpleTestCase):

    def setUp(self):
        self.scene = ThermostatScene(efield=RadialVectorField(0.3))
        self.pair = ConnectionPair.zero(1)
        self.forward = assemble_forward(self.scene, self.pair, BoundaryFan.build(self.scene, 16, 10), 1, 3)
        self.natural = natural_kernel_basis(self.scene, self.pair, self.forward.basis)

    def test_noiseless_data(self):
        rng = np.random.default_rng(7)
        truth = rng.normal(size=self.forward.basis.size) + 1j * rng.normal(size=self.forward.basis.size)
        result = reconstruct(self.forward, self.forward.matrix @ truth, 1e-10, self.natural, truth)
        self.assertLess(result.error, 1e-4)

    def test_kernel_data_reconstructs_to_zero(self):
        column = self.natural[:, 0]
        result = reconstruct(self.forward, self.forward.matrix @ column, 1e-10, self.natural)
        self.assertLess(np.linalg.norm(result.coefficients), 1e-4 * np.linalg.norm(column))

    def test_zero_data(self):
        result = reconstruct(self.forward, np.zeros(self.forward.matrix.shape[0]), 1e-10, self.natural)
        np.testing.assert_array_equal(result.coefficients, 0.0)

    def test_regularization_must_be_positive(self):
        data = np.zeros(self.forward.matrix.shape[0])
        for alpha in (0.0, -1.0, np.nan):
            with self.assertRaises(InvalidRegularization):
                reconstruct(self.forward, data, alpha)


class FiniteDegreeTest(SimpleTestCase):

    def test_kernel_source_solution_has_degree_zero(self):
        scene = ThermostatScene(efield=RadialVectorField(0.3))
        pair = random_pair(np.random.default_rng(8), 2, unitary=True)
        result = finite_degree_experiment(scene, pair, BundleGrid(scene, 12, 8), np.random.default_rng(9))
        self.assertLess(result.solution_error, 1e-6)
        self.assertLess(result.tail_fraction, 1e-6)


class RigidityTest(SimpleTestCase):

    def setUp(self):
        self.scene = ThermostatScene()
        self.fan = BoundaryFan.build(self.scene, 6, 5)
        self.grid = BundleGrid(self.scene, 12, 8)

    def test_identity_gauge(self):
        pair = random_pair(np.random.default_rng(10), 2, unitary=True)
        report = rigidity_experiment(self.scene, pair, ConstantMatrixField(np.eye(2)), self.fan, self.grid,
                                     rays=10, negative_control=False)
        self.assertLess(report.scattering_gap, 1e-10)
        self.assertLess(report.identity_residual, 1e-8)
        self.assertLess(report.pseudolinear_transform, 1e-10)
        self.assertEqual(report.fiber_constancy, 0.0)
        self.assertLess(report.gauge_error, 1e-10)
        self.assertIsNone(report.negative_change)

    def test_abelian_gauge_is_recovered(self):
        pair = random_pair(np.random.default_rng(11), 1, unitary=True)
        report = rigidity_experiment(self.scene, pair, phase_gauge(), self.fan, self.grid, rays=10)
        self.assertLess(report.scattering_gap, 1e-7)
        self.assertLess(report.gauge_error, 1e-6)
        self.assertLess(report.fiber_constancy, 1e-4)
        self.assertLess(report.identity_residual, 1e-6)
        self.assertGreater(report.negative_change, 1e-3)

    def test_bubble_gauge_rank_two(self):
        rng = np.random.default_rng(12)
        pair = random_pair(rng, 2, unitary=True)
        report = rigidity_experiment(self.scene, pair, bubble_gauge(rng), self.fan, self.grid, rays=10)
        self.assertLess(report.scattering_gap, 1e-7)
        self.assertLess(report.pseudolinear_transform, 1e-7)
        self.assertLess(report.fiber_constancy, 1e-4)
        self.assertGreater(report.negative_change, 1e-3)

    def test_gauge_must_fix_the_boundary(self):
        gauge = ExponentialMatrixField(ConstantMatrixField([[0.5j]]))
        with self.assertRaises(GaugeNotBoundaryFixed):
            rigidity_experiment(self.scene, ConnectionPair.zero(1), gauge, self.fan, self.grid)
