import numpy as np
from django.test import SimpleTestCase
from scipy.linalg import expm

from fiber_calculus.generators import random_band_limited
from fiber_calculus.grid import BundleGrid
from flow.fan import BoundaryFan, FanFunction, entry_angle
from flow.services import PhasePoint, thermostat_rhs
from geometry.fields import ConstantVectorField, PoincareConformalFactor, RadialVectorField
from geometry.scene import ThermostatScene

from .connections import (
    ConnectionPair,
    ConstantMatrixField,
    ExponentialMatrixField,
    PolynomialMatrixField,
    ZeroMatrixField,
    matrix_field_from_config,
    random_pair,
    skew_hermitian_part,
)
from .exceptions import (
    BoundaryValueError,
    RankMismatchError,
    SingularGaugeError,
    TensorOrderMismatch,
    UnknownMatrixFieldKind,
)
from .services import (
    gauge_boundary_defect,
    gauge_transform,
    kernel_element,
    operator_Q,
    parallel_transport,
    pseudolinear_source,
    pseudolinearize,
    ray_transform,
    scattering_data_map,
    transport_solution,
    w_sharp,
)
from .tensors import (
    CutoffTensorField,
    PolynomialTensorField,
    SourcePair,
    SymmetricTensorField,
    coefficients_from_samples,
    projection_angles,
    source_from_config,
    transport_derivative,
)


def scalar_higgs(value: complex) -> ConnectionPair:
    return ConnectionPair(ZeroMatrixField(1), ZeroMatrixField(1), ConstantMatrixField([[value]]))


def constant_source(value: complex = 1.0) -> SourcePair:
    return SourcePair(SymmetricTensorField(0, 1, lambda x: np.full(np.shape(x)[:-1] + (1, 1), value, dtype=complex)))


def bubble_gauge(rng, n: int = 2, amplitude: float = 0.6) -> ExponentialMatrixField:
    """expm(M (1 - |x|^2)) with M skew-Hermitian, equal to Id on the unit circle."""
    m = skew_hermitian_part(amplitude * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))))
    return ExponentialMatrixField(PolynomialMatrixField([(0, 0, m), (2, 0, -m), (0, 2, -m)]))


def random_cutoff_tensor(rng, order: int, n: int, radius: float = 1.0) -> CutoffTensorField:
    exponents = [(0, 0), (1, 0), (0, 1), (1, 1)]
    table = rng.normal(size=(len(exponents), order + 1, n)) + 1j * rng.normal(size=(len(exponents), order + 1, n))
    return CutoffTensorField(PolynomialTensorField(order, n, exponents, 0.3 * table), radius)


class ExactBandLimitedSource:
    """Evaluates a band-limited test function at arbitrary phase points."""

    n = 1

    def __init__(self, func):
        self.func = func

    def induced(self, scene, x, theta):
        theta = np.broadcast_to(np.asarray(theta, dtype=float), np.shape(x)[:-1])
        out = np.zeros(theta.shape, dtype=complex)
        for k in self.func.coefficients:
            out = out + self.func.coefficient(k, x) * np.exp(1j * k * theta)
        return out[..., None]


class MatrixFieldTest(SimpleTestCase):

    def test_config_kinds(self):
        field = matrix_field_from_config({'kind': 'linear', 'params': {
            'm0': [[0, 1], [0, 0]], 'm1': {'re': [[1, 0], [0, 0]]}, 'm2': [[0, 0], [0, 1]],
        }}, 2)
        np.testing.assert_allclose(field.value(np.array([2.0, 3.0])), [[2, 1], [0, 3]])
        self.assertEqual(matrix_field_from_config(None, 3).n, 3)
        with self.assertRaises(UnknownMatrixFieldKind):
            matrix_field_from_config({'kind': 'spline'}, 2)
        with self.assertRaises(RankMismatchError):
            matrix_field_from_config({'kind': 'constant', 'params': {'matrix': [[1, 0], [0, 1]]}}, 3)

    def test_exponential_gradient_matches_differences(self):
        gauge = bubble_gauge(np.random.default_rng(3))
        x = np.array([0.3, -0.2])
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (gauge.value(x + e) - gauge.value(x - e)) / (2 * h)
            np.testing.assert_allclose(gauge.gradient(x)[i], fd, atol=1e-8)

    def test_star_curvature_of_abelian_example(self):
        # A = i x^1 dx^2 on the flat disk has d_1 A_2 = i
        pair = ConnectionPair(ZeroMatrixField(1), PolynomialMatrixField([(1, 0, [[1j]])]), ZeroMatrixField(1))
        x = np.array([[0.1, 0.2], [-0.4, 0.3]])
        np.testing.assert_allclose(pair.star_curvature(ThermostatScene(), x)[:, 0, 0], 1j)

    def test_structure_flags(self):
        rng = np.random.default_rng(0)
        self.assertTrue(random_pair(rng, 2, unitary=True).is_unitary(1.0))
        self.assertFalse(random_pair(rng, 2, unitary=False).is_unitary(1.0))

    def test_pair_ranks_must_agree(self):
        with self.assertRaises(RankMismatchError):
            ConnectionPair(ZeroMatrixField(1), ZeroMatrixField(2), ZeroMatrixField(1))

    def test_kronecker_lift(self):
        rng = np.random.default_rng(1)
        a, b = random_pair(rng, 2), random_pair(rng, 2)
        lifted = pseudolinearize(a, b)
        x = np.array([0.2, 0.4])
        big = lifted.a1.value(x)
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        expected = a.a1.value(x) @ m - m @ b.a1.value(x)
        np.testing.assert_allclose(big @ m.reshape(-1), expected.reshape(-1), atol=1e-12)


class TensorTest(SimpleTestCase):

    def test_projection_recovers_coefficients(self):
        rng = np.random.default_rng(2)
        order, n = 3, 2
        coeffs = rng.normal(size=(order + 1, n)) + 1j * rng.normal(size=(order + 1, n))
        field = SymmetricTensorField(order, n, lambda x: np.broadcast_to(coeffs, np.shape(x)[:-1] + coeffs.shape))
        theta = projection_angles(order)
        samples = field.induced(ThermostatScene(), np.zeros((theta.size, 2)), theta)
        np.testing.assert_allclose(coefficients_from_samples(order, samples, theta), coeffs, atol=1e-12)

    def test_order_one_induces_a_form(self):
        field = SymmetricTensorField(1, 1, lambda x: np.broadcast_to(np.array([[2.0], [5.0]]), np.shape(x)[:-1] + (2, 1)))
        value = field.induced(ThermostatScene(), np.zeros(2), 0.3)
        self.assertAlmostEqual(complex(value[0]), 2.0 * np.cos(0.3) + 5.0 * np.sin(0.3))

    def test_full_tensor_is_symmetric(self):
        field = random_cutoff_tensor(np.random.default_rng(4), 2, 1)
        full = field.full_tensor(np.array([0.1, 0.2]))
        np.testing.assert_allclose(full[0, 1], full[1, 0])

    def test_transport_derivative_matches_flow(self):
        scene = ThermostatScene(radius=0.8, sigma=PoincareConformalFactor(), efield=RadialVectorField(0.4))
        p = random_cutoff_tensor(np.random.default_rng(5), 2, 2, radius=0.8)
        x = np.array([[0.1, -0.2], [0.3, 0.25]])
        theta = np.array([0.4, 2.5])
        rate = thermostat_rhs(scene, x, theta)
        h = 1e-6
        forward = p.induced(scene, x + h * rate[:, :2], theta + h * rate[:, 2])
        backward = p.induced(scene, x - h * rate[:, :2], theta - h * rate[:, 2])
        np.testing.assert_allclose(transport_derivative(p, scene, x, theta), (forward - backward) / (2 * h), atol=1e-7)

    def test_source_orders_must_differ_by_one(self):
        with self.assertRaises(TensorOrderMismatch):
            SourcePair(random_cutoff_tensor(np.random.default_rng(6), 2, 1),
                       random_cutoff_tensor(np.random.default_rng(7), 2, 1))


class ParallelTransportTest(SimpleTestCase):

    def test_zero_pair_gives_identity(self):
        scene = ThermostatScene(efield=RadialVectorField(0.3))
        data = scattering_data_map(scene, ConnectionPair.zero(2), BoundaryFan.build(scene, 6, 5))
        np.testing.assert_allclose(data.C, np.broadcast_to(np.eye(2), data.C.shape), atol=1e-14)

    def test_constant_higgs_damps_by_exit_time(self):
        phi0 = 0.7
        result = parallel_transport(ThermostatScene(), scalar_higgs(phi0), PhasePoint([-1.0, 0.0], 0.0))
        self.assertAlmostEqual(result.tau, 2.0, places=10)
        self.assertAlmostEqual(complex(result.C[0, 0]), np.exp(-phi0 * 2.0), places=8)

    def test_inverse_is_co_integrated(self):
        scene = ThermostatScene(efield=ConstantVectorField([0.2, -0.1]))
        pair = random_pair(np.random.default_rng(8), 3, unitary=False)
        data = scattering_data_map(scene, pair, BoundaryFan.build(scene, 6, 5))
        self.assertLess(data.inverse_defect, 1e-8)

    def test_unitary_pair_has_unitary_scattering(self):
        scene = ThermostatScene(sigma=PoincareConformalFactor(), radius=0.7)
        pair = random_pair(np.random.default_rng(9), 2, unitary=True)
        data = scattering_data_map(scene, pair, BoundaryFan.build(scene, 6, 5))
        self.assertLess(data.unitarity_defect, 1e-8)

    def test_non_commuting_constant_pair_matches_the_exponential(self):
        a1 = np.array([[0.0, 0.8], [-0.3, 0.2j]])
        a2 = np.array([[0.5j, 0.0], [0.6, -0.4]])
        phi = np.array([[0.1, -0.2j], [0.3, 0.0]])
        self.assertGreater(np.max(np.abs(a1 @ a2 - a2 @ a1)), 0.1)
        pair = ConnectionPair(ConstantMatrixField(a1), ConstantMatrixField(a2), ConstantMatrixField(phi))
        for beta, alpha in ((0.0, 0.0), (1.3, 0.6), (4.0, -1.1)):
            theta = entry_angle(beta, alpha)
            start = PhasePoint([np.cos(beta), np.sin(beta)], theta)
            result = parallel_transport(ThermostatScene(), pair, start)
            self.assertAlmostEqual(result.tau, 2.0 * np.cos(alpha), places=9)
            generator = np.cos(theta) * a1 + np.sin(theta) * a2 + phi
            np.testing.assert_allclose(result.C, expm(-generator * result.tau), atol=1e-7)
            for t, u in zip(result.times, result.U):
                np.testing.assert_allclose(u, expm(-generator * t), atol=1e-7)

    def test_cocycle_over_concatenated_segments(self):
        scene = ThermostatScene(efield=RadialVectorField(0.3))
        pair = random_pair(np.random.default_rng(10), 2, unitary=False)
        start = PhasePoint([0.0, -1.0], np.pi / 2 + 0.2)
        first = parallel_transport(scene, pair, start, t_end=0.6)
        second = parallel_transport(scene, pair, first.end, t_end=0.5)
        whole = parallel_transport(scene, pair, start, t_end=1.1)
        np.testing.assert_allclose(second.C @ first.C, whole.C, atol=1e-7)
        np.testing.assert_allclose(first.U[0], np.eye(2))


class RayTransformTest(SimpleTestCase):

    def test_unit_source_gives_exit_time(self):
        scene = ThermostatScene()
        fan = BoundaryFan.build(scene, 4, 5)
        data = ray_transform(scene, ConnectionPair.zero(1), constant_source(), fan)
        np.testing.assert_allclose(data.values[:, 0], data.tau, atol=1e-9)

    def test_scalar_higgs_weight(self):
        phi0 = 0.5
        scene = ThermostatScene()
        fan = BoundaryFan.build(scene, 4, 5)
        data = ray_transform(scene, scalar_higgs(phi0), constant_source(), fan)
        expected = (np.exp(phi0 * data.tau) - 1.0) / phi0
        np.testing.assert_allclose(data.values[:, 0], expected, rtol=1e-8)

    def test_rank_is_checked(self):
        scene = ThermostatScene()
        with self.assertRaises(RankMismatchError):
            ray_transform(scene, ConnectionPair.zero(2), constant_source(), BoundaryFan.build(scene, 4, 3))

    def test_grid_source_matches_exact_source(self):
        scene = ThermostatScene()
        func = random_band_limited(scene, np.random.default_rng(11), k_max=1, degree=2)
        grid = BundleGrid(scene, 64, 8)
        fan = BoundaryFan.build(scene, 4, 5)
        pair = scalar_higgs(0.2j)
        exact = ray_transform(scene, pair, ExactBandLimitedSource(func), fan).values
        sampled = ray_transform(scene, pair, func.on(grid), fan).values
        self.assertLess(np.max(np.abs(sampled - exact)), 1e-3 * np.max(np.abs(exact)))


class NaturalKernelTest(SimpleTestCase):

    def setUp(self):
        self.scene = ThermostatScene(efield=RadialVectorField(0.3))
        self.fan = BoundaryFan.build(self.scene, 6, 5)
        self.rng = np.random.default_rng(12)

    def test_kernel_elements_have_vanishing_transform(self):
        pair = random_pair(self.rng, 2, unitary=True)
        for order in (0, 1):
            p = random_cutoff_tensor(self.rng, order, 2)
            source = kernel_element(self.scene, pair, p)
            self.assertEqual(source.order, order + 1)
            values = ray_transform(self.scene, pair, source, self.fan).values
            self.assertLess(np.max(np.abs(values)), 1e-7)

    def test_boundary_values_are_rejected(self):
        p = PolynomialTensorField(0, 1, [(0, 0)], np.ones((1, 1, 1)))
        with self.assertRaises(BoundaryValueError):
            kernel_element(self.scene, ConnectionPair.zero(1), p)

    def test_transport_solution_of_kernel_source(self):
        pair = random_pair(self.rng, 2, unitary=True)
        p = random_cutoff_tensor(self.rng, 0, 2)
        grid = BundleGrid(self.scene, 12, 8)
        u = transport_solution(self.scene, pair, kernel_element(self.scene, pair, p), grid)
        expected = grid.phase_array(lambda x, theta: -p.induced(self.scene, x, theta))
        np.testing.assert_allclose(u.values, expected, atol=1e-7)


class GaugeTest(SimpleTestCase):

    def setUp(self):
        self.scene = ThermostatScene()
        self.fan = BoundaryFan.build(self.scene, 6, 5)
        self.rng = np.random.default_rng(13)

    def test_boundary_fixed_gauge_preserves_scattering(self):
        pair = random_pair(self.rng, 2, unitary=True)
        gauge = bubble_gauge(self.rng)
        self.assertLess(gauge_boundary_defect(gauge, self.scene), 1e-12)
        gauged = gauge_transform(gauge, pair)
        before = scattering_data_map(self.scene, pair, self.fan)
        after = scattering_data_map(self.scene, gauged, self.fan)
        self.assertLess(before.difference(after), 1e-7)

    def test_random_boundary_fixed_gauges_with_a_field(self):
        scene = ThermostatScene(efield=RadialVectorField(0.3))
        fan = BoundaryFan.build(scene, 6, 5)
        for n in (1, 2):
            pair = random_pair(self.rng, n, unitary=True)
            before = scattering_data_map(scene, pair, fan)
            for _ in range(5):
                gauge = bubble_gauge(self.rng, n=n)
                after = scattering_data_map(scene, gauge_transform(gauge, pair), fan)
                self.assertLess(before.difference(after), 1e-7)

    def test_gauge_not_fixed_on_boundary_changes_scattering(self):
        pair = random_pair(self.rng, 2, unitary=True)
        m = skew_hermitian_part(self.rng.normal(size=(2, 2)) + 1j * self.rng.normal(size=(2, 2)))
        gauge = ExponentialMatrixField(ConstantMatrixField(m))
        after = scattering_data_map(self.scene, gauge_transform(gauge, pair), self.fan)
        self.assertGreater(scattering_data_map(self.scene, pair, self.fan).difference(after), 1e-3)

    def test_singular_gauge(self):
        with self.assertRaises(SingularGaugeError):
            gauge_transform(ZeroMatrixField(1), ConnectionPair.zero(1))

    def test_pseudolinear_transform_measures_scattering_gap(self):
        a = random_pair(self.rng, 2, unitary=False)
        b = random_pair(self.rng, 2, unitary=False)
        lifted = pseudolinearize(a, b)
        values = ray_transform(self.scene, lifted, pseudolinear_source(a, b), self.fan).values
        data_a = scattering_data_map(self.scene, a, self.fan)
        data_b = scattering_data_map(self.scene, b, self.fan)
        lifted_data = scattering_data_map(self.scene, lifted, self.fan)
        gap = (data_a.C @ data_b.W - np.eye(2)).reshape(self.fan.size, 4)
        expected = -np.einsum('bij,bj->bi', lifted_data.W, gap)
        np.testing.assert_allclose(values, expected, atol=1e-7)

    def test_pseudolinear_transform_vanishes_for_gauge_equivalent_pairs(self):
        a = random_pair(self.rng, 2, unitary=True)
        b = gauge_transform(bubble_gauge(self.rng), a)
        values = ray_transform(self.scene, pseudolinearize(a, b), pseudolinear_source(a, b), self.fan).values
        self.assertLess(np.max(np.abs(values)), 1e-7)

    def test_rank_mismatch(self):
        with self.assertRaises(RankMismatchError):
            pseudolinearize(ConnectionPair.zero(1), ConnectionPair.zero(2))


class BoundaryOperatorTest(SimpleTestCase):

    def test_q_operator_for_scalar_higgs(self):
        phi0 = 0.4
        scene = ThermostatScene()
        fan = BoundaryFan.build(scene, 4, 5)
        data = scattering_data_map(scene, scalar_higgs(phi0), fan)
        w = FanFunction.from_callable(fan, lambda beta, alpha: (np.cos(beta) + alpha)[..., None])
        result = operator_Q(data, w)
        np.testing.assert_allclose(result.outgoing[:, 0], np.exp(-phi0 * data.table.tau) * result.incoming[:, 0])

    def test_w_sharp_for_scalar_higgs(self):
        phi0 = 0.4
        scene = ThermostatScene()
        grid = BundleGrid(scene, 12, 8)
        fan = BoundaryFan.build(scene, 4, 5)
        w = FanFunction.from_callable(fan, lambda beta, alpha: np.ones(np.shape(beta) + (1,)))
        sharp = w_sharp(scene, scalar_higgs(phi0), w, grid)

        def expected(x, theta):
            v = np.stack(np.broadcast_arrays(np.cos(theta), np.sin(theta)), axis=-1)
            along = np.sum(x * v, axis=-1)
            back = along + np.sqrt(along ** 2 + 1.0 - np.sum(x * x, axis=-1))
            return np.exp(-phi0 * back)[..., None]

        np.testing.assert_allclose(sharp.values, grid.phase_array(expected), atol=1e-8)


class SourceConfigTest(SimpleTestCase):

    def test_terms_fill_slots(self):
        block = {
            'f': {'order': 1, 'terms': [[1, 0, 0, [2.0]], [0, 1, 1, {'re': [0.0], 'im': [1.0]}]]},
            'h': {'order': 0, 'terms': [[0, 0, 0, [0.5]]]},
        }
        source = source_from_config(block, 1)
        x = np.array([[0.3, -0.2]])
        np.testing.assert_allclose(source.f.coefficients(x)[0, :, 0], [0.6, -0.2j])
        np.testing.assert_allclose(source.h.coefficients(x)[0, 0, 0], 0.5)

    def test_cutoff_vanishes_on_boundary(self):
        source = source_from_config({'f': {'order': 0, 'terms': [[0, 0, 0, [1.0]]], 'cutoff': True}}, 1)
        self.assertLess(abs(source.f.coefficients(np.array([[0.6, 0.8]]))[0, 0, 0]), 1e-14)
        self.assertIsNone(source.h)

    def test_bad_slot_and_rank(self):
        with self.assertRaises(TensorOrderMismatch):
            source_from_config({'f': {'order': 0, 'terms': [[0, 0, 1, [1.0]]]}}, 1)
        with self.assertRaises(TensorOrderMismatch):
            source_from_config({'f': {'order': 0, 'terms': [[0, 0, 0, [1.0, 2.0]]]}}, 1)
