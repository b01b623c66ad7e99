import numpy as np
from django.test import SimpleTestCase

from fiber_calculus.grid import BundleGrid
from fiber_calculus.operators import apply_V, apply_X, lambda_values, multiply
from fiber_calculus.services import norm
from geometry.exceptions import NonConvexScene
from geometry.fields import ConstantVectorField, PoincareConformalFactor, RadialVectorField
from geometry.scene import ThermostatScene
from geometry.services import exit_time_model

from .exceptions import TrappedOrbit
from .fan import BoundaryFan, FanFunction, entry_angle, incoming_coordinates, outgoing_coordinates
from .integrator import REACHED_END
from .services import (
    PhasePoint,
    first_integral_extend,
    integrate_orbit,
    integrate_rays,
    inverse_scattering,
    map_chunks,
    nontrapping_guard,
    operator_A,
    scattering_relation,
    speed_drift,
    thermostat_rhs,
)


class ThermostatRhsTest(SimpleTestCase):

    def test_geodesic_reduction_flat(self):
        scene = ThermostatScene()
        rate = thermostat_rhs(scene, np.array([[0.2, 0.1]]), np.array([0.7]))
        np.testing.assert_allclose(rate[0], [np.cos(0.7), np.sin(0.7), 0.0], atol=1e-15)

    def test_constant_field_drift(self):
        scene = ThermostatScene(efield=ConstantVectorField([0.3, 0.0]))
        thetas = np.linspace(0, 2 * np.pi, 7)
        rate = thermostat_rhs(scene, np.zeros((7, 2)), thetas)
        np.testing.assert_allclose(rate[:, 2], -0.3 * np.sin(thetas), atol=1e-15)


class IntegrateOrbitTest(SimpleTestCase):

    def test_diameter_chord(self):
        record = integrate_orbit(ThermostatScene(), PhasePoint([-1.0, 0.0], 0.0))
        self.assertAlmostEqual(record.tau, 2.0, places=10)
        np.testing.assert_allclose(record.exit_point.x, [1.0, 0.0], atol=1e-10)
        self.assertAlmostEqual(record.exit_point.theta, 0.0, places=12)

    def test_oblique_chord(self):
        record = integrate_orbit(ThermostatScene(), PhasePoint([0.0, -1.0], np.pi / 4))
        self.assertAlmostEqual(record.tau, np.sqrt(2.0), places=10)

    def test_constant_field_angle_law(self):
        e = 0.3
        scene = ThermostatScene(efield=ConstantVectorField([e, 0.0]))
        theta0 = 1.0
        record = integrate_orbit(scene, PhasePoint([0.0, 0.0], theta0))
        expected = 2.0 * np.arctan(np.tan(theta0 / 2) * np.exp(-e * record.tau))
        self.assertAlmostEqual(record.exit_point.theta, expected, places=8)
        for t, point in record.samples[::10]:
            law = 2.0 * np.arctan(np.tan(theta0 / 2) * np.exp(-e * t))
            self.assertAlmostEqual(point.theta, law, places=8)

    def test_poincare_diameter(self):
        radius = 0.8
        scene = ThermostatScene(radius=radius, sigma=PoincareConformalFactor())
        record = integrate_orbit(scene, PhasePoint([-radius, 0.0], 0.0))
        self.assertAlmostEqual(record.tau, 4.0 * np.arctanh(radius), places=8)
        # a geodesic through the origin stays on its line
        self.assertLess(max(abs(p.x[1]) for _, p in record.samples), 1e-12)

    def test_exit_lies_on_boundary_and_points_out(self):
        scene = ThermostatScene(efield=RadialVectorField(0.5))
        fan = BoundaryFan.build(scene, 8, 8)
        table = scattering_relation(scene, fan)
        np.testing.assert_allclose(np.hypot(table.exit_x[:, 0], table.exit_x[:, 1]), 1.0, atol=1e-11)
        self.assertTrue(np.all(np.abs(table.exit_alpha) <= np.pi / 2 + 1e-9))
        self.assertTrue(np.all(table.tau > 0))

    def test_trapping_guard_raises(self):
        with self.assertRaises(TrappedOrbit):
            integrate_orbit(ThermostatScene(), PhasePoint([-1.0, 0.0], 0.0), t_max=0.5)


class ScatteringRelationTest(SimpleTestCase):

    def test_flat_fan_matches_chord_formula(self):
        scene = ThermostatScene()
        fan = BoundaryFan.build(scene, 16, 16)
        table = scattering_relation(scene, fan)
        np.testing.assert_allclose(table.tau, 2.0 * np.cos(fan.alpha), rtol=1e-8)
        np.testing.assert_allclose(table.exit_alpha, -fan.alpha, atol=1e-9)

    def test_round_trip_through_inverse(self):
        scene = ThermostatScene(radius=0.7, sigma=PoincareConformalFactor(), efield=RadialVectorField(0.4))
        fan = BoundaryFan.build(scene, 8, 6)
        table = scattering_relation(scene, fan)
        x, theta, tau = inverse_scattering(scene, table.exit_x, table.exit_theta)
        np.testing.assert_allclose(x, fan.x, atol=1e-7)
        np.testing.assert_allclose(np.cos(theta - fan.theta), 1.0, atol=1e-12)
        np.testing.assert_allclose(tau, table.tau, rtol=1e-8)

    def test_reversibility_by_flip(self):
        scene = ThermostatScene(efield=ConstantVectorField([0.3, -0.2]))
        x0 = np.array([[0.1, 0.2], [-0.3, 0.0]])
        theta0 = np.array([0.4, 2.0])
        forward = integrate_rays(scene, x0, theta0, t_end=0.5)
        self.assertTrue(np.all(forward.status == REACHED_END))
        back = integrate_rays(scene, forward.y[:, :2], forward.y[:, 2] + np.pi, t_end=0.5)
        np.testing.assert_allclose(back.y[:, :2], x0, atol=1e-7)
        np.testing.assert_allclose(np.cos(back.y[:, 2] - theta0 - np.pi), 1.0, atol=1e-12)

    def test_near_tangential_exit_time(self):
        scene = ThermostatScene(efield=RadialVectorField(0.5))
        alpha = np.pi / 2 - 1e-3
        x = np.array([[1.0, 0.0]])
        table = integrate_rays(scene, x, [entry_angle(0.0, alpha)])
        model = float(exit_time_model(scene, 0.0, alpha))
        self.assertAlmostEqual(abs(float(table.t[0])) / model, 1.0, places=2)

    def test_nontrapping_guard(self):
        scene = ThermostatScene()
        fan = BoundaryFan.build(scene, 8, 8)
        longest = nontrapping_guard(scene, fan)
        self.assertAlmostEqual(longest, 2.0 * np.cos(np.pi / 16), places=9)

    def test_guard_rejects_non_convex(self):
        scene = ThermostatScene(efield=RadialVectorField(-2.0))
        with self.assertRaises(NonConvexScene):
            nontrapping_guard(scene, BoundaryFan.build(scene, 4, 4))


class IsokineticTest(SimpleTestCase):

    def test_speed_drift(self):
        scene = ThermostatScene(radius=0.8, sigma=PoincareConformalFactor(), efield=ConstantVectorField([0.05, 0.02]))
        fan = BoundaryFan.build(scene, 6, 4)
        drift = speed_drift(scene, fan.x, fan.theta)
        self.assertLess(float(np.max(drift)), 1e-9)


class FanTest(SimpleTestCase):

    def test_incoming_condition(self):
        scene = ThermostatScene(radius=0.6, sigma=PoincareConformalFactor())
        fan = BoundaryFan.build(scene, 8, 8)
        components = fan.normal_components()
        self.assertTrue(np.all(components > 0))
        np.testing.assert_allclose(components, np.cos(fan.alpha), atol=1e-13)

    def test_fan_interpolation_is_periodic(self):
        fan = BoundaryFan.build(ThermostatScene(), 32, 32)
        values = (np.cos(fan.beta) * np.sin(fan.alpha) + 1j * np.sin(2 * fan.beta)).reshape(fan.shape)
        interpolant = FanFunction(fan, values)
        beta = np.array([0.01, 3.0, 2 * np.pi - 0.02])
        alpha = np.array([0.3, -0.7, 1.0])
        expected = np.cos(beta) * np.sin(alpha) + 1j * np.sin(2 * beta)
        np.testing.assert_allclose(interpolant(beta, alpha), expected, atol=1e-4)

    def test_map_chunks_keeps_order(self):
        chunks = map_chunks(lambda idx: idx * 2, 10, threads=3, chunk=3)
        np.testing.assert_array_equal(np.concatenate(chunks), 2 * np.arange(10))


class FirstIntegralTest(SimpleTestCase):

    def test_flat_extension_reads_the_entry_point(self):
        scene = ThermostatScene()
        grid = BundleGrid(scene, 12, 8)
        fan = BoundaryFan.build(scene, 8, 8)
        w = FanFunction.from_callable(fan, lambda beta, alpha: np.cos(beta))
        extended = first_integral_extend(scene, w, grid)

        def expected(x, theta):
            v = np.stack(np.broadcast_arrays(np.cos(theta), np.sin(theta)), axis=-1)
            along = np.sum(x * v, axis=-1)
            back = along + np.sqrt(along ** 2 + 1.0 - np.sum(x * x, axis=-1))
            return x[..., 0] - back * v[..., 0]

        np.testing.assert_allclose(extended.values, grid.phase_array(expected), atol=1e-8)

    def test_extension_is_annihilated_by_the_generator(self):
        scene = ThermostatScene(efield=RadialVectorField(0.3))
        fan = BoundaryFan.build(scene, 8, 8)
        w = FanFunction.from_callable(fan, lambda beta, alpha: np.cos(beta) + 0.5 * np.sin(alpha))
        residuals = []
        for n_x in (16, 32):
            grid = BundleGrid(scene, n_x, 32)
            extended = first_integral_extend(scene, w, grid)
            generated = apply_X(extended) + multiply(lambda_values(grid), apply_V(extended))
            core = grid.core_mask(0.3)
            residuals.append(norm(generated, core) / norm(extended, core))
        self.assertLess(residuals[1], 0.25 * residuals[0])
        self.assertLess(residuals[1], 1e-3)


class BoundaryOperatorTest(SimpleTestCase):

    def test_outgoing_side_is_w_after_inverse_scattering(self):
        scene = ThermostatScene(radius=0.7, sigma=PoincareConformalFactor(), efield=RadialVectorField(0.4))
        fan = BoundaryFan.build(scene, 8, 6)

        def w(beta, alpha):
            return np.cos(beta) * np.exp(alpha) + 1j * np.sin(2.0 * beta)

        table = scattering_relation(scene, fan)
        result = operator_A(table, w(fan.beta, fan.alpha))
        np.testing.assert_array_equal(result['incoming'], w(fan.beta, fan.alpha))
        entry_x, entry_theta, _ = inverse_scattering(scene, table.exit_x, table.exit_theta)
        beta, alpha = incoming_coordinates(entry_x, entry_theta)
        np.testing.assert_allclose(result['outgoing'], w(beta, alpha), atol=1e-6)
        exit_beta, exit_alpha = outgoing_coordinates(table.exit_x, table.exit_theta)
        np.testing.assert_allclose(result['outgoing_beta'], exit_beta, atol=1e-12)
        np.testing.assert_allclose(result['outgoing_alpha'], exit_alpha, atol=1e-12)
        self.assertTrue(np.all(np.abs(result['outgoing_alpha']) <= np.pi / 2 + 1e-9))
