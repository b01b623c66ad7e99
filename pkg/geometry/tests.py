import numpy as np
from django.test import SimpleTestCase

from .exceptions import NonConvexScene, NonUnitVectorError, OutOfDomainError, UnknownFieldKind
from .fields import (
    ConstantScalarField,
    ConstantVectorField,
    PoincareConformalFactor,
    PolynomialScalarField,
    RadialVectorField,
    monomial_exponents,
)
from .scene import ThermostatScene
from .services import (
    arc_length,
    boundary_frame,
    convexity_margin,
    curvature_report,
    exit_time_model,
    fd_christoffel,
    g_inner,
    gaussian_curvature_fd,
    lambda_at_angle,
    lambda_eval,
    metric_ops,
    perimeter,
    require_strict_convexity,
    rotate90,
)


class MetricOpsTest(SimpleTestCase):
    """Metric, inverse and Christoffel evaluation"""

    def test_euclidean_chart(self):
        scene = ThermostatScene()
        data = metric_ops(scene, np.array([0.3, -0.2]))
        np.testing.assert_allclose(data.g, np.eye(2))
        np.testing.assert_allclose(data.christoffel, 0.0)

    def test_constant_conformal_factor(self):
        scene = ThermostatScene(sigma=ConstantScalarField(np.log(2.0)))
        data = metric_ops(scene, np.array([0.1, 0.1]))
        self.assertAlmostEqual(float(data.sqrt_det), 4.0, places=12)
        np.testing.assert_allclose(data.christoffel, 0.0)

    def test_poincare_origin_and_fd_christoffel(self):
        scene = ThermostatScene(radius=0.9, sigma=PoincareConformalFactor())
        np.testing.assert_allclose(metric_ops(scene, np.zeros(2)).g, 4.0 * np.eye(2), rtol=1e-14)
        x = np.array([0.31, -0.42])
        np.testing.assert_allclose(
            metric_ops(scene, x).christoffel, fd_christoffel(scene, x), atol=1e-7
        )

    def test_out_of_domain(self):
        scene = ThermostatScene(radius=1.0)
        with self.assertRaises(OutOfDomainError):
            metric_ops(scene, np.array([1.2, 0.0]))
        # the collar stays legal
        metric_ops(scene, np.array([1.03, 0.0]))

    def test_accepted_radius_is_the_chart_radius(self):
        scene = ThermostatScene(radius=2.0, collar=0.1)
        self.assertAlmostEqual(scene.chart_radius, 2.2)
        metric_ops(scene, np.array([0.0, 2.2]))
        with self.assertRaises(OutOfDomainError):
            metric_ops(scene, np.array([0.0, 2.2 + 1e-9]))

    def test_unknown_field_kind(self):
        with self.assertRaises(UnknownFieldKind):
            ThermostatScene.from_config({'R': 1.0, 'sigma': {'kind': 'torus'}})


class RotationAndLambdaTest(SimpleTestCase):

    def test_rotate90_examples(self):
        scene = ThermostatScene()
        np.testing.assert_allclose(rotate90(scene, np.zeros(2), np.array([1.0, 0.0])), [0.0, 1.0])
        np.testing.assert_allclose(rotate90(scene, np.zeros(2), np.array([0.0, 1.0])), [-1.0, 0.0])

    def test_rotate90_preserves_g_norm(self):
        scene = ThermostatScene(sigma=ConstantScalarField(np.log(2.0)))
        x, v = np.zeros(2), np.array([0.5, 0.0])
        iv = rotate90(scene, x, v)
        np.testing.assert_allclose(iv, [0.0, 0.5])
        self.assertAlmostEqual(float(g_inner(scene, x, iv, iv)), 1.0, places=14)
        self.assertAlmostEqual(float(g_inner(scene, x, v, iv)), 0.0, places=14)
        # positive orientation
        self.assertGreater(v[0] * iv[1] - v[1] * iv[0], 0.0)
        np.testing.assert_allclose(rotate90(scene, x, iv), -v, atol=1e-14)

    def test_lambda_flat_constant_field(self):
        scene = ThermostatScene(efield=ConstantVectorField([0.7, 0.0]))
        value = lambda_eval(scene, np.zeros(2), np.array([0.0, 1.0]))
        self.assertAlmostEqual(float(value), -0.7, places=14)

    def test_lambda_rejects_non_unit(self):
        scene = ThermostatScene(efield=ConstantVectorField([0.7, 0.0]))
        with self.assertRaises(NonUnitVectorError):
            lambda_eval(scene, np.zeros(2), np.array([0.0, 1.1]))

    def test_lambda_has_only_unit_modes(self):
        rng = np.random.default_rng(7)
        terms = [(i, j, rng.normal()) for i, j in monomial_exponents(3)]
        scene = ThermostatScene(
            sigma=PolynomialScalarField([(2, 0, 0.2), (0, 1, -0.1)]),
            efield=RadialVectorField(0.4),
        )
        scene_poly = ThermostatScene(sigma=PolynomialScalarField(terms[:4]), efield=scene.efield)
        thetas = 2 * np.pi * np.arange(16) / 16
        for sc in (scene, scene_poly):
            x = np.tile(np.array([0.3, 0.1]), (16, 1))
            modes = np.fft.fft(lambda_at_angle(sc, x, thetas)) / 16
            modes[1] = modes[-1] = 0.0
            self.assertLess(np.max(np.abs(modes)), 1e-10)


class CurvatureReportTest(SimpleTestCase):

    def test_radial_field_flat(self):
        scene = ThermostatScene(efield=RadialVectorField(0.5))
        report = curvature_report(scene, grid_points=24)
        np.testing.assert_allclose(report.K, 0.0)
        np.testing.assert_allclose(report.div_E, 1.0)
        np.testing.assert_array_equal(report.K_E, report.K - report.div_E)
        self.assertTrue(report.kappa_valid)
        self.assertAlmostEqual(report.kappa, 1.0)

    def test_flat_geodesic_case_has_invalid_kappa(self):
        report = curvature_report(ThermostatScene(), grid_points=16)
        self.assertFalse(report.kappa_valid)
        np.testing.assert_allclose(report.K_E, 0.0)

    def test_poincare_curvature(self):
        scene = ThermostatScene(radius=0.9, sigma=PoincareConformalFactor())
        report = curvature_report(scene, grid_points=32)
        np.testing.assert_allclose(report.K, -1.0, atol=1e-6)

    def test_fd_curvature_is_second_order(self):
        scene = ThermostatScene(radius=0.9, sigma=PoincareConformalFactor())
        x = np.array([0.3, 0.2])
        coarse = abs(float(gaussian_curvature_fd(scene, x, 0.02)) + 1.0)
        fine = abs(float(gaussian_curvature_fd(scene, x, 0.01)) + 1.0)
        self.assertGreater(coarse / fine, 3.5)


class BoundaryTest(SimpleTestCase):

    def test_frame_is_orthonormal(self):
        scene = ThermostatScene(radius=0.8, sigma=PoincareConformalFactor())
        betas = np.linspace(0.0, 2 * np.pi, 9)
        x, nu, tangent = boundary_frame(scene, betas)
        np.testing.assert_allclose(g_inner(scene, x, nu, nu), 1.0, atol=1e-13)
        np.testing.assert_allclose(g_inner(scene, x, nu, tangent), 0.0, atol=1e-13)
        np.testing.assert_allclose(rotate90(scene, x, tangent), nu, atol=1e-15)

    def test_arc_length_flat(self):
        scene = ThermostatScene(radius=2.0)
        np.testing.assert_allclose(arc_length(scene, [np.pi, 0.5]), [2 * np.pi, 1.0], rtol=1e-12)
        self.assertAlmostEqual(perimeter(scene), 4 * np.pi, places=10)

    def test_unit_disk_margin(self):
        self.assertAlmostEqual(convexity_margin(ThermostatScene()).margin, 1.0, places=12)

    def test_radial_field_margin(self):
        scene = ThermostatScene(efield=RadialVectorField(0.5))
        report = convexity_margin(scene)
        self.assertAlmostEqual(report.margin, 1.5, places=12)
        self.assertTrue(report.strictly_convex)

    def test_reversed_field_is_rejected(self):
        scene = ThermostatScene(efield=RadialVectorField(-2.0))
        self.assertAlmostEqual(convexity_margin(scene).margin, -1.0, places=12)
        with self.assertRaises(NonConvexScene):
            require_strict_convexity(scene)

    def test_poincare_boundary_curvature(self):
        r = 0.6
        scene = ThermostatScene(radius=r, sigma=PoincareConformalFactor())
        report = convexity_margin(scene, samples=16)
        np.testing.assert_allclose(report.geodesic_curvature, (1 + r * r) / (2 * r), rtol=1e-12)

    def test_exit_time_model_flat(self):
        scene = ThermostatScene(radius=1.5)
        self.assertAlmostEqual(float(exit_time_model(scene, 0.3, 1.2)), 3.0 * np.cos(1.2), places=12)
