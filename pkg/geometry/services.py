"""
Metric, curvature and boundary services for a thermostat scene.

Conventions: g = e^{2 sigma}|dx|^2, a unit vector at fiber angle theta is
v = e^{-sigma}(cos theta, sin theta), i rotates by +pi/2 and the boundary
normal nu points into M.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import integrate

from .constants import ARC_QUADRATURE_NODES, BOUNDARY_SAMPLES, CURVATURE_GRID_POINTS, UNIT_TOLERANCE
from .exceptions import NonConvexScene, NonUnitVectorError
from .fields import laplacian_fd
from .scene import ThermostatScene

logger = logging.getLogger(__name__)


@dataclass
class MetricData:
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det: np.ndarray
    christoffel: np.ndarray  # [..., k, i, j] = Gamma^k_ij


@dataclass
class CurvatureReport:
    points: np.ndarray
    K: np.ndarray
    div_E: np.ndarray
    K_E: np.ndarray
    kappa: float
    kappa_valid: bool
    grid_points: int

    def to_dict(self) -> Dict:
        return {
            'grid_points': self.grid_points,
            'K_min': float(np.min(self.K)),
            'K_max': float(np.max(self.K)),
            'div_E_min': float(np.min(self.div_E)),
            'div_E_max': float(np.max(self.div_E)),
            'K_E_max': float(np.max(self.K_E)),
            'kappa': self.kappa,
            'kappa_valid': self.kappa_valid,
        }


@dataclass
class BoundaryPoint:
    s: float
    beta: float
    x: np.ndarray
    nu: np.ndarray
    tangent: np.ndarray


@dataclass
class ConvexityReport:
    margin: float
    strictly_convex: bool
    betas: np.ndarray = field(repr=False)
    geodesic_curvature: np.ndarray = field(repr=False)
    normal_field: np.ndarray = field(repr=False)

    def to_dict(self) -> Dict:
        return {
            'margin': self.margin,
            'strictly_convex': self.strictly_convex,
            'samples': int(self.betas.size),
            'Lambda_min': float(np.min(self.geodesic_curvature)),
            'E_nu_max': float(np.max(self.normal_field)),
        }


def g_inner(scene: ThermostatScene, x: np.ndarray, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """<u, w>_g at x."""
    return scene.conformal_factor(x) * np.sum(np.asarray(u) * np.asarray(w), axis=-1)


def metric_ops(scene: ThermostatScene, x: np.ndarray) -> MetricData:
    """
    Evaluate g, its inverse, sqrt(det g) and the Christoffel symbols at x.

    For a conformal metric Gamma^k_ij = delta^k_i s_j + delta^k_j s_i - delta_ij s_k
    with s = grad sigma.

    Points are accepted on the whole chart |x| <= R(1 + collar), not only on
    M, so that integrator trial steps past the boundary can be evaluated.

    Raises:
        OutOfDomainError: a point outside the chart radius
    """
    x = scene.check_domain(x)
    sigma = scene.sigma.value(x)
    grad = scene.sigma.gradient(x)
    factor = np.exp(2.0 * sigma)[..., None, None]
    eye = np.eye(2)
    christoffel = (
        np.einsum('ki,...j->...kij', eye, grad)
        + np.einsum('kj,...i->...kij', eye, grad)
        - np.einsum('ij,...k->...kij', eye, grad)
    )
    return MetricData(
        g=factor * eye,
        g_inv=eye / factor,
        sqrt_det=np.exp(2.0 * sigma),
        christoffel=christoffel,
    )


def rotate90(scene: ThermostatScene, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """iv = (-v^2, v^1); an isometry of g in a conformal chart."""
    scene.check_domain(x)
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def unit_vector(scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
    """The g-unit vector at fiber angle theta."""
    theta = np.asarray(theta, dtype=float)
    scale = np.exp(-scene.sigma_at(x))
    return scale[..., None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def fiber_angle(scene: ThermostatScene, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.arctan2(v[..., 1], v[..., 0])


def lambda_eval(scene: ThermostatScene, x: np.ndarray, v: np.ndarray,
                tolerance: float = UNIT_TOLERANCE) -> np.ndarray:
    """
    lambda(x, v) = <E(x), iv>_g for a g-unit v.

    Raises:
        NonUnitVectorError: when |v|_g differs from 1 by more than ``tolerance``
    """
    x = scene.check_domain(x)
    v = np.asarray(v, dtype=float)
    norm = np.sqrt(g_inner(scene, x, v, v))
    if np.any(np.abs(norm - 1.0) > tolerance):
        raise NonUnitVectorError(
            f"|v|_g = {float(np.max(np.abs(norm - 1.0))) + 1.0:.3g} is not 1",
        )
    return g_inner(scene, x, scene.efield.value(x), rotate90(scene, x, v))


def lambda_at_angle(scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
    """lambda at (x, theta) = e^{sigma}(-E^1 sin theta + E^2 cos theta); broadcasts x[..., 0] with theta."""
    x = scene.check_domain(x)
    e = scene.efield.value(x)
    scale = np.exp(scene.sigma.value(x))
    return scale * (-e[..., 0] * np.sin(theta) + e[..., 1] * np.cos(theta))


def curvature_fields(scene: ThermostatScene, x: np.ndarray):
    """
    Gaussian curvature, divergence of E and thermostat curvature at x.

    Returns:
        tuple: (K, div_g E, K_E) with K = -e^{-2 sigma} Laplacian(sigma) and
        div_g E = d_i E^i + 2 <grad sigma, E> (flat pairing)
    """
    x = scene.check_domain(x)
    sigma = scene.sigma.value(x)
    K = -np.exp(-2.0 * sigma) * scene.sigma.laplacian(x)
    div_E = scene.efield.divergence(x) + 2.0 * np.sum(scene.sigma.gradient(x) * scene.efield.value(x), axis=-1)
    return K, div_E, K - div_E


def gaussian_curvature_fd(scene: ThermostatScene, x: np.ndarray, step: float) -> np.ndarray:
    """K from the five-point Laplacian of sigma; second order in ``step``."""
    x = scene.check_domain(x)
    return -np.exp(-2.0 * scene.sigma.value(x)) * laplacian_fd(scene.sigma, x, step)


def disk_grid(scene: ThermostatScene, points: int) -> np.ndarray:
    """Cell-centred points of a points x points grid on [-R, R]^2 that lie in M."""
    h = 2.0 * scene.radius / points
    axis = -scene.radius + h * (np.arange(points) + 0.5)
    xx, yy = np.meshgrid(axis, axis, indexing='ij')
    pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    return pts[scene.inside(pts)]


def curvature_report(scene: ThermostatScene, grid_points: int = CURVATURE_GRID_POINTS) -> CurvatureReport:
    """
    Sample K, div_g E and K_E over the disk and derive kappa.

    kappa = -max K_E when that maximum is negative; otherwise kappa is 0 and
    flagged invalid.
    """
    points = disk_grid(scene, grid_points)
    K, div_E, K_E = curvature_fields(scene, points)
    top = float(np.max(K_E))
    valid = top < 0.0
    kappa = -top if valid else 0.0
    if not valid:
        logger.info(f"K_E reaches {top:.3e} on the {grid_points}^2 grid; kappa invalid")
    return CurvatureReport(
        points=points, K=K, div_E=div_E, K_E=K_E,
        kappa=kappa, kappa_valid=valid, grid_points=grid_points,
    )


def boundary_x(scene: ThermostatScene, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    return scene.radius * np.stack([np.cos(beta), np.sin(beta)], axis=-1)


def boundary_frame(scene: ThermostatScene, beta):
    """
    Boundary point, inward unit normal and positively oriented unit tangent.

    Returns:
        tuple: (x, nu, tangent) with nu = i tangent
    """
    beta = np.asarray(beta, dtype=float)
    x = boundary_x(scene, beta)
    scale = np.exp(-scene.sigma_at(x))[..., None]
    tangent = scale * np.stack([-np.sin(beta), np.cos(beta)], axis=-1)
    nu = scale * np.stack([-np.cos(beta), -np.sin(beta)], axis=-1)
    return x, nu, tangent


def _arc_speed(scene: ThermostatScene, beta) -> np.ndarray:
    return scene.radius * np.exp(scene.sigma_at(boundary_x(scene, beta)))


def arc_length(scene: ThermostatScene, beta) -> np.ndarray:
    """
    g-length of the boundary arc from angle 0 to each beta in [0, 2 pi].

    Gauss-Legendre on [0, beta] per query; the integrand is smooth.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    nodes, weights = np.polynomial.legendre.leggauss(ARC_QUADRATURE_NODES)
    half = 0.5 * beta[:, None]
    speed = _arc_speed(scene, half * (1.0 + nodes[None, :]))
    return np.sum(half * weights[None, :] * speed, axis=1)


def perimeter(scene: ThermostatScene) -> float:
    value, _ = integrate.quad(
        lambda b: float(_arc_speed(scene, b)), 0.0, 2.0 * np.pi, epsabs=1e-13, epsrel=1e-13, limit=200
    )
    return value


def boundary_point(scene: ThermostatScene, beta: float) -> BoundaryPoint:
    x, nu, tangent = boundary_frame(scene, beta)
    return BoundaryPoint(s=float(arc_length(scene, beta)[0]), beta=float(beta), x=x, nu=nu, tangent=tangent)


def geodesic_curvature(scene: ThermostatScene, beta) -> np.ndarray:
    """Lambda of the circle |x| = R in g: e^{-sigma}(1/R + d_r sigma)."""
    x = boundary_x(scene, beta)
    radial = np.sum(scene.sigma.gradient(x) * x, axis=-1) / scene.radius
    return np.exp(-scene.sigma_at(x)) * (1.0 / scene.radius + radial)


def normal_component(scene: ThermostatScene, beta) -> np.ndarray:
    """<E, nu>_g on the boundary."""
    x, nu, _ = boundary_frame(scene, beta)
    return g_inner(scene, x, scene.efield.value(x), nu)


def convexity_margin(scene: ThermostatScene, samples: int = BOUNDARY_SAMPLES) -> ConvexityReport:
    """
    min over the boundary of Lambda - <E, nu>_g.

    In two dimensions Lambda does not depend on the unit tangent, so one
    sample per boundary point suffices.
    """
    betas = 2.0 * np.pi * np.arange(samples) / samples
    curvature = geodesic_curvature(scene, betas)
    normal = normal_component(scene, betas)
    margin = float(np.min(curvature - normal))
    report = ConvexityReport(
        margin=margin, strictly_convex=margin > 0.0, betas=betas,
        geodesic_curvature=curvature, normal_field=normal,
    )
    logger.debug(f"Convexity margin {margin:.6g} over {samples} boundary samples")
    return report


def require_strict_convexity(scene: ThermostatScene, samples: int = BOUNDARY_SAMPLES) -> ConvexityReport:
    report = convexity_margin(scene, samples)
    if not report.strictly_convex:
        logger.warning(f"Scene rejected: convexity margin {report.margin:.6g}")
        raise NonConvexScene(
            f"Boundary is not strictly convex for the thermostat (margin {report.margin:.6g})",
            margin=report.margin,
        )
    return report


def exit_time_model(scene: ThermostatScene, beta, alpha) -> np.ndarray:
    """
    Leading-order exit time of a near-tangential entry.

    ``alpha`` is measured from the inward normal, so <nu, v>_g = cos(alpha) and
    tau ~ 2 cos(alpha) / (Lambda - <E, nu>_g) as alpha -> +-pi/2.
    """
    return 2.0 * np.cos(alpha) / (geodesic_curvature(scene, beta) - normal_component(scene, beta))


def fd_christoffel(scene: ThermostatScene, x: np.ndarray, step: Optional[float] = None) -> np.ndarray:
    """Christoffel symbols from central differences of g, for cross-checks."""
    x = scene.check_domain(x)
    h = step or 1e-5 * scene.radius
    dg = []
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = h
        dg.append((metric_ops(scene, x + e).g - metric_ops(scene, x - e).g) / (2 * h))
    dg = np.stack(dg, axis=-3)  # [..., l, i, j] = d_l g_ij
    g_inv = metric_ops(scene, x).g_inv
    lowered = 0.5 * (
        np.einsum('...ijl->...lij', dg)
        + np.einsum('...jil->...lij', dg)
        - dg
    )
    # lowered[..., l, i, j] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    return np.einsum('...kl,...lij->...kij', g_inv, lowered)
