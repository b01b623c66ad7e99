"""
Discrete forward maps of I_{A,Phi} on pairs [f, h], their kernels, Tikhonov
reconstruction, and the scattering-rigidity experiment.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from diskcache import Cache
from django.conf import settings
from numpy.polynomial.chebyshev import chebder, chebfit, chebval
from scipy.linalg import orth, subspace_angles, svd

from fiber_calculus.grid import BundleFunction, BundleGrid
from fiber_calculus.operators import apply_V
from fiber_calculus.services import DegreeProfile, finite_degree_profile, norm
from flow.fan import BoundaryFan
from geometry.scene import ThermostatScene
from transport.connections import CallableMatrixField, ConnectionPair, ConstantMatrixField, MatrixField
from transport.services import (
    TransportExtension,
    direct_sum,
    gauge_boundary_defect,
    gauge_transform,
    kernel_element,
    pseudolinear_source,
    pseudolinearize,
    ray_transform,
    scattering_data_map,
    transport_rays,
    transport_solution,
    transport_to_nodes,
)
from transport.tensors import SourcePair

from .basis import BoundaryVanishingBasis, ForwardBasis
from .constants import (
    CHEBYSHEV_DEGREE,
    DEFAULT_DEGREE,
    DEFAULT_REGULARIZATION,
    FIBER_FLOOR,
    FINITE_DEGREE_TOLERANCE,
    GAUGE_BOUNDARY_TOLERANCE,
    KERNEL_THRESHOLD,
    MIN_RAY_SAMPLES,
    MIN_SPECTRAL_GAP,
    NATURAL_SPAN_TOLERANCE,
    NEGATIVE_TWIST,
    RIGIDITY_RAYS,
)
from .exceptions import GaugeNotBoundaryFixed, InvalidRegularization

logger = logging.getLogger(__name__)


def forward_cache(enabled: bool = True) -> Optional[Cache]:
    """The on-disk cache of assembled matrices, or None when caching is off."""
    if not enabled or not settings.THERMOSTAT_CACHE_ENABLED:
        return None
    return Cache(settings.THERMOSTAT_CACHE_DIR)


# Forward map

@dataclass
class DiscreteForwardMap:
    """
    Matrix of I_{A,Phi} from basis coefficients of [f, h] to the fan samples.

    Rows are ordered (fan ray, component); entries are complex, so the
    real-stacked operator has twice as many rows.
    """

    matrix: np.ndarray
    basis: ForwardBasis
    fan: BoundaryFan

    @property
    def real_shape(self) -> Tuple[int, int]:
        rows, cols = self.matrix.shape
        return 2 * rows, cols

    def apply(self, coefficients: np.ndarray) -> np.ndarray:
        """Transform samples with shape (fan size, n)."""
        return (self.matrix @ np.asarray(coefficients, dtype=complex)).reshape(self.fan.size, self.basis.n)

    def to_dict(self) -> Dict:
        return {
            'basis': self.basis.to_dict(),
            'fan': {'boundary_points': int(self.fan.shape[0]), 'angles': int(self.fan.shape[1])},
            'rows_complex': int(self.matrix.shape[0]),
            'rows_real': self.real_shape[0],
            'columns': self.real_shape[1],
        }


def assemble_forward(scene: ThermostatScene, pair: ConnectionPair, fan: BoundaryFan, order: int,
                     degree: int = DEFAULT_DEGREE, threads: Optional[int] = None,
                     cache: Optional[Cache] = None, cache_key: Optional[str] = None) -> DiscreteForwardMap:
    """
    All columns at once: every basis pair is carried as a source column of
    one transport pass over the fan.
    """
    basis = ForwardBasis(scene, order, pair.n, degree)
    shape = (fan.size * pair.n, basis.size)
    key = f"forward:{cache_key}" if cache_key else None
    if cache is not None and key is not None and key in cache:
        matrix = cache[key]
        if matrix.shape == shape:
            logger.info(f"Forward matrix {shape} loaded from cache")
            return DiscreteForwardMap(matrix=matrix, basis=basis, fan=fan)
    data = ray_transform(scene, pair, basis, fan, threads=threads)
    matrix = np.asarray(data.values, dtype=complex).reshape(shape)
    if cache is not None and key is not None:
        cache[key] = matrix
    logger.info(f"Assembled forward matrix {shape} for m={order}, d={degree}, n={pair.n}")
    return DiscreteForwardMap(matrix=matrix, basis=basis, fan=fan)


def _span_defect(basis: ForwardBasis, source: SourcePair, coefficients: np.ndarray) -> np.ndarray:
    """Weighted quadrature samples of the part of ``source`` outside the forward span."""
    quadrature = basis.polynomials.quadrature
    points = quadrature.points
    root = np.sqrt(quadrature.weights)
    rebuilt = basis.source(coefficients)
    parts = [source.f.coefficients(points) - rebuilt.f.coefficients(points)]
    if basis.h is not None:
        h = source.h.coefficients(points) if source.h is not None else 0.0
        parts.append(h - rebuilt.h.coefficients(points))
    return np.concatenate([(part * root.reshape((-1,) + (1,) * (part.ndim - 1))).ravel() for part in parts])


def natural_kernel_basis(scene: ThermostatScene, pair: ConnectionPair, basis: ForwardBasis,
                         tolerance: float = NATURAL_SPAN_TOLERANCE) -> np.ndarray:
    """
    Orthonormal coefficients spanning the natural pairs [G_E p + A p, Phi p]
    that the forward basis represents exactly; shape (basis size, D).

    p runs over the boundary-vanishing tensors of order m - 1 and degree
    <= d + 1. Combinations whose image leaves the degree-d span (through
    A p, Phi p or the lambda V p term) are dropped: they are not columns of
    the assembled map and cannot be in its kernel.
    """
    empty = np.zeros((basis.size, 0), dtype=complex)
    if basis.order == 0:
        return empty
    p_basis = BoundaryVanishingBasis(scene, basis.order - 1, basis.n, basis.degree)
    if p_basis.size == 0:
        return empty
    images, defects = [], []
    for i in range(p_basis.size):
        source = kernel_element(scene, pair, p_basis.element(i))
        coefficients = basis.coefficients(source)
        images.append(coefficients)
        defects.append(_span_defect(basis, source, coefficients))
    images = np.stack(images, axis=1)
    defects = np.stack(defects, axis=1)
    scale = float(np.max(np.sqrt(np.sum(np.abs(images) ** 2, axis=0) + np.sum(np.abs(defects) ** 2, axis=0))))
    if scale == 0.0:
        return empty
    _, s, vh = svd(defects, full_matrices=False)
    outside = int(np.sum(s > tolerance * scale))
    combinations = vh[outside:].conj().T
    if combinations.shape[1] == 0:
        return empty
    natural = orth(images @ combinations, rcond=tolerance)
    logger.debug(f"Natural kernel: {natural.shape[1]} of {p_basis.size} boundary-vanishing p stay in the span")
    return natural


# Kernel analysis

def kernel_split(singular_values: np.ndarray, columns: int,
                 threshold: float = KERNEL_THRESHOLD) -> Tuple[int, Optional[float], bool]:
    """
    Rank from the largest relative gap whose lower side lies below
    threshold * sigma_max.

    Returns:
        tuple: (rank, gap ratio or None when no value is below threshold, ambiguous)
    """
    s = np.zeros(columns)
    s[:min(columns, len(singular_values))] = singular_values[:columns]
    if columns == 0 or s[0] == 0.0:
        return 0, None, False
    floor = np.finfo(float).eps * s[0] * columns
    cutoff = threshold * s[0]
    candidates = [i for i in range(columns - 1) if s[i + 1] < cutoff]
    if not candidates:
        return columns, None, False
    ratios = [max(s[i], floor) / max(s[i + 1], floor) for i in candidates]
    best = int(np.argmax(ratios))
    gap = float(ratios[best])
    return candidates[best] + 1, gap, gap < MIN_SPECTRAL_GAP


@dataclass
class KernelReport:
    singular_values: np.ndarray
    threshold: float
    rank: int
    kernel_dimension: int
    natural_dimension: int
    spectral_gap: Optional[float]
    gap_ambiguous: bool
    principal_angles: np.ndarray
    natural_residuals: np.ndarray
    kernel: np.ndarray = field(repr=False)
    natural: np.ndarray = field(repr=False)

    @property
    def max_angle(self) -> float:
        return float(np.max(self.principal_angles, initial=0.0))

    @property
    def dimensions_match(self) -> bool:
        return self.kernel_dimension == self.natural_dimension

    def rows(self) -> List[List[float]]:
        return [[i, float(s)] for i, s in enumerate(self.singular_values)]

    def to_dict(self) -> Dict:
        return {
            'threshold': self.threshold,
            'rank': self.rank,
            'kernel_dimension': self.kernel_dimension,
            'natural_dimension': self.natural_dimension,
            'dimensions_match': self.dimensions_match,
            'spectral_gap': self.spectral_gap,
            'gap_ambiguous': self.gap_ambiguous,
            'principal_angles': [float(a) for a in self.principal_angles],
            'max_principal_angle': self.max_angle,
            'max_natural_residual': float(np.max(self.natural_residuals, initial=0.0)),
            'singular_values': [float(s) for s in self.singular_values],
        }


def kernel_analysis(forward: DiscreteForwardMap, scene: ThermostatScene, pair: ConnectionPair,
                    threshold: float = KERNEL_THRESHOLD) -> KernelReport:
    """Numerical kernel of the forward map against the natural kernel."""
    matrix = forward.matrix
    columns = matrix.shape[1]
    _, s, vh = svd(matrix, full_matrices=True)
    rank, gap, ambiguous = kernel_split(s, columns, threshold)
    if ambiguous:
        logger.warning(f"No clear spectral gap below {threshold:.1e} * sigma_max (ratio {gap:.2e})")
    kernel = vh[rank:].conj().T
    natural = natural_kernel_basis(scene, pair, forward.basis)
    sigma_max = float(s[0]) if s.size else 0.0
    residuals = np.zeros(natural.shape[1])
    if natural.shape[1] and sigma_max > 0.0:
        residuals = np.linalg.norm(matrix @ natural, axis=0) / np.linalg.norm(natural, axis=0) / sigma_max
    angles = np.zeros(0)
    if kernel.shape[1] and natural.shape[1]:
        angles = subspace_angles(kernel, natural)
    report = KernelReport(
        singular_values=s, threshold=threshold, rank=rank, kernel_dimension=columns - rank,
        natural_dimension=natural.shape[1], spectral_gap=gap, gap_ambiguous=ambiguous,
        principal_angles=angles, natural_residuals=residuals, kernel=kernel, natural=natural,
    )
    logger.info(
        f"Kernel dimension {report.kernel_dimension} against natural {report.natural_dimension}, "
        f"max angle {report.max_angle:.2e}"
    )
    return report


# Reconstruction

def project_out(coefficients: np.ndarray, span: Optional[np.ndarray]) -> np.ndarray:
    """Component orthogonal to the column span."""
    coefficients = np.asarray(coefficients, dtype=complex)
    if span is None or span.shape[1] == 0:
        return coefficients
    q = orth(span)
    return coefficients - q @ (q.conj().T @ coefficients)


@dataclass
class Reconstruction:
    coefficients: np.ndarray
    alpha: float
    data_residual: float
    error: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'alpha': self.alpha,
            'data_residual': self.data_residual,
            'error_modulo_kernel': self.error,
            'coefficient_norm': float(np.linalg.norm(self.coefficients)),
        }


def reconstruct(forward: DiscreteForwardMap, data: np.ndarray, alpha: float = DEFAULT_REGULARIZATION,
                natural: Optional[np.ndarray] = None, truth: Optional[np.ndarray] = None) -> Reconstruction:
    """
    Tikhonov estimate argmin |M c - data|^2 + alpha sigma_max^2 |c|^2, with
    the natural kernel projected out.

    Args:
        forward: assembled map M
        data: fan samples, (fan size, n) or flat
        alpha: regularization relative to sigma_max^2
        natural: natural-kernel coefficients, one column each
        truth: when given, the relative error modulo the kernel is reported

    Raises:
        InvalidRegularization: alpha is not positive and finite
    """
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise InvalidRegularization(f"Regularization must be positive, got {alpha}", alpha=alpha)
    data = np.asarray(data, dtype=complex).reshape(-1)
    u, s, vh = svd(forward.matrix, full_matrices=False)
    estimate = np.zeros(forward.matrix.shape[1], dtype=complex)
    if s.size and s[0] > 0.0:
        filters = s / (s ** 2 + alpha * s[0] ** 2)
        estimate = vh.conj().T @ (filters * (u.conj().T @ data))
    estimate = project_out(estimate, natural)
    scale = np.linalg.norm(data)
    residual = float(np.linalg.norm(forward.matrix @ estimate - data) / scale) if scale > 0.0 else 0.0
    error = None
    if truth is not None:
        target = project_out(truth, natural)
        denominator = np.linalg.norm(target)
        gap = np.linalg.norm(estimate - target)
        error = float(gap / denominator) if denominator > 0.0 else float(gap)
    return Reconstruction(coefficients=estimate, alpha=float(alpha), data_residual=residual, error=error)


def rebasing_invariance(scene: ThermostatScene, pair: ConnectionPair, forward: DiscreteForwardMap,
                        unitary: np.ndarray, threads: Optional[int] = None) -> float:
    """Largest change of the singular values, relative to sigma_max, under a constant unitary re-basing."""
    rebased = gauge_transform(ConstantMatrixField(unitary), pair, scene.radius)
    other = assemble_forward(scene, rebased, forward.fan, forward.basis.order, forward.basis.degree, threads)
    s = svd(forward.matrix, compute_uv=False)
    t = svd(other.matrix, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return float(np.max(t, initial=0.0))
    return float(np.max(np.abs(s - t)) / s[0])


# Finite degree of kernel solutions

@dataclass
class FiniteDegreeResult:
    profile: DegreeProfile
    order: int
    tail_fraction: float
    solution_error: float

    @property
    def passed(self) -> bool:
        return self.tail_fraction <= FINITE_DEGREE_TOLERANCE

    def to_dict(self) -> Dict:
        return {
            'order': self.order,
            'tail_fraction': self.tail_fraction,
            'solution_error': self.solution_error,
            'passed': self.passed,
            'profile': self.profile.rows(),
        }


def finite_degree_experiment(scene: ThermostatScene, pair: ConnectionPair, grid: BundleGrid,
                             rng: np.random.Generator, order: int = 1, degree: int = 4,
                             threads: Optional[int] = None) -> FiniteDegreeResult:
    """
    Transport solution of a kernel source of order m: it equals -p, so its
    fiber modes stop at |k| = m - 1.
    """
    p_basis = BoundaryVanishingBasis(scene, order - 1, pair.n, degree)
    coefficients = rng.standard_normal(p_basis.size) + 1j * rng.standard_normal(p_basis.size)
    p = p_basis.field(coefficients)
    u = transport_solution(scene, pair, kernel_element(scene, pair, p), grid, threads)
    expected = grid.phase_array(lambda x, theta: p.induced(scene, x, theta))
    scale = float(np.max(np.abs(expected)))
    error = float(np.max(np.abs(u.values + expected)) / scale) if scale > 0.0 else 0.0
    profile = finite_degree_profile(u)
    return FiniteDegreeResult(
        profile=profile, order=order, tail_fraction=profile.tail_fraction(order - 1), solution_error=error,
    )


# Rigidity

def twisted_gauge(gauge: MatrixField, strength: float = NEGATIVE_TWIST) -> MatrixField:
    """Q(x) exp(i strength x^1): no longer the identity on the boundary."""
    return CallableMatrixField(
        lambda x: gauge.value(x) * np.exp(1j * strength * np.asarray(x)[..., 0])[..., None, None],
        gauge.n, gauge.scale,
    )


def _chebyshev_derivative(times: np.ndarray, values: np.ndarray, degree: int) -> np.ndarray:
    a, b = times[0], times[-1]
    s = (2.0 * times - (a + b)) / (b - a)
    flat = values.reshape(len(times), -1)
    out = []
    for part in (flat.real, flat.imag):
        coefficients = chebfit(s, part, degree)
        out.append(chebval(s, chebder(coefficients)).T * (2.0 / (b - a)))
    return (out[0] + 1j * out[1]).reshape(values.shape)


def identity_residual(scene: ThermostatScene, pair_a: ConnectionPair, pair_b: ConnectionPair,
                      fan: BoundaryFan, rays: int = RIGIDITY_RAYS, threads: Optional[int] = None) -> float:
    """
    max over sampled rays of |d/dt U + G_A U - U G_B + G_A - G_B| for
    U = U_A U_B^{-1} - Id, with the derivative from a Chebyshev fit.
    """
    index = np.unique(np.linspace(0, fan.size - 1, rays).round().astype(int))
    summed = direct_sum(pair_a, pair_b)
    extension = TransportExtension(scene, summed)
    _, result = transport_rays(scene, summed, fan.x[index], fan.theta[index], record=True, threads=threads)
    n = pair_a.n
    eye = np.eye(n)
    worst = 0.0
    for r in range(len(index)):
        times, states = result.sample_arrays(r)
        if len(times) < MIN_RAY_SAMPLES:
            continue
        times = np.abs(times)
        count = len(times)
        u, w, _ = extension.split(states[:, 3:])
        gap = u[:, :n, :n] @ w[:, n:, n:] - eye
        x, theta = states[:, :2], states[:, 2]
        g_a = pair_a.generator(scene, x, theta)
        g_b = pair_b.generator(scene, x, theta)
        derivative = _chebyshev_derivative(times, gap, min(CHEBYSHEV_DEGREE, (count - 1) // 2))
        residual = derivative + g_a @ gap - gap @ g_b + (g_a - g_b)
        inner = slice(2, count - 2)
        scale = 1.0 + float(np.max(np.abs(g_a - g_b)))
        worst = max(worst, float(np.max(np.abs(residual[inner]))) / scale)
    return worst


@dataclass
class GaugeRecovery:
    """U_A U_B^{-1} - Id at the interior nodes of a grid."""

    gap: BundleFunction
    fiber_constancy: float
    gauge_error: float


def recover_gauge(scene: ThermostatScene, pair_a: ConnectionPair, pair_b: ConnectionPair, grid: BundleGrid,
                  gauge: Optional[MatrixField] = None, threads: Optional[int] = None) -> GaugeRecovery:
    """
    Transport both pairs to every node along the same orbits; the gap is
    fiber-independent when the pairs are gauge equivalent and then equals Q - Id.
    """
    n = pair_a.n
    nodes = transport_to_nodes(scene, direct_sum(pair_a, pair_b), grid, threads)
    gap = nodes.U[:, :n, :n] @ nodes.U_inv[:, n:, n:] - np.eye(n)
    gap_fn = BundleFunction.from_interior(grid, gap, nodes.index)
    constancy = 0.0
    if np.max(np.abs(gap), initial=0.0) > FIBER_FLOOR:
        constancy = float(norm(apply_V(gap_fn)) / norm(gap_fn))
    error = float('nan')
    if gauge is not None:
        points, _, _ = grid.interior_rays()
        error = float(np.max(np.abs(gap - (gauge.value(points) - np.eye(n))), initial=0.0))
    return GaugeRecovery(gap=gap_fn, fiber_constancy=constancy, gauge_error=error)


@dataclass
class RigidityReport:
    rays: int
    boundary_defect: float
    scattering_gap: float
    inverse_defect: float
    identity_residual: float
    pseudolinear_transform: float
    fiber_constancy: float
    gauge_error: float
    negative_change: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'rays': self.rays,
            'gauge_boundary_defect': self.boundary_defect,
            'scattering_gap': self.scattering_gap,
            'scattering_inverse_defect': self.inverse_defect,
            'transport_identity_residual': self.identity_residual,
            'pseudolinear_transform_max': self.pseudolinear_transform,
            'fiber_constancy': self.fiber_constancy,
            'gauge_error': self.gauge_error,
            'negative_control_change': self.negative_change,
        }


def rigidity_experiment(scene: ThermostatScene, pair: ConnectionPair, gauge: MatrixField, fan: BoundaryFan,
                        grid: BundleGrid, rays: int = RIGIDITY_RAYS, negative_control: bool = True,
                        threads: Optional[int] = None) -> RigidityReport:
    """
    Compare (A, Phi) with its gauge transform by Q: equal scattering data,
    the pseudolinear transport identity, fiber constancy of U_A U_B^{-1} and
    its agreement with Q. The negative control twists Q on the boundary.

    Raises:
        GaugeNotBoundaryFixed: Q differs from Id on the boundary
    """
    defect = gauge_boundary_defect(gauge, scene)
    if defect > GAUGE_BOUNDARY_TOLERANCE:
        raise GaugeNotBoundaryFixed(f"|Q - Id| reaches {defect:.2e} on the boundary", defect=defect)
    pair_b = gauge_transform(gauge, pair, scene.radius)
    data_a = scattering_data_map(scene, pair, fan, threads)
    data_b = scattering_data_map(scene, pair_b, fan, threads)
    transform = ray_transform(scene, pseudolinearize(pair, pair_b), pseudolinear_source(pair, pair_b), fan, threads)
    recovery = recover_gauge(scene, pair, pair_b, grid, gauge, threads)
    report = RigidityReport(
        rays=int(min(rays, fan.size)),
        boundary_defect=defect,
        scattering_gap=data_a.difference(data_b),
        inverse_defect=max(data_a.inverse_defect, data_b.inverse_defect),
        identity_residual=identity_residual(scene, pair, pair_b, fan, rays, threads),
        pseudolinear_transform=float(np.max(np.abs(transform.values), initial=0.0)),
        fiber_constancy=recovery.fiber_constancy,
        gauge_error=recovery.gauge_error,
    )
    if negative_control:
        twisted = gauge_transform(twisted_gauge(gauge), pair, scene.radius)
        report.negative_change = data_a.difference(scattering_data_map(scene, twisted, fan, threads))
    logger.info(
        f"Rigidity: scattering gap {report.scattering_gap:.2e}, fiber constancy {report.fiber_constancy:.2e}, "
        f"gauge error {report.gauge_error:.2e}"
    )
    return report
