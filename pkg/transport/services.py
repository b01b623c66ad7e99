"""
Transport services: parallel transport along thermostat orbits, scattering
data, attenuated ray transforms, natural kernel elements, gauge
transformations and the pseudolinearization of two pairs.

Along an orbit U' = -(A + Phi) U with U(0) = Id, and W = U^{-1} is
co-integrated as W' = W (A + Phi); no matrix is ever inverted.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from fiber_calculus.grid import BundleFunction, BundleGrid
from flow.fan import BoundaryFan, FanFunction, incoming_coordinates
from flow.integrator import EXITED
from flow.services import (
    PhasePoint,
    ScatteringTable,
    default_t_max,
    integrate_rays,
    raise_if_trapped,
    table_from_result,
)
from geometry.scene import ThermostatScene
from geometry.services import boundary_x
from thermostat_lab.exceptions import ConditioningWarning

from .connections import (
    BlockDiagonalField,
    ConnectionPair,
    GaugedComponent,
    KroneckerDifferenceField,
    MatrixField,
    structure_points,
)
from .constants import BOUNDARY_TOLERANCE, CONDITION_WARNING, MODE_FLOOR, SINGULAR_CONDITION
from .exceptions import BoundaryValueError, RankMismatchError, SingularGaugeError
from .tensors import (
    CutoffTensorField,
    SourcePair,
    SymmetricTensorField,
    coefficients_from_samples,
    projection_angles,
    transport_derivative,
)

logger = logging.getLogger(__name__)


def _pack(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag], axis=1)


def _unpack(y: np.ndarray) -> np.ndarray:
    half = y.shape[1] // 2
    return y[:, :half] + 1j * y[:, half:]


class TransportExtension:
    """
    Extra state integrated with the orbit: U and W (n x n each) and, when a
    source is given, the quadrature q' = W f(phi_t).

    A source with ``columns`` > 1 returns (B, n, columns) values and all
    columns are transported at once. The state is complex, stored as
    [real parts, imaginary parts].
    """

    def __init__(self, scene: ThermostatScene, pair: ConnectionPair, source=None):
        self.scene = scene
        self.pair = pair
        self.source = source
        n = pair.n
        self.columns = int(getattr(source, 'columns', 1)) if source is not None else 0
        self.complex_size = 2 * n * n + n * self.columns
        self.size = 2 * self.complex_size

    def initial(self, count: int) -> np.ndarray:
        n = self.pair.n
        eye = np.broadcast_to(np.eye(n, dtype=complex).reshape(1, -1), (count, n * n))
        z = np.zeros((count, self.complex_size), dtype=complex)
        z[:, :n * n] = eye
        z[:, n * n:2 * n * n] = eye
        return _pack(z)

    def split(self, extra: np.ndarray):
        """(U, W, q) from packed extra state of shape (B, size)."""
        n = self.pair.n
        z = _unpack(extra)
        count = z.shape[0]
        u = z[:, :n * n].reshape(count, n, n)
        w = z[:, n * n:2 * n * n].reshape(count, n, n)
        q = None
        if self.source is not None:
            q = z[:, 2 * n * n:].reshape(count, n, self.columns)
            if not hasattr(self.source, 'columns'):
                q = q[:, :, 0]
        return u, w, q

    def __call__(self, x: np.ndarray, theta: np.ndarray, extra: np.ndarray) -> np.ndarray:
        u, w, _ = self.split(extra)
        count = u.shape[0]
        generator = self.pair.generator(self.scene, x, theta)
        parts = [(-generator @ u).reshape(count, -1), (w @ generator).reshape(count, -1)]
        if self.source is not None:
            f = self.source.induced(self.scene, x, theta).reshape(count, self.pair.n, self.columns)
            parts.append((w @ f).reshape(count, -1))
        return _pack(np.concatenate(parts, axis=1))


def _conditioning(u: np.ndarray, w: np.ndarray) -> float:
    if u.size == 0:
        return 1.0
    return float(np.max(np.linalg.norm(u, ord=2, axis=(-2, -1)) * np.linalg.norm(w, ord=2, axis=(-2, -1))))


def _warn_conditioning(u: np.ndarray, w: np.ndarray):
    worst = _conditioning(u, w)
    if worst > CONDITION_WARNING:
        warnings.warn(f"||U|| ||W|| reached {worst:.3e}", ConditioningWarning)


def identity_defect(matrices: np.ndarray) -> np.ndarray:
    """||M - Id|| (spectral norm) per matrix."""
    eye = np.eye(matrices.shape[-1])
    return np.linalg.norm(matrices - eye, ord=2, axis=(-2, -1))


@dataclass
class TransportBatch:
    """Exit (or end-time) values of a batch of transported rays."""

    U: np.ndarray
    W: np.ndarray
    q: Optional[np.ndarray]
    t: np.ndarray
    x: np.ndarray
    theta: np.ndarray
    status: np.ndarray


def transport_rays(scene: ThermostatScene, pair: ConnectionPair, x: np.ndarray, theta: np.ndarray,
                   direction: int = 1, t_end=None, source=None, record: bool = False,
                   threads: Optional[int] = None, t_max: Optional[float] = None):
    """
    Integrate U, W (and the source quadrature) along a batch of rays.

    With direction = -1 the slots hold the transport from the starting
    point back to the entry: U ends at U(x, v)^{-1} and W at U(x, v).

    Returns:
        tuple: (TransportBatch, BatchResult)
    """
    extension = TransportExtension(scene, pair, source)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    t_max = default_t_max(scene) if t_max is None else t_max
    result = integrate_rays(
        scene, x, theta, direction=direction, t_end=t_end, t_max=t_max, extension=extension,
        extra0=extension.initial(len(theta)), record=record, threads=threads,
    )
    if t_end is None:
        raise_if_trapped(result, t_max)
    u, w, q = extension.split(result.y[:, 3:])
    _warn_conditioning(u, w)
    batch = TransportBatch(
        U=u, W=w, q=q, t=np.abs(result.t), x=result.y[:, :2], theta=result.y[:, 2], status=result.status,
    )
    return batch, result


@dataclass
class TransportResult:
    """U and W sampled along one orbit, with C the value at the end point."""

    times: np.ndarray
    U: np.ndarray
    W: np.ndarray
    C: np.ndarray
    tau: float
    end: PhasePoint
    exited: bool

    @property
    def inverse_defect(self) -> float:
        return float(np.max(identity_defect(self.U @ self.W)))

    @property
    def unitarity_defect(self) -> float:
        return float(np.max(identity_defect(np.conj(np.swapaxes(self.U, -1, -2)) @ self.U)))

    def to_dict(self) -> Dict:
        return {
            'tau': self.tau,
            'exited': self.exited,
            'end': self.end.as_list(),
            'C_re': self.C.real.tolist(),
            'C_im': self.C.imag.tolist(),
            'inverse_defect': self.inverse_defect,
            'unitarity_defect': self.unitarity_defect,
        }


def parallel_transport(scene: ThermostatScene, pair: ConnectionPair, start: PhasePoint,
                       t_end: Optional[float] = None, record: bool = True) -> TransportResult:
    """
    U_{A,Phi} along the orbit from ``start`` (boundary entry or interior point).

    With ``t_end`` the orbit stops at min(t_end, exit time), giving the
    finite-time cocycle.
    """
    batch, result = transport_rays(scene, pair, start.x[None, :], [start.theta], t_end=t_end,
                                   record=record, threads=1)
    extension = TransportExtension(scene, pair)
    n = pair.n
    if record:
        times, states = result.sample_arrays(0)
        u, w, _ = extension.split(states[:, 3:])
    else:
        times = np.array([0.0, batch.t[0]])
        u = np.stack([np.eye(n, dtype=complex), batch.U[0]])
        w = np.stack([np.eye(n, dtype=complex), batch.W[0]])
    end = PhasePoint(batch.x[0], batch.theta[0])
    return TransportResult(
        times=np.abs(times), U=u, W=w, C=batch.U[0], tau=float(batch.t[0]), end=end,
        exited=bool(batch.status[0] == EXITED),
    )


@dataclass
class ScatteringData:
    """C_{A,Phi} on the exit points of a fan, in fan order."""

    fan: BoundaryFan
    C: np.ndarray
    W: np.ndarray
    table: ScatteringTable

    @property
    def inverse_defect(self) -> float:
        return float(np.max(identity_defect(self.C @ self.W), initial=0.0))

    @property
    def unitarity_defect(self) -> float:
        return float(np.max(identity_defect(np.conj(np.swapaxes(self.C, -1, -2)) @ self.C), initial=0.0))

    def difference(self, other: 'ScatteringData') -> float:
        return float(np.max(np.linalg.norm(self.C - other.C, ord=2, axis=(-2, -1)), initial=0.0))

    def rows(self) -> List[List[float]]:
        n = self.C.shape[-1]
        rows = []
        for s, a, tau, c in zip(self.fan.s, self.fan.alpha, self.table.tau, self.C):
            row = [float(s), float(a), float(tau)]
            for i in range(n):
                for j in range(n):
                    row += [float(c[i, j].real), float(c[i, j].imag)]
            rows.append(row)
        return rows

    def header(self) -> List[str]:
        n = self.C.shape[-1]
        names = ['s', 'alpha', 'tau']
        for i in range(n):
            for j in range(n):
                names += [f"C_{i + 1}{j + 1}_re", f"C_{i + 1}{j + 1}_im"]
        return names


def scattering_data_map(scene: ThermostatScene, pair: ConnectionPair, fan: BoundaryFan,
                        threads: Optional[int] = None) -> ScatteringData:
    """C_{A,Phi} = U_{A,Phi} at the exit point of every fan ray."""
    batch, result = transport_rays(scene, pair, fan.x, fan.theta, threads=threads)
    data = ScatteringData(fan=fan, C=batch.U, W=batch.W, table=table_from_result(scene, result))
    logger.info(
        f"Scattering data on {fan.size} rays (n={pair.n}): "
        f"|CW - Id| <= {data.inverse_defect:.2e}"
    )
    return data


class BundleSource:
    """
    A BundleFunction used as a transport source off the grid: each nonzero
    fiber mode is interpolated in the chart by bicubic splines.
    """

    def __init__(self, u: BundleFunction):
        self.grid = u.grid
        self.component_shape = u.component_shape
        energy = u.mode_energy()
        floor = MODE_FLOOR * max(float(energy.sum()), 1e-300)
        self.wavenumbers = [int(k) for k, e in zip(u.grid.wavenumbers, energy) if e > floor]
        modes = u.modes
        self.splines = {}
        axis = u.grid.axis
        for k in self.wavenumbers:
            j = int(np.flatnonzero(u.grid.wavenumbers == k)[0])
            layer = modes[:, :, j].reshape(axis.size, axis.size, -1)
            self.splines[k] = [
                (RectBivariateSpline(axis, axis, layer[:, :, c].real), RectBivariateSpline(axis, axis, layer[:, :, c].imag))
                for c in range(layer.shape[2])
            ]

    @property
    def n(self) -> int:
        return int(np.prod(self.component_shape)) if self.component_shape else 1

    def induced(self, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        theta = np.broadcast_to(np.asarray(theta, dtype=float), x.shape[:-1])
        out = np.zeros(x.shape[:-1] + (self.n,), dtype=complex)
        for k, parts in self.splines.items():
            phase = np.exp(1j * k * theta)
            for c, (re, im) in enumerate(parts):
                value = re(x[..., 0], x[..., 1], grid=False) + 1j * im(x[..., 0], x[..., 1], grid=False)
                out[..., c] += value * phase
        return out


@dataclass
class RayTransformData:
    values: np.ndarray
    tau: np.ndarray
    fan: BoundaryFan

    def rows(self) -> List[List[float]]:
        rows = []
        for s, a, value in zip(self.fan.s, self.fan.alpha, self.values):
            row = [float(s), float(a)]
            for v in value:
                row += [float(v.real), float(v.imag)]
            rows.append(row)
        return rows

    def header(self) -> List[str]:
        names = ['s', 'alpha']
        for c in range(self.values.shape[1]):
            names += [f"I_{c + 1}_re", f"I_{c + 1}_im"]
        return names


def _as_source(source):
    if isinstance(source, BundleFunction):
        return BundleSource(source)
    return source


def ray_transform(scene: ThermostatScene, pair: ConnectionPair, source, fan: BoundaryFan,
                  threads: Optional[int] = None) -> RayTransformData:
    """
    I_{A,Phi} source on the incoming fan: the integral of W f along each orbit
    from entry to exit, with f + h handled in one pass for a SourcePair.
    """
    source = _as_source(source)
    if getattr(source, 'n', pair.n) != pair.n:
        raise RankMismatchError(f"Source rank {source.n} does not match pair rank {pair.n}")
    batch, _ = transport_rays(scene, pair, fan.x, fan.theta, source=source, threads=threads)
    return RayTransformData(values=batch.q, tau=batch.t, fan=fan)


def with_boundary_cutoff(p: SymmetricTensorField, radius: float) -> CutoffTensorField:
    return CutoffTensorField(p, radius)


def boundary_defect(p: SymmetricTensorField, scene: ThermostatScene, samples: int = 64) -> float:
    betas = 2.0 * np.pi * np.arange(samples) / samples
    return float(np.max(np.abs(p.coefficients(boundary_x(scene, betas)))))


class KernelSourceTensor(SymmetricTensorField):
    """
    f = G_E p + A p as an order-(m) tensor, m = order(p) + 1.

    The induced function is evaluated in closed form on a fiber grid, then
    re-projected onto tensor components through its fiber modes.
    """

    def __init__(self, scene: ThermostatScene, pair: ConnectionPair, p: SymmetricTensorField):
        self.scene = scene
        self.pair = pair
        self.p = p
        self.angles = projection_angles(p.order + 1)
        super().__init__(p.order + 1, p.n, self._values, None, scene.radius)

    def fiber_samples(self, x: np.ndarray) -> np.ndarray:
        """(G_E p + A p)(x, theta_k) with shape (..., N, n)."""
        xs = np.asarray(x, dtype=float)[..., None, :]
        xs = np.broadcast_to(xs, xs.shape[:-2] + (self.angles.size, 2))
        theta = np.broadcast_to(self.angles, xs.shape[:-1])
        derivative = transport_derivative(self.p, self.scene, xs, theta)
        a = self.pair.along(self.scene, xs, theta)
        return derivative + np.einsum('...ij,...j->...i', a, self.p.induced(self.scene, xs, theta))

    def _values(self, x):
        samples = self.fiber_samples(x)
        grow = np.exp(self.order * self.scene.sigma_at(x))
        return grow[..., None, None] * coefficients_from_samples(self.order, samples, self.angles)


def kernel_element(scene: ThermostatScene, pair: ConnectionPair, p: SymmetricTensorField) -> SourcePair:
    """
    The natural-kernel pair [G_E p + A p, Phi p].

    Raises:
        BoundaryValueError: p does not vanish on the boundary
    """
    if p.n != pair.n:
        raise RankMismatchError(f"p has rank {p.n}, the pair has rank {pair.n}")
    defect = boundary_defect(p, scene)
    if defect > BOUNDARY_TOLERANCE:
        raise BoundaryValueError(f"p reaches {defect:.2e} on the boundary", defect=defect)
    f = KernelSourceTensor(scene, pair, p)
    h = SymmetricTensorField(
        p.order, p.n,
        lambda x: np.einsum('...ab,...jb->...ja', pair.higgs(x), p.coefficients(x)),
        None, scene.radius,
    )
    return SourcePair(f, h)


def _check_gauge(gauge: MatrixField, radius: float):
    points = structure_points(radius)
    condition = np.linalg.cond(gauge.value(points))
    if not np.all(np.isfinite(condition)) or np.max(condition) > SINGULAR_CONDITION:
        raise SingularGaugeError(f"Gauge condition number reaches {float(np.max(condition)):.3e}")


def gauge_boundary_defect(gauge: MatrixField, scene: ThermostatScene, samples: int = 64) -> float:
    """max ||Q - Id|| over boundary samples."""
    betas = 2.0 * np.pi * np.arange(samples) / samples
    return float(np.max(identity_defect(gauge.value(boundary_x(scene, betas)))))


def gauge_transform(gauge: MatrixField, pair: ConnectionPair, radius: float = 1.0) -> ConnectionPair:
    """(Q^{-1} d Q + Q^{-1} A Q, Q^{-1} Phi Q)."""
    if gauge.n != pair.n:
        raise RankMismatchError(f"Gauge rank {gauge.n} does not match pair rank {pair.n}")
    _check_gauge(gauge, radius)
    return ConnectionPair(
        GaugedComponent(gauge, pair.a1, 0),
        GaugedComponent(gauge, pair.a2, 1),
        GaugedComponent(gauge, pair.phi, None),
    )


def pseudolinearize(pair_a: ConnectionPair, pair_b: ConnectionPair) -> ConnectionPair:
    """The pair (X -> A X - X B, X -> Phi X - X Psi) on n x n matrices flattened row-major."""
    if pair_a.n != pair_b.n:
        raise RankMismatchError(f"Pairs have ranks {pair_a.n} and {pair_b.n}")
    return ConnectionPair(
        KroneckerDifferenceField(pair_a.a1, pair_b.a1),
        KroneckerDifferenceField(pair_a.a2, pair_b.a2),
        KroneckerDifferenceField(pair_a.phi, pair_b.phi),
    )


def direct_sum(pair_a: ConnectionPair, pair_b: ConnectionPair) -> ConnectionPair:
    """(A (+) B, Phi (+) Psi); its transport carries U_A and U_B along the same orbit."""
    if pair_a.n != pair_b.n:
        raise RankMismatchError(f"Pairs have ranks {pair_a.n} and {pair_b.n}")
    return ConnectionPair(
        BlockDiagonalField(pair_a.a1, pair_b.a1),
        BlockDiagonalField(pair_a.a2, pair_b.a2),
        BlockDiagonalField(pair_a.phi, pair_b.phi),
    )


def pseudolinear_source(pair_a: ConnectionPair, pair_b: ConnectionPair) -> SourcePair:
    """[A - B, Phi - Psi] as C^{n^2}-valued tensors of orders 1 and 0."""
    n = pair_a.n

    def first(x):
        diff = np.stack([pair_a.a1.value(x) - pair_b.a1.value(x), pair_a.a2.value(x) - pair_b.a2.value(x)], axis=-3)
        return diff.reshape(diff.shape[:-2] + (n * n,))

    def zeroth(x):
        diff = pair_a.phi.value(x) - pair_b.phi.value(x)
        return diff.reshape(diff.shape[:-2] + (1, n * n))

    return SourcePair(SymmetricTensorField(1, n * n, first), SymmetricTensorField(0, n * n, zeroth))


@dataclass
class NodeTransport:
    """U_{A,Phi}(x, v) and its inverse at the interior nodes of a grid, with the entry points."""

    U: np.ndarray
    U_inv: np.ndarray
    entry_x: np.ndarray
    entry_theta: np.ndarray
    index: tuple


def transport_to_nodes(scene: ThermostatScene, pair: ConnectionPair, grid: BundleGrid,
                       threads: Optional[int] = None) -> NodeTransport:
    """Transport from the entry point of the orbit through each node, by backward integration."""
    points, thetas, index = grid.interior_rays()
    batch, _ = transport_rays(scene, pair, points, thetas, direction=-1, threads=threads)
    return NodeTransport(U=batch.W, U_inv=batch.U, entry_x=batch.x, entry_theta=batch.theta, index=index)


@dataclass
class QOperatorResult:
    incoming: np.ndarray
    outgoing: np.ndarray
    outgoing_beta: np.ndarray
    outgoing_alpha: np.ndarray


def operator_Q(data: ScatteringData, w: FanFunction) -> QOperatorResult:
    """Q w = w on the incoming fan and C (w o S^{-1}) at the exit points of the fan rays."""
    samples = np.asarray(w.samples(), dtype=complex)
    samples = samples.reshape(data.fan.size, -1)
    outgoing = np.einsum('bij,bj->bi', data.C, samples)
    return QOperatorResult(
        incoming=samples, outgoing=outgoing,
        outgoing_beta=data.table.exit_beta, outgoing_alpha=data.table.exit_alpha,
    )


def w_sharp(scene: ThermostatScene, pair: ConnectionPair, w: FanFunction, grid: BundleGrid,
            threads: Optional[int] = None) -> BundleFunction:
    """w# = U_{A,Phi} w_psi on the grid: the solution of (G_E + A + Phi) w# = 0 with w# = w on the incoming side."""
    nodes = transport_to_nodes(scene, pair, grid, threads)
    beta, alpha = incoming_coordinates(nodes.entry_x, nodes.entry_theta)
    values = np.asarray(w(beta, alpha), dtype=complex).reshape(len(beta), -1)
    sharp = np.einsum('bij,bj->bi', nodes.U, values)
    return BundleFunction.from_interior(grid, sharp, nodes.index)


def transport_solution(scene: ThermostatScene, pair: ConnectionPair, source, grid: BundleGrid,
                       threads: Optional[int] = None) -> BundleFunction:
    """
    u^f on every node: the solution of (G_E + A + Phi) u = -f vanishing on
    the outgoing boundary, computed by forward integration to the exit.
    """
    source = _as_source(source)
    points, thetas, index = grid.interior_rays()
    batch, _ = transport_rays(scene, pair, points, thetas, source=source, threads=threads)
    return BundleFunction.from_interior(grid, batch.q, index)
