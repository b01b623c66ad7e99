"""
Thermostat flow services: phase velocity, orbit integration, exit times,
the scattering relation and first integrals.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from django.conf import settings

from geometry.scene import ThermostatScene
from geometry.services import arc_length, boundary_frame, g_inner, require_strict_convexity

from .constants import ATOL, MAX_STEP_FRACTION, RAY_CHUNK, RTOL, TMAX_FACTOR
from .exceptions import NotOnBoundary, TrappedOrbit
from .fan import BoundaryFan, FanFunction, incoming_coordinates, outgoing_coordinates
from .integrator import EXITED, TRAPPED, BatchResult, DiskBoundary, RayIntegrator

logger = logging.getLogger(__name__)

PHASE_DIM = 3


@dataclass
class PhasePoint:
    """A point of SM: chart position and fiber angle of the unit velocity."""

    x: np.ndarray
    theta: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(2)
        self.theta = float(self.theta)

    def velocity(self, scene: ThermostatScene) -> np.ndarray:
        return np.exp(-float(scene.sigma_at(self.x))) * np.array([np.cos(self.theta), np.sin(self.theta)])

    def flip(self) -> 'PhasePoint':
        return PhasePoint(self.x.copy(), self.theta + np.pi)

    def as_list(self) -> List[float]:
        return [float(self.x[0]), float(self.x[1]), self.theta]


@dataclass
class OrbitRecord:
    samples: List[Tuple[float, PhasePoint]]
    tau: float
    exit_point: Optional[PhasePoint]
    exited: bool = True
    steps: int = 0

    def to_dict(self) -> Dict:
        return {
            'samples': [[t] + p.as_list() for t, p in self.samples],
            'tau': self.tau,
            'exit': self.exit_point.as_list() if self.exit_point is not None else None,
            'steps': self.steps,
        }


@dataclass
class ScatteringTable:
    """Exit data of a batch of incoming rays, in input order."""

    tau: np.ndarray
    exit_x: np.ndarray
    exit_theta: np.ndarray
    exit_beta: np.ndarray
    exit_s: np.ndarray
    exit_alpha: np.ndarray
    steps: np.ndarray = field(repr=False)

    def rows(self, fan: BoundaryFan) -> List[List[float]]:
        return [
            [s, a, t, es, ea]
            for s, a, t, es, ea in zip(fan.s, fan.alpha, self.tau, self.exit_s, self.exit_alpha)
        ]


def thermostat_rhs(scene: ThermostatScene, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """
    Phase velocity (dx/dt, dtheta/dt) of the thermostat flow.

    dx/dt = e^{-sigma}(cos, sin); dtheta/dt is the Levi-Civita drift of the
    frame plus lambda(x, v).
    """
    x = scene.check_domain(x)
    theta = np.asarray(theta, dtype=float)
    sigma = scene.sigma.value(x)
    grad = scene.sigma.gradient(x)
    e = scene.efield.value(x)
    c, s = np.cos(theta), np.sin(theta)
    shrink = np.exp(-sigma)
    drift = shrink * (-grad[..., 0] * s + grad[..., 1] * c)
    lam = np.exp(sigma) * (-e[..., 0] * s + e[..., 1] * c)
    return np.stack([shrink * c, shrink * s, drift + lam], axis=-1)


def cartesian_rhs(scene: ThermostatScene, y: np.ndarray) -> np.ndarray:
    """
    Second-order form x'' + Gamma(x', x') = lambda(x, x') i x' as a first-order
    system in (x, x'). Speed is not constrained, so |x'|_g measures drift.
    """
    x = scene.check_domain(y[..., :2])
    u = y[..., 2:4]
    grad = scene.sigma.gradient(x)
    e = scene.efield.value(x)
    factor = np.exp(2.0 * scene.sigma.value(x))
    # Gamma^k_ij u^i u^j for the conformal metric
    su = np.sum(grad * u, axis=-1)[..., None]
    uu = np.sum(u * u, axis=-1)[..., None]
    christoffel = 2.0 * su * u - uu * grad
    iu = np.stack([-u[..., 1], u[..., 0]], axis=-1)
    lam = (factor * np.sum(e * iu, axis=-1))[..., None]
    return np.concatenate([u, -christoffel + lam * iu], axis=-1)


class OrbitSystem:
    """
    Phase ODE with an optional extension integrated along the orbit.

    The extension is called as ``extension(x, theta, extra)`` and returns the
    derivative of the extra state (shape (B, extension.size)).
    """

    def __init__(self, scene: ThermostatScene, extension=None):
        self.scene = scene
        self.extension = extension

    @property
    def dim(self) -> int:
        return PHASE_DIM + (self.extension.size if self.extension is not None else 0)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        x, theta = y[:, :2], y[:, 2]
        phase = thermostat_rhs(self.scene, x, theta)
        if self.extension is None:
            return phase
        extra = self.extension(x, theta, y[:, PHASE_DIM:])
        return np.concatenate([phase, extra], axis=1)


def default_t_max(scene: ThermostatScene) -> float:
    return TMAX_FACTOR * 2.0 * scene.chart_radius


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        threads = getattr(settings, 'THERMOSTAT_THREADS', 1)
    return max(1, int(threads))


def map_chunks(func: Callable[[np.ndarray], object], count: int, threads: Optional[int] = None,
               chunk: int = RAY_CHUNK) -> List:
    """
    Apply ``func`` to consecutive index chunks; results come back in order.
    """
    threads = resolve_threads(threads)
    bounds = [np.arange(start, min(start + chunk, count)) for start in range(0, count, chunk)]
    if threads == 1 or len(bounds) <= 1:
        return [func(idx) for idx in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, bounds))


def _concatenate(results: List[BatchResult], record: bool) -> BatchResult:
    if not results:
        return BatchResult(t=np.empty(0), y=np.empty((0, PHASE_DIM)), status=np.empty(0, dtype=int),
                           steps=np.empty(0, dtype=int), samples=[] if record else None)
    samples = None
    if record:
        samples = [row for r in results for row in r.samples]
    return BatchResult(
        t=np.concatenate([r.t for r in results]),
        y=np.concatenate([r.y for r in results]),
        status=np.concatenate([r.status for r in results]),
        steps=np.concatenate([r.steps for r in results]),
        samples=samples,
    )


def integrate_rays(scene: ThermostatScene, x: np.ndarray, theta: np.ndarray, direction: int = 1,
                   t_end=None, t_max: Optional[float] = None, extension=None,
                   extra0: Optional[np.ndarray] = None, record: bool = False,
                   threads: Optional[int] = None, rtol: float = RTOL, atol: float = ATOL,
                   stop_at_boundary: bool = True) -> BatchResult:
    """
    Integrate a batch of phase points (plus extension state) to boundary exit.

    Args:
        x: (B, 2) start positions; theta: (B,) fiber angles
        direction: +1 forward, -1 backward in time
        t_end: optional per-ray stopping time (absolute value)
        extension/extra0: state integrated jointly with the orbit

    Returns:
        BatchResult with the phase in columns 0..2 and the extension after
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    y0 = np.column_stack([x, theta])
    if extension is not None:
        y0 = np.column_stack([y0, np.asarray(extra0, dtype=float).reshape(len(theta), -1)])
    system = OrbitSystem(scene, extension)
    step = MAX_STEP_FRACTION * scene.radius
    integrator = RayIntegrator(
        system,
        boundary=DiskBoundary(scene.radius) if stop_at_boundary else None,
        max_step=step, max_displacement=step, rtol=rtol, atol=atol, scale=scene.radius,
    )
    t_max = default_t_max(scene) if t_max is None else t_max
    ends = None if t_end is None else np.broadcast_to(np.asarray(t_end, dtype=float), theta.shape)

    def run(idx):
        chunk_end = None if ends is None else ends[idx]
        return integrator.run(y0[idx], direction=direction, t_end=chunk_end, t_max=t_max, record=record)

    result = _concatenate(map_chunks(run, len(theta), threads), record)
    return result


def raise_if_trapped(result: BatchResult, t_max: float):
    if np.any(result.status == TRAPPED):
        count = int(np.sum(result.status == TRAPPED))
        raise TrappedOrbit(f"{count} orbit(s) still inside after T_max = {t_max:.4g}", trapped=count)


def integrate_orbit(scene: ThermostatScene, p0: PhasePoint, direction: str = 'forward',
                    t_max: Optional[float] = None, record: bool = True,
                    rtol: float = RTOL, atol: float = ATOL) -> OrbitRecord:
    """
    Follow one orbit until it leaves the surface.

    Raises:
        TrappedOrbit: no exit before t_max
        StepFailure: integrator breakdown
    """
    sign = 1 if direction == 'forward' else -1
    t_max = default_t_max(scene) if t_max is None else t_max
    result = integrate_rays(scene, p0.x[None, :], [p0.theta], direction=sign, t_max=t_max,
                            record=record, threads=1, rtol=rtol, atol=atol)
    raise_if_trapped(result, t_max)
    samples = []
    if record:
        times, states = result.sample_arrays(0)
        samples = [(float(t), PhasePoint(s[:2], s[2])) for t, s in zip(times, states)]
    final = result.y[0]
    exit_point = PhasePoint(final[:2], final[2])
    record_ = OrbitRecord(
        samples=samples, tau=abs(float(result.t[0])), exit_point=exit_point,
        exited=bool(result.status[0] == EXITED), steps=int(result.steps[0]),
    )
    logger.debug(f"Orbit from {p0.as_list()} exits after tau={record_.tau:.6g}")
    return record_


def exit_normal_components(scene: ThermostatScene, x: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """<v, nu>_g at boundary points; <= 0 for outgoing vectors."""
    beta = np.arctan2(x[:, 1], x[:, 0])
    xb, nu, _ = boundary_frame(scene, beta)
    v = np.exp(-scene.sigma_at(x))[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    return g_inner(scene, xb, v, nu)


def scattering_relation(scene: ThermostatScene, fan: BoundaryFan, t_max: Optional[float] = None,
                        threads: Optional[int] = None, rtol: float = RTOL,
                        atol: float = ATOL) -> ScatteringTable:
    """
    S(x, v) = (gamma(tau), gamma'(tau)) for every fan entry.

    Returns:
        ScatteringTable with exit alpha measured from the outward normal
    """
    t_max = default_t_max(scene) if t_max is None else t_max
    result = integrate_rays(scene, fan.x, fan.theta, t_max=t_max, threads=threads, rtol=rtol, atol=atol)
    raise_if_trapped(result, t_max)
    table = table_from_result(scene, result)
    logger.info(
        f"Scattering relation on {fan.size} rays: tau in [{table.tau.min():.4g}, {table.tau.max():.4g}]"
    )
    return table


def table_from_result(scene: ThermostatScene, result: BatchResult) -> ScatteringTable:
    exit_x = result.y[:, :2]
    exit_theta = result.y[:, 2]
    beta, alpha = outgoing_coordinates(exit_x, exit_theta)
    return ScatteringTable(
        tau=np.abs(result.t), exit_x=exit_x, exit_theta=exit_theta, exit_beta=beta,
        exit_s=arc_length(scene, beta), exit_alpha=alpha, steps=result.steps,
    )


def inverse_scattering(scene: ThermostatScene, exit_x: np.ndarray, exit_theta: np.ndarray,
                       t_max: Optional[float] = None, threads: Optional[int] = None):
    """
    S^{-1} on outgoing boundary points by backward integration.

    Returns:
        tuple: (entry_x, entry_theta, tau)
    """
    exit_x = np.atleast_2d(exit_x)
    exit_theta = np.atleast_1d(exit_theta)
    rho = scene.radius ** 2 - np.sum(exit_x ** 2, axis=1)
    if np.any(np.abs(rho) > 1e-8 * scene.radius ** 2):
        raise NotOnBoundary('Inverse scattering needs points on the boundary')
    t_max = default_t_max(scene) if t_max is None else t_max
    result = integrate_rays(scene, exit_x, exit_theta, direction=-1, t_max=t_max, threads=threads)
    raise_if_trapped(result, t_max)
    return result.y[:, :2], result.y[:, 2], np.abs(result.t)


def nontrapping_guard(scene: ThermostatScene, fan: BoundaryFan, t_max: Optional[float] = None,
                      threads: Optional[int] = None) -> float:
    """
    Largest exit time over the fan.

    Rejects non-convex scenes before integrating anything.

    Raises:
        NonConvexScene, TrappedOrbit
    """
    require_strict_convexity(scene)
    table = scattering_relation(scene, fan, t_max=t_max, threads=threads)
    longest = float(np.max(table.tau)) if table.tau.size else 0.0
    logger.info(f"Non-trapping guard: max tau {longest:.6g} over {fan.size} rays")
    return longest


def first_integral_extend(scene: ThermostatScene, w: FanFunction, grid,
                          threads: Optional[int] = None):
    """
    w_psi(x, v) = w at the incoming boundary point of the orbit through (x, v).

    Args:
        w: fan data (samples or callable in (beta, alpha))
        grid: fiber_calculus BundleGrid; nodes outside M get 0

    Returns:
        BundleFunction on ``grid``
    """
    from fiber_calculus.grid import BundleFunction

    points, thetas, index = grid.interior_rays()
    entry_x, entry_theta, _ = _backward_to_entry(scene, points, thetas, threads)
    beta, alpha = incoming_coordinates(entry_x, entry_theta)
    values = np.asarray(w(beta, alpha))
    return BundleFunction.from_interior(grid, values, index)


def _backward_to_entry(scene, points, thetas, threads):
    result = integrate_rays(scene, points, thetas, direction=-1, threads=threads)
    raise_if_trapped(result, default_t_max(scene))
    return result.y[:, :2], result.y[:, 2], np.abs(result.t)


def operator_A(table: ScatteringTable, w_samples: np.ndarray) -> Dict[str, np.ndarray]:
    """
    The boundary operator w -> (w on the incoming fan, w o S^{-1} on the outgoing side).

    The outgoing half is returned at the exit coordinates of each fan ray.
    """
    return {
        'incoming': np.asarray(w_samples),
        'outgoing_beta': table.exit_beta,
        'outgoing_alpha': table.exit_alpha,
        'outgoing': np.asarray(w_samples),
    }


def speed_drift(scene: ThermostatScene, x: np.ndarray, theta: np.ndarray,
                rtol: float = RTOL, atol: float = ATOL, threads: Optional[int] = None) -> np.ndarray:
    """
    Drift of |x'|_g per unit time along the second-order form of each orbit.

    Returns:
        array: max over recorded steps of ||x'|_g - 1|, divided by the exit time
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    u0 = np.exp(-scene.sigma_at(x))[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    y0 = np.column_stack([x, u0])
    step = MAX_STEP_FRACTION * scene.radius
    integrator = RayIntegrator(
        lambda y: cartesian_rhs(scene, y), boundary=DiskBoundary(scene.radius),
        max_step=step, max_displacement=step, rtol=rtol, atol=atol, scale=scene.radius,
    )
    t_max = default_t_max(scene)

    def run(idx):
        result = integrator.run(y0[idx], t_max=t_max, record=True)
        drift = np.zeros(len(idx))
        for k in range(len(idx)):
            times, states = result.sample_arrays(k)
            speed = np.sqrt(g_inner(scene, states[:, :2], states[:, 2:4], states[:, 2:4]))
            drift[k] = np.max(np.abs(speed - 1.0)) / max(abs(times[-1]), 1e-300)
        return drift

    return np.concatenate(map_chunks(run, len(theta), threads))
