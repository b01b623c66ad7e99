"""
Orchestration of the experiment commands.

Each ``run_*`` function computes everything in memory and returns an
ExperimentOutput; files are written only afterwards by the command.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from fiber_calculus.constants import DEFAULT_CONVENTION
from fiber_calculus.services import star_curvature_report, verification_suite
from flow.fan import entry_angle
from flow.services import PhasePoint, integrate_orbit, scattering_relation, speed_drift
from geometry.services import boundary_x, convexity_margin, curvature_report, require_strict_convexity
from inversion.services import (
    assemble_forward,
    finite_degree_experiment,
    forward_cache,
    kernel_analysis,
    reconstruct,
    rigidity_experiment,
)
from transport.connections import matrix_field_from_config, random_pair
from transport.services import ray_transform, scattering_data_map
from transport.tensors import source_from_config

from .config import ExperimentConfig
from .constants import BOUNDARY_COMMANDS, COMMANDS, DEFAULT_RANDOM_RANK
from .exceptions import InvalidConfiguration

logger = logging.getLogger(__name__)

Table = Tuple[str, Sequence[str], List[Sequence]]


@dataclass
class ExperimentOutput:
    report: str
    results: Dict
    tables: List[Table] = field(default_factory=list)


def run_trace(config: ExperimentConfig, threads: Optional[int] = None, **_) -> ExperimentOutput:
    scene = config.scene()
    block = config.block('trace')
    if 'beta' in block:
        require_strict_convexity(scene)
        start = PhasePoint(boundary_x(scene, block['beta']), float(entry_angle(block['beta'], block['alpha'])))
    else:
        start = PhasePoint(block['x'], block['theta'])
    record = integrate_orbit(scene, start, block.get('direction', 'forward'), t_max=config.t_max)
    exit_point = record.exit_point.as_list() if record.exit_point is not None else [np.nan] * 3
    row = start.as_list() + [record.tau] + exit_point + [record.exited]
    header = ['x1', 'x2', 'theta', 'tau', 'exit_x1', 'exit_x2', 'exit_theta', 'exited']
    results = record.to_dict()
    results['start'] = start.as_list()
    return ExperimentOutput(report='trace.json', results=results, tables=[('trace.csv', header, [row])])


def run_scatter(config: ExperimentConfig, threads: Optional[int] = None, **_) -> ExperimentOutput:
    scene = config.scene()
    convexity = convexity_margin(scene)
    fan = config.fan(scene)
    discretization = config.discretization
    table = scattering_relation(scene, fan, t_max=config.t_max, threads=threads,
                                rtol=discretization.get('rtol', 1e-10), atol=discretization.get('atol', 1e-10))
    drift = speed_drift(scene, fan.x, fan.theta, threads=threads)
    results = {
        'rays': fan.size,
        'tau_min': float(np.min(table.tau)),
        'tau_max': float(np.max(table.tau)),
        'max_speed_drift': float(np.max(drift)),
        'convexity': convexity.to_dict(),
    }
    header = ['s', 'alpha', 'tau', 'exit_s', 'exit_alpha']
    return ExperimentOutput(report='scatter.json', results=results, tables=[('scatter.csv', header, table.rows(fan))])


def run_transport(config: ExperimentConfig, threads: Optional[int] = None, **_) -> ExperimentOutput:
    scene = config.scene()
    pair = config.pair()
    fan = config.fan(scene)
    data = scattering_data_map(scene, pair, fan, threads)
    unitary = pair.is_unitary(scene.radius)
    results = {
        'rays': fan.size,
        'rank': pair.n,
        'unitary_pair': unitary,
        'inverse_defect': data.inverse_defect,
        'unitarity_defect': data.unitarity_defect if unitary else None,
        'tau_max': float(np.max(data.table.tau)),
    }
    return ExperimentOutput(report='transport.json', results=results,
                            tables=[('transport.csv', data.header(), data.rows())])


def run_transform(config: ExperimentConfig, threads: Optional[int] = None, **_) -> ExperimentOutput:
    scene = config.scene()
    pair = config.pair()
    fan = config.fan(scene)
    source = source_from_config(config.block('transform')['source'], pair.n, scene.radius)
    data = ray_transform(scene, pair, source, fan, threads)
    results = {
        'rays': fan.size,
        'rank': pair.n,
        'order': source.order,
        'max_abs': float(np.max(np.abs(data.values), initial=0.0)),
    }
    return ExperimentOutput(report='transform.json', results=results,
                            tables=[('transform.csv', data.header(), data.rows())])


def run_verify(config: ExperimentConfig, threads: Optional[int] = None, **_) -> ExperimentOutput:
    scene = config.scene()
    block = config.block('verify')
    rng = config.rng()
    pair = config.pair(rng) if config.block('pair') else None
    suite = verification_suite(
        scene, pair, seed=config.seed, resolutions=config.resolutions,
        convention=(config.discretization.get('grid') or {}).get('convention', DEFAULT_CONVENTION),
        tolerance=config.tolerance, energy_samples=block.get('energy_samples', 10),
        carleman_samples=block.get('carleman_samples', 20),
    )
    grid = config.grid(scene)
    results = dict(suite)
    results['curvature'] = curvature_report(scene).to_dict()
    results['convexity'] = convexity_margin(scene).to_dict()
    # same draw as the suite makes for its default pair
    checked = pair if pair is not None else random_pair(np.random.default_rng(config.seed), DEFAULT_RANDOM_RANK)
    checks = [
        all(item['passed'] for item in suite['identities']),
        all(item.get('passed', True) for item in suite['energy']),
        all(item['holds'] for item in suite['carleman']),
    ]
    if checked.is_unitary(scene.radius):
        star = star_curvature_report(checked, grid, kappa=block.get('kappa'))
        results['star_curvature'] = star.to_dict()
        checks.append(star.fiber_residual is None or star.fiber_residual <= config.tolerance)
    tables = []
    if block.get('finite_degree', True) and convexity_margin(scene).strictly_convex:
        degree = finite_degree_experiment(scene, checked, grid, rng, threads=threads)
        results['finite_degree'] = degree.to_dict()
        tables.append(('decay.csv', ['k', 'norm'], degree.profile.rows()))
        checks.append(degree.passed)
    results['all_passed'] = bool(all(checks))
    return ExperimentOutput(report='verify.json', results=results, tables=tables)


def run_kernel(config: ExperimentConfig, threads: Optional[int] = None, use_cache: bool = True,
               **_) -> ExperimentOutput:
    scene = config.scene()
    rng = config.rng()
    pair = config.pair(rng)
    fan = config.fan(scene)
    block = config.block('kernel')
    order, degree = block.get('order', 1), block.get('degree', 6)
    cache = forward_cache(use_cache)
    try:
        forward = assemble_forward(scene, pair, fan, order, degree, threads, cache, config.cache_key(order, degree))
    finally:
        if cache is not None:
            cache.close()
    report = kernel_analysis(forward, scene, pair, block.get('threshold', 1e-6))
    truth = rng.standard_normal(forward.basis.size) + 1j * rng.standard_normal(forward.basis.size)
    data = forward.matrix @ truth
    noise = block.get('noise', 0.0)
    if noise > 0.0:
        perturbation = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
        data = data + noise * np.linalg.norm(data) / np.linalg.norm(perturbation) * perturbation
    recovered = reconstruct(forward, data, block.get('alpha', 1e-10), report.natural, truth)
    results = {
        'forward': forward.to_dict(),
        'kernel': report.to_dict(),
        'reconstruction': recovered.to_dict(),
    }
    return ExperimentOutput(report='kernel.json', results=results,
                            tables=[('singular_values.csv', ['index', 'sigma'], report.rows())])


def run_rigidity(config: ExperimentConfig, threads: Optional[int] = None, **_) -> ExperimentOutput:
    scene = config.scene()
    pair = config.pair()
    block = config.block('rigidity')
    gauge = matrix_field_from_config(block['gauge'], pair.n, scene.radius)
    report = rigidity_experiment(
        scene, pair, gauge, config.fan(scene), config.grid(scene), rays=block.get('rays', 100),
        negative_control=block.get('negative_control', True), threads=threads,
    )
    return ExperimentOutput(report='rigidity.json', results=report.to_dict())


RUNNERS: Dict[str, Callable[..., ExperimentOutput]] = {
    'trace': run_trace,
    'scatter': run_scatter,
    'transport': run_transport,
    'transform': run_transform,
    'verify': run_verify,
    'kernel': run_kernel,
    'rigidity': run_rigidity,
}


def run(command: str, config: ExperimentConfig, **options) -> ExperimentOutput:
    """
    Run one experiment command in memory.

    Commands that integrate from the boundary are gated on strict convexity
    before any ray is traced.

    Raises:
        InvalidConfiguration: unknown command
        NonConvexScene: boundary command on a scene that is not strictly convex
    """
    if command not in COMMANDS:
        raise InvalidConfiguration(f"Unknown command '{command}'", command=command)
    if command in BOUNDARY_COMMANDS:
        require_strict_convexity(config.scene())
    logger.info(f"Running {command} (seed {config.seed})")
    return RUNNERS[command](config, **options)
