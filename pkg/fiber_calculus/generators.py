"""
Random band-limited test functions on SM.

A test function is u(x, theta) = sum_{|k| <= k_max} c_k(x) e^{ik theta} with
random complex polynomial coefficients c_k times the cutoff
(1 - |x|^2 / r0^2)_+^8, r0 = 0.9 R. It is a continuous object, so the same
function can be sampled on several grids for convergence studies.
"""
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from geometry.fields import PolynomialScalarField, evaluate_monomials, monomial_exponents
from geometry.scene import ThermostatScene

from .constants import CUTOFF_POWER, SUPPORT_FRACTION
from .grid import BundleFunction, BundleGrid


def support_cutoff(x: np.ndarray, support: float) -> np.ndarray:
    q = np.sum(np.asarray(x) ** 2, axis=-1) / support ** 2
    return np.clip(1.0 - q, 0.0, None) ** CUTOFF_POWER


@dataclass
class BandLimitedFunction:
    """
    Continuous band-limited function with compact support in M.

    ``coefficients[k]`` has shape (len(exponents), *components).
    """

    radius: float
    exponents: list
    coefficients: Dict[int, np.ndarray]
    components: Tuple[int, ...] = ()
    support: float = field(default=0.0)
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.support:
            self.support = SUPPORT_FRACTION * self.radius

    @property
    def degrees(self) -> Tuple[int, ...]:
        return tuple(sorted(self.coefficients))

    def coefficient(self, k: int, x: np.ndarray) -> np.ndarray:
        """c_k(x) including the cutoff."""
        mono = evaluate_monomials(x / self.radius, self.exponents)
        value = np.tensordot(mono, self.coefficients[k], axes=([-1], [0]))
        cut = support_cutoff(x, self.support)
        return cut.reshape(cut.shape + (1,) * len(self.components)) * value

    def on(self, grid: BundleGrid) -> BundleFunction:
        values = np.zeros(grid.shape + self.components, dtype=complex)
        for k in self.coefficients:
            c_k = self.coefficient(k, grid.points) * grid.inside.reshape(
                grid.inside.shape + (1,) * len(self.components))
            phase = np.exp(1j * k * grid.thetas)
            values += c_k[:, :, None] * phase.reshape((1, 1, -1) + (1,) * len(self.components))
        return BundleFunction(grid, values)

    def restricted(self, degrees: Iterable[int]) -> 'BandLimitedFunction':
        keep = {k: self.coefficients[k] for k in degrees if k in self.coefficients}
        return BandLimitedFunction(self.radius, self.exponents, keep, self.components, self.support, self.seed)


def random_band_limited(scene: ThermostatScene, rng: np.random.Generator, k_max: int = 3,
                        degree: int = 3, components: Tuple[int, ...] = (),
                        degrees: Optional[Iterable[int]] = None,
                        support: Optional[float] = None) -> BandLimitedFunction:
    """
    Draw a random band-limited function.

    Args:
        degrees: fiber degrees to populate; defaults to -k_max..k_max
    """
    exponents = monomial_exponents(degree)
    degrees = range(-k_max, k_max + 1) if degrees is None else degrees
    coefficients = {}
    for k in degrees:
        shape = (len(exponents),) + tuple(components)
        coefficients[int(k)] = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return BandLimitedFunction(
        radius=scene.radius, exponents=exponents, coefficients=coefficients,
        components=tuple(components), support=support or SUPPORT_FRACTION * scene.radius,
    )


def random_pure_mode(scene: ThermostatScene, rng: np.random.Generator, k: int, degree: int = 3,
                     components: Tuple[int, ...] = ()) -> BandLimitedFunction:
    return random_band_limited(scene, rng, degree=degree, components=components, degrees=[k])


def random_weight(scene: ThermostatScene, rng: np.random.Generator, degree: int = 2,
                  amplitude: float = 0.5) -> PolynomialScalarField:
    """A smooth real weight phi on M (a random polynomial in x / R)."""
    terms = []
    for i, j in monomial_exponents(degree):
        scale = scene.radius ** (i + j)
        terms.append((i, j, amplitude * rng.normal() / scale))
    return PolynomialScalarField(terms, scene.radius)
