"""
Tensor grids on the circle bundle SM and the functions that live on them.

A grid is the product of cell-centred chart nodes on the square [-R, R]^2
(masked to the disk |x| <= R) with n_theta equispaced fiber angles. Values
are stored as (n_x, n_x, n_theta, *components); nodes outside M hold 0.
"""
import logging
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
import shapely
from shapely.geometry import Point

from geometry.scene import ThermostatScene

from .constants import DEFAULT_CONVENTION, DEFAULT_N_THETA, DISK_QUAD_SEGMENTS, FRAME_CONVENTIONS
from .exceptions import GridMismatchError

logger = logging.getLogger(__name__)


def fiber_wavenumbers(n_theta: int) -> np.ndarray:
    """Integer wavenumbers in FFT order, in [-n_theta/2, n_theta/2)."""
    return np.rint(np.fft.fftfreq(n_theta) * n_theta).astype(int)


class BundleGrid:
    """
    Discretization of SM over the isothermal disk chart.

    Args:
        scene: the thermostat scene
        n_x: nodes per chart direction
        n_theta: fiber angles (even)
        convention: 'bracket' (X_perp = [X, V]) or 'rotation' (X_perp = -[X, V])
    """

    def __init__(self, scene: ThermostatScene, n_x: int, n_theta: int = DEFAULT_N_THETA,
                 convention: str = DEFAULT_CONVENTION):
        if convention not in FRAME_CONVENTIONS:
            raise ValueError(f"Unknown frame convention '{convention}'")
        if n_x < 8 or n_theta < 4 or n_theta % 2:
            raise ValueError('Grid needs n_x >= 8 and an even n_theta >= 4')
        self.scene = scene
        self.n_x = int(n_x)
        self.n_theta = int(n_theta)
        self.convention = convention
        self.h = 2.0 * scene.radius / self.n_x
        self.axis = -scene.radius + self.h * (np.arange(self.n_x) + 0.5)
        xx, yy = np.meshgrid(self.axis, self.axis, indexing='ij')
        self.points = np.stack([xx, yy], axis=-1)
        self.radius = np.hypot(xx, yy)
        self.inside = self.radius <= scene.radius
        self.thetas = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta
        self.wavenumbers = fiber_wavenumbers(self.n_theta)

    def __repr__(self):
        return f"BundleGrid(n_x={self.n_x}, n_theta={self.n_theta}, R={self.scene.radius})"

    @property
    def epsilon(self) -> float:
        """Sign relating X_perp to the bracket [X, V]."""
        return 1.0 if self.convention == 'bracket' else -1.0

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.n_x, self.n_x, self.n_theta

    def same_as(self, other: 'BundleGrid') -> bool:
        return (
            self is other
            or (self.scene is other.scene and self.n_x == other.n_x
                and self.n_theta == other.n_theta and self.convention == other.convention)
        )

    def _masked(self, func, fill_shape=()) -> np.ndarray:
        out = np.zeros(self.inside.shape + tuple(fill_shape))
        out[self.inside] = func(self.points[self.inside])
        return out

    @cached_property
    def sigma(self) -> np.ndarray:
        return self._masked(self.scene.sigma.value)

    @cached_property
    def sigma_gradient(self) -> np.ndarray:
        return self._masked(self.scene.sigma.gradient, (2,))

    @cached_property
    def sigma_laplacian(self) -> np.ndarray:
        return self._masked(self.scene.sigma.laplacian)

    @cached_property
    def efield(self) -> np.ndarray:
        return self._masked(self.scene.efield.value, (2,))

    @cached_property
    def efield_divergence(self) -> np.ndarray:
        return self._masked(self.scene.efield.divergence)

    @cached_property
    def cell_areas(self) -> np.ndarray:
        """
        Flat area of each node's cell inside the disk.

        Cut cells are intersected with a polygonal disk and then rescaled so
        that the areas sum to pi R^2.
        """
        R, h = self.scene.radius, self.h
        lo = self.points - 0.5 * h
        hi = self.points + 0.5 * h
        far = np.hypot(np.maximum(np.abs(lo[..., 0]), np.abs(hi[..., 0])),
                       np.maximum(np.abs(lo[..., 1]), np.abs(hi[..., 1])))
        areas = np.where(far <= R, h * h, 0.0)
        cut = self.inside & (far > R)
        disk = Point(0.0, 0.0).buffer(R, quad_segs=DISK_QUAD_SEGMENTS)
        boxes = shapely.box(lo[cut, 0], lo[cut, 1], hi[cut, 0], hi[cut, 1])
        partial = shapely.area(shapely.intersection(boxes, disk))
        full = float(np.sum(areas))
        if partial.sum() > 0:
            partial = partial * (np.pi * R * R - full) / partial.sum()
        areas[cut] = partial
        return areas

    @cached_property
    def weights(self) -> np.ndarray:
        """dVol_g weight per chart node."""
        return self.cell_areas * np.exp(2.0 * self.sigma)

    def liouville_weights(self) -> np.ndarray:
        """dSigma^3 = dVol_g dtheta weight per node, broadcast over fiber angles."""
        return self.weights[:, :, None] * (2.0 * np.pi / self.n_theta)

    def core_mask(self, fraction: float = 0.8) -> np.ndarray:
        """Nodes far enough from the boundary that composed stencils stay inside M."""
        limit = min(fraction * self.scene.radius, self.scene.radius - 5.0 * self.h)
        return self.radius <= limit

    def interior_rays(self):
        """
        Phase points of all nodes inside M.

        Returns:
            tuple: (points (P, 2), thetas (P,), index) where index selects
            the same entries from a (n_x, n_x, n_theta) array
        """
        ix, iy = np.nonzero(self.inside)
        count = ix.size
        points = np.repeat(self.points[ix, iy], self.n_theta, axis=0)
        thetas = np.tile(self.thetas, count)
        it = np.tile(np.arange(self.n_theta), count)
        index = (np.repeat(ix, self.n_theta), np.repeat(iy, self.n_theta), it)
        return points, thetas, index

    def refined(self, factor: int = 2) -> 'BundleGrid':
        return BundleGrid(self.scene, self.n_x * factor, self.n_theta * factor, self.convention)

    def phase_array(self, func) -> np.ndarray:
        """Evaluate func(x, theta) -> array on every node inside M; broadcasts x with theta."""
        inside = self.points[self.inside]
        values = np.asarray(func(inside[:, None, :], self.thetas[None, :]))
        out = np.zeros(self.inside.shape + values.shape[1:], dtype=values.dtype)
        out[self.inside] = values
        return out


class BundleFunction:
    """
    A C^n-valued function on the grid with cached vertical Fourier modes.

    ``modes[..., j, ...]`` along axis 2 is the coefficient u_k of e^{ik theta}
    for k = grid.wavenumbers[j].
    """

    def __init__(self, grid: BundleGrid, values: np.ndarray):
        values = np.asarray(values, dtype=complex)
        if values.shape[:3] != grid.shape:
            raise GridMismatchError(
                f"Values of shape {values.shape[:3]} do not match grid {grid.shape}"
            )
        self.grid = grid
        self.values = values
        self._modes: Optional[np.ndarray] = None

    def __repr__(self):
        return f"BundleFunction({self.grid!r}, components={self.component_shape})"

    @property
    def component_shape(self) -> Tuple[int, ...]:
        return self.values.shape[3:]

    @property
    def modes(self) -> np.ndarray:
        if self._modes is None:
            self._modes = np.fft.fft(self.values, axis=2) / self.grid.n_theta
        return self._modes

    @classmethod
    def from_modes(cls, grid: BundleGrid, modes: np.ndarray) -> 'BundleFunction':
        values = np.fft.ifft(np.asarray(modes) * grid.n_theta, axis=2)
        out = cls(grid, values)
        out._modes = np.asarray(modes, dtype=complex)
        return out

    @classmethod
    def from_interior(cls, grid: BundleGrid, values: np.ndarray, index) -> 'BundleFunction':
        """Scatter values computed on ``grid.interior_rays()`` back onto the grid."""
        values = np.asarray(values)
        full = np.zeros(grid.shape + values.shape[1:], dtype=complex)
        full[index] = values
        return cls(grid, full)

    @classmethod
    def from_callable(cls, grid: BundleGrid, func) -> 'BundleFunction':
        return cls(grid, grid.phase_array(func))

    @classmethod
    def zeros(cls, grid: BundleGrid, components: Tuple[int, ...] = ()) -> 'BundleFunction':
        return cls(grid, np.zeros(grid.shape + tuple(components), dtype=complex))

    def check_grid(self, other: 'BundleFunction'):
        if not self.grid.same_as(other.grid):
            raise GridMismatchError(f"{self.grid!r} and {other.grid!r} differ")

    def mode(self, k: int) -> 'BundleFunction':
        """The projection u_k e^{ik theta} onto H_k."""
        keep = np.zeros_like(self.modes)
        j = int(np.flatnonzero(self.grid.wavenumbers == k)[0])
        keep[:, :, j] = self.modes[:, :, j]
        return BundleFunction.from_modes(self.grid, keep)

    def mode_energy(self) -> np.ndarray:
        """Squared dSigma^3 norm of each mode projection, in FFT order."""
        weights = self.grid.weights[:, :, None] * 2.0 * np.pi
        power = np.abs(self.modes) ** 2
        if power.ndim > 3:
            power = power.reshape(power.shape[:3] + (-1,)).sum(axis=-1)
        return np.sum(power * weights, axis=(0, 1))

    def with_values(self, values: np.ndarray) -> 'BundleFunction':
        return BundleFunction(self.grid, values)

    def __add__(self, other):
        if isinstance(other, BundleFunction):
            self.check_grid(other)
            return self.with_values(self.values + other.values)
        return self.with_values(self.values + other)

    def __sub__(self, other):
        if isinstance(other, BundleFunction):
            self.check_grid(other)
            return self.with_values(self.values - other.values)
        return self.with_values(self.values - other)

    def __mul__(self, scalar):
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)
