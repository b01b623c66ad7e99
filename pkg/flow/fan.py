"""
Boundary fans: tensor grids over the incoming boundary of the unit circle
bundle, plus interpolation of fan data.

A fan entry is (beta, alpha): the boundary point R(cos beta, sin beta) and the
angle alpha in (-pi/2, pi/2) between the velocity and the inward normal.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from geometry.scene import ThermostatScene
from geometry.services import arc_length, boundary_frame, g_inner, perimeter

from .constants import FAN_ANGLES, FAN_BOUNDARY_POINTS

logger = logging.getLogger(__name__)

# Periodic padding (in nodes) for boundary-angle interpolation
WRAP = 4


def wrap_angle(angle):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)


def entry_angle(beta, alpha):
    """Fiber angle of the incoming vector at (beta, alpha)."""
    return np.asarray(beta) + np.pi + np.asarray(alpha)


def incoming_coordinates(x: np.ndarray, theta: np.ndarray):
    """(beta, alpha) of boundary points with alpha measured from the inward normal."""
    beta = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * np.pi)
    return beta, wrap_angle(theta - beta - np.pi)


def outgoing_coordinates(x: np.ndarray, theta: np.ndarray):
    """(beta, alpha) of boundary points with alpha measured from the outward normal."""
    beta = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * np.pi)
    return beta, wrap_angle(theta - beta)


@dataclass(eq=False)
class BoundaryFan:
    """
    Tensor grid of incoming boundary phase points.

    Entries are ordered boundary-major: entry ``i * n_angles + j`` sits at
    ``betas[i]`` and ``alphas[j]``.
    """

    scene: ThermostatScene
    betas: np.ndarray
    alphas: np.ndarray
    arcs: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, scene: ThermostatScene, n_boundary: int = FAN_BOUNDARY_POINTS,
              n_angles: int = FAN_ANGLES) -> 'BoundaryFan':
        betas = 2.0 * np.pi * np.arange(n_boundary) / n_boundary
        alphas = -0.5 * np.pi + (np.arange(n_angles) + 0.5) * np.pi / n_angles
        fan = cls(scene=scene, betas=betas, alphas=alphas, arcs=arc_length(scene, betas))
        logger.debug(f"Built fan {n_boundary}x{n_angles} on R={scene.radius}")
        return fan

    @property
    def shape(self):
        return self.betas.size, self.alphas.size

    @property
    def size(self) -> int:
        return self.betas.size * self.alphas.size

    @property
    def beta(self) -> np.ndarray:
        return np.repeat(self.betas, self.alphas.size)

    @property
    def alpha(self) -> np.ndarray:
        return np.tile(self.alphas, self.betas.size)

    @property
    def s(self) -> np.ndarray:
        return np.repeat(self.arcs, self.alphas.size)

    @property
    def theta(self) -> np.ndarray:
        return entry_angle(self.beta, self.alpha)

    @property
    def x(self) -> np.ndarray:
        return self.scene.radius * np.stack([np.cos(self.beta), np.sin(self.beta)], axis=-1)

    def normal_components(self) -> np.ndarray:
        """<v, nu>_g per entry; non-negative on an incoming fan."""
        x, nu, _ = boundary_frame(self.scene, self.beta)
        scale = np.exp(-self.scene.sigma_at(x))[:, None]
        v = scale * np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)
        return g_inner(self.scene, x, v, nu)

    def weights(self) -> np.ndarray:
        """Quadrature weights ds dalpha per entry (midpoint rule in both directions)."""
        speed = self.scene.radius * np.exp(self.scene.sigma_at(self.x))
        d_beta = 2.0 * np.pi / self.betas.size
        d_alpha = np.pi / self.alphas.size
        return speed * d_beta * d_alpha

    def perimeter(self) -> float:
        return perimeter(self.scene)

    def refined(self, factor: int = 2) -> 'BoundaryFan':
        return BoundaryFan.build(self.scene, self.betas.size * factor, self.alphas.size * factor)


class FanFunction:
    """
    Interpolant of fan samples, periodic in beta.

    ``values`` has shape (n_boundary, n_angles, *components) and may be
    complex. Queries outside the sampled alpha range are clamped to it.
    """

    def __init__(self, fan: BoundaryFan, values: Optional[np.ndarray] = None,
                 func: Optional[Callable] = None):
        self.fan = fan
        self.func = func
        self._splines = None
        if values is not None:
            values = np.asarray(values)
            self.component_shape = values.shape[2:]
            self.values = values.reshape(fan.betas.size, fan.alphas.size, -1)
        elif func is None:
            raise ValueError('FanFunction needs values or a callable')

    @classmethod
    def from_callable(cls, fan: BoundaryFan, func: Callable) -> 'FanFunction':
        """Wrap w(beta, alpha) -> values; sampled lazily on demand."""
        return cls(fan, func=func)

    def samples(self) -> np.ndarray:
        """Values on the fan entries, shape (size, *components)."""
        if self.func is not None:
            return np.asarray(self.func(self.fan.beta, self.fan.alpha))
        return self.values.reshape((self.fan.size,) + self.component_shape)

    def _build(self):
        betas = self.fan.betas
        padded = np.concatenate([betas[-WRAP:] - 2.0 * np.pi, betas, betas[:WRAP] + 2.0 * np.pi])
        splines = []
        for c in range(self.values.shape[2]):
            column = self.values[:, :, c]
            column = np.concatenate([column[-WRAP:], column, column[:WRAP]], axis=0)
            parts = [RectBivariateSpline(padded, self.fan.alphas, column.real, s=0)]
            if np.iscomplexobj(column):
                parts.append(RectBivariateSpline(padded, self.fan.alphas, column.imag, s=0))
            splines.append(parts)
        self._splines = splines

    def __call__(self, beta, alpha) -> np.ndarray:
        beta = np.mod(np.asarray(beta, dtype=float), 2.0 * np.pi)
        alpha = np.asarray(alpha, dtype=float)
        if self.func is not None:
            return np.asarray(self.func(beta, alpha))
        if self._splines is None:
            self._build()
        alpha = np.clip(alpha, self.fan.alphas[0], self.fan.alphas[-1])
        out = []
        for parts in self._splines:
            value = parts[0](beta, alpha, grid=False)
            if len(parts) > 1:
                value = value + 1j * parts[1](beta, alpha, grid=False)
            out.append(value)
        result = np.stack(out, axis=-1)
        return result.reshape(beta.shape + self.component_shape)
