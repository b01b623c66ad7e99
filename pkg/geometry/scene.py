"""
The (M, g, E) triple of a thermostat experiment.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from thermostat_lab.exceptions import ConfigurationError

from .constants import DOMAIN_COLLAR
from .exceptions import OutOfDomainError
from .fields import (
    PoincareConformalFactor,
    ScalarField,
    VectorField,
    ZeroScalarField,
    ZeroVectorField,
    scalar_field_from_config,
    vector_field_from_config,
)

logger = logging.getLogger(__name__)

# Absolute slack on |x| <= R(1 + collar); keeps round-off at the rim legal
DOMAIN_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class ThermostatScene:
    """
    Disk chart |x| <= R with metric e^{2 sigma}|dx|^2 and external field E.

    The surface M is |x| <= radius. Fields are defined (and evaluated) on the
    slightly larger disk of radius ``radius * (1 + collar)`` so that integrator
    stages straddling the boundary stay legal.
    """

    radius: float = 1.0
    sigma: ScalarField = field(default_factory=ZeroScalarField)
    efield: VectorField = field(default_factory=ZeroVectorField)
    collar: float = DOMAIN_COLLAR
    config: Optional[Dict] = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigurationError('Chart radius must be positive', radius=self.radius)
        if self.collar < 0:
            raise ConfigurationError('Chart collar must be non-negative', collar=self.collar)
        if isinstance(self.sigma, PoincareConformalFactor) and self.chart_radius >= 1.0:
            raise ConfigurationError(
                f"Poincare factor needs R(1 + collar) < 1, got {self.chart_radius:.4f}"
            )

    @property
    def chart_radius(self) -> float:
        return self.radius * (1.0 + self.collar)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def inside(self, x: np.ndarray) -> np.ndarray:
        """True where x lies in M (|x| <= R)."""
        x = np.asarray(x, dtype=float)
        return np.sum(x * x, axis=-1) <= self.radius ** 2

    def check_domain(self, x: np.ndarray) -> np.ndarray:
        """Return x as an array, raising if any point lies beyond the chart radius R(1 + collar)."""
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x * x, axis=-1))
        if np.any(r > self.chart_radius + DOMAIN_SLACK) or not np.all(np.isfinite(r)):
            worst = float(np.nanmax(r)) if r.size else float('nan')
            raise OutOfDomainError(
                f"Point at |x| = {worst:.6g} outside chart of radius {self.chart_radius:.6g}",
                radius=worst,
            )
        return x

    def sigma_at(self, x: np.ndarray) -> np.ndarray:
        return self.sigma.value(self.check_domain(x))

    def conformal_factor(self, x: np.ndarray) -> np.ndarray:
        """e^{2 sigma(x)} = sqrt(det g)."""
        return np.exp(2.0 * self.sigma_at(x))

    @classmethod
    def from_config(cls, block: Dict) -> 'ThermostatScene':
        """
        Build a scene from a validated scene block.

        Args:
            block: {"R": float, "sigma": {kind, params}, "E": {kind, params}, "collar": float}

        Returns:
            ThermostatScene
        """
        radius = float(block.get('R', 1.0))
        scene = cls(
            radius=radius,
            sigma=scalar_field_from_config(block.get('sigma') or {}, radius),
            efield=vector_field_from_config(block.get('E') or {}, radius),
            collar=float(block.get('collar', DOMAIN_COLLAR)),
            config=dict(block),
        )
        logger.debug(
            f"Scene R={radius} sigma={type(scene.sigma).__name__} E={type(scene.efield).__name__}"
        )
        return scene
