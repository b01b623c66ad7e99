"""
Polynomial coefficient spaces for source pairs [f, h].

Every tensor component is expanded in total-degree-d polynomials of x / R,
orthonormalized against the dVol_g mass matrix, so the Euclidean geometry
of coefficient vectors is the L^2 geometry of the components.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cholesky, solve_triangular

from geometry.fields import evaluate_monomials, monomial_exponents, monomial_gradients
from geometry.scene import ThermostatScene
from transport.tensors import (
    CutoffTensorField,
    SourcePair,
    SymmetricTensorField,
    angular_monomials,
    binomials,
)

from .constants import MAX_TENSOR_ORDER, QUADRATURE_ANGULAR, QUADRATURE_RADIAL
from .exceptions import InvalidBasis

logger = logging.getLogger(__name__)


@dataclass
class DiskQuadrature:
    """Nodes and dVol_g weights on the disk of the scene."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, scene: ThermostatScene, radial: int = QUADRATURE_RADIAL,
              angular: int = QUADRATURE_ANGULAR) -> 'DiskQuadrature':
        nodes, w = leggauss(radial)
        r = 0.5 * scene.radius * (nodes + 1.0)
        wr = 0.5 * scene.radius * w * r
        phi = 2.0 * np.pi * np.arange(angular) / angular
        points = np.stack([np.outer(r, np.cos(phi)), np.outer(r, np.sin(phi))], axis=-1).reshape(-1, 2)
        weights = np.outer(wr, np.full(angular, 2.0 * np.pi / angular)).ravel()
        return cls(points=points, weights=weights * np.exp(2.0 * scene.sigma_at(points)))

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


class PolynomialBasis:
    """
    Orthonormal polynomials of total degree <= d on the disk.

    Args:
        scene: supplies the radius and the conformal factor of dVol_g
        degree: total degree d >= 0
        quadrature: defaults to DiskQuadrature.build(scene)
    """

    def __init__(self, scene: ThermostatScene, degree: int, quadrature: Optional[DiskQuadrature] = None):
        if degree < 0:
            raise InvalidBasis(f"Polynomial degree {degree} is negative")
        self.radius = scene.radius
        self.degree = int(degree)
        self.exponents = monomial_exponents(self.degree)
        self.quadrature = quadrature or DiskQuadrature.build(scene)
        mono = evaluate_monomials(self.quadrature.points / self.radius, self.exponents)
        mass = mono.T @ (self.quadrature.weights[:, None] * mono)
        factor = cholesky(mass, lower=True)
        self.transform = solve_triangular(factor, np.eye(len(self.exponents)), lower=True)

    @property
    def size(self) -> int:
        return len(self.exponents)

    def values(self, x: np.ndarray) -> np.ndarray:
        mono = evaluate_monomials(np.asarray(x, dtype=float) / self.radius, self.exponents)
        return mono @ self.transform.T

    def gradients(self, x: np.ndarray) -> np.ndarray:
        """Shape (..., P, 2)."""
        grads = monomial_gradients(np.asarray(x, dtype=float) / self.radius, self.exponents) / self.radius
        return np.einsum('...ti,at->...ai', grads, self.transform)

    def project(self, samples: np.ndarray) -> np.ndarray:
        """L^2 coefficients of values sampled at the quadrature points, shape (P, ...)."""
        q = self.values(self.quadrature.points) * self.quadrature.weights[:, None]
        return np.tensordot(q, np.asarray(samples), axes=(0, 0))


class TensorBasis:
    """Order-m tensors valued in C^n; coefficients are laid out (P, m + 1, n) in C order."""

    def __init__(self, polynomials: PolynomialBasis, order: int, n: int):
        self.polynomials = polynomials
        self.order = int(order)
        self.n = int(n)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.polynomials.size, self.order + 1, self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def field(self, coefficients: np.ndarray) -> SymmetricTensorField:
        table = np.asarray(coefficients, dtype=complex).reshape(self.shape)
        poly = self.polynomials
        return SymmetricTensorField(
            self.order, self.n,
            lambda x: np.einsum('...a,ajc->...jc', poly.values(x), table),
            lambda x: np.einsum('...ai,ajc->...ijc', poly.gradients(x), table),
            poly.radius,
        )

    def project(self, field: SymmetricTensorField) -> np.ndarray:
        samples = field.coefficients(self.polynomials.quadrature.points)
        return self.polynomials.project(samples).ravel()

    def induced_columns(self, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
        """Induced function of every basis element, shape (B, n, size)."""
        x = np.asarray(x, dtype=float)
        q = self.polynomials.values(x)
        angular = binomials(self.order) * angular_monomials(self.order, theta)
        angular = angular * np.exp(-self.order * scene.sigma_at(x))[..., None]
        columns = np.einsum('ba,bj,dc->bdajc', q, angular, np.eye(self.n))
        return columns.reshape(q.shape[0], self.n, self.size)


class ForwardBasis:
    """
    Coefficient space of pairs [f, h]: the f block (order m) followed by the
    h block (order m - 1, absent for m = 0).

    Acts as a multi-column source: ``induced`` returns every basis pair at once.
    """

    def __init__(self, scene: ThermostatScene, order: int, n: int, degree: int):
        if not 0 <= order <= MAX_TENSOR_ORDER:
            raise InvalidBasis(f"Tensor order {order} is outside 0..{MAX_TENSOR_ORDER}")
        self.scene = scene
        self.order = int(order)
        self.n = int(n)
        self.degree = int(degree)
        self.polynomials = PolynomialBasis(scene, degree)
        self.f = TensorBasis(self.polynomials, order, n)
        self.h = TensorBasis(self.polynomials, order - 1, n) if order > 0 else None

    @property
    def size(self) -> int:
        return self.f.size + (self.h.size if self.h is not None else 0)

    @property
    def columns(self) -> int:
        return self.size

    def split(self, coefficients: np.ndarray):
        coefficients = np.asarray(coefficients, dtype=complex)
        return coefficients[:self.f.size], coefficients[self.f.size:]

    def source(self, coefficients: np.ndarray) -> SourcePair:
        f, h = self.split(coefficients)
        return SourcePair(self.f.field(f), self.h.field(h) if self.h is not None else None)

    def coefficients(self, source: SourcePair) -> np.ndarray:
        parts = [self.f.project(source.f)]
        if self.h is not None:
            parts.append(self.h.project(source.h) if source.h is not None else np.zeros(self.h.size, dtype=complex))
        return np.concatenate(parts)

    def induced(self, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
        parts = [self.f.induced_columns(scene, x, theta)]
        if self.h is not None:
            parts.append(self.h.induced_columns(scene, x, theta))
        return np.concatenate(parts, axis=-1)

    def to_dict(self) -> Dict:
        return {
            'order': self.order,
            'degree': self.degree,
            'rank': self.n,
            'polynomials': self.polynomials.size,
            'columns': self.size,
        }


class BoundaryVanishingBasis:
    """
    p = (1 - |x|^2 / R^2) q with q of degree <= d - 1: every tensor of total
    degree <= d + 1 that vanishes on the boundary circle, so that first
    derivatives reach the top degree d of the forward basis.

    The cutoff enters to the first power: vanishing on the circle is all
    [G_E p + A p, Phi p] needs to be annihilated.
    """

    def __init__(self, scene: ThermostatScene, order: int, n: int, degree: int):
        self.radius = scene.radius
        self.order = int(order)
        self.inner = None
        if order >= 0 and degree >= 1:
            self.inner = TensorBasis(PolynomialBasis(scene, degree - 1), order, n)

    @property
    def size(self) -> int:
        return self.inner.size if self.inner is not None else 0

    def element(self, index: int) -> CutoffTensorField:
        unit = np.zeros(self.size, dtype=complex)
        unit[index] = 1.0
        return self.field(unit)

    def field(self, coefficients: np.ndarray) -> CutoffTensorField:
        return CutoffTensorField(self.inner.field(coefficients), self.radius, power=1)
