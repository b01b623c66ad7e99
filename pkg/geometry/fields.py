"""
Scalar and vector field families used to describe a thermostat scene.

All fields are vectorised over chart points: ``x`` has shape ``(..., 2)``.
Families with closed-form derivatives override ``gradient``/``hessian``;
everything else falls back to central differences.
"""
import logging
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .constants import GRADIENT_STEP, SECOND_DERIVATIVE_STEP
from .exceptions import UnknownFieldKind

logger = logging.getLogger(__name__)


def monomial_exponents(degree: int) -> List[Tuple[int, int]]:
    """Exponents (i, j) of x1^i x2^j with i + j <= degree, ordered by total degree."""
    exponents = []
    for total in range(degree + 1):
        for j in range(total + 1):
            exponents.append((total - j, j))
    return exponents


def evaluate_monomials(x: np.ndarray, exponents: Sequence[Tuple[int, int]]) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    powers_i = np.array([e[0] for e in exponents])
    powers_j = np.array([e[1] for e in exponents])
    return x[..., 0, None] ** powers_i * x[..., 1, None] ** powers_j


def monomial_gradients(x: np.ndarray, exponents: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Gradients of the monomials, shape ``(..., len(exponents), 2)``."""
    x = np.asarray(x, dtype=float)
    powers_i = np.array([e[0] for e in exponents])
    powers_j = np.array([e[1] for e in exponents])
    x1 = x[..., 0, None]
    x2 = x[..., 1, None]
    d1 = powers_i * x1 ** np.maximum(powers_i - 1, 0) * x2 ** powers_j
    d2 = powers_j * x1 ** powers_i * x2 ** np.maximum(powers_j - 1, 0)
    return np.stack([d1, d2], axis=-1)


def monomial_hessians(x: np.ndarray, exponents: Sequence[Tuple[int, int]]) -> np.ndarray:
    """Hessians of the monomials, shape ``(..., len(exponents), 2, 2)``."""
    x = np.asarray(x, dtype=float)
    pi = np.array([e[0] for e in exponents])
    pj = np.array([e[1] for e in exponents])
    x1 = x[..., 0, None]
    x2 = x[..., 1, None]
    d11 = pi * (pi - 1) * x1 ** np.maximum(pi - 2, 0) * x2 ** pj
    d22 = pj * (pj - 1) * x1 ** pi * x2 ** np.maximum(pj - 2, 0)
    d12 = pi * pj * x1 ** np.maximum(pi - 1, 0) * x2 ** np.maximum(pj - 1, 0)
    row1 = np.stack([d11, d12], axis=-1)
    row2 = np.stack([d12, d22], axis=-1)
    return np.stack([row1, row2], axis=-2)


def _unit(axis: int) -> np.ndarray:
    e = np.zeros(2)
    e[axis] = 1.0
    return e


class ScalarField:
    """
    A real scalar field on the chart.

    Subclasses implement ``value``. ``scale`` is the chart radius used to
    size finite-difference steps.
    """

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = GRADIENT_STEP * self.scale
        parts = [
            (self.value(x + h * _unit(i)) - self.value(x - h * _unit(i))) / (2 * h)
            for i in range(2)
        ]
        return np.stack(parts, axis=-1)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = SECOND_DERIVATIVE_STEP * self.scale
        rows = [
            (self.gradient(x + h * _unit(i)) - self.gradient(x - h * _unit(i))) / (2 * h)
            for i in range(2)
        ]
        hess = np.stack(rows, axis=-2)
        return 0.5 * (hess + np.swapaxes(hess, -1, -2))

    def laplacian(self, x: np.ndarray) -> np.ndarray:
        hess = self.hessian(x)
        return hess[..., 0, 0] + hess[..., 1, 1]


def laplacian_fd(field: ScalarField, x: np.ndarray, step: float) -> np.ndarray:
    """Five-point Laplacian of ``field`` with an explicit step (second order)."""
    x = np.asarray(x, dtype=float)
    centre = field.value(x)
    total = -4.0 * centre
    for i in range(2):
        total = total + field.value(x + step * _unit(i)) + field.value(x - step * _unit(i))
    return total / step ** 2


class ZeroScalarField(ScalarField):
    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def gradient(self, x):
        return np.zeros(np.shape(x))

    def hessian(self, x):
        return np.zeros(np.shape(x) + (2,))


class ConstantScalarField(ScalarField):
    def __init__(self, constant: float, scale: float = 1.0):
        super().__init__(scale)
        self.constant = float(constant)

    def value(self, x):
        return np.full(np.shape(x)[:-1], self.constant)

    def gradient(self, x):
        return np.zeros(np.shape(x))

    def hessian(self, x):
        return np.zeros(np.shape(x) + (2,))


class PoincareConformalFactor(ScalarField):
    """sigma(x) = ln(2 / (1 - |x|^2)), the hyperbolic disk; defined for |x| < 1."""

    def value(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return np.log(2.0) - np.log1p(-r2)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return 2.0 * x / (1.0 - r2)[..., None]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)[..., None, None]
        outer = x[..., :, None] * x[..., None, :]
        return 2.0 * np.eye(2) / (1.0 - r2) + 4.0 * outer / (1.0 - r2) ** 2


class PolynomialScalarField(ScalarField):
    """sum of c * x1^i * x2^j over ``terms`` = [(i, j, c), ...]."""

    def __init__(self, terms: Iterable[Sequence[float]], scale: float = 1.0):
        super().__init__(scale)
        terms = [tuple(t) for t in terms]
        self.exponents = [(int(t[0]), int(t[1])) for t in terms]
        self.coefficients = np.array([float(t[2]) for t in terms])

    def value(self, x):
        if not self.exponents:
            return np.zeros(np.shape(x)[:-1])
        return evaluate_monomials(x, self.exponents) @ self.coefficients

    def gradient(self, x):
        if not self.exponents:
            return np.zeros(np.shape(x))
        return np.einsum('...ki,k->...i', monomial_gradients(x, self.exponents), self.coefficients)

    def hessian(self, x):
        if not self.exponents:
            return np.zeros(np.shape(x) + (2,))
        return np.einsum('...kij,k->...ij', monomial_hessians(x, self.exponents), self.coefficients)


class CallableScalarField(ScalarField):
    """Wraps a user callable; derivatives by central differences."""

    def __init__(self, fn, scale: float = 1.0):
        super().__init__(scale)
        self.fn = fn

    def value(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


class VectorField:
    """
    A real vector field E = (E^1, E^2) given by chart components.

    ``jacobian(x)[..., i, j]`` is the partial derivative of E^i along x^j.
    """

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = GRADIENT_STEP * self.scale
        columns = [
            (self.value(x + h * _unit(j)) - self.value(x - h * _unit(j))) / (2 * h)
            for j in range(2)
        ]
        return np.stack(columns, axis=-1)

    def divergence(self, x: np.ndarray) -> np.ndarray:
        """Flat (coordinate) divergence d_i E^i."""
        jac = self.jacobian(x)
        return jac[..., 0, 0] + jac[..., 1, 1]


class ZeroVectorField(VectorField):
    def value(self, x):
        return np.zeros(np.shape(x))

    def jacobian(self, x):
        return np.zeros(np.shape(x) + (2,))


class ConstantVectorField(VectorField):
    def __init__(self, components: Sequence[float], scale: float = 1.0):
        super().__init__(scale)
        self.components = np.asarray(components, dtype=float).reshape(2)

    def value(self, x):
        return np.broadcast_to(self.components, np.shape(x)).copy()

    def jacobian(self, x):
        return np.zeros(np.shape(x) + (2,))


class RadialVectorField(VectorField):
    """E = c (x^1 d_1 + x^2 d_2)."""

    def __init__(self, c: float, scale: float = 1.0):
        super().__init__(scale)
        self.c = float(c)

    def value(self, x):
        return self.c * np.asarray(x, dtype=float)

    def jacobian(self, x):
        return np.broadcast_to(self.c * np.eye(2), np.shape(x) + (2,)).copy()


class PolynomialVectorField(VectorField):
    """Each component is a polynomial given as [(i, j, c), ...]."""

    def __init__(self, terms_1, terms_2, scale: float = 1.0):
        super().__init__(scale)
        self.components = (
            PolynomialScalarField(terms_1, scale),
            PolynomialScalarField(terms_2, scale),
        )

    def value(self, x):
        return np.stack([c.value(x) for c in self.components], axis=-1)

    def jacobian(self, x):
        return np.stack([c.gradient(x) for c in self.components], axis=-2)


class CallableVectorField(VectorField):
    def __init__(self, fn, scale: float = 1.0):
        super().__init__(scale)
        self.fn = fn

    def value(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)


def scalar_field_from_config(block: dict, scale: float = 1.0) -> ScalarField:
    """Build the conformal exponent sigma from a ``{kind, params}`` block."""
    kind = block.get('kind', 'zero')
    params = block.get('params') or {}
    if kind == 'zero':
        return ZeroScalarField(scale)
    if kind == 'constant':
        return ConstantScalarField(params.get('value', 0.0), scale)
    if kind == 'poincare':
        return PoincareConformalFactor(scale)
    if kind == 'polynomial':
        return PolynomialScalarField(params.get('terms', []), scale)
    raise UnknownFieldKind(f"Unknown sigma kind '{kind}'")


def vector_field_from_config(block: dict, scale: float = 1.0) -> VectorField:
    """Build the external field E from a ``{kind, params}`` block."""
    kind = block.get('kind', 'zero')
    params = block.get('params') or {}
    if kind == 'zero':
        return ZeroVectorField(scale)
    if kind == 'constant':
        return ConstantVectorField(params.get('components', [0.0, 0.0]), scale)
    if kind == 'radial':
        return RadialVectorField(params.get('c', 0.0), scale)
    if kind == 'polynomial':
        return PolynomialVectorField(params.get('e1', []), params.get('e2', []), scale)
    raise UnknownFieldKind(f"Unknown E kind '{kind}'")
