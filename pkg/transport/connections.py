"""
Matrix-valued fields on the chart and the connection/Higgs pairs built from them.

Every field is vectorised over chart points ``x`` of shape ``(..., 2)``:
``value`` returns ``(..., n, n)`` complex matrices and ``gradient`` returns
``(..., 2, n, n)`` with the partial derivative along x^i in slot i.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from geometry.constants import GRADIENT_STEP
from geometry.fields import evaluate_monomials, monomial_exponents, monomial_gradients
from geometry.scene import ThermostatScene

from .constants import BUMP_POWER, STRUCTURE_SAMPLES, STRUCTURE_TOLERANCE
from .exceptions import RankMismatchError, UnknownMatrixFieldKind

logger = logging.getLogger(__name__)


def parse_matrix(block, n: Optional[int] = None) -> np.ndarray:
    """Decode ``{"re": [[...]], "im": [[...]]}`` (or a plain nested list) into a complex matrix."""
    if isinstance(block, dict):
        real = np.asarray(block.get('re', 0.0), dtype=float)
        imag = np.asarray(block.get('im', np.zeros_like(real)), dtype=float)
        matrix = real + 1j * imag
    else:
        matrix = np.asarray(block, dtype=complex)
    matrix = np.atleast_2d(matrix)
    if matrix.shape[0] != matrix.shape[1]:
        raise RankMismatchError(f"Matrix of shape {matrix.shape} is not square")
    if n is not None and matrix.shape[0] != n:
        raise RankMismatchError(f"Expected a {n}x{n} matrix, got {matrix.shape}")
    return matrix


def encode_matrix(matrix: np.ndarray) -> Dict:
    matrix = np.asarray(matrix, dtype=complex)
    return {'re': matrix.real.tolist(), 'im': matrix.imag.tolist()}


def skew_hermitian_part(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix - np.conj(np.swapaxes(matrix, -1, -2)))


def _batch_shape(x) -> Tuple[int, ...]:
    return np.shape(x)[:-1]


class MatrixField:
    """An n x n complex matrix field; subclasses implement ``value``."""

    def __init__(self, n: int, scale: float = 1.0):
        self.n = int(n)
        self.scale = float(scale)

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        h = GRADIENT_STEP * self.scale
        parts = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            parts.append((self.value(x + e) - self.value(x - e)) / (2 * h))
        return np.stack(parts, axis=-3)

    def is_skew_hermitian(self, x: np.ndarray, tolerance: float = STRUCTURE_TOLERANCE) -> bool:
        values = self.value(x)
        gap = values + np.conj(np.swapaxes(values, -1, -2))
        size = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
        return bool(np.max(np.abs(gap), initial=0.0) <= tolerance * size)


class ZeroMatrixField(MatrixField):

    def value(self, x):
        return np.zeros(_batch_shape(x) + (self.n, self.n), dtype=complex)

    def gradient(self, x):
        return np.zeros(_batch_shape(x) + (2, self.n, self.n), dtype=complex)


class ConstantMatrixField(MatrixField):

    def __init__(self, matrix, scale: float = 1.0):
        matrix = parse_matrix(matrix)
        super().__init__(matrix.shape[0], scale)
        self.matrix = matrix

    def value(self, x):
        return np.broadcast_to(self.matrix, _batch_shape(x) + self.matrix.shape).copy()

    def gradient(self, x):
        return np.zeros(_batch_shape(x) + (2, self.n, self.n), dtype=complex)


class PolynomialMatrixField(MatrixField):
    """sum over terms (i, j, M) of x1^i x2^j M."""

    def __init__(self, terms: Sequence, n: Optional[int] = None, scale: float = 1.0):
        exponents, matrices = [], []
        for i, j, matrix in terms:
            exponents.append((int(i), int(j)))
            matrices.append(parse_matrix(matrix, n))
        if not matrices and n is None:
            raise RankMismatchError('An empty polynomial matrix field needs an explicit rank')
        n = matrices[0].shape[0] if matrices else n
        super().__init__(n, scale)
        self.exponents = exponents
        self.matrices = np.array(matrices, dtype=complex).reshape(len(matrices), n, n)

    def value(self, x):
        if not self.exponents:
            return np.zeros(_batch_shape(x) + (self.n, self.n), dtype=complex)
        mono = evaluate_monomials(x, self.exponents)
        return np.einsum('...t,tij->...ij', mono, self.matrices)

    def gradient(self, x):
        if not self.exponents:
            return np.zeros(_batch_shape(x) + (2, self.n, self.n), dtype=complex)
        grads = monomial_gradients(x, self.exponents)
        return np.einsum('...tk,tij->...kij', grads, self.matrices)


class LinearMatrixField(PolynomialMatrixField):
    """M0 + x1 M1 + x2 M2."""

    def __init__(self, m0, m1, m2, scale: float = 1.0):
        super().__init__([(0, 0, m0), (1, 0, m1), (0, 1, m2)], scale=scale)


class BumpMatrixField(MatrixField):
    """M (1 - |x - c|^2 / w^2)_+^4: smooth enough and zero outside the ball B(c, w)."""

    def __init__(self, matrix, center=(0.0, 0.0), width: float = 0.5, scale: float = 1.0):
        matrix = parse_matrix(matrix)
        super().__init__(matrix.shape[0], scale)
        self.matrix = matrix
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.width = float(width)

    def _profile(self, x):
        d = np.asarray(x, dtype=float) - self.center
        q = np.sum(d * d, axis=-1) / self.width ** 2
        base = np.clip(1.0 - q, 0.0, None)
        value = base ** BUMP_POWER
        slope = -2.0 * BUMP_POWER * base ** (BUMP_POWER - 1) / self.width ** 2
        return value, slope[..., None] * d

    def value(self, x):
        profile, _ = self._profile(x)
        return profile[..., None, None] * self.matrix

    def gradient(self, x):
        _, grad = self._profile(x)
        return grad[..., :, None, None] * self.matrix


class ExponentialMatrixField(MatrixField):
    """
    Q = expm(G(x)) for a generator field G.

    Derivatives use the Frechet derivative of expm, read off the upper-right
    block of expm([[G, dG], [0, G]]).
    """

    def __init__(self, generator: MatrixField):
        super().__init__(generator.n, generator.scale)
        self.generator = generator

    def value(self, x):
        return expm(self.generator.value(x))

    def gradient(self, x):
        g = self.generator.value(x)
        dg = self.generator.gradient(x)
        n = self.n
        parts = []
        for i in range(2):
            block = np.zeros(g.shape[:-2] + (2 * n, 2 * n), dtype=complex)
            block[..., :n, :n] = g
            block[..., n:, n:] = g
            block[..., :n, n:] = dg[..., i, :, :]
            parts.append(expm(block)[..., :n, n:])
        return np.stack(parts, axis=-3)


class CallableMatrixField(MatrixField):
    def __init__(self, fn, n: int, scale: float = 1.0):
        super().__init__(n, scale)
        self.fn = fn

    def value(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=complex)


class GaugedComponent(MatrixField):
    """Q^{-1} d_i Q + Q^{-1} A_i Q (or Q^{-1} Phi Q when ``axis`` is None)."""

    def __init__(self, gauge: MatrixField, field: MatrixField, axis: Optional[int]):
        super().__init__(field.n, field.scale)
        self.gauge = gauge
        self.field = field
        self.axis = axis

    def value(self, x):
        q = self.gauge.value(x)
        inner = self.field.value(x) @ q
        if self.axis is not None:
            inner = inner + self.gauge.gradient(x)[..., self.axis, :, :]
        return np.linalg.solve(q, inner)


class KroneckerDifferenceField(MatrixField):
    """
    The endomorphism X -> A X - X B of n x n matrices, flattened row-major
    to an n^2 x n^2 matrix A (x) I - I (x) B^T.
    """

    def __init__(self, left: MatrixField, right: MatrixField):
        if left.n != right.n:
            raise RankMismatchError(f"Ranks {left.n} and {right.n} differ")
        super().__init__(left.n ** 2, left.scale)
        self.left = left
        self.right = right
        self.eye = np.eye(left.n)

    def _lift(self, a, b):
        n = self.left.n
        left = np.einsum('...ij,kl->...ikjl', a, self.eye)
        right = np.einsum('ij,...lk->...ikjl', self.eye, b)
        return (left - right).reshape(a.shape[:-2] + (n * n, n * n))

    def value(self, x):
        return self._lift(self.left.value(x), self.right.value(x))

    def gradient(self, x):
        return self._lift(self.left.gradient(x), self.right.gradient(x))


class BlockDiagonalField(MatrixField):
    """diag(A, B) on C^n (+) C^n."""

    def __init__(self, first: MatrixField, second: MatrixField):
        if first.n != second.n:
            raise RankMismatchError(f"Ranks {first.n} and {second.n} differ")
        super().__init__(2 * first.n, first.scale)
        self.first = first
        self.second = second

    def _stack(self, a, b):
        n = self.first.n
        out = np.zeros(a.shape[:-2] + (2 * n, 2 * n), dtype=complex)
        out[..., :n, :n] = a
        out[..., n:, n:] = b
        return out

    def value(self, x):
        return self._stack(self.first.value(x), self.second.value(x))

    def gradient(self, x):
        return self._stack(self.first.gradient(x), self.second.gradient(x))


def matrix_field_from_config(block: Optional[Dict], n: int, scale: float = 1.0) -> MatrixField:
    """Build a matrix field from a ``{kind, params}`` block; a missing block means zero."""
    if not block:
        return ZeroMatrixField(n, scale)
    kind = block.get('kind', 'zero')
    params = block.get('params') or {}
    if kind == 'zero':
        return ZeroMatrixField(n, scale)
    if kind == 'constant':
        return ConstantMatrixField(parse_matrix(params['matrix'], n), scale)
    if kind == 'linear':
        return LinearMatrixField(
            parse_matrix(params['m0'], n), parse_matrix(params['m1'], n), parse_matrix(params['m2'], n), scale,
        )
    if kind == 'polynomial':
        return PolynomialMatrixField(params.get('terms', []), n, scale)
    if kind == 'bump':
        return BumpMatrixField(
            parse_matrix(params['matrix'], n), params.get('center', (0.0, 0.0)), params.get('width', 0.5), scale,
        )
    if kind == 'exp':
        return ExponentialMatrixField(matrix_field_from_config(params.get('generator'), n, scale))
    raise UnknownMatrixFieldKind(f"Unknown matrix field kind '{kind}'")


def structure_points(radius: float, count: int = STRUCTURE_SAMPLES) -> np.ndarray:
    """Deterministic sample of points in the closed disk (sunflower pattern)."""
    k = np.arange(count) + 0.5
    r = radius * np.sqrt(k / count)
    angle = np.pi * (3.0 - np.sqrt(5.0)) * k
    return np.stack([r * np.cos(angle), r * np.sin(angle)], axis=-1)


@dataclass(eq=False)
class ConnectionPair:
    """
    A connection A = A1 dx^1 + A2 dx^2 and a Higgs field Phi on M x C^n.

    A(x, v) = A1(x) v^1 + A2(x) v^2 for chart components of v.
    """

    a1: MatrixField
    a2: MatrixField
    phi: MatrixField

    def __post_init__(self):
        ranks = {self.a1.n, self.a2.n, self.phi.n}
        if len(ranks) != 1:
            raise RankMismatchError(f"Pair components have ranks {sorted(ranks)}")

    @property
    def n(self) -> int:
        return self.a1.n

    @classmethod
    def zero(cls, n: int = 1, scale: float = 1.0) -> 'ConnectionPair':
        return cls(ZeroMatrixField(n, scale), ZeroMatrixField(n, scale), ZeroMatrixField(n, scale))

    @classmethod
    def from_config(cls, block: Optional[Dict], scale: float = 1.0) -> 'ConnectionPair':
        block = block or {}
        n = int(block.get('n', 1))
        return cls(
            matrix_field_from_config(block.get('A1'), n, scale),
            matrix_field_from_config(block.get('A2'), n, scale),
            matrix_field_from_config(block.get('Phi'), n, scale),
        )

    def connection(self, x: np.ndarray) -> np.ndarray:
        """(A1, A2) stacked, shape (..., 2, n, n)."""
        return np.stack([self.a1.value(x), self.a2.value(x)], axis=-3)

    def along(self, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
        """A(x, v) for the g-unit v at fiber angle theta: e^{-sigma}(A1 cos + A2 sin)."""
        theta = np.asarray(theta, dtype=float)
        scale = np.exp(-scene.sigma_at(x))
        a1, a2 = self.a1.value(x), self.a2.value(x)
        c = (scale * np.cos(theta))[..., None, None]
        s = (scale * np.sin(theta))[..., None, None]
        return c * a1 + s * a2

    def higgs(self, x: np.ndarray) -> np.ndarray:
        return self.phi.value(x)

    def generator(self, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
        """A(x, v) + Phi(x), the matrix driving the transport equation."""
        return self.along(scene, x, theta) + self.higgs(x)

    def star_curvature(self, scene: ThermostatScene, x: np.ndarray) -> np.ndarray:
        """*F_A = e^{-2 sigma}(d_1 A2 - d_2 A1 + [A1, A2])."""
        a1, a2 = self.a1.value(x), self.a2.value(x)
        d_a1, d_a2 = self.a1.gradient(x), self.a2.gradient(x)
        flat = d_a2[..., 0, :, :] - d_a1[..., 1, :, :] + a1 @ a2 - a2 @ a1
        return np.exp(-2.0 * scene.sigma_at(x))[..., None, None] * flat

    def structure(self, radius: float) -> Dict[str, bool]:
        """Flags {unitary_A, skew_hermitian_Phi} from a deterministic sample of M."""
        points = structure_points(radius)
        return {
            'unitary_A': self.a1.is_skew_hermitian(points) and self.a2.is_skew_hermitian(points),
            'skew_hermitian_Phi': self.phi.is_skew_hermitian(points),
        }

    def is_unitary(self, radius: float) -> bool:
        return self.structure(radius)['unitary_A']


def random_matrix_polynomial(rng: np.random.Generator, n: int, degree: int, amplitude: float,
                             skew: bool) -> PolynomialMatrixField:
    terms = []
    for i, j in monomial_exponents(degree):
        matrix = amplitude * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
        if skew:
            matrix = skew_hermitian_part(matrix)
        terms.append((i, j, matrix))
    return PolynomialMatrixField(terms, n)


def random_pair(rng: np.random.Generator, n: int, unitary: bool = True, degree: int = 1,
                amplitude: float = 0.3, higgs: bool = True) -> ConnectionPair:
    """A random polynomial pair; ``unitary`` makes A and Phi skew-Hermitian."""
    a1 = random_matrix_polynomial(rng, n, degree, amplitude, unitary)
    a2 = random_matrix_polynomial(rng, n, degree, amplitude, unitary)
    phi = random_matrix_polynomial(rng, n, degree, amplitude, unitary) if higgs else ZeroMatrixField(n)
    return ConnectionPair(a1, a2, phi)
