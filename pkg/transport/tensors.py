"""
Symmetric tensor fields with C^n values and the source pairs [f, h] of the
attenuated ray transform.

An order-m symmetric tensor on a surface has m + 1 distinct components;
component j is f_{1...1 2...2} with j indices equal to 2. The induced
function on SM is

    f(x, v) = sum_j binom(m, j) f_j(x) (v^1)^{m-j} (v^2)^j,   v = e^{-sigma}(cos, sin).
"""
import logging
from typing import Callable, Dict, Optional

import numpy as np
from scipy.special import comb

from geometry.fields import evaluate_monomials, monomial_gradients
from geometry.scene import ThermostatScene

from .constants import CUTOFF_POWER, PROJECTION_ANGLES_PER_ORDER
from .exceptions import TensorOrderMismatch

logger = logging.getLogger(__name__)


def binomials(order: int) -> np.ndarray:
    return comb(order, np.arange(order + 1), exact=False)


def angular_monomials(order: int, theta) -> np.ndarray:
    """cos^{m-j} sin^j for j = 0..m, shape (*theta.shape, m + 1)."""
    theta = np.asarray(theta, dtype=float)
    j = np.arange(order + 1)
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    return c ** (order - j) * s ** j


def angular_monomials_derivative(order: int, theta) -> np.ndarray:
    """d/dtheta of cos^{m-j} sin^j."""
    theta = np.asarray(theta, dtype=float)
    j = np.arange(order + 1)
    a = order - j
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    left = -a * c ** np.maximum(a - 1, 0) * s ** (j + 1)
    right = j * c ** (a + 1) * s ** np.maximum(j - 1, 0)
    return left + right


class SymmetricTensorField:
    """
    Order-m symmetric tensor field valued in C^n.

    Args:
        order: tensor order m >= 0
        n: number of vector components
        coefficients: x (..., 2) -> (..., m + 1, n) complex components
        gradient: optional x -> (..., 2, m + 1, n); central differences otherwise
    """

    def __init__(self, order: int, n: int, coefficients: Callable, gradient: Optional[Callable] = None,
                 scale: float = 1.0):
        if order < 0:
            raise TensorOrderMismatch(f"Tensor order {order} is negative")
        self.order = int(order)
        self.n = int(n)
        self._coefficients = coefficients
        self._gradient = gradient
        self.scale = float(scale)

    def coefficients(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._coefficients(np.asarray(x, dtype=float)), dtype=complex)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self._gradient is not None:
            return np.asarray(self._gradient(np.asarray(x, dtype=float)), dtype=complex)
        x = np.asarray(x, dtype=float)
        h = 1e-5 * self.scale
        parts = []
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            parts.append((self.coefficients(x + e) - self.coefficients(x - e)) / (2 * h))
        return np.stack(parts, axis=-3)

    def induced(self, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
        """f(x, v(theta)) with shape (..., n); x (..., 2) broadcasts with theta."""
        x = np.asarray(x, dtype=float)
        coeffs = self.coefficients(x)
        damp = np.exp(-self.order * scene.sigma_at(x))
        angular = binomials(self.order) * angular_monomials(self.order, theta)
        return damp[..., None] * np.einsum('...j,...jc->...c', angular, coeffs)

    def full_tensor(self, x: np.ndarray) -> np.ndarray:
        """All 2^m index combinations, shape (..., 2, ..., 2, n)."""
        coeffs = self.coefficients(x)
        m = self.order
        shape = coeffs.shape[:-2] + (2,) * m + (self.n,)
        out = np.zeros(shape, dtype=complex)
        for idx in np.ndindex(*((2,) * m)):
            out[(Ellipsis,) + idx + (slice(None),)] = coeffs[..., sum(idx), :]
        return out

    def __add__(self, other: 'SymmetricTensorField') -> 'SymmetricTensorField':
        if other.order != self.order or other.n != self.n:
            raise TensorOrderMismatch('Only tensors of equal order and rank can be added')
        return SymmetricTensorField(
            self.order, self.n,
            lambda x: self.coefficients(x) + other.coefficients(x),
            lambda x: self.gradient(x) + other.gradient(x),
            self.scale,
        )

    def scaled(self, factor: complex) -> 'SymmetricTensorField':
        return SymmetricTensorField(
            self.order, self.n,
            lambda x: factor * self.coefficients(x),
            lambda x: factor * self.gradient(x),
            self.scale,
        )


class ZeroTensorField(SymmetricTensorField):
    def __init__(self, order: int, n: int, scale: float = 1.0):
        shape = (order + 1, n)
        super().__init__(
            order, n,
            lambda x: np.zeros(np.shape(x)[:-1] + shape, dtype=complex),
            lambda x: np.zeros(np.shape(x)[:-1] + (2,) + shape, dtype=complex),
            scale,
        )


class PolynomialTensorField(SymmetricTensorField):
    """Components are polynomials: table[t, j, c] multiplies monomial t in component (j, c)."""

    def __init__(self, order: int, n: int, exponents, table: np.ndarray, scale: float = 1.0):
        self.exponents = list(exponents)
        self.table = np.asarray(table, dtype=complex).reshape(len(self.exponents), order + 1, n)
        super().__init__(order, n, self._values, self._grad, scale)

    def _values(self, x):
        return np.einsum('...t,tjc->...jc', evaluate_monomials(x, self.exponents), self.table)

    def _grad(self, x):
        return np.einsum('...ti,tjc->...ijc', monomial_gradients(x, self.exponents), self.table)


class CutoffTensorField(SymmetricTensorField):
    """base * ((R^2 - |x|^2) / R^2)^2, which vanishes to first order on the boundary circle."""

    def __init__(self, base: SymmetricTensorField, radius: float, power: int = CUTOFF_POWER):
        self.base = base
        self.radius = float(radius)
        self.power = int(power)
        super().__init__(base.order, base.n, self._values, self._grad, base.scale)

    def _profile(self, x):
        x = np.asarray(x, dtype=float)
        q = (self.radius ** 2 - np.sum(x * x, axis=-1)) / self.radius ** 2
        value = q ** self.power
        slope = self.power * q ** (self.power - 1) * (-2.0 / self.radius ** 2)
        return value, slope[..., None] * x

    def _values(self, x):
        value, _ = self._profile(x)
        return value[..., None, None] * self.base.coefficients(x)

    def _grad(self, x):
        value, grad = self._profile(x)
        return (
            value[..., None, None, None] * self.base.gradient(x)
            + grad[..., :, None, None] * self.base.coefficients(x)[..., None, :, :]
        )


def coefficients_from_samples(order: int, samples: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """
    Recover tensor components from a degree-m homogeneous fiber function.

    ``samples`` (..., N, n) are values of sum_j binom(m, j) g_j cos^{m-j} sin^j at
    the equispaced angles ``theta``; the fiber modes of the samples are matched
    against the modes of each angular monomial in the least-squares sense.
    """
    count = theta.size
    basis = binomials(order) * angular_monomials(order, theta)
    basis_modes = np.fft.fft(basis, axis=0) / count
    sample_modes = np.fft.fft(samples, axis=-2) / count
    solver = np.linalg.pinv(basis_modes)
    return np.einsum('jk,...kc->...jc', solver, sample_modes)


def projection_angles(order: int) -> np.ndarray:
    count = PROJECTION_ANGLES_PER_ORDER * (order + 1)
    return 2.0 * np.pi * np.arange(count) / count


def transport_derivative(p: SymmetricTensorField, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
    """
    G_E applied to the induced function of p, evaluated in closed form:
    X p + lambda V p with X = e^{-sigma}(cos d_1 + sin d_2 + (-s_1 sin + s_2 cos) d_theta).
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    m = p.order
    sigma = scene.sigma_at(x)
    grad_sigma = scene.sigma.gradient(x)
    efield = scene.efield.value(x)
    coeffs = p.coefficients(x)
    grads = p.gradient(x)
    weights = binomials(m)
    angular = weights * angular_monomials(m, theta)
    d_angular = weights * angular_monomials_derivative(m, theta)
    damp = np.exp(-m * sigma)[..., None]
    big_p = np.einsum('...j,...jc->...c', angular, coeffs)
    d_p = [
        damp * (np.einsum('...j,...jc->...c', angular, grads[..., i, :, :]) - m * grad_sigma[..., i, None] * big_p)
        for i in range(2)
    ]
    theta_p = damp * np.einsum('...j,...jc->...c', d_angular, coeffs)
    c = np.cos(theta)[..., None]
    s = np.sin(theta)[..., None]
    s1, s2 = grad_sigma[..., 0, None], grad_sigma[..., 1, None]
    grow = np.exp(sigma)[..., None]
    lam = grow * (-efield[..., 0, None] * s + efield[..., 1, None] * c)
    x_p = (1.0 / grow) * (c * d_p[0] + s * d_p[1] + (-s1 * s + s2 * c) * theta_p)
    return x_p + lam * theta_p


class SourcePair:
    """
    [f, h] with f of order m and h of order m - 1 (h omitted when m = 0).

    The induced source is f(x, v) + h(x, v).
    """

    def __init__(self, f: SymmetricTensorField, h: Optional[SymmetricTensorField] = None):
        if h is not None and h.order != f.order - 1:
            raise TensorOrderMismatch(f"Orders {f.order} and {h.order} do not differ by one")
        if h is not None and h.n != f.n:
            raise TensorOrderMismatch('f and h have different ranks')
        self.f = f
        self.h = h

    @property
    def order(self) -> int:
        return self.f.order

    @property
    def n(self) -> int:
        return self.f.n

    def induced(self, scene: ThermostatScene, x: np.ndarray, theta) -> np.ndarray:
        value = self.f.induced(scene, x, theta)
        if self.h is not None:
            value = value + self.h.induced(scene, x, theta)
        return value


def _parse_vector(values, n: int) -> np.ndarray:
    if isinstance(values, dict):
        real = np.asarray(values.get('re', 0.0), dtype=float)
        vector = real + 1j * np.asarray(values.get('im', np.zeros_like(real)), dtype=float)
    else:
        vector = np.asarray(values, dtype=complex)
    vector = np.atleast_1d(vector)
    if vector.shape != (n,):
        raise TensorOrderMismatch(f"Expected {n} components, got shape {vector.shape}")
    return vector


def tensor_field_from_config(block: Dict, n: int, radius: float = 1.0) -> SymmetricTensorField:
    """
    Build a polynomial tensor from ``{"order": m, "terms": [[i, j, slot, values], ...], "cutoff": bool}``.

    Each term adds x1^i x2^j times the C^n vector ``values`` (a list or
    ``{"re", "im"}``) to component ``slot``.
    """
    order = int(block.get('order', 0))
    terms = block.get('terms') or []
    if not terms:
        return ZeroTensorField(order, n, radius)
    exponents, table = [], []
    for i, j, slot, values in terms:
        if not 0 <= int(slot) <= order:
            raise TensorOrderMismatch(f"Slot {slot} does not exist for order {order}")
        row = np.zeros((order + 1, n), dtype=complex)
        row[int(slot)] = _parse_vector(values, n)
        exponents.append((int(i), int(j)))
        table.append(row)
    tensor = PolynomialTensorField(order, n, exponents, np.array(table), radius)
    if block.get('cutoff'):
        return CutoffTensorField(tensor, radius)
    return tensor


def source_from_config(block: Dict, n: int, radius: float = 1.0) -> SourcePair:
    """``{"f": tensor block, "h": tensor block}``; h is optional."""
    f = tensor_field_from_config(block.get('f') or {}, n, radius)
    h = block.get('h')
    return SourcePair(f, tensor_field_from_config(h, n, radius) if h else None)
