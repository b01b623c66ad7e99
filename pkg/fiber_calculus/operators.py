"""
Discrete frame operators on SM.

V acts spectrally on the fiber modes. X and X_perp use the isothermal-frame
coordinate expressions

    X      = e^{-sigma}(cos d_1 + sin d_2 + (-s_1 sin + s_2 cos) d_theta)
    X_perp = eps e^{-sigma}(sin d_1 - cos d_2 + (s_1 cos + s_2 sin) d_theta)

with s = grad sigma, eps = +1 for X_perp = [X, V] and -1 for the rotated
convention. Chart derivatives are fourth-order central differences with
one-sided closures on the two outermost nodes of each line.
"""
import logging

import numpy as np

from .constants import BANDWIDTH_GUARD_MODES, BANDWIDTH_TOLERANCE
from .exceptions import BandwidthOverflow, GridMismatchError
from .grid import BundleFunction, BundleGrid

logger = logging.getLogger(__name__)

FRAME_OPERATORS = ('X', 'X_perp', 'V')

# one-sided closures for the first and second node of a line
_EDGE = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_NEAR_EDGE = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])


def chart_derivative(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Fourth-order d/dx^{axis+1} of a grid array along chart axis 0 or 1."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)
    head = v[:5]
    tail = v[-1:-6:-1]
    out[0] = np.tensordot(_EDGE, head, axes=1) / (12.0 * h)
    out[1] = np.tensordot(_NEAR_EDGE, head, axes=1) / (12.0 * h)
    out[-1] = -np.tensordot(_EDGE, tail, axes=1) / (12.0 * h)
    out[-2] = -np.tensordot(_NEAR_EDGE, tail, axes=1) / (12.0 * h)
    return np.moveaxis(out, 0, axis)


def expand(coefficient: np.ndarray, ndim: int) -> np.ndarray:
    """Append singleton axes so a grid coefficient broadcasts over component axes."""
    coefficient = np.asarray(coefficient)
    return coefficient.reshape(coefficient.shape + (1,) * (ndim - coefficient.ndim))


def check_bandwidth(u: BundleFunction, tolerance: float = BANDWIDTH_TOLERANCE):
    """Raise when the top fiber modes carry more than ``tolerance`` of the energy."""
    energy = np.abs(u.modes) ** 2
    axes = tuple(i for i in range(energy.ndim) if i != 2)
    per_mode = np.sum(energy, axis=axes)
    total = float(np.sum(per_mode))
    if total == 0.0:
        return
    top = np.abs(u.grid.wavenumbers) > u.grid.n_theta // 2 - BANDWIDTH_GUARD_MODES
    share = float(np.sum(per_mode[top])) / total
    if share > tolerance:
        raise BandwidthOverflow(
            f"{share:.2e} of the energy sits in the top fiber modes of n_theta={u.grid.n_theta}",
            share=share,
        )


def _fiber(grid: BundleGrid, coefficient: np.ndarray, angular: np.ndarray) -> np.ndarray:
    """coefficient(x) * angular(theta) on the (n_x, n_x, n_theta) grid."""
    return coefficient[:, :, None] * angular[None, None, :]


def apply_V(u: BundleFunction) -> BundleFunction:
    """d/dtheta, exact on each resolved mode; the Nyquist mode is dropped."""
    k = u.grid.wavenumbers.astype(float)
    k[k == -u.grid.n_theta // 2] = 0.0
    factor = expand(1j * k, u.modes.ndim - 2)
    return BundleFunction.from_modes(u.grid, u.modes * factor)


def _frame_terms(u: BundleFunction):
    grid = u.grid
    d1 = chart_derivative(u.values, 0, grid.h)
    d2 = chart_derivative(u.values, 1, grid.h)
    dv = apply_V(u).values
    return d1, d2, dv


def apply_X(u: BundleFunction, terms=None) -> BundleFunction:
    grid = u.grid
    d1, d2, dv = terms or _frame_terms(u)
    c, s = np.cos(grid.thetas), np.sin(grid.thetas)
    s1, s2 = grid.sigma_gradient[..., 0], grid.sigma_gradient[..., 1]
    damp = np.exp(-grid.sigma)
    nd = u.values.ndim
    total = (
        expand(_fiber(grid, damp, c), nd) * d1
        + expand(_fiber(grid, damp, s), nd) * d2
        + expand(_fiber(grid, -damp * s1, s) + _fiber(grid, damp * s2, c), nd) * dv
    )
    return BundleFunction(grid, total * expand(grid.inside[:, :, None], nd))


def apply_X_perp(u: BundleFunction, terms=None) -> BundleFunction:
    grid = u.grid
    d1, d2, dv = terms or _frame_terms(u)
    c, s = np.cos(grid.thetas), np.sin(grid.thetas)
    s1, s2 = grid.sigma_gradient[..., 0], grid.sigma_gradient[..., 1]
    damp = grid.epsilon * np.exp(-grid.sigma)
    nd = u.values.ndim
    total = (
        expand(_fiber(grid, damp, s), nd) * d1
        - expand(_fiber(grid, damp, c), nd) * d2
        + expand(_fiber(grid, damp * s1, c) + _fiber(grid, damp * s2, s), nd) * dv
    )
    return BundleFunction(grid, total * expand(grid.inside[:, :, None], nd))


def apply_frame(u: BundleFunction, which: str) -> BundleFunction:
    """
    Apply one of the frame fields X, X_perp, V.

    Raises:
        BandwidthOverflow: when u is not resolved by the fiber grid
    """
    if which not in FRAME_OPERATORS:
        raise ValueError(f"Unknown frame operator '{which}'")
    check_bandwidth(u)
    if which == 'V':
        return apply_V(u)
    if which == 'X':
        return apply_X(u)
    return apply_X_perp(u)


def apply_eta(u: BundleFunction, sign: int) -> BundleFunction:
    """eta_{+-} = (X +- i eps X_perp)/2; eta_+ raises the fiber degree in both conventions."""
    check_bandwidth(u)
    terms = _frame_terms(u)
    x = apply_X(u, terms)
    xp = apply_X_perp(u, terms)
    return BundleFunction(u.grid, 0.5 * (x.values + sign * u.grid.epsilon * 1j * xp.values))


def mode_part(values: np.ndarray, grid: BundleGrid, k: int) -> np.ndarray:
    """The e^{ik theta} component of a grid array, returned on the grid."""
    modes = np.fft.fft(values, axis=2) / grid.n_theta
    keep = np.zeros_like(modes)
    j = int(np.flatnonzero(grid.wavenumbers == k)[0])
    keep[:, :, j] = modes[:, :, j]
    return np.fft.ifft(keep * grid.n_theta, axis=2)


def lambda_values(grid: BundleGrid) -> np.ndarray:
    """lambda(x, theta) = e^{sigma}(-E^1 sin + E^2 cos) on the grid."""
    c, s = np.cos(grid.thetas), np.sin(grid.thetas)
    grow = np.exp(grid.sigma)
    return (
        _fiber(grid, -grow * grid.efield[..., 0], s)
        + _fiber(grid, grow * grid.efield[..., 1], c)
    ) * grid.inside[:, :, None]


def lambda_mode(grid: BundleGrid, sign: int) -> np.ndarray:
    """lambda_{+-}, extracted by projecting lambda onto the modes +-1."""
    return mode_part(lambda_values(grid), grid, sign)


def theta_form_values(grid: BundleGrid) -> np.ndarray:
    """The 1-form dual to E evaluated on the unit vector: e^{sigma}(E^1 cos + E^2 sin)."""
    c, s = np.cos(grid.thetas), np.sin(grid.thetas)
    grow = np.exp(grid.sigma)
    return (
        _fiber(grid, grow * grid.efield[..., 0], c)
        + _fiber(grid, grow * grid.efield[..., 1], s)
    ) * grid.inside[:, :, None]


def multiply(coefficient: np.ndarray, u: BundleFunction) -> BundleFunction:
    """Pointwise product with a scalar grid array of shape (n_x, n_x[, n_theta])."""
    coefficient = np.asarray(coefficient)
    if coefficient.ndim == 2:
        coefficient = coefficient[:, :, None]
    return BundleFunction(u.grid, expand(coefficient, u.values.ndim) * u.values)


def apply_mu(u: BundleFunction, sign: int) -> BundleFunction:
    """mu_{+-} = eta_{+-} + lambda_{+-} V."""
    eta = apply_eta(u, sign)
    return eta + multiply(lambda_mode(u.grid, sign), apply_V(u))


def apply_G(u: BundleFunction) -> BundleFunction:
    """G_E = X + lambda V."""
    check_bandwidth(u)
    return apply_X(u) + multiply(lambda_values(u.grid), apply_V(u))


# Scalar curvature data on the chart nodes (zero outside M)

def gaussian_curvature(grid: BundleGrid) -> np.ndarray:
    return -np.exp(-2.0 * grid.sigma) * grid.sigma_laplacian * grid.inside


def divergence_g(grid: BundleGrid) -> np.ndarray:
    pairing = np.sum(grid.sigma_gradient * grid.efield, axis=-1)
    return (grid.efield_divergence + 2.0 * pairing) * grid.inside


def thermostat_curvature(grid: BundleGrid) -> np.ndarray:
    return gaussian_curvature(grid) - divergence_g(grid)


# Matrix fields

def connection_values(grid: BundleGrid, pair) -> np.ndarray:
    """A(x, theta) for every node inside M, shape (n_x, n_x, n_theta, n, n)."""
    return grid.phase_array(lambda x, theta: pair.along(grid.scene, x, theta))


def connection_mode(grid: BundleGrid, pair, sign: int) -> np.ndarray:
    return mode_part(connection_values(grid, pair), grid, sign)


def higgs_values(grid: BundleGrid, pair) -> np.ndarray:
    """Phi on the nodes, broadcast along the fiber."""
    n = pair.n
    out = np.zeros((grid.n_x, grid.n_x, n, n), dtype=complex)
    out[grid.inside] = pair.higgs(grid.points[grid.inside])
    return np.broadcast_to(out[:, :, None], grid.shape + (n, n))


def star_curvature_values(grid: BundleGrid, pair) -> np.ndarray:
    """*F_A on the chart nodes, shape (n_x, n_x, n, n)."""
    n = pair.n
    out = np.zeros((grid.n_x, grid.n_x, n, n), dtype=complex)
    out[grid.inside] = pair.star_curvature(grid.scene, grid.points[grid.inside])
    return out


def apply_matrix(field: np.ndarray, u: BundleFunction) -> BundleFunction:
    """
    Act with a matrix grid array on u.

    Vector-valued u (components (n,)) is multiplied; matrix-valued u
    (components (n, n)) is multiplied from the left.
    """
    field = np.asarray(field)
    if field.ndim == 4:
        field = field[:, :, None]
    if u.values.ndim == 4:
        return BundleFunction(u.grid, np.einsum('...ij,...j->...i', field, u.values))
    if u.values.ndim == 5:
        return BundleFunction(u.grid, field @ u.values)
    raise GridMismatchError(f"Cannot act with an n x n field on components {u.component_shape}")


def apply_transport(u: BundleFunction, pair) -> BundleFunction:
    """(G_E + A + Phi) u."""
    grid = u.grid
    return apply_G(u) + apply_matrix(connection_values(grid, pair) + higgs_values(grid, pair), u)


def lift(grid: BundleGrid, values: np.ndarray) -> BundleFunction:
    """A function on M (shape (n_x, n_x, *components)) as a fiber-constant BundleFunction."""
    values = np.asarray(values)
    full = np.broadcast_to(values[:, :, None], grid.shape + values.shape[2:])
    return BundleFunction(grid, np.array(full, dtype=complex))
