"""
Verification services for the Fourier calculus on SM: L^2 pairing, the
structural and commutator identities, energy identities, the Carleman
estimate, curvature of connections and degree profiles.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry.scene import ThermostatScene
from geometry.services import curvature_report
from transport.connections import random_pair

from .constants import (
    CARLEMAN_TOLERANCE,
    CONDITION_K_MAX,
    DEFAULT_CONVENTION,
    DEFAULT_RESOLUTIONS,
    IDENTITY_TOLERANCE,
    MIN_CONVERGENCE_ORDER,
    MODE_LEAKAGE_TOLERANCE,
    RESIDUAL_FLOOR,
    TEST_FUNCTION_BANDWIDTH,
    TEST_FUNCTION_DEGREE,
)
from .exceptions import InvalidCurvatureBound, NonUnitaryConnectionError
from .generators import BandLimitedFunction, random_band_limited, random_pure_mode, random_weight
from .grid import BundleFunction, BundleGrid
from .operators import (
    apply_eta,
    apply_G,
    apply_matrix,
    apply_mu,
    apply_V,
    apply_X,
    apply_X_perp,
    check_bandwidth,
    connection_mode,
    divergence_g,
    gaussian_curvature,
    lambda_mode,
    lambda_values,
    lift,
    mode_part,
    multiply,
    star_curvature_values,
    theta_form_values,
    thermostat_curvature,
)

logger = logging.getLogger(__name__)


@dataclass
class OperatorReport:
    identity: str
    residual: float
    resolutions: List[Tuple[int, int]]
    residuals: List[float]
    order: Optional[float] = None
    passed: bool = False
    extras: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class CarlemanResult:
    lhs: float
    rhs: float
    margin: float
    holds: bool
    s: float
    m: int
    kappa: float

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class StarCurvatureReport:
    star: np.ndarray = field(repr=False)
    lambda_min: Optional[np.ndarray] = field(default=None, repr=False)
    lambda_max: Optional[np.ndarray] = field(default=None, repr=False)
    integral_min: Optional[float] = None
    integral_max: Optional[float] = None
    sup_norm: Optional[float] = None
    kappa: float = 0.0
    chi: Optional[int] = None
    condition_lower: Dict[int, bool] = field(default_factory=dict)
    condition_upper: Dict[int, bool] = field(default_factory=dict)
    condition_k_bound: Optional[bool] = None
    smallest_admissible_k: Optional[int] = None
    fiber_residual: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'integral_lambda_min': self.integral_min,
            'integral_lambda_max': self.integral_max,
            'sup_norm_i_star_F': self.sup_norm,
            'kappa': self.kappa,
            'chi': self.chi,
            'lower_bound_holds': {str(k): v for k, v in self.condition_lower.items()},
            'upper_bound_holds': {str(k): v for k, v in self.condition_upper.items()},
            'k_bound_holds_for_k1': self.condition_k_bound,
            'smallest_admissible_k': self.smallest_admissible_k,
            'fiber_residual': self.fiber_residual,
        }


@dataclass
class DegreeProfile:
    degrees: np.ndarray
    norms: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sqrt(np.sum(self.norms ** 2)))

    def tail_fraction(self, cut: int) -> float:
        """Norm carried by |k| > cut relative to the total norm."""
        total = self.total
        if total == 0.0:
            return 0.0
        return float(np.sqrt(np.sum(self.norms[self.degrees > cut] ** 2)) / total)

    def rows(self) -> List[List[float]]:
        return [[int(k), float(v)] for k, v in zip(self.degrees, self.norms)]


# L^2(SM) pairing

def _weights(grid: BundleGrid, mask: Optional[np.ndarray], ndim: int) -> np.ndarray:
    w = grid.liouville_weights()
    if mask is not None:
        w = w * mask[:, :, None]
    return w.reshape(w.shape + (1,) * (ndim - 3))


def inner_product(u: BundleFunction, w: BundleFunction, mask: Optional[np.ndarray] = None) -> complex:
    """(u, w) = integral over SM of <u, w> dSigma^3, with dSigma^3 = dVol_g dtheta."""
    u.check_grid(w)
    weights = _weights(u.grid, mask, u.values.ndim)
    return complex(np.sum(weights * u.values * np.conj(w.values)))


def weighted_norm(values: np.ndarray, grid: BundleGrid, mask: Optional[np.ndarray] = None) -> float:
    weights = _weights(grid, mask, np.ndim(values))
    return float(np.sqrt(np.sum(weights * np.abs(values) ** 2)))


def norm(u: BundleFunction, mask: Optional[np.ndarray] = None) -> float:
    return weighted_norm(u.values, u.grid, mask)


def relative_residual(terms: Sequence[np.ndarray], grid: BundleGrid,
                      mask: Optional[np.ndarray] = None) -> float:
    """||sum of terms|| / sum of ||term||; zero when every term vanishes."""
    scale = sum(weighted_norm(t, grid, mask) for t in terms)
    if scale == 0.0:
        return 0.0
    return weighted_norm(sum(terms), grid, mask) / scale


# Identity term builders: each returns arrays whose sum vanishes in the continuum

def _as_function(grid, values):
    return BundleFunction(grid, values)


def structural_xv_terms(u: BundleFunction, **_):
    """[X, V] = eps X_perp."""
    eps = u.grid.epsilon
    return [apply_X(apply_V(u)).values, -apply_V(apply_X(u)).values, -eps * apply_X_perp(u).values]


def structural_vxperp_terms(u: BundleFunction, **_):
    """[V, X_perp] = eps X."""
    eps = u.grid.epsilon
    return [apply_V(apply_X_perp(u)).values, -apply_X_perp(apply_V(u)).values, -eps * apply_X(u).values]


def structural_xxperp_terms(u: BundleFunction, **_):
    """[X, X_perp] = -eps K V."""
    grid = u.grid
    return [
        apply_X(apply_X_perp(u)).values,
        -apply_X_perp(apply_X(u)).values,
        grid.epsilon * multiply(gaussian_curvature(grid), apply_V(u)).values,
    ]


def eta_commutator_terms(u: BundleFunction, **_):
    """[eta_+, eta_-] = (i/2) K V."""
    grid = u.grid
    return [
        apply_eta(apply_eta(u, -1), 1).values,
        -apply_eta(apply_eta(u, 1), -1).values,
        -0.5j * multiply(gaussian_curvature(grid), apply_V(u)).values,
    ]


def mu_commutator_terms(u: BundleFunction, **_):
    """[mu_+, mu_-] = (i/2) K_E V - i lambda_- mu_+ - i lambda_+ mu_-."""
    grid = u.grid
    mu_plus, mu_minus = apply_mu(u, 1), apply_mu(u, -1)
    return [
        apply_mu(mu_minus, 1).values,
        -apply_mu(mu_plus, -1).values,
        -0.5j * multiply(thermostat_curvature(grid), apply_V(u)).values,
        1j * multiply(lambda_mode(grid, -1), mu_plus).values,
        1j * multiply(lambda_mode(grid, 1), mu_minus).values,
    ]


def twisted_mu(u: BundleFunction, pair, sign: int, a_mode: Optional[np.ndarray] = None) -> BundleFunction:
    """mu_{+-} + A_{+-}."""
    if a_mode is None:
        a_mode = connection_mode(u.grid, pair, sign)
    return apply_mu(u, sign) + apply_matrix(a_mode, u)


def mu_connection_commutator_terms(u: BundleFunction, pair=None, **_):
    """[mu_+ + A_+, mu_- + A_-] = (i/2) K_E V + (i/2) *F_A - i lambda_- (mu_+ + A_+) - i lambda_+ (mu_- + A_-)."""
    grid = u.grid
    a_plus, a_minus = connection_mode(grid, pair, 1), connection_mode(grid, pair, -1)
    p = twisted_mu(u, pair, 1, a_plus)
    q = twisted_mu(u, pair, -1, a_minus)
    star = star_curvature_values(grid, pair)
    return [
        twisted_mu(q, pair, 1, a_plus).values,
        -twisted_mu(p, pair, -1, a_minus).values,
        -0.5j * multiply(thermostat_curvature(grid), apply_V(u)).values,
        -0.5j * apply_matrix(star, u).values,
        1j * multiply(lambda_mode(grid, -1), p).values,
        1j * multiply(lambda_mode(grid, 1), q).values,
    ]


def decomposition_terms(u: BundleFunction, **_):
    """G_E = mu_+ + mu_-."""
    return [apply_G(u).values, -apply_mu(u, 1).values, -apply_mu(u, -1).values]


def lambda_divergence_terms(grid: BundleGrid, **_):
    """eta_+ lambda_- - eta_- lambda_+ = -(i/2) div_g E."""
    lam_minus = _as_function(grid, lambda_mode(grid, -1))
    lam_plus = _as_function(grid, lambda_mode(grid, 1))
    return [
        apply_eta(lam_minus, 1).values,
        -apply_eta(lam_plus, -1).values,
        0.5j * np.broadcast_to(divergence_g(grid)[:, :, None], grid.shape),
    ]


def weight_laplacian_terms(grid: BundleGrid, phi=None, **_):
    """eta_- eta_+ phi + eta_+ eta_- phi = (1/2) Laplacian_g phi, Laplacian_g = e^{-2 sigma} Laplacian."""
    values = np.zeros((grid.n_x, grid.n_x))
    laplacian = np.zeros((grid.n_x, grid.n_x))
    inside = grid.points[grid.inside]
    values[grid.inside] = phi.value(inside)
    laplacian[grid.inside] = phi.laplacian(inside)
    lifted = lift(grid, values)
    delta_g = np.exp(-2.0 * grid.sigma) * laplacian
    return [
        apply_eta(apply_eta(lifted, 1), -1).values,
        apply_eta(apply_eta(lifted, -1), 1).values,
        -0.5 * np.broadcast_to(delta_g[:, :, None], grid.shape),
    ]


def curvature_fiber_terms(grid: BundleGrid, pair=None, **_):
    """eta_+ A_- - eta_- A_+ + [A_+, A_-] = (i/2) *F_A."""
    a_plus, a_minus = connection_mode(grid, pair, 1), connection_mode(grid, pair, -1)
    star = star_curvature_values(grid, pair)
    return [
        apply_eta(_as_function(grid, a_minus), 1).values,
        -apply_eta(_as_function(grid, a_plus), -1).values,
        a_plus @ a_minus - a_minus @ a_plus,
        -0.5j * np.broadcast_to(star[:, :, None], grid.shape + star.shape[2:]),
    ]


# name -> (term builder, acts on a test function?, needs a pair?, needs a weight?)
IDENTITIES: Dict[str, Tuple[Callable, bool, bool, bool]] = {
    'structural_X_V': (structural_xv_terms, True, False, False),
    'structural_V_Xperp': (structural_vxperp_terms, True, False, False),
    'structural_X_Xperp': (structural_xxperp_terms, True, False, False),
    'eta_commutator': (eta_commutator_terms, True, False, False),
    'mu_commutator': (mu_commutator_terms, True, False, False),
    'mu_connection_commutator': (mu_connection_commutator_terms, True, True, False),
    'lambda_divergence': (lambda_divergence_terms, False, False, False),
    'G_decomposition': (decomposition_terms, True, False, False),
    'weight_laplacian': (weight_laplacian_terms, False, False, True),
    'curvature_fiber': (curvature_fiber_terms, False, True, False),
}


def identity_residual(name: str, grid: BundleGrid, test_function: Optional[BandLimitedFunction] = None,
                      pair=None, phi=None) -> float:
    """Relative residual of one identity on one grid."""
    builder, on_function, _, _ = IDENTITIES[name]
    if on_function:
        u = test_function.on(grid)
        check_bandwidth(u)
        terms = builder(u, pair=pair)
        mask = grid.inside
    else:
        terms = builder(grid, pair=pair, phi=phi)
        mask = grid.core_mask()
    return relative_residual(terms, grid, mask)


def convergence_order(resolutions: Sequence[Tuple[int, int]], residuals: Sequence[float]) -> Optional[float]:
    """Observed order in h from the last two resolutions."""
    if len(residuals) < 2:
        return None
    coarse, fine = residuals[-2], residuals[-1]
    if coarse <= 0.0 or fine <= 0.0:
        return None
    ratio = resolutions[-1][0] / resolutions[-2][0]
    return float(np.log(coarse / fine) / np.log(ratio))


def _passed(residual: float, order: Optional[float], tolerance: float) -> bool:
    if residual <= RESIDUAL_FLOOR:
        return True
    if residual > tolerance:
        return False
    return order is None or order >= MIN_CONVERGENCE_ORDER


def convergence_study(name: str, scene: ThermostatScene,
                      resolutions: Sequence[Tuple[int, int]] = DEFAULT_RESOLUTIONS,
                      test_function: Optional[BandLimitedFunction] = None, pair=None, phi=None,
                      convention: str = DEFAULT_CONVENTION,
                      tolerance: float = IDENTITY_TOLERANCE) -> OperatorReport:
    """
    Evaluate an identity at increasing resolution and fit the convergence order.

    The report passes when the finest residual is below ``tolerance`` and the
    fitted order is at least MIN_CONVERGENCE_ORDER (or the residual is at the
    round-off floor).
    """
    residuals = []
    for n_x, n_theta in resolutions:
        grid = BundleGrid(scene, n_x, n_theta, convention)
        residuals.append(identity_residual(name, grid, test_function, pair, phi))
    order = convergence_order(resolutions, residuals)
    report = OperatorReport(
        identity=name, residual=residuals[-1], resolutions=[tuple(r) for r in resolutions],
        residuals=residuals, order=order, passed=_passed(residuals[-1], order, tolerance),
    )
    logger.info(f"Identity {name}: residuals {['%.2e' % r for r in residuals]}, order {order}")
    return report


def commutator_check(u: BundleFunction, which: str = 'mu', pair=None) -> OperatorReport:
    """
    Single-resolution commutator check on u.

    ``which`` is 'eta', 'mu' or 'muA'; the report also carries the residual
    of eta_+ lambda_- - eta_- lambda_+ = -(i/2) div_g E.
    """
    names = {'eta': 'eta_commutator', 'mu': 'mu_commutator', 'muA': 'mu_connection_commutator'}
    if which not in names:
        raise ValueError(f"Unknown commutator '{which}'")
    if which == 'muA' and pair is None:
        raise ValueError('The twisted commutator needs a connection pair')
    grid = u.grid
    check_bandwidth(u)
    builder = IDENTITIES[names[which]][0]
    residual = relative_residual(builder(u, pair=pair), grid, grid.inside)
    scalar = relative_residual(lambda_divergence_terms(grid), grid, grid.core_mask())
    return OperatorReport(
        identity=names[which], residual=residual, resolutions=[(grid.n_x, grid.n_theta)],
        residuals=[residual], passed=residual <= IDENTITY_TOLERANCE,
        extras={'lambda_divergence': scalar},
    )


def structural_reports(u: BundleFunction) -> List[OperatorReport]:
    """Residuals of the three structural equations on u."""
    grid = u.grid
    reports = []
    for name in ('structural_X_V', 'structural_V_Xperp', 'structural_X_Xperp'):
        residual = relative_residual(IDENTITIES[name][0](u), grid, grid.inside)
        reports.append(OperatorReport(
            identity=name, residual=residual, resolutions=[(grid.n_x, grid.n_theta)],
            residuals=[residual], passed=residual <= IDENTITY_TOLERANCE,
        ))
    return reports


def dominant_degree(u: BundleFunction) -> int:
    energy = u.mode_energy()
    return int(u.grid.wavenumbers[int(np.argmax(energy))])


def mode_leakage(u: BundleFunction, target: int) -> float:
    """Energy of u outside the mode ``target``, relative to the total."""
    energy = u.mode_energy()
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    return float(np.sum(energy[u.grid.wavenumbers != target]) / total)


def require_pure_mode(u: BundleFunction, k: Optional[int] = None) -> int:
    k = dominant_degree(u) if k is None else k
    leakage = mode_leakage(u, k)
    if leakage > MODE_LEAKAGE_TOLERANCE:
        raise ValueError(f"u is not a pure mode of degree {k} (leakage {leakage:.2e})")
    return k


def mu_degree_shift(u: BundleFunction, sign: int, k: Optional[int] = None) -> float:
    """Off-mode leakage of mu_{+-} u for a pure mode u in Omega_k."""
    k = require_pure_mode(u, k)
    return mode_leakage(apply_mu(u, sign), k + sign)


def restriction_identity(u: BundleFunction, pair, k: Optional[int] = None) -> Dict[str, float]:
    """
    On Omega_k, mu_+ + A_+ = eta_+ + (A - k theta)_+ and mu_- + A_- = eta_- + (A + k theta)_-,
    theta being the 1-form dual to E. Both sides are assembled independently.
    """
    k = require_pure_mode(u, k)
    grid = u.grid
    theta = theta_form_values(grid)
    out = {}
    for sign, label in ((1, 'plus'), (-1, 'minus')):
        a_mode = connection_mode(grid, pair, sign)
        left = twisted_mu(u, pair, sign, a_mode)
        theta_mode = mode_part(theta, grid, sign)
        right = apply_eta(u, sign) + apply_matrix(a_mode, u) - sign * k * multiply(theta_mode, u)
        out[label] = relative_residual([left.values, -right.values], grid, grid.inside)
    return out


def adjoint_residual(which: str, u: BundleFunction, w: BundleFunction) -> float:
    """
    |(P u, w) - (u, P* w)| / (||u|| ||w||) for the adjoint relations
    V* = -V, X_perp* = -X_perp, eta_-* = -eta_+ and G_E* = -(G_E + V(lambda)).
    """
    u.check_grid(w)
    grid = u.grid
    if which == 'V':
        value = inner_product(apply_V(u), w) + inner_product(u, apply_V(w))
    elif which == 'X_perp':
        value = inner_product(apply_X_perp(u), w) + inner_product(u, apply_X_perp(w))
    elif which == 'eta':
        value = inner_product(apply_eta(u, 1), w) + inner_product(u, apply_eta(w, -1))
    elif which == 'G':
        v_lambda = apply_V(BundleFunction(grid, lambda_values(grid))).values
        adjoint = apply_G(w) + multiply(v_lambda, w)
        value = inner_product(apply_G(u), w) + inner_product(u, adjoint)
    else:
        raise ValueError(f"Unknown adjoint relation '{which}'")
    scale = norm(u) * norm(w)
    return abs(value) / scale if scale else 0.0


def _real_quadratic(coefficient: np.ndarray, u: BundleFunction) -> complex:
    return inner_product(multiply(coefficient, u), u)


def energy_identity(u: BundleFunction, variant: str = 'plain', phi=None, pair=None,
                    k: Optional[int] = None) -> OperatorReport:
    """
    Energy identity for a pure mode u in Omega_k vanishing near the boundary.

    plain:     ||mu_+ u||^2 = ||mu_- u||^2 - (k/2)(K_E u, u)
    weighted:  ||P u||^2 = ||Q u||^2 - (k/2)(K_E u, u) - (1/2)(Laplacian_g phi u, u) + (i/2)(*F_A u, u)
               with P = mu_+ + A_+ + eta_+ phi, Q = mu_- + A_- - eta_- phi
    """
    k = require_pure_mode(u, k)
    grid = u.grid
    k_e = thermostat_curvature(grid)
    curvature_term = -0.5 * k * _real_quadratic(k_e, u)
    if variant == 'plain':
        lhs = norm(apply_mu(u, 1)) ** 2
        rhs_terms = [norm(apply_mu(u, -1)) ** 2, curvature_term]
    elif variant == 'weighted':
        lhs, rhs_terms = _weighted_energy(u, phi, pair, curvature_term)
    else:
        raise ValueError(f"Unknown energy identity variant '{variant}'")
    rhs = sum(rhs_terms)
    scale = abs(lhs) + sum(abs(t) for t in rhs_terms)
    residual = abs(lhs - rhs) / scale if scale else 0.0
    return OperatorReport(
        identity=f"energy_{variant}", residual=float(residual), resolutions=[(grid.n_x, grid.n_theta)],
        residuals=[float(residual)], passed=residual <= IDENTITY_TOLERANCE,
        extras={'k': k, 'lhs': float(np.real(lhs)), 'rhs': float(np.real(rhs))},
    )


def _weighted_energy(u: BundleFunction, phi, pair, curvature_term):
    grid = u.grid
    if pair is not None and not pair.is_unitary(grid.scene.radius):
        raise NonUnitaryConnectionError('The weighted energy identity needs a unitary connection')
    p = apply_mu(u, 1)
    q = apply_mu(u, -1)
    terms = [curvature_term]
    if pair is not None:
        p = p + apply_matrix(connection_mode(grid, pair, 1), u)
        q = q + apply_matrix(connection_mode(grid, pair, -1), u)
        star = star_curvature_values(grid, pair)
        terms.append(0.5j * inner_product(apply_matrix(star, u), u))
    if phi is not None:
        values = np.zeros((grid.n_x, grid.n_x))
        laplacian = np.zeros((grid.n_x, grid.n_x))
        inside = grid.points[grid.inside]
        values[grid.inside] = phi.value(inside)
        laplacian[grid.inside] = phi.laplacian(inside)
        lifted = lift(grid, values)
        p = p + multiply(apply_eta(lifted, 1).values, u)
        q = q - multiply(apply_eta(lifted, -1).values, u)
        delta_g = np.exp(-2.0 * grid.sigma) * laplacian
        terms.append(-0.5 * _real_quadratic(delta_g, u))
    lhs = norm(p) ** 2
    return lhs, [norm(q) ** 2] + terms


def _kappa_for(scene: ThermostatScene, kappa: Optional[float]) -> float:
    if kappa is None:
        report = curvature_report(scene)
        if not report.kappa_valid:
            raise InvalidCurvatureBound('K_E is not bounded above by a negative constant')
        kappa = report.kappa
    if kappa <= 0.0:
        raise InvalidCurvatureBound(f"kappa = {kappa} is not positive")
    return float(kappa)


def carleman_check(u: BundleFunction, s: float, m: int, kappa: Optional[float] = None) -> CarlemanResult:
    """
    sum_{k >= m} k^{2s+1} (||u_k||^2 + ||u_-k||^2)
        <= (1 / (kappa s)) sum_{k >= m+1} k^{2s+1} (||(G_E u)_k||^2 + ||(G_E u)_-k||^2)

    Raises:
        InvalidCurvatureBound: kappa missing from the scene or not positive
    """
    if s <= 0 or m < 1:
        raise ValueError('The Carleman weight needs s > 0 and m >= 1')
    grid = u.grid
    kappa = _kappa_for(grid.scene, kappa)
    check_bandwidth(u)
    energy_u = u.mode_energy()
    energy_g = apply_G(u).mode_energy()
    degrees = np.abs(grid.wavenumbers).astype(float)
    weight = degrees ** (2.0 * s + 1.0)
    lhs = float(np.sum((weight * energy_u)[degrees >= m]))
    rhs = float(np.sum((weight * energy_g)[degrees >= m + 1]) / (kappa * s))
    margin = rhs - lhs
    holds = margin >= -CARLEMAN_TOLERANCE * max(rhs, lhs, 1e-300)
    logger.debug(f"Carleman s={s} m={m}: lhs {lhs:.4e} rhs {rhs:.4e}")
    return CarlemanResult(lhs=lhs, rhs=rhs, margin=margin, holds=bool(holds), s=float(s), m=int(m), kappa=kappa)


def star_curvature_report(pair, grid: BundleGrid, kappa: Optional[float] = None, chi: Optional[int] = None,
                          k_max: int = CONDITION_K_MAX, eigenvalues: bool = True) -> StarCurvatureReport:
    """
    Pointwise *F_A, the eigenvalue extremes of i*F_A and the curvature conditions
    2 pi k chi < int lambda_min dVol, int lambda_max dVol < -2 pi k chi and
    k > ||i *F_A||_inf / kappa.

    Raises:
        NonUnitaryConnectionError: eigenvalues requested for a non-unitary A
    """
    star = star_curvature_values(grid, pair)
    report = StarCurvatureReport(star=star, kappa=float(kappa or 0.0), chi=chi)
    fiber_terms = curvature_fiber_terms(grid, pair=pair)
    report.fiber_residual = relative_residual(fiber_terms, grid, grid.core_mask())
    if not eigenvalues:
        return report
    if not pair.is_unitary(grid.scene.radius):
        raise NonUnitaryConnectionError('i*F_A is Hermitian only for a unitary connection')
    hermitian = 1j * star[grid.inside]
    hermitian = 0.5 * (hermitian + np.conj(np.swapaxes(hermitian, -1, -2)))
    eig = np.linalg.eigvalsh(hermitian)
    lam_min = np.zeros((grid.n_x, grid.n_x))
    lam_max = np.zeros((grid.n_x, grid.n_x))
    lam_min[grid.inside] = eig[:, 0]
    lam_max[grid.inside] = eig[:, -1]
    report.lambda_min, report.lambda_max = lam_min, lam_max
    report.integral_min = float(np.sum(lam_min * grid.weights))
    report.integral_max = float(np.sum(lam_max * grid.weights))
    report.sup_norm = float(np.max(np.abs(eig))) if eig.size else 0.0
    if chi is not None:
        for k in range(1, k_max + 1):
            report.condition_lower[k] = report.integral_min > 2.0 * np.pi * k * chi
            report.condition_upper[k] = report.integral_max < -2.0 * np.pi * k * chi
    if report.kappa > 0.0:
        bound = report.sup_norm / report.kappa
        report.condition_k_bound = 1.0 > bound
        report.smallest_admissible_k = int(np.floor(bound)) + 1
    return report


def finite_degree_profile(u: BundleFunction) -> DegreeProfile:
    """Per-|k| dSigma^3 norms of the fiber modes of u."""
    energy = u.mode_energy()
    k = u.grid.wavenumbers
    degrees = np.arange(u.grid.n_theta // 2 + 1)
    norms = np.array([np.sqrt(np.sum(energy[np.abs(k) == d])) for d in degrees])
    return DegreeProfile(degrees=degrees, norms=norms)


def verification_suite(scene: ThermostatScene, pair=None, seed: int = 0,
                       resolutions: Sequence[Tuple[int, int]] = DEFAULT_RESOLUTIONS,
                       convention: str = DEFAULT_CONVENTION, tolerance: float = IDENTITY_TOLERANCE,
                       energy_samples: int = 10, carleman_samples: int = 20) -> Dict[str, List[Dict]]:
    """
    Run every identity under refinement, then the energy identities and the
    Carleman estimate at the finest resolution.
    """
    rng = np.random.default_rng(seed)
    pair = pair if pair is not None else random_pair(rng, 2, unitary=True, degree=1)
    scalar_u = random_band_limited(scene, rng, TEST_FUNCTION_BANDWIDTH, TEST_FUNCTION_DEGREE)
    vector_u = random_band_limited(scene, rng, TEST_FUNCTION_BANDWIDTH, TEST_FUNCTION_DEGREE,
                                   components=(pair.n,))
    phi = random_weight(scene, rng)
    identities = []
    for name, (_, on_function, needs_pair, _) in IDENTITIES.items():
        test_function = vector_u if needs_pair and on_function else scalar_u
        identities.append(convergence_study(
            name, scene, resolutions, test_function if on_function else None,
            pair=pair if needs_pair else None, phi=phi, convention=convention, tolerance=tolerance,
        ).to_dict())

    n_x, n_theta = resolutions[-1]
    grid = BundleGrid(scene, n_x, n_theta, convention)
    energies = []
    unitary = pair.is_unitary(scene.radius)
    for _ in range(energy_samples):
        k = int(rng.integers(-3, 4))
        u = random_pure_mode(scene, rng, k).on(grid)
        energies.append(energy_identity(u, 'plain', k=k).to_dict())
        if unitary:
            uv = random_pure_mode(scene, rng, k, components=(pair.n,)).on(grid)
            energies.append(energy_identity(uv, 'weighted', phi=phi, pair=pair, k=k).to_dict())

    carleman = []
    report = curvature_report(scene)
    if report.kappa_valid:
        for _ in range(carleman_samples):
            u = random_band_limited(scene, rng, TEST_FUNCTION_BANDWIDTH, TEST_FUNCTION_DEGREE).on(grid)
            for s in (1.0, 2.0, 4.0):
                for m in (1, 2):
                    carleman.append(carleman_check(u, s, m, report.kappa).to_dict())
    else:
        logger.warning('K_E is not negative on this scene; the Carleman estimate is skipped')
    return {'identities': identities, 'energy': energies, 'carleman': carleman}
