"""Sampled parameter-ellipticity checks, normal root splitting, perturbation budgets.

Verdicts produced here are *sampled, not certified*: the infimum of
``|det(a_0(xi) - lambda)|`` is estimated on a deterministic grid of the compact
set ``|xi|^{2m} + |lambda| = 1`` plus one local refinement stage.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import minimize

from .exceptions import ImproperSplitError
from .opalg import FrequencyPoint, characteristic_determinant, normal_symbol_polynomial

DEFAULT_TOL = 1e-8
ROOT_AXIS_TOL = 1e-9


@dataclass
class EllipticityVerdict:
    passed: bool
    c_p_estimate: float
    angle_phi: float
    worst_point: FrequencyPoint
    samples_used: int
    tol: float = DEFAULT_TOL
    certified: bool = False

    def as_record(self):
        return {
            "passed": self.passed,
            "c_p_estimate": self.c_p_estimate,
            "angle_phi": self.angle_phi,
            "worst_point": {"xi": list(self.worst_point.xi), "lambda": _cplx(self.worst_point.lam)},
            "samples_used": self.samples_used,
            "tol": self.tol,
            "status": "sampled, not certified",
        }


def _cplx(z):
    return [float(np.real(z)), float(np.imag(z))]


# --------------------------------------------------------------- sphere grid

def _direction_params(dim):
    """Number of angular parameters needed to sweep the unit sphere in R^dim."""
    return {1: 0, 2: 1, 3: 2}.get(dim, None)


def _directions(dim, angles):
    """Unit vectors from angular parameters, shape (..., dim)."""
    if dim == 0:
        return np.zeros(np.shape(angles)[:-1] + (0,))
    if dim == 1:
        # one "angle" in {0, 1} selects the sign
        return np.where(angles[..., :1] < 0.5, 1.0, -1.0)
    if dim == 2:
        a = angles[..., 0]
        return np.stack([np.cos(a), np.sin(a)], axis=-1)
    if dim == 3:
        pol, az = angles[..., 0], angles[..., 1]
        return np.stack(
            [np.sin(pol) * np.cos(az), np.sin(pol) * np.sin(az), np.cos(pol)], axis=-1
        )
    raise ValueError("sphere sampling is implemented for dimensions <= 3")


class SphereGrid:
    """Product grid on ``{(xi, lambda): |xi|^{2m} + |lambda| = 1, |arg lambda| <= phi}``.

    Coordinates are ``t in [0, 1]`` (``|lambda| = t``), ``theta in [-phi, phi]``
    and the direction angles of ``xi / |xi|``.  Instances carry the box bounds
    so a refinement box can be built around any grid node.
    """

    def __init__(self, xi_dim, order_2m, angle_phi, resolution, bounds=None):
        self.xi_dim = xi_dim
        self.order_2m = order_2m
        self.angle_phi = angle_phi
        self.resolution = resolution
        if bounds is None:
            bounds = [(0.0, 1.0), (-angle_phi, angle_phi)]
            if xi_dim == 2:
                bounds.append((0.0, 2 * np.pi))
            elif xi_dim == 3:
                bounds += [(0.0, np.pi), (0.0, 2 * np.pi)]
        self.bounds = bounds

    def axes(self):
        axes = []
        for k, (lo, hi) in enumerate(self.bounds):
            if self.xi_dim == 2 and k == 2 and hi - lo >= 2 * np.pi:
                axes.append(np.linspace(lo, hi, self.resolution, endpoint=False))
            else:
                axes.append(np.linspace(lo, hi, self.resolution))
        if self.xi_dim == 1:
            axes.append(np.array([0.0, 1.0]))
        return axes

    def points(self, axes=None):
        axes = self.axes() if axes is None else axes
        mesh = np.meshgrid(*axes, indexing="ij")
        params = np.stack([g.ravel() for g in mesh], axis=-1)
        return params, [len(a) for a in axes]

    def to_frequency(self, params):
        t = np.clip(params[:, 0], 0.0, 1.0)
        theta = np.clip(params[:, 1], -self.angle_phi, self.angle_phi)
        lam = t * np.exp(1j * theta)
        radius = (1.0 - t) ** (1.0 / self.order_2m)
        dirs = _directions(self.xi_dim, params[:, 2:])
        return radius[:, None] * dirs, lam

    def refine_around(self, params_axes, node_index):
        """Box spanning the neighbouring cells of ``node_index``."""
        bounds = []
        for k, (ax, i) in enumerate(zip(params_axes, node_index)):
            if self.xi_dim == 1 and k == len(params_axes) - 1:
                continue
            lo = ax[max(i - 1, 0)]
            hi = ax[min(i + 1, len(ax) - 1)]
            if self.xi_dim >= 2 and k >= 2 and len(ax) > 1:
                step = ax[1] - ax[0]
                lo, hi = ax[i] - step, ax[i] + step
            bounds.append((lo, hi))
        return bounds


def _min_on_grid(values_fn, grid, axes):
    params, shape = grid.points(axes)
    xi, lam = grid.to_frequency(params)
    vals = values_fn(xi, lam)
    idx = int(np.argmin(vals))
    return float(vals[idx]), xi[idx], lam[idx], np.unravel_index(idx, shape), params.shape[0]


def sampled_infimum(values_fn, xi_dim, order_2m, angle_phi, resolution, refine=True, polish=True):
    """Minimize ``values_fn(xi, lam)`` over the reduced compact set.

    Returns ``(minimum, xi, lam, samples_used)``.  With ``refine`` one extra
    grid of the same resolution is laid over the cells adjacent to the coarse
    minimizer, and with ``polish`` a bounded local search starts from the best node.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    grid = SphereGrid(xi_dim, order_2m, angle_phi, resolution)
    axes = grid.axes()
    best, xi, lam, node, used = _min_on_grid(values_fn, grid, axes)
    if refine:
        fine = SphereGrid(
            xi_dim, order_2m, angle_phi, resolution, bounds=grid.refine_around(axes, node)
        )
        fine_axes = fine.axes()
        if xi_dim == 1:
            # keep the sign of the coarse minimizer
            fine_axes[-1] = np.array([axes[-1][node[-1]]])
        val, fxi, flam, fnode, n2 = _min_on_grid(values_fn, fine, fine_axes)
        used += n2
        if val < best:
            best, xi, lam = val, fxi, flam
            start = np.array([ax[i] for ax, i in zip(fine_axes, fnode)])
        else:
            start = np.array([ax[i] for ax, i in zip(axes, node)])
        if polish:
            val, pxi, plam, n3 = _polish(values_fn, grid, start)
            used += n3
            if val < best:
                best, xi, lam = val, pxi, plam
    return best, xi, lam, used


def _polish(values_fn, grid, start):
    """Bounded Nelder-Mead from the best grid node.

    Exact zeros of the determinant are isolated points of the parameter box
    and a finite grid never hits them; the polish drives such minima below
    the pass/fail tolerance.
    """
    free = len(start) - (1 if grid.xi_dim == 1 else 0)
    fixed = start[free:]

    def objective(p):
        full = np.concatenate([p, fixed])[None, :]
        xi, lam = grid.to_frequency(full)
        return float(values_fn(xi, lam)[0])

    lo, hi = np.array(grid.bounds[:free], dtype=float).T
    res = minimize(
        objective, np.clip(start[:free], lo, hi), method="Nelder-Mead", bounds=grid.bounds[:free],
        options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 4000},
    )
    full = np.concatenate([res.x, fixed])[None, :]
    xi, lam = grid.to_frequency(full)
    return float(res.fun), xi[0], lam[0], int(res.nfev)


def check_parameter_ellipticity(op, angle_phi, resolution=64, tol=DEFAULT_TOL, refine=True, rho=1.0, polish=True):
    """Estimate ``C_P = inf |det(a_0(xi) - lambda)|`` on the sampled compact set.

    ``rho`` moves the sampling onto the scaled set ``|xi|^{2m} + |lambda| = rho^{2m}``
    and divides the determinant by ``rho^{2mN}``; by quasi-homogeneity the
    estimate does not depend on it.
    """
    if not 0 < angle_phi <= np.pi:
        raise ValueError("angle must lie in (0, pi]")
    two_m, size = op.order_2m, op.system_size
    norm = rho ** (two_m * size)

    def values(xi, lam):
        return np.abs(characteristic_determinant(op, rho * xi, rho**two_m * lam)) / norm

    best, xi, lam, used = sampled_infimum(values, op.dim, two_m, angle_phi, resolution, refine, polish)
    return EllipticityVerdict(
        passed=bool(best > tol),
        c_p_estimate=best,
        angle_phi=float(angle_phi),
        worst_point=FrequencyPoint(tuple(xi), lam),
        samples_used=used,
        tol=tol,
    )


def estimate_parabolicity_angle(op, resolution=64, tol=DEFAULT_TOL, angle_tol=1e-3, min_angle=1e-3):
    """Largest sector angle in ``(0, pi]`` at which the sampled check passes.

    Returns ``None`` when the operator fails already at ``min_angle``.
    """
    def passes(phi):
        return check_parameter_ellipticity(op, phi, resolution, tol).passed

    if passes(np.pi):
        return float(np.pi)
    if not passes(min_angle):
        return None
    lo, hi = min_angle, np.pi
    while hi - lo > angle_tol:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            lo = mid
        else:
            hi = mid
    return float(lo)


# ------------------------------------------------------------- root splitting

@dataclass
class RootSplit:
    """Roots of ``a_0(xi', tau) - lambda`` separated by the sign of ``Im tau``.

    ``a_plus`` is the monic product over ``roots_plus``; ``p_coeffs`` lists its
    coefficients from the leading one down (``a_+ = sum p_l tau^{m-l}``).
    """

    roots_plus: np.ndarray
    roots_minus: np.ndarray
    a_plus: Polynomial
    point: FrequencyPoint = None
    leading: complex = 1.0

    @property
    def m(self):
        return len(self.roots_plus)

    @property
    def p_coeffs(self):
        return self.a_plus.coef[::-1].copy()

    @property
    def a_plus_coeffs(self):
        return self.p_coeffs

    @property
    def a_minus(self):
        return Polynomial.fromroots(self.roots_minus)


def polynomial_roots(poly):
    """All roots via eigenvalues of the companion matrix."""
    coef = np.trim_zeros(np.asarray(poly.coef, dtype=complex), "b")
    if len(coef) <= 1:
        return np.array([], dtype=complex)
    comp = np.polynomial.polynomial.polycompanion(coef)
    return np.linalg.eigvals(comp)


def split_normal_roots(op, pt, axis_tol=ROOT_AXIS_TOL):
    """Split the 2m normal roots at ``(xi', lambda)`` into stable and unstable ones.

    Raises
    ------
    ImproperSplitError
        If a root lies within ``axis_tol * (1 + |tau|)`` of the real axis, if
        the polynomial degree drops, or if the number of roots with positive
        imaginary part differs from ``m``.
    """
    if not op.is_scalar():
        raise ValueError("root splitting is implemented for scalar operators only")
    xi_prime = np.asarray(pt.xi, dtype=float)
    if not np.any(xi_prime) and pt.lam == 0:
        raise ValueError("(xi', lambda) must be nonzero")
    poly = normal_symbol_polynomial(op, xi_prime, pt.lam)
    m = op.m
    coef = np.trim_zeros(poly.coef, "b")
    if len(coef) != op.order_2m + 1:
        raise ImproperSplitError(
            f"normal polynomial has degree {len(coef) - 1} < {op.order_2m}", n_plus=None
        )
    roots = polynomial_roots(poly)
    near = np.abs(roots.imag) < axis_tol * (1.0 + np.abs(roots))
    n_plus = int(np.sum(roots.imag > 0) - np.sum(near & (roots.imag > 0)))
    if near.any():
        raise ImproperSplitError(
            f"{int(near.sum())} root(s) on the real axis at xi'={tuple(pt.xi)}, lambda={pt.lam}",
            n_plus=n_plus,
            n_real=int(near.sum()),
        )
    plus = roots[roots.imag > 0]
    minus = roots[roots.imag < 0]
    if len(plus) != m:
        raise ImproperSplitError(
            f"{len(plus)} roots with positive imaginary part, expected {m}", n_plus=len(plus), n_real=0
        )
    order_ = np.lexsort((plus.real, -plus.imag))
    plus = plus[order_]
    return RootSplit(plus, minus, Polynomial.fromroots(plus), point=pt, leading=coef[-1])


# ------------------------------------------------------- perturbation budgets

@dataclass
class PerturbationBudget:
    """Relative/absolute bounds ``a, b`` and the (R-)sectoriality constants of A."""

    a: float
    b: float = 0.0
    M_theta: float = 1.0
    M_tilde_theta: float = 1.0
    R_theta: float = 1.0
    R_tilde_theta: float = 1.0

    def __post_init__(self):
        for name in ("a", "b", "M_theta", "M_tilde_theta", "R_theta", "R_tilde_theta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class PerturbationResult:
    admissible: bool
    r_bound_new: float
    mu_min: float
    reason: str = ""
    details: dict = field(default_factory=dict)


def perturbed_rbound(budget):
    """Perturbation arithmetic for ``A + B`` with ``|Bx| <= a|Ax| + b|x|``.

    For ``b = 0`` the perturbed operator stays R-sectorial iff
    ``a * R~ < 1`` with R-bound ``R / (1 - a R~)``.  For ``b > 0`` a shift
    ``A + B - mu`` is needed, admissible iff ``a * M~ * R~ < 1``, for every
    ``mu > b M R~ / (1 - a M~ R~)``; ``r_bound_new`` is then ``nan`` since it
    depends on the chosen shift.
    """
    a, b = budget.a, budget.b
    if b == 0:
        product = a * budget.R_tilde_theta
        if product < 1:
            return PerturbationResult(True, budget.R_theta / (1 - product), 0.0, details={"a_R_tilde": product})
        return PerturbationResult(
            False, math.inf, math.nan,
            reason=f"a * R~ = {product} >= 1", details={"a_R_tilde": product},
        )
    product = 0.0 if a == 0 else a * budget.M_tilde_theta * budget.R_tilde_theta
    if product < 1:
        mu = b * budget.M_theta * budget.R_tilde_theta / (1 - product)
        return PerturbationResult(True, math.nan, mu, details={"a_M_tilde_R_tilde": product})
    return PerturbationResult(
        False, math.inf, math.inf,
        reason=f"a * M~ * R~ = {product} >= 1", details={"a_M_tilde_R_tilde": product},
    )
