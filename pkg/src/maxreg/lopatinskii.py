"""Shapiro-Lopatinskii checks, Poisson symbols and the half-space model solver.

Everything here is scalar (``N = 1``).  Boundary operators enter through their
principal symbols ``b_j0(xi', tau)``; the interior operator through
``a_0(xi', tau) - lambda``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import trapezoid

from ._numerics import fd_derivative, phi1, phi2
from .ellipticity import (
    DEFAULT_TOL,
    ROOT_AXIS_TOL,
    SphereGrid,
    polynomial_roots,
    split_normal_roots,
)
from .exceptions import ContourGeometryError, ImproperSplitError, NumericalAccuracyError
from .opalg import FrequencyPoint, normal_symbol_polynomial

BC_TOL = 1e-8
GAP_TOL = 1e-6
MAX_NODES = 1 << 16


def _require_scalar(op, boundary_ops):
    if not op.is_scalar():
        raise ValueError("boundary value machinery is implemented for scalar operators only")
    if len(boundary_ops) != op.m:
        raise ValueError(f"expected {op.m} boundary operators, got {len(boundary_ops)}")
    for b in boundary_ops:
        if b.dim != op.dim:
            raise ValueError("boundary operator dimension differs from the operator's")
        if b.order_mj >= op.order_2m:
            raise ValueError("boundary order must be below the operator order")


# ---------------------------------------------------------- Lopatinskii matrix

def reduce_mod_a_plus(b, split):
    """Coefficients of ``b mod a_+`` in the basis ``1, tau, ..., tau^{m-1}``.

    ``split`` is a :class:`RootSplit` or the monic polynomial ``a_+`` itself.
    """
    a_plus = split if isinstance(split, Polynomial) else split.a_plus
    m = len(a_plus.coef) - 1
    b = b if isinstance(b, Polynomial) else Polynomial(np.asarray(b, dtype=complex))
    _, rem = divmod(b, a_plus)
    out = np.zeros(m, dtype=complex)
    coef = np.asarray(rem.coef, dtype=complex)[:m]
    out[: len(coef)] = coef
    return out


def lopatinskii_matrix(op, boundary_ops, pt, split=None):
    """Rows are the reduced principal boundary symbols at ``pt = (xi', lambda)``."""
    _require_scalar(op, boundary_ops)
    split = split_normal_roots(op, pt) if split is None else split
    xi_prime = np.asarray(pt.xi, dtype=float)
    return np.array([reduce_mod_a_plus(b.principal_polynomial(xi_prime), split) for b in boundary_ops])


def lopatinskii_degree(op, boundary_ops):
    """Quasi-homogeneity degree ``sum_i (m_i - i + 1)`` of ``det L``."""
    return sum(b.order_mj - i for i, b in enumerate(boundary_ops))


# Batched versions used when scanning the compact set.

def _batch_normal_coeffs(op, xi_prime, lam):
    """Normal polynomial coefficients (low to high) for stacked ``(xi', lambda)``."""
    batch = len(lam)
    coef = np.zeros((batch, op.order_2m + 1), dtype=complex)
    for idx, a in op.principal_terms.items():
        mono = np.ones(batch)
        for j, k in enumerate(idx[:-1]):
            if k:
                mono = mono * xi_prime[:, j] ** k
        coef[:, idx[-1]] += a[0, 0] * mono
    coef[:, 0] -= lam
    return coef


def _batch_roots(coef):
    lead = coef[:, -1]
    if np.any(np.abs(lead) < 1e-14 * np.max(np.abs(coef), axis=1)):
        raise ImproperSplitError("normal polynomial loses degree")
    deg = coef.shape[1] - 1
    comp = np.zeros((coef.shape[0], deg, deg), dtype=complex)
    comp[:, 1:, :-1] = np.eye(deg - 1)
    comp[:, :, -1] = -coef[:, :-1] / lead[:, None]
    return np.linalg.eigvals(comp)


def _batch_split(op, xi_prime, lam, axis_tol=ROOT_AXIS_TOL):
    """Stable roots for each sample; returns (plus_roots, bad_mask)."""
    roots = _batch_roots(_batch_normal_coeffs(op, xi_prime, lam))
    near = np.abs(roots.imag) < axis_tol * (1.0 + np.abs(roots))
    n_plus = np.sum((roots.imag > 0) & ~near, axis=1)
    bad = near.any(axis=1) | (n_plus != op.m)
    order_ = np.argsort(-roots.imag, axis=1, kind="stable")
    plus = np.take_along_axis(roots, order_, axis=1)[:, : op.m]
    return plus, bad


def _batch_monic(roots):
    """Monic coefficients (low to high) of prod (tau - r)."""
    batch, m = roots.shape
    coef = np.zeros((batch, m + 1), dtype=complex)
    coef[:, 0] = 1.0
    for k in range(m):
        shifted = np.zeros_like(coef)
        shifted[:, 1:] = coef[:, :-1]
        coef = shifted - roots[:, k : k + 1] * coef
    return coef


def _batch_remainder(b_coef, monic):
    """Remainder of ``b`` modulo monic divisors, batched; shapes (B, d+1), (B, m+1)."""
    m = monic.shape[1] - 1
    rem = b_coef.copy()
    for deg in range(rem.shape[1] - 1, m - 1, -1):
        lead = rem[:, deg].copy()
        rem[:, deg - m : deg + 1] -= lead[:, None] * monic
    return rem[:, :m] if rem.shape[1] >= m else np.pad(rem, ((0, 0), (0, m - rem.shape[1])))


def _batch_boundary_coeffs(b, xi_prime):
    batch = xi_prime.shape[0]
    coef = np.zeros((batch, b.order_mj + 1), dtype=complex)
    for idx, val in b.terms.items():
        if sum(idx) != b.order_mj:
            continue
        mono = np.ones(batch)
        for j, k in enumerate(idx[:-1]):
            if k:
                mono = mono * xi_prime[:, j] ** k
        coef[:, idx[-1]] += val * mono
    return coef


def _batch_lopatinskii(op, boundary_ops, xi_prime, lam):
    plus, bad = _batch_split(op, xi_prime, lam)
    monic = _batch_monic(plus)
    rows = [_batch_remainder(_batch_boundary_coeffs(b, xi_prime), monic) for b in boundary_ops]
    return np.stack(rows, axis=1), bad


@dataclass
class LopatinskiiReport:
    passed: bool
    min_abs_det: float
    worst_point: FrequencyPoint
    matrix_at_worst: np.ndarray
    samples_used: int
    tol: float = DEFAULT_TOL
    improper_split_at: FrequencyPoint = None

    def as_record(self):
        pt = self.worst_point
        return {
            "passed": self.passed,
            "min_abs_det": self.min_abs_det,
            "worst_point": {"xi_prime": list(pt.xi), "lambda": [pt.lam.real, pt.lam.imag]},
            "matrix_at_worst": [[[z.real, z.imag] for z in row] for row in np.asarray(self.matrix_at_worst)],
            "samples_used": self.samples_used,
            "tol": self.tol,
            "improper_split": self.improper_split_at is not None,
            "status": "sampled, not certified",
        }


def check_shapiro_lopatinskii(op, boundary_ops, angle_phi, resolution=48, tol=DEFAULT_TOL):
    """Scan ``|xi'|^{2m} + |lambda| = 1`` with ``lambda`` in the closed sector.

    The grid contains both poles ``xi' = 0`` and ``lambda = 0``.  An improper
    root split anywhere fails the check at that location.
    """
    _require_scalar(op, boundary_ops)
    xi_dim = op.dim - 1
    grid_kw = {}
    if xi_dim == 0:
        grid_kw["bounds"] = [(1.0, 1.0), (-angle_phi, angle_phi)]
    grid = SphereGrid(xi_dim, op.order_2m, angle_phi, resolution, **grid_kw)
    axes = grid.axes()
    params, shape = grid.points(axes)
    xi_prime, lam = grid.to_frequency(params)
    mats, bad = _batch_lopatinskii(op, boundary_ops, xi_prime, lam)
    used = len(lam)
    if bad.any():
        i = int(np.argmax(bad))
        pt = FrequencyPoint(tuple(xi_prime[i]), lam[i])
        return LopatinskiiReport(False, 0.0, pt, np.full((op.m, op.m), np.nan), used, tol, improper_split_at=pt)
    dets = np.abs(np.linalg.det(mats))
    i = int(np.argmin(dets))
    best = float(dets[i])
    worst_xi, worst_lam, worst_mat = xi_prime[i], lam[i], mats[i]

    # one refinement stage around the worst node
    node = np.unravel_index(i, shape)
    if xi_dim > 0 or resolution > 2:
        fine = SphereGrid(xi_dim, op.order_2m, angle_phi, resolution, bounds=grid.refine_around(axes, node))
        fine_axes = fine.axes()
        if xi_dim == 1:
            fine_axes[-1] = np.array([axes[-1][node[-1]]])
        if xi_dim == 0:
            fine_axes[0] = np.array([1.0])
        fparams, _ = fine.points(fine_axes)
        fxi, flam = fine.to_frequency(fparams)
        fmats, fbad = _batch_lopatinskii(op, boundary_ops, fxi, flam)
        used += len(flam)
        if fbad.any():
            j = int(np.argmax(fbad))
            pt = FrequencyPoint(tuple(fxi[j]), flam[j])
            return LopatinskiiReport(False, 0.0, pt, np.full((op.m, op.m), np.nan), used, tol, improper_split_at=pt)
        fdets = np.abs(np.linalg.det(fmats))
        j = int(np.argmin(fdets))
        if fdets[j] < best:
            best, worst_xi, worst_lam, worst_mat = float(fdets[j]), fxi[j], flam[j], fmats[j]
    return LopatinskiiReport(
        passed=bool(best > tol),
        min_abs_det=best,
        worst_point=FrequencyPoint(tuple(worst_xi), worst_lam),
        matrix_at_worst=worst_mat,
        samples_used=used,
        tol=tol,
    )


# ------------------------------------------------------------ Poisson symbols

@dataclass
class Contour:
    center: complex
    radius: float
    nodes: int = 256

    def points(self):
        theta = 2 * np.pi * np.arange(self.nodes) / self.nodes
        unit = np.exp(1j * theta)
        tau = self.center + self.radius * unit
        # (1/2 pi i) d tau = (radius e^{i theta} / nodes) per node
        weights = self.radius * unit / self.nodes
        return tau, weights

    def doubled(self):
        return Contour(self.center, self.radius, 2 * self.nodes)


def choose_contour(split, nodes=256):
    """Circle about the centroid of the stable roots, excluding the unstable ones."""
    plus, minus = split.roots_plus, split.roots_minus
    center = complex(np.mean(plus))
    inner = float(np.max(np.abs(plus - center)))
    gap = float(np.min(np.abs(minus - center))) if len(minus) else np.inf
    scale = 1.0 + float(np.max(np.abs(plus)))
    if gap - inner < GAP_TOL * scale:
        raise ContourGeometryError(
            f"stable and unstable roots are too close (gap {gap - inner:.3e})"
        )
    radius = 1.5 * inner
    if radius < 1e-3 * gap:
        radius = 0.5 * gap
    if radius >= gap:
        radius = 0.5 * (inner + gap)
    return Contour(center, radius, nodes)


@dataclass
class PoissonSymbol:
    """Stable solution ``w_k`` of the boundary ODE with dual normalization.

    ``w_k(x) = (1/2 pi i) \\oint M_k(tau) / a_+(tau) e^{i x tau} d tau`` evaluated
    by the trapezoidal rule on ``contour``.
    """

    point: FrequencyPoint
    k: int
    contour: Contour
    m_poly: Polynomial
    a_plus: Polynomial
    decay_rate: float = float("nan")
    bc_residual: float = float("nan")

    def _integrand(self):
        tau, weights = self.contour.points()
        return tau, weights * self.m_poly(tau) / self.a_plus(tau)

    def derivative(self, x, j=0):
        """``D_n^j w_k`` at the points ``x`` (``D_n = -i d/dx_n``)."""
        tau, g = self._integrand()
        x = np.asarray(x, dtype=float)
        kernel = np.exp(1j * np.multiply.outer(x, tau))
        return kernel @ (g * tau**j)

    def __call__(self, x):
        return self.derivative(x, 0)

    def boundary_value(self, poly):
        """``b(D_n) w_k`` at ``x_n = 0`` for a polynomial symbol ``b``."""
        tau, g = self._integrand()
        return complex(np.sum(g * poly(tau)))


def _n_polys(p_coeffs):
    """``N_k(tau) = sum_{l=0}^{m-k} p_l tau^{m-k-l}``, k = 1..m."""
    m = len(p_coeffs) - 1
    out = []
    for k in range(1, m + 1):
        high_first = p_coeffs[: m - k + 1]
        out.append(Polynomial(np.asarray(high_first[::-1], dtype=complex)))
    return out


def bracket(pt, order_2m):
    return pt.bracket(order_2m)


def fit_decay_rate(func, length, samples=240):
    """Slope of the log of the running-max envelope of ``|func|`` on ``[0, length]``."""
    x = np.linspace(0.0, length, samples)
    mag = np.abs(func(x))
    env = np.maximum.accumulate(mag[::-1])[::-1]
    keep = env > 1e-300
    if keep.sum() < 2:
        return float("inf")
    slope, _ = np.polyfit(x[keep], np.log(env[keep]), 1)
    return float(-slope)


def build_poisson_symbols(op, boundary_ops, pt, nodes=256, tol=BC_TOL, fit_decay=True):
    """Poisson symbols ``w_1..w_m`` at ``pt = (xi', lambda)``.

    The quadrature is refined by doubling the node count until every
    boundary pairing ``b_j0(D_n) w_k (0)`` is within ``tol`` of ``delta_jk``.

    Raises
    ------
    ContourGeometryError
        No circle separates the stable from the unstable roots.
    NumericalAccuracyError
        The boundary pairing check still fails at the node cap.
    """
    _require_scalar(op, boundary_ops)
    split = split_normal_roots(op, pt)
    xi_prime = np.asarray(pt.xi, dtype=float)
    lmat = lopatinskii_matrix(op, boundary_ops, pt, split)
    if abs(np.linalg.det(lmat)) <= DEFAULT_TOL:
        raise ValueError("Lopatinskii determinant vanishes at this point")
    linv = np.linalg.inv(lmat)
    n_polys = _n_polys(split.p_coeffs)
    m = op.m
    m_polys = [sum((n_polys[j] * linv[j, k] for j in range(m)), Polynomial([0j])) for k in range(m)]
    bsyms = [b.principal_polynomial(xi_prime) for b in boundary_ops]

    contour = choose_contour(split, nodes)
    while True:
        symbols = [PoissonSymbol(pt, k + 1, contour, m_polys[k], split.a_plus) for k in range(m)]
        pair = np.array([[s.boundary_value(b) for s in symbols] for b in bsyms])
        residual = float(np.max(np.abs(pair - np.eye(m))))
        if residual < tol:
            break
        if contour.nodes >= MAX_NODES:
            raise NumericalAccuracyError(
                f"boundary pairing residual {residual:.3e} above {tol:.1e}", residual=residual
            )
        contour = contour.doubled()
    length = 12.0 / pt.bracket(op.order_2m)
    for s in symbols:
        s.bc_residual = residual
        if fit_decay:
            s.decay_rate = fit_decay_rate(s, length)
    return symbols


# -------------------------------------------------------- half-space solver

@dataclass
class HalfSpaceProblem:
    """``(A_0(D) - lambda) u = f`` on the half-space with ``B_j u = 0`` at ``x_n = 0``.

    ``rhs`` has shape ``tangential_dims + (K,)``: periodic samples in the
    tangential directions (periods ``tangential_lengths``) times the normal
    grid ``x_n = k * x_max / (K - 1)``.
    """

    op: object
    boundary_ops: list
    lam: complex
    rhs: np.ndarray
    tangential_lengths: tuple = ()
    x_max: float = 20.0

    def __post_init__(self):
        self.lam = complex(self.lam)
        self.rhs = np.asarray(self.rhs, dtype=complex)
        if self.rhs.ndim != self.op.dim:
            raise ValueError("rhs must have one axis per space dimension")
        if len(self.tangential_lengths) != self.op.dim - 1:
            raise ValueError("one period per tangential direction is required")

    @property
    def normal_grid(self):
        return np.linspace(0.0, self.x_max, self.rhs.shape[-1])

    def tangential_frequencies(self):
        dims = self.rhs.shape[:-1]
        axes = [2 * np.pi * np.fft.fftfreq(n, d=L / n) for n, L in zip(dims, self.tangential_lengths)]
        if not axes:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)


@dataclass
class HalfSpaceSolution:
    u: np.ndarray
    x_normal: np.ndarray
    interior_residual: float
    boundary_residual: float
    relative_residual: float
    modes: int
    details: dict = field(default_factory=dict)

    def as_record(self):
        return {
            "interior_residual": self.interior_residual,
            "relative_residual": self.relative_residual,
            "boundary_residual": self.boundary_residual,
            "modes": self.modes,
            "normal_points": int(len(self.x_normal)),
            "x_max": float(self.x_normal[-1]),
        }


class _ModeKernel:
    """Exact whole-line Green kernel of ``P(D_n)`` for one tangential mode.

    With ``P(tau) = a_0(xi', tau) - lambda`` and simple roots ``tau_j``,
    ``G(z) = i sum_{Im tau_j > 0} e^{i z tau_j} / P'(tau_j)`` for ``z > 0`` and
    ``-i sum_{Im tau_j < 0} e^{i z tau_j} / P'(tau_j)`` for ``z < 0``.  The
    convolution with a piecewise-linear right-hand side is evaluated by exact
    one-step recursions.
    """

    def __init__(self, poly):
        self.poly = poly
        roots = polynomial_roots(poly)
        if np.any(np.abs(roots.imag) < ROOT_AXIS_TOL * (1 + np.abs(roots))):
            raise ImproperSplitError("normal polynomial has a real root")
        sep = np.abs(roots[:, None] - roots[None, :])
        np.fill_diagonal(sep, np.inf)
        if np.min(sep) < 1e-7 * (1 + np.max(np.abs(roots))):
            raise NumericalAccuracyError("normal polynomial has (nearly) multiple roots")
        self.roots = roots
        self.dpoly = poly.deriv()(roots)

    def convolve(self, f, h):
        """Integrals ``I_j`` (upper roots, forward) and ``J_j`` (lower roots, backward)."""
        K = len(f)
        upper = self.roots.imag > 0
        parts = []
        for tau, up in zip(self.roots, upper):
            z = (1j * tau if up else -1j * tau) * h
            decay = np.exp(z)
            p1, p2 = complex(phi1(z)), complex(phi2(z))
            acc = np.zeros(K, dtype=complex)
            if up:
                cell = h * (f[:-1] * (p1 - p2) + f[1:] * p2)
                for k in range(K - 1):
                    acc[k + 1] = decay * acc[k] + cell[k]
            else:
                cell = h * (f[:-1] * p2 + f[1:] * (p1 - p2))
                for k in range(K - 2, -1, -1):
                    acc[k] = decay * acc[k + 1] + cell[k]
            parts.append(acc)
        return np.array(parts), upper

    def derivatives(self, f, h, orders):
        """``D_n^j u_1`` on the grid for each ``j`` in ``orders`` (``j <= 2m``).

        Below the order the residue sum may be differentiated termwise; at
        ``j = 2m`` the kernel carries a delta, so the equation itself supplies
        ``D^{2m} u_1 = (f - sum_{i<2m} c_i D^i u_1) / c_{2m}``.
        """
        parts, upper = self.convolve(f, h)
        sign = np.where(upper, 1j, -1j) / self.dpoly
        coef = self.poly.coef
        top = len(coef) - 1
        orders = list(orders)
        if max(orders, default=0) > top:
            raise ValueError(f"derivatives above order {top} need derivatives of f")
        low = {j: (sign * self.roots**j) @ parts for j in range(top)}
        out = {j: low[j] for j in orders if j < top}
        if top in orders:
            out[top] = (np.asarray(f, dtype=complex) - sum(coef[i] * low[i] for i in range(top))) / coef[top]
        return out


def _mode_poly(op, xi_prime, lam):
    return normal_symbol_polynomial(op, xi_prime, lam)


def solve_halfspace_model(problem, accuracy_threshold=1e-3, residual_width=None):
    """Trace-form solution ``u = u_1 + sum_k w_k h_k`` with ``h_k = -b_k0(D_n) u_1 (0)``.

    Returns a :class:`HalfSpaceSolution` with the normal-direction residual
    ``(A_0 - lambda) u - f`` measured by an independent high-order finite
    difference stencil and the boundary residual ``max_j |B_j u (0)|``.
    """
    op, bops, lam = problem.op, problem.boundary_ops, problem.lam
    _require_scalar(op, bops)
    if lam == 0:
        raise ValueError("lambda = 0 is not admissible for the half-space resolvent")
    if lam.real < 0:
        raise ValueError("lambda must lie in the closed right half-plane")
    x = problem.normal_grid
    K = len(x)
    h = x[1] - x[0]
    tangential_shape = problem.rhs.shape[:-1]
    f_hat = np.fft.fft2(problem.rhs, axes=tuple(range(op.dim - 1))) if op.dim == 3 else (
        np.fft.fft(problem.rhs, axis=0) if op.dim == 2 else problem.rhs[None, :]
    )
    f_hat = f_hat.reshape(-1, K)
    freqs = problem.tangential_frequencies()
    u_hat = np.zeros_like(f_hat)
    res_hat = np.zeros_like(f_hat)
    boundary_res = 0.0
    scale = np.max(np.abs(f_hat)) if f_hat.size else 0.0
    active = 0
    for mode, xi_prime in enumerate(freqs):
        fm = f_hat[mode]
        if not np.any(np.abs(fm) > 1e-14 * max(scale, 1e-300)):
            continue
        active += 1
        poly = _mode_poly(op, xi_prime, lam)
        kernel = _ModeKernel(poly)
        bsyms = [b.principal_polynomial(xi_prime) for b in bops]
        orders = sorted({0} | {j for b in bsyms for j in range(len(b.coef))})
        d_u1 = kernel.derivatives(fm, h, orders)
        trace = [sum(b.coef[j] * d_u1[j][0] for j in range(len(b.coef))) for b in bsyms]
        pt = FrequencyPoint(tuple(xi_prime), lam)
        symbols = build_poisson_symbols(op, bops, pt, fit_decay=False)
        u = d_u1[0].copy()
        corr_traces = np.zeros(len(bops), dtype=complex)
        for k, w in enumerate(symbols):
            u = u - trace[k] * w(x)
        for j, b in enumerate(bsyms):
            corr_traces[j] = trace[j] - sum(trace[k] * symbols[k].boundary_value(b) for k in range(len(bops)))
        boundary_res = max(boundary_res, float(np.max(np.abs(corr_traces))))
        u_hat[mode] = u
        # independent check: finite differences in the normal direction
        lu = np.zeros(K, dtype=complex)
        for j, c in enumerate(poly.coef):
            if c == 0:
                continue
            dj = u if j == 0 else fd_derivative(u, h, j, width=residual_width) * (-1j) ** j
            lu = lu + c * dj
        res_hat[mode] = lu - fm
    full_shape = tangential_shape + (K,)
    if op.dim == 1:
        u_space = u_hat[0]
        r_space = res_hat[0]
    else:
        axes = tuple(range(op.dim - 1))
        u_space = np.fft.ifftn(u_hat.reshape(full_shape), axes=axes)
        r_space = np.fft.ifftn(res_hat.reshape(full_shape), axes=axes)
    interior = float(np.sqrt(np.mean(np.abs(r_space) ** 2)))
    f_size = float(np.sqrt(np.mean(np.abs(problem.rhs) ** 2)))
    relative = interior / f_size if f_size > 0 else 0.0
    if relative > accuracy_threshold:
        raise NumericalAccuracyError(
            f"normal grid under-resolved: relative residual {relative:.3e}", residual=relative
        )
    return HalfSpaceSolution(
        u=u_space, x_normal=x, interior_residual=interior, boundary_residual=boundary_res,
        relative_residual=relative, modes=active,
    )


def single_mode_rhs(profile, tangential_dims, tangential_lengths, mode, x_max, K):
    """``e^{i xi'.x'} * profile(x_n)`` sampled on the half-space grid."""
    x = np.linspace(0.0, x_max, K)
    axes = [np.arange(n) * L / n for n, L in zip(tangential_dims, tangential_lengths)]
    phase = np.ones(tuple(tangential_dims), dtype=complex)
    if axes:
        mesh = np.meshgrid(*axes, indexing="ij")
        phase = np.exp(1j * sum(k * g for k, g in zip(mode, mesh)))
    return phase[..., None] * profile(x)


def volevich_corrector(op, boundary_ops, pt, f, x_max):
    """Boundary corrector in layer form.

    ``u_2(x) = sum_k int_0^inf d/dy [w_k(x + y) (b_k0(D_n) u_1)(y)] dy``,
    evaluated by the trapezoidal rule on the normal grid of ``f``.  Agrees
    with ``sum_k w_k(x) h_k``, ``h_k = -b_k0(D_n) u_1 (0)``, because the
    product vanishes at infinity.
    """
    K = len(f)
    x = np.linspace(0.0, x_max, K)
    h = x[1] - x[0]
    xi_prime = np.asarray(pt.xi, dtype=float)
    kernel = _ModeKernel(_mode_poly(op, xi_prime, pt.lam))
    bsyms = [b.principal_polynomial(xi_prime) for b in boundary_ops]
    top = max(len(b.coef) for b in bsyms)
    d_u1 = kernel.derivatives(np.asarray(f, dtype=complex), h, range(top + 1))
    symbols = build_poisson_symbols(op, boundary_ops, pt, fit_decay=False)
    out = np.zeros(K, dtype=complex)
    for b, w in zip(bsyms, symbols):
        bu = sum(b.coef[j] * d_u1[j] for j in range(len(b.coef)))
        # d/dy = i D_n
        dbu = 1j * sum(b.coef[j] * d_u1[j + 1] for j in range(len(b.coef)))
        # w(x + y) = sum_n g_n e^{i x tau_n} e^{i y tau_n}: the y-integral is
        # taken node by node, so the (x, y) plane is never formed
        tau, g = w._integrand()
        ey = np.exp(1j * np.multiply.outer(x, tau))
        layer = trapezoid(ey * (1j * tau[None, :] * bu[:, None] + dbu[:, None]), x, axis=0)
        out += ey @ (g * layer)
    return out


def trace_corrector(op, boundary_ops, pt, f, x_max):
    """``sum_k w_k(x) h_k`` with ``h_k = -b_k0(D_n) u_1 (0)``."""
    K = len(f)
    x = np.linspace(0.0, x_max, K)
    h = x[1] - x[0]
    xi_prime = np.asarray(pt.xi, dtype=float)
    kernel = _ModeKernel(_mode_poly(op, xi_prime, pt.lam))
    bsyms = [b.principal_polynomial(xi_prime) for b in boundary_ops]
    d_u1 = kernel.derivatives(np.asarray(f, dtype=complex), h, range(max(len(b.coef) for b in bsyms)))
    symbols = build_poisson_symbols(op, boundary_ops, pt, fit_decay=False)
    out = np.zeros(K, dtype=complex)
    for b, w in zip(bsyms, symbols):
        out -= sum(b.coef[j] * d_u1[j][0] for j in range(len(b.coef))) * w(x)
    return out


# ---------------------------------------------------- one-sided Hilbert

@dataclass
class HilbertResult:
    values: np.ndarray
    points: np.ndarray
    norm_ratio: float


def one_sided_hilbert(f, h, x=None, p=2.0):
    """``(H f)(x) = int_0^inf f(y) / (x + y) dy`` by the composite midpoint rule.

    ``f`` holds the values at the cell midpoints ``y_j = (j - 1/2) h``.  The
    output is evaluated at the same midpoints unless ``x`` is given.  The
    returned ``norm_ratio`` is ``||Hf||_p / ||f||_p`` on the midpoint grid
    (``nan`` for ``f = 0``).
    """
    f = np.asarray(f, dtype=complex if np.iscomplexobj(f) else float)
    y = (np.arange(1, len(f) + 1) - 0.5) * h
    pts = y if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(pts <= 0):
        raise ValueError("evaluation points must be positive")
    values = h * (f[None, :] / (pts[:, None] + y[None, :])).sum(axis=1)
    ratio = float("nan")
    if x is None:
        den = np.sum(np.abs(f) ** p) ** (1 / p)
        if den > 0:
            ratio = float(np.sum(np.abs(values) ** p) ** (1 / p) / den)
    return HilbertResult(values, pts, ratio)
