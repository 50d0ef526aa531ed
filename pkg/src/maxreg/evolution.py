"""Parabolic evolution on periodic grids.

The linear solver integrates ``du/dt = A u + f`` exactly per Fourier mode
(exponential integrator with piecewise-linear forcing).  The quasilinear
solver iterates the maximal-regularity map ``Phi`` around a frozen
constant-coefficient operator.  Only scalar equations are handled; the
quasilinear maps act on the real part of the samples.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.integrate import trapezoid

from ._numerics import fd_weights, phi1, phi2
from .ellipticity import check_parameter_ellipticity
from .exceptions import ConfigError, NoLocalSolutionError, ParabolicityError
from .fourier import GridFunction, bessel_norm, cutoff, frequency_grid, lp_norm, time_trace_besov_norm
from .opalg import evaluate_symbol, second_order_from_matrix

STEP_CAP = 8.0


# ---------------------------------------------------------------- trajectory

@dataclass
class EvolutionTrajectory:
    """Time samples of a grid function plus per-step norms.

    ``values`` has shape ``(len(times),) + dims``.  ``derivative`` holds the
    exact time derivative ``A u + f`` when the trajectory comes from the
    linear solver; ``operator_image`` holds ``A u``.
    """

    times: np.ndarray
    values: np.ndarray
    box_length: tuple
    p: float = 2.0
    derivative: np.ndarray = None
    operator_image: np.ndarray = None
    forcing: np.ndarray = None
    order_2m: int = 2
    norms: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        if self.values.shape[0] != len(self.times):
            raise ValueError("one slice per time is required")

    @property
    def dims(self):
        return self.values.shape[1:]

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def cell_volume(self):
        return float(np.prod([L / n for L, n in zip(self.box_length, self.dims)]))

    @property
    def slices(self):
        return [GridFunction(v, self.box_length) for v in self.values]

    def slice(self, i):
        return GridFunction(self.values[i], self.box_length)

    @property
    def final(self):
        return self.slice(-1)

    def time_lp(self, data, p=None):
        """``(int_0^T ||data(t)||_p^p dt)^{1/p}`` by the trapezoidal rule."""
        p = self.p if p is None else p
        vals = np.array([lp_norm(d, p, self.cell_volume) for d in data]) ** p
        if len(vals) == 1:
            return 0.0
        return float(trapezoid(vals, self.times) ** (1 / p))

    def norm_table(self):
        return [dict(row) for row in self.norms]


def _record_norms(traj):
    vol, p = traj.cell_volume, traj.p
    rows = []
    for i, t in enumerate(traj.times):
        row = {"t": float(t), "u": lp_norm(traj.values[i], p, vol)}
        if traj.derivative is not None:
            row["dt_u"] = lp_norm(traj.derivative[i], p, vol)
        if traj.operator_image is not None:
            row["A_u"] = lp_norm(traj.operator_image[i], p, vol)
        rows.append(row)
    traj.norms = rows
    return traj


# ------------------------------------------------------------- linear solver

def _symbol_on_grid(op, dims, box_length):
    if not op.is_scalar():
        raise ValueError("the evolution solvers handle scalar operators only")
    xi = frequency_grid(dims, box_length)
    return evaluate_symbol(op, xi)[..., 0, 0]


def default_steps(symbol, T):
    """Smallest step count with ``max |a(xi)| * dt <= 8``."""
    top = float(np.max(np.abs(symbol)))
    return max(1, int(math.ceil(T * top / STEP_CAP)))


def _forcing_samples(f, times, dims, box_length):
    if f is None:
        return None
    if callable(f):
        out = []
        for t in times:
            val = f(t)
            out.append(np.asarray(getattr(val, "values", val), dtype=complex))
        return np.array(out)
    if isinstance(f, EvolutionTrajectory):
        arr = f.values
    else:
        arr = np.asarray(f, dtype=complex)
    if arr.shape == tuple(dims):
        arr = np.broadcast_to(arr, (len(times),) + tuple(dims))
    if arr.shape != (len(times),) + tuple(dims):
        raise ValueError(f"forcing has shape {arr.shape}, expected {(len(times),) + tuple(dims)}")
    return np.asarray(arr, dtype=complex)


def solve_linear_parabolic(op, f, u0, T, steps=None, p=2.0, check_ellipticity=True):
    """Solve ``du/dt - A u = f``, ``u(0) = u0`` on the torus of ``u0``.

    Each Fourier mode is advanced by
    ``u_{n+1} = e^{z} u_n + dt (f_n (phi1 - phi2) + f_{n+1} phi2)``,
    ``z = a(xi) dt``, which is exact for forcing linear on each step.

    Parameters
    ----------
    f : None, callable ``t -> array``, array of slices, or a single slice held constant
    steps : int, optional
        Defaults to :func:`default_steps`.

    Raises
    ------
    ParabolicityError
        The operator fails the sampled check at angle ``pi/2`` or has a
        growing mode on the grid.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if check_ellipticity:
        verdict = check_parameter_ellipticity(op, np.pi / 2, resolution=24)
        if not verdict.passed:
            raise ParabolicityError(
                f"operator is not parabolic (sampled C_P = {verdict.c_p_estimate:.3e})"
            )
    dims, box = u0.dims, u0.box_length
    symbol = _symbol_on_grid(op, dims, box)
    if np.any(symbol.real > 1e-12 * max(1.0, float(np.max(np.abs(symbol))))):
        raise ParabolicityError("operator has a growing Fourier mode on this grid")
    steps = default_steps(symbol, T) if steps is None else int(steps)
    times = np.linspace(0.0, T, steps + 1)
    dt = times[1] - times[0]
    forcing = _forcing_samples(f, times, dims, box)

    z = symbol * dt
    decay = np.exp(z)
    w_old = dt * (phi1(z) - phi2(z))
    w_new = dt * phi2(z)
    axes = tuple(range(len(dims)))
    u_hat = np.fft.fftn(u0.to_space().values, axes=axes)
    f_hat = None if forcing is None else np.fft.fftn(forcing, axes=tuple(a + 1 for a in axes))

    spec = np.empty((steps + 1,) + tuple(dims), dtype=complex)
    spec[0] = u_hat
    for n in range(steps):
        nxt = decay * spec[n]
        if f_hat is not None:
            nxt = nxt + w_old * f_hat[n] + w_new * f_hat[n + 1]
        spec[n + 1] = nxt
    image_hat = symbol * spec
    deriv_hat = image_hat if f_hat is None else image_hat + f_hat
    back = tuple(a + 1 for a in axes)
    traj = EvolutionTrajectory(
        times=times,
        values=np.fft.ifftn(spec, axes=back),
        box_length=box,
        p=p,
        derivative=np.fft.ifftn(deriv_hat, axes=back),
        operator_image=np.fft.ifftn(image_hat, axes=back),
        forcing=forcing if forcing is not None else np.zeros_like(spec),
        order_2m=op.order_2m,
    )
    return _record_norms(traj)


def maximal_regularity_ratio(traj, p=None):
    """``(||du/dt|| + ||A u||) / (||f|| + ||u0||_trace)`` in ``L^p(0, T; L^p)``.

    The trace norm is the Besov norm of order ``2m - 2m/p`` of ``u(0)``.
    """
    p = traj.p if p is None else p
    if traj.derivative is None or traj.operator_image is None:
        raise ValueError("trajectory lacks the exact derivative; produce it with the linear solver")
    num = traj.time_lp(traj.derivative, p) + traj.time_lp(traj.operator_image, p)
    forcing = traj.forcing if traj.forcing is not None else np.zeros_like(traj.values)
    den = traj.time_lp(forcing, p) + time_trace_besov_norm(traj, traj.order_2m, p)
    if den == 0:
        raise ValueError("zero data: the ratio is undefined")
    return float(num / den)


# ----------------------------------------------------------- spectral calculus

class _Spectral:
    def __init__(self, dims, box_length):
        self.xi = frequency_grid(dims, box_length)
        self.axes = tuple(range(len(dims)))
        self.dim = len(dims)

    def gradient(self, u):
        u_hat = np.fft.fftn(u, axes=self.axes)
        return np.stack(
            [np.fft.ifftn(1j * self.xi[..., j] * u_hat, axes=self.axes).real for j in range(self.dim)],
            axis=-1,
        )

    def hessian(self, u):
        u_hat = np.fft.fftn(u, axes=self.axes)
        out = np.empty(u.shape + (self.dim, self.dim))
        for i in range(self.dim):
            for j in range(i, self.dim):
                d = np.fft.ifftn(-self.xi[..., i] * self.xi[..., j] * u_hat, axes=self.axes).real
                out[..., i, j] = d
                out[..., j, i] = d
        return out

    def polylaplacian(self, u, m):
        u_hat = np.fft.fftn(u, axes=self.axes)
        r2 = np.sum(self.xi**2, axis=-1)
        return np.fft.ifftn((-r2) ** m * u_hat, axes=self.axes)


# --------------------------------------------------------- quasilinear solver

@dataclass
class QuasilinearProblem:
    """``du/dt - tr(a(u, grad u) hess u) = f(u, grad u)`` with ``u(0) = initial``.

    ``coefficient_map(u, grad)`` returns symmetric matrices of shape
    ``dims + (n, n)``; ``forcing_map(u, grad)`` returns an array of shape
    ``dims`` (``None`` means zero forcing).
    """

    coefficient_map: object
    initial: GridFunction
    horizon_T0: float = 1.0
    forcing_map: object = None
    p: float = 2.0
    name: str = "quasilinear"

    @property
    def dim(self):
        return self.initial.ndim

    def coefficients(self, u, grad, label="slice"):
        a = np.asarray(self.coefficient_map(u, grad), dtype=float)
        if not np.allclose(a, np.swapaxes(a, -1, -2), atol=1e-12):
            raise ParabolicityError(f"coefficient field is not symmetric on {label}")
        if np.min(np.linalg.eigvalsh(a)) <= 0:
            raise ParabolicityError(f"coefficient field loses positive-definiteness on {label}")
        return a

    def forcing(self, u, grad):
        if self.forcing_map is None:
            return np.zeros_like(u)
        return np.asarray(self.forcing_map(u, grad), dtype=float)

    @property
    def outside_hypothesis(self):
        """``True`` when ``p <= n + 2``, outside the embedding used by the theory."""
        return self.p <= self.dim + 2


def mcf_coefficients(u, grad):
    """``a_ij = delta_ij - p_i p_j / (1 + |p|^2)`` with ``p = grad u``."""
    n = grad.shape[-1]
    denom = 1.0 + np.sum(grad**2, axis=-1)
    return np.eye(n) - grad[..., :, None] * grad[..., None, :] / denom[..., None, None]


def mean_curvature_problem(initial, horizon_T0=1.0, p=2.0):
    """Graphical mean curvature flow for the given initial graph."""
    return QuasilinearProblem(mcf_coefficients, initial, horizon_T0, None, p, "mean-curvature-flow")


def frozen_operator(problem, u0=None):
    """Constant-coefficient operator ``tr(A_bar hess)`` with the averaged coefficient field."""
    u0 = problem.initial.values.real if u0 is None else u0
    calc = _Spectral(u0.shape, problem.initial.box_length)
    a = problem.coefficients(u0, calc.gradient(u0), "initial slice")
    a_bar = a.reshape(-1, problem.dim, problem.dim).mean(axis=0)
    return second_order_from_matrix(a_bar), a_bar


def _phi_rhs(problem, values, a_bar, calc):
    out = np.empty(values.shape)
    for i, v in enumerate(values):
        grad = calc.gradient(v)
        hess = calc.hessian(v)
        a = problem.coefficients(v, grad, f"slice {i}")
        fluct = np.einsum("...ij,...ij->...", a - a_bar, hess)
        out[i] = problem.forcing(v, grad) + fluct
    return out


def quasilinear_step_phi(problem, v, frozen):
    """One application of ``Phi``: solve the linear problem with ``v`` in the coefficients.

    ``frozen`` is the pair returned by :func:`frozen_operator`.
    """
    op0, a_bar = frozen
    values = np.asarray(v.values).real
    calc = _Spectral(values.shape[1:], problem.initial.box_length)
    rhs = _phi_rhs(problem, values, a_bar, calc)
    T = float(v.times[-1])
    out = solve_linear_parabolic(op0, rhs, problem.initial, T, steps=len(v.times) - 1, p=problem.p,
                                 check_ellipticity=False)
    out.values = out.values.real.astype(complex)
    return out


def e_norm(values, dt, box_length, p=2.0, m=1):
    """``(sum_n dt (||d_t v||_p^p + ||v||_p^p + ||Delta^m v||_p^p))^{1/p}``."""
    values = np.asarray(values)
    dims = values.shape[1:]
    vol = float(np.prod([L / n for L, n in zip(box_length, dims)]))
    calc = _Spectral(dims, box_length)
    if len(values) > 2:
        dvdt = np.gradient(values, dt, axis=0, edge_order=2)
    elif len(values) == 2:
        dvdt = np.gradient(values, dt, axis=0)
    else:
        dvdt = np.zeros_like(values)
    total = 0.0
    for i in range(len(values)):
        total += dt * (
            lp_norm(dvdt[i], p, vol) ** p
            + lp_norm(values[i], p, vol) ** p
            + lp_norm(calc.polylaplacian(values[i], m), p, vol) ** p
        )
    return float(total ** (1.0 / p))


@dataclass
class ContractionReport:
    r: float
    T: float
    iterates: list
    contraction_factor: float
    converged: bool
    ratios: list = field(default_factory=list)
    halvings: int = 0
    max_distance_to_reference: float = 0.0
    outside_hypothesis: bool = False

    def as_record(self):
        return {
            "r": self.r,
            "T": self.T,
            "increments": self.iterates,
            "ratios": self.ratios,
            "contraction_factor": self.contraction_factor,
            "converged": self.converged,
            "halvings": self.halvings,
            "max_distance_to_reference": self.max_distance_to_reference,
            "p_at_or_below_n_plus_2": self.outside_hypothesis,
        }


def _fit_factor(increments, floor):
    usable = [d for d in increments if d > floor]
    if len(usable) < 2:
        return 0.0 if increments and increments[-1] <= floor else float("nan")
    k = np.arange(len(usable))
    slope = np.polyfit(k, np.log(usable), 1)[0]
    return float(np.exp(slope))


def reference_solution(problem, T, steps, frozen):
    """``u*``: linear problem with the frozen operator and forcing ``F(., 0)``."""
    op0, _ = frozen
    zero = np.zeros(problem.initial.dims)
    calc = _Spectral(problem.initial.dims, problem.initial.box_length)
    f0 = problem.forcing(zero, calc.gradient(zero))
    forcing = None if not np.any(f0) else f0
    traj = solve_linear_parabolic(op0, forcing, problem.initial, T, steps=steps, p=problem.p,
                                  check_ellipticity=False)
    traj.values = traj.values.real.astype(complex)
    return traj


def _iterate(problem, T, steps, max_iter, tol, frozen, start):
    reference = reference_solution(problem, T, steps, frozen)
    if start == "reference":
        v = reference
    elif start == "initial":
        vals = np.broadcast_to(problem.initial.values.real, (steps + 1,) + problem.initial.dims)
        v = EvolutionTrajectory(reference.times, vals.astype(complex), problem.initial.box_length, problem.p)
    else:
        v = start
    dt = T / steps
    box = problem.initial.box_length
    increments, ratios = [], []
    max_dist = 0.0
    scale = max(e_norm(reference.values.real, dt, box, problem.p), 1.0)
    floor = 1e3 * np.finfo(float).eps * scale
    stalled = 0
    converged = False
    for _ in range(max_iter):
        nxt = quasilinear_step_phi(problem, v, frozen)
        if not np.all(np.isfinite(nxt.values)):
            return nxt, increments, ratios, max_dist, False, True
        inc = e_norm((nxt.values - v.values).real, dt, box, problem.p)
        max_dist = max(max_dist, e_norm((nxt.values - reference.values).real, dt, box, problem.p))
        if increments and increments[-1] > floor:
            ratio = inc / increments[-1]
            ratios.append(float(ratio))
            stalled = stalled + 1 if ratio >= 1 else 0
        increments.append(float(inc))
        v = nxt
        if inc < tol:
            converged = True
            break
        if stalled >= 3:
            return v, increments, ratios, max_dist, False, True
    return v, increments, ratios, max_dist, converged, False


def solve_quasilinear(problem, r=None, T=None, max_iter=50, tol=1e-10, dt=None, steps=None, start="reference"):
    """Fixed-point iteration ``v_{k+1} = Phi(v_k)`` from ``v_0 = u*``.

    Stops once the E-norm increment drops below ``tol``.  When the
    increments fail to shrink for three consecutive iterations the interval
    is halved and the iteration restarts, down to ``T / 64``.

    ``start`` selects the first iterate: ``"reference"`` (``u*``),
    ``"initial"`` (``u0`` held constant in time) or a trajectory.

    Raises
    ------
    NoLocalSolutionError
        No contraction down to the minimal interval.
    """
    T = problem.horizon_T0 if T is None else float(T)
    T_min = T / 64
    frozen = frozen_operator(problem)
    halvings = 0
    while True:
        if steps is not None:
            n_steps = int(steps)
        elif dt is not None:
            n_steps = max(1, int(round(T / dt)))
        else:
            sym = _symbol_on_grid(frozen[0], problem.initial.dims, problem.initial.box_length)
            n_steps = default_steps(sym, T)
        v, increments, ratios, max_dist, converged, failed = _iterate(
            problem, T, n_steps, max_iter, tol, frozen, start
        )
        if not failed:
            break
        if T / 2 < T_min * (1 - 1e-12):
            raise NoLocalSolutionError(f"no contraction down to T = {T:.3e}")
        T /= 2
        halvings += 1
        if steps is not None:
            steps = max(1, int(steps) // 2)
    floor = 1e3 * np.finfo(float).eps * max(increments[0] if increments else 1.0, 1.0)
    factor = _fit_factor(increments, floor)
    report = ContractionReport(
        r=float(max_dist if r is None else r), T=T, iterates=increments, contraction_factor=factor,
        converged=bool(converged and all(q < 1 for q in ratios)), ratios=ratios, halvings=halvings,
        max_distance_to_reference=max_dist, outside_hypothesis=problem.outside_hypothesis,
    )
    v.p = problem.p
    return _record_norms(v), report


def pde_residual(problem, traj, width=5):
    """``L^p`` space-time norm of ``du/dt - tr(a hess u) - f``.

    The time derivative uses ``width``-point centred differences, so only
    the interior slices with a full stencil on both sides enter the norm.
    """
    values = np.asarray(traj.values).real
    dt = traj.dt
    half = width // 2
    if len(values) < width:
        raise ValueError("trajectory too short for the residual stencil")
    calc = _Spectral(values.shape[1:], problem.initial.box_length)
    weights = fd_weights(half, np.arange(width), 1) / dt
    vol = traj.cell_volume
    total = 0.0
    for i in range(half, len(values) - half):
        v = values[i]
        dudt = np.tensordot(weights, values[i - half:i + half + 1], axes=1)
        grad = calc.gradient(v)
        a = problem.coefficients(v, grad, f"slice {i}")
        lap = np.einsum("...ij,...ij->...", a, calc.hessian(v))
        res = dudt - lap - problem.forcing(v, grad)
        total += dt * lp_norm(res, problem.p, vol) ** problem.p
    return float(total ** (1 / problem.p))


def grim_reaper_window(modes=256, window=0.5, ramp=0.9, box_length=2 * np.pi):
    """Periodic initial data equal to ``-log cos x`` on ``|x| < window``.

    The slope ``tan x`` is multiplied by a smooth cutoff that falls from 1 at
    ``|x| = window`` to 0 at ``|x| = window + ramp`` and integrated
    spectrally; ``window + ramp`` must stay below the pole at ``pi/2``.
    The grid origin sits at the window center.
    """
    h = box_length / modes
    x = (np.arange(modes) * h + box_length / 2) % box_length - box_length / 2
    s = cutoff(1 + 0.5 * (np.abs(x) - window) / ramp)
    if np.any((s > 0) & (np.abs(x) >= np.pi / 2)):
        raise ConfigError("cutoff support reaches the pole of tan x")
    slope = np.tan(np.where(s > 0, x, 0.0)) * s
    k = 2 * np.pi * np.fft.fftfreq(modes, d=h)
    sh = np.fft.fft(slope)
    uh = np.zeros_like(sh)
    nz = k != 0
    uh[nz] = sh[nz] / (1j * k[nz])
    u = np.fft.ifft(uh).real
    u -= u[np.argmin(np.abs(x))]
    return GridFunction(u, box_length)


@dataclass
class MaximalRun:
    trajectory: EvolutionTrajectory
    reason: str
    reached_T: float
    accumulated: float
    segments: list = field(default_factory=list)


def continue_maximal(problem, segment_T, total_T, blowup_norm_cap, dt=None, max_iter=50, tol=1e-10):
    """Chain local solutions, restarting each segment from the previous final slice.

    Stops at ``total_T``, when ``int (||u||^p + ||d_t u||^p + ||Delta u||^p) dt``
    exceeds ``blowup_norm_cap`` ("blow-up suspected"), or when a segment fails.
    """
    t0 = 0.0
    current = problem.initial
    times, slabs = [0.0], [current.values.real[None]]
    accumulated = 0.0
    segments = []
    reason = "reached total_T"
    while t0 < total_T * (1 - 1e-12):
        span = min(segment_T, total_T - t0)
        local = QuasilinearProblem(problem.coefficient_map, current, span, problem.forcing_map, problem.p, problem.name)
        try:
            traj, report = solve_quasilinear(local, T=span, dt=dt, max_iter=max_iter, tol=tol)
        except NoLocalSolutionError as exc:
            vals = np.concatenate(slabs)
            if not np.all(np.isfinite(vals)) or accumulated > blowup_norm_cap:
                reason = "blow-up suspected"
            else:
                reason = f"segment failure: {exc}"
            break
        segments.append(report.as_record())
        vals = traj.values.real
        if not np.all(np.isfinite(vals)):
            reason = "blow-up suspected"
            break
        accumulated += e_norm(vals, traj.dt, problem.initial.box_length, problem.p) ** problem.p
        times.extend((t0 + traj.times[1:]).tolist())
        slabs.append(vals[1:])
        t0 += report.T
        current = GridFunction(vals[-1], problem.initial.box_length)
        if accumulated > blowup_norm_cap:
            reason = "blow-up suspected"
            break
    values = np.concatenate(slabs).astype(complex)
    out = EvolutionTrajectory(np.array(times), values, problem.initial.box_length, problem.p)
    return MaximalRun(_record_norms(out), reason, float(t0), float(accumulated), segments)


# -------------------------------------------------------------- diagnostics

def smoothing_diagnostic(traj, orders=(2, 4, 6), times=None, p=None):
    """Bessel-potential norms of ``u(t)`` at the requested orders.

    Returns rows ``{"t": t, "H^s": norm, ...}`` for the trajectory samples
    nearest to ``times`` (all samples by default).
    """
    p = traj.p if p is None else p
    if times is None:
        idx = range(len(traj.times))
    else:
        idx = [int(np.argmin(np.abs(traj.times - t))) for t in times]
    rows = []
    for i in idx:
        u = traj.slice(i)
        row = {"t": float(traj.times[i])}
        for s in orders:
            row[f"H^{s}"] = bessel_norm(u, s, p)
        rows.append(row)
    return rows


def rough_initial_data(dims, box_length, exponent, seed=0, max_mode=4096):
    """Real random data with ``|u_hat(k)| = |k|^{-exponent}`` (``k != 0``), one dimension.

    Phases come from a generator seeded once for modes up to ``max_mode``, so
    coarser grids carry the truncation of the same function.
    """
    (n,) = dims
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0, 2 * np.pi, max_mode + 1)
    k = np.fft.fftfreq(n, d=1.0 / n)
    spec = np.zeros(n, dtype=complex)
    nz = (k != 0) & (np.abs(k) < n / 2)
    ak = np.abs(k[nz]).astype(int)
    if np.any(ak > max_mode):
        raise ValueError("grid exceeds the seeded mode range")
    spec[nz] = ak ** (-exponent) * np.exp(1j * np.sign(k[nz]) * phases[ak])
    values = np.fft.ifft(spec).real * n
    return GridFunction(values, box_length)
