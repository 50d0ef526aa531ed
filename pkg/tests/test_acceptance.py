"""End-to-end acceptance checks, one test per criterion.

Every test records a one-line verdict; the lines are printed in the
terminal summary (see ``conftest.py``) whether or not the test passes.
"""

import json
import time

import numpy as np

from maxreg.cli import ProblemConfig, load_fixture, run
from maxreg.ellipticity import check_parameter_ellipticity
from maxreg.evolution import (
    e_norm,
    grim_reaper_window,
    mean_curvature_problem,
    pde_residual,
    rough_initial_data,
    smoothing_diagnostic,
    solve_linear_parabolic,
    solve_quasilinear,
)
from maxreg.fourier import (
    GridFunction,
    besov_norm,
    build_dyadic_system,
    mikhlin_check,
    triebel_lizorkin_norm,
)
from maxreg.lopatinskii import (
    HalfSpaceProblem,
    build_poisson_symbols,
    check_shapiro_lopatinskii,
    single_mode_rhs,
    solve_halfspace_model,
)
from maxreg.opalg import FrequencyPoint, dirichlet_conditions, laplacian, neumann_conditions
from maxreg.randomized import (
    RademacherSampler,
    kahane_contraction_check,
    loglog_slope,
    translation_counterexample_curve,
)

TWO_PI = 2 * np.pi
SQRT2 = np.sqrt(2.0)

RESULTS = []


class Criterion:
    """Collects named checks and records a single verdict line."""

    def __init__(self, number, title, budget):
        self.number, self.title, self.budget = number, title, budget
        self.checks = []

    def check(self, label, ok, detail=""):
        self.checks.append((label, bool(ok), detail))

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is not None:
            self.check("completed without error", False, f"{exc_type.__name__}: {exc}")
        self.check(f"runtime < {self.budget:g} s", elapsed < self.budget, f"{elapsed:.2f} s")
        failed = [c for c in self.checks if not c[1]]
        verdict = "PASS" if not failed else "FAIL"
        line = f"[{verdict}] criterion {self.number}: {self.title} ({elapsed:.2f} s)"
        if failed:
            line += "; failing: " + "; ".join(f"{lab} [{det}]" if det else lab for lab, _, det in failed)
        RESULTS.append(line)
        if exc_type is None:
            assert not failed, line
        return False


def _bvp(name):
    cfg = load_fixture(name)
    return cfg.build_operator(), cfg.build_boundary()


# ---------------------------------------------------------------- 1

def test_criterion_1_ellipticity_constant():
    with Criterion(1, "heat c_p in [0.706, 0.7085]; anti-heat and Schroedinger fail", 5.0) as c:
        heat = check_parameter_ellipticity(laplacian(1), np.pi / 2, resolution=64, refine=True)
        c.check("heat c_p", 0.706 <= heat.c_p_estimate <= 0.7085, f"{heat.c_p_estimate:.6f}")
        c.check("heat passes", heat.passed)
        for name, coeff in (("anti-heat", -1.0), ("schroedinger", 1j)):
            v = check_parameter_ellipticity(laplacian(1, coeff), np.pi / 2, resolution=64, refine=True)
            c.check(f"{name} fails", not v.passed, f"c_p = {v.c_p_estimate:.3e}")


# ---------------------------------------------------------------- 2

def test_criterion_2_lopatinskii_classification():
    expected = {
        "laplace-dirichlet": True,
        "laplace-neumann": True,
        "bilaplace-dirichlet": True,
        "bilaplace-neumann": True,
        "tangential-derivative": False,
    }
    with Criterion(2, "Shapiro-Lopatinskii verdicts on the five boundary fixtures", 10.0) as c:
        for name, want in expected.items():
            op, bops = _bvp(name)
            rep = check_shapiro_lopatinskii(op, bops, np.pi / 2, resolution=48)
            c.check(f"{name} verdict", rep.passed is want, f"min |det| = {rep.min_abs_det:.3e}")
            if not want:
                c.check(f"{name} worst xi' = 0", np.allclose(rep.worst_point.xi, 0.0), str(rep.worst_point.xi))


# ---------------------------------------------------------------- 3

def test_criterion_3_poisson_symbols():
    names = ["laplace-dirichlet", "laplace-neumann", "bilaplace-dirichlet", "bilaplace-neumann"]
    with Criterion(3, "Poisson symbols: boundary duality < 1e-8, decay >= 0.5 <xi'>_lambda", 30.0) as c:
        rng = np.random.default_rng(0)
        for name in names:
            op, bops = _bvp(name)
            worst_bc, worst_decay = 0.0, np.inf
            for _ in range(20):
                xi = rng.normal(size=op.dim - 1)
                lam = rng.uniform(0.1, 2.0) * np.exp(1j * rng.uniform(-np.pi / 2, np.pi / 2))
                pt = FrequencyPoint(tuple(xi), lam)
                syms = build_poisson_symbols(op, bops, pt)
                worst_bc = max(worst_bc, max(s.bc_residual for s in syms))
                worst_decay = min(worst_decay, min(s.decay_rate for s in syms) / pt.bracket(op.order_2m))
            c.check(f"{name} boundary duality", worst_bc < 1e-8, f"{worst_bc:.2e}")
            c.check(f"{name} decay ratio", worst_decay >= 0.5, f"min rate / bracket = {worst_decay:.4f}")


# ---------------------------------------------------------------- 4

def _halfspace(kind, K):
    bops = dirichlet_conditions(2, 1) if kind == "dirichlet" else neumann_conditions(2, 1)
    rhs = single_mode_rhs(lambda x: np.exp(-x), (4,), (TWO_PI,), (1,), 20.0, K)
    return solve_halfspace_model(HalfSpaceProblem(laplacian(2), bops, 1.0, rhs, (TWO_PI,), 20.0))


def test_criterion_4_halfspace_resolvent():
    with Criterion(4, "half-space Laplacian matches the ODE oracle; residual order >= 1.8", 60.0) as c:
        phase = np.exp(1j * np.arange(4) * TWO_PI / 4)
        for kind in ("dirichlet", "neumann"):
            sol = _halfspace(kind, 8001)
            x = sol.x_normal
            # u'' - 2u = e^{-x} on the half-line for the mode |xi'| = 1, lambda = 1
            hom = np.exp(-SQRT2 * x) if kind == "dirichlet" else np.exp(-SQRT2 * x) / SQRT2
            exact = -np.exp(-x) + hom
            err = np.max(np.abs(sol.u - phase[:, None] * exact[None])) / np.max(np.abs(exact))
            c.check(f"{kind} oracle", err < 1e-6, f"relative error {err:.2e}")
            sizes = [501, 1001, 2001, 4001]
            res = [_halfspace(kind, K).interior_residual for K in sizes]
            order = np.polyfit(np.log([20.0 / (K - 1) for K in sizes]), np.log(res), 1)[0]
            c.check(f"{kind} residual order", order >= 1.8 and np.all(np.diff(res) < 0), f"{order:.3f}")


# ---------------------------------------------------------------- 5

def test_criterion_5_rbound_machinery():
    with Criterion(5, "translation curve, log-log slopes, Kahane contraction", 30.0) as c:
        curve = dict(translation_counterexample_curve(1, [4, 16]))
        c.check("p=1 ratios 2 and 4", abs(curve[4] - 2) < 1e-12 and abs(curve[16] - 4) < 1e-12,
                f"{curve[4]!r}, {curve[16]!r}")
        for p in (1, 4):
            slope = loglog_slope(translation_counterexample_curve(p, [4, 8, 16, 32, 64]))
            c.check(f"slope p={p}", abs(slope - (1 / p - 0.5)) <= 0.02, f"{slope:.4f}")
        rng = np.random.default_rng(2024)
        sampler = RademacherSampler(8)
        failures = 0
        for _ in range(1000):
            b = rng.normal(size=8) + 1j * rng.normal(size=8)
            a = b * rng.uniform(0, 1, 8) * np.exp(1j * rng.uniform(0, TWO_PI, 8))
            x = rng.normal(size=(8, 16))
            failures += not kahane_contraction_check(a, b, x, p=2.0, sampler=sampler).satisfied
        c.check("Kahane contraction on 1000 trials", failures == 0, f"{failures} failures")


# ---------------------------------------------------------------- 6

def test_criterion_6_besov_machinery():
    with Criterion(6, "reconstruction, single block, B = F, Mikhlin verdicts", 20.0) as c:
        rng = np.random.default_rng(6)
        system = build_dyadic_system((64, 64), TWO_PI)
        u = GridFunction(rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64)), TWO_PI)
        defect = np.max(np.abs(system.decompose(u).sum(axis=0) - u.values))
        c.check("block reconstruction", defect < 1e-10, f"{defect:.2e}")

        sys1 = build_dyadic_system((64,), TWO_PI)
        v = GridFunction.from_function(lambda x: np.cos(7 * x), (64,), TWO_PI)
        worst = 0.0
        for s in (-1.0, 0.5, 2.0):
            for p in (1.0, 2.0, np.inf):
                want = 2 ** (3 * s) * v.lp_norm(p)
                worst = max(worst, abs(besov_norm(v, s, p, 2.0, sys1) - want) / want)
        c.check("single-block norm", worst < 1e-10, f"{worst:.2e}")

        worst = 0.0
        for s in (-0.5, 1.0):
            for p in (1.0, 2.0, 3.0):
                b = besov_norm(u, s, p, p, system)
                f = triebel_lizorkin_norm(u, s, p, p, system)
                worst = max(worst, abs(b - f) / b)
        c.check("B = F for p = q", worst < 1e-10, f"{worst:.2e}")

        for alpha in [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]:
            a = np.array(alpha)
            rep = mikhlin_check(lambda xi, a=a: np.prod(xi**a, axis=-1) / (1 + np.sum(xi**2, axis=-1)), 2)
            c.check(f"m_alpha {alpha} passes", rep.passed, f"C_M = {rep.c_m_estimate:.3f}")
        rep = mikhlin_check(lambda xi: np.linalg.norm(xi, axis=-1), 2)
        c.check("|xi| fails", not rep.passed, f"estimates {rep.level_estimates}")


# ---------------------------------------------------------------- 7

def test_criterion_7_linear_solver(tmp_path):
    with Criterion(7, "single-mode heat exact; forced-heat MR ratio stable within 5%", 30.0) as c:
        u0 = GridFunction.from_function(np.sin, (32,), TWO_PI)
        traj = solve_linear_parabolic(laplacian(1), None, u0, 1.0, steps=25)
        exact = np.exp(-traj.times)[:, None] * u0.values[None]
        err = np.max(np.abs(traj.values - exact))
        c.check("single-mode heat", err < 1e-10, f"{err:.2e}")

        base = load_fixture("forced-heat").to_dict()
        ratios = []
        for level in range(4):
            d = json.loads(json.dumps(base))
            d["discretization"]["grid"] = [base["discretization"]["grid"][0] * 2**level]
            d["discretization"]["steps"] = base["discretization"]["steps"] * 2**level
            path = tmp_path / f"forced{level}.yaml"
            path.write_text(ProblemConfig.from_dict(d).to_yaml())
            out = tmp_path / f"out{level}"
            code = run(["solve-linear", "--config", str(path), "--out", str(out)])
            ratios.append(json.loads((out / "report.json").read_text())["quantities"]["maximal_regularity_ratio"])
            c.check(f"forced-heat level {level} exit 0", code == 0)
        spread = max(abs(r / ratios[0] - 1) for r in ratios)
        c.check("MR ratio stability", spread <= 0.05, f"ratios {[round(r, 6) for r in ratios]}")


# ---------------------------------------------------------------- 8

def test_criterion_8_quasilinear_solver():
    with Criterion(8, "MCF flat/constant data, grim-reaper contraction and residual, uniqueness", 180.0) as c:
        for value in (0.0, 1.25):
            prob = mean_curvature_problem(GridFunction(np.full((16, 16), value), TWO_PI))
            traj, _ = solve_quasilinear(prob, T=0.1, dt=1e-2)
            err = np.max(np.abs(traj.values - value))
            c.check(f"constant data {value}", err <= 4 * np.finfo(float).eps * max(1.0, value), f"{err:.1e}")

        tol = 1e-10
        prob = mean_curvature_problem(grim_reaper_window(256), horizon_T0=0.1)
        a, rep = solve_quasilinear(prob, T=0.1, dt=1e-3, tol=tol, max_iter=60)
        c.check("grim reaper converged", rep.converged)
        c.check("contraction factor < 0.5", rep.contraction_factor < 0.5, f"{rep.contraction_factor:.4f}")
        res = pde_residual(prob, a)
        c.check("PDE residual < 1e-4", res < 1e-4, f"{res:.3e}")
        b, rep_b = solve_quasilinear(prob, T=0.1, dt=1e-3, tol=tol, max_iter=60, start="initial")
        gap = e_norm((a.values - b.values).real, a.dt, a.box_length)
        c.check("uniqueness probe", rep_b.converged and gap < 10 * tol, f"{gap:.2e}")


# ---------------------------------------------------------------- 9

def test_criterion_9_smoothing():
    with Criterion(9, "rough heat: H^4 at t = 0.1 stable, H^4 at t = 0 grows > 4x", 60.0) as c:
        late, initial = [], []
        for n in (128, 256):
            u0 = rough_initial_data((n,), TWO_PI, exponent=1.55)
            traj = solve_linear_parabolic(laplacian(1), None, u0, 0.1, steps=10)
            rows = smoothing_diagnostic(traj, orders=(4,), times=[0.0, 0.1])
            initial.append(rows[0]["H^4"])
            late.append(rows[1]["H^4"])
        c.check("H^4(0.1) ratio < 1.1", late[1] / late[0] < 1.1, f"{late[1] / late[0]:.6f}")
        c.check("H^4(0) growth > 4", initial[1] / initial[0] > 4, f"{initial[1] / initial[0]:.3f}")
