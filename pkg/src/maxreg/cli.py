"""Command-line front end: YAML problem configs in, JSON reports and CSV/binary artifacts out.

Exit statuses: 0 success or passing verdict, 1 failing verdict (a valid
mathematical answer), 2 usage or configuration error, 3 numerical-accuracy
error.
"""

import argparse
import copy
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .ellipticity import check_parameter_ellipticity
from .evolution import (
    grim_reaper_window,
    maximal_regularity_ratio,
    mean_curvature_problem,
    pde_residual,
    rough_initial_data,
    smoothing_diagnostic,
    solve_linear_parabolic,
    solve_quasilinear,
)
from .exceptions import (
    ConfigError,
    ContourGeometryError,
    ImproperSplitError,
    NoLocalSolutionError,
    NumericalAccuracyError,
    ParabolicityError,
)
from .fourier import (
    GridFunction,
    besov_norm,
    bessel_norm,
    build_dyadic_system,
    mikhlin_check,
    read_grid,
    resolvent_symbol,
    triebel_lizorkin_norm,
    write_grid,
)
from .lopatinskii import (
    HalfSpaceProblem,
    build_poisson_symbols,
    check_shapiro_lopatinskii,
    single_mode_rhs,
    solve_halfspace_model,
)
from .opalg import BoundaryOperator, DifferentialOperator, FrequencyPoint
from .randomized import (
    OperatorFamilySpec,
    RademacherSampler,
    estimate_rbound,
    loglog_slope,
    translation_counterexample_curve,
)

KINDS = (
    "check-ellipticity",
    "check-lopatinskii",
    "solve-halfspace",
    "estimate-rbound",
    "besov-norm",
    "mikhlin-check",
    "solve-linear",
    "solve-quasilinear",
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

_DEFAULT_RESOLUTION = {
    "check-ellipticity": 64,
    "check-lopatinskii": 48,
    "mikhlin-check": 8,
}


# ------------------------------------------------------------ config parsing

def _complex(v, where="coefficient"):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"{where}: expected a number or an [re, im] pair, got {v!r}")


def _pair(z):
    z = complex(z)
    return [float(z.real), float(z.imag)]


def _coefficient(v):
    """Scalar ``[re, im]`` or a square matrix of ``[re, im]`` pairs."""
    if isinstance(v, (list, tuple)) and v and isinstance(v[0], (list, tuple)) and v[0] and isinstance(v[0][0], (list, tuple)):
        return np.array([[_complex(z) for z in row] for row in v])
    return _complex(v)


def _coefficient_repr(c):
    if np.ndim(c) == 0 or np.size(c) == 1:
        return _pair(np.ravel(c)[0])
    return [[_pair(z) for z in row] for row in np.asarray(c)]


def _terms(entries, where):
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{where}: 'terms' must be a non-empty list")
    out = []
    for e in entries:
        if not isinstance(e, dict) or "index" not in e or "coeff" not in e:
            raise ConfigError(f"{where}: each term needs 'index' and 'coeff'")
        idx = e["index"]
        if not isinstance(idx, list) or not all(isinstance(i, int) and i >= 0 for i in idx):
            raise ConfigError(f"{where}: multi-index must be a list of non-negative integers")
        out.append({"index": list(idx), "coeff": _coefficient_repr(_coefficient(e["coeff"]))})
    return out


def _canonical_operator(spec):
    if spec is None:
        return None
    if not isinstance(spec, dict):
        raise ConfigError("operator: expected a mapping")
    try:
        dim, order_2m = int(spec["dim"]), int(spec["order_2m"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("operator: 'dim' and 'order_2m' are required integers") from exc
    out = {"dim": dim, "order_2m": order_2m, "terms": _terms(spec.get("terms"), "operator")}
    if spec.get("system_size") is not None:
        out["system_size"] = int(spec["system_size"])
    return out


def _canonical_boundary(spec):
    if spec is None:
        return []
    if not isinstance(spec, list):
        raise ConfigError("boundary: expected a list of boundary operators")
    out = []
    for j, b in enumerate(spec):
        if not isinstance(b, dict) or "order" not in b:
            raise ConfigError(f"boundary[{j}]: 'order' is required")
        out.append({"order": int(b["order"]), "terms": _terms(b.get("terms"), f"boundary[{j}]")})
    return out


def _section(d, name):
    v = d.get(name) or {}
    if not isinstance(v, dict):
        raise ConfigError(f"{name}: expected a mapping")
    return copy.deepcopy(v)


@dataclass
class ProblemConfig:
    """Parsed problem description.

    Parsing normalizes complex numbers to ``[re, im]`` pairs and multi-indices
    to integer lists, so ``ProblemConfig.from_dict(c.to_dict())`` reproduces
    ``c`` exactly.
    """

    kind: str
    operator: dict = None
    boundary: list = field(default_factory=list)
    discretization: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - {"kind", "operator", "boundary", "discretization", "numerics", "parameters", "output"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"unknown problem kind {kind!r}")
        numerics = _section(d, "numerics")
        numerics.setdefault("seed", 0)
        return cls(
            kind=kind,
            operator=_canonical_operator(d.get("operator")),
            boundary=_canonical_boundary(d.get("boundary")),
            discretization=_section(d, "discretization"),
            numerics=numerics,
            parameters=_section(d, "parameters"),
            output=_section(d, "output"),
        )

    def to_dict(self):
        out = {"kind": self.kind}
        if self.operator is not None:
            out["operator"] = copy.deepcopy(self.operator)
        if self.boundary:
            out["boundary"] = copy.deepcopy(self.boundary)
        for name in ("discretization", "numerics", "parameters", "output"):
            sec = getattr(self, name)
            if sec:
                out[name] = copy.deepcopy(sec)
        return out

    @classmethod
    def from_yaml(cls, text):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        return cls.from_dict(data)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_yaml(text)

    def build_operator(self):
        if self.operator is None:
            raise ConfigError(f"{self.kind} needs an 'operator' section")
        spec = self.operator
        terms = {}
        for t in spec["terms"]:
            c = _coefficient(t["coeff"])
            key = tuple(t["index"])
            terms[key] = terms[key] + c if key in terms else c
        try:
            return DifferentialOperator(spec["dim"], spec["order_2m"], terms, spec.get("system_size"))
        except ValueError as exc:
            raise ConfigError(f"operator: {exc}") from exc

    def build_boundary(self):
        dim = self.operator["dim"] if self.operator else None
        ops = []
        for j, b in enumerate(self.boundary):
            terms = {}
            for t in b["terms"]:
                key = tuple(t["index"])
                terms[key] = terms.get(key, 0j) + _complex(t["coeff"])
            try:
                ops.append(BoundaryOperator(dim, b["order"], terms))
            except ValueError as exc:
                raise ConfigError(f"boundary[{j}]: {exc}") from exc
        return ops

    def validate(self):
        """Build every referenced object once so errors surface before dispatch."""
        if self.operator is not None:
            self.build_operator()
            self.build_boundary()
        elif self.boundary:
            raise ConfigError("boundary operators need an operator section")


# ------------------------------------------------------- value conversion

def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (complex, np.complexfloating)):
        return _jsonable(_pair(v))
    if v is None or isinstance(v, str):
        return v
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _point(pt):
    return {"xi": list(pt.xi), "lambda": _pair(pt.lam)}


def _param(cfg, name, default=None):
    return cfg.parameters.get(name, default)


def _disc(cfg, name, default=None):
    return cfg.discretization.get(name, default)


def _num(cfg, name, default=None):
    v = cfg.numerics.get(name)
    return default if v is None else v


def _grid_shape(cfg, default):
    dims = tuple(int(n) for n in _disc(cfg, "grid", default))
    box = _disc(cfg, "box_length", [2 * np.pi] * len(dims))
    if np.ndim(box) == 0:
        box = [box] * len(dims)
    box = tuple(float(b) for b in box)
    if len(box) != len(dims):
        raise ConfigError("discretization: one box length per grid axis is required")
    return dims, box


def _trig_field(spec, dims, box, where):
    """Sum of modes ``[k, cos amplitude, sin amplitude]`` along the first axis."""
    x = np.meshgrid(*[np.arange(n) * L / n for n, L in zip(dims, box)], indexing="ij")[0]
    out = np.zeros(dims)
    for entry in spec.get("modes", []):
        if len(entry) != 3:
            raise ConfigError(f"{where}: modes are [k, cos_amplitude, sin_amplitude]")
        k, a, b = entry
        w = 2 * np.pi * k / box[0]
        out += a * np.cos(w * x) + b * np.sin(w * x)
    return out


def _grid_function(spec, dims, box, seed, where):
    spec = spec or {"kind": "zero"}
    kind = spec.get("kind")
    if kind == "zero":
        return GridFunction(np.zeros(dims), box)
    if kind == "trig":
        return GridFunction(_trig_field(spec, dims, box, where), box)
    if kind == "rough":
        if len(dims) != 1:
            raise ConfigError(f"{where}: rough data is one-dimensional")
        return rough_initial_data(dims, box, float(spec.get("exponent", 1.55)), seed=int(spec.get("seed", seed)))
    if kind == "constant":
        return GridFunction(np.full(dims, float(spec.get("value", 0.0))), box)
    if kind == "gaussian":
        coords = np.meshgrid(*[np.arange(n) * L / n - L / 2 for n, L in zip(dims, box)], indexing="ij")
        width = float(spec.get("width", 0.5))
        r2 = sum(c**2 for c in coords)
        return GridFunction(np.exp(-r2 / (2 * width**2)), box)
    if kind == "grim-reaper":
        if len(dims) != 1:
            raise ConfigError(f"{where}: the grim-reaper window is one-dimensional")
        try:
            return grim_reaper_window(dims[0], float(spec.get("window", 0.5)), float(spec.get("ramp", 0.9)), box[0])
        except ConfigError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if kind == "file":
        return read_grid(spec["path"])
    raise ConfigError(f"{where}: unknown grid-function kind {kind!r}")


# ---------------------------------------------------------------- runners

@dataclass
class Outcome:
    passed: bool
    quantities: dict = field(default_factory=dict)
    worst_points: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    status: str = ""


def _run_ellipticity(cfg):
    op = cfg.build_operator()
    phi = float(_param(cfg, "angle_phi", np.pi / 2))
    v = check_parameter_ellipticity(
        op, phi, resolution=int(_num(cfg, "resolution")), tol=float(_num(cfg, "tol")),
        refine=bool(_param(cfg, "refine", True)),
    )
    rec = v.as_record()
    return Outcome(
        v.passed,
        quantities={"c_p_estimate": v.c_p_estimate, "angle_phi": phi, "samples_used": v.samples_used},
        worst_points=[_point(v.worst_point)],
        status=rec["status"],
    )


def _run_lopatinskii(cfg):
    op, bops = cfg.build_operator(), cfg.build_boundary()
    phi = float(_param(cfg, "angle_phi", np.pi / 2))
    rep = check_shapiro_lopatinskii(op, bops, phi, resolution=int(_num(cfg, "resolution")), tol=float(_num(cfg, "tol")))
    rec = rep.as_record()
    out = Outcome(
        rep.passed,
        quantities={"min_abs_det": rep.min_abs_det, "samples_used": rep.samples_used, "improper_split": rec["improper_split"]},
        worst_points=[{**_point(rep.worst_point), "matrix": rec["matrix_at_worst"]}],
        status=rec["status"],
    )
    samples = int(_param(cfg, "poisson_samples", 0))
    if rep.passed and samples:
        rng = np.random.default_rng(int(_num(cfg, "seed")))
        rows = []
        for i in range(samples):
            xi = rng.normal(size=op.dim - 1)
            lam = rng.uniform(0.1, 2.0) * np.exp(1j * rng.uniform(-phi, phi))
            syms = build_poisson_symbols(op, bops, FrequencyPoint(tuple(xi), lam))
            rows.append({
                "sample": i,
                "bc_residual": max(s.bc_residual for s in syms),
                "decay_rate": min(s.decay_rate for s in syms),
                "bracket": FrequencyPoint(tuple(xi), lam).bracket(op.order_2m),
            })
        out.residuals["poisson_bc_residual_max"] = max(r["bc_residual"] for r in rows)
        out.quantities["poisson_min_decay_over_bracket"] = min(r["decay_rate"] / r["bracket"] for r in rows)
        out.tables["poisson.csv"] = rows
    return out


def _run_halfspace(cfg):
    op, bops = cfg.build_operator(), cfg.build_boundary()
    lam = _complex(_param(cfg, "lambda", 1.0), "parameters.lambda")
    tdims = tuple(int(n) for n in _disc(cfg, "tangential_grid", [4] * (op.dim - 1)))
    tlen = tuple(float(v) for v in _disc(cfg, "tangential_lengths", [2 * np.pi] * (op.dim - 1)))
    mode = tuple(int(k) for k in _param(cfg, "mode", [1] * (op.dim - 1)))
    x_max = float(_disc(cfg, "x_max", 20.0))
    K = int(_disc(cfg, "normal_points", 8001))
    profile = _param(cfg, "profile", {"kind": "exp", "rate": 1.0})
    if profile.get("kind") != "exp":
        raise ConfigError("parameters.profile: only 'exp' profiles are supported")
    rate = float(profile.get("rate", 1.0))
    rhs = single_mode_rhs(lambda x: np.exp(-rate * x), tdims, tlen, mode, x_max, K)
    prob = HalfSpaceProblem(op, bops, lam, rhs, tlen, x_max)
    sol = solve_halfspace_model(prob, accuracy_threshold=float(_param(cfg, "accuracy_threshold", 1e-3)))
    line = sol.u[(0,) * (op.dim - 1)]
    rows = [{"x": float(x), "re_u": float(z.real), "im_u": float(z.imag)} for x, z in zip(sol.x_normal, line)]
    return Outcome(
        True,
        quantities={"modes": sol.modes, "normal_points": K, "x_max": x_max},
        residuals={k: v for k, v in sol.as_record().items() if k.endswith("residual")},
        tables={"profile.csv": rows},
    )


def _family(spec, seed):
    kind = spec.get("kind")
    if kind == "translations":
        return OperatorFamilySpec.translations(spec["shifts"])
    if kind == "scalars":
        return OperatorFamilySpec.scalar_multipliers([_complex(v) for v in spec["values"]])
    if kind == "random-scalars":
        return OperatorFamilySpec.random_scalar_multipliers(float(spec["bound"]), int(spec["count"]), seed)
    raise ConfigError(f"parameters.family: unknown kind {kind!r}")


def _vectors(spec, seed):
    kind = spec.get("kind", "indicators")
    count, length = int(spec.get("count", 8)), int(spec.get("length", 64))
    if kind == "indicators":
        width = int(spec.get("width", 1))
        stride = int(spec.get("stride", width))
        vecs = np.zeros((count, length))
        for j in range(count):
            start = (j * stride) % length
            vecs[j, start:start + width] = 1.0
        return vecs
    if kind == "random":
        return np.random.default_rng(seed).normal(size=(count, length))
    raise ConfigError(f"parameters.vectors: unknown kind {kind!r}")


def _run_rbound(cfg):
    seed = int(_num(cfg, "seed"))
    family = _family(_param(cfg, "family", {}), seed)
    vecs = _vectors(_param(cfg, "vectors", {}), seed)
    samp = _param(cfg, "sampler", {"mode": "exact"})
    sampler = RademacherSampler(len(vecs), samp.get("mode", "exact"), seed=seed, trials=int(samp.get("trials", 4096)))
    p = float(_param(cfg, "p", 2.0))
    space_p = float(_param(cfg, "space_p", 2.0))
    est = estimate_rbound(family, vecs, p, sampler, space_p, int(_param(cfg, "selections", 32)), seed)
    out = Outcome(
        True,
        quantities={"rbound_lower_estimate": est.ratio_max, "selections_tried": est.trials, "p": p, "space_p": space_p},
        worst_points=[{"witness_selection": [int(i) for i in est.witnesses]}],
        tables={"trials.csv": [{"trial": i, "ratio": r} for i, r in enumerate(est.ratios)]},
        status=est.as_record()["interpretation"],
    )
    curve = _param(cfg, "curve")
    if curve:
        cp = float(curve.get("p", 1.0))
        pts = translation_counterexample_curve(cp, [int(n) for n in curve.get("N", [4, 8, 16, 32, 64])])
        out.quantities["curve_p"] = cp
        out.quantities["curve_slope"] = loglog_slope(pts)
        out.quantities["curve_expected_slope"] = 1 / cp - 0.5
        out.tables["curve.csv"] = [{"N": n, "ratio": r} for n, r in pts]
    return out


def _run_besov(cfg):
    dims, box = _grid_shape(cfg, [128])
    u = _grid_function(_param(cfg, "function", {"kind": "gaussian"}), dims, box, int(_num(cfg, "seed")), "parameters.function")
    s, p, q = (float(_param(cfg, k, d)) for k, d in (("s", 1.0), ("p", 2.0), ("q", 2.0)))
    system = build_dyadic_system(u.dims, u.box_length, tol=float(_num(cfg, "tol", 1e-12)))
    return Outcome(
        True,
        quantities={
            "besov": besov_norm(u, s, p, q, system),
            "triebel_lizorkin": triebel_lizorkin_norm(u, s, p, q, system),
            "bessel": bessel_norm(u, s, p),
            "levels": system.levels,
            "s": s, "p": p, "q": q,
        },
        grids={"input.grdf": u},
    )


def _multiplier(spec, cfg):
    kind = spec.get("kind")
    if kind == "bessel-ratio":
        alpha = np.array(spec.get("alpha", [1]), dtype=float)

        def m(xi):
            return np.prod(xi**alpha, axis=-1) / (1 + np.sum(xi**2, axis=-1))

        return m, len(alpha)
    if kind == "abs":
        return (lambda xi: np.linalg.norm(xi, axis=-1)), int(spec.get("dim", 1))
    if kind == "riesz":
        j = int(spec.get("component", 0))
        return (lambda xi: xi[..., j] / np.linalg.norm(xi, axis=-1)), int(spec.get("dim", 1))
    if kind == "resolvent":
        op = cfg.build_operator()
        lam = _complex(spec.get("lambda", 1.0), "parameters.multiplier.lambda")
        return resolvent_symbol(op, lam), op.dim
    raise ConfigError(f"parameters.multiplier: unknown kind {kind!r}")


def _run_mikhlin(cfg):
    m, dim = _multiplier(_param(cfg, "multiplier", {}), cfg)
    rep = mikhlin_check(
        m, dim, condition=_param(cfg, "condition", "mikhlin"),
        per_octave=int(_num(cfg, "resolution")), directions=int(_param(cfg, "directions", 16)),
    )
    rec = rep.as_record()
    return Outcome(
        rep.passed,
        quantities={"c_m_estimate": rep.c_m_estimate, "level_estimates": rep.level_estimates, "condition": rep.condition},
        worst_points=[{"xi": rec["worst_xi"]}],
        status=rec["status"],
    )


def _run_linear(cfg):
    op = cfg.build_operator()
    dims, box = _grid_shape(cfg, [64] * op.dim)
    seed = int(_num(cfg, "seed"))
    u0 = _grid_function(_param(cfg, "initial"), dims, box, seed, "parameters.initial")
    fspec = _param(cfg, "forcing")
    f = None if not fspec or fspec.get("kind") == "zero" else _grid_function(fspec, dims, box, seed, "parameters.forcing").values
    T = float(_disc(cfg, "T", 1.0))
    steps = _disc(cfg, "steps")
    p = float(_param(cfg, "p", 2.0))
    traj = solve_linear_parabolic(op, f, u0, T, steps=steps, p=p)
    q = {"steps": len(traj.times) - 1, "T": T}
    try:
        q["maximal_regularity_ratio"] = maximal_regularity_ratio(traj)
    except ValueError:
        q["maximal_regularity_ratio"] = None
    orders = _param(cfg, "smoothing_orders")
    tables = {"norms.csv": traj.norm_table()}
    if orders:
        tables["smoothing.csv"] = smoothing_diagnostic(traj, orders=tuple(orders))
    every = max(1, int(_param(cfg, "save_every", len(traj.times) - 1)))
    grids = {f"trajectory/slice_{i:05d}.grdf": traj.slice(i) for i in range(0, len(traj.times), every)}
    grids["trajectory/final.grdf"] = traj.final
    return Outcome(True, quantities=q, tables=tables, grids=grids)


def _run_quasilinear(cfg):
    name = _param(cfg, "problem", "mean-curvature-flow")
    if name != "mean-curvature-flow":
        raise ConfigError(f"parameters.problem: unknown problem {name!r}")
    dims, box = _grid_shape(cfg, [256])
    u0 = _grid_function(_param(cfg, "initial", {"kind": "grim-reaper"}), dims, box, int(_num(cfg, "seed")), "parameters.initial")
    T = float(_disc(cfg, "T", 0.1))
    problem = mean_curvature_problem(u0, T, float(_param(cfg, "p", 2.0)))
    try:
        traj, rep = solve_quasilinear(
            problem, T=T, dt=_disc(cfg, "dt"), steps=_disc(cfg, "steps"),
            max_iter=int(_param(cfg, "max_iter", 50)), tol=float(_num(cfg, "tol", 1e-10)),
        )
    except NoLocalSolutionError as exc:
        return Outcome(False, quantities={"T": T}, status=f"no local solution: {exc}")
    residual = pde_residual(problem, traj)
    rec = rep.as_record()
    return Outcome(
        rep.converged,
        quantities={k: rec[k] for k in ("contraction_factor", "converged", "halvings", "T", "max_distance_to_reference", "p_at_or_below_n_plus_2")},
        residuals={"pde_residual": residual, "last_increment": rep.iterates[-1] if rep.iterates else None},
        tables={"norms.csv": traj.norm_table(), "contraction.csv": [{"iteration": i + 1, "increment": d} for i, d in enumerate(rep.iterates)]},
        grids={"final.grdf": traj.final},
    )


RUNNERS = {
    "check-ellipticity": _run_ellipticity,
    "check-lopatinskii": _run_lopatinskii,
    "solve-halfspace": _run_halfspace,
    "estimate-rbound": _run_rbound,
    "besov-norm": _run_besov,
    "mikhlin-check": _run_mikhlin,
    "solve-linear": _run_linear,
    "solve-quasilinear": _run_quasilinear,
}


# ------------------------------------------------------------- artifacts

def _write_csv(path, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    keys = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})


def build_report(cfg, outcome):
    return _jsonable({
        "verdict": "pass" if outcome.passed else "fail",
        "kind": cfg.kind,
        "status": outcome.status,
        "quantities": outcome.quantities,
        "worst_points": outcome.worst_points,
        "residuals": outcome.residuals,
        "config": cfg.to_dict(),
    })


def dumps_report(report):
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def emit(cfg, outcome, out_dir, elapsed):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = build_report(cfg, outcome)
    (out_dir / "report.json").write_text(dumps_report(report))
    for name, rows in outcome.tables.items():
        _write_csv(out_dir / name, rows)
    for name, gf in outcome.grids.items():
        (out_dir / name).parent.mkdir(parents=True, exist_ok=True)
        write_grid(out_dir / name, gf)
    meta = {
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "elapsed_seconds": elapsed,
        "version": __version__,
        "artifacts": sorted(["report.json", *outcome.tables, *outcome.grids]),
    }
    (out_dir / "metadata.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return report


# ------------------------------------------------------------------- entry

def fixture_names():
    return sorted(p.name[:-5] for p in resources.files("maxreg.fixtures").iterdir() if p.name.endswith(".yaml"))


def load_fixture(name):
    path = resources.files("maxreg.fixtures") / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown fixture {name!r}; available: {', '.join(fixture_names())}")
    return ProblemConfig.from_yaml(path.read_text())


def resolve(cfg, args):
    """Apply command-line overrides and fill defaults; the result is echoed in the report."""
    cfg = copy.deepcopy(cfg)
    num = cfg.numerics
    if args.seed is not None:
        num["seed"] = args.seed
    if args.resolution is not None:
        num["resolution"] = args.resolution
    if args.tol is not None:
        num["tol"] = args.tol
    if cfg.kind in _DEFAULT_RESOLUTION:
        num.setdefault("resolution", _DEFAULT_RESOLUTION[cfg.kind])
    if cfg.kind in ("check-ellipticity", "check-lopatinskii"):
        num.setdefault("tol", 1e-8)
    if args.out is not None:
        cfg.output["directory"] = str(args.out)
    cfg.output.setdefault("directory", "out")
    return cfg


def build_parser():
    parser = argparse.ArgumentParser(prog="maxreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", type=Path, help="YAML problem description")
        src.add_argument("--fixture", help="name of a bundled config")
        sp.add_argument("--out", type=Path, help="output directory (default from config, else ./out)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--resolution", type=int)
        sp.add_argument("--tol", type=float)
    return parser


def run(argv=None):
    """Parse ``argv``, run one subcommand and write its artifacts; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = load_fixture(args.fixture) if args.fixture else ProblemConfig.load(args.config)
        if cfg.kind != args.command:
            raise ConfigError(f"config describes {cfg.kind!r}, not {args.command!r}")
        cfg = resolve(cfg, args)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    start = time.perf_counter()
    try:
        outcome = RUNNERS[cfg.kind](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalAccuracyError, ContourGeometryError) as exc:
        print(f"numerical accuracy error: {exc}", file=sys.stderr)
        outcome = Outcome(False, status=f"numerical accuracy error: {exc}")
        emit(cfg, outcome, cfg.output["directory"], time.perf_counter() - start)
        return EXIT_NUMERIC
    except (ParabolicityError, ImproperSplitError) as exc:
        outcome = Outcome(False, status=str(exc))
    elapsed = time.perf_counter() - start
    report = emit(cfg, outcome, cfg.output["directory"], elapsed)
    print(f"{cfg.kind}: {report['verdict']} -> {cfg.output['directory']}/report.json")
    return EXIT_OK if outcome.passed else EXIT_FAIL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
