"""Rademacher averages, sampled R-bounds and square-function quotients.

Vectors live in discrete model spaces: arrays on a finite index line with
counting measure, normed by ``l^q``.  Rademacher averages use an outer
exponent ``p``::

    ||sum_j eps_j x_j||_{Rad_p} = (E ||sum_j eps_j x_j||_q^p)^{1/p}

Estimated R-bounds are lower bounds for the true value: only finitely many
selections from the family are ever tried.
"""

from dataclasses import dataclass, field

import numpy as np

MAX_EXACT_N = 20


def rademacher_eval(n, t):
    """``r_n(t) = sign sin(2^n pi t)``, with the value ``+1`` at its zeros."""
    if n < 1:
        raise ValueError("Rademacher index starts at 1")
    s = np.ldexp(np.asarray(t, dtype=float), n)
    k = np.floor(s)
    out = np.where(k % 2 == 0, 1, -1)
    out = np.where(s == k, 1, out)
    return out if out.ndim else int(out)


class RademacherSampler:
    """Source of sign vectors ``(eps_1..eps_N)`` with weights summing to one.

    ``mode="exact"`` evaluates ``r_1..r_N`` at the midpoints of the ``2^N``
    dyadic intervals of ``[0, 1]``, which realizes every sign pattern once.
    ``mode="monte-carlo"`` draws ``trials`` independent patterns from a
    seeded generator.
    """

    def __init__(self, count_N, mode="exact", seed=0, trials=4096):
        if count_N < 1:
            raise ValueError("need at least one sign")
        if mode not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown sampling mode {mode!r}")
        if mode == "exact" and count_N > MAX_EXACT_N:
            raise ValueError(f"exact enumeration is limited to N <= {MAX_EXACT_N}")
        self.count_N = count_N
        self.mode = mode
        self.seed = seed
        self.trials = trials

    def signs(self):
        N = self.count_N
        if self.mode == "exact":
            t = (np.arange(2**N) + 0.5) / 2**N
            eps = np.stack([rademacher_eval(n, t) for n in range(1, N + 1)], axis=1)
        else:
            rng = np.random.default_rng(self.seed)
            eps = rng.choice(np.array([-1, 1]), size=(self.trials, N))
        weights = np.full(eps.shape[0], 1.0 / eps.shape[0])
        return eps.astype(float), weights

    def describe(self):
        if self.mode == "exact":
            return {"mode": "exact", "N": self.count_N}
        return {"mode": "monte-carlo", "N": self.count_N, "seed": self.seed, "trials": self.trials}


def lq_norm(values, q, axis=-1):
    a = np.abs(values)
    if np.isinf(q):
        return a.max(axis=axis)
    return (a**q).sum(axis=axis) ** (1.0 / q)


def rademacher_norm(vectors, p, sampler=None, space_p=2.0):
    """``(E ||sum_j eps_j x_j||_q^p)^{1/p}`` for rows ``x_j`` of ``vectors``."""
    vectors = np.asarray(vectors)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    sampler = RademacherSampler(len(vectors)) if sampler is None else sampler
    if sampler.count_N != len(vectors):
        raise ValueError("sampler size differs from the number of vectors")
    eps, weights = sampler.signs()
    sums = eps @ vectors.reshape(len(vectors), -1)
    norms = lq_norm(sums, space_p)
    return float((weights @ norms**p) ** (1.0 / p))


# ------------------------------------------------------------------ families

def _shift(x, k):
    out = np.zeros_like(x)
    if k >= 0:
        out[k:] = x[: len(x) - k] if k else x
    else:
        out[:k] = x[-k:]
    return out


@dataclass
class OperatorFamilySpec:
    """A finite family of operators on arrays of a fixed length.

    Build instances with :meth:`translations`, :meth:`scalar_multipliers`,
    :meth:`fourier_multipliers` or :meth:`explicit_matrices`.
    """

    kind: str
    members: list
    parameters: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.members)

    def apply(self, index, x):
        return self.members[index](x)

    @classmethod
    def translations(cls, shifts):
        shifts = [int(s) for s in shifts]
        members = [lambda x, s=s: _shift(x, s) for s in shifts]
        return cls("translations", members, {"shifts": shifts})

    @classmethod
    def scalar_multipliers(cls, values):
        """Multiplication by the given (complex) scalars."""
        values = [complex(v) for v in values]
        members = [lambda x, v=v: v * x for v in values]
        bound = max(abs(v) for v in values) if values else 0.0
        return cls("scalar-multipliers", members, {"values": values, "bound": bound})

    @classmethod
    def random_scalar_multipliers(cls, bound, count, seed=0):
        """``count`` scalars in the disc of radius ``bound``; the first one is ``bound``."""
        rng = np.random.default_rng(seed)
        mags = bound * np.sqrt(rng.uniform(0, 1, count))
        phases = rng.uniform(0, 2 * np.pi, count)
        mags[0], phases[0] = bound, 0.0
        return cls.scalar_multipliers(mags * np.exp(1j * phases))

    @classmethod
    def fourier_multipliers(cls, symbols):
        """Periodic multipliers ``F^{-1} m F`` with symbol samples on the FFT grid."""
        symbols = [np.asarray(s) for s in symbols]
        members = [lambda x, s=s: np.fft.ifft(s * np.fft.fft(x)) for s in symbols]
        return cls("fourier-multiplier-family", members, {"count": len(symbols)})

    @classmethod
    def explicit_matrices(cls, matrices):
        mats = [np.asarray(m) for m in matrices]
        members = [lambda x, m=m: m @ x for m in mats]
        return cls("explicit-matrices", members, {"count": len(mats)})

    @classmethod
    def identity(cls):
        return cls("explicit-matrices", [lambda x: x], {"identity": True})


@dataclass
class RBoundEstimate:
    p: float
    ratio_max: float
    trials: int
    witnesses: list
    ratios: list = field(default_factory=list)
    space_p: float = 2.0
    sampler: dict = field(default_factory=dict)

    @property
    def lower_bound(self):
        return self.ratio_max

    def as_record(self):
        return {
            "p": self.p,
            "space_p": self.space_p,
            "ratio_max": self.ratio_max,
            "trials": self.trials,
            "witness_selection": [int(i) for i in self.witnesses],
            "sampler": self.sampler,
            "interpretation": "lower bound on the R-bound; sampling cannot certify unboundedness",
        }


def estimate_rbound(family, vectors, p=2.0, sampler=None, space_p=2.0, selections=32, seed=0):
    """Largest observed quotient ``||sum eps_j T_j x_j|| / ||sum eps_j x_j||``.

    The first selection pairs ``x_j`` with the ``j``-th family member (cycled),
    the next ones apply a single member to every vector (first 16 members),
    and further ``selections`` selections draw members uniformly with a
    generator seeded by ``seed``.
    """
    vectors = np.asarray(vectors)
    if len(family) == 0 or vectors.size == 0:
        raise ValueError("family and vectors must be non-empty")
    if vectors.ndim == 1:
        vectors = vectors[None, :]
    N = len(vectors)
    sampler = RademacherSampler(N) if sampler is None else sampler
    denom = rademacher_norm(vectors, p, sampler, space_p)
    if denom == 0:
        raise ValueError("Rademacher sum of the vectors vanishes")
    rng = np.random.default_rng(seed)
    choices = [np.arange(N) % len(family)]
    choices += [np.full(N, i) for i in range(min(len(family), 16))]
    for _ in range(selections):
        choices.append(rng.integers(0, len(family), N))
    ratios = []
    for sel in choices:
        images = np.array([family.apply(int(i), x) for i, x in zip(sel, vectors)])
        ratios.append(rademacher_norm(images, p, sampler, space_p) / denom)
    best = int(np.argmax(ratios))
    return RBoundEstimate(
        p=float(p), ratio_max=float(ratios[best]), trials=len(ratios),
        witnesses=list(choices[best]), ratios=[float(r) for r in ratios],
        space_p=float(space_p), sampler=sampler.describe(),
    )


# ------------------------------------------------------------ square functions

def _values(f):
    return np.asarray(getattr(f, "values", f))


def _apply(op, f):
    if op is None:
        return f
    if callable(op):
        return op(f)
    sym = np.asarray(op)
    return np.fft.ifftn(sym * np.fft.fftn(f))


def square_function(fs):
    arr = np.stack([_values(f) for f in fs])
    return np.sqrt(np.sum(np.abs(arr) ** 2, axis=0))


def square_function_ratio(ops, fs, q=2.0):
    """``||(sum |T_n f_n|^2)^{1/2}||_q / ||(sum |f_n|^2)^{1/2}||_q``.

    ``ops`` holds callables, symbol arrays (applied on the FFT grid) or
    ``None`` for the identity.
    """
    if len(ops) != len(fs):
        raise ValueError("one operator per function is required")
    base = [_values(f) for f in fs]
    images = [_apply(op, f) for op, f in zip(ops, base)]
    den = lq_norm(square_function(base).ravel(), q)
    if den == 0:
        raise ValueError("square function of the inputs vanishes")
    return float(lq_norm(square_function(images).ravel(), q) / den)


def translation_counterexample_curve(p, N_values, cells_per_unit=1):
    """Square-function quotient for unit translations of ``f_n = 1_[0,1]``.

    On the discrete line the quotient equals ``N^{1/p} / N^{1/2}``; it grows
    without bound for ``p < 2`` and tends to zero for ``p > 2``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    curve = []
    for N in N_values:
        length = N * cells_per_unit
        f = np.zeros(length)
        f[:cells_per_unit] = 1.0
        fs = [f] * N
        ops = [lambda x, n=n: _shift(x, n * cells_per_unit) for n in range(N)]
        curve.append((int(N), square_function_ratio(ops, fs, p)))
    return curve


def loglog_slope(curve):
    n = np.log([c[0] for c in curve])
    r = np.log([c[1] for c in curve])
    return float(np.polyfit(n, r, 1)[0])


# ---------------------------------------------------------- contraction check

@dataclass
class KahaneResult:
    lhs: float
    rhs: float
    satisfied: bool


def kahane_contraction_check(a, b, x, p=2.0, sampler=None, space_p=2.0):
    """Compare ``||sum a_j eps_j x_j||`` with ``2 ||sum b_j eps_j x_j||``.

    Requires ``|a_j| <= |b_j|``; signs are enumerated exhaustively unless a
    sampler is passed.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[:, None]
    if not (len(a) == len(b) == len(x)):
        raise ValueError("a, b and x must have the same length")
    if np.any(np.abs(a) > np.abs(b) * (1 + 1e-12)):
        raise ValueError("the contraction check requires |a_j| <= |b_j|")
    sampler = RademacherSampler(len(a)) if sampler is None else sampler
    lhs = rademacher_norm(a[:, None] * x, p, sampler, space_p)
    rhs = rademacher_norm(b[:, None] * x, p, sampler, space_p)
    return KahaneResult(lhs, rhs, bool(lhs <= 2 * rhs * (1 + 1e-12)))
