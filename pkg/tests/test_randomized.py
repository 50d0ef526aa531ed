from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxreg.randomized import (
    OperatorFamilySpec,
    RademacherSampler,
    estimate_rbound,
    kahane_contraction_check,
    loglog_slope,
    rademacher_eval,
    rademacher_norm,
    square_function_ratio,
    translation_counterexample_curve,
)


def stacked_indicators(N, length=None):
    """``N`` copies of the indicator of the first cell."""
    v = np.zeros((N, length or 2 * N))
    v[:, 0] = 1.0
    return v


@pytest.mark.parametrize("n, t, expected", [(1, 0.25, 1), (1, 0.75, -1), (2, 0.3, -1), (3, 0.5, 1)])
def test_rademacher_values(n, t, expected):
    assert rademacher_eval(n, t) == expected


def test_rademacher_index_starts_at_one():
    with pytest.raises(ValueError):
        rademacher_eval(0, 0.5)


@pytest.mark.parametrize("grid", [4097, 8193])
def test_rademacher_orthogonality(grid):
    t = (np.arange(grid) + 0.5) / grid
    r = np.array([rademacher_eval(n, t) for n in range(1, 7)])
    gram = r @ r.T / grid
    np.testing.assert_allclose(gram, np.eye(6), atol=2.0 / grid)


def test_rademacher_joint_distribution():
    grid, M = 4096, 4
    t = (np.arange(grid) + 0.5) / grid
    r = np.array([rademacher_eval(n, t) for n in range(1, M + 1)]).T
    for pattern in product([-1, 1], repeat=M):
        freq = np.mean(np.all(r == np.array(pattern), axis=1))
        assert abs(freq - 2.0**-M) <= 4.0 / grid


def test_exact_sampler_enumerates_every_pattern():
    eps, w = RademacherSampler(5).signs()
    assert len({tuple(row) for row in eps}) == 32
    assert w.sum() == pytest.approx(1.0)


def test_exact_sampler_size_limit():
    with pytest.raises(ValueError):
        RademacherSampler(21)
    RademacherSampler(21, mode="monte-carlo")


def test_monte_carlo_is_seeded():
    a, _ = RademacherSampler(6, "monte-carlo", seed=3, trials=100).signs()
    b, _ = RademacherSampler(6, "monte-carlo", seed=3, trials=100).signs()
    c, _ = RademacherSampler(6, "monte-carlo", seed=4, trials=100).signs()
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_identity_family(rng):
    est = estimate_rbound(OperatorFamilySpec.identity(), rng.normal(size=(5, 7)))
    assert est.ratio_max == pytest.approx(1.0, abs=1e-14)


def test_scalar_multipliers_within_contraction_bound(rng):
    family = OperatorFamilySpec.random_scalar_multipliers(1.0, 64, seed=1)
    est = estimate_rbound(family, rng.normal(size=(8, 32)))
    assert 0.99 < est.ratio_max <= 2.0


def test_translations_give_sqrt_n():
    # l^1 model space, outer exponent 2: ||sum eps_j e_j||_1 = 4,
    # (E |sum eps_j|^2)^{1/2} = 2
    est = estimate_rbound(OperatorFamilySpec.translations(range(4)), stacked_indicators(4), p=2, space_p=1)
    assert est.ratio_max == pytest.approx(2.0, abs=1e-12)


def test_translations_outer_exponent_one():
    # E |sum_{j<=4} eps_j| = 3/2, so the quotient is 4 / (3/2)
    est = estimate_rbound(OperatorFamilySpec.translations(range(4)), stacked_indicators(4), p=1, space_p=1)
    assert est.ratio_max == pytest.approx(8 / 3, abs=1e-12)


@pytest.mark.parametrize("N", [4, 8, 16])
def test_translation_estimate_reproduces_curve(N):
    est = estimate_rbound(OperatorFamilySpec.translations(range(N)), stacked_indicators(N), p=2, space_p=1, selections=0)
    ((_, ratio),) = translation_counterexample_curve(1.0, [N])
    assert est.ratio_max == pytest.approx(ratio, rel=1e-12)


def test_estimate_is_reproducible(rng):
    family = OperatorFamilySpec.random_scalar_multipliers(1.0, 20, seed=5)
    x = rng.normal(size=(6, 10))
    a = estimate_rbound(family, x, seed=9)
    b = estimate_rbound(family, x, seed=9)
    assert a.ratio_max == b.ratio_max and a.witnesses == b.witnesses


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        estimate_rbound(OperatorFamilySpec.translations([]), np.ones((2, 3)))


def test_p_robustness(rng):
    family = OperatorFamilySpec.fourier_multipliers(
        [np.exp(1j * rng.uniform(0, 2 * np.pi, 16)) * rng.uniform(0, 1, 16) for _ in range(6)]
    )
    x = rng.normal(size=(6, 16))
    values = [estimate_rbound(family, x, p=p).ratio_max for p in (1, 2, 4)]
    assert max(values) / min(values) < 4


def test_estimate_record_is_a_lower_bound(rng):
    rec = estimate_rbound(OperatorFamilySpec.identity(), rng.normal(size=(3, 4))).as_record()
    assert "lower bound" in rec["interpretation"]


# ---------------------------------------------------------- square functions

@pytest.mark.parametrize(
    "p, N, expected",
    [(1.0, 4, 2.0), (1.0, 16, 4.0), (2.0, 7, 1.0), (2.0, 32, 1.0)],
)
def test_counterexample_values(p, N, expected):
    ((_, ratio),) = translation_counterexample_curve(p, [N])
    assert ratio == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("p", [1.0, 4.0])
def test_counterexample_slope(p):
    curve = translation_counterexample_curve(p, [4, 8, 16, 32, 64])
    assert loglog_slope(curve) == pytest.approx(1 / p - 0.5, abs=0.02)


def test_identity_square_function(rng):
    fs = list(rng.normal(size=(4, 20)))
    assert square_function_ratio([None] * 4, fs, 3.0) == pytest.approx(1.0)


def _random_multipliers(rng, count, n):
    return [rng.uniform(0, 1, n) * np.exp(1j * rng.uniform(0, 2 * np.pi, n)) for _ in range(count)]


def test_square_function_equals_rademacher_average_at_two(rng):
    syms = _random_multipliers(rng, 6, 24)
    fs = rng.normal(size=(6, 24))
    images = [np.fft.ifft(s * np.fft.fft(f)) for s, f in zip(syms, fs)]
    rad = rademacher_norm(np.array(images), 2) / rademacher_norm(fs, 2)
    assert square_function_ratio(syms, list(fs), 2.0) == pytest.approx(rad, rel=1e-12)


@pytest.mark.parametrize("q", [1.0, 4.0])
def test_square_function_within_khintchine_window(rng, q):
    syms = _random_multipliers(rng, 6, 24)
    fs = rng.normal(size=(6, 24))
    images = [np.fft.ifft(s * np.fft.fft(f)) for s, f in zip(syms, fs)]
    rad = rademacher_norm(np.array(images), q, space_p=q) / rademacher_norm(fs, q, space_p=q)
    sq = square_function_ratio(syms, list(fs), q)
    assert 0.5 <= sq / rad <= 2.0


def test_square_function_zero_denominator():
    with pytest.raises(ValueError):
        square_function_ratio([None], [np.zeros(5)])


# --------------------------------------------------------- contraction

def test_kahane_equal_coefficients(rng):
    a = rng.normal(size=5) + 1j * rng.normal(size=5)
    res = kahane_contraction_check(a, a, rng.normal(size=(5, 6)))
    assert res.lhs == pytest.approx(res.rhs) and res.satisfied


def test_kahane_zero(rng):
    res = kahane_contraction_check(np.zeros(4), np.ones(4), rng.normal(size=(4, 3)))
    assert res.lhs == 0 and res.satisfied


def test_kahane_precondition():
    with pytest.raises(ValueError):
        kahane_contraction_check([2.0], [1.0], np.ones((1, 2)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.0, 2.0, 3.0]))
def test_kahane_random(seed, p):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=8) + 1j * rng.normal(size=8)
    a = b * rng.uniform(0, 1, 8) * np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
    assert kahane_contraction_check(a, b, rng.normal(size=(8, 5)), p=p).satisfied
