"""Constant-coefficient differential operators and their symbols.

An operator ``A(D) = sum_alpha a_alpha D^alpha`` with ``D = -i d/dx`` is stored as
a map from multi-indices to ``N x N`` coefficient matrices.  With this convention
the Laplacian has coefficients ``-1`` on every pure second derivative and symbol
``-|xi|^2``.

Polynomials in the normal variable ``tau`` are returned as
:class:`numpy.polynomial.Polynomial` objects (coefficients ordered from low to
high degree).
"""

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import factorial

import numpy as np
from numpy.polynomial import Polynomial


def _as_index(key, dim):
    idx = tuple(int(k) for k in key)
    if len(idx) != dim:
        raise ValueError(f"multi-index {idx} has length {len(idx)}, expected {dim}")
    if any(k < 0 for k in idx):
        raise ValueError(f"multi-index {idx} has negative entries")
    return idx


def order(index):
    """Order ``|alpha|`` of a multi-index."""
    return int(sum(index))


def _monomials(xi, indices):
    """``xi**alpha`` for each index; ``xi`` has shape (..., n)."""
    xi = np.asarray(xi)
    out = []
    for idx in indices:
        val = np.ones(xi.shape[:-1], dtype=complex)
        for j, k in enumerate(idx):
            if k:
                val = val * xi[..., j] ** k
        out.append(val)
    return out


@dataclass(frozen=True)
class FrequencyPoint:
    """A parameter point ``(xi, lambda)``; ``xi`` may be tangential only."""

    xi: tuple
    lam: complex = 0j

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(float(v) for v in np.atleast_1d(self.xi)))
        object.__setattr__(self, "lam", complex(self.lam))

    @property
    def xi_array(self):
        return np.array(self.xi, dtype=float)

    def sphere_value(self, order_2m):
        """``|xi|^{2m} + |lambda|``; equals 1 on the reduced compact set."""
        return float(np.linalg.norm(self.xi_array) ** order_2m + abs(self.lam))

    def bracket(self, order_2m):
        """``<xi>_lambda = |xi| + |lambda|^{1/2m}``."""
        return float(np.linalg.norm(self.xi_array) + abs(self.lam) ** (1.0 / order_2m))


def quasi_homogeneous_scale(pt, rho, order_2m):
    """Return ``(rho * xi, rho**(2m) * lambda)``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return FrequencyPoint(tuple(rho * v for v in pt.xi), rho**order_2m * pt.lam)


def project_to_sphere(pt, order_2m):
    """Quasi-homogeneous projection of a nonzero point onto ``|xi|^{2m}+|lambda| = 1``.

    The scaling ``rho`` solves ``rho^{2m} * (|xi|^{2m} + |lambda|) = 1``.
    """
    s = pt.sphere_value(order_2m)
    if s == 0:
        raise ValueError("cannot project the origin")
    return quasi_homogeneous_scale(pt, s ** (-1.0 / order_2m), order_2m)


@dataclass(frozen=True, eq=False)
class DifferentialOperator:
    """Matrix-coefficient operator ``sum_alpha a_alpha D^alpha`` on ``R^n``.

    Parameters
    ----------
    dim : int
        Space dimension ``n``.
    order_2m : int
        Even order of the operator.
    terms : dict
        Multi-index (tuple of ints) to coefficient.  Scalars are promoted to
        ``1 x 1`` matrices.
    system_size : int, optional
        ``N``; inferred from the coefficients when omitted.
    """

    dim: int
    order_2m: int
    terms: dict
    system_size: int = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.order_2m < 2 or self.order_2m % 2:
            raise ValueError(f"order must be an even integer >= 2, got {self.order_2m}")
        clean = {}
        size = self.system_size
        for key, coeff in self.terms.items():
            idx = _as_index(key, self.dim)
            if order(idx) > self.order_2m:
                raise ValueError(f"term {idx} exceeds the operator order {self.order_2m}")
            mat = np.atleast_2d(np.asarray(coeff, dtype=complex))
            if mat.shape[0] != mat.shape[1]:
                raise ValueError("coefficients must be square matrices")
            if size is None:
                size = mat.shape[0]
            if mat.shape != (size, size):
                raise ValueError("inconsistent coefficient sizes")
            mat = mat.copy()
            mat.setflags(write=False)
            clean[idx] = clean[idx] + mat if idx in clean else mat
        if size is None:
            raise ValueError("operator needs at least one term")
        object.__setattr__(self, "terms", clean)
        object.__setattr__(self, "system_size", int(size))
        if not any(order(k) == self.order_2m and np.any(v) for k, v in clean.items()):
            raise ValueError("principal part is empty")

    @property
    def m(self):
        return self.order_2m // 2

    @property
    def principal_terms(self):
        return {k: v for k, v in self.terms.items() if order(k) == self.order_2m}

    def __add__(self, other):
        if (self.dim, self.order_2m, self.system_size) != (other.dim, other.order_2m, other.system_size):
            raise ValueError("operators are not compatible")
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return DifferentialOperator(self.dim, self.order_2m, terms, self.system_size)

    def scaled(self, c):
        return DifferentialOperator(
            self.dim, self.order_2m, {k: c * v for k, v in self.terms.items()}, self.system_size
        )

    def is_scalar(self):
        return self.system_size == 1


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    """Scalar boundary operator ``sum_beta b_beta gamma_0 D^beta`` of order ``m_j``."""

    dim: int
    order_mj: int
    terms: dict

    def __post_init__(self):
        if self.order_mj < 0:
            raise ValueError("boundary order must be >= 0")
        clean = {}
        for key, coeff in self.terms.items():
            idx = _as_index(key, self.dim)
            if order(idx) > self.order_mj:
                raise ValueError(f"term {idx} exceeds the boundary order {self.order_mj}")
            clean[idx] = clean.get(idx, 0j) + complex(coeff)
        object.__setattr__(self, "terms", clean)
        if not any(order(k) == self.order_mj and v != 0 for k, v in clean.items()):
            raise ValueError("boundary operator has an empty principal part")

    def principal_polynomial(self, xi_prime):
        """``b_{j0}(xi', tau)`` as a polynomial in ``tau``."""
        xi_prime = np.atleast_1d(np.asarray(xi_prime, dtype=float))
        if len(xi_prime) != self.dim - 1:
            raise ValueError("tangential frequency has the wrong length")
        coef = np.zeros(self.order_mj + 1, dtype=complex)
        for idx, b in self.terms.items():
            if order(idx) != self.order_mj:
                continue
            coef[idx[-1]] += b * np.prod(xi_prime ** np.array(idx[:-1], dtype=float))
        return Polynomial(coef)


def evaluate_symbol(op, xi, principal=False):
    """Evaluate ``sum_alpha a_alpha xi^alpha``.

    ``xi`` may be a single vector of length ``n`` (returns an ``N x N`` matrix)
    or a stack of shape ``(..., n)`` (returns shape ``(..., N, N)``).
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1:] != (op.dim,):
        raise ValueError(f"frequency has dimension {xi.shape[-1:]}, operator has {op.dim}")
    terms = op.principal_terms if principal else op.terms
    size = op.system_size
    out = np.zeros(xi.shape[:-1] + (size, size), dtype=complex)
    keys = list(terms)
    for key, mono in zip(keys, _monomials(xi, keys)):
        out = out + mono[..., None, None] * terms[key]
    return out


def evaluate_principal_symbol(op, xi):
    return evaluate_symbol(op, xi, principal=True)


def normal_symbol_polynomial(op, xi_prime, lam, scalar=True):
    """Principal symbol minus ``lambda`` with the last frequency slot left free.

    Returns a :class:`Polynomial` in ``tau`` for scalar operators; with
    ``scalar=False`` an array of shape ``(2m+1, N, N)`` of matrix coefficients
    (low to high degree) is returned instead.
    """
    xi_prime = np.atleast_1d(np.asarray(xi_prime, dtype=float))
    if len(xi_prime) != op.dim - 1:
        raise ValueError("tangential frequency has the wrong length")
    if scalar and not op.is_scalar():
        raise ValueError("a scalar polynomial was requested for a system")
    size = op.system_size
    coef = np.zeros((op.order_2m + 1, size, size), dtype=complex)
    for idx, a in op.principal_terms.items():
        coef[idx[-1]] += a * np.prod(xi_prime ** np.array(idx[:-1], dtype=float))
    coef[0] -= lam * np.eye(size)
    if scalar:
        return Polynomial(coef[:, 0, 0])
    return coef


def characteristic_determinant(op, xi, lam):
    """``det(a_0(xi) - lambda)`` for stacked ``xi`` and broadcastable ``lam``."""
    a0 = evaluate_principal_symbol(op, xi)
    lam = np.asarray(lam, dtype=complex)
    eye = np.eye(op.system_size)
    return np.linalg.det(a0 - lam[..., None, None] * eye)


# ----------------------------------------------------------------- builders

def _unit(dim, j, k=1):
    idx = [0] * dim
    idx[j] = k
    return tuple(idx)


def laplacian(dim, coeff=1.0):
    """``coeff * Laplacian``; symbol ``-coeff * |xi|^2``."""
    return DifferentialOperator(dim, 2, {_unit(dim, j, 2): -coeff for j in range(dim)})


def polyharmonic(dim, m, sign=None):
    """``-(-Laplacian)^m``: parabolic sign, symbol ``-|xi|^{2m}``.

    ``sign`` overrides the overall factor.
    """
    if sign is None:
        sign = -1.0
    terms = {}
    # multinomial expansion of |xi|^{2m} = (xi_1^2 + ... + xi_n^2)^m
    for combo in combinations_with_replacement(range(dim), m):
        counts = [combo.count(j) for j in range(dim)]
        coeff = factorial(m)
        for c in counts:
            coeff //= factorial(c)
        terms[tuple(2 * c for c in counts)] = sign * coeff
    return DifferentialOperator(dim, 2 * m, terms)


def second_order_from_matrix(a):
    """``tr(a * Hessian)`` for a symmetric matrix ``a``; symbol ``-xi.a.xi``."""
    a = np.asarray(a)
    dim = a.shape[0]
    terms = {}
    for i in range(dim):
        for j in range(i, dim):
            idx = [0] * dim
            idx[i] += 1
            idx[j] += 1
            c = -a[i, j] if i == j else -(a[i, j] + a[j, i])
            if c != 0:
                terms[tuple(idx)] = c
    return DifferentialOperator(dim, 2, terms)


def dirichlet_conditions(dim, m):
    """``gamma_0 D_n^{j-1}``, j = 1..m."""
    return [BoundaryOperator(dim, j, {_unit(dim, dim - 1, j): 1.0}) for j in range(m)]


def neumann_conditions(dim, m):
    """``gamma_0 D_n^{m+j-1}``, j = 1..m."""
    return [BoundaryOperator(dim, m + j, {_unit(dim, dim - 1, m + j): 1.0}) for j in range(m)]
