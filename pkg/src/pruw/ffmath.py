"""Prime-field arithmetic and small dense linear algebra.

Scalars are plain Python ints in ``[0, q)``. Vectors and matrices are numpy
arrays; for ``q < 2**31.5`` they use ``int64`` (every product of two reduced
elements fits), otherwise ``object`` arrays of Python ints. Every operation
reduces after each multiplication, so sums over up to 2**32 terms never
overflow.
"""

from __future__ import annotations

from functools import reduce
from typing import Iterable, Sequence

import numpy as np
from sympy import isprime

from .errors import DegenerateConstants, DivisionByZero, NotPrime, ShapeError, Singular

DEFAULT_MODULUS = 2**31 - 1


class PrimeField:
    """Arithmetic context for F_q.

    All methods accept ints or arrays (broadcasting like numpy) and return
    reduced values of the same kind.
    """

    def __init__(self, q: int = DEFAULT_MODULUS):
        q = int(q)
        if q < 2 or not isprime(q):
            raise NotPrime(f"field modulus must be a prime >= 2, got {q}")
        self.q = q
        self.dtype = np.int64 if (q - 1) ** 2 < 2**63 - 2 * q else object

    def __repr__(self):
        return f"PrimeField({self.q})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.q == self.q

    def __hash__(self):
        return hash(("PrimeField", self.q))

    # -- conversion -------------------------------------------------------

    def array(self, values) -> np.ndarray:
        arr = np.asarray(values)
        if self.dtype is object:
            arr = np.asarray(arr, dtype=object)
        else:
            arr = arr.astype(np.int64, copy=False)
        return arr % self.q

    def zeros(self, shape) -> np.ndarray:
        return np.zeros(shape, dtype=self.dtype) if self.dtype is not object else np.full(shape, 0, dtype=object)

    def random(self, rng: np.random.Generator, shape=()) -> np.ndarray:
        if self.q > 2**63:
            raise NotImplementedError("random draws need q <= 2**63")
        out = rng.integers(0, self.q, size=shape, dtype=np.int64)
        return out if self.dtype is not object else out.astype(object)

    # -- scalar / elementwise ops ------------------------------------------

    def add(self, a, b):
        return (a + b) % self.q

    def sub(self, a, b):
        return (a - b) % self.q

    def neg(self, a):
        return (-a) % self.q

    def mul(self, a, b):
        return (a * b) % self.q

    def pow(self, a: int, e: int) -> int:
        a = int(a) % self.q
        if e < 0:
            return pow(self.inv(a), -e, self.q)
        return pow(a, e, self.q)

    def inv(self, a: int) -> int:
        a = int(a) % self.q
        if a == 0:
            raise DivisionByZero("zero has no multiplicative inverse")
        return pow(a, -1, self.q)

    def div(self, a: int, b: int) -> int:
        return int(a) * self.inv(b) % self.q

    def prod(self, values: Iterable[int]) -> int:
        """Product of scalars; the empty product is 1."""
        return reduce(lambda acc, v: acc * int(v) % self.q, values, 1)

    def dot(self, a: np.ndarray, b: np.ndarray, axis=None):
        """Inner product reduced mod q, optionally along one axis only."""
        terms = (a * b) % self.q
        if axis is None:
            return int(terms.sum() % self.q)
        if terms.shape[axis] > 16:
            return terms.sum(axis=axis) % self.q
        # numpy reduces short inner axes slowly; accumulate slices instead
        slices = np.moveaxis(terms, axis, 0)
        acc = slices[0].copy()
        for s in slices[1:]:
            acc += s
        return acc % self.q

    def matmul(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = self.array(A)
        B = self.array(B)
        if A.shape[-1] != B.shape[0]:
            raise ShapeError(f"cannot multiply {A.shape} by {B.shape}")
        if B.ndim == 1:
            return ((A * B) % self.q).sum(axis=-1) % self.q
        return ((A[:, :, None] * B[None, :, :]) % self.q).sum(axis=1) % self.q


def field_new(q: int = DEFAULT_MODULUS) -> PrimeField:
    return PrimeField(q)


def solve_linear(field: PrimeField, A, b) -> np.ndarray:
    """Solve ``A x = b`` over ``field`` by Gauss-Jordan elimination.

    Pivots on the first nonzero entry of each column. Raises Singular when
    ``A`` is not invertible.
    """
    q = field.q
    rows = [[int(v) % q for v in row] for row in np.asarray(A, dtype=object)]
    rhs = [int(v) % q for v in np.asarray(b, dtype=object).ravel()]
    n = len(rows)
    if any(len(row) != n for row in rows) or len(rhs) != n:
        raise ShapeError(f"need a square system, got {n}x{len(rows[0]) if rows else 0} with rhs {len(rhs)}")
    aug = [row + [v] for row, v in zip(rows, rhs)]
    for col in range(n):
        pivot = next((i for i in range(col, n) if aug[i][col]), None)
        if pivot is None:
            raise Singular(f"matrix is singular (no pivot in column {col})")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = pow(aug[col][col], -1, q)
        aug[col] = [v * inv % q for v in aug[col]]
        for i in range(n):
            if i != col and aug[i][col]:
                factor = aug[i][col]
                aug[i] = [(v - factor * p) % q for v, p in zip(aug[i], aug[col])]
    return field.array([row[n] for row in aug])


def cauchy_vandermonde(field: PrimeField, alphas: Sequence[int], fs: Sequence[int], noise_degree: int) -> np.ndarray:
    """Matrix with rows ``[1/(f_1-a), ..., 1/(f_y-a), 1, a, ..., a**d]``.

    One row per evaluation point ``a`` in ``alphas``. The result is
    ``len(alphas) x (len(fs) + noise_degree + 1)``; it is square and
    invertible when ``len(alphas) == len(fs) + noise_degree + 1``.
    """
    q = field.q
    alphas = [int(a) % q for a in alphas]
    fs = [int(f) % q for f in fs]
    if len(set(alphas)) != len(alphas):
        raise DegenerateConstants(f"repeated evaluation point in {alphas}")
    if len(set(fs)) != len(fs):
        raise DegenerateConstants(f"repeated pole in {fs}")
    if set(alphas) & set(fs):
        raise DegenerateConstants("evaluation points collide with poles")
    if noise_degree < -1:
        raise ShapeError("noise_degree must be >= -1")
    rows = []
    for a in alphas:
        rational = [pow(f - a, -1, q) for f in fs]
        poly = [pow(a, j, q) for j in range(noise_degree + 1)]
        rows.append(rational + poly)
    return field.array(rows).reshape(len(alphas), len(fs) + noise_degree + 1)
