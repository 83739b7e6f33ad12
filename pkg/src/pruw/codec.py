"""Single ``(r, K)`` PRUW scheme: storage encoding, private reads and writes.

Array layouts (``M`` submodels, subpacketization ``y``, ``K`` coded slots):

* plain subpacket ``w``: ``(M, y, K)``, ``w[m, i, l]`` is symbol ``l`` of block ``i``
* storage noise ``I``: ``(..., y, x + 1, M)``
* encoded subpacket at one database: ``(..., y, M)``
* query vectors for one database: ``(..., K, y, M)``
* query noise ``Z``: ``(..., K, y, M)`` shared by all databases
* update scalars for one database: ``(..., K)``; write noise ``zhat``: ``(..., K)``

Leading ``...`` dimensions broadcast, which lets the privacy oracle push every
noise realization through the same code in one call. Databases are indexed
``0..r-1`` within a scheme; submodel indices ``theta`` are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import BadIndex, FieldTooSmall, Incomplete, ShapeError
from .ffmath import PrimeField, cauchy_vandermonde, solve_linear
from .planner import optimal_x


@dataclass(eq=False)
class SchemeParams:
    r: int
    K: int
    x: int
    y: int
    M: int
    field: PrimeField
    alphas: tuple[int, ...]
    fs: tuple[tuple[int, ...], ...]  # fs[i][l], y rows of K
    null_dbs: tuple[int, ...]  # participant indices in the null-shaper set

    def __post_init__(self):
        if self.r != self.y + self.x + self.K + 1:
            raise ShapeError(f"r={self.r} != y+x+K+1={self.y + self.x + self.K + 1}")
        if not self.x >= self.y >= 1:
            raise ShapeError(f"need x >= y >= 1, got x={self.x}, y={self.y}")
        if len(self.alphas) != self.r or len(self.fs) != self.y or any(len(row) != self.K for row in self.fs):
            raise ShapeError("constant tables do not match (r, y, K)")
        if len(self.null_dbs) != self.x - self.y:
            raise ShapeError(f"null set must hold x-y={self.x - self.y} databases")
        consts = list(self.alphas) + [f for row in self.fs for f in row]
        if len(set(c % self.field.q for c in consts)) != len(consts):
            raise ShapeError("evaluation constants must be pairwise distinct")
        self._tables = [self._build_tables(n) for n in range(self.r)]

    @property
    def null_set(self) -> tuple[int, ...]:
        return tuple(self.alphas[n] for n in self.null_dbs)

    @property
    def receivers(self) -> tuple[int, ...]:
        return tuple(n for n in range(self.r) if n not in self.null_dbs)

    def _build_tables(self, n: int) -> dict:
        F, a = self.field, self.alphas[n]
        y, K = self.y, self.K
        fs = self.fs
        storage = [[F.inv(fs[i][l] - a) for l in range(K)] for i in range(y)]
        full = [F.prod(fs[i][k] - a for k in range(K)) for i in range(y)]
        query = [
            [
                F.div(
                    F.prod(fs[i][k] - a for k in range(K) if k != l),
                    F.prod(fs[i][k] - fs[i][l] for k in range(K) if k != l),
                )
                for l in range(K)
            ]
            for i in range(y)
        ]
        # update: U[l] = sum_j upd[j][l] * delta_tilde[j][l] + upd_full[l] * zhat[l]
        upd = [[F.prod(fs[i][l] - a for i in range(y) if i != j) for l in range(K)] for j in range(y)]
        upd_full = [F.prod(fs[i][l] - a for i in range(y)) for l in range(K)]
        shaper = [
            [
                F.div(
                    F.prod(self.alphas[m] - a for m in self.null_dbs),
                    F.prod(self.alphas[m] - fs[j][l] for m in self.null_dbs),
                )
                for l in range(K)
            ]
            for j in range(y)
        ]
        powers = [F.pow(a, j) for j in range(self.K + self.x + 1)]
        arr = F.array
        return {
            "storage": arr(storage).reshape(y, K),
            "full": arr(full).reshape(y),
            "full_inv": arr([F.inv(v) for v in full]).reshape(y),
            "query": arr(query).reshape(y, K),
            "upd": arr(upd).reshape(y, K),
            "upd_full": arr(upd_full).reshape(K),
            "shaper": arr(shaper).reshape(y, K),
            "powers": arr(powers),
        }

    def table(self, n: int, name: str) -> np.ndarray:
        if not 0 <= n < self.r:
            raise BadIndex(f"database index {n} outside 0..{self.r - 1}")
        return self._tables[n][name]

    def delta_scale(self) -> np.ndarray:
        """Per-``(j, l)`` factor turning a raw delta into its scaled form."""
        F, fs = self.field, self.fs
        return F.array(
            [
                [
                    F.div(
                        F.prod(fs[j][k] - fs[j][l] for k in range(self.K) if k != l),
                        F.prod(fs[i][l] - fs[j][l] for i in range(self.y) if i != j),
                    )
                    for l in range(self.K)
                ]
                for j in range(self.y)
            ]
        ).reshape(self.y, self.K)

    def describe(self) -> dict:
        return {
            "r": self.r,
            "K": self.K,
            "x": self.x,
            "y": self.y,
            "M": self.M,
            "q": self.field.q,
            "alphas": list(self.alphas),
            "fs": [list(row) for row in self.fs],
            "null_dbs": list(self.null_dbs),
        }

    @classmethod
    def from_constants(cls, r, K, M, field, alphas, fs) -> "SchemeParams":
        x, y = optimal_x(r, K)
        null_dbs = tuple(range(r - (x - y), r))
        return cls(r, K, x, y, M, field, tuple(int(a) for a in alphas),
                   tuple(tuple(int(f) for f in row) for row in fs), null_dbs)


def draw_constants(field: PrimeField, count: int, rng: np.random.Generator) -> list[int]:
    """``count`` distinct nonzero field elements."""
    if field.q - 1 < count:
        raise FieldTooSmall(f"F_{field.q} has {field.q - 1} nonzero elements, need {count}")
    if field.q <= 4 * count + 64:
        perm = rng.permutation(np.arange(1, field.q))
        return [int(v) for v in perm[:count]]
    seen: dict[int, None] = {}
    while len(seen) < count:
        seen.setdefault(int(rng.integers(1, field.q)), None)
    return list(seen)


def make_params(r: int, K: int, M: int, field: PrimeField, seed=0) -> SchemeParams:
    """Scheme constants drawn deterministically from ``seed``.

    The null-shaper set is the last ``x - y`` participating databases.
    """
    x, y = optimal_x(r, K)
    consts = draw_constants(field, r + y * K, np.random.default_rng(seed))
    alphas = consts[:r]
    fs = [consts[r + i * K: r + (i + 1) * K] for i in range(y)]
    return SchemeParams.from_constants(r, K, M, field, alphas, fs)


# -- storage --------------------------------------------------------------


@dataclass
class StorageNoise:
    I: np.ndarray  # (..., y, x+1, M)

    @classmethod
    def random(cls, params: SchemeParams, rng) -> "StorageNoise":
        return cls(params.field.random(rng, (params.y, params.x + 1, params.M)))

    @classmethod
    def zeros(cls, params: SchemeParams) -> "StorageNoise":
        return cls(params.field.zeros((params.y, params.x + 1, params.M)))


def encode_storage(plain: np.ndarray, noise, params: SchemeParams, n: int) -> np.ndarray:
    F = params.field
    plain = F.array(plain)
    I = noise.I if isinstance(noise, StorageNoise) else F.array(noise)
    if plain.shape != (params.M, params.y, params.K):
        raise ShapeError(f"plain subpacket shape {plain.shape} != {(params.M, params.y, params.K)}")
    if I.shape[-3:] != (params.y, params.x + 1, params.M):
        raise ShapeError(f"storage noise shape {I.shape} does not end with {(params.y, params.x + 1, params.M)}")
    coef = params.table(n, "storage")
    rational = F.dot(plain, coef[None], axis=-1).T  # (y, M)
    powers = params.table(n, "powers")[: params.x + 1]
    masked = F.dot(I, powers[:, None], axis=-2)  # (..., y, M)
    return F.add(rational, masked)


# -- reading --------------------------------------------------------------


@dataclass
class QueryShadow:
    """Client-side secrets behind a query set; never serialized."""

    theta: int
    Z: np.ndarray


@dataclass
class QuerySet:
    vectors: np.ndarray  # (r, K, y, M)
    shadow: QueryShadow = field(repr=False)

    def for_db(self, n: int) -> np.ndarray:
        return self.vectors[n]


def _check_theta(theta: int, M: int):
    if not 1 <= theta <= M:
        raise BadIndex(f"submodel index {theta} outside 1..{M}")


def query_vectors(theta: int, Z: np.ndarray, params: SchemeParams, n: int) -> np.ndarray:
    """Query for database ``n``: block ``i`` of slot ``l`` is
    ``c[i,l] e_theta + prod_k (f[i][k] - a_n) Z[l, i]``."""
    _check_theta(theta, params.M)
    F = params.field
    Z = F.array(Z)
    if Z.shape[-3:] != (params.K, params.y, params.M):
        raise ShapeError(f"query noise shape {Z.shape} does not end with {(params.K, params.y, params.M)}")
    e = F.zeros(params.M)
    e[theta - 1] = 1
    c = params.table(n, "query").T  # (K, y)
    full = params.table(n, "full")  # (y,)
    return F.add(F.mul(c[:, :, None], e), F.mul(full[None, :, None], Z))


def gen_queries(theta: int, params: SchemeParams, rng, Z: np.ndarray | None = None) -> QuerySet:
    _check_theta(theta, params.M)
    if Z is None:
        Z = params.field.random(rng, (params.K, params.y, params.M))
    vectors = np.stack([query_vectors(theta, Z, params, n) for n in range(params.r)])
    return QuerySet(vectors, QueryShadow(theta, Z))


def answer(store: np.ndarray, query: np.ndarray, field: PrimeField) -> int:
    store = np.asarray(store)
    query = np.asarray(query)
    if store.size != query.size:
        raise ShapeError(f"store has {store.size} symbols, query has {query.size}")
    return field.dot(store.ravel(), query.ravel())


def answers_for_db(store: np.ndarray, queries: np.ndarray, field: PrimeField) -> list[int]:
    """All ``K`` answers of one database for one subpacket."""
    return [answer(store, queries[l], field) for l in range(queries.shape[0])]


def decode(answers: Mapping[int, int] | Sequence[int], ell: int, params: SchemeParams) -> np.ndarray:
    """Recover ``W[theta, :, ell]`` (``y`` symbols) from the ``r`` answers for slot ``ell``."""
    if isinstance(answers, Mapping):
        missing = [n for n in range(params.r) if n not in answers]
        if missing:
            raise Incomplete(f"missing answers from databases {missing}")
        values = [answers[n] for n in range(params.r)]
    else:
        values = list(answers)
        if len(values) != params.r:
            raise Incomplete(f"need {params.r} answers, got {len(values)}")
    poles = [params.fs[i][ell] for i in range(params.y)]
    A = cauchy_vandermonde(params.field, params.alphas, poles, params.K + params.x)
    return solve_linear(params.field, A, values)[: params.y]


# -- writing --------------------------------------------------------------


@dataclass
class UpdateShadow:
    zhat: np.ndarray
    deltas: np.ndarray


@dataclass
class UpdatePacket:
    scalars: dict[int, np.ndarray]  # receiving db -> (K,)
    shadow: UpdateShadow = field(repr=False)


def update_scalars(deltas: np.ndarray, zhat: np.ndarray, params: SchemeParams, n: int) -> np.ndarray:
    F = params.field
    deltas = F.array(deltas)
    if deltas.shape != (params.y, params.K):
        raise ShapeError(f"deltas shape {deltas.shape} != {(params.y, params.K)}")
    zhat = F.array(zhat)
    if zhat.shape[-1:] != (params.K,):
        raise ShapeError(f"zhat shape {zhat.shape} does not end with ({params.K},)")
    scaled = F.mul(deltas, params.delta_scale())
    signal = F.dot(params.table(n, "upd"), scaled, axis=0)  # (K,)
    return F.add(signal, F.mul(params.table(n, "upd_full"), zhat))


def encode_update(deltas: np.ndarray, params: SchemeParams, rng, zhat: np.ndarray | None = None) -> UpdatePacket:
    if zhat is None:
        zhat = params.field.random(rng, (params.K,))
    scalars = {n: update_scalars(deltas, zhat, params, n) for n in params.receivers}
    return UpdatePacket(scalars, UpdateShadow(params.field.array(zhat), params.field.array(deltas)))


def null_shaper(params: SchemeParams, n: int, ell: int) -> np.ndarray:
    """Diagonal of the null shaper for slot ``ell`` at database ``n``, shaped ``(y, M)``."""
    block = params.table(n, "shaper")[:, ell]
    return np.repeat(block[:, None], params.M, axis=1)


def apply_update(store: np.ndarray, U, queries: np.ndarray | None, params: SchemeParams, n: int) -> np.ndarray:
    """Add the incremental update built from ``U`` and this database's own queries."""
    if n in params.null_dbs:
        return store
    if queries is None:
        raise Incomplete(f"database {n} has no stored queries for this session")
    if U is None or len(U) != params.K:
        raise Incomplete(f"database {n} needs {params.K} update scalars")
    F = params.field
    scaled_q = F.mul(queries, params.table(n, "full_inv")[None, :, None])  # (K, y, M)
    total = store
    for ell in range(params.K):
        incr = F.mul(F.mul(int(U[ell]), scaled_q[ell]), null_shaper(params, n, ell))
        total = F.add(total, incr)
    return total


# -- well-formedness --------------------------------------------------------


def fit_storage_coordinate(values: Sequence[int], params: SchemeParams, block: int):
    """Fit ``r`` stored values of one coordinate to ``sum_l w_l/(f[block][l]-a) + poly_x(a)``.

    Returns ``(w, noise_coeffs, residual)``; ``residual`` (length ``y``) is all
    zero exactly when the values are a valid encoding.
    """
    F = params.field
    width = params.K + params.x + 1
    A = cauchy_vandermonde(F, params.alphas, params.fs[block], params.x)
    sol = solve_linear(F, A[:width], list(values)[:width])
    residual = F.sub(F.matmul(A[width:], sol), F.array(list(values)[width:]))
    return sol[: params.K], sol[params.K:], residual
