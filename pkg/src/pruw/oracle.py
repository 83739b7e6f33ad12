"""Exhaustive privacy and security checks over a tiny field.

Each check enumerates every noise realization, pushes the whole batch through
the codec, and compares the per-database distributions of what a database
observes. Distances are exact total-variation values; anything other than
zero is a leak.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import codec
from .errors import TooLarge
from .ffmath import PrimeField

DEFAULT_LIMIT = 10**7
CHUNK = 1 << 18


@dataclass
class DistributionTable:
    counts: Counter = field(default_factory=Counter)
    total: int = 0

    def merge(self, keys: np.ndarray):
        if keys.size and keys.max() < 1 << 22:
            dense = np.bincount(keys)
            uniq = np.flatnonzero(dense)
            cnt = dense[uniq]
        else:
            uniq, cnt = np.unique(keys, return_counts=True)
        self.counts.update(dict(zip(uniq.tolist(), cnt.tolist())))
        self.total += int(cnt.sum())

    def distance(self, other: "DistributionTable") -> Fraction:
        """Total-variation distance between the two empirical distributions."""
        keys = set(self.counts) | set(other.counts)
        diff = sum(
            abs(Fraction(self.counts.get(k, 0), self.total) - Fraction(other.counts.get(k, 0), other.total))
            for k in keys
        )
        return diff / 2

    def is_uniform(self, support: int) -> bool:
        return len(self.counts) == support and len(set(self.counts.values())) == 1


@dataclass
class OracleReport:
    check: str
    params: dict
    enumerated: int
    distance: Fraction
    passed: bool
    per_database: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "params": self.params,
            "enumerated": self.enumerated,
            "distance": str(self.distance),
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _noise_batches(q: int, dims: int, limit: int):
    total = q**dims
    if total > limit:
        raise TooLarge(total, limit)
    radix = q ** np.arange(dims, dtype=np.int64)
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(start + CHUNK, total), dtype=np.int64)
        yield (idx[:, None] // radix) % q


def _keys(obs: np.ndarray, q: int) -> np.ndarray:
    """Encode each observation row (flattened trailing dims) as one integer."""
    flat = obs.reshape(obs.shape[0], -1).astype(np.int64)
    if q ** flat.shape[1] >= 2**63:
        raise TooLarge(q ** flat.shape[1], 2**63)
    radix = q ** np.arange(flat.shape[1], dtype=np.int64)
    return (flat * radix).sum(axis=1)


def _summary(params: codec.SchemeParams) -> dict:
    return {"q": params.field.q, "M": params.M, "r": params.r, "K": params.K, "x": params.x, "y": params.y}


def _compare(check, params, enumerated, tables_a, tables_b) -> OracleReport:
    per_db = {n: tables_a[n].distance(tables_b[n]) for n in tables_a}
    worst = max(per_db.values(), default=Fraction(0))
    return OracleReport(check, _summary(params), enumerated, worst, worst == 0, per_db)


def check_query_privacy(params, thetas=(1, 2), zero_noise=False, limit=DEFAULT_LIMIT) -> OracleReport:
    """Queries seen by each database have the same distribution for both indices."""
    q = params.field.q
    shape = (params.K, params.y, params.M)
    dims = int(np.prod(shape))
    tables = {theta: {n: DistributionTable() for n in range(params.r)} for theta in thetas}
    enumerated = 0
    for digits in _noise_batches(q, dims, limit):
        Z = digits.reshape(-1, *shape)
        if zero_noise:
            Z = np.zeros_like(Z)
        enumerated += Z.shape[0]
        for theta in thetas:
            for n in range(params.r):
                tables[theta][n].merge(_keys(codec.query_vectors(theta, Z, params, n), q))
    a, b = thetas
    return _compare("query_privacy", params, enumerated, tables[a], tables[b])


def check_update_privacy(params, deltas, thetas=(1, 2), zero_noise=False, limit=DEFAULT_LIMIT) -> OracleReport:
    """Update scalars at every receiving database are uniform whatever the delta or index.

    ``deltas`` is a pair of ``(y, K)`` arrays; the pairs ``(deltas[0], thetas[0])``
    and ``(deltas[1], thetas[1])`` are the two worlds compared.
    """
    q = params.field.q
    tables = [{n: DistributionTable() for n in params.receivers} for _ in range(2)]
    enumerated = 0
    for digits in _noise_batches(q, params.K, limit):
        zhat = np.zeros_like(digits) if zero_noise else digits
        enumerated += zhat.shape[0]
        for world, (delta, theta) in enumerate(zip(deltas, thetas)):
            codec._check_theta(theta, params.M)  # U does not depend on theta
            for n in params.receivers:
                tables[world][n].merge(_keys(codec.update_scalars(delta, zhat, params, n), q))
    report = _compare("update_privacy", params, enumerated, tables[0], tables[1])
    uniform = all(t.is_uniform(q**params.K) for world in tables for t in world.values())
    report.passed = report.passed and uniform
    return report


def check_storage_security(params, models, zero_noise=False, limit=DEFAULT_LIMIT) -> OracleReport:
    """Each database's encoded subpacket has the same distribution for both models.

    ``models`` is a pair of ``(M, y, K)`` plain subpackets.
    """
    q = params.field.q
    shape = (params.y, params.x + 1, params.M)
    dims = int(np.prod(shape))
    tables = [{n: DistributionTable() for n in range(params.r)} for _ in range(2)]
    enumerated = 0
    for digits in _noise_batches(q, dims, limit):
        I = digits.reshape(-1, *shape)
        if zero_noise:
            I = np.zeros_like(I)
        enumerated += I.shape[0]
        for world, plain in enumerate(models):
            for n in range(params.r):
                tables[world][n].merge(_keys(codec.encode_storage(plain, I, params, n), q))
    return _compare("storage_security", params, enumerated, tables[0], tables[1])


def run_default_suite(q=13, M=2, schemes=((4, 1), (6, 2)), seed=0, limit=DEFAULT_LIMIT) -> list[OracleReport]:
    """The three checks at desk scale, each paired with its zeroed-noise inversion."""
    F = PrimeField(q)
    rng = np.random.default_rng(seed)
    reports = []
    for r, K in schemes:
        params = codec.make_params(r, K, M, F, seed=seed)
        d1, d2 = F.random(rng, (params.y, K)), F.random(rng, (params.y, K))
        while (d1 == d2).all():
            d2 = F.random(rng, (params.y, K))
        w1, w2 = F.random(rng, (M, params.y, K)), F.random(rng, (M, params.y, K))
        while (w1 == w2).all():
            w2 = F.random(rng, (M, params.y, K))
        reports.append(check_query_privacy(params, (1, 2), limit=limit))
        reports.append(check_update_privacy(params, (d1, d2), (1, 2), limit=limit))
        reports.append(check_storage_security(params, (w1, w2), limit=limit))
        for rep in (
            check_query_privacy(params, (1, 2), zero_noise=True, limit=limit),
            check_update_privacy(params, (d1, d2), (1, 2), zero_noise=True, limit=limit),
            check_storage_security(params, (w1, w2), zero_noise=True, limit=limit),
        ):
            rep.check += "_zeroed"
            reports.append(rep)
    return reports
