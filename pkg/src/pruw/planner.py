"""Storage planner: achievable (mu, cost) points, their lower convex hull,
memory-sharing allocation plans, cost lower bounds, and exact checks of the
two structural lemmas about the hybrid scheme.

Everything here is exact ``Fraction`` arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import InfeasibleParams, StorageOutOfRange, TooFewDatabases


def optimal_x(r: int, K: int) -> tuple[int, int]:
    """Return ``(x, y)``: noise degree and subpacketization for ``(r, K)``.

    ``r = y + x + K + 1`` always holds. When ``r - K - 1`` is odd one extra
    noise term is needed (``x = y + 1``), which the null shaper absorbs.
    """
    if K < 1 or K > r - 3:
        raise InfeasibleParams(f"(r={r}, K={K}) needs 1 <= K <= r-3")
    if (r - K - 1) % 2 == 0:
        x = y = (r - K - 1) // 2
    else:
        x = (r - K) // 2
        y = x - 1
    if y < 1:
        raise InfeasibleParams(f"(r={r}, K={K}) gives subpacketization y={y} < 1")
    return x, y


def total_cost(r: int, K: int) -> Fraction:
    x, y = optimal_x(r, K)
    return Fraction(3 * r - 2 * x - K - 1, r - x - K - 1)


def read_cost(r: int, K: int) -> Fraction:
    x, y = optimal_x(r, K)
    return Fraction(r, y)


def write_cost(r: int, K: int) -> Fraction:
    x, y = optimal_x(r, K)
    return Fraction(r - (x - y), y)


def is_feasible(r: int, K: int) -> bool:
    try:
        optimal_x(r, K)
    except InfeasibleParams:
        return False
    return True


@dataclass(frozen=True, order=True)
class BasicPoint:
    mu: Fraction
    cost: Fraction
    r: int
    K: int

    @property
    def parity(self) -> str:
        return "even" if (self.r - self.K - 1) % 2 == 0 else "odd"

    @classmethod
    def of(cls, N: int, r: int, K: int) -> "BasicPoint":
        return cls(Fraction(r, N * K), total_cost(r, K), r, K)


def enumerate_basic_points(N: int, include_odd: bool = False) -> list[BasicPoint]:
    """All feasible ``(r, K_r)`` pairs for ``N`` databases, sorted by mu."""
    if N < 4:
        raise TooFewDatabases(f"need N >= 4 databases, got {N}")
    points = []
    for r in range(4, N + 1):
        for K in range(1, r - 2):
            if not is_feasible(r, K):
                continue
            if (r - K - 1) % 2 and not include_odd:
                continue
            points.append(BasicPoint.of(N, r, K))
    return sorted(points)


def _cross(o, a, b) -> Fraction:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class HullCurve:
    """Piecewise-linear lower hull; ``points`` strictly increasing in mu."""

    points: tuple[BasicPoint, ...]

    @property
    def vertices(self) -> list[tuple[Fraction, Fraction]]:
        return [(p.mu, p.cost) for p in self.points]

    @property
    def mu_min(self) -> Fraction:
        return self.points[0].mu

    @property
    def mu_max(self) -> Fraction:
        return self.points[-1].mu

    def bracket(self, mu: Fraction) -> tuple[BasicPoint, BasicPoint | None]:
        """Vertex at ``mu`` (second item None) or the two vertices around it."""
        mu = Fraction(mu)
        if mu < self.mu_min or mu > self.mu_max:
            raise StorageOutOfRange(f"mu={mu} outside hull domain [{self.mu_min}, {self.mu_max}]")
        for i, p in enumerate(self.points):
            if p.mu == mu:
                return p, None
            if p.mu > mu:
                return self.points[i - 1], p
        raise AssertionError("unreachable")

    def __call__(self, mu) -> Fraction:
        """Hull value at ``mu``; flat beyond the last vertex (extra storage is unused)."""
        mu = Fraction(mu)
        if mu > self.mu_max:
            return self.points[-1].cost
        lo, hi = self.bracket(mu)
        if hi is None:
            return lo.cost
        t = (hi.mu - mu) / (hi.mu - lo.mu)
        return t * lo.cost + (1 - t) * hi.cost


def lower_hull(points: Iterable[BasicPoint]) -> HullCurve:
    """Lower convex hull by monotone chain; collinear vertices are dropped."""
    best: dict[Fraction, BasicPoint] = {}
    for p in points:
        if p.mu not in best or p.cost < best[p.mu].cost:
            best[p.mu] = p
    if not best:
        raise ValueError("lower_hull needs at least one point")
    chain: list[BasicPoint] = []
    for p in sorted(best.values()):
        while len(chain) >= 2 and _cross(
            (chain[-2].mu, chain[-2].cost), (chain[-1].mu, chain[-1].cost), (p.mu, p.cost)
        ) <= 0:
            chain.pop()
        chain.append(p)
    return HullCurve(tuple(chain))


def hybrid_hull(N: int) -> HullCurve:
    return lower_hull(enumerate_basic_points(N))


@dataclass(frozen=True)
class PlanPart:
    r: int
    K: int
    fraction: Fraction

    @property
    def x(self) -> int:
        return optimal_x(self.r, self.K)[0]

    @property
    def y(self) -> int:
        return optimal_x(self.r, self.K)[1]


@dataclass(frozen=True)
class AllocationPlan:
    N: int
    mu_target: Fraction
    parts: tuple[PlanPart, ...]
    predicted_cost: Fraction

    @property
    def mu_used(self) -> Fraction:
        """Storage fraction actually used; below ``mu_target`` only past the hull's last vertex."""
        return sum((p.fraction * Fraction(p.r, self.N * p.K) for p in self.parts), Fraction(0))

    @property
    def gamma(self) -> Fraction:
        return self.parts[0].fraction

    @property
    def read_cost(self) -> Fraction:
        return sum((p.fraction * read_cost(p.r, p.K) for p in self.parts), Fraction(0))

    @property
    def write_cost(self) -> Fraction:
        return sum((p.fraction * write_cost(p.r, p.K) for p in self.parts), Fraction(0))

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "mu": str(self.mu_target),
            "parts": [
                {"r": p.r, "K": p.K, "fraction_num": p.fraction.numerator, "fraction_den": p.fraction.denominator}
                for p in self.parts
            ],
            "predicted_cost": str(self.predicted_cost),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "AllocationPlan":
        parts = tuple(
            PlanPart(p["r"], p["K"], Fraction(p["fraction_num"], p["fraction_den"])) for p in d["parts"]
        )
        return cls(d["N"], Fraction(d["mu"]), parts, Fraction(d["predicted_cost"]))


def storage_range(N: int) -> tuple[Fraction, Fraction]:
    if N < 4:
        raise TooFewDatabases(f"need N >= 4 databases, got {N}")
    return Fraction(1, N - 3), Fraction(1)


def plan(N: int, mu) -> AllocationPlan:
    """Cheapest hybrid allocation meeting per-database storage ``mu * M * L``.

    Between two hull vertices ``mu1 < mu < mu2`` a fraction
    ``gamma = (mu2 - mu) / (mu2 - mu1)`` of every submodel goes to the
    ``mu1`` scheme and the rest to the ``mu2`` scheme.
    """
    mu = Fraction(mu)
    lo_mu, hi_mu = storage_range(N)
    if not lo_mu <= mu <= hi_mu:
        raise StorageOutOfRange(f"mu={mu} outside [{lo_mu}, {hi_mu}] for N={N}")
    hull = hybrid_hull(N)
    if mu >= hull.mu_max:
        # odd N: no even-parity point reaches mu=1, the last vertex already has the lowest cost
        p = hull.points[-1]
        return AllocationPlan(N, mu, (PlanPart(p.r, p.K, Fraction(1)),), p.cost)
    lo, hi = hull.bracket(mu)
    if hi is None:
        return AllocationPlan(N, mu, (PlanPart(lo.r, lo.K, Fraction(1)),), lo.cost)
    gamma = (hi.mu - mu) / (hi.mu - lo.mu)
    cost = gamma * lo.cost + (1 - gamma) * hi.cost
    return AllocationPlan(N, mu, (PlanPart(lo.r, lo.K, gamma), PlanPart(hi.r, hi.K, 1 - gamma)), cost)


def memory_share(p1: tuple, p2: tuple, gamma) -> tuple[Fraction, Fraction]:
    """Combine two achievable ``(mu, cost)`` pairs with weight ``gamma`` on the first."""
    gamma = Fraction(gamma)
    if not 0 <= gamma <= 1:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    return (
        gamma * p1[0] + (1 - gamma) * p2[0],
        gamma * p1[1] + (1 - gamma) * p2[1],
    )


# -- lower bounds ---------------------------------------------------------


def _bound(num: Fraction, den: Fraction) -> Fraction | None:
    return num / den if den > 0 else None


def lb_per_K(N: int, mu, K: int) -> Fraction | None:
    mu = Fraction(mu)
    if mu > Fraction(1, K):
        return None
    return _bound(4 * N * mu, N * mu - 1 - Fraction(1, K))


def lb_per_r(N: int, mu, r: int) -> Fraction | None:
    mu = Fraction(mu)
    if mu > Fraction(r, N):
        return None
    return _bound(4 * N * mu, N * mu - 1 - N * mu / r)


def lb_divided(N: int, mu) -> Fraction | None:
    mu = Fraction(mu)
    return _bound(4 * N * mu, N * mu - 2)


def lb_coded(N: int, mu) -> Fraction | None:
    mu = Fraction(mu)
    return _bound(4 * N * mu, N * mu - 1 - mu)


def lb_curves(N: int, mu) -> dict:
    """All lower bounds at ``mu``; entries outside their domain are omitted."""
    mu = Fraction(mu)
    per_K = {K: v for K in range(1, N - 2) if (v := lb_per_K(N, mu, K)) is not None}
    per_r = {r: v for r in range(4, N + 1) if (v := lb_per_r(N, mu, r)) is not None}
    return {
        "lb_per_K": per_K,
        "lb_per_r": per_r,
        "lb_divided": lb_divided(N, mu),
        "lb_coded": lb_coded(N, mu),
    }


# -- lemma checks ---------------------------------------------------------


@dataclass
class CheckRow:
    label: str
    passed: bool
    detail: str = ""


@dataclass
class VerificationReport:
    name: str
    N: int
    rows: list[CheckRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    def add(self, label, passed, detail=""):
        self.rows.append(CheckRow(label, bool(passed), detail))


def verify_lemma2(N: int) -> VerificationReport:
    """Every odd-parity point is beaten by sharing between its even neighbours.

    For ``(r, K)`` with ``r - K - 1`` odd the neighbours are ``(r-1, K)`` and
    ``(r+1, K)`` at equal weight. When ``r = N`` there is no ``(r+1, K)``
    scheme, so the odd point is compared against the hybrid hull instead.
    """
    report = VerificationReport("lemma2", N)
    hull = hybrid_hull(N)
    for p in enumerate_basic_points(N, include_odd=True):
        if p.parity == "even":
            continue
        label = f"(r={p.r},K={p.K})"
        direct = p.cost
        hull_value = hull(p.mu)
        if p.r + 1 <= N:
            lo = BasicPoint.of(N, p.r - 1, p.K)
            hi = BasicPoint.of(N, p.r + 1, p.K)
            gamma = (hi.mu - p.mu) / (hi.mu - lo.mu)
            mu_mix, combo = memory_share((lo.mu, lo.cost), (hi.mu, hi.cost), gamma)
            ok = mu_mix == p.mu and hi.cost < combo < lo.cost < direct and hull_value < direct
            detail = f"direct={direct} combo={combo} C(mu1)={lo.cost} C(mu2)={hi.cost}"
        else:
            ok = hull_value < direct
            detail = f"direct={direct} hull={hull_value} (no r+1 neighbour)"
        report.add(label, ok, detail)
    return report


def _breakpoints(curves: Sequence[HullCurve]) -> list[Fraction]:
    xs = sorted({v[0] for c in curves for v in c.vertices})
    mids = [(a + b) / 2 for a, b in zip(xs, xs[1:])]
    return sorted(set(xs) | set(mids))


def verify_lemma3(N: int) -> VerificationReport:
    """Hull from ``r in {N, N-1, N-2}`` equals the full hull and beats divided/coded."""
    report = VerificationReport("lemma3", N)
    even = enumerate_basic_points(N)
    full = lower_hull(even)
    top3 = lower_hull([p for p in even if p.r >= N - 2])
    report.add("hull(all) == hull(r>=N-2)", full.vertices == top3.vertices, f"{len(full.vertices)} vertices")
    divided_pts = [p for p in even if p.K == 1]
    coded_pts = [p for p in even if p.r == N]
    baselines = {}
    if divided_pts:
        baselines["divided"] = lower_hull(divided_pts)
    if coded_pts:
        baselines["coded"] = lower_hull(coded_pts)
    for mu in _breakpoints([top3, *baselines.values()]):
        if not full.mu_min <= mu <= 1:
            continue
        h = top3(mu)
        for name, curve in baselines.items():
            if curve.mu_min <= mu <= curve.mu_max:
                report.add(f"mu={mu} vs {name}", h <= curve(mu), f"hybrid={h} {name}={curve(mu)}")
    return report
