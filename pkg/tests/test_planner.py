from fractions import Fraction as Fr
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pruw import planner
from pruw.errors import InfeasibleParams, StorageOutOfRange, TooFewDatabases
from pruw.planner import BasicPoint, enumerate_basic_points, lower_hull, optimal_x, plan, total_cost


def brute_feasible_pairs(N, include_odd):
    """Independent enumeration: y >= 1 from r = y + x + K + 1, x = y or y + 1."""
    out = set()
    for r in range(1, N + 1):
        for K in range(1, r + 1):
            for extra in (0, 1):  # x - y
                y2 = r - K - 1 - extra
                if y2 >= 2 and y2 % 2 == 0 and (extra == 0) == ((r - K - 1) % 2 == 0):
                    if extra == 0 or include_odd:
                        out.add((r, K))
    return out


@pytest.mark.parametrize("r,K,expected", [(7, 2, (2, 2)), (6, 1, (2, 2)), (6, 2, (2, 1)), (4, 1, (1, 1))])
def test_optimal_x(r, K, expected):
    x, y = optimal_x(r, K)
    assert (x, y) == expected
    assert r == y + x + K + 1


@pytest.mark.parametrize("r,K", [(4, 2), (5, 0), (3, 1), (6, 4)])
def test_optimal_x_infeasible(r, K):
    with pytest.raises(InfeasibleParams):
        optimal_x(r, K)


def test_total_cost_examples():
    assert total_cost(7, 2) == 7
    assert total_cost(6, 1) == 6
    assert total_cost(5, 2) == 10
    assert Fr(5, 10 * 2) == Fr(1, 4)
    # odd parity uses the shaped formula
    assert total_cost(6, 2) == Fr(4 * 6 - 2, 6 - 2 - 2)


@pytest.mark.parametrize("N", range(4, 13))
@pytest.mark.parametrize("include_odd", [False, True])
def test_enumeration_matches_brute_force(N, include_odd):
    got = {(p.r, p.K) for p in enumerate_basic_points(N, include_odd)}
    assert got == brute_feasible_pairs(N, include_odd)


def test_enumeration_examples():
    n10 = {(p.r, p.K): p.mu for p in enumerate_basic_points(10)}
    assert n10[(10, 1)] == 1 and n10[(9, 2)] == Fr(9, 20)
    assert n10[(8, 3)] == Fr(8, 30) == Fr(4, 15)
    assert n10[(10, 3)] == Fr(1, 3)
    n8 = {(p.r, p.K): p.mu for p in enumerate_basic_points(8)}
    assert n8[(7, 2)] == Fr(7, 16) and n8[(6, 1)] == Fr(3, 4)
    n4 = enumerate_basic_points(4)
    assert [(p.r, p.K, p.mu) for p in n4] == [(4, 1, 1)]
    with pytest.raises(TooFewDatabases):
        enumerate_basic_points(3)


def test_hull_trivial_cases():
    p = BasicPoint(Fr(1, 2), Fr(3), 4, 1)
    assert lower_hull([p]).vertices == [(Fr(1, 2), Fr(3))]
    pts = [BasicPoint(Fr(i), Fr(10 - 2 * i), 4, 1) for i in range(3)]
    assert lower_hull(pts).vertices == [(0, 10), (2, 6)]


def test_hull_keeps_cheapest_duplicate_mu():
    a = BasicPoint(Fr(1, 2), Fr(5), 4, 1)
    b = BasicPoint(Fr(1, 2), Fr(4), 8, 2)
    c = BasicPoint(Fr(1), Fr(1), 4, 1)
    assert lower_hull([a, b, c]).vertices == [(Fr(1, 2), 4), (1, 1)]


def test_hull_n10_uses_top_three_r():
    hull = planner.hybrid_hull(10)
    assert {p.r for p in hull.points} <= {8, 9, 10}


def test_hull_n8_vertices():
    # vertices around the mu=0.7 example: 7/16 -> (7,2), 3/4 -> (6,1)
    verts = dict(planner.hybrid_hull(8).vertices)
    assert verts[Fr(7, 16)] == 7 and verts[Fr(3, 4)] == 6


def chord_min(points, mu):
    """Brute force: cheapest memory-sharing combination of any two points at ``mu``."""
    best = None
    for p in points:
        if p.mu == mu:
            best = p.cost if best is None else min(best, p.cost)
    for p, q in combinations(points, 2):
        lo, hi = sorted((p, q), key=lambda t: t.mu)
        if lo.mu < mu < hi.mu:
            g = (hi.mu - mu) / (hi.mu - lo.mu)
            v = g * lo.cost + (1 - g) * hi.cost
            best = v if best is None else min(best, v)
    return best


@pytest.mark.parametrize("N", [5, 8, 10, 11])
def test_hull_is_optimal_on_grid(N):
    pts = enumerate_basic_points(N)
    hull = lower_hull(pts)
    lo = hull.mu_min
    for i in range(61):
        mu = lo + (hull.mu_max - lo) * Fr(i, 60)
        assert hull(mu) == chord_min(pts, mu)


@pytest.mark.parametrize("N", range(4, 14))
def test_hull_monotone_and_convex(N):
    v = planner.hybrid_hull(N).vertices
    assert all(a[1] >= b[1] for a, b in zip(v, v[1:]))
    for a, b, c in zip(v, v[1:], v[2:]):
        chord = a[1] + (c[1] - a[1]) * (b[0] - a[0]) / (c[0] - a[0])
        assert b[1] < chord


def test_plan_examples():
    p = plan(8, Fr(7, 10))
    assert [(q.r, q.K, q.fraction) for q in p.parts] == [(7, 2, Fr(4, 25)), (6, 1, Fr(21, 25))]
    assert p.predicted_cost == Fr(154, 25)
    p = plan(10, 1)
    assert [(q.r, q.K, q.fraction) for q in p.parts] == [(10, 1, 1)] and p.predicted_cost == 5
    p = plan(8, Fr(3, 4))
    assert [(q.r, q.K) for q in p.parts] == [(6, 1)] and p.predicted_cost == 6


@pytest.mark.parametrize("mu", [Fr(1, 100), Fr(1, 8), Fr(11, 10), 0])
def test_plan_out_of_range(mu):
    with pytest.raises(StorageOutOfRange):
        plan(10, mu)


def test_plan_odd_n_above_last_vertex():
    # N=9 has no even-parity point at mu=1; the cheapest scheme (8,1) uses 8/9
    p = plan(9, 1)
    assert [(q.r, q.K) for q in p.parts] == [(8, 1)]
    assert p.mu_used == Fr(8, 9) and p.predicted_cost == Fr(16, 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(5, 14), st.fractions(min_value=0, max_value=1))
def test_plan_storage_identity(N, t):
    lo, hi = planner.storage_range(N)
    mu = lo + (hi - lo) * t
    p = plan(N, mu)
    assert sum(q.fraction for q in p.parts) == 1
    assert all(0 <= q.fraction <= 1 for q in p.parts)
    if mu <= planner.hybrid_hull(N).mu_max:
        assert p.mu_used == mu
    assert p.predicted_cost == planner.hybrid_hull(N)(mu)


def test_plan_json_round_trip():
    p = plan(8, Fr(7, 10))
    d = p.to_dict()
    assert d["parts"][0] == {"r": 7, "K": 2, "fraction_num": 4, "fraction_den": 25}
    assert planner.AllocationPlan.from_dict(d) == p


def test_memory_share():
    mu, cost = planner.memory_share((Fr(7, 16), 7), (Fr(3, 4), 6), Fr(4, 25))
    assert mu == Fr(7, 10) and cost == Fr(154, 25)
    with pytest.raises(ValueError):
        planner.memory_share((0, 0), (1, 1), 2)


def test_lower_bound_examples():
    lb = planner.lb_curves(10, 1)
    assert lb["lb_divided"] == 5 == Fr(40, 8)
    assert lb["lb_coded"] == 5
    assert planner.lb_per_r(10, Fr(1, 4), 5) == 10
    # domain restrictions
    assert planner.lb_per_K(10, Fr(1, 2), 3) is None
    assert planner.lb_per_r(10, Fr(9, 10), 5) is None
    assert planner.lb_divided(10, Fr(1, 5)) is None


@pytest.mark.parametrize("N", range(4, 13))
def test_even_points_lie_on_both_bounds(N):
    for p in enumerate_basic_points(N):
        assert planner.lb_per_K(N, p.mu, p.K) == p.cost
        assert planner.lb_per_r(N, p.mu, p.r) == p.cost


@pytest.mark.parametrize("N", [6, 8, 10, 12])
def test_lower_bound_ordering(N):
    lo, hi = planner.storage_range(N)
    for i in range(41):
        mu = lo + (hi - lo) * Fr(i, 40)
        lb = planner.lb_curves(N, mu)
        for v in lb["lb_per_K"].values():
            assert lb["lb_coded"] is not None and lb["lb_coded"] <= v
        if lb["lb_divided"] is not None:
            for v in lb["lb_per_r"].values():
                assert v <= lb["lb_divided"]


def test_lemma2_examples():
    rep = planner.verify_lemma2(10)
    rows = {row.label: row for row in rep.rows}
    # (7,1) is odd parity: direct 26/4, neighbours (6,1)=6 and (8,1)=16/3 share equally
    assert total_cost(7, 1) == Fr(13, 2)
    assert "combo=17/3" in rows["(r=7,K=1)"].detail
    assert rep.passed
    n8 = planner.verify_lemma2(8)
    assert n8.passed
    assert planner.hybrid_hull(8)(Fr(7, 8)) == Fr(17, 3) < Fr(13, 2)
    # the even (6,1) point is not part of the odd-parity set
    assert "(r=6,K=1)" not in rows


def test_lemma2_no_odd_points_is_vacuous():
    # N=4: the only pair (4,1) is even; the smallest odd pair is (5,1)
    rep = planner.verify_lemma2(4)
    assert rep.rows == [] and rep.passed


@pytest.mark.parametrize("N", [5, 8, 10])
def test_lemma3(N):
    rep = planner.verify_lemma3(N)
    assert rep.passed, [r for r in rep.rows if not r.passed]
