import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwave_assoc.allocation import (Association, Direct, Relayed, allocate, check_feasible,
                                     objective, objective_from_weights, optimal_fractions,
                                     optimal_rates, pair_rates, utility_weight_direct,
                                     utility_weight_relayed)
from mmwave_assoc.channel import RateMatrix
from mmwave_assoc.errors import InfeasibleLinkError

from conftest import random_association, random_rates


def pair_instance(c_ij, c_jk):
    return RateMatrix([[c_ij]], [[0.0]], [[c_jk]])


PAIR = Association((Relayed(0, 0),), (0,), 1)


@pytest.mark.parametrize("c_ij,c_jk,r_i,r_j", [(4, 6, 3, 3), (1, 6, 1, 5)])
def test_pair_rate_examples(c_ij, c_jk, r_i, r_j):
    rc, rr = optimal_rates(PAIR, pair_instance(c_ij, c_jk))
    assert (rc[0], rr[0]) == (r_i, r_j)


def test_direct_rate_example():
    r = RateMatrix(np.zeros((1, 0)), [[2.5]], np.zeros((0, 1)))
    rc, rr = optimal_rates(Association((Direct(0),), (), 1), r)
    assert rc[0] == 2.5 and rr.size == 0


def test_zero_rate_link_raises():
    with pytest.raises(InfeasibleLinkError):
        optimal_rates(PAIR, pair_instance(0.0, 5.0))
    with pytest.raises(InfeasibleLinkError):
        optimal_rates(PAIR, pair_instance(2.0, 0.0))


def test_pair_rate_grid_oracle(rng):
    for _ in range(200):
        c_ij, c_jk = rng.uniform(0.05, 10, 2)
        grid = np.arange(1e-3, c_ij + 1e-12, 1e-3)
        grid = grid[grid < c_jk]
        best = grid[np.argmax(np.log(grid) + np.log(c_jk - grid))]
        r_i, _ = pair_rates(c_ij, c_jk)
        assert abs(r_i - best) <= 1e-3 + 1e-9


def _fractions_grid(n_pairs, n_singles, step=1e-3):
    """Maximize prod y_pair^2 * prod y_single over the simplex by grid search.

    Only two distinct shares exist at the optimum by symmetry, so the grid
    runs over the total pair share.
    """
    best = (-math.inf, None)
    for s in np.arange(step, 1.0, step) if n_pairs and n_singles else [1.0 if n_pairs else 0.0]:
        yp = s / n_pairs if n_pairs else 0.0
        ys = (1 - s) / n_singles if n_singles else 0.0
        val = (2 * n_pairs * math.log(yp) if n_pairs else 0) + (n_singles * math.log(ys) if n_singles else 0)
        if val > best[0]:
            best = (val, (yp, ys))
    return best[1]


@pytest.mark.parametrize("pairs,singles", [(1, 1), (1, 2), (2, 3), (3, 1), (0, 4), (2, 0)])
def test_fraction_grid_oracle(pairs, singles):
    clients = [Relayed(j, 0) for j in range(pairs)] + [Direct(0)] * singles
    assoc = Association(tuple(clients), (0,) * pairs, 1)
    yc, yr, n = optimal_fractions(assoc)
    yp, ys = _fractions_grid(pairs, singles)
    if pairs:
        assert yc[0] == pytest.approx(yp, abs=1e-3)
    if singles:
        assert yc[-1] == pytest.approx(ys, abs=1e-3)


def test_fraction_examples():
    assoc = Association((Direct(0), Direct(0), Relayed(0, 0)), (0,), 1)
    yc, yr, n = optimal_fractions(assoc)
    assert n[0] == 4
    assert list(yc) == [0.25, 0.25, 0.5] and yr[0] == 0.5
    assert optimal_fractions(Association((Direct(0),), (), 1))[0][0] == 1.0
    yc, yr, n = optimal_fractions(Association((Relayed(0, 0), Relayed(1, 0)), (0, 0), 1))
    assert list(yc) == [0.5, 0.5] and n[0] == 4


def test_empty_ap_is_fine():
    yc, yr, n = optimal_fractions(Association((Direct(1),), (), 3))
    assert list(n) == [0, 1, 0] and yc[0] == 1.0


def test_weight_examples():
    assert utility_weight_direct(3.7) == 3.7
    assert utility_weight_direct(0) == 0
    assert utility_weight_relayed(4, 6) == 6
    assert utility_weight_relayed(1, 4) == 3
    assert utility_weight_relayed(2, 4) == 4
    assert utility_weight_relayed(3, 0) == 0


@given(st.floats(0.01, 50), st.floats(0.01, 50))
def test_relayed_weight_log_identity(c_ij, c_jk):
    r_i, r_j = pair_rates(c_ij, c_jk)
    lhs = math.log(utility_weight_relayed(c_ij, c_jk))
    rhs = math.log(2 * r_i) + math.log(2 * r_j) - math.log(c_jk)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_objective_examples():
    r = RateMatrix(np.zeros((1, 0)), [[2.0]], np.zeros((0, 1)))
    assert objective(Association((Direct(0),), (), 1), r) == pytest.approx(math.log(2))
    r = pair_instance(4.0, 6.0)
    assert objective(PAIR, r) == pytest.approx(2 * math.log(3))
    assert objective_from_weights(PAIR, r) == pytest.approx(math.log(9))


def test_objective_zero_rate_is_minus_inf():
    assert objective(PAIR, pair_instance(0.0, 6.0)) == -math.inf


def test_objective_identity_random(rng):
    for _ in range(300):
        m, n, k = rng.integers(1, 7), rng.integers(0, 4), rng.integers(1, 4)
        r = random_rates(rng, m, n, k)
        a = random_association(rng, m, n, k)
        assert objective(a, r) == pytest.approx(objective_from_weights(a, r), abs=1e-9)


def test_resource_conservation(rng):
    for _ in range(100):
        a = random_association(rng, 6, 3, 3)
        yc, yr, n = optimal_fractions(a)
        helper = a.helper_of()
        for k in range(3):
            if n[k] == 0:
                continue
            # each pair holds a single shared fraction
            total = sum(yc[i] for i, p in enumerate(a.clients) if p.ap == k)
            total += sum(yr[j] for j, ap in enumerate(a.relays) if ap == k and j not in helper)
            assert total == pytest.approx(1.0)


def test_check_feasible_reports():
    assert check_feasible(Association((Direct(0), Relayed(0, 1)), (1,), 2)) == []
    two_aps = (np.array([[1, 1]]), np.zeros((1, 0)), np.zeros((0, 2)))
    v = check_feasible(two_aps)
    assert [x.constraint for x in v] == ["client-single-path"]
    two_clients = (np.zeros((2, 1)), np.array([[1], [1]]), np.array([[1]]))
    assert [x.constraint for x in check_feasible(two_clients)] == ["relay-capacity"]
    mismatch = Association((Relayed(0, 1),), (0,), 2)
    assert [x.constraint for x in check_feasible(mismatch)] == ["pair-ap-consistency"]
    no_ap = (np.ones((1, 1)), np.zeros((1, 1)), np.zeros((1, 1)))
    assert [x.constraint for x in check_feasible(no_ap)] == ["relay-single-ap"]
    non_binary = (np.array([[2]]), np.zeros((1, 0)), np.zeros((0, 1)))
    assert "binary" in [x.constraint for x in check_feasible(non_binary)]


def test_indicator_round_trip(rng):
    for _ in range(50):
        a = random_association(rng, 5, 3, 2)
        assert Association.from_indicators(*a.indicators()) == a


def test_allocation_csv():
    r = pair_instance(4.0, 6.0)
    res = allocate(PAIR, r)
    buf = io.StringIO()
    res.to_csv(buf, PAIR)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "node,role,ap,relay,rate,fraction"
    assert lines[1] == "client:0,client,0,relay:0,3.0,1.0"
    assert lines[2] == "relay:0,relay-assisting,0,,3.0,1.0"
