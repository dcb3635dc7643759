import math

import numpy as np
import pytest

from oracles import brute_pair_weights, central_diff, frozen_weight_cost

from alrank.dataset import parse_letor
from alrank.lambdas import objective_lambdas


def _one_query(n, rng, max_grade=4):
    lines = [f"{rng.integers(0, max_grade + 1)} qid:q 1:{rng.uniform():.6f}"
             for _ in range(n)]
    return parse_letor("\n".join(lines))


def test_uniform_grades_give_zero():
    ds = parse_letor("2 qid:q 1:0.1\n2 qid:q 1:0.2\n2 qid:q 1:0.3")
    pair = objective_lambdas(ds, ds.labels, np.array([0.5, -0.2, 0.1]))
    assert pair.lam.tolist() == [0.0, 0.0, 0.0]
    assert pair.hess.tolist() == [0.0, 0.0, 0.0]


def test_single_pair_equal_scores():
    # rho = 1/2, so each side gets w/2 (single query: no count division)
    ds = parse_letor("1 qid:q 1:0.1\n0 qid:q 1:0.2")
    pair = objective_lambdas(ds, ds.labels, np.zeros(2), k=10, sigma=1.0)
    w = 1.0 - 1.0 / math.log2(3)
    assert pair.lam[0] == pytest.approx(-w / 2.0, abs=1e-15)
    assert pair.lam[1] == pytest.approx(+w / 2.0, abs=1e-15)
    assert pair.hess[0] == pytest.approx(w * 0.25, abs=1e-15)


def test_sign_pushes_higher_grade_up():
    ds = parse_letor("2 qid:q 1:0.1\n0 qid:q 1:0.2")
    pair = objective_lambdas(ds, ds.labels, np.array([-1.0, 1.0]))
    # gradient of the cost: negative for the under-ranked better document
    assert pair.lam[0] < 0.0
    assert pair.lam[1] > 0.0


def test_zero_sum_per_query():
    rng = np.random.default_rng(41)
    lines = []
    for q in range(30):
        for _ in range(int(rng.integers(2, 15))):
            lines.append(f"{rng.integers(0, 5)} qid:q{q} 1:{rng.uniform():.6f}")
    ds = parse_letor("\n".join(lines))
    scores = rng.normal(size=ds.n_docs)
    pair = objective_lambdas(ds, ds.labels, scores)
    for g in ds.groups:
        assert abs(pair.lam[g.start:g.end].sum()) < 1e-9


def test_hessians_nonnegative():
    rng = np.random.default_rng(43)
    ds = _one_query(25, rng)
    pair = objective_lambdas(ds, ds.labels, rng.normal(size=25))
    assert np.all(pair.hess >= 0.0)


def test_query_count_division():
    # Two identical queries: per-document lambdas halve versus one query.
    one = parse_letor("1 qid:a 1:0.1\n0 qid:a 1:0.2")
    two = parse_letor("1 qid:a 1:0.1\n0 qid:a 1:0.2\n1 qid:b 1:0.1\n0 qid:b 1:0.2")
    s1 = np.array([0.3, -0.1])
    s2 = np.array([0.3, -0.1, 0.3, -0.1])
    p1 = objective_lambdas(one, one.labels, s1)
    p2 = objective_lambdas(two, two.labels, s2)
    assert p2.lam[0] == pytest.approx(p1.lam[0] / 2.0, abs=1e-15)


def test_matches_finite_differences():
    # Central differences of the frozen-|dNDCG| cost; perturbations keep the
    # ordering intact so the weights really are locally constant.
    rng = np.random.default_rng(47)
    step = 1e-5
    for _ in range(5):
        n = 20
        grades = rng.integers(0, 5, n)
        lines = [f"{g} qid:q 1:{rng.uniform():.6f}" for g in grades]
        ds = parse_letor("\n".join(lines))
        scores = np.sort(rng.normal(size=n) * 2.0)
        rng.shuffle(scores)
        # enforce pairwise gaps well above the step
        scores = np.argsort(np.argsort(scores)) * 0.01 + scores * 0.0
        scores = scores + rng.normal(size=n) * 1e-8
        pair = objective_lambdas(ds, ds.labels, scores, k=10, sigma=1.0)
        weights = brute_pair_weights(grades.tolist(), scores.tolist(), 10)

        def cost(s):
            return frozen_weight_cost(weights, s, 1.0)

        for i in range(n):
            fd = central_diff(cost, scores.tolist(), i, step)
            if abs(pair.lam[i]) > 1e-8:
                assert fd == pytest.approx(pair.lam[i], rel=1e-4)


def test_scores_alignment_validated():
    ds = parse_letor("1 qid:q 1:0.1\n0 qid:q 1:0.2")
    with pytest.raises(ValueError):
        objective_lambdas(ds, ds.labels, np.zeros(3))
