"""Brute-force oracles, deliberately independent of the package internals.

Everything here uses plain Python sorting and math on small inputs: explicit
rank loops for DCG, pair enumeration for the surrogate cost, and central
finite differences for gradients.  Tests compare the fast implementations
against these.
"""
from __future__ import annotations

import math


def brute_dcg(grades_in_rank_order, k):
    return sum((2 ** int(g) - 1) / math.log2(r + 2)
               for r, g in enumerate(list(grades_in_rank_order)[:k]))


def brute_rank_order(scores):
    return sorted(range(len(scores)), key=lambda i: (-scores[i], i))


def brute_ndcg(grades, scores, k):
    grades = list(grades)
    ideal = sorted(grades, reverse=True)
    idcg = brute_dcg(ideal, k)
    if idcg == 0:
        return 1.0
    order = brute_rank_order(scores)
    return brute_dcg([grades[i] for i in order], k) / idcg


def brute_pair_weights(grades, scores, k):
    """|dNDCG| for every ordered pair with grade_i > grade_j, computed by
    actually swapping the two documents in the current ranking."""
    grades = list(grades)
    n = len(grades)
    order = brute_rank_order(scores)
    rank_of = {doc: r for r, doc in enumerate(order)}
    ideal = sorted(grades, reverse=True)
    idcg = brute_dcg(ideal, k)
    weights = {}
    for i in range(n):
        for j in range(n):
            if grades[i] > grades[j]:
                swapped = list(order)
                ri, rj = rank_of[i], rank_of[j]
                swapped[ri], swapped[rj] = swapped[rj], swapped[ri]
                base = brute_dcg([grades[d] for d in order], k)
                after = brute_dcg([grades[d] for d in swapped], k)
                weights[(i, j)] = abs(after - base) / idcg if idcg > 0 else 0.0
    return weights


def brute_query_cost(grades, scores, k, sigma):
    weights = brute_pair_weights(grades, scores, k)
    total = 0.0
    for (i, j), w in weights.items():
        t = sigma * (scores[i] - scores[j])
        total += w * math.log1p(math.exp(-t)) if t >= 0 \
            else w * (-t + math.log1p(math.exp(t)))
    return total


def frozen_weight_cost(weights, scores, sigma):
    """Pairwise logistic cost at fixed |dNDCG| weights (the within-round view
    of the cost; finite differences of this match the lambdas)."""
    total = 0.0
    for (i, j), w in weights.items():
        t = sigma * (scores[i] - scores[j])
        total += w * math.log1p(math.exp(-t)) if t >= 0 \
            else w * (-t + math.log1p(math.exp(t)))
    return total


def central_diff(fn, x, i, step):
    up = list(x)
    dn = list(x)
    up[i] += step
    dn[i] -= step
    return (fn(up) - fn(dn)) / (2.0 * step)
