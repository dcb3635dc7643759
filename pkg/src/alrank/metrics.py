"""DCG/NDCG, the pairwise surrogate cost, and cost rescaling.

Conventions (MSLR-standard): gain 2^grade - 1, discount 1/log2(rank + 1)
with 1-based ranks, truncation at K.  Score ties break by ascending document
index.  Queries whose grades are all zero have NDCG 1 and zero cost, so they
are inert.  Dataset-level cost is the mean over queries, which keeps upper
bounds insensitive to dataset size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import TrainingError


def gain_vector(grades) -> np.ndarray:
    """Exponential gains 2^grade - 1 (exact for integer grades)."""
    g = np.asarray(grades, dtype=np.float64)
    return 2.0 ** g - 1.0


def discount_table(n: int, k: int) -> np.ndarray:
    """disc[r] for 0-based rank r: 1/log2(r+2) up to rank k, 0 beyond."""
    disc = np.zeros(n, dtype=np.float64)
    top = min(n, k)
    disc[:top] = 1.0 / np.log2(np.arange(2, top + 2, dtype=np.float64))
    return disc


def rank_order(scores: np.ndarray) -> np.ndarray:
    """Document indices sorted by descending score, ties by ascending index."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def dcg_at_k(grades, score_order, k: int) -> float:
    """DCG of the given ranking, truncated at k."""
    grades = np.asarray(grades)
    if grades.size == 0:
        return 0.0
    order = np.asarray(score_order)
    ranked = gain_vector(grades[order])
    return float(ranked @ discount_table(len(order), k))


def ideal_dcg_at_k(grades, k: int) -> float:
    grades = np.asarray(grades)
    if grades.size == 0:
        return 0.0
    ranked = np.sort(gain_vector(grades))[::-1]
    return float(ranked @ discount_table(len(ranked), k))


def ndcg_at_k(grades, scores, k: int) -> float:
    """NDCG in [0, 1]; defined as 1.0 when every grade is zero."""
    grades = np.asarray(grades)
    if len(grades) != len(scores):
        raise ValueError(f"{len(grades)} grades vs {len(scores)} scores")
    ideal = ideal_dcg_at_k(grades, k)
    if ideal == 0.0:
        return 1.0
    return dcg_at_k(grades, rank_order(scores), k) / ideal


@dataclass(frozen=True)
class QueryContext:
    """Precomputed per-query quantities shared by cost and lambda kernels."""

    grades: np.ndarray     # int32
    gains: np.ndarray      # float64
    disc: np.ndarray       # float64, truncated discount per 0-based rank
    inv_idcg: float

    @classmethod
    def build(cls, grades, k: int) -> "QueryContext":
        grades = np.ascontiguousarray(grades, dtype=np.int32)
        gains = gain_vector(grades)
        disc = discount_table(len(grades), k)
        idcg = float(np.sort(gains)[::-1] @ disc)
        return cls(grades, gains, disc, 1.0 / idcg if idcg > 0.0 else 0.0)

    def ranks(self, scores: np.ndarray) -> np.ndarray:
        order = rank_order(scores)
        ranks = np.empty(len(order), dtype=np.int32)
        ranks[order] = np.arange(len(order), dtype=np.int32)
        return ranks


def surrogate_cost(grades, scores, k: int = 10, sigma: float = 1.0) -> float:
    """Pairwise logistic cost of one query, weighted by |ΔNDCG| at k.

    Sum over ordered pairs with grade_i > grade_j of
    |ΔNDCG_ij| * log(1 + exp(-sigma * (s_i - s_j))).
    """
    if len(grades) != len(scores):
        raise ValueError(f"{len(grades)} grades vs {len(scores)} scores")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    ctx = QueryContext.build(grades, k)
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    return float(kernels.query_cost(ctx.grades, ctx.gains, ctx.ranks(scores),
                                    ctx.disc, ctx.inv_idcg, scores, sigma))


def dataset_surrogate_cost(dataset: Dataset, grades, scores,
                           k: int = 10, sigma: float = 1.0) -> float:
    """Mean per-query surrogate cost over all query groups."""
    contexts = build_query_contexts(dataset, grades, k)
    return dataset_cost_from_contexts(dataset, contexts, scores, sigma)


def build_query_contexts(dataset: Dataset, grades, k: int) -> list[QueryContext]:
    grades = np.asarray(grades)
    return [QueryContext.build(grades[g.start:g.end], k) for g in dataset.groups]


def dataset_cost_from_contexts(dataset: Dataset, contexts, scores,
                               sigma: float) -> float:
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    total = 0.0
    for g, ctx in zip(dataset.groups, contexts):
        s = scores[g.start:g.end]
        total += kernels.query_cost(ctx.grades, ctx.gains, ctx.ranks(s),
                                    ctx.disc, ctx.inv_idcg, s, sigma)
    return total / len(dataset.groups)


def dataset_ndcg(dataset: Dataset, grades, scores, k: int) -> float:
    """Mean NDCG@k over query groups."""
    grades = np.asarray(grades)
    scores = np.asarray(scores, dtype=np.float64)
    total = 0.0
    for g in dataset.groups:
        total += ndcg_at_k(grades[g.start:g.end], scores[g.start:g.end], k)
    return total / len(dataset.groups)


@dataclass(frozen=True)
class CostScale:
    """Per-objective baseline raw costs Z^t; rescaled cost = raw / Z^t.

    By construction the baseline model's rescaled cost is exactly 1.0, so an
    upper bound of 0.9 reads as "10% cost reduction versus baseline".
    """

    values: dict[str, float]

    def __post_init__(self):
        for name, z in self.values.items():
            if not z > 0.0:
                raise TrainingError(
                    f"degenerate baseline: objective {name!r} has cost scale {z}")

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def as_array(self, names) -> np.ndarray:
        return np.array([self.values[n] for n in names], dtype=np.float64)


def rescaled_cost(raw_cost: float, scale: float) -> float:
    """raw_cost / scale, guarding against a degenerate baseline scale."""
    if not scale > 0.0:
        raise TrainingError(f"degenerate baseline: cost scale {scale}")
    return raw_cost / scale
