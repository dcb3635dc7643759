"""First- and second-order derivatives of the surrogate cost w.r.t. scores.

Sign convention: lambda is the gradient of the cost being minimized, so the
tree-fitting step targets the negative gradient (Newton leaf values take care
of the sign).  |ΔNDCG| pair weights are recomputed from the current ordering
on every call and treated as constant within the round.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .metrics import QueryContext, build_query_contexts


@dataclass
class LambdaPair:
    """Per-document gradient and hessian of one objective over a dataset."""

    lam: np.ndarray
    hess: np.ndarray

    def scaled(self, factor: float) -> "LambdaPair":
        return LambdaPair(self.lam * factor, self.hess * factor)


def objective_lambdas(dataset: Dataset, grades, scores,
                      k: int = 10, sigma: float = 1.0) -> LambdaPair:
    """Gradients/hessians of the mean-over-queries surrogate cost."""
    contexts = build_query_contexts(dataset, grades, k)
    return lambdas_from_contexts(dataset, contexts, scores, sigma)


def lambdas_from_contexts(dataset: Dataset, contexts: list[QueryContext],
                          scores, sigma: float) -> LambdaPair:
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if len(scores) != dataset.n_docs:
        raise ValueError(f"{len(scores)} scores for {dataset.n_docs} documents")
    lam = np.zeros(dataset.n_docs, dtype=np.float64)
    hess = np.zeros(dataset.n_docs, dtype=np.float64)
    for g, ctx in zip(dataset.groups, contexts):
        s = scores[g.start:g.end]
        kernels.query_lambdas(ctx.grades, ctx.gains, ctx.ranks(s), ctx.disc,
                              ctx.inv_idcg, s, sigma,
                              lam[g.start:g.end], hess[g.start:g.end])
    # Mean-over-queries cost, so derivatives divide by the query count too.
    n_queries = len(dataset.groups)
    lam /= n_queries
    hess /= n_queries
    return LambdaPair(lam, hess)
