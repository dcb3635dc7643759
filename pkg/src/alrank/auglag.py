"""Augmented-Lagrangian state, value, combined gradients, and dual updates.

The constrained problem is min C_pm subject to rescaled sub-costs <= bounds.
Each boosting round minimizes the AL over scores at fixed duals (by fitting
one tree on the combined gradients) and then takes one projected dual step:

    alpha_k = max(0, mu * (cost - bound) + alpha_{k-1})

so a dual variable grows while its constraint is violated and decays to zero
once it holds with slack.  The proximal term -(alpha - alpha_prev)^2 / (2 mu)
has no score dependence and never touches the gradients.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lambdas import LambdaPair


@dataclass
class ALState:
    """Dual variables and constraint configuration for T sub-objectives.

    bounds are in rescaled-cost units (baseline cost = 1.0); scales are the
    per-objective raw baseline costs Z^t used for that rescaling.  history
    accumulates one (alpha, rescaled sub-costs) record per dual update.
    """

    alpha: np.ndarray
    prev_alpha: np.ndarray
    bounds: np.ndarray
    mu: float
    scales: np.ndarray
    history: list = field(default_factory=list)

    @classmethod
    def create(cls, bounds, mu: float, scales) -> "ALState":
        bounds = np.asarray(bounds, dtype=np.float64)
        scales = np.asarray(scales, dtype=np.float64)
        if bounds.shape != scales.shape:
            raise ValueError(f"{len(bounds)} bounds vs {len(scales)} scales")
        if np.any(bounds <= 0.0):
            raise ValueError("upper bounds must be positive")
        if np.any(scales <= 0.0):
            raise ValueError("cost scales must be positive")
        if mu <= 0.0:
            raise ValueError(f"mu must be positive, got {mu}")
        t = len(bounds)
        return cls(np.zeros(t), np.zeros(t), bounds, float(mu), scales)

    @property
    def n_constraints(self) -> int:
        return len(self.bounds)


def al_value(primal_cost: float, sub_costs, state: ALState) -> float:
    """Augmented Lagrangian at the current duals.

    C_pm + sum_t alpha_t (c_t - b_t) - sum_t (alpha_t - alpha_prev_t)^2 / (2 mu)
    with c_t the rescaled sub-costs.
    """
    sub_costs = np.asarray(sub_costs, dtype=np.float64)
    if sub_costs.shape != state.alpha.shape:
        raise ValueError(f"{len(sub_costs)} sub-costs for "
                         f"{state.n_constraints} constraints")
    penalty = float(state.alpha @ (sub_costs - state.bounds))
    prox = float(np.sum((state.alpha - state.prev_alpha) ** 2)) / (2.0 * state.mu)
    return primal_cost + penalty - prox


def dual_update(state: ALState, sub_costs) -> np.ndarray:
    """One projected dual step; mutates state and returns the new alphas."""
    sub_costs = np.asarray(sub_costs, dtype=np.float64)
    if sub_costs.shape != state.alpha.shape:
        raise ValueError(f"{len(sub_costs)} sub-costs for "
                         f"{state.n_constraints} constraints")
    new_alpha = np.maximum(0.0, state.mu * (sub_costs - state.bounds) + state.alpha)
    state.prev_alpha = state.alpha
    state.alpha = new_alpha
    state.history.append((tuple(new_alpha), tuple(sub_costs)))
    return new_alpha


def combined_lambdas(primal: LambdaPair, subs: list[LambdaPair],
                     state: ALState) -> LambdaPair:
    """Primal AL gradient: lambda_pm + sum_t alpha_t lambda_t.

    Sub-objective pairs must already be gradients of the rescaled costs
    (raw divided by Z^t).  Duals are held fixed within the primal step; the
    proximal term contributes nothing.
    """
    if len(subs) != state.n_constraints:
        raise ValueError(f"{len(subs)} sub-objective lambda pairs for "
                         f"{state.n_constraints} constraints")
    lam = primal.lam.copy()
    hess = primal.hess.copy()
    for alpha_t, pair in zip(state.alpha, subs):
        lam += alpha_t * pair.lam
        hess += alpha_t * pair.hess
    return LambdaPair(lam, hess)
