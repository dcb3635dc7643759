"""alrank: constrained multi-objective LambdaMART.

Gradient-boosted tree ranking with augmented-Lagrangian dual updates inside
the boosting loop, the one-shot upper-bound tuning pipeline, and a
linear-weighting baseline for comparison.
"""

from .auglag import ALState, al_value, combined_lambdas, dual_update
from .dataset import (Dataset, Document, ObjectiveBinning, ObjectiveSpec,
                      QueryGroup, derive_objective_labels, label_datasets,
                      mslr_objective_specs, parse_letor, split_train_valid,
                      to_letor)
from .errors import ConfigError, ParseError, TrainingError
from .gbdt import (BoosterModel, TrainConfig, TrainResult, Tree, fit_tree,
                   predict, train)
from .kernels import BACKEND
from .lambdas import LambdaPair, objective_lambdas
from .metrics import (CostScale, dataset_ndcg, dataset_surrogate_cost,
                      dcg_at_k, ndcg_at_k, rescaled_cost, surrogate_cost)
from .pipeline import (Experiment, GainReport, RunContext, SweepResult,
                       compare_lw, report_gains, run_baseline, run_one_shot,
                       sweep_all, sweep_ub, train_full, train_linear_weighting)

__version__ = "0.1.0"
