"""Histogram-based regression trees on (gradient, hessian) targets, and the
boosting loop that interleaves tree fitting with augmented-Lagrangian dual
updates.

Trees grow best-first: the candidate leaf with the largest split gain

    gain = GL^2/(HL+reg) + GR^2/(HR+reg) - G^2/(H+reg)

splits next, until max_leaves, non-positive gain, or min_docs_per_leaf stops
growth.  Leaf values are Newton steps -G/(H+reg).  Split thresholds come from
a 256-bin quantization fit once per training run, with every threshold a
midpoint strictly between two observed feature values.  There is no row or
column subsampling, ties resolve by fixed scan order, and all accumulation is
sequential, so a given config and seed reproduce byte-identical models.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .auglag import ALState, combined_lambdas, dual_update
from .dataset import Dataset, ObjectiveSpec
from .errors import ConfigError, TrainingError
from .lambdas import LambdaPair, lambdas_from_contexts
from .metrics import build_query_contexts, dataset_cost_from_contexts, dataset_ndcg

MODEL_FORMAT = "alrank.model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    num_trees: int = 300
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_docs_per_leaf: int = 20
    hessian_reg: float = 1.0
    sigma: float = 1.0
    max_bins: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ConfigError(f"num_trees must be >= 1, got {self.num_trees}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if self.max_leaves < 2:
            raise ConfigError(f"max_leaves must be >= 2, got {self.max_leaves}")
        if self.min_docs_per_leaf < 1:
            raise ConfigError(f"min_docs_per_leaf must be >= 1, got {self.min_docs_per_leaf}")
        if self.hessian_reg < 0.0:
            raise ConfigError(f"hessian_reg must be >= 0, got {self.hessian_reg}")
        if self.sigma <= 0.0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 2 <= self.max_bins <= 256:
            raise ConfigError(f"max_bins must be in [2, 256], got {self.max_bins}")

    def to_dict(self) -> dict:
        return {
            "num_trees": self.num_trees,
            "learning_rate": self.learning_rate,
            "max_leaves": self.max_leaves,
            "min_docs_per_leaf": self.min_docs_per_leaf,
            "hessian_reg": self.hessian_reg,
            "sigma": self.sigma,
            "max_bins": self.max_bins,
            "seed": self.seed,
        }


class FeatureBinner:
    """Per-feature quantile quantization into at most max_bins bins.

    Bin edges are midpoints between adjacent distinct observed values, so a
    split threshold always lies strictly between two training values and
    bin-based routing agrees exactly with threshold-based routing.
    """

    def __init__(self, edges: list[np.ndarray]):
        self.edges = edges

    @classmethod
    def fit(cls, features: np.ndarray, max_bins: int = 256) -> "FeatureBinner":
        edges = []
        for f in range(features.shape[1]):
            uniq = np.unique(features[:, f])
            if len(uniq) <= 1:
                edges.append(np.empty(0, dtype=np.float64))
                continue
            if len(uniq) <= max_bins:
                cuts = _midpoints(uniq[:-1], uniq[1:])
            else:
                qs = np.arange(1, max_bins) / max_bins
                cut_vals = np.quantile(features[:, f], qs)
                # Snap each quantile to the boundary between the two distinct
                # values it falls between.
                hi_pos = np.searchsorted(uniq, cut_vals, side="left")
                hi_pos = np.clip(hi_pos, 1, len(uniq) - 1)
                cuts = np.unique(_midpoints(uniq[hi_pos - 1], uniq[hi_pos]))
            edges.append(np.ascontiguousarray(cuts, dtype=np.float64))
        return cls(edges)

    def transform(self, features: np.ndarray) -> np.ndarray:
        n, d = features.shape
        binned = np.empty((n, d), dtype=np.uint8)
        for f in range(d):
            binned[:, f] = np.searchsorted(self.edges[f], features[:, f],
                                           side="right").astype(np.uint8)
        return np.ascontiguousarray(binned)

    @property
    def n_bins(self) -> int:
        return max((len(e) for e in self.edges), default=0) + 1


def _midpoints(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    mids = lo + 0.5 * (hi - lo)
    # Adjacent representable floats can collapse the midpoint onto an
    # endpoint; such a boundary cannot sit strictly between values, drop it.
    return mids[(mids > lo) & (mids < hi)]


@dataclass
class Tree:
    """Binary regression tree in flat arrays, parents before children.

    feature[i] is -1 at leaves; routing is value <= threshold -> left.
    """

    feature: np.ndarray    # int32
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, features: np.ndarray) -> np.ndarray:
        out = np.empty(features.shape[0], dtype=np.float64)
        kernels.tree_apply(np.ascontiguousarray(features, dtype=np.float64),
                           self.feature, self.threshold, self.left, self.right,
                           self.value, out)
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
        )


class _LeafBuild:
    """Growth bookkeeping for one candidate leaf."""

    __slots__ = ("order", "idx", "g_sum", "h_sum", "split")

    def __init__(self, order, idx, g_sum, h_sum, split):
        self.order = order      # creation counter; tie-break for equal gains
        self.idx = idx
        self.g_sum = g_sum
        self.h_sum = h_sum
        self.split = split      # (feature, bin, gain) or None


def fit_tree(features: np.ndarray, gradients: np.ndarray, hessians: np.ndarray,
             config: TrainConfig, binner: FeatureBinner | None = None) -> Tree:
    """Fit one regression tree to (gradient, hessian) targets.

    Builds its own quantization when no binner is supplied; the training loop
    passes the run-level binner so quantization happens once per run.
    """
    features = np.ascontiguousarray(features, dtype=np.float64)
    if binner is None:
        binner = FeatureBinner.fit(features, config.max_bins)
    binned = binner.transform(features)
    tree, _ = fit_tree_binned(binned, binner, gradients, hessians, config)
    return tree


def fit_tree_binned(binned: np.ndarray, binner: FeatureBinner,
                    gradients: np.ndarray, hessians: np.ndarray,
                    config: TrainConfig) -> tuple[Tree, np.ndarray]:
    """Core grower on pre-binned features.

    Returns the tree plus the per-document fitted value, so the caller can
    refresh training scores without re-traversing.
    """
    n = binned.shape[0]
    grad = np.ascontiguousarray(gradients, dtype=np.float64)
    hess = np.ascontiguousarray(hessians, dtype=np.float64)
    if len(grad) != n or len(hess) != n:
        raise ValueError("features, gradients and hessians must align")
    if n < config.min_docs_per_leaf:
        raise ValueError(f"need at least min_docs_per_leaf={config.min_docs_per_leaf} "
                         f"documents, got {n}")
    if np.any(hess < 0.0):
        raise ValueError("hessians must be non-negative")

    doc_values = np.zeros(n, dtype=np.float64)
    if float(hess.sum()) == 0.0:
        return _single_leaf_tree(0.0), doc_values

    all_idx = np.arange(n, dtype=np.int32)
    root = _LeafBuild(0, all_idx, float(grad.sum()), float(hess.sum()),
                      _best_split(binned, grad, hess, all_idx,
                                  float(grad.sum()), float(hess.sum()), config))
    leaves = [root]
    n_created = 1

    # (leaf_build, parent_node, is_left) pending structural records
    node_records: list[tuple] = [(root, -1, False)]
    children: dict[int, tuple[int, int, int, float]] = {}

    while len(leaves) < config.max_leaves:
        best = None
        for lf in leaves:
            if lf.split is None:
                continue
            if best is None or lf.split[2] > best.split[2]:
                best = lf
        if best is None:
            break
        feat, sbin, _ = best.split
        left_idx, right_idx = kernels.partition(binned, best.idx, feat, sbin)
        gl = float(grad[left_idx].sum())
        hl = float(hess[left_idx].sum())
        lchild = _LeafBuild(n_created, left_idx, gl, hl,
                            _best_split(binned, grad, hess, left_idx, gl, hl, config))
        n_created += 1
        gr = float(grad[right_idx].sum())
        hr = float(hess[right_idx].sum())
        rchild = _LeafBuild(n_created, right_idx, gr, hr,
                            _best_split(binned, grad, hess, right_idx, gr, hr, config))
        n_created += 1
        children[best.order] = (feat, sbin, lchild.order, rchild.order)
        leaves.remove(best)
        leaves.append(lchild)
        leaves.append(rchild)
        node_records.append((lchild, best.order, True))
        node_records.append((rchild, best.order, False))

    return _assemble_tree(node_records, children, binner, config, doc_values)


def _single_leaf_tree(value: float) -> Tree:
    return Tree(feature=np.array([-1], dtype=np.int32),
                threshold=np.array([0.0]),
                left=np.array([-1], dtype=np.int32),
                right=np.array([-1], dtype=np.int32),
                value=np.array([value]))


def _best_split(binned, grad, hess, idx, g_sum, h_sum, config):
    if len(idx) < 2 * config.min_docs_per_leaf:
        return None
    d = binned.shape[1]
    n_bins = 256
    hg = np.zeros((d, n_bins), dtype=np.float64)
    hh = np.zeros((d, n_bins), dtype=np.float64)
    hn = np.zeros((d, n_bins), dtype=np.int32)
    kernels.hist_build(binned, grad, hess, idx, hg, hh, hn)
    feat, sbin, gain = kernels.hist_best_split(hg, hh, hn, g_sum, h_sum,
                                               len(idx), config.hessian_reg,
                                               config.min_docs_per_leaf)
    if feat < 0 or gain <= 0.0:
        return None
    return int(feat), int(sbin), float(gain)


def _assemble_tree(node_records, children, binner, config, doc_values):
    """Flatten growth records into node arrays (creation order = topological)."""
    n_nodes = len(node_records)
    order_to_node = {}
    feature = np.full(n_nodes, -1, dtype=np.int32)
    threshold = np.zeros(n_nodes, dtype=np.float64)
    left = np.full(n_nodes, -1, dtype=np.int32)
    right = np.full(n_nodes, -1, dtype=np.int32)
    value = np.zeros(n_nodes, dtype=np.float64)

    # Creation order of _LeafBuild objects is parents-before-children; assign
    # node slots in that order.
    builds = sorted((rec[0] for rec in node_records), key=lambda b: b.order)
    for node_id, b in enumerate(builds):
        order_to_node[b.order] = node_id

    for b in builds:
        node_id = order_to_node[b.order]
        if b.order in children:
            feat, sbin, lorder, rorder = children[b.order]
            feature[node_id] = feat
            threshold[node_id] = binner.edges[feat][sbin]
            left[node_id] = order_to_node[lorder]
            right[node_id] = order_to_node[rorder]
        else:
            denom = b.h_sum + config.hessian_reg
            leaf_value = -b.g_sum / denom if denom > 0.0 else 0.0
            value[node_id] = leaf_value
            doc_values[b.idx] = leaf_value

    return Tree(feature, threshold, left, right, value), doc_values


@dataclass
class BoosterModel:
    """Ordered trees with shrinkage; predict(x) = sum of eta * tree(x)."""

    trees: list[Tree]
    shrinkage: float
    feature_count: int
    metadata: dict = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return predict(self, features)

    def payload(self) -> dict:
        return {
            "shrinkage": self.shrinkage,
            "feature_count": self.feature_count,
            "trees": [t.to_dict() for t in self.trees],
            "metadata": self.metadata,
        }

    def serialize(self) -> str:
        payload = self.payload()
        digest = payload_hash(payload)
        doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION,
               "sha256": digest, "payload": payload}
        return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.serialize())

    @classmethod
    def deserialize(cls, text: str) -> "BoosterModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TrainingError(f"model corrupted or version mismatch: {exc}") from None
        if (not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT
                or doc.get("version") != MODEL_VERSION):
            raise TrainingError("model corrupted or version mismatch: bad header")
        payload = doc.get("payload", {})
        if payload_hash(payload) != doc.get("sha256"):
            raise TrainingError("model corrupted or version mismatch: hash check failed")
        return cls(
            trees=[Tree.from_dict(t) for t in payload["trees"]],
            shrinkage=payload["shrinkage"],
            feature_count=payload["feature_count"],
            metadata=payload.get("metadata", {}),
        )

    @classmethod
    def load(cls, path) -> "BoosterModel":
        with open(path, encoding="utf-8") as fh:
            return cls.deserialize(fh.read())


def payload_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def config_hash(config: TrainConfig, primary: ObjectiveSpec,
                subs: list[ObjectiveSpec], al: dict | None) -> str:
    doc = {
        "train": config.to_dict(),
        "primary": _spec_dict(primary),
        "subs": [_spec_dict(s) for s in subs],
        "al": al or {},
    }
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _spec_dict(spec: ObjectiveSpec) -> dict:
    return {"name": spec.name, "feature": spec.feature,
            "direction": spec.direction, "grades": spec.grades,
            "ndcg_k": spec.ndcg_k}


def predict(model: BoosterModel, features: np.ndarray) -> np.ndarray:
    """Deterministic sum of shrunken tree outputs (tree order = round order)."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != model.feature_count:
        raise ValueError(f"expected (n, {model.feature_count}) features, "
                         f"got {features.shape}")
    scores = np.zeros(features.shape[0], dtype=np.float64)
    for tree in model.trees:
        scores += model.shrinkage * tree.apply(features)
    return scores


@dataclass
class TrainResult:
    model: BoosterModel
    al_state: ALState | None
    history: list[dict]            # per-round: alpha, cost_pm, sub_costs
    final_scores: np.ndarray
    valid_history: list[dict]      # per-round NDCG per objective, if valid given


def train(dataset: Dataset, primary: ObjectiveSpec, subs: list[ObjectiveSpec] = (),
          *, config: TrainConfig, al_state: ALState | None = None,
          lw_weights: np.ndarray | None = None, scales: np.ndarray | None = None,
          valid: Dataset | None = None,
          extra_metadata: dict | None = None) -> TrainResult:
    """Boosted training: unconstrained (no subs), AL-constrained, or LW.

    Each round computes per-objective lambdas at the current scores, combines
    them (AL duals or fixed LW weights), fits one tree, refreshes scores, and
    for AL takes one dual step on the new rescaled training costs.

    AL mode: pass al_state (carries bounds, mu, and Z^t scales).
    LW mode: pass lw_weights = (w_pm, w_1..w_T) plus the Z^t scales array.
    """
    subs = list(subs)
    if al_state is not None and lw_weights is not None:
        raise ConfigError("al_state and lw_weights are mutually exclusive")
    if al_state is not None:
        if al_state.n_constraints != len(subs):
            raise ConfigError(f"{len(subs)} sub-objectives for "
                              f"{al_state.n_constraints} constraints")
        sub_scales = al_state.scales
    elif lw_weights is not None:
        lw_weights = np.asarray(lw_weights, dtype=np.float64)
        if len(lw_weights) != len(subs) + 1:
            raise ConfigError(f"need {len(subs) + 1} weights "
                              f"(primary + subs), got {len(lw_weights)}")
        if scales is None and subs:
            raise ConfigError("linear weighting needs baseline cost scales")
        sub_scales = np.asarray(scales, dtype=np.float64) if subs else np.empty(0)
        if subs and (len(sub_scales) != len(subs) or np.any(sub_scales <= 0.0)):
            raise ConfigError("linear weighting needs one positive cost scale "
                              "per sub-objective")
    elif subs:
        raise ConfigError("sub-objectives given without al_state or lw_weights")
    else:
        sub_scales = np.empty(0)

    primary_grades = dataset.grades_for(primary)
    primary_ctx = build_query_contexts(dataset, primary_grades, primary.ndcg_k)
    sub_ctx = [build_query_contexts(dataset, dataset.grades_for(s), s.ndcg_k)
               for s in subs]

    binner = FeatureBinner.fit(dataset.features, config.max_bins)
    binned = binner.transform(dataset.features)
    scores = np.zeros(dataset.n_docs, dtype=np.float64)
    valid_scores = np.zeros(valid.n_docs, dtype=np.float64) if valid is not None else None

    trees: list[Tree] = []
    history: list[dict] = []
    valid_history: list[dict] = []

    for k in range(1, config.num_trees + 1):
        primal = lambdas_from_contexts(dataset, primary_ctx, scores, config.sigma)
        sub_pairs = [lambdas_from_contexts(dataset, ctx, scores, config.sigma)
                     .scaled(1.0 / sub_scales[t])
                     for t, ctx in enumerate(sub_ctx)]

        if al_state is not None:
            combined = combined_lambdas(primal, sub_pairs, al_state)
        elif lw_weights is not None:
            lam = lw_weights[0] * primal.lam
            hess = lw_weights[0] * primal.hess
            for w, pair in zip(lw_weights[1:], sub_pairs):
                lam += w * pair.lam
                hess += w * pair.hess
            combined = LambdaPair(lam, hess)
        else:
            combined = primal

        tree, doc_values = fit_tree_binned(binned, binner, combined.lam,
                                           combined.hess, config)
        trees.append(tree)
        scores += config.learning_rate * doc_values
        if np.isnan(scores).any():
            raise TrainingError(f"NaN scores at boosting round {k}")

        cost_pm = dataset_cost_from_contexts(dataset, primary_ctx, scores,
                                             config.sigma)
        sub_costs = np.array([
            dataset_cost_from_contexts(dataset, ctx, scores, config.sigma)
            / sub_scales[t]
            for t, ctx in enumerate(sub_ctx)], dtype=np.float64)

        if al_state is not None:
            dual_update(al_state, sub_costs)
            alpha = tuple(al_state.alpha)
        else:
            alpha = ()
        history.append({"iteration": k, "alpha": alpha,
                        "cost_pm": cost_pm, "sub_costs": tuple(sub_costs)})

        if valid is not None:
            valid_scores += config.learning_rate * tree.apply(valid.features)
            row = {"iteration": k,
                   "ndcg_pm": dataset_ndcg(valid, valid.grades_for(primary),
                                           valid_scores, primary.ndcg_k)}
            for s in subs:
                row[f"ndcg_{s.name}"] = dataset_ndcg(valid, valid.grades_for(s),
                                                     valid_scores, s.ndcg_k)
            valid_history.append(row)

    al_meta = None
    if al_state is not None:
        al_meta = {"mu": al_state.mu, "bounds": al_state.bounds.tolist(),
                   "scales": al_state.scales.tolist()}
    elif lw_weights is not None:
        al_meta = {"lw_weights": lw_weights.tolist(),
                   "scales": sub_scales.tolist()}
    metadata = {
        "objectives": {"primary": _spec_dict(primary),
                       "subs": [_spec_dict(s) for s in subs]},
        "al": al_meta or {},
        "train_config": config.to_dict(),
        "config_hash": config_hash(config, primary, subs, al_meta),
    }
    if extra_metadata:
        metadata.update(extra_metadata)
    model = BoosterModel(
        trees=trees,
        shrinkage=config.learning_rate,
        feature_count=dataset.n_features,
        metadata=metadata,
    )
    return TrainResult(model, al_state, history, scores, valid_history)


def history_csv(history: list[dict], n_subs: int, with_alpha: bool = True) -> str:
    """Spec CSV: iteration, alpha_1..alpha_T, cost_pm, cost_1..cost_T."""
    cols = ["iteration"]
    if with_alpha:
        cols += [f"alpha_{t + 1}" for t in range(n_subs)]
    cols += ["cost_pm"] + [f"cost_{t + 1}" for t in range(n_subs)]
    lines = [",".join(cols)]
    for row in history:
        cells = [str(row["iteration"])]
        if with_alpha:
            cells += [repr(a) for a in row["alpha"]]
        cells.append(repr(row["cost_pm"]))
        cells += [repr(c) for c in row["sub_costs"]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
