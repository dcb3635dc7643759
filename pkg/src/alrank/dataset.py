"""LETOR/SVMLight ranking data: parsing, query grouping, derived objective labels.

A Dataset is an immutable bundle of dense feature rows grouped by query, with
one integer grade vector per declared objective.  Sub-objective grades are
derived from feature columns by equal-population quantile binning; badness
columns are flipped to goodness as (max - v) before binning.  Binning is fit
on the training split and reapplied to other splits so grades never leak.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError

PRIMARY_SOURCE = "label"


@dataclass(frozen=True)
class Document:
    """One row: dense feature vector, integer relevance grade, owning query."""

    features: np.ndarray
    primary_label: int
    query_id: str


@dataclass(frozen=True)
class QueryGroup:
    """Contiguous slice [start, end) of dataset rows sharing one query id."""

    query_id: str
    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ObjectiveSpec:
    """Declaration of one ranking objective.

    feature is None for the primary-label objective, else a 1-based feature id.
    direction is "goodness" or "badness"; badness values are flipped before
    binning.  grades is the quantile-bin count G; ndcg_k the NDCG truncation.
    """

    name: str
    feature: int | None = None
    direction: str = "goodness"
    grades: int = 5
    ndcg_k: int = 10

    def __post_init__(self):
        if self.direction not in ("goodness", "badness"):
            raise ConfigError(f"objective {self.name!r}: direction must be "
                              f"'goodness' or 'badness', got {self.direction!r}")
        if self.feature is None and self.direction != "goodness":
            raise ConfigError(f"objective {self.name!r}: label-sourced "
                              "objectives must have direction 'goodness'")
        if self.feature is not None and self.grades < 2:
            raise ConfigError(f"objective {self.name!r}: need at least 2 grade "
                              f"bins, got {self.grades}")
        if self.ndcg_k < 1:
            raise ConfigError(f"objective {self.name!r}: ndcg_k must be >= 1")

    @property
    def from_label(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class Dataset:
    """Query-grouped ranking data.

    features: (n_docs, n_features) float64, index = feature id - 1.
    labels:   (n_docs,) int32 primary relevance grades.
    qids:     (n_docs,) query id strings aligned with rows.
    groups:   QueryGroups covering [0, n_docs) exactly once each.
    objective_labels: objective name -> (n_docs,) int32 grades.
    """

    features: np.ndarray
    labels: np.ndarray
    qids: tuple[str, ...]
    groups: tuple[QueryGroup, ...]
    objective_labels: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n_docs(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def max_grade(self) -> int:
        return int(self.labels.max()) if self.n_docs else 0

    def document(self, i: int) -> Document:
        return Document(self.features[i], int(self.labels[i]), self.qids[i])

    def grades_for(self, spec: ObjectiveSpec) -> np.ndarray:
        """Grade vector for an objective; primary labels need no derivation."""
        if spec.from_label:
            return self.labels
        try:
            return self.objective_labels[spec.name]
        except KeyError:
            raise KeyError(f"objective {spec.name!r} has no derived labels; "
                           "call with_objective_labels first") from None

    def with_objective_labels(self, labels: dict[str, np.ndarray]) -> "Dataset":
        """New Dataset with additional derived grade vectors attached."""
        merged = dict(self.objective_labels)
        for name, grades in labels.items():
            if len(grades) != self.n_docs:
                raise ValueError(f"objective {name!r}: {len(grades)} grades "
                                 f"for {self.n_docs} documents")
            merged[name] = np.asarray(grades, dtype=np.int32)
        return dataclasses.replace(self, objective_labels=merged)


def parse_letor(source) -> Dataset:
    """Parse LETOR/SVMLight text into a Dataset.

    source may be a string or any iterable of lines.  Line format:
        <label> qid:<id> <fid>:<val> ...  [# comment]
    with strictly increasing fid per line.  Missing fids read as 0.0; the
    feature count is the maximum fid seen anywhere in the stream.  Rows with
    the same qid form one group even if qids interleave (group order = first
    appearance, row order inside a group = input order).
    """
    if isinstance(source, str):
        source = source.splitlines()

    rows = []          # (qid, label, [(fid, val), ...])
    max_fid = 0
    for lineno, raw in enumerate(source, start=1):
        line = raw.partition("#")[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) < 2 or not toks[1].startswith("qid:"):
            raise ParseError(f"line {lineno}: expected '<label> qid:<id> ...'")
        if not toks[0].isdigit():
            raise ParseError(f"line {lineno}: label must be a non-negative "
                             f"integer, got {toks[0]!r}")
        label = int(toks[0])
        qid = toks[1][4:]
        if not qid:
            raise ParseError(f"line {lineno}: empty qid")
        pairs = []
        prev_fid = 0
        for tok in toks[2:]:
            fid_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"line {lineno}: malformed feature {tok!r}")
            try:
                fid = int(fid_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"line {lineno}: malformed feature {tok!r}") from None
            if fid <= prev_fid:
                raise ParseError(f"line {lineno}: feature ids must be strictly "
                                 f"increasing (saw {fid} after {prev_fid})")
            prev_fid = fid
            pairs.append((fid, val))
        max_fid = max(max_fid, prev_fid)
        rows.append((qid, label, pairs))

    if not rows:
        raise ParseError("no documents")

    # Stable regrouping: same-qid rows become contiguous, groups ordered by
    # first appearance, input order preserved within each group.
    first_seen: dict[str, int] = {}
    for qid, _, _ in rows:
        first_seen.setdefault(qid, len(first_seen))
    order = sorted(range(len(rows)), key=lambda i: (first_seen[rows[i][0]], i))

    n = len(rows)
    features = np.zeros((n, max_fid), dtype=np.float64)
    labels = np.empty(n, dtype=np.int32)
    qids = []
    for out_i, in_i in enumerate(order):
        qid, label, pairs = rows[in_i]
        labels[out_i] = label
        qids.append(qid)
        for fid, val in pairs:
            features[out_i, fid - 1] = val

    groups = []
    start = 0
    for i in range(1, n + 1):
        if i == n or qids[i] != qids[start]:
            groups.append(QueryGroup(qids[start], start, i))
            start = i

    return Dataset(features, labels, tuple(qids), tuple(groups))


def to_letor(dataset: Dataset) -> str:
    """Serialize back to LETOR text; parse_letor(to_letor(d)) == d."""
    lines = []
    for i in range(dataset.n_docs):
        feats = " ".join(f"{fid + 1}:{float(dataset.features[i, fid])!r}"
                         for fid in range(dataset.n_features))
        lines.append(f"{int(dataset.labels[i])} qid:{dataset.qids[i]} {feats}".rstrip())
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ObjectiveBinning:
    """Frozen grade transform for one feature-derived objective.

    flip_max is the training-split column maximum when the objective is a
    badness column (values become flip_max - v), else None.  edges are the
    G-1 quantile cut points of the (possibly flipped) training values.
    """

    flip_max: float | None
    edges: np.ndarray

    @classmethod
    def fit(cls, dataset: Dataset, spec: ObjectiveSpec) -> "ObjectiveBinning":
        values = _objective_column(dataset, spec)
        flip_max = None
        if spec.direction == "badness":
            flip_max = float(values.max())
            values = flip_max - values
        if values.max() == values.min():
            # Constant column: no usable edges, every grade is 0.
            return cls(flip_max, np.empty(0, dtype=np.float64))
        qs = np.arange(1, spec.grades) / spec.grades
        edges = np.quantile(values, qs)
        return cls(flip_max, np.asarray(edges, dtype=np.float64))

    def apply(self, dataset: Dataset, spec: ObjectiveSpec) -> np.ndarray:
        values = _objective_column(dataset, spec)
        if self.flip_max is not None:
            values = self.flip_max - values
        # side='left' counts edges strictly below v: boundary ties take the
        # lower grade.
        return np.searchsorted(self.edges, values, side="left").astype(np.int32)


def _objective_column(dataset: Dataset, spec: ObjectiveSpec) -> np.ndarray:
    if spec.from_label:
        raise ConfigError(f"objective {spec.name!r} is label-sourced; nothing to derive")
    if not 1 <= spec.feature <= dataset.n_features:
        raise ConfigError(f"objective {spec.name!r}: feature id {spec.feature} "
                          f"out of range 1..{dataset.n_features}")
    if dataset.n_docs == 0:
        raise ConfigError("cannot derive objective labels from an empty dataset")
    return dataset.features[:, spec.feature - 1].astype(np.float64)


def derive_objective_labels(dataset: Dataset, spec: ObjectiveSpec,
                            binning: ObjectiveBinning | None = None) -> np.ndarray:
    """Integer grades in [0, G-1] for a feature-derived objective.

    With binning=None the transform is fit on `dataset` itself; pass the
    training-split binning to grade validation/test data without leakage.
    """
    if binning is None:
        binning = ObjectiveBinning.fit(dataset, spec)
    return binning.apply(dataset, spec)


def label_datasets(specs: list[ObjectiveSpec], train: Dataset,
                   *others: Dataset) -> tuple[Dataset, ...]:
    """Attach derived grades for every feature-sourced spec.

    Binnings are fit on `train` and reapplied to the other splits.  Returns
    the relabeled datasets in the order given.
    """
    binnings = {s.name: ObjectiveBinning.fit(train, s)
                for s in specs if not s.from_label}
    out = []
    for ds in (train, *others):
        labels = {name: b.apply(ds, _spec_by_name(specs, name))
                  for name, b in binnings.items()}
        out.append(ds.with_objective_labels(labels))
    return tuple(out)


def _spec_by_name(specs: list[ObjectiveSpec], name: str) -> ObjectiveSpec:
    for s in specs:
        if s.name == name:
            return s
    raise KeyError(name)


def split_train_valid(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split at query granularity; both sides non-empty; deterministic per seed."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must be in (0, 1), got {fraction}")
    n_groups = len(dataset.groups)
    if n_groups < 2:
        raise ConfigError(f"need at least 2 query groups to split, have {n_groups}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n_groups)
    n_train = int(round(fraction * n_groups))
    n_train = min(max(n_train, 1), n_groups - 1)
    train_ids = np.sort(perm[:n_train])
    valid_ids = np.sort(perm[n_train:])
    return _take_groups(dataset, train_ids), _take_groups(dataset, valid_ids)


def _take_groups(dataset: Dataset, group_ids: np.ndarray) -> Dataset:
    row_idx = np.concatenate([np.arange(dataset.groups[g].start, dataset.groups[g].end)
                              for g in group_ids])
    groups = []
    start = 0
    for g in group_ids:
        size = len(dataset.groups[g])
        groups.append(QueryGroup(dataset.groups[g].query_id, start, start + size))
        start += size
    return Dataset(
        features=dataset.features[row_idx].copy(),
        labels=dataset.labels[row_idx].copy(),
        qids=tuple(dataset.qids[i] for i in row_idx),
        groups=tuple(groups),
        objective_labels={k: v[row_idx].copy()
                          for k, v in dataset.objective_labels.items()},
    )


def mslr_objective_specs() -> tuple[ObjectiveSpec, list[ObjectiveSpec]]:
    """Primary + the five MSLR-WEB10K sub-objective columns.

    PageRank / UrlClickCount / UrlDwellTime are goodness columns;
    QualityScore and QualityScore2 are badness columns.
    """
    primary = ObjectiveSpec("rel")
    subs = [
        ObjectiveSpec("PR", feature=130, direction="goodness"),
        ObjectiveSpec("QS", feature=132, direction="badness"),
        ObjectiveSpec("QS2", feature=133, direction="badness"),
        ObjectiveSpec("UC", feature=135, direction="goodness"),
        ObjectiveSpec("UDT", feature=136, direction="goodness"),
    ]
    return primary, subs
