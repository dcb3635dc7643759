"""One-shot constrained modeling: baseline run, per-objective upper-bound
sweeps, one fully constrained training run, and %-gain reporting, plus the
linear-weighting comparison that motivates it.

Artifacts land in a run directory:

    out/
      build_log.csv                      one row per model build
      baseline/   {model, history.csv, report.csv, config, scales.csv}
      sweeps/<objective>/ub_<b>/  {model, history.csv, report.csv, config}
      sweeps/<objective>/sweep.csv
      sweeps/chosen.csv
      full/       {model, history.csv, report.csv, config}
      lw/         {trials.csv, ...}

Everything written is reproducible byte-for-byte from config + seed: no
timestamps, no absolute paths, fixed orderings, repr-exact floats.
"""
from __future__ import annotations

import csv
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .auglag import ALState
from .dataset import (Dataset, ObjectiveBinning, ObjectiveSpec,
                      split_train_valid)
from .errors import ConfigError
from .gbdt import BoosterModel, TrainConfig, TrainResult, history_csv, predict, train
from .metrics import CostScale, dataset_ndcg, dataset_surrogate_cost

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GainRow:
    name: str
    ndcg_baseline: float
    ndcg_candidate: float
    pct_gain: float


@dataclass(frozen=True)
class GainReport:
    """Per-objective NDCG of candidate vs baseline on one split."""

    split: str
    rows: tuple[GainRow, ...]

    def pct_gains(self) -> dict[str, float]:
        return {r.name: r.pct_gain for r in self.rows}

    def format_table(self) -> str:
        """Primary first, then sub-objectives, one column each."""
        names = [r.name for r in self.rows]
        width = max(9, *(len(n) + 2 for n in names))
        head = f"{'[' + self.split + ']':<16}" + "".join(f"{n:>{width}}" for n in names)
        base = f"{'ndcg baseline':<16}" + "".join(
            f"{r.ndcg_baseline:>{width}.4f}" for r in self.rows)
        cand = f"{'ndcg candidate':<16}" + "".join(
            f"{r.ndcg_candidate:>{width}.4f}" for r in self.rows)
        gain = f"{'%-gain':<16}" + "".join(
            f"{r.pct_gain:>{width}.2f}" for r in self.rows)
        return "\n".join([head, base, cand, gain])


def reports_csv(reports: list[GainReport]) -> str:
    lines = ["split,objective,ndcg_baseline,ndcg_candidate,pct_gain"]
    for rep in reports:
        for r in rep.rows:
            lines.append(f"{rep.split},{r.name},{r.ndcg_baseline!r},"
                         f"{r.ndcg_candidate!r},{r.pct_gain!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepEntry:
    ub: float
    primary_gain: float
    sub_gain: float
    final_train_cost: float


@dataclass(frozen=True)
class SweepResult:
    objective: str
    grid: tuple[float, ...]
    entries: tuple[SweepEntry, ...]
    chosen_ub: float
    attainable: bool


@dataclass(frozen=True)
class Experiment:
    """Labeled data splits plus the objective declarations."""

    train: Dataset
    valid: Dataset
    test: Dataset | None
    primary: ObjectiveSpec
    subs: tuple[ObjectiveSpec, ...]
    binnings: dict[str, ObjectiveBinning]

    @classmethod
    def prepare(cls, train: Dataset, primary: ObjectiveSpec,
                subs: list[ObjectiveSpec], valid: Dataset | None = None,
                test: Dataset | None = None, valid_fraction: float = 0.2,
                split_seed: int = 7) -> "Experiment":
        """Split off validation queries if none given, then attach derived
        grades everywhere using training-split quantiles."""
        if valid is None:
            train, valid = split_train_valid(train, 1.0 - valid_fraction, split_seed)
        binnings = {s.name: ObjectiveBinning.fit(train, s)
                    for s in subs if not s.from_label}
        def relabel(ds):
            return ds.with_objective_labels(
                {name: b.apply(ds, _spec(subs, name)) for name, b in binnings.items()})
        return cls(relabel(train), relabel(valid),
                   relabel(test) if test is not None else None,
                   primary, tuple(subs), binnings)

    def eval_splits(self) -> list[tuple[str, Dataset]]:
        splits = [("valid", self.valid)]
        if self.test is not None:
            splits.append(("test", self.test))
        return splits

    def binning_metadata(self) -> dict:
        """JSON-ready binning transforms; stored in model metadata so that
        evaluation on fresh data reproduces training-time grades exactly."""
        return {name: {"flip_max": b.flip_max, "edges": b.edges.tolist()}
                for name, b in self.binnings.items()}


def _spec(subs, name: str) -> ObjectiveSpec:
    for s in subs:
        if s.name == name:
            return s
    raise KeyError(name)


class RunContext:
    """Owns the run directory and the build log (appended across commands)."""

    def __init__(self, out_dir, config_text: str = ""):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.config_text = config_text
        self.builds: list[dict] = []
        log_path = self.out_dir / "build_log.csv"
        if log_path.exists():
            with open(log_path, newline="", encoding="utf-8") as fh:
                self.builds = list(csv.DictReader(fh))

    def log_build(self, mode: str, objective: str, ub: str, n_constraints: int,
                  trees: int, path: str) -> None:
        self.builds.append({
            "build_index": str(len(self.builds) + 1),
            "mode": mode, "objective": objective, "ub": ub,
            "n_constraints": str(n_constraints), "trees": str(trees),
            "path": path,
        })
        cols = ["build_index", "mode", "objective", "ub", "n_constraints",
                "trees", "path"]
        with open(self.out_dir / "build_log.csv", "w", newline="",
                  encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(self.builds)

    def persist(self, subdir: str, result: TrainResult, reports: list[GainReport],
                n_subs: int, with_alpha: bool) -> Path:
        d = self.out_dir / subdir
        d.mkdir(parents=True, exist_ok=True)
        result.model.save(d / "model")
        (d / "history.csv").write_text(
            history_csv(result.history, n_subs, with_alpha), encoding="utf-8")
        (d / "report.csv").write_text(reports_csv(reports), encoding="utf-8")
        (d / "config").write_text(self.config_text, encoding="utf-8")
        if result.valid_history:
            (d / "valid_history.csv").write_text(
                _valid_history_csv(result.valid_history), encoding="utf-8")
        return d


def _valid_history_csv(rows: list[dict]) -> str:
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(str(row[c]) if c == "iteration" else repr(row[c])
                              for c in cols))
    return "\n".join(lines) + "\n"


def report_gains(candidate: BoosterModel, baseline: BoosterModel,
                 dataset: Dataset, primary: ObjectiveSpec,
                 subs: tuple[ObjectiveSpec, ...], split: str) -> GainReport:
    """Per-objective NDCG@K and %-gain of candidate over baseline."""
    scores_c = predict(candidate, dataset.features)
    scores_b = predict(baseline, dataset.features)
    rows = []
    for spec in (primary, *subs):
        grades = dataset.grades_for(spec)
        nb = dataset_ndcg(dataset, grades, scores_b, spec.ndcg_k)
        nc = dataset_ndcg(dataset, grades, scores_c, spec.ndcg_k)
        if nb == 0.0:
            pct = 0.0 if nc == 0.0 else float("inf")
        else:
            pct = 100.0 * (nc - nb) / nb
        rows.append(GainRow(spec.name, nb, nc, pct))
    return GainReport(split, tuple(rows))


@dataclass
class BaselineArtifacts:
    model: BoosterModel
    scales: CostScale
    reports: list[GainReport]
    path: Path | None = None


def run_baseline(exp: Experiment, config: TrainConfig,
                 ctx: RunContext | None = None) -> BaselineArtifacts:
    """Step 1: unconstrained run; its raw sub-objective costs become the
    rescaling constants Z^t."""
    result = train(exp.train, exp.primary, config=config, valid=exp.valid,
                   extra_metadata={"binnings": exp.binning_metadata()})
    scales = CostScale({
        s.name: dataset_surrogate_cost(exp.train, exp.train.grades_for(s),
                                       result.final_scores, s.ndcg_k, config.sigma)
        for s in exp.subs})
    reports = [report_gains(result.model, result.model, ds, exp.primary,
                            exp.subs, name)
               for name, ds in exp.eval_splits()]
    path = None
    if ctx is not None:
        path = ctx.persist("baseline", result, reports, n_subs=0, with_alpha=False)
        _write_scales(path / "scales.csv", scales, exp.subs)
        ctx.log_build("baseline", "", "", 0, config.num_trees, "baseline")
    return BaselineArtifacts(result.model, scales, reports, path)


def _write_scales(path: Path, scales: CostScale, subs) -> None:
    lines = ["objective,raw_cost"]
    lines += [f"{s.name},{scales[s.name]!r}" for s in subs]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_baseline(out_dir, subs: tuple[ObjectiveSpec, ...]) -> BaselineArtifacts:
    """Reload step-1 artifacts persisted by run_baseline."""
    d = Path(out_dir) / "baseline"
    if not (d / "model").exists():
        raise ConfigError(f"no baseline artifacts under {d}; run the baseline "
                          "mode first")
    model = BoosterModel.load(d / "model")
    values = {}
    with open(d / "scales.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            values[row["objective"]] = float(row["raw_cost"])
    missing = [s.name for s in subs if s.name not in values]
    if missing:
        raise ConfigError(f"baseline scales missing objectives {missing}")
    return BaselineArtifacts(model, CostScale(values), [], d)


def _train_constrained(args) -> TrainResult:
    """Worker for one sweep grid point (top level so it pickles)."""
    train_ds, valid_ds, primary, spec_t, bound, mu, scale, config, meta = args
    state = ALState.create([bound], mu, [scale])
    return train(train_ds, primary, [spec_t], config=config, al_state=state,
                 valid=valid_ds, extra_metadata=meta)


def sweep_ub(exp: Experiment, spec_t: ObjectiveSpec, grid: list[float],
             goal: float, margin: float, baseline: BaselineArtifacts,
             config: TrainConfig, mu: float, ctx: RunContext | None = None,
             jobs: int = 1) -> SweepResult:
    """Step 2 for one sub-objective: train one single-constraint model per
    grid value and pick the tightest bound whose validation primary %-gain
    still clears goal + margin."""
    _check_grid(grid)
    meta = {"binnings": exp.binning_metadata()}
    job_args = [(exp.train, exp.valid, exp.primary, spec_t, b, mu,
                 baseline.scales[spec_t.name], config, meta) for b in grid]
    results = _run_jobs(_train_constrained, job_args, jobs)

    entries = []
    for b, result in zip(grid, results):
        rep = report_gains(result.model, baseline.model, exp.valid,
                           exp.primary, exp.subs, "valid")
        gains = rep.pct_gains()
        entries.append(SweepEntry(b, gains[exp.primary.name], gains[spec_t.name],
                                  result.history[-1]["sub_costs"][0]))
        if ctx is not None:
            sub = f"sweeps/{spec_t.name}/ub_{b:g}"
            ctx.persist(sub, result, [rep], n_subs=1, with_alpha=True)
            ctx.log_build("sweep", spec_t.name, f"{b:g}", 1, config.num_trees, sub)

    chosen, attainable = choose_ub(entries, goal, margin)
    result = SweepResult(spec_t.name, tuple(grid), tuple(entries), chosen, attainable)
    _soft_check_sweep_direction(result, goal, margin)
    if ctx is not None:
        _write_sweep_csv(ctx.out_dir / "sweeps" / spec_t.name / "sweep.csv", result)
    return result


def _soft_check_sweep_direction(result: SweepResult, goal, margin) -> None:
    # Tightening the bound should not pick a UB whose own-objective gain is
    # below a looser qualifying one's; logged, never asserted (validation
    # noise can legitimately produce it).
    chosen = next(e for e in result.entries if e.ub == result.chosen_ub)
    for e in result.entries:
        if e.ub > chosen.ub and e.primary_gain >= goal + margin \
                and e.sub_gain > chosen.sub_gain:
            log.warning("sweep %s: chosen ub %g has own-objective gain "
                        "%.2f%% below looser ub %g's %.2f%%", result.objective,
                        chosen.ub, chosen.sub_gain, e.ub, e.sub_gain)


def choose_ub(entries, goal: float, margin: float) -> tuple[float, bool]:
    """Selection rule: tightest bound whose validation primary %-gain still
    clears goal + margin; falls back to the loosest bound, flagged, when
    nothing qualifies."""
    qualifying = [e.ub for e in entries if e.primary_gain >= goal + margin]
    if qualifying:
        return min(qualifying), True
    return max(e.ub for e in entries), False


def _check_grid(grid) -> None:
    if not grid:
        raise ConfigError("sweep grid is empty")
    if any(not 0.0 < b <= 1.0 for b in grid):
        raise ConfigError(f"sweep grid values must lie in (0, 1], got {grid}")


def _run_jobs(fn, job_args, jobs):
    if jobs <= 1 or len(job_args) <= 1:
        return [fn(a) for a in job_args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, job_args))


def _write_sweep_csv(path: Path, result: SweepResult) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["ub,primary_pct_gain,sub_pct_gain,final_train_cost,chosen"]
    for e in result.entries:
        chosen = int(e.ub == result.chosen_ub)
        lines.append(f"{e.ub:g},{e.primary_gain!r},{e.sub_gain!r},"
                     f"{e.final_train_cost!r},{chosen}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def sweep_all(exp: Experiment, grid: list[float], goal: float, margin: float,
              baseline: BaselineArtifacts, config: TrainConfig, mu: float,
              ctx: RunContext | None = None, jobs: int = 1) -> dict[str, SweepResult]:
    """Step 2 across every sub-objective (independent 1-D searches)."""
    out = {}
    for spec_t in exp.subs:
        out[spec_t.name] = sweep_ub(exp, spec_t, grid, goal, margin, baseline,
                                    config, mu, ctx, jobs)
    if ctx is not None:
        lines = ["objective,chosen_ub,attainable"]
        lines += [f"{name},{r.chosen_ub:g},{int(r.attainable)}"
                  for name, r in out.items()]
        (ctx.out_dir / "sweeps" / "chosen.csv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8")
    return out


@dataclass
class FullArtifacts:
    model: BoosterModel
    reports: list[GainReport]
    result: TrainResult
    bounds: dict[str, float]


def train_full(exp: Experiment, ubs: dict[str, float],
               baseline: BaselineArtifacts, config: TrainConfig, mu: float,
               ctx: RunContext | None = None) -> FullArtifacts:
    """Step 3: one training run with the full constraint set."""
    missing = [s.name for s in exp.subs if s.name not in ubs]
    if missing:
        raise ConfigError(f"bounds required for objectives {missing}")
    bounds = [ubs[s.name] for s in exp.subs]
    scales = baseline.scales.as_array([s.name for s in exp.subs])
    state = ALState.create(bounds, mu, scales)
    result = train(exp.train, exp.primary, list(exp.subs), config=config,
                   al_state=state, valid=exp.valid,
                   extra_metadata={"binnings": exp.binning_metadata()})
    reports = [report_gains(result.model, baseline.model, ds, exp.primary,
                            exp.subs, name)
               for name, ds in exp.eval_splits()]
    if ctx is not None:
        ctx.persist("full", result, reports, n_subs=len(exp.subs), with_alpha=True)
        ctx.log_build("full", "", "", len(exp.subs), config.num_trees, "full")
    return FullArtifacts(result.model, reports, result,
                         {s.name: ubs[s.name] for s in exp.subs})


@dataclass
class LWArtifacts:
    model: BoosterModel
    reports: list[GainReport]
    result: TrainResult
    weights: np.ndarray
    final_costs: np.ndarray


def train_linear_weighting(exp: Experiment, weights, baseline: BaselineArtifacts,
                           config: TrainConfig, ctx: RunContext | None = None,
                           subdir: str = "lw") -> LWArtifacts:
    """Fixed convex combination of the same rescaled costs; no dual updates."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(weights) != len(exp.subs) + 1:
        raise ConfigError(f"need {len(exp.subs) + 1} weights (primary + subs), "
                          f"got {len(weights)}")
    if np.any(weights < 0.0):
        raise ConfigError("linear weights must be non-negative")
    total = float(weights.sum())
    if total == 0.0:
        raise ConfigError("linear weights are all zero")
    if abs(total - 1.0) > 1e-12:
        warnings.warn(f"linear weights sum to {total}; normalizing")
        weights = weights / total
    scales = baseline.scales.as_array([s.name for s in exp.subs])
    result = train(exp.train, exp.primary, list(exp.subs), config=config,
                   lw_weights=weights, scales=scales, valid=exp.valid,
                   extra_metadata={"binnings": exp.binning_metadata()})
    reports = [report_gains(result.model, baseline.model, ds, exp.primary,
                            exp.subs, name)
               for name, ds in exp.eval_splits()]
    final_costs = np.asarray(result.history[-1]["sub_costs"])
    if ctx is not None:
        ctx.persist(subdir, result, reports, n_subs=len(exp.subs), with_alpha=False)
        ctx.log_build("lw", "", "", len(exp.subs), config.num_trees, subdir)
    return LWArtifacts(result.model, reports, result, weights, final_costs)


def _train_lw(args) -> TrainResult:
    """Worker for one LW trial (top level so it pickles)."""
    train_ds, valid_ds, primary, subs, weights, scales, config = args
    return train(train_ds, primary, list(subs), config=config,
                 lw_weights=weights, scales=scales, valid=None)


@dataclass
class LWComparison:
    weights: np.ndarray          # (n_trials, T+1)
    final_costs: np.ndarray      # (n_trials, T) rescaled training costs
    satisfied: np.ndarray        # (n_trials,) bool, all costs <= bounds
    bounds: dict[str, float]

    @property
    def satisfaction_rate(self) -> float:
        return float(self.satisfied.mean())


def compare_lw(exp: Experiment, bounds: dict[str, float],
               baseline: BaselineArtifacts, config: TrainConfig,
               n_trials: int, seed: int, ctx: RunContext | None = None,
               jobs: int = 1) -> LWComparison:
    """Monte-Carlo weight search over the simplex: how often does a random
    convex combination land inside the constraint region that one-shot AL
    training hits in a single run?"""
    if n_trials < 1:
        raise ConfigError(f"n_trials must be >= 1, got {n_trials}")
    names = [s.name for s in exp.subs]
    missing = [n for n in names if n not in bounds]
    if missing:
        raise ConfigError(f"bounds required for objectives {missing}")
    b_arr = np.array([bounds[n] for n in names])
    scales = baseline.scales.as_array(names)
    rng = np.random.default_rng(seed)
    weight_samples = rng.dirichlet(np.ones(len(exp.subs) + 1), size=n_trials)

    job_args = [(exp.train, None, exp.primary, exp.subs, w, scales, config)
                for w in weight_samples]
    results = _run_jobs(_train_lw, job_args, jobs)

    final_costs = np.array([r.history[-1]["sub_costs"] for r in results])
    satisfied = np.all(final_costs <= b_arr, axis=1)
    if ctx is not None:
        d = ctx.out_dir / "lw"
        d.mkdir(parents=True, exist_ok=True)
        cols = (["trial", "w_pm"] + [f"w_{n}" for n in names]
                + [f"cost_{n}" for n in names] + ["satisfied"])
        lines = [",".join(cols)]
        for i in range(n_trials):
            cells = [str(i + 1)]
            cells += [repr(w) for w in weight_samples[i]]
            cells += [repr(c) for c in final_costs[i]]
            cells.append(str(int(satisfied[i])))
            lines.append(",".join(cells))
        (d / "trials.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        for i in range(n_trials):
            ctx.log_build("lw", "", "", len(exp.subs), config.num_trees,
                          f"lw/trial_{i + 1}")
    return LWComparison(weight_samples, final_costs, satisfied, dict(bounds))


@dataclass
class OneShotResult:
    baseline: BaselineArtifacts
    sweeps: dict[str, SweepResult]
    full: FullArtifacts


def run_one_shot(exp: Experiment, config: TrainConfig, mu: float,
                 grid: list[float], goal: float, margin: float,
                 ctx: RunContext | None = None, jobs: int = 1) -> OneShotResult:
    """The whole 3-step procedure: 1 baseline + one sweep model per grid
    point per sub-objective + exactly 1 fully constrained model."""
    baseline = run_baseline(exp, config, ctx)
    sweeps = sweep_all(exp, grid, goal, margin, baseline, config, mu, ctx, jobs)
    ubs = {name: r.chosen_ub for name, r in sweeps.items()}
    full = train_full(exp, ubs, baseline, config, mu, ctx)
    return OneShotResult(baseline, sweeps, full)
