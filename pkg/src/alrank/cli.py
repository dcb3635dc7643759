"""Command-line surface for batch runs.

Usage examples
--------------

  alrank train --config run.cfg --mode baseline --out runs/demo
  alrank sweep --config run.cfg --out runs/demo
  alrank train --config run.cfg --mode full --ub QS=0.7 --ub PR=0.5 --out runs/demo
  alrank compare-lw --config run.cfg --out runs/demo --trials 50
  alrank evaluate --model runs/demo/full/model \
                  --baseline runs/demo/baseline/model --data valid.txt

Config file is INI-style; CLI flags override config keys and the effective
merged config is persisted with every run:

  [data]
  train = train.txt
  valid = valid.txt            ; optional: split from train when absent
  valid_fraction = 0.2
  split_seed = 7

  [model]
  trees = 300
  learning_rate = 0.1
  max_leaves = 31
  min_docs_per_leaf = 20
  hessian_reg = 1.0
  sigma = 1.0
  max_bins = 256
  seed = 0

  [al]
  mu = 10.0
  grid = 0.9, 0.8, 0.7, 0.6, 0.5
  goal = -1.0
  margin = 0.5

  [lw]
  trials = 50
  seed = 99
  weights = 0.6, 0.2, 0.2      ; only for --mode lw

  [objective:rel]
  source = label
  primary = true
  ndcg_k = 10

  [objective:QS]
  source = feature:3
  direction = badness
  grades = 5
  ub = 0.9                     ; used by --mode full / compare-lw

Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import ObjectiveBinning, ObjectiveSpec, parse_letor
from .errors import ConfigError, ParseError, TrainingError
from .gbdt import BoosterModel, TrainConfig
from .pipeline import (Experiment, RunContext, compare_lw, load_baseline,
                       report_gains, reports_csv, run_baseline, sweep_all,
                       train_full, train_linear_weighting)

MODES = ("baseline", "sweep", "full", "lw", "evaluate")


@dataclass
class RunConfig:
    """Merged config-file + flag settings for one CLI run."""

    mode: str
    out_dir: str
    train_path: str | None = None
    valid_path: str | None = None
    test_path: str | None = None
    valid_fraction: float = 0.2
    split_seed: int = 7
    primary: ObjectiveSpec | None = None
    subs: list[ObjectiveSpec] = field(default_factory=list)
    ubs: dict[str, float] = field(default_factory=dict)
    train_config: TrainConfig = field(default_factory=TrainConfig)
    mu: float = 10.0
    grid: list[float] = field(default_factory=lambda: [0.9, 0.8, 0.7, 0.6, 0.5])
    goal: float = -1.0
    margin: float = 0.5
    lw_trials: int = 50
    lw_seed: int = 99
    lw_weights: list[float] | None = None
    jobs: int = 1
    eval_model: str | None = None
    eval_baseline: str | None = None
    eval_data: str | None = None

    def effective_text(self) -> str:
        """Deterministic INI rendering of the merged configuration."""
        # The run directory is wherever this file lives; everything else must
        # byte-reproduce the run, so no paths that vary with the destination.
        sections: dict[str, dict[str, str]] = {
            "run": {"mode": self.mode, "jobs": str(self.jobs)},
            "data": {
                "train": self.train_path or "",
                "valid": self.valid_path or "",
                "test": self.test_path or "",
                "valid_fraction": repr(self.valid_fraction),
                "split_seed": str(self.split_seed),
            },
            "model": {k: repr(v) if isinstance(v, float) else str(v)
                      for k, v in self.train_config.to_dict().items()},
            "al": {
                "mu": repr(self.mu),
                "grid": ", ".join(f"{b:g}" for b in self.grid),
                "goal": repr(self.goal),
                "margin": repr(self.margin),
            },
            "lw": {
                "trials": str(self.lw_trials),
                "seed": str(self.lw_seed),
                "weights": ", ".join(repr(w) for w in self.lw_weights or []),
            },
        }
        for spec in ([self.primary] if self.primary else []) + self.subs:
            sec = {
                "source": "label" if spec.from_label else f"feature:{spec.feature}",
                "direction": spec.direction,
                "grades": str(spec.grades),
                "ndcg_k": str(spec.ndcg_k),
                "primary": str(spec is self.primary).lower(),
            }
            if spec.name in self.ubs:
                sec["ub"] = repr(self.ubs[spec.name])
            sections[f"objective:{spec.name}"] = sec
        lines = []
        for name in sorted(sections):
            lines.append(f"[{name}]")
            for key in sorted(sections[name]):
                lines.append(f"{key} = {sections[name][key]}")
            lines.append("")
        return "\n".join(lines)


def _parse_objective(name: str, section) -> tuple[ObjectiveSpec, bool, float | None]:
    source = section.get("source", "label").strip()
    if source == "label":
        feature = None
    elif source.startswith("feature:"):
        try:
            feature = int(source.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"objective {name!r}: bad source {source!r}") from None
    else:
        raise ConfigError(f"objective {name!r}: source must be 'label' or "
                          f"'feature:<id>', got {source!r}")
    spec = ObjectiveSpec(
        name=name,
        feature=feature,
        direction=section.get("direction", "goodness").strip(),
        grades=section.getint("grades", 5),
        ndcg_k=section.getint("ndcg_k", 10),
    )
    primary = section.getboolean("primary", False)
    ub = section.getfloat("ub") if "ub" in section else None
    return spec, primary, ub


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


def build_run_config(args) -> RunConfig:
    """Read the config file, apply flag overrides, validate invariants."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cp.read(path)

    data = cp["data"] if cp.has_section("data") else {}
    model_sec = cp["model"] if cp.has_section("model") else {}
    al = cp["al"] if cp.has_section("al") else {}
    lw = cp["lw"] if cp.has_section("lw") else {}

    def model_val(key, flag, cast, default):
        if flag is not None:
            return cast(flag)
        if key in model_sec:
            return cast(model_sec[key])
        return default

    train_config = TrainConfig(
        num_trees=model_val("trees", args.trees, int, 300),
        learning_rate=model_val("learning_rate", args.lr, float, 0.1),
        max_leaves=model_val("max_leaves", args.leaves, int, 31),
        min_docs_per_leaf=model_val("min_docs_per_leaf", None, int, 20),
        hessian_reg=model_val("hessian_reg", None, float, 1.0),
        sigma=model_val("sigma", None, float, 1.0),
        max_bins=model_val("max_bins", None, int, 256),
        seed=model_val("seed", args.seed, int, 0),
    )

    primary = None
    subs: list[ObjectiveSpec] = []
    ubs: dict[str, float] = {}
    for sec_name in cp.sections():
        if not sec_name.startswith("objective:"):
            continue
        name = sec_name.split(":", 1)[1]
        spec, is_primary, ub = _parse_objective(name, cp[sec_name])
        if is_primary:
            if primary is not None:
                raise ConfigError("more than one primary objective declared")
            primary = spec
        else:
            subs.append(spec)
        if ub is not None:
            ubs[name] = ub
    if primary is None:
        # Fall back to a single label-sourced objective.
        label_specs = [s for s in subs if s.from_label]
        if len(label_specs) == 1:
            primary = label_specs[0]
            subs.remove(primary)
        elif any(s.startswith("objective:") for s in cp.sections()):
            raise ConfigError("exactly one primary objective is required "
                              "(set primary = true)")

    for item in args.ub or []:
        name, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--ub expects <name>=<value>, got {item!r}")
        try:
            ubs[name] = float(val)
        except ValueError:
            raise ConfigError(f"--ub {item!r}: bad value") from None

    cfg = RunConfig(
        mode=args.mode,
        out_dir=args.out or (cp.get("run", "out", fallback=None) or "runs/alrank"),
        train_path=data.get("train") or None,
        valid_path=data.get("valid") or None,
        test_path=data.get("test") or None,
        valid_fraction=float(data.get("valid_fraction", 0.2)),
        split_seed=int(data.get("split_seed", 7)),
        primary=primary,
        subs=subs,
        ubs=ubs,
        train_config=train_config,
        mu=float(args.mu) if args.mu is not None else float(al.get("mu", 10.0)),
        grid=_float_list(args.grid) if args.grid else
             _float_list(al.get("grid", "0.9, 0.8, 0.7, 0.6, 0.5")),
        goal=float(args.goal) if args.goal is not None else float(al.get("goal", -1.0)),
        margin=float(args.margin) if args.margin is not None
               else float(al.get("margin", 0.5)),
        lw_trials=int(args.trials) if getattr(args, "trials", None) is not None
                  else int(lw.get("trials", 50)),
        lw_seed=int(lw.get("seed", 99)),
        lw_weights=_float_list(lw["weights"]) if "weights" in lw else None,
        jobs=args.jobs or 1,
        eval_model=getattr(args, "model", None) or cp.get("evaluate", "model", fallback=None),
        eval_baseline=getattr(args, "baseline", None) or cp.get("evaluate", "baseline", fallback=None),
        eval_data=getattr(args, "data", None) or cp.get("evaluate", "data", fallback=None),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    if cfg.mode == "evaluate":
        for label, p in (("--model", cfg.eval_model), ("--data", cfg.eval_data),
                         ("--baseline", cfg.eval_baseline)):
            if not p:
                raise ConfigError(f"evaluate needs {label}")
            if not Path(p).exists():
                raise ConfigError(f"file not found: {p}")
        return
    if cfg.primary is None:
        raise ConfigError("exactly one primary objective is required")
    if not cfg.train_path:
        raise ConfigError("no training data configured ([data] train)")
    for p in (cfg.train_path, cfg.valid_path, cfg.test_path):
        if p and not Path(p).exists():
            raise ConfigError(f"data file not found: {p}")
    names = [cfg.primary.name] + [s.name for s in cfg.subs]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate objective names: {names}")


def _load_experiment(cfg: RunConfig) -> Experiment:
    def read(path):
        with open(path, encoding="utf-8") as fh:
            return parse_letor(fh)

    train_ds = read(cfg.train_path)
    valid_ds = read(cfg.valid_path) if cfg.valid_path else None
    test_ds = read(cfg.test_path) if cfg.test_path else None
    return Experiment.prepare(train_ds, cfg.primary, cfg.subs, valid_ds, test_ds,
                              cfg.valid_fraction, cfg.split_seed)


def cmd_train(cfg: RunConfig) -> int:
    """Dispatch a pipeline mode; artifacts go under the run directory."""
    if cfg.mode == "evaluate":
        return cmd_evaluate(cfg.eval_model, cfg.eval_data, cfg.eval_baseline)

    ctx = RunContext(cfg.out_dir, cfg.effective_text())
    exp = _load_experiment(cfg)

    if cfg.mode == "baseline":
        art = run_baseline(exp, cfg.train_config, ctx)
        print(f"baseline: {art.model.n_trees} trees -> {ctx.out_dir / 'baseline'}")
        for name, z in art.scales.values.items():
            print(f"  cost scale {name}: {z:.6f}")
        for rep in art.reports:
            print(rep.format_table())
    elif cfg.mode == "sweep":
        baseline = load_baseline(cfg.out_dir, exp.subs)
        sweeps = sweep_all(exp, cfg.grid, cfg.goal, cfg.margin, baseline,
                           cfg.train_config, cfg.mu, ctx, cfg.jobs)
        for name, res in sweeps.items():
            status = "" if res.attainable else "  [unattainable at goal]"
            print(f"sweep {name}: chosen ub = {res.chosen_ub:g}{status}")
            for e in res.entries:
                print(f"  ub {e.ub:g}: primary {e.primary_gain:+.2f}% "
                      f"sub {e.sub_gain:+.2f}%")
    elif cfg.mode == "full":
        if not all(s.name in cfg.ubs for s in exp.subs):
            missing = [s.name for s in exp.subs if s.name not in cfg.ubs]
            raise ConfigError(f"bounds required for objectives {missing}")
        baseline = load_baseline(cfg.out_dir, exp.subs)
        art = train_full(exp, cfg.ubs, baseline, cfg.train_config, cfg.mu, ctx)
        print(f"full model: {art.model.n_trees} trees, "
              f"bounds {art.bounds} -> {ctx.out_dir / 'full'}")
        for rep in art.reports:
            print(rep.format_table())
    elif cfg.mode == "lw":
        if cfg.lw_weights is None:
            raise ConfigError("--mode lw needs [lw] weights in the config")
        baseline = load_baseline(cfg.out_dir, exp.subs)
        art = train_linear_weighting(exp, cfg.lw_weights, baseline,
                                     cfg.train_config, ctx)
        print(f"lw model: weights {art.weights.tolist()} -> {ctx.out_dir / 'lw'}")
        for rep in art.reports:
            print(rep.format_table())
    return 0


def cmd_compare_lw(cfg: RunConfig) -> int:
    ctx = RunContext(cfg.out_dir, cfg.effective_text())
    exp = _load_experiment(cfg)
    if not all(s.name in cfg.ubs for s in exp.subs):
        missing = [s.name for s in exp.subs if s.name not in cfg.ubs]
        raise ConfigError(f"bounds required for objectives {missing}")
    baseline = load_baseline(cfg.out_dir, exp.subs)
    comp = compare_lw(exp, cfg.ubs, baseline, cfg.train_config, cfg.lw_trials,
                      cfg.lw_seed, ctx, cfg.jobs)
    n_ok = int(comp.satisfied.sum())
    print(f"linear weighting: {n_ok}/{cfg.lw_trials} trials satisfy all "
          f"constraints ({100.0 * comp.satisfaction_rate:.1f}%)")
    return 0


def cmd_evaluate(model_path, data_path, baseline_path, csv_out=None) -> int:
    """Load two models, score a data file, print the %-gain table."""
    candidate = BoosterModel.load(model_path)
    baseline = BoosterModel.load(baseline_path)
    with open(data_path, encoding="utf-8") as fh:
        ds = parse_letor(fh)

    meta = candidate.metadata.get("objectives", {})
    primary = _spec_from_meta(meta.get("primary"))
    subs = tuple(_spec_from_meta(d) for d in meta.get("subs", []))
    if primary is None:
        raise TrainingError("model metadata lacks objective declarations")
    labels = {}
    binnings = candidate.metadata.get("binnings", {})
    for spec in subs:
        b = binnings.get(spec.name)
        if b is None:
            raise TrainingError(f"model metadata lacks binning for {spec.name!r}")
        binning = ObjectiveBinning(b["flip_max"],
                                   np.asarray(b["edges"], dtype=np.float64))
        labels[spec.name] = binning.apply(ds, spec)
    ds = ds.with_objective_labels(labels)

    report = report_gains(candidate, baseline, ds, primary, subs, "eval")
    print(report.format_table())
    if csv_out:
        Path(csv_out).write_text(reports_csv([report]), encoding="utf-8")
    return 0


def _spec_from_meta(d) -> ObjectiveSpec | None:
    if not d:
        return None
    return ObjectiveSpec(name=d["name"], feature=d["feature"],
                         direction=d["direction"], grades=d["grades"],
                         ndcg_k=d["ndcg_k"])


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", help="run directory")
    p.add_argument("--mu", type=float, help="AL penalty constant")
    p.add_argument("--ub", action="append", metavar="NAME=VAL",
                   help="upper bound for one sub-objective (repeatable)")
    p.add_argument("--grid", help="comma-separated sweep grid of UB values")
    p.add_argument("--goal", type=float, help="minimum acceptable primary %%-gain")
    p.add_argument("--margin", type=float, help="selection margin over the goal")
    p.add_argument("--trees", type=int, help="number of boosting rounds")
    p.add_argument("--lr", type=float, help="shrinkage (learning rate)")
    p.add_argument("--leaves", type=int, help="max leaves per tree")
    p.add_argument("--seed", type=int, help="training config seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel training jobs")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alrank",
                                     description="Constrained multi-objective "
                                                 "LambdaMART training")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one pipeline mode")
    p_train.add_argument("--mode", required=True, choices=MODES)
    _add_common(p_train)

    p_sweep = sub.add_parser("sweep", help="1-D upper-bound sweeps (step 2)")
    _add_common(p_sweep)

    p_lw = sub.add_parser("compare-lw", help="Monte-Carlo linear-weighting trials")
    p_lw.add_argument("--trials", type=int, help="number of weight samples")
    _add_common(p_lw)

    p_eval = sub.add_parser("evaluate", help="%%-gain table of model vs baseline")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--baseline", required=True)
    p_eval.add_argument("--csv", help="also write the report as CSV")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "evaluate":
            for p in (args.model, args.data, args.baseline):
                if not Path(p).exists():
                    raise ConfigError(f"file not found: {p}")
            return cmd_evaluate(args.model, args.data, args.baseline, args.csv)
        if args.command == "sweep":
            args.mode = "sweep"
        elif args.command == "compare-lw":
            args.mode = "lw"
        cfg = build_run_config(args)
        if args.command == "compare-lw":
            return cmd_compare_lw(cfg)
        return cmd_train(cfg)
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
