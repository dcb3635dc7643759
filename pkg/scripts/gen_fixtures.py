"""Reference runs that freeze the synthetic-fixture expectations.

Writes tests/fixtures/synthetic_reference.json with one section per kernel
backend (byte-identity guarantees are per backend, so each gets its own
frozen trajectory).  Run with --both to generate the compiled-backend section
and then re-invoke itself under ALRANK_NO_EXT=1 for the numpy backend.

    python scripts/gen_fixtures.py --both
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

FIXTURE_PATH = ROOT / "tests" / "fixtures" / "synthetic_reference.json"


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--both", action="store_true",
                        help="also regenerate the numpy-backend section")
    args = parser.parse_args()

    import numpy as np

    from alrank import (ALState, Experiment, TrainConfig, compare_lw,
                        run_baseline, run_one_shot, train)
    from alrank.gbdt import history_csv
    from alrank.kernels import BACKEND
    from alrank.pipeline import RunContext
    import synthetic as syn

    print(f"== generating reference values for backend: {BACKEND}")
    ds = syn.make_synthetic()
    primary, subs = syn.synthetic_objectives()
    exp = Experiment.prepare(ds, primary, subs,
                             valid_fraction=syn.VALID_FRACTION,
                             split_seed=syn.SPLIT_SEED)
    section: dict = {}

    # Unconstrained regression fixture (byte-identity target).
    res = train(exp.train, primary, config=syn.REGRESSION_CONFIG)
    csv_text = history_csv(res.history, 0, with_alpha=False)
    section["regression"] = {
        "model_sha256": hashlib.sha256(res.model.serialize().encode()).hexdigest(),
        "history_csv": csv_text,
    }
    print(f"regression: final cost {res.history[-1]['cost_pm']:.6f}, "
          f"model sha {section['regression']['model_sha256'][:12]}...")

    # Dual dynamics: 200-tree baseline scale, single constraint b=0.9.
    base = run_baseline(exp, syn.DYNAMICS_CONFIG)
    state = ALState.create([0.9], syn.MU, [base.scales["sub1"]])
    dyn = train(exp.train, primary, [subs[0]], config=syn.DYNAMICS_CONFIG,
                al_state=state)
    section["dynamics"] = {
        "baseline_scale_sub1": base.scales["sub1"],
        "baseline_scale_sub2": base.scales["sub2"],
        "final_sub_cost": dyn.history[-1]["sub_costs"][0],
        "final_alpha": dyn.history[-1]["alpha"][0],
    }
    print(f"dynamics: final rescaled sub1 cost {section['dynamics']['final_sub_cost']:.6f}, "
          f"final alpha {section['dynamics']['final_alpha']:.6f}")

    # One-shot pipeline + LW comparison at the limited tree budget.
    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        ctx = RunContext(tmp)
        shot = run_one_shot(exp, syn.PIPELINE_CONFIG, syn.MU, syn.SWEEP_GRID,
                            syn.SWEEP_GOAL, syn.SWEEP_MARGIN, ctx)
        n_pipeline_builds = len(ctx.builds)
        chosen = {name: r.chosen_ub for name, r in shot.sweeps.items()}
        comp = compare_lw(exp, chosen, shot.baseline, syn.PIPELINE_CONFIG,
                          n_trials=syn.LW_TRIALS, seed=syn.LW_SEED, ctx=ctx)
    full_costs = [float(c) for c in shot.full.result.history[-1]["sub_costs"]]
    section["pipeline"] = {
        "n_pipeline_builds": n_pipeline_builds,
        "chosen_ubs": chosen,
        "full_final_costs": full_costs,
        "full_valid_gains": shot.full.reports[0].pct_gains(),
        "baseline_valid_ndcg_pm": shot.baseline.reports[0].rows[0].ndcg_baseline,
        "lw_satisfied": int(comp.satisfied.sum()),
        "lw_trials": syn.LW_TRIALS,
    }
    print(f"pipeline: {n_pipeline_builds} builds, chosen {chosen}, "
          f"full costs {[round(c, 4) for c in full_costs]}, "
          f"LW satisfied {section['pipeline']['lw_satisfied']}/{syn.LW_TRIALS}")

    FIXTURE_PATH.parent.mkdir(parents=True, exist_ok=True)
    doc = {}
    if FIXTURE_PATH.exists():
        doc = json.loads(FIXTURE_PATH.read_text(encoding="utf-8"))
    doc[BACKEND] = section
    FIXTURE_PATH.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n",
                            encoding="utf-8")
    print(f"wrote {FIXTURE_PATH} [{BACKEND}]")

    if args.both and not os.environ.get("ALRANK_NO_EXT"):
        env = dict(os.environ, ALRANK_NO_EXT="1")
        subprocess.run([sys.executable, __file__], check=True, env=env)


if __name__ == "__main__":
    main()
