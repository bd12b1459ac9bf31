"""Run every stage on a small synthetic population and show what each wrote.

    python demos/pipeline_walkthrough.py

The same run from the shell: ``oudpipe run-all --config demos/small.json``.
"""

import json
from pathlib import Path

import pandas as pd

from oudpipe.pipeline import COMMANDS, load_config, run

here = Path(__file__).parent
cfg = load_config(here / "small.json")
out = Path(cfg["output_dir"])

for command in COMMANDS[:-1]:
    run(command, cfg)
    print(f"{command:10s} -> {sorted(p.name for p in (out / ('features' if command == 'featurize' else command)).iterdir())}")

excl = json.loads((out / "cohort" / "exclusions.json").read_text())
sel = json.loads((out / "select" / "selection_report.json").read_text())
print(f"\ncohort: {excl['members']} members, {excl['oud']} OUD; exclusions {excl['exclusions']}")
print(f"variance filter kept {len(sel['stages']['variance'])}, chi-squared kept {len(sel['stages']['chi2'])}")
for kind, r in sel["rfe"].items():
    print(f"RFE {kind:9s} best {len(r['best_features']):2d} features, CV AUC {r['best_auc']:.3f}")

table = pd.read_csv(out / "evaluate" / "comparison.csv")
print("\n" + table[["model", "stage", "n_features", "recall_oud", "auc", "best"]].to_string(index=False))
print(f"\nfull report: {out / 'report' / 'report.md'}")
