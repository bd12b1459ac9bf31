"""Plant a handful of odds ratios, then read them back with the logistic model.

    python demos/odds_ratio_recovery.py [n_patients]
"""

import math
import sys

from oudpipe.cohort import CohortConfig, build_cohort
from oudpipe.features import build_matrix
from oudpipe.models import ModelSpec, odds_ratios, train
from oudpipe.synth import GeneratorConfig, generate

n = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
keep = {"male", "chronic_less", "chronic_moderate", "chronic_high", "dx_965.01"}
planted = [(k, v) for k, v in GeneratorConfig().planted_effects if k in keep]
cfg = GeneratorConfig(n_patients=n, seed=0, planted_effects=planted, interaction_effects=())

claims, truth = generate(cfg)
cohort = build_cohort(claims, CohortConfig(calendar=cfg.calendar))
print(f"{len(cohort)} cohort members, {int(cohort.is_oud.sum())} OUD, exclusions {cohort.exclusions}")

fm = build_matrix(cohort, claims).design()
model = train(ModelSpec("LOGISTIC"), fm.dense(), fm.y, fm.names)
fitted = odds_ratios(model).set_index("feature")

print(f"\n{'feature':18s} {'planted':>8s} {'fitted':>8s}  reference")
for name, beta in planted:
    row = fitted.loc[name]
    print(f"{name:18s} {math.exp(beta):8.2f} {row.odds_ratio:8.2f}  {row.interpretation}")
