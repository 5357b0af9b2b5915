"""
Ablation tables
===============

Train each break-down variant (no priors, image prior, both priors, both priors
plus coarse-to-fine) and each sub-loss stack, then score them on the two
held-out pairs. The full run takes a few minutes; pass a step count to shorten
it.
"""

import sys
from semlle import config, data, training

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 500
result = training.run_ablation(config.desk_config(max_steps=steps), data.overfit_suite(), data.overfit_holdout())
print(result.render_text())

# every run also checks that switched-off losses contribute exactly nothing
print("switch exactness:", all(r.switch_exact for r in result.breakdown + result.losses))
