"""
Fitting timing models
---------------------

A short benchmark records how long each phase of a grow takes per level,
then linear models are fitted to the samples. The last cell evaluates the
bound on nested match time and the aggregate grow predictor.
"""

import numpy as np

from hgs.harness import ExperimentConfig, bench
from hgs.perfmodel import (
    REFERENCE_MODELS,
    BoundParams,
    direct_sum,
    fit_samples,
    geometric_bound,
    predict_t_mg,
    report,
)

# %%
# Level 1 talks to the top over loopback TCP with 2 ms of injected latency.
# The other links stay in process.

cfg = ExperimentConfig(transport="tcp", tcp_links=[1], inter_latency_s=0.002,
                       repetitions=10, suite=["t4", "t5", "t6", "t7"])
run = bench(cfg)
print(run.trials, "trials,", len(run.samples), "samples")

# %%
# One model per phase, with the communication phase split by link type.

models = fit_samples(run.samples)
print(report(models)[1])

# %%
# Bound on the summed match time over every level, against the term-by-term sum.

l0 = REFERENCE_MODELS["inter"]
for s0 in (1_000, 18_061, 1_000_000):
    p = BoundParams(2, s0, l0.beta * s0 + l0.beta0, l0.beta, l0.beta0)
    print("s0 %8d  bound %.4f  sum %.4f  bound/t0 %.3f"
          % (s0, geometric_bound(p), direct_sum(p), geometric_bound(p) / p.t0))

# %%
# Predicted whole-grow time for a 94-unit request across one TCP link,
# three in-process links and four nested levels.

for t0 in np.linspace(0.005, 0.02, 4):
    print("t0 %.4f  predicted %.4f s" % (t0, predict_t_mg(94, 1, 3, 4, t0)))
