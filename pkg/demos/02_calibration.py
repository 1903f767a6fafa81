"""Bayesian calibration of the water-balance model.

We manufacture a catchment whose true parameters we know, add 5% observation
noise, and let the sampler find them. Three adaptive Metropolis chains (with
one delayed-rejection stage) explore the parameter box; the between-chain
spread diagnostic (PSRF) decides convergence, and the retained tail of each
chain becomes the posterior parameter sample.

Runs in roughly ten seconds.
"""

import numpy as np

from ensflow.calibrate import ChainConfig, calibrate_catchment
from ensflow.experiment import SyntheticSpec, synthesize_monthly
from ensflow.timeseries import partition

TRUTH = (400.0, 0.9)

spec = SyntheticSpec(theta1=TRUTH[0], theta2=TRUTH[1], n_months=180, seed=3)
series, _ = synthesize_monthly(spec)
split = partition(180, 12, 144, 12)

result = calibrate_catchment(series, split, ChainConfig(seed=3))

print(f"converged: {result.sample.converged}  (PSRF {result.psrf:.4f}, threshold 1.10)")
print(f"restarts used: {result.restarts_used}")
print(f"retained parameter pairs: {result.sample.m} ({result.sample.mode})")
print(f"wall time: {result.elapsed_seconds:.1f} s\n")

pairs = result.sample.pairs
for j, (name, truth) in enumerate(zip(("theta1", "theta2"), TRUTH)):
    lo, hi = np.quantile(pairs[:, j], [0.05, 0.95])
    mean = pairs[:, j].mean()
    inside = "inside" if lo <= truth <= hi else "OUTSIDE"
    print(
        f"{name}: posterior mean {mean:8.3f}, central 90% [{lo:8.3f}, {hi:8.3f}]"
        f"  -- truth {truth} is {inside}"
    )

# the same chains, read from the front instead of the back: the transient
# before convergence gives a deliberately rougher parameter collection
rough = calibrate_catchment(series, split, ChainConfig(seed=3), mode="informal-head")
spread = pairs[:, 0].std()
rough_spread = rough.sample.pairs[:, 0].std()
print(f"\ntheta1 spread, posterior tail vs transient head: {spread:.1f} vs {rough_spread:.1f}")
