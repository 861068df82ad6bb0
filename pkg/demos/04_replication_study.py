"""A small replicated simulation study.

Runs the balanced logistic scenario at reduced scale and prints bias and
coverage for the true-label, naive, and corrected estimators. Increase R
(and B) to tighten the Monte Carlo error.
"""

from clusimex import SimexConfig
from clusimex.simbench import LogisticScenario, format_metrics_table, run_replications

table = run_replications(
    LogisticScenario(n=500, scenario_id="balanced_demo"),
    R=50,
    master_seed=0,
    simex_config=SimexConfig(B=25),
    n_jobs=-1,
)
print(format_metrics_table(table))
print(
    "\nThe naive slope for class 2 is biased toward zero and its 95% interval"
    "\nalmost never covers the truth; the corrected estimator removes most of"
    "\nthe bias and restores near-nominal coverage."
)
