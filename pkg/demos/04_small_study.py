# %% [markdown]
# # A small simulation study
#
# The study harness runs a factorial grid of scenarios, stores one result
# file per scenario and aggregates the statistics by parameter level.

# %%
import tempfile

from sectorcorr import Method
from sectorcorr.study import StudyConfig, results_to_csv, run_grid, stratify

config = StudyConfig(
    T=(25, 100), n=(100, 400), p=(0.04,), rho=(0.04,), gamma=(0.0, 0.25, 0.5),
    reps=100, m=10, seed=3, estimators=(Method.IMM, Method.DMM, Method.MAX),
)
grid = config.scenarios()
print(len(grid), "scenarios")

# %% [markdown]
# Results are independent of the number of workers. Finished scenarios
# are picked up from the result directory on a second run.

# %%
with tempfile.TemporaryDirectory() as store:
    results = run_grid(grid, workers=4, estimators=config.estimators, results_dir=store)
    again = run_grid(grid, workers=1, estimators=config.estimators, results_dir=store)
assert results_to_csv(results) == results_to_csv(again)

# %% [markdown]
# RMSE by sample length, averaged over the other parameters.

# %%
print(stratify(results, "T", statistics=("rmse",)).to_markdown(decimals=3))

# %% [markdown]
# Bias is shown for a single correlation level.

# %%
print(stratify(results, "n", statistics=("bias",), where={"gamma": 0.25}).to_markdown(decimals=3))
