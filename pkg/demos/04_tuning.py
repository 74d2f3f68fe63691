# %% [markdown]
# # Hyperparameter search
#
# Configurations come from a latin hypercube over (layers, neurons, states,
# disentanglement level) and are scored by K-fold cross-validation.  The
# search below is tiny; the full protocol is 50 configurations, K = 5 and
# 10,000 iterations per fold (`blnm tune --configs 50 --k 5 --iters 10000`).

# %%
import numpy as np

from blnm.net import ArchitectureSpec
from blnm.synth import generate_dataset
from blnm.train import TrainConfig
from blnm.tune import SearchSpace, ablate_states, format_table, kfold_split, lhs_sample, map_point, tune

pts = lhs_sample(8, 2, seed=0)
print("one point per eighth in every column:",
      [sorted((col * 8).astype(int).tolist()) for col in pts.T])
print("fold sizes for 150 samples, K=5:", [len(f) for f in kfold_split(150, 5)])

space = SearchSpace(layers=(1, 4), neurons=(8, 14), states=(9, 11))
for u in lhs_sample(5, 4, seed=3):
    print("point", u.round(2), "->", map_point(u, space))

# %%
ds = generate_dataset(30, 20.0, seed=2)
result = tune(ds, space, n_configs=5, K=3, iters_per_fold=40, seed=3)
rows = [{"config": c["index"], "params": c["n_params"], "cv_mse": c["mean_loss"]}
        for c in result.configs]
print(format_table(rows, ["config", "params", "cv_mse"]))
print("selected:", result.best_spec)

# %% [markdown]
# Latent-state ablation: the same architecture, seed and budget with 0, 1
# and 2 latent outputs.

# %%
rows = ablate_states(ds.subset(range(20)), ArchitectureSpec(7, 3, 12, 9, 9, 2), [9, 10, 11],
                     TrainConfig(max_iters=150), ds.subset(range(20, 30)))
print(format_table(rows, ["n_states", "n_latent", "n_params", "train_mse", "test_mse"]))
