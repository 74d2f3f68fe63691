# %% [markdown]
# # Training with BFGS
#
# The loss is the mean squared error over every (sample, time point,
# physical channel) in normalized units.  Training is full batch with dense
# BFGS and a strong-Wolfe line search.  This demo uses a short budget; the
# acceptance suite trains the same model for 5,000 iterations.

# %%
import numpy as np

from blnm.net import ArchitectureSpec
from blnm.synth import generate_dataset
from blnm.train import TrainConfig, evaluate, predict, train

ITERS = 400

ds = generate_dataset(80, 5.0, seed=1)
train_ds, test_ds = ds.subset(range(60)), ds.subset(range(60, 80))
spec = ArchitectureSpec(7, 7, 19, 10, 9, disentanglement=2)


def progress(it, x, f):
    if it % 100 == 0:
        print(f"iteration {it:5d}  loss {f:.3e}")


weights, norm, report = train(train_ds, spec, TrainConfig(max_iters=ITERS), callback=progress)
print(report.termination_reason, f"{report.wall_time:.1f} s")

# %% [markdown]
# Held-out error, and the same model scored on grids from 0.1 ms to 20 ms.

# %%
print("train MSE", report.final_loss)
print("test MSE ", evaluate(weights, norm, test_ds))
for dt in (0.1, 1.0, 5.0, 10.0, 20.0):
    print(f"dt {dt:5.1f} ms  test MSE {evaluate(weights, norm, test_ds, dt):.4e}")

# %% [markdown]
# Predictions come back in raw units on any time grid.

# %%
times = np.arange(0, 600.001, 0.5)
pred = predict(weights, norm, test_ds.params[0], times)
print(pred.shape, "first channel near R peak:", pred[300, 0].round(3))
