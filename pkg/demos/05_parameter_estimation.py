# %% [markdown]
# # Recovering parameters from a trajectory
#
# Given a trained map and an observed trajectory, adaptive differential
# evolution (JADE) searches [-1, 1]^7 for the parameters whose predicted
# physical channels match the observation best.

# %%
import numpy as np

from blnm.estimate import DEConfig, Observation, estimate, jade, lehmer_mean
from blnm.net import ArchitectureSpec
from blnm.synth import generate_dataset
from blnm.train import TrainConfig, predict, train

# the optimizer on its own
res = jade(lambda x: float(np.sum(x * x)), 7, DEConfig(max_evals=10_000, seed=0))
print(f"7-d sphere: best {res.best_loss:.2e} after {res.n_evals} evaluations")
print("Lehmer mean of {0.2, 0.4}:", lehmer_mean([0.2, 0.4]))

# %% [markdown]
# A quickly trained surrogate, then observations it generates at known parameters.

# %%
ds = generate_dataset(60, 5.0, seed=1)
weights, norm, report = train(ds.subset(range(50)), ArchitectureSpec(7, 7, 19, 10, 9, 2),
                              TrainConfig(max_iters=1000))
print("surrogate train MSE", report.final_loss)

test = ds.subset(range(50, 60))
for i in range(3):
    truth = norm.params(test.params[i])
    obs = Observation(test.times, predict(weights, norm, test.params[i], test.times))
    r = estimate(weights, norm, obs, DEConfig(seed=i, target_loss=1e-10), truth=truth)
    print(f"sample {i}: loss {r.best_loss:.1e}, max |error| {r.abs_error.max():.3f}, "
          f"{r.generations} generations, {r.wall_time:.1f} s")

# %% [markdown]
# Fitting the synthetic waveform itself rather than the surrogate's own
# output adds the surrogate's approximation error to the problem.

# %%
obs = Observation.from_dataset(test, 0)
r = estimate(weights, norm, obs, DEConfig(seed=0, target_loss=1e-10),
             truth=norm.params(test.params[0]))
print("raw estimate:", norm.params_inv(r.theta_hat).round(3))
print("truth:       ", test.params[0].round(3))
