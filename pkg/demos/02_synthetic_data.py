# %% [markdown]
# # Synthetic pseudo-ECG data
#
# A closed-form waveform family stands in for an expensive simulator: seven
# controls in [-1, 1] shape an R/S complex and a T wave, and nine channels
# are shifted, scaled copies of that template.

# %%
import tempfile

import numpy as np

from blnm.data import NormalizationInfo, load_dataset, resample, save_dataset, twelve_leads
from blnm.synth import PARAM_NAMES, channels, generate_dataset

tau = np.linspace(0, 1, 601)
p = np.zeros(7)
z = channels(tau, p)
print("controls:", PARAM_NAMES)
print("V1 peak at %.1f ms with value %.3f" % (tau[np.argmax(z[:, 0])] * 600, z[:, 0].max()))

# %% [markdown]
# A dataset draws its controls by latin hypercube sampling and samples every
# trajectory on one grid.

# %%
ds = generate_dataset(200, dt_ms=5.0, T_ms=600.0, seed=1)
print("params", ds.params.shape, "signals", ds.signals.shape)

# %% [markdown]
# Limb leads follow from the electrode potentials LA, RA and F.

# %%
names, leads = twelve_leads(ds.signals[0])
print(names)
I, II, III = leads[:, 6], leads[:, 7], leads[:, 8]
print("Einthoven I + III - II, max:", np.abs(I + III - II).max())

# %% [markdown]
# Normalization maps time to [0, 1] and parameters and channels to [-1, 1].

# %%
norm = NormalizationInfo.from_dataset(ds)
zn = norm.channels(ds.signals)
print("normalized channel range:", zn.min(), zn.max())

# %% [markdown]
# Synthetic data regenerate exactly on any grid, so finer grids give exact
# ground truth.

# %%
fine = resample(ds.subset(range(3)), 0.1)
print("fine grid", fine.signals.shape, "agrees with coarse:",
      np.array_equal(fine.signals[:, ::50], ds.signals[:3]))

with tempfile.TemporaryDirectory() as d:
    save_dataset(ds.subset(range(5)), d)
    print("round trip exact:", load_dataset(d) == ds.subset(range(5)))
