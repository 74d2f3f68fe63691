"""Branched latent neural maps: surrogate models of parameterized time series.

A BLNM maps (time, parameters) to a set of output channels.  Time and
parameters travel through separate branches for the first few hidden layers
before merging; extra latent outputs are trained implicitly.
"""

from .data import Dataset, NormalizationInfo, derived_leads, load_dataset, resample, save_dataset
from .errors import BLNMError, NumericFault, ParseError, StructuralError, ValidationError
from .estimate import DEConfig, EstimationResult, Observation, estimate, jade, objective
from .grad import backprop, grad_check
from .net import (
    ArchitectureSpec, ModelWeights, build, count_params, forward, forward_trajectory,
    load_model, save_model,
)
from .synth import generate_dataset
from .train import TrainConfig, TrainReport, evaluate, minimize_bfgs, train
from .tune import SearchSpace, TuneResult, ablate_states, kfold_split, lhs_sample, tune

__version__ = "0.1.0"
