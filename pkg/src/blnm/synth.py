"""Closed-form nine-channel pseudo-ECG family with seven controls.

The controls ``p`` live in [-1, 1]^7::

    p[0]  QRS amplitude        p[4]  activation delay
    p[1]  QRS width            p[5]  T-wave delay
    p[2]  T-wave amplitude     p[6]  inter-channel dispersion
    p[3]  T-wave width

Each channel is a signed, scaled and time-shifted copy of one template made
of a sharp R peak, a trailing S dip and a broad T wave.  Because the family
is exact at any time, data on any grid can be regenerated without
interpolation.
"""

import numpy as np

from .data import ECG_CHANNELS, Dataset, time_grid
from .errors import ValidationError

PARAM_NAMES = ("qrs_amp", "qrs_width", "t_amp", "t_width", "act_delay", "t_delay", "dispersion")
N_PARAMS = 7
N_CHANNELS = 9


def check_params(p):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (N_PARAMS,):
        raise ValidationError(f"expected {N_PARAMS} controls, got shape {p.shape}")
    if not np.all((p >= -1.0) & (p <= 1.0)):
        raise ValidationError(f"controls must lie in [-1, 1], got {p.tolist()}")
    return p


def template(tau, p):
    """Single-lead waveform ``s(tau)``; ``tau`` may be a scalar or an array."""
    p = check_params(p)
    tau = np.asarray(tau, dtype=np.float64)
    a_r = 1.0 + 0.5 * p[0]
    sig_r = 0.015 * (1.0 + 0.4 * p[1])
    a_s = 0.4 * a_r
    a_t = 0.15 * (1.0 + p[2])
    sig_t = 0.05 * (1.0 + 0.3 * p[3])
    tau0 = 0.25 + 0.08 * p[4]
    tau_t = tau0 + 0.4 + 0.05 * p[5]
    return (a_r * np.exp(-(tau - tau0) ** 2 / (2.0 * sig_r ** 2))
            - a_s * np.exp(-(tau - tau0 - 0.03) ** 2 / (2.0 * 0.012 ** 2))
            + a_t * np.exp(-(tau - tau_t) ** 2 / (2.0 * sig_t ** 2)))


def channel_gains():
    j = np.arange(1, N_CHANNELS + 1)
    return (-1.0) ** (j + 1) * (1.0 - 0.06 * (j - 1))


def channels(tau, p):
    """Nine channels ``c_j s(tau - delta (j - 1))``; returns ``(len(tau), 9)``.

    A scalar ``tau`` gives a vector of 9 values.
    """
    p = check_params(p)
    tau = np.asarray(tau, dtype=np.float64)
    delta = 0.01 * (1.0 + 0.5 * p[6])
    gains = channel_gains()
    cols = [gains[j] * template(tau - delta * j, p) for j in range(N_CHANNELS)]
    return np.stack(cols, axis=-1)


def generate_dataset(n_samples, dt_ms, T_ms=600.0, seed=0):
    """Latin-hypercube draw of ``n_samples`` control vectors, sampled every ``dt_ms``."""
    from .tune import lhs_sample

    if isinstance(n_samples, bool) or int(n_samples) != n_samples or n_samples < 1:
        raise ValidationError(f"n_samples must be a positive integer, got {n_samples}")
    if not dt_ms > 0:
        raise ValidationError(f"dt_ms must be positive, got {dt_ms}")
    ratio = T_ms / dt_ms
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValidationError(f"dt_ms={dt_ms} does not divide T_ms={T_ms}")
    params = 2.0 * lhs_sample(int(n_samples), N_PARAMS, seed) - 1.0
    tau = time_grid(T_ms, dt_ms) / T_ms
    signals = np.stack([channels(tau, p) for p in params])
    return Dataset(T_ms, dt_ms, PARAM_NAMES, -np.ones(N_PARAMS), np.ones(N_PARAMS),
                   ECG_CHANNELS, params, signals, generator="synth")
