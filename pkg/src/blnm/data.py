"""Datasets of parameterized multi-channel time series, normalization and I/O.

On disk a dataset is a directory::

    meta.json               T_ms, dt_ms, param_names, param_min, param_max,
                            channels, n_samples (and optionally generator)
    params.csv              header ``sample,<name>...``
    signals/sample_0000.csv header ``t_ms,<channel>...``

Numbers are written with shortest round-trip ``repr`` so save/load is exact.
"""

import csv
import json
import os
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ValidationError

ECG_CHANNELS = ("V1", "V2", "V3", "V4", "V5", "V6", "LA", "RA", "F")


def time_grid(T, dt):
    """Uniform grid ``0, dt, 2 dt, ... <= T`` in ms.

    Rounded to 1e-9 ms so grids with commensurate steps share time points
    bitwise (``150 * 0.1`` is exactly ``15.0`` here).
    """
    if not dt > 0:
        raise ValidationError(f"time step must be positive, got {dt}")
    if dt > T:
        raise ValidationError(f"time step {dt} ms exceeds final time {T} ms")
    n = int(np.floor(T / dt + 1e-9)) + 1
    return np.round(np.arange(n) * dt, 9)


def normalize_time(t, T):
    return np.asarray(t, dtype=np.float64) / T


def denormalize_time(t_norm, T):
    return np.asarray(t_norm, dtype=np.float64) * T


def _check_range(lo, hi, names=None, kind="parameter"):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    bad = np.flatnonzero(~(hi > lo))
    if bad.size:
        k = int(bad[0])
        lo, hi = np.atleast_1d(lo), np.atleast_1d(hi)
        label = names[k] if names is not None else str(k)
        raise ValidationError(f"degenerate {kind} range for {label!r}: min={lo[k]}, max={hi[k]}")
    return lo, hi


def normalize_params(theta, lo, hi):
    """Affine map of raw values onto [-1, 1]: ``2 (x - lo) / (hi - lo) - 1``."""
    lo, hi = _check_range(lo, hi)
    return 2.0 * (np.asarray(theta, dtype=np.float64) - lo) / (hi - lo) - 1.0


def denormalize_params(theta_norm, lo, hi):
    lo, hi = _check_range(lo, hi)
    return lo + (np.asarray(theta_norm, dtype=np.float64) + 1.0) * 0.5 * (hi - lo)


def normalize_channels(values, lo, hi):
    lo, hi = _check_range(lo, hi, kind="channel")
    return 2.0 * (np.asarray(values, dtype=np.float64) - lo) / (hi - lo) - 1.0


def denormalize_channels(values_norm, lo, hi):
    lo, hi = _check_range(lo, hi, kind="channel")
    return lo + (np.asarray(values_norm, dtype=np.float64) + 1.0) * 0.5 * (hi - lo)


@dataclass
class NormalizationInfo:
    T: float
    param_min: np.ndarray
    param_max: np.ndarray
    channel_min: np.ndarray
    channel_max: np.ndarray

    def __post_init__(self):
        self.param_min, self.param_max = _check_range(self.param_min, self.param_max)
        self.channel_min, self.channel_max = _check_range(
            self.channel_min, self.channel_max, kind="channel")
        if not self.T > 0:
            raise ValidationError(f"final time must be positive, got {self.T}")

    @classmethod
    def from_dataset(cls, ds):
        """Parameter ranges from the dataset bounds, channel ranges from its signals."""
        _check_range(ds.param_min, ds.param_max, ds.param_names)
        cmin = ds.signals.min(axis=(0, 1))
        cmax = ds.signals.max(axis=(0, 1))
        _check_range(cmin, cmax, ds.channel_names, kind="channel")
        return cls(ds.T, ds.param_min.copy(), ds.param_max.copy(), cmin, cmax)

    def time(self, t):
        return normalize_time(t, self.T)

    def params(self, theta):
        return normalize_params(theta, self.param_min, self.param_max)

    def params_inv(self, theta_norm):
        return denormalize_params(theta_norm, self.param_min, self.param_max)

    def channels(self, values):
        return normalize_channels(values, self.channel_min, self.channel_max)

    def channels_inv(self, values_norm):
        return denormalize_channels(values_norm, self.channel_min, self.channel_max)

    def to_dict(self):
        return {
            "T": float(self.T),
            "param_min": self.param_min.tolist(),
            "param_max": self.param_max.tolist(),
            "channel_min": self.channel_min.tolist(),
            "channel_max": self.channel_max.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["T"], d["param_min"], d["param_max"], d["channel_min"], d["channel_max"])

    def __eq__(self, other):
        return isinstance(other, NormalizationInfo) and self.to_dict() == other.to_dict()


@dataclass
class Dataset:
    """``N`` samples of raw parameters with signals on one shared time grid.

    ``params`` is ``(N, n_par)``; ``signals`` is ``(N, n_times, n_channels)``.
    ``generator`` names a closed-form source (``"synth"``) that can
    re-evaluate the signals exactly on any grid.
    """

    T: float
    dt: float
    param_names: list
    param_min: np.ndarray
    param_max: np.ndarray
    channel_names: list
    params: np.ndarray
    signals: np.ndarray
    generator: str = None

    def __post_init__(self):
        self.T = float(self.T)
        self.dt = float(self.dt)
        self.param_names = list(self.param_names)
        self.channel_names = list(self.channel_names)
        self.param_min = np.asarray(self.param_min, dtype=np.float64)
        self.param_max = np.asarray(self.param_max, dtype=np.float64)
        self.params = np.asarray(self.params, dtype=np.float64)
        self.signals = np.asarray(self.signals, dtype=np.float64)
        self.validate()

    def validate(self):
        n_par = len(self.param_names)
        if self.param_min.shape != (n_par,) or self.param_max.shape != (n_par,):
            raise ValidationError("parameter bounds do not match param_names")
        if self.params.ndim != 2 or self.params.shape[1] != n_par:
            raise ValidationError(f"params must have {n_par} columns, got shape {self.params.shape}")
        n = self.params.shape[0]
        if n < 1:
            raise ValidationError("dataset has no samples")
        n_t = time_grid(self.T, self.dt).size
        expected = (n, n_t, len(self.channel_names))
        if self.signals.shape != expected:
            raise ValidationError(f"signals must have shape {expected}, got {self.signals.shape}")
        if len(self.channel_names) < 1:
            raise ValidationError("dataset needs at least one channel")

    @property
    def n_samples(self):
        return self.params.shape[0]

    @property
    def n_par(self):
        return self.params.shape[1]

    @property
    def n_channels(self):
        return len(self.channel_names)

    @property
    def times(self):
        return time_grid(self.T, self.dt)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Dataset(self.T, self.dt, self.param_names, self.param_min, self.param_max,
                       self.channel_names, self.params[indices], self.signals[indices],
                       self.generator)

    def with_signals(self, dt, signals):
        return Dataset(self.T, dt, self.param_names, self.param_min, self.param_max,
                       self.channel_names, self.params, signals, self.generator)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.T == other.T and self.dt == other.dt
            and self.param_names == other.param_names
            and self.channel_names == other.channel_names
            and self.generator == other.generator
            and np.array_equal(self.param_min, other.param_min)
            and np.array_equal(self.param_max, other.param_max)
            and np.array_equal(self.params, other.params)
            and np.array_equal(self.signals, other.signals)
        )


def resample(ds, dt_new):
    """Same samples on the grid of step ``dt_new``.

    Integer multiples of the native step select existing rows.  Otherwise
    closed-form (``generator="synth"``) data are re-evaluated exactly and
    anything else is linearly interpolated in time.
    """
    if not dt_new > 0:
        raise ValidationError(f"time step must be positive, got {dt_new}")
    if dt_new > ds.T:
        raise ValidationError(f"time step {dt_new} ms exceeds final time {ds.T} ms")
    ratio = dt_new / ds.dt
    k = int(round(ratio))
    if k >= 1 and abs(ratio - k) < 1e-9:
        if k == 1:
            return ds.with_signals(ds.dt, ds.signals.copy())
        return ds.with_signals(dt_new, ds.signals[:, ::k, :].copy())
    new_t = time_grid(ds.T, dt_new)
    if ds.generator == "synth":
        from .synth import channels
        sig = np.stack([channels(new_t / ds.T, p) for p in ds.params])
        return ds.with_signals(dt_new, sig)
    if ds.generator is not None:
        raise ValidationError(f"unknown generator {ds.generator!r}")
    old_t = ds.times
    sig = np.empty((ds.n_samples, new_t.size, ds.n_channels))
    for i in range(ds.n_samples):
        for c in range(ds.n_channels):
            sig[i, :, c] = np.interp(new_t, old_t, ds.signals[i, :, c])
    return ds.with_signals(dt_new, sig)


Leads = namedtuple("Leads", ["I", "II", "III", "aVL", "aVR", "aVF"])


def derived_leads(LA, RA, F):
    """Bipolar limb leads and augmented limb leads from the three electrode potentials."""
    LA, RA, F = (np.asarray(a, dtype=np.float64) for a in (LA, RA, F))
    if not LA.shape == RA.shape == F.shape:
        raise ValidationError(f"lead arrays differ in shape: {LA.shape}, {RA.shape}, {F.shape}")
    I = LA - RA
    II = F - RA
    III = F - LA
    return Leads(I, II, III, (I - III) / 2, -(I + II) / 2, (II + III) / 2)


def twelve_leads(signals, channel_names=ECG_CHANNELS):
    """Stack V1..V6 with the six limb-derived leads; ``signals`` is ``(..., 9)``."""
    signals = np.asarray(signals, dtype=np.float64)
    idx = {name: i for i, name in enumerate(channel_names)}
    limb = derived_leads(signals[..., idx["LA"]], signals[..., idx["RA"]], signals[..., idx["F"]])
    precordial = [signals[..., idx[f"V{k}"]] for k in range(1, 7)]
    names = [f"V{k}" for k in range(1, 7)] + list(Leads._fields)
    return names, np.stack(precordial + list(limb), axis=-1)


# -- directory format --------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def save_dataset(ds, path):
    os.makedirs(os.path.join(path, "signals"), exist_ok=True)
    meta = {
        "T_ms": ds.T,
        "dt_ms": ds.dt,
        "param_names": ds.param_names,
        "param_min": ds.param_min.tolist(),
        "param_max": ds.param_max.tolist(),
        "channels": ds.channel_names,
        "n_samples": ds.n_samples,
    }
    if ds.generator is not None:
        meta["generator"] = ds.generator
    with open(os.path.join(path, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    with open(os.path.join(path, "params.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample"] + ds.param_names)
        for i, row in enumerate(ds.params):
            w.writerow([i] + [_fmt(v) for v in row])
    times = ds.times
    for i in range(ds.n_samples):
        with open(os.path.join(path, "signals", f"sample_{i:04d}.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_ms"] + ds.channel_names)
            for t, row in zip(times, ds.signals[i]):
                w.writerow([_fmt(t)] + [_fmt(v) for v in row])


def _read_csv(path, header):
    rows = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc.strerror}", path) from None
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise ParseError(f"header mismatch: expected {header}, got {first}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"row has {len(row)} columns, expected {len(header)}", path, lineno)
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    return np.array(rows, dtype=np.float64).reshape(-1, len(header))


_META_KEYS = {"T_ms", "dt_ms", "param_names", "param_min", "param_max", "channels", "n_samples"}


def load_dataset(path):
    meta_path = os.path.join(path, "meta.json")
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot open: {exc.strerror}", meta_path) from None
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), meta_path, exc.lineno) from None
    missing = _META_KEYS - set(meta)
    if missing:
        raise ParseError(f"missing keys {sorted(missing)}", meta_path)
    unknown = set(meta) - _META_KEYS - {"generator"}
    if unknown:
        raise ParseError(f"unknown keys {sorted(unknown)}", meta_path)

    names = list(meta["param_names"])
    channels = list(meta["channels"])
    params_path = os.path.join(path, "params.csv")
    table = _read_csv(params_path, ["sample"] + names)
    n = int(meta["n_samples"])
    if table.shape[0] != n:
        raise ValidationError(f"n_samples mismatch: meta.json says {n}, params.csv has {table.shape[0]}")
    if not np.array_equal(table[:, 0], np.arange(n)):
        raise ParseError("sample column must be 0..n_samples-1 in order", params_path)

    sig_dir = os.path.join(path, "signals")
    files = sorted(f for f in os.listdir(sig_dir) if f.endswith(".csv")) if os.path.isdir(sig_dir) else []
    if len(files) != n:
        raise ValidationError(f"n_samples mismatch: meta.json says {n}, found {len(files)} signal files")
    grid = time_grid(meta["T_ms"], meta["dt_ms"])
    signals = np.empty((n, grid.size, len(channels)))
    for i in range(n):
        fpath = os.path.join(sig_dir, f"sample_{i:04d}.csv")
        arr = _read_csv(fpath, ["t_ms"] + channels)
        if arr.shape[0] != grid.size:
            raise ValidationError(f"{fpath}: expected {grid.size} time rows, got {arr.shape[0]}")
        if not np.allclose(arr[:, 0], grid, rtol=0, atol=1e-9):
            raise ParseError("t_ms column does not match T_ms/dt_ms grid", fpath)
        signals[i] = arr[:, 1:]
    return Dataset(meta["T_ms"], meta["dt_ms"], names, meta["param_min"], meta["param_max"],
                   channels, table[:, 1:], signals, meta.get("generator"))
