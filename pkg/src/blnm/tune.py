"""Hyperparameter search: latin hypercube designs and K-fold cross-validation."""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import BLNMError, ValidationError
from .net import ArchitectureSpec, count_params
from .train import TrainConfig, evaluate, train

log = logging.getLogger(__name__)


class TuneError(BLNMError):
    """No configuration of a search could be trained."""


def lhs_sample(n, d, seed=0):
    """``n`` latin-hypercube points in ``[0, 1)^d``.

    Each column holds exactly one point in every stratum ``[k/n, (k+1)/n)``;
    strata are assigned by an independent permutation per column and the
    position inside a stratum is uniform.
    """
    if n < 1 or d < 1:
        raise ValidationError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    u = rng.random((n, d))
    strata = np.column_stack([rng.permutation(n) for _ in range(d)])
    pts = (strata + u) / n
    # (k + u) / n can round up to (k + 1) / n for u close to 1
    return np.minimum(pts, np.nextafter((strata + 1) / n, 0.0))


def kfold_split(n_samples, K, seed=0):
    """Seeded shuffle of ``range(n_samples)`` cut into ``K`` folds of near-equal size."""
    if K < 2 or K > n_samples:
        raise ValidationError(f"need 2 <= K <= n_samples={n_samples}, got K={K}")
    perm = np.random.default_rng(seed).permutation(n_samples)
    return [np.sort(fold) for fold in np.array_split(perm, K)]


@dataclass(frozen=True)
class SearchSpace:
    """Inclusive integer ranges; the disentanglement level is drawn from ``1..n_layers``."""

    layers: tuple = (1, 8)
    neurons: tuple = (10, 30)
    states: tuple = (9, 12)

    def __post_init__(self):
        for name in ("layers", "neurons", "states"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValidationError(f"invalid {name} range {(lo, hi)}")

    def to_dict(self):
        return {"layers": list(self.layers), "neurons": list(self.neurons),
                "states": list(self.states), "disentanglement": [1, "n_layers"]}


def _to_int(u, lo, hi):
    width = hi - lo + 1
    return lo + min(int(np.floor(u * width)), width - 1)


def map_point(u, space):
    """Integer hyperparameters ``(layers, neurons, states, level)`` for a point of [0, 1)^4."""
    n_layers = _to_int(u[0], *space.layers)
    n_neurons = _to_int(u[1], *space.neurons)
    n_states = _to_int(u[2], *space.states)
    level = _to_int(u[3], 1, n_layers)
    return n_layers, n_neurons, n_states, level


@dataclass
class TuneResult:
    space: dict
    configs: list
    best_index: int
    seed: int
    fold_seed: int
    K: int
    iters_per_fold: int

    @property
    def best(self):
        return self.configs[self.best_index]

    @property
    def best_spec(self):
        return ArchitectureSpec.from_dict(self.best["architecture"])

    def to_dict(self):
        return asdict(self)


def _run_fold(dataset, spec, train_idx, val_idx, cfg, trainer):
    train_ds = dataset.subset(train_idx)
    weights, norm, report = trainer(train_ds, spec, cfg)
    return evaluate(weights, norm, dataset.subset(val_idx)), report.iterations_used


def _select(configs):
    ok = [i for i, c in enumerate(configs) if not c["failed"]]
    if not ok:
        raise TuneError("every configuration failed; no result to select")
    return min(ok, key=lambda i: (configs[i]["mean_loss"], configs[i]["n_params"], i))


def tune(dataset, space=None, n_configs=50, K=5, iters_per_fold=10_000, seed=0,
         jobs=1, trainer=train):
    """Latin-hypercube search over ``space`` scored by K-fold cross-validation.

    Every configuration is trained ``K`` times (one per held-out fold) for
    ``iters_per_fold`` BFGS iterations; its score is the mean validation MSE.
    Failed folds mark the configuration failed and the search continues.
    """
    space = space or SearchSpace()
    if dataset.n_samples < K:
        raise ValidationError(f"{dataset.n_samples} samples cannot fill K={K} folds")
    if space.states[0] < dataset.n_channels:
        raise ValidationError(
            f"states range {space.states} must start at >= {dataset.n_channels} physical channels")
    points = lhs_sample(n_configs, 4, seed)
    folds = kfold_split(dataset.n_samples, K, seed)
    cfg = TrainConfig(max_iters=iters_per_fold, seed=seed)

    configs, jobs_list = [], []
    for ci, u in enumerate(points):
        n_layers, n_neurons, n_states, level = map_point(u, space)
        spec = ArchitectureSpec(n_par=dataset.n_par, n_layers=n_layers, n_neurons=n_neurons,
                                n_states=n_states, n_physical=dataset.n_channels,
                                disentanglement=level)
        configs.append({"index": ci, "architecture": spec.to_dict(), "n_params": count_params(spec),
                        "fold_losses": [None] * K, "fold_iterations": [None] * K,
                        "errors": [None] * K, "mean_loss": None, "failed": False})
        for k in range(K):
            train_idx = np.concatenate([folds[j] for j in range(K) if j != k])
            jobs_list.append((ci, k, spec, train_idx, folds[k]))

    def record(ci, k, outcome):
        c = configs[ci]
        if isinstance(outcome, BaseException):
            c["errors"][k] = f"{type(outcome).__name__}: {outcome}"
            c["failed"] = True
        else:
            c["fold_losses"][k], c["fold_iterations"][k] = float(outcome[0]), int(outcome[1])

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {(ci, k): pool.submit(_run_fold, dataset, spec, tr, va, cfg, trainer)
                       for ci, k, spec, tr, va in jobs_list}
            for (ci, k), fut in sorted(futures.items()):
                try:
                    record(ci, k, fut.result())
                except Exception as exc:
                    record(ci, k, exc)
    else:
        for ci, k, spec, tr, va in jobs_list:
            try:
                record(ci, k, _run_fold(dataset, spec, tr, va, cfg, trainer))
            except Exception as exc:
                log.warning("config %d fold %d failed: %s", ci, k, exc)
                record(ci, k, exc)

    for c in configs:
        if not c["failed"]:
            losses = c["fold_losses"]
            c["mean_loss"] = float(np.mean(losses))
            if not np.isfinite(c["mean_loss"]):
                c["failed"] = True
    best = _select(configs)
    return TuneResult(space.to_dict(), configs, best, seed, seed, K, iters_per_fold)


def save_tune_report(path, result):
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=1)
        fh.write("\n")


def ablate_states(train_ds, base_spec, states_list, cfg=None, test_ds=None):
    """Retrain ``base_spec`` once per entry of ``states_list`` (same seed and budget).

    Returns rows ``{"n_states", "n_latent", "n_params", "train_mse", "test_mse"}``;
    ``test_mse`` is ``None`` without ``test_ds``.
    """
    cfg = cfg or TrainConfig()
    for s in states_list:
        if s < base_spec.n_physical:
            raise ValidationError(
                f"n_states={s} is below the {base_spec.n_physical} physical outputs")
    rows = []
    for s in states_list:
        spec = replace(base_spec, n_states=s)
        weights, norm, report = train(train_ds, spec, cfg)
        test = None if test_ds is None else evaluate(weights, norm, test_ds)
        rows.append({"n_states": s, "n_latent": spec.n_latent, "n_params": count_params(spec),
                     "train_mse": report.final_loss, "test_mse": test})
    return rows


def format_table(rows, columns):
    """Plain-text table for stdout."""
    def cell(v):
        return f"{v:.6f}" if isinstance(v, float) else str(v)
    body = [[cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)
