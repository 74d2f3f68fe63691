"""Parameter estimation by adaptive differential evolution (JADE).

Given a trained BLNM and an observed trajectory, search the normalized
parameter hypercube [-1, 1]^n_par for the vector whose predicted physical
channels best match the observation in mean square.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NumericFault, ValidationError
from .net import forward_batch


@dataclass
class DEConfig:
    pop_size: int = None  # defaults to 10 * n_par
    p_best: float = 0.1
    c: float = 0.1
    archive: bool = True
    max_generations: int = 1000
    max_evals: int = None
    target_loss: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pop_size is not None and self.pop_size < 4:
            raise ValidationError(f"population must be >= 4, got {self.pop_size}")
        if not 0 < self.p_best <= 1:
            raise ValidationError(f"p_best must lie in (0, 1], got {self.p_best}")
        if not 0 <= self.c <= 1:
            raise ValidationError(f"c must lie in [0, 1], got {self.c}")
        if self.max_generations < 1:
            raise ValidationError("max_generations must be >= 1")


@dataclass
class EstimationResult:
    theta_hat: np.ndarray
    best_loss: float
    generations: int
    n_evals: int
    loss_history: list
    wall_time: float
    abs_error: np.ndarray = None
    mu_cr_history: list = field(default_factory=list)
    mu_f_history: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["theta_hat"] = self.theta_hat.tolist()
        if self.abs_error is not None:
            d["abs_error"] = self.abs_error.tolist()
        return d


@dataclass
class Observation:
    """Raw observed physical channels ``values`` (``n_t x n_physical``) at ``times`` in ms."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).reshape(-1)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != self.times.size:
            raise ValidationError(
                f"values must have {self.times.size} rows, got shape {self.values.shape}")

    @classmethod
    def from_dataset(cls, dataset, index):
        return cls(dataset.times, dataset.signals[index])


class TrajectoryObjective:
    """Mean squared error between model and observation, both normalized.

    Callable on a single ``theta_norm``; :meth:`batch` evaluates a whole
    population at once with bitwise the same per-candidate results.
    """

    def __init__(self, weights, norm, observation):
        spec = weights.spec
        times = observation.times
        if times.size == 0:
            raise ValidationError("empty observation grid")
        if np.any(times < 0) or np.any(times > norm.T):
            raise ValidationError(f"observation times must lie in [0, {norm.T}] ms")
        if observation.values.shape[1] != spec.n_physical:
            raise ValidationError(
                f"observation has {observation.values.shape[1]} channels, "
                f"model has {spec.n_physical} physical outputs")
        self.weights = weights
        self.t = norm.time(times)
        self.target = norm.channels(observation.values)
        self.n_par = spec.n_par

    def batch(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
        m, n_t = thetas.shape[0], self.t.size
        z = forward_batch(self.weights, np.tile(self.t, m), np.repeat(thetas, n_t, axis=0))
        r = z[:, :self.target.shape[1]].reshape(m, n_t, -1) - self.target
        return np.mean((r * r).reshape(m, -1), axis=1)

    def __call__(self, theta):
        return float(self.batch(theta)[0])


def objective(weights, norm, observation):
    """``theta_norm -> MSE`` against ``observation`` over the physical channels."""
    return TrajectoryObjective(weights, norm, observation)


def lehmer_mean(values):
    values = np.asarray(values, dtype=np.float64)
    return float(np.sum(values ** 2) / np.sum(values))


def reflect(x, lo=-1.0, hi=1.0):
    """Fold values back into ``[lo, hi]`` by mirror reflection at the bounds."""
    x = np.asarray(x, dtype=np.float64)
    width = hi - lo
    y = np.mod(x - lo, 2.0 * width)
    folded = lo + np.where(y > width, 2.0 * width - y, y)
    # in-bounds values pass through untouched; the fold can round them
    return np.where((x >= lo) & (x <= hi), x, np.clip(folded, lo, hi))


def _evaluate(fun, pop):
    if hasattr(fun, "batch"):
        vals = np.asarray(fun.batch(pop), dtype=np.float64)
    else:
        vals = np.array([fun(x) for x in pop], dtype=np.float64)
    return np.where(np.isfinite(vals), vals, np.inf)


def _draw_cauchy_f(rng, mu_f, n):
    f = np.empty(n)
    for i in range(n):
        v = mu_f + 0.1 * rng.standard_cauchy()
        while v <= 0:
            v = mu_f + 0.1 * rng.standard_cauchy()
        f[i] = min(v, 1.0)
    return f


def jade(fun, n_par, cfg=None, truth=None):
    """Minimize ``fun`` over ``[-1, 1]^n_par`` with JADE.

    current-to-pbest/1 mutation with an optional archive of replaced
    parents, binomial crossover, greedy selection, and self-adapted crossover
    rate (arithmetic mean of successes) and scale factor (Lehmer mean).
    """
    cfg = cfg or DEConfig()
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    np_ = cfg.pop_size or 10 * n_par
    if np_ < 4:
        raise ValidationError(f"population must be >= 4, got {np_}")
    n_best = max(1, int(round(cfg.p_best * np_)))

    pop = rng.uniform(-1.0, 1.0, size=(np_, n_par))
    fit = _evaluate(fun, pop)
    n_evals = np_
    if not np.any(np.isfinite(fit)):
        raise NumericFault("objective is non-finite on the whole initial population")
    archive = np.empty((0, n_par))
    mu_cr, mu_f = 0.5, 0.5
    history = [float(fit.min())]
    mu_cr_hist, mu_f_hist = [mu_cr], [mu_f]
    gen = 0
    while gen < cfg.max_generations and history[-1] > cfg.target_loss:
        if cfg.max_evals is not None and n_evals + np_ > cfg.max_evals:
            break
        # all random draws of the generation happen before any evaluation
        cr = np.clip(rng.normal(mu_cr, 0.1, np_), 0.0, 1.0)
        f = _draw_cauchy_f(rng, mu_f, np_)
        order = np.argsort(fit, kind="stable")
        pbest = order[rng.integers(0, n_best, np_)]
        union = np.vstack([pop, archive]) if cfg.archive and archive.size else pop
        r1 = np.empty(np_, dtype=int)
        r2 = np.empty(np_, dtype=int)
        for i in range(np_):
            r1[i] = rng.integers(0, np_ - 1)
            if r1[i] >= i:
                r1[i] += 1
            while True:
                r2[i] = rng.integers(0, union.shape[0])
                if r2[i] != i and r2[i] != r1[i]:
                    break
        j_rand = rng.integers(0, n_par, np_)
        cross = rng.random((np_, n_par)) < cr[:, None]
        cross[np.arange(np_), j_rand] = True

        fc = f[:, None]
        mutant = pop + fc * (pop[pbest] - pop) + fc * (pop[r1] - union[r2])
        trial = np.where(cross, reflect(mutant), pop)
        trial_fit = _evaluate(fun, trial)
        n_evals += np_
        if not np.any(np.isfinite(trial_fit)) and not np.any(np.isfinite(fit)):
            raise NumericFault("objective is non-finite on every candidate")

        better = trial_fit < fit
        if cfg.archive and np.any(better):
            archive = np.vstack([archive, pop[better]])
            if archive.shape[0] > np_:
                keep = rng.choice(archive.shape[0], np_, replace=False)
                archive = archive[np.sort(keep)]
        pop = np.where(better[:, None], trial, pop)
        fit = np.where(better, trial_fit, fit)
        if np.any(better):
            mu_cr = (1 - cfg.c) * mu_cr + cfg.c * float(np.mean(cr[better]))
            mu_f = (1 - cfg.c) * mu_f + cfg.c * lehmer_mean(f[better])
        gen += 1
        history.append(float(fit.min()))
        mu_cr_hist.append(mu_cr)
        mu_f_hist.append(mu_f)

    best = int(np.argmin(fit))
    theta = pop[best].copy()
    err = None if truth is None else np.abs(theta - np.asarray(truth, dtype=np.float64))
    return EstimationResult(theta, float(fit[best]), gen, n_evals, history,
                            time.perf_counter() - start, err, mu_cr_hist, mu_f_hist)


def estimate(weights, norm, observation, cfg=None, truth=None):
    """Recover normalized parameters reproducing ``observation``.

    ``truth`` (normalized) adds per-parameter absolute errors to the result.
    """
    fun = objective(weights, norm, observation)
    return jade(fun, weights.spec.n_par, cfg, truth)
