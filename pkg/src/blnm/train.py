"""Full-batch dense BFGS training of a BLNM on a dataset."""

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg.blas import dsymv, dsyr, dsyr2

from .data import NormalizationInfo, resample
from .errors import NumericFault, ValidationError
from .grad import backprop, loss_only
from .net import ModelWeights, build, forward_batch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_iters: int = 10_000
    grad_tol: float = 1e-8
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 30
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValidationError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.max_ls < 1:
            raise ValidationError("max_ls must be >= 1")
        if not self.grad_tol >= 0:
            raise ValidationError("grad_tol must be non-negative")


@dataclass
class TrainReport:
    final_loss: float
    iterations_used: int
    loss_history: list
    wall_time: float
    termination_reason: str
    initial_loss: float = None
    n_evals: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _cubicmin(a, fa, da, b, fb, db):
    # minimizer of the cubic interpolating f and f' at a and b; None if it has none
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.copysign(np.sqrt(rad), b - a)
    denom = db - da + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (db + d2 - d1) / denom


def line_search_wolfe(fun, x, f0, g0, p, c1=1e-4, c2=0.9, alpha0=1.0, max_iter=30):
    """Step length satisfying the strong Wolfe conditions along ``p``.

    ``fun(x) -> (f, g)``.  Bracketing phase followed by cubic-interpolation
    zoom.  Returns ``(alpha, f, g, n_evals)`` or ``None`` when no
    acceptable step is found within ``max_iter`` evaluations.
    """
    dphi0 = float(g0 @ p)
    if not dphi0 < 0:
        return None
    n_evals = 0

    def phi(a):
        nonlocal n_evals
        n_evals += 1
        f, g = fun(x + a * p)
        if not np.isfinite(f):
            return np.inf, g, np.inf
        return f, g, float(g @ p)

    def zoom(lo, f_lo, d_lo, hi, f_hi, d_hi):
        while n_evals < max_iter:
            width = hi - lo
            a = None
            if np.isfinite(f_hi):
                a = _cubicmin(lo, f_lo, d_lo, hi, f_hi, d_hi)
            # keep the trial point away from the bracket ends
            if a is None or not np.isfinite(a) or not (
                    min(lo, hi) + 0.1 * abs(width) <= a <= max(lo, hi) - 0.1 * abs(width)):
                a = lo + 0.5 * width
            f, g, d = phi(a)
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * dphi0:
                    return a, f, g
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, d
                zoom.best = (a, f, g)
            if abs(hi - lo) * np.max(np.abs(p)) < 1e-16 * (1.0 + np.max(np.abs(x))):
                break
        return None

    zoom.best = None
    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    a = alpha0
    first = True
    while n_evals < max_iter:
        f, g, d = phi(a)
        if f > f0 + c1 * a * dphi0 or (not first and f >= f_prev):
            res = zoom(a_prev, f_prev, d_prev, a, f, d)
            break
        if abs(d) <= -c2 * dphi0:
            res = (a, f, g)
            break
        if d >= 0:
            res = zoom(a, f, d, a_prev, f_prev, d_prev)
            break
        zoom.best = (a, f, g)
        a_prev, f_prev, d_prev = a, f, d
        a = 2.0 * a
        first = False
    else:
        res = None
    if res is None:
        return None if zoom.best is None else (*zoom.best, n_evals, False)
    return (*res, n_evals, True)


def minimize_bfgs(fun, x0, cfg=None, callback=None):
    """Dense BFGS with strong-Wolfe line search.

    ``fun(x) -> (f, g)``.  The inverse Hessian starts at the identity; the
    update is skipped when ``s.y <= 1e-10 |s| |y|``.  Stops when
    ``max|g| < cfg.grad_tol`` or after ``cfg.max_iters`` iterations.
    Returns ``(x, TrainReport)``.
    """
    cfg = cfg or TrainConfig()
    start = time.perf_counter()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    f_start = float(f)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NumericFault("objective is not finite at the starting point")
    n = x.size

    def identity():
        # Fortran order so the in-place BLAS updates apply directly; only the
        # upper triangle of the symmetric H is referenced or updated
        return np.asfortranarray(np.eye(n))

    H = identity()
    h_is_identity = True
    history = []
    n_evals = 1
    reason = "max_iters"
    weak_in_row = 0
    it = 0
    while it < cfg.max_iters:
        if np.max(np.abs(g)) < cfg.grad_tol:
            reason = "converged"
            break
        p = -dsymv(1.0, H, g)
        if not g @ p < 0:
            # H lost positive definiteness numerically
            H, h_is_identity = identity(), True
            p = -g
        ls = line_search_wolfe(fun, x, f, g, p, cfg.c1, cfg.c2, 1.0, cfg.max_ls)
        if ls is None or not ls[1] < f:
            if not h_is_identity:
                # retry once along steepest descent before giving up
                H, h_is_identity = identity(), True
                continue
            reason = "line_search_failure"
            break
        alpha, f_new, g_new, evals, strong = ls
        n_evals += evals
        weak_in_row = 0 if strong else weak_in_row + 1
        s = alpha * p
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        it += 1
        history.append(float(f))
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            # H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            rho = 1.0 / sy
            Hy = dsymv(1.0, H, y)
            H = dsyr(rho * rho * float(y @ Hy) + rho, s, a=H, overwrite_a=True)
            H = dsyr2(-rho, Hy, s, a=H, overwrite_a=True)
            h_is_identity = False
        if callback is not None:
            callback(it, x, f)
        if weak_in_row >= 3:
            reason = "line_search_failure"
            break
    report = TrainReport(
        final_loss=float(f), iterations_used=it, loss_history=history,
        wall_time=time.perf_counter() - start, termination_reason=reason,
        initial_loss=f_start, n_evals=n_evals, config=asdict(cfg),
    )
    return x, report


# -- training on datasets --------------------------------------------------------------

def training_arrays(dataset, norm):
    """Stack every (sample, time point) pair, sample-major, in normalized form."""
    n, n_t = dataset.n_samples, dataset.times.size
    t = np.tile(norm.time(dataset.times), n)
    theta = np.repeat(norm.params(dataset.params), n_t, axis=0)
    targets = norm.channels(dataset.signals).reshape(n * n_t, -1)
    return t, theta, targets


def train(dataset, spec, cfg=None, norm=None, callback=None):
    """Fit a BLNM to ``dataset``; returns ``(weights, norm, report)``.

    Normalization is derived from ``dataset`` unless ``norm`` is given.
    """
    cfg = cfg or TrainConfig()
    if spec.n_physical != dataset.n_channels:
        raise ValidationError(
            f"n_physical={spec.n_physical} does not match {dataset.n_channels} dataset channels")
    if spec.n_par != dataset.n_par:
        raise ValidationError(
            f"n_par={spec.n_par} does not match {dataset.n_par} dataset parameters")
    if norm is None:
        norm = NormalizationInfo.from_dataset(dataset)
    t, theta, targets = training_arrays(dataset, norm)
    w0 = build(spec, cfg.seed)

    def objective(x):
        loss, grad = backprop(ModelWeights(spec, x), t, theta, targets)
        return loss, grad.flat

    x, report = minimize_bfgs(objective, w0.flat.copy(), cfg, callback)
    log.info("trained %s: loss %.3e after %d iterations (%s)", spec, report.final_loss,
             report.iterations_used, report.termination_reason)
    return ModelWeights(spec, x), norm, report


def predict(weights, norm, theta_raw, times_ms):
    """Denormalized physical outputs of one sample on a time grid in ms."""
    z = forward_batch(weights, norm.time(times_ms), norm.params(theta_raw))
    return norm.channels_inv(z[:, :weights.spec.n_physical])


def evaluate(weights, norm, dataset, dt_eval=None):
    """MSE over normalized physical channels, with ground truth on the ``dt_eval`` grid."""
    if dt_eval is not None:
        if not dt_eval > 0:
            raise ValidationError(f"dt_eval must be positive, got {dt_eval}")
        if dt_eval > dataset.T:
            raise ValidationError(f"dt_eval={dt_eval} ms exceeds final time {dataset.T} ms")
        if dt_eval != dataset.dt:
            dataset = resample(dataset, dt_eval)
    if dataset.n_channels != weights.spec.n_physical:
        raise ValidationError("dataset channel count does not match the model")
    t, theta, targets = training_arrays(dataset, norm)
    return loss_only(weights, t, theta, targets)


def save_report(path, report, extra=None):
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
