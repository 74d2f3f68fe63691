"""Reverse-mode gradient of the physical-channel MSE with respect to all weights."""

import numpy as np

from .errors import NumericFault, StructuralError, ValidationError
from .net import ModelWeights, forward_layers


class GradientBuffer(ModelWeights):
    """Same block layout as :class:`ModelWeights`; entries are d(loss)/d(weight).

    ``flat`` follows the weight flattening order: layer-major, time branch
    before parameter branch, weights before biases.
    """


def as_batch(samples):
    """Turn a list of ``(t_norm, theta_norm, target_physical)`` into stacked arrays."""
    if len(samples) == 0:
        raise ValidationError("empty batch")
    t = np.array([s[0] for s in samples], dtype=np.float64)
    theta = np.array([np.atleast_1d(s[1]) for s in samples], dtype=np.float64)
    targets = np.array([np.atleast_1d(s[2]) for s in samples], dtype=np.float64)
    return t, theta, targets


def _check_finite(weights, t, theta, targets):
    for i, blocks in enumerate(weights.layers):
        for name, block in blocks.items():
            if not np.all(np.isfinite(block)):
                raise NumericFault(f"non-finite value in layer {i} block {name}", (i, name))
    for name, arr in (("t", t), ("theta", theta), ("targets", targets)):
        if not np.all(np.isfinite(arr)):
            raise NumericFault(f"non-finite value in input {name}", name)


def _physical_targets(spec, n, targets):
    # full-width targets are accepted; their latent columns are never compared
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[0] != n or \
            targets.shape[1] not in (spec.n_physical, spec.n_states):
        raise StructuralError(
            f"targets must have shape ({n}, {spec.n_physical}) or ({n}, {spec.n_states}), "
            f"got {targets.shape}")
    return targets[:, :spec.n_physical]


def loss_only(weights, t, theta, targets):
    """Mean squared error over (point, physical channel); latent outputs ignored."""
    z = forward_layers(weights, t, theta)[2]
    r = z[:, :weights.spec.n_physical] - _physical_targets(weights.spec, z.shape[0], targets)
    return float(np.mean(r * r))


def backprop(weights, t, theta, targets):
    """Loss and exact gradient for a batch of points.

    ``t`` has shape ``(N,)`` (or ``(N, n_dyn)``), ``theta`` ``(N, n_par)``
    and ``targets`` ``(N, n_physical)`` or ``(N, n_states)``.  The loss is the mean over all
    ``N * n_physical`` squared residuals of the physical outputs.
    """
    spec = weights.spec
    t = np.asarray(t, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if t.shape[0] == 0:
        raise ValidationError("empty batch")
    targets = _physical_targets(spec, t.shape[0], targets)
    _check_finite(weights, t, theta, targets)

    (x_t, x_p), hidden, z = forward_layers(weights, t, theta)
    x_t = x_t.reshape(x_t.shape[0], -1)
    x_p = np.broadcast_to(x_p, (x_t.shape[0], spec.n_par)) if x_p.ndim == 1 else x_p
    n = z.shape[0]
    n_phys = spec.n_physical
    resid = z[:, :n_phys] - targets
    loss = float(np.mean(resid * resid))

    grad = GradientBuffer(spec)
    dz = np.zeros_like(z)
    dz[:, :n_phys] = (2.0 / (n * n_phys)) * resid

    L = spec.disentanglement
    n_t = spec.branch_split[0]

    def layer_input(i):
        # input fed to hidden layer i (0-based) or to the output layer when i == n_layers
        if i == 0:
            return np.concatenate([x_t, x_p], axis=1)
        prev = hidden[i - 1]
        return np.concatenate(prev, axis=1) if isinstance(prev, tuple) else prev

    out = weights.layers[-1]
    h_in = layer_input(spec.n_layers)
    grad.layers[-1]["W"][...] = dz.T @ h_in
    grad.layers[-1]["b"][...] = dz.sum(axis=0)
    dh = dz @ out["W"]

    dh_t = dh_p = None
    if L == spec.n_layers:
        dh_t, dh_p = dh[:, :n_t], dh[:, n_t:]

    for i in range(spec.n_layers - 1, -1, -1):
        blocks = weights.layers[i]
        g = grad.layers[i]
        if i >= L:
            da = dh * (1.0 - hidden[i] * hidden[i])
            h_in = layer_input(i)
            g["W"][...] = da.T @ h_in
            g["b"][...] = da.sum(axis=0)
            dh = da @ blocks["W"]
            if i == L and L > 0:
                dh_t, dh_p = dh[:, :n_t], dh[:, n_t:]
        else:
            h_t, h_p = hidden[i]
            in_t = x_t if i == 0 else hidden[i - 1][0]
            in_p = x_p if i == 0 else hidden[i - 1][1]
            da_t = dh_t * (1.0 - h_t * h_t)
            da_p = dh_p * (1.0 - h_p * h_p)
            g["W_t"][...] = da_t.T @ in_t
            g["b_t"][...] = da_t.sum(axis=0)
            g["W_p"][...] = da_p.T @ in_p
            g["b_p"][...] = da_p.sum(axis=0)
            if i > 0:
                dh_t = da_t @ blocks["W_t"]
                dh_p = da_p @ blocks["W_p"]
    return loss, grad


def grad_check(weights, t, theta, targets, step=1e-6):
    """Max over weights of ``|analytic - central difference| / max(1, |analytic|)``."""
    if not step > 0:
        raise ValidationError(f"step must be positive, got {step}")
    _, grad = backprop(weights, t, theta, targets)
    w = weights.copy()
    worst = 0.0
    for k in range(w.flat.size):
        orig = w.flat[k]
        w.flat[k] = orig + step
        f_plus = loss_only(w, t, theta, targets)
        w.flat[k] = orig - step
        f_minus = loss_only(w, t, theta, targets)
        w.flat[k] = orig
        fd = (f_plus - f_minus) / (2.0 * step)
        a = grad.flat[k]
        worst = max(worst, abs(a - fd) / max(1.0, abs(a)))
    return worst
