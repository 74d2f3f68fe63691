"""Branched Latent Neural Map: architecture, weights and forward evaluation.

A BLNM maps normalized time ``t`` (``n_dyn`` inputs) and a normalized
parameter vector ``theta`` (``n_par`` inputs) to ``n_states`` outputs, the
first ``n_physical`` of which are compared against data while the rest are
free latent outputs.  The first ``disentanglement`` hidden layers are split
into two unconnected branches, one fed by time and one by the parameters;
the next layer is dense over the concatenated branch outputs.
``disentanglement == 0`` gives an ordinary fully-connected network.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParseError, StructuralError, ValidationError

FORMAT_VERSION = "1"
ACTIVATIONS = ("tanh",)


@dataclass(frozen=True)
class ArchitectureSpec:
    n_par: int
    n_layers: int
    n_neurons: int
    n_states: int
    n_physical: int
    disentanglement: int
    n_dyn: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        for name in ("n_par", "n_layers", "n_neurons", "n_states", "n_physical", "n_dyn"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if not 0 <= self.disentanglement <= self.n_layers:
            raise ValidationError(
                f"disentanglement must lie in [0, n_layers={self.n_layers}], "
                f"got {self.disentanglement}"
            )
        if self.n_physical > self.n_states:
            raise ValidationError(
                f"n_physical={self.n_physical} exceeds n_states={self.n_states}"
            )
        if self.disentanglement > 0 and self.n_neurons < 2:
            raise ValidationError("a branched network needs n_neurons >= 2")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")

    @property
    def n_latent(self):
        return self.n_states - self.n_physical

    @property
    def n_inputs(self):
        return self.n_dyn + self.n_par

    @property
    def branch_split(self):
        """Widths ``(time, parameter)`` of the branched hidden layers."""
        n_t = self.n_neurons // 2
        return n_t, self.n_neurons - n_t

    def layer_shapes(self):
        """Block names and shapes per layer, hidden layers first, output last.

        Within a layer the order is the flattening order: time branch before
        parameter branch, weights before biases.
        """
        n_t, n_p = self.branch_split
        shapes = []
        for i in range(1, self.n_layers + 1):
            if i <= self.disentanglement:
                in_t = self.n_dyn if i == 1 else n_t
                in_p = self.n_par if i == 1 else n_p
                shapes.append([
                    ("W_t", (n_t, in_t)), ("b_t", (n_t,)),
                    ("W_p", (n_p, in_p)), ("b_p", (n_p,)),
                ])
            else:
                fan_in = self.n_inputs if i == 1 else self.n_neurons
                shapes.append([("W", (self.n_neurons, fan_in)), ("b", (self.n_neurons,))])
        shapes.append([("W", (self.n_states, self.n_neurons)), ("b", (self.n_states,))])
        return shapes

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)


def count_params(spec):
    """Number of trainable scalars (weights and biases) of ``spec``."""
    return sum(int(np.prod(shape)) for layer in spec.layer_shapes() for _, shape in layer)


def _block_views(spec, flat):
    layers, offset = [], 0
    for layer in spec.layer_shapes():
        blocks = {}
        for name, shape in layer:
            size = int(np.prod(shape))
            blocks[name] = flat[offset:offset + size].reshape(shape)
            offset += size
        layers.append(blocks)
    return layers


class ModelWeights:
    """All weights and biases of one BLNM.

    The parameters live in a single flat vector ``flat``; ``layers[i]`` holds
    reshaped views into it (``W_t, b_t, W_p, b_p`` for branched layers,
    ``W, b`` otherwise, the output layer last).  Editing a block edits
    ``flat`` and vice versa.
    """

    def __init__(self, spec, flat=None):
        n = count_params(spec)
        if flat is None:
            flat = np.zeros(n)
        else:
            flat = np.asarray(flat, dtype=np.float64)
            if flat.shape != (n,):
                raise StructuralError(
                    f"expected a flat vector of {n} parameters, got shape {flat.shape}"
                )
        self.spec = spec
        self.flat = flat
        self.layers = _block_views(spec, flat)

    def copy(self):
        return ModelWeights(self.spec, self.flat.copy())

    def block_names(self):
        """``(layer_index, block_name)`` in flattening order."""
        return [(i, name) for i, layer in enumerate(self.layers) for name in layer]

    def __eq__(self, other):
        return (
            isinstance(other, ModelWeights)
            and self.spec == other.spec
            and np.array_equal(self.flat, other.flat)
        )

    def __repr__(self):
        return f"ModelWeights({self.spec}, n={self.flat.size})"


@dataclass
class StateVector:
    physical: np.ndarray
    latent: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.concatenate([self.physical, self.latent]).astype(dtype or np.float64)


def build(spec, seed=0):
    """Glorot-uniform weights per block, zero biases, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    weights = ModelWeights(spec)
    for layer in weights.layers:
        for name, block in layer.items():
            if name.startswith("W"):
                fan_out, fan_in = block.shape
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                block[...] = rng.uniform(-limit, limit, size=block.shape)
    return weights


def _affine(x, W, b):
    # einsum keeps every row's reduction order independent of the batch size,
    # so a row's value does not depend on which other rows are evaluated with it.
    return np.einsum("nk,ok->no", x, W) + b


def _check_inputs(spec, t, theta):
    t = np.asarray(t, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    if theta.ndim == 1:
        theta = np.broadcast_to(theta, (t.shape[0], theta.shape[0]))
    if t.ndim != 2 or t.shape[1] != spec.n_dyn:
        raise StructuralError(f"time input must have {spec.n_dyn} column(s), got {t.shape}")
    if theta.shape != (t.shape[0], spec.n_par):
        raise StructuralError(
            f"parameter input must have shape ({t.shape[0]}, {spec.n_par}), got {theta.shape}"
        )
    return t, theta


def forward_layers(weights, t, theta):
    """Forward pass keeping every hidden activation (used by backprop).

    Returns ``(inputs, hidden, z)`` where ``hidden[i]`` is ``(h_t, h_p)`` for a
    branched layer and ``h`` otherwise, and ``z`` has shape ``(N, n_states)``.
    """
    spec = weights.spec
    x_t, x_p = _check_inputs(spec, t, theta)
    hidden = []
    h = None
    for i, blocks in enumerate(weights.layers[:-1]):
        if i < spec.disentanglement:
            x_t = np.tanh(_affine(x_t, blocks["W_t"], blocks["b_t"]))
            x_p = np.tanh(_affine(x_p, blocks["W_p"], blocks["b_p"]))
            hidden.append((x_t, x_p))
        else:
            if h is None:
                h = np.concatenate([x_t, x_p], axis=1)
            h = np.tanh(_affine(h, blocks["W"], blocks["b"]))
            hidden.append(h)
    if h is None:
        h = np.concatenate([x_t, x_p], axis=1)
    out = weights.layers[-1]
    z = _affine(h, out["W"], out["b"])
    return (t, theta), hidden, z


def forward_batch(weights, t, theta):
    """Evaluate ``N`` independent points; ``t`` is ``(N,)``, ``theta`` ``(N, n_par)``.

    A single ``theta`` of shape ``(n_par,)`` is broadcast over all times.
    """
    return forward_layers(weights, t, theta)[2]


def forward(weights, t_norm, theta_norm):
    """Evaluate the map at one time point; returns a :class:`StateVector`."""
    z = forward_batch(weights, np.atleast_1d(np.asarray(t_norm, dtype=np.float64)),
                      np.asarray(theta_norm, dtype=np.float64).reshape(1, -1))[0]
    n_phys = weights.spec.n_physical
    return StateVector(physical=z[:n_phys], latent=z[n_phys:])


def forward_trajectory(weights, times, theta_norm):
    """Rows ``forward(weights, times[i], theta_norm)`` stacked as ``(len(times), n_states)``."""
    times = np.asarray(times, dtype=np.float64).reshape(-1)
    if times.size == 0:
        raise ValidationError("empty time grid")
    if not np.all(np.isfinite(times)):
        raise ValidationError("time grid contains non-finite values")
    theta = np.asarray(theta_norm, dtype=np.float64).reshape(-1)
    return forward_batch(weights, times, theta)


# -- serialization ---------------------------------------------------------------

def model_to_dict(weights, norm=None):
    spec = weights.spec
    layers = []
    for blocks in weights.layers:
        layers.append({name: block.tolist() for name, block in blocks.items()})
    doc = {
        "format_version": FORMAT_VERSION,
        "architecture": spec.to_dict(),
        "branch_split": list(spec.branch_split),
        "activation": spec.activation,
        "weights": layers,
    }
    if norm is not None:
        doc["normalization"] = norm.to_dict()
    return doc


def model_from_dict(doc, path=None):
    from .data import NormalizationInfo

    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {doc.get('format_version')!r}", path)
    try:
        spec = ArchitectureSpec.from_dict(doc["architecture"])
    except KeyError as exc:
        raise ParseError(f"missing key {exc}", path) from None
    if list(doc.get("branch_split", [])) != list(spec.branch_split):
        raise ParseError(f"branch_split {doc.get('branch_split')} does not match architecture", path)
    if doc.get("activation") != spec.activation:
        raise ParseError("activation does not match architecture", path)
    layers = doc.get("weights", [])
    shapes = spec.layer_shapes()
    if len(layers) != len(shapes):
        raise StructuralError(f"expected {len(shapes)} layers, found {len(layers)}")
    weights = ModelWeights(spec)
    for i, (layer, expected) in enumerate(zip(layers, shapes)):
        if list(layer) != [name for name, _ in expected]:
            raise StructuralError(f"layer {i}: expected blocks {[n for n, _ in expected]}, got {list(layer)}")
        for name, shape in expected:
            block = np.asarray(layer[name], dtype=np.float64)
            if block.shape != shape:
                raise StructuralError(f"layer {i} block {name}: expected {shape}, got {block.shape}")
            weights.layers[i][name][...] = block
    norm = None
    if doc.get("normalization") is not None:
        norm = NormalizationInfo.from_dict(doc["normalization"])
    return weights, norm


def save_model(path, weights, norm=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(weights, norm), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a model file; returns ``(weights, norm_or_None)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), path, exc.lineno) from None
    return model_from_dict(doc, path)
