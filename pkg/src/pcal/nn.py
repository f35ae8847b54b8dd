"""Minimal dense-net engine on numpy.

Forward passes cache pre-activations so backward() can return both parameter
gradients and the gradient with respect to the input batch; the latter is what
lets an upstream net be trained through a frozen downstream one.  Weights are
float64 throughout and every initialization is driven by an explicit seed.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (DimMismatch, InvalidShape, IoError, NonFiniteGradient,
                     StaleCache)

CHECKPOINT_VERSION = "pcal-net-v1"

HIDDEN_ACTIVATIONS = ("relu",)
OUTPUT_ACTIVATIONS = ("linear", "sigmoid")


@dataclass
class NetShape:
    """Layer widths from input to output, plus activation choices."""

    layer_widths: list
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        widths = [int(w) for w in self.layer_widths]
        if len(widths) < 2:
            raise InvalidShape(f"need at least [in, out] widths, got {widths}")
        if any(w < 1 for w in widths):
            raise InvalidShape(f"layer widths must be >= 1, got {widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise InvalidShape(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise InvalidShape(f"unknown output activation {self.output_activation!r}")
        self.layer_widths = widths

    @property
    def in_width(self):
        return self.layer_widths[0]

    @property
    def out_width(self):
        return self.layer_widths[-1]

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    def to_dict(self):
        return {
            "layer_widths": list(self.layer_widths),
            "hidden_activation": self.hidden_activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["layer_widths"], d["hidden_activation"], d["output_activation"])


class DenseNet:
    """Fully connected net: list of (W, b) pairs, W laid out (fan_in, fan_out)."""

    def __init__(self, shape, weights, biases, init_seed):
        self.shape = shape
        self.weights = weights
        self.biases = biases
        self.init_seed = init_seed

    def copy(self):
        return DenseNet(self.shape,
                        [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases],
                        self.init_seed)

    def params(self):
        """Flat iterator over parameter arrays, weights before biases per layer."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b


class ForwardCache:
    """Intermediate state of one forward pass; consumed by backward()."""

    def __init__(self, activations, pre_activations):
        # activations[0] is the input batch; activations[-1] the output.
        self.activations = activations
        self.pre_activations = pre_activations


@dataclass
class OptimizerState:
    """SGD or Adam state.  Moment buffers are created lazily on first step."""

    algorithm: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default=None, repr=False)
    v: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adam"):
            raise InvalidShape(f"unknown optimizer {self.algorithm!r}")
        if not self.learning_rate > 0:
            raise InvalidShape("learning rate must be > 0")


def init_net(shape, seed):
    """Glorot-uniform weights, zero biases; identical for identical seeds."""
    if not isinstance(shape, NetShape):
        shape = NetShape(shape)
    rng = np.random.default_rng(int(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(shape.layer_widths[:-1], shape.layer_widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(shape, weights, biases, int(seed))


def reinit(net, seed):
    """Fresh net with the same shape; the caller must reset its optimizer state."""
    return init_net(net.shape, seed)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(net, x):
    """Run the batch through the net.  Returns (output, cache); pure."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimMismatch(f"input must be 2-D (rows, features), got ndim={x.ndim}")
    if x.shape[1] != net.shape.in_width:
        raise DimMismatch(
            f"input has {x.shape[1]} columns, net expects {net.shape.in_width}")
    acts = [x]
    pres = []
    a = x
    last = net.shape.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pres.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
        elif net.shape.output_activation == "sigmoid":
            a = _sigmoid(z)
        else:
            a = z
        acts.append(a)
    return acts[-1], ForwardCache(acts, pres)


def mse_loss(pred, target):
    """Mean squared error over all entries and its gradient wrt pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimMismatch(f"pred shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


def backward(net, cache, grad_out):
    """Backprop grad_out (dJ/d output) through the net.

    Returns (param_grads, grad_input) where param_grads is a list of (dW, db)
    aligned with net layers and grad_input is dJ/d input batch.  The cache must
    come from a forward() of this net on the same batch.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    n_layers = net.shape.n_layers
    if len(cache.pre_activations) != n_layers or len(cache.activations) != n_layers + 1:
        raise StaleCache("cache layer count does not match net")
    if grad_out.shape != cache.activations[-1].shape:
        raise StaleCache(
            f"grad shape {grad_out.shape} != cached output shape "
            f"{cache.activations[-1].shape}")
    for l in range(n_layers):
        if cache.pre_activations[l].shape[1] != net.weights[l].shape[1]:
            raise StaleCache("cache widths do not match net")

    g = grad_out
    param_grads = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        if l == n_layers - 1:
            if net.shape.output_activation == "sigmoid":
                s = cache.activations[-1]
                g = g * s * (1.0 - s)
            # linear output: g unchanged
        else:
            g = g * (cache.pre_activations[l] > 0.0)
        a_prev = cache.activations[l]
        dw = a_prev.T @ g
        db = g.sum(axis=0)
        param_grads[l] = (dw, db)
        g = g @ net.weights[l].T
    return param_grads, g


def optimizer_step(net, param_grads, state):
    """Apply one SGD or Adam update in place.

    Raises NonFiniteGradient before touching any parameter if a gradient
    contains NaN or inf.
    """
    if len(param_grads) != net.shape.n_layers:
        raise DimMismatch("gradient list does not match net layers")
    flat = []
    for (dw, db), w, b in zip(param_grads, net.weights, net.biases):
        if dw.shape != w.shape or db.shape != b.shape:
            raise DimMismatch("gradient shapes do not match parameters")
        flat.append(dw)
        flat.append(db)
    for g in flat:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or inf")

    params = list(net.params())
    lr = state.learning_rate
    if state.algorithm == "sgd":
        for p, g in zip(params, flat):
            p -= lr * g
        state.t += 1
        return net, state

    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, flat, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return net, state


def net_checksum(net):
    """Order-sensitive digest of all parameters; used by isolation checks."""
    import hashlib

    h = hashlib.sha256()
    for p in net.params():
        h.update(p.tobytes())
    return h.hexdigest()


def save_net(net, path):
    """Write the net as a versioned JSON checkpoint."""
    from .jsonio import write_json

    doc = {
        "version": CHECKPOINT_VERSION,
        "shape": net.shape.to_dict(),
        "seed": net.init_seed,
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    write_json(path, doc)


def load_net(path):
    from .jsonio import read_json

    doc = read_json(path)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise IoError(f"{path}: expected checkpoint version {CHECKPOINT_VERSION}, "
                      f"got {doc.get('version')!r}")
    shape = NetShape.from_dict(doc["shape"])
    weights = [np.array(layer["weights"], dtype=np.float64) for layer in doc["layers"]]
    biases = [np.array(layer["bias"], dtype=np.float64) for layer in doc["layers"]]
    for l, (w, b) in enumerate(zip(weights, biases)):
        expect = (shape.layer_widths[l], shape.layer_widths[l + 1])
        if w.shape != expect or b.shape != (expect[1],):
            raise IoError(f"{path}: layer {l} arrays do not match declared shape")
    return DenseNet(shape, weights, biases, int(doc["seed"]))
