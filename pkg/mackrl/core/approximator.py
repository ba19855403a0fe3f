"""Small differentiable heads for controllers and critics.

Each head keeps its parameters in one flat float64 vector and knows how to
slice it into weight matrices. ``grad(x, cotangent)`` returns the gradient of
``cotangent . forward(x)`` with respect to that flat vector, which is all the
policy tree and the critics need.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, softmax

from mackrl.core.correlated_sampling import heuristic_sample
from mackrl.errors import DomainError

logger = logging.getLogger(__name__)

ARCHITECTURES = ("linear", "mlp", "gru")


class ParamLayout:
    """Named slices of a flat parameter vector"""

    def __init__(self, shapes):
        self.shapes = dict(shapes)
        self.offsets = {}
        offset = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            self.offsets[name] = (offset, offset + size)
            offset += size
        self.size = offset

    def unpack(self, flat):
        return {
            name: flat[start:stop].reshape(self.shapes[name])
            for name, (start, stop) in self.offsets.items()
        }


class PolicyHead:
    """Base class: maps an input vector (and optional hidden state) to logits"""

    architecture = None

    def __init__(self, n_inputs, n_outputs, shapes, hidden_size=0):
        self.n_inputs = int(n_inputs)
        self.n_outputs = int(n_outputs)
        self.hidden_size = int(hidden_size)
        self.layout = ParamLayout(shapes)
        self.params = np.zeros(self.layout.size)

    @property
    def is_recurrent(self):
        return False

    def initialise(self, rng, scale=1.0):
        """Scaled fan-in normal weights, zero biases"""
        flat = np.zeros(self.layout.size)
        views = self.layout.unpack(flat)
        for name, view in views.items():
            if view.ndim == 2:
                view[...] = rng.normal(0.0, scale / np.sqrt(view.shape[1]), size=view.shape)
        self.params = flat
        return self

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_inputs,):
            raise DomainError(
                f"{type(self).__name__} expects input of length {self.n_inputs}, got shape {x.shape}"
            )
        return x

    def forward(self, x, hidden=None):
        raise NotImplementedError

    def grad(self, x, cotangent, hidden=None):
        raise NotImplementedError

    def probs(self, x, hidden=None, epsilon=0.0):
        logits, _ = self.forward(x, hidden)
        return bounded_softmax(logits, epsilon)

    def describe(self):
        return {
            "architecture": self.architecture,
            "n_inputs": self.n_inputs,
            "n_outputs": self.n_outputs,
            "hidden_size": self.hidden_size,
            "shapes": {name: list(shape) for name, shape in self.layout.shapes.items()},
        }


class LinearHead(PolicyHead):
    """logits = W x + b"""

    architecture = "linear"

    def __init__(self, n_inputs, n_outputs, hidden_size=0):
        super().__init__(n_inputs, n_outputs, {"W": (n_outputs, n_inputs), "b": (n_outputs,)})

    def initialise(self, rng, scale=1.0):
        # Linear controllers start uniform
        self.params = np.zeros(self.layout.size)
        return self

    def forward(self, x, hidden=None):
        x = self._check_input(x)
        p = self.layout.unpack(self.params)
        return p["W"] @ x + p["b"], None

    def grad(self, x, cotangent, hidden=None):
        x = self._check_input(x)
        c = np.asarray(cotangent, dtype=np.float64)
        return np.concatenate([np.outer(c, x).ravel(), c])


class MLPHead(PolicyHead):
    """One tanh hidden layer"""

    architecture = "mlp"

    def __init__(self, n_inputs, n_outputs, hidden_size=16):
        super().__init__(
            n_inputs,
            n_outputs,
            {
                "W1": (hidden_size, n_inputs),
                "b1": (hidden_size,),
                "W2": (n_outputs, hidden_size),
                "b2": (n_outputs,),
            },
            hidden_size,
        )

    def forward(self, x, hidden=None):
        x = self._check_input(x)
        p = self.layout.unpack(self.params)
        h = np.tanh(p["W1"] @ x + p["b1"])
        return p["W2"] @ h + p["b2"], None

    def grad(self, x, cotangent, hidden=None):
        x = self._check_input(x)
        c = np.asarray(cotangent, dtype=np.float64)
        p = self.layout.unpack(self.params)
        h = np.tanh(p["W1"] @ x + p["b1"])
        dz = (p["W2"].T @ c) * (1.0 - h * h)
        return np.concatenate([np.outer(dz, x).ravel(), dz, np.outer(c, h).ravel(), c])


class GRUHead(PolicyHead):
    """Gated recurrent cell followed by a linear readout

    The hidden state entering a step is treated as an input: gradients are
    truncated to one step.
    """

    architecture = "gru"

    def __init__(self, n_inputs, n_outputs, hidden_size=16):
        h, d = hidden_size, n_inputs
        super().__init__(
            n_inputs,
            n_outputs,
            {
                "Wz": (h, d), "Uz": (h, h), "bz": (h,),
                "Wr": (h, d), "Ur": (h, h), "br": (h,),
                "Wn": (h, d), "Un": (h, h), "bn": (h,), "bhn": (h,),
                "Wo": (n_outputs, h), "bo": (n_outputs,),
            },
            hidden_size,
        )

    @property
    def is_recurrent(self):
        return True

    def initial_hidden(self):
        return np.zeros(self.hidden_size)

    def _cell(self, x, hidden):
        p = self.layout.unpack(self.params)
        h = self.initial_hidden() if hidden is None else np.asarray(hidden, dtype=np.float64)
        if h.shape != (self.hidden_size,):
            raise DomainError(f"Hidden state must have length {self.hidden_size}, got {h.shape}")
        z = expit(p["Wz"] @ x + p["Uz"] @ h + p["bz"])
        r = expit(p["Wr"] @ x + p["Ur"] @ h + p["br"])
        g = p["Un"] @ h + p["bhn"]
        n = np.tanh(p["Wn"] @ x + p["bn"] + r * g)
        new_h = (1.0 - z) * n + z * h
        return p, h, z, r, g, n, new_h

    def forward(self, x, hidden=None):
        x = self._check_input(x)
        p, _, _, _, _, _, new_h = self._cell(x, hidden)
        return p["Wo"] @ new_h + p["bo"], new_h

    def grad(self, x, cotangent, hidden=None):
        x = self._check_input(x)
        c = np.asarray(cotangent, dtype=np.float64)
        p, h, z, r, g, n, new_h = self._cell(x, hidden)
        d_new_h = p["Wo"].T @ c
        da_n = d_new_h * (1.0 - z) * (1.0 - n * n)
        da_z = d_new_h * (h - n) * z * (1.0 - z)
        dg = da_n * r
        da_r = da_n * g * r * (1.0 - r)
        return np.concatenate([
            np.outer(da_z, x).ravel(), np.outer(da_z, h).ravel(), da_z,
            np.outer(da_r, x).ravel(), np.outer(da_r, h).ravel(), da_r,
            np.outer(da_n, x).ravel(), np.outer(dg, h).ravel(), da_n, dg,
            np.outer(c, new_h).ravel(), c,
        ])


class ValueHead:
    """Scalar critic V(s, u_prev) on top of an MLP"""

    def __init__(self, n_inputs, hidden_size=16):
        self.body = MLPHead(n_inputs, 1, hidden_size)

    @property
    def n_inputs(self):
        return self.body.n_inputs

    @property
    def params(self):
        return self.body.params

    @params.setter
    def params(self, value):
        self.body.params = np.asarray(value, dtype=np.float64)

    def initialise(self, rng, scale=1.0):
        self.body.initialise(rng, scale)
        return self

    def value(self, x):
        out, _ = self.body.forward(x)
        return float(out[0])

    def grad(self, x, cotangent=1.0):
        return self.body.grad(x, np.array([float(cotangent)]))

    def describe(self):
        info = self.body.describe()
        info["architecture"] = "value-mlp"
        return info


HEADS = {"linear": LinearHead, "mlp": MLPHead, "gru": GRUHead}


def make_head(architecture, n_inputs, n_outputs, hidden_size=16, rng=None, init_scale=1.0):
    """Construct and initialise a linear, mlp or gru head"""
    if architecture not in HEADS:
        raise DomainError(f"Unknown architecture '{architecture}', expected one of {ARCHITECTURES}")
    head = HEADS[architecture](n_inputs, n_outputs, hidden_size)
    if rng is not None:
        head.initialise(rng, init_scale)
    return head


def forward(head, x, hidden=None):
    return head.forward(x, hidden)


def grad(head, x, cotangent, hidden=None):
    return head.grad(x, cotangent, hidden)


def bounded_softmax(logits, epsilon=0.0):
    """(1 - eps) * softmax(logits) + eps * uniform"""
    if not 0.0 <= epsilon <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {epsilon}")
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise DomainError("Non-finite logits")
    return (1.0 - epsilon) * softmax(logits) + epsilon / logits.size


def bounded_softmax_sample(logits, epsilon, rng):
    """Draw from the bounded softmax by inverting its CDF at one uniform"""
    return heuristic_sample(bounded_softmax(logits, epsilon), rng.random())


def greedy_action(probs):
    """argmax with ties broken towards the lowest canonical index"""
    return int(np.argmax(probs))


def softmax_cotangent(soft, weights, epsilon=0.0):
    """Pull a cotangent on bounded-softmax probabilities back onto the logits

    ``soft`` is the plain softmax of the logits; the result is
    d(weights . p)/d logits where p is the bounded distribution.
    """
    s = np.asarray(soft, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    return (1.0 - epsilon) * s * (weights - s @ weights)


@dataclass
class ExplorationSchedule:
    """Linear epsilon anneal over environment steps"""

    start: float = 0.5
    end: float = 0.01
    horizon: int = 50000

    def value(self, env_steps):
        """Epsilon after ``env_steps`` environment steps"""
        if self.horizon <= 0:
            return self.end
        frac = min(max(env_steps / self.horizon, 0.0), 1.0)
        eps = self.start + frac * (self.end - self.start)
        return float(min(max(eps, min(self.start, self.end)), max(self.start, self.end)))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params, grads, state, lr=0.0005, betas=(0.9, 0.999), eps=1e-8):
    """One Adam descent step; returns (new params, new state)"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise DomainError(f"Shape mismatch: params {params.shape}, grads {grads.shape}")
    beta1, beta2 = betas
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)


@dataclass
class Optimiser:
    """Adam bound to one parameter owner (anything with get/set_parameters)"""

    size: int
    lr: float = 0.0005
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    state: AdamState = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = AdamState.zeros(self.size)

    def step(self, params, grads):
        """Descend ``grads`` by one Adam step; returns the new parameters"""
        new_params, self.state = adam_step(params, grads, self.state, self.lr, self.betas, self.eps)
        return new_params


def checkpoint_files(path):
    """The (.bin, .json) pair for a checkpoint stem; dots in the stem are kept"""
    path = Path(path)
    return path.parent / f"{path.name}.bin", path.parent / f"{path.name}.json"


def save_checkpoint(path, params, header):
    """Write <path>.bin (little-endian float64) and <path>.json"""
    path = Path(path)
    bin_file, json_file = checkpoint_files(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = np.ascontiguousarray(params, dtype="<f8")
    flat.tofile(bin_file)
    header = dict(header)
    header["size"] = int(flat.size)
    header["dtype"] = "<f8"
    with open(json_file, "w") as f:
        json.dump(header, f, indent=2, sort_keys=True)
    logger.debug(f"Checkpoint written: {path}")
    return path


def load_checkpoint(path):
    """Read back (params, header) written by save_checkpoint"""
    bin_file, json_file = checkpoint_files(path)
    with open(json_file, "r") as f:
        header = json.load(f)
    params = np.fromfile(bin_file, dtype=header.get("dtype", "<f8"))
    if params.size != header["size"]:
        raise DomainError(f"Checkpoint {path} holds {params.size} values, header says {header['size']}")
    return params.astype(np.float64), header
