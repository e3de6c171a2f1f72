"""Small dense networks with explicit gradients, in float64 numpy.

Everything the agents need is built from one primitive: an MLP with tanh
hidden layers and a linear output, supporting reverse-mode gradients
(``backward``) and forward-mode directional derivatives (``jvp``). On top of
it sits a tanh-squashed Gaussian policy with a state-independent log standard
deviation, plus Adam and JSON checkpoint helpers.

Checkpoints are plain JSON with sorted keys; Python's shortest-repr float
serialization round-trips exactly, so reloading reproduces parameters bit for
bit and identical runs produce identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ShapeMismatch

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
CHECKPOINT_FORMAT_VERSION = 1


def softplus(x):
    return np.logaddexp(0.0, x)


class Mlp:
    """tanh hidden layers, linear output, uniform +-1/sqrt(fan_in) init."""

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=fan_out)
            if i == len(self.sizes) - 2:
                w *= out_scale
                b *= out_scale
            self.weights.append(w)
            self.biases.append(b)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.in_dim:
            raise DimensionMismatch(f"input has {x.shape[1]} features, net expects {self.in_dim}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x)
        return out

    def forward_cached(self, x: np.ndarray):
        """Returns (output, cache); cache holds activations for backward."""
        x = self._check_input(x)
        activations = [x]
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if i == last else np.tanh(z)
            activations.append(a)
        return a, activations

    def backward(self, cache, grad_out: np.ndarray):
        """Given d(loss)/d(output), return (param grads, d(loss)/d(input)).

        Param grads come back as a flat list [dW0, db0, dW1, db1, ...]
        matching ``params()``.
        """
        activations = cache
        g = np.asarray(grad_out, dtype=float)
        if g.shape != activations[-1].shape:
            raise ShapeMismatch(
                f"grad_out shape {g.shape} != output shape {activations[-1].shape}"
            )
        grads: list[np.ndarray] = []
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = activations[i]
            grads.append(g.sum(axis=0))  # db
            grads.append(a_prev.T @ g)  # dW
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (1.0 - activations[i] ** 2)  # through tanh
        grads.reverse()
        return grads, g

    def jvp(self, x: np.ndarray, tangents: list[np.ndarray]) -> np.ndarray:
        """Directional derivative of the output along a parameter tangent."""
        x = self._check_input(x)
        if len(tangents) != 2 * len(self.weights):
            raise ShapeMismatch(
                f"expected {2 * len(self.weights)} tangent arrays, got {len(tangents)}"
            )
        a = x
        da = np.zeros_like(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            dw = tangents[2 * i]
            db = tangents[2 * i + 1]
            if dw.shape != w.shape or db.shape != b.shape:
                raise ShapeMismatch(f"tangent {i} shape mismatch")
            z = a @ w + b
            dz = da @ w + a @ dw + db
            if i == last:
                a, da = z, dz
            else:
                a = np.tanh(z)
                da = (1.0 - a**2) * dz
        return da

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_params(self, params: list[np.ndarray]) -> None:
        if len(params) != 2 * len(self.weights):
            raise ShapeMismatch(f"expected {2 * len(self.weights)} arrays, got {len(params)}")
        for i in range(len(self.weights)):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeMismatch(f"layer {i} shape mismatch")
            self.weights[i] = np.array(w, dtype=float)
            self.biases[i] = np.array(b, dtype=float)

    def copy(self) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.sizes = self.sizes
        clone.weights = [w.copy() for w in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def to_json(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_json(cls, payload: dict) -> "Mlp":
        net = cls.__new__(cls)
        net.sizes = tuple(payload["sizes"])
        net.weights = [np.array(w, dtype=float) for w in payload["weights"]]
        net.biases = [np.array(b, dtype=float) for b in payload["biases"]]
        return net


def flatten_params(params: list[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(p, dtype=float).reshape(-1) for p in params])


def unflatten_params(flat: np.ndarray, like: list[np.ndarray]) -> list[np.ndarray]:
    needed = sum(p.size for p in like)
    if flat.size != needed:
        raise ShapeMismatch(f"flat vector has {flat.size} entries, shapes need {needed}")
    out = []
    offset = 0
    for p in like:
        size = p.size
        out.append(flat[offset:offset + size].reshape(p.shape))
        offset += size
    return out


class Adam:
    """Adam with bias correction; first step reduces to -lr * g / (|g| + eps)."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """Descend in place along grads (gradients of a loss to minimize)."""
        if len(grads) != len(self.m):
            raise ShapeMismatch(f"expected {len(self.m)} grads, got {len(grads)}")
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            if g.shape != self.m[i].shape:
                raise ShapeMismatch(f"grad {i} has shape {g.shape}, expected {self.m[i].shape}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g**2
            m_hat = self.m[i] / (1.0 - self.beta1**self.t)
            v_hat = self.v[i] / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def tanh_log_det_jacobian(pre: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) per element, in the overflow-safe form."""
    return 2.0 * (np.log(2.0) - pre - softplus(-2.0 * pre))


class GaussianPolicy:
    """tanh(Normal(mu(s), exp(log_std))) with a shared, learned log_std."""

    def __init__(self, obs_dim: int, act_dim: int, hidden, rng: np.random.Generator,
                 out_scale: float = 0.01):
        self.mean_net = Mlp((obs_dim,) + tuple(hidden) + (act_dim,), rng, out_scale=out_scale)
        self.log_std = np.zeros(act_dim)

    @property
    def obs_dim(self) -> int:
        return self.mean_net.in_dim

    @property
    def act_dim(self) -> int:
        return self.mean_net.out_dim

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    def std(self) -> np.ndarray:
        return np.exp(self.clamped_log_std())

    def distribution(self, obs: np.ndarray):
        """Pre-squash (mean, std); std broadcasts over the batch."""
        mean = self.mean_net.forward(obs)
        std = np.broadcast_to(self.std(), mean.shape)
        return mean, std

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Returns (action, pre_squash, log_prob); all batched."""
        mean, std = self.distribution(obs)
        noise = rng.standard_normal(mean.shape)
        pre = mean + std * noise
        action = np.tanh(pre)
        return action, pre, self.log_prob_from_mean(mean, pre)

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        return np.tanh(self.mean_net.forward(obs))

    def log_prob_from_mean(self, mean: np.ndarray, pre: np.ndarray) -> np.ndarray:
        log_std = self.clamped_log_std()
        std = np.exp(log_std)
        z = (pre - mean) / std
        gaussian = -HALF_LOG_2PI - log_std - 0.5 * z**2
        return (gaussian - tanh_log_det_jacobian(pre)).sum(axis=1)

    def log_prob(self, obs: np.ndarray, pre_actions: np.ndarray) -> np.ndarray:
        """Log density of tanh(pre_actions) given obs; expects pre-squash values."""
        pre = np.atleast_2d(np.asarray(pre_actions, dtype=float))
        mean = self.mean_net.forward(obs)
        if pre.shape != mean.shape:
            raise ShapeMismatch(f"pre_actions shape {pre.shape} != mean shape {mean.shape}")
        return self.log_prob_from_mean(mean, pre)

    def entropy(self) -> float:
        """Entropy of the pre-squash Gaussian, summed over action dims."""
        log_std = self.clamped_log_std()
        return float(np.sum(log_std + 0.5 * np.log(2.0 * np.pi * np.e)))

    def params(self) -> list[np.ndarray]:
        return self.mean_net.params() + [self.log_std]

    def set_params(self, params: list[np.ndarray]) -> None:
        self.mean_net.set_params(params[:-1])
        if params[-1].shape != self.log_std.shape:
            raise ShapeMismatch("log_std shape mismatch")
        self.log_std = np.array(params[-1], dtype=float)

    def copy(self) -> "GaussianPolicy":
        clone = GaussianPolicy.__new__(GaussianPolicy)
        clone.mean_net = self.mean_net.copy()
        clone.log_std = self.log_std.copy()
        return clone

    def to_json(self) -> dict:
        return {"mean_net": self.mean_net.to_json(), "log_std": self.log_std.tolist()}

    @classmethod
    def from_json(cls, payload: dict) -> "GaussianPolicy":
        policy = cls.__new__(cls)
        policy.mean_net = Mlp.from_json(payload["mean_net"])
        policy.log_std = np.array(payload["log_std"], dtype=float)
        return policy


def save_checkpoint(path, kind: str, payload: dict) -> None:
    """Write a sorted-keys JSON checkpoint; identical state -> identical bytes."""
    doc = {"format_version": CHECKPOINT_FORMAT_VERSION, "kind": kind}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    return doc
