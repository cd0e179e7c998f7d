"""Dense tanh networks with hand-written reverse mode, Adam, and a finite-difference checker.

Inputs are either one vector ``(d,)`` or a batch ``(n, d)``.  Weights are
stored as ``(fan_in, fan_out)`` so a layer computes ``x @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, NumericError, StateError

CHECKPOINT_VERSION = 1


@dataclass
class ForwardCache:
    inputs: list  # input to every layer
    pre: list  # pre-activation of every layer
    version: int
    squeeze: bool


class DenseNet:
    """Affine layers with tanh between them and an identity output.

    ``hidden=()`` gives a single affine layer. Weights are drawn uniformly
    from ``+-1/sqrt(fan_in)``; the last layer is further scaled by
    ``out_scale``. Biases start at zero.
    """

    def __init__(self, n_in, hidden, n_out, seed=0, out_scale=1.0):
        sizes = [int(n_in), *[int(h) for h in hidden], int(n_out)]
        if any(s < 1 for s in sizes):
            raise DomainError(f"every layer needs at least one unit, got {sizes}")
        self.sizes = sizes
        rng = np.random.default_rng(seed)
        self.params = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            if k == len(sizes) - 2:
                w *= out_scale
            self.params.append(w)
            self.params.append(np.zeros(fan_out))
        self.version = 0

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    @property
    def n_in(self):
        return self.sizes[0]

    @property
    def n_out(self):
        return self.sizes[-1]

    def n_params(self):
        return sum(p.size for p in self.params)

    def touch(self):
        """Mark parameters as changed; caches taken earlier become stale."""
        self.version += 1

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DomainError(f"expected input width {self.n_in}, got shape {x.shape}")
        inputs, pre = [], []
        a = x
        for k in range(self.n_layers):
            inputs.append(a)
            z = a @ self.params[2 * k] + self.params[2 * k + 1]
            pre.append(z)
            a = np.tanh(z) if k < self.n_layers - 1 else z
        out = a[0] if squeeze else a
        return out, ForwardCache(inputs, pre, self.version, squeeze)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache: ForwardCache, grad_out):
        """Gradients of a scalar loss given ``dL/d(output)``.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` aligned
        with :attr:`params`.
        """
        if cache.version != self.version:
            raise StateError("forward cache is stale: parameters changed since the forward pass")
        g = np.asarray(grad_out, dtype=float)
        if cache.squeeze:
            g = g[None, :]
        grads = [None] * len(self.params)
        for k in reversed(range(self.n_layers)):
            if k < self.n_layers - 1:
                g = g * (1.0 - np.tanh(cache.pre[k]) ** 2)
            grads[2 * k] = cache.inputs[k].T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.params[2 * k].T
        return grads, (g[0] if cache.squeeze else g)

    def copy(self):
        other = object.__new__(DenseNet)
        other.sizes = list(self.sizes)
        other.params = [p.copy() for p in self.params]
        other.version = 0
        return other

    def state_dict(self):
        return {"sizes": list(self.sizes), "params": [p.tolist() for p in self.params]}

    @classmethod
    def from_state_dict(cls, state):
        net = object.__new__(cls)
        net.sizes = [int(s) for s in state["sizes"]]
        net.params = [np.asarray(p, dtype=float) for p in state["params"]]
        net.version = 0
        return net


class Adam:
    """Bias-corrected adaptive-moment optimizer bound to one network."""

    def __init__(self, net: DenseNet, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, max_grad_norm=None):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in net.params]
        self.v = [np.zeros_like(p) for p in net.params]
        self.t = 0

    def step(self, grads):
        if len(grads) != len(self.net.params):
            raise DomainError("gradient list does not match parameter list")
        for g, p in zip(grads, self.net.params):
            if g.shape != p.shape:
                raise DomainError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NumericError("non-finite gradient; update aborted")
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > self.max_grad_norm:
                grads = [g * (self.max_grad_norm / norm) for g in grads]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.net.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.net.touch()

    def state_dict(self):
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "max_grad_norm": self.max_grad_norm, "t": self.t,
            "m": [a.tolist() for a in self.m], "v": [a.tolist() for a in self.v],
        }

    def load_state_dict(self, state):
        self.lr, self.beta1, self.beta2 = state["lr"], state["beta1"], state["beta2"]
        self.eps, self.max_grad_norm, self.t = state["eps"], state["max_grad_norm"], state["t"]
        self.m = [np.asarray(a, dtype=float) for a in state["m"]]
        self.v = [np.asarray(a, dtype=float) for a in state["v"]]


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: tuple  # (parameter array index, flat index)
    tolerance: float
    n_checked: int
    errors: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _relative_error(analytic, numeric, floor):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def _propagate(net, k, z):
    """Run pre-activations ``z`` of layer ``k`` (any leading dims) to the output."""
    for j in range(k, net.n_layers):
        if j > k:
            z = a @ net.params[2 * j] + net.params[2 * j + 1]
        a = np.tanh(z) if j < net.n_layers - 1 else z
    return a


def finite_diff_check(
    net: DenseNet, inputs, loss_fn, grad_fn, tolerance=1e-4, h=1e-5, grads=None, floor=1e-5,
    chunk_floats=2_000_000,
):
    """Compare reverse-mode gradients with central differences on every parameter.

    ``loss_fn(outputs)`` maps network outputs of shape ``(..., n, n_out)`` to
    losses of shape ``(...)``; ``grad_fn(outputs)`` returns ``dL/d(outputs)``
    for a single ``(n, n_out)`` output.  Pass ``grads`` to check a given
    gradient list instead of the one from :meth:`DenseNet.backward`.  Relative
    errors use ``max(|a|, |n|, floor)`` as denominator.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    out, cache = net.forward(x)
    if grads is None:
        grads, _ = net.backward(cache, grad_fn(out))
    n = x.shape[0]
    errors = []
    worst, worst_at, count = -1.0, (0, 0), 0
    for k in range(net.n_layers):
        a_in, z = cache.inputs[k], cache.pre[k]
        fan_in, fan_out = net.params[2 * k].shape
        # weight (i, j) shifts column j of z by h * a_in[:, i]; bias j by h
        shifts = [(2 * k, i * fan_out + j, a_in[:, i], j) for i in range(fan_in) for j in range(fan_out)]
        shifts += [(2 * k + 1, j, np.ones(n), j) for j in range(fan_out)]
        width = max(net.sizes[k + 1:])
        per_chunk = max(1, chunk_floats // (n * width * 2))
        for start in range(0, len(shifts), per_chunk):
            chunk = shifts[start:start + per_chunk]
            zs = np.repeat(z[None], 2 * len(chunk), axis=0)
            for c, (_, _, col, j) in enumerate(chunk):
                zs[2 * c, :, j] += h * col
                zs[2 * c + 1, :, j] -= h * col
            losses = np.asarray(loss_fn(_propagate(net, k, zs)), dtype=float)
            numeric = (losses[0::2] - losses[1::2]) / (2 * h)
            analytic = np.array([grads[p].reshape(-1)[flat] for p, flat, _, _ in chunk])
            rel = _relative_error(analytic, numeric, floor)
            errors.extend(rel.tolist())
            count += len(chunk)
            i = int(np.argmax(rel))
            if rel[i] > worst:
                worst, worst_at = float(rel[i]), (chunk[i][0], chunk[i][1])
    return GradCheckReport(worst, worst_at, tolerance, count, errors)


def quadratic_loss(target):
    """``0.5 * sum((y - target)**2)`` as a (loss_fn, grad_fn) pair."""
    target = np.asarray(target, dtype=float)

    def loss_fn(out):
        return 0.5 * np.sum((out - target) ** 2, axis=(-2, -1))

    def grad_fn(out):
        return out - target

    return loss_fn, grad_fn


def save_checkpoint(path, nets: dict, optimizers: dict | None = None, meta: dict | None = None):
    """Write networks (and optimizer state) as JSON; floats round-trip exactly."""
    doc = {
        "format": "vodu-alloc-checkpoint",
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "nets": {name: net.state_dict() for name, net in nets.items()},
        "optimizers": {name: opt.state_dict() for name, opt in (optimizers or {}).items()},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "vodu-alloc-checkpoint" or doc.get("version") != CHECKPOINT_VERSION:
        raise DomainError(f"{path}: not a version {CHECKPOINT_VERSION} checkpoint")
    nets = {name: DenseNet.from_state_dict(s) for name, s in doc["nets"].items()}
    return nets, doc["optimizers"], doc["meta"]
