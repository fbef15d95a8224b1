"""Minimal dense-network engine with hand-derived backprop.

Networks are a stack of fully connected layers with ReLU between them (the
trunk) feeding one or more output heads. Heads are single dense layers with
a linear, sigmoid, or softmax activation. Gradients are computed by hand and
the test suite checks them against central finite differences.

All math is float64. Inputs may be single vectors of shape (d,) or batches
of shape (B, d); outputs and gradients follow the input's batchness. For
batched calls the parameter gradients are summed over rows, so any 1/B
scaling belongs in the output gradient supplied by the caller.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

SNAPSHOT_MAGIC = b"OFNN"
SNAPSHOT_VERSION = 1

# Every parameter update clips the global gradient norm at this value.
GRAD_CLIP_NORM = 5.0

_HEAD_ACTIVATIONS = ("linear", "sigmoid", "softmax")


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Softmax over the last axis with max-subtraction for stability."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Log-probabilities via the log-sum-exp trick."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class HeadSpec:
    """One output head: a dense layer plus its activation."""

    name: str
    dim: int
    activation: str = "linear"
    temperature: float = 1.0  # softmax heads only

    def __post_init__(self) -> None:
        if self.activation not in _HEAD_ACTIVATIONS:
            raise ValueError(f"unknown head activation {self.activation!r}")
        if self.dim < 1:
            raise ValueError("head dim must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture description: input width, ReLU trunk widths, heads."""

    input_dim: int
    hidden: tuple[int, ...]
    heads: tuple[HeadSpec, ...]

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if any(w < 1 for w in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if not self.heads:
            raise ValueError("at least one head is required")
        names = [h.name for h in self.heads]
        if len(set(names)) != len(names):
            raise ValueError("head names must be unique")

    def head(self, name: str) -> HeadSpec:
        for h in self.heads:
            if h.name == name:
                return h
        raise KeyError(name)


class DenseLayer:
    """Fully connected layer: y = W @ x + b, weights shaped (out, in)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator | None = None):
        bound = 1.0 / np.sqrt(in_dim)
        if rng is None:
            self.weights = np.zeros((out_dim, in_dim))
        else:
            self.weights = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        self.biases = np.zeros(out_dim)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return self.weights @ x + self.biases
        return x @ self.weights.T + self.biases

    @property
    def parameter_count(self) -> int:
        return self.weights.size + self.biases.size


@dataclass
class ForwardCache:
    """Intermediate values from one forward pass, consumed by backward."""

    x: np.ndarray                       # (B, input_dim)
    trunk_pre: list[np.ndarray] = field(default_factory=list)
    trunk_post: list[np.ndarray] = field(default_factory=list)
    head_pre: dict[str, np.ndarray] = field(default_factory=dict)
    head_post: dict[str, np.ndarray] = field(default_factory=dict)
    squeeze: bool = False               # input arrived as a single vector


# Parameter gradients keyed by layer name ("trunk0", ..., "head:<name>").
Gradients = dict[str, tuple[np.ndarray, np.ndarray]]


class Network:
    """ReLU trunk plus named heads, with exact hand-derived gradients."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        widths = [spec.input_dim, *spec.hidden]
        self.trunk = [DenseLayer(widths[i], widths[i + 1], rng) for i in range(len(spec.hidden))]
        self.heads = {h.name: DenseLayer(widths[-1], h.dim, rng) for h in spec.heads}

    # -- naming and iteration ------------------------------------------------

    def layers(self) -> list[tuple[str, DenseLayer]]:
        named = [(f"trunk{i}", layer) for i, layer in enumerate(self.trunk)]
        named += [(f"head:{h.name}", self.heads[h.name]) for h in self.spec.heads]
        return named

    def parameter_count(self) -> int:
        return sum(layer.parameter_count for _, layer in self.layers())

    def copy(self) -> "Network":
        other = Network(self.spec)
        other.load_state(self.state())
        return other

    def state(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return {name: (layer.weights.copy(), layer.biases.copy()) for name, layer in self.layers()}

    def load_state(self, state: dict[str, tuple[np.ndarray, np.ndarray]]) -> None:
        for name, layer in self.layers():
            w, b = state[name]
            if w.shape != layer.weights.shape or b.shape != layer.biases.shape:
                raise ValueError(f"shape mismatch for layer {name}")
            layer.weights[...] = w
            layer.biases[...] = b

    # -- forward -------------------------------------------------------------

    def forward(self, x: np.ndarray) -> tuple[dict[str, np.ndarray], ForwardCache]:
        """Run the trunk and every head; return outputs and a cache."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        xb = x[None, :] if squeeze else x
        if xb.shape[1] != self.spec.input_dim:
            raise ValueError(
                f"input width {xb.shape[1]} does not match spec input_dim {self.spec.input_dim}"
            )
        cache = ForwardCache(x=xb, squeeze=squeeze)
        a = xb
        for layer in self.trunk:
            z = a @ layer.weights.T + layer.biases
            cache.trunk_pre.append(z)
            a = np.maximum(z, 0.0)
            cache.trunk_post.append(a)
        outputs: dict[str, np.ndarray] = {}
        for h in self.spec.heads:
            z = a @ self.heads[h.name].weights.T + self.heads[h.name].biases
            y = self._activate(h, z)
            cache.head_pre[h.name] = z
            cache.head_post[h.name] = y
            outputs[h.name] = y[0] if squeeze else y
        return outputs, cache

    @staticmethod
    def _activate(head: HeadSpec, z: np.ndarray) -> np.ndarray:
        if head.activation == "linear":
            return z
        if head.activation == "sigmoid":
            return sigmoid(z)
        return softmax(z, head.temperature)

    # -- backward ------------------------------------------------------------

    def backward(self, cache: ForwardCache, head: str, output_gradient: np.ndarray) -> Gradients:
        """Gradients of sum(output_gradient * head_output) w.r.t. parameters.

        Covers the named head's layer and the shared trunk. The gradient is
        exact for the post-activation output, so softmax and sigmoid heads
        chain through their activation Jacobians.
        """
        return self.backward_multi(cache, {head: output_gradient})

    def backward_multi(
        self, cache: ForwardCache, head_gradients: dict[str, np.ndarray]
    ) -> Gradients:
        """Backward for several heads in one trunk pass, gradients summed."""
        grads: Gradients = {}
        trunk_in = cache.trunk_post[-1] if self.trunk else cache.x
        d_trunk_out = np.zeros_like(trunk_in)
        for name, gout in head_gradients.items():
            hspec = self.spec.head(name)
            g = np.asarray(gout, dtype=np.float64)
            if cache.squeeze and g.ndim == 1:
                g = g[None, :]
            y = cache.head_post[name]
            if g.shape != y.shape:
                raise ValueError(f"output gradient shape {g.shape} != head shape {y.shape}")
            dz = self._activation_backward(hspec, y, g)
            layer = self.heads[name]
            grads[f"head:{name}"] = (dz.T @ trunk_in, dz.sum(axis=0))
            d_trunk_out += dz @ layer.weights
        da = d_trunk_out
        for i in range(len(self.trunk) - 1, -1, -1):
            dz = da * (cache.trunk_pre[i] > 0)
            below = cache.trunk_post[i - 1] if i > 0 else cache.x
            grads[f"trunk{i}"] = (dz.T @ below, dz.sum(axis=0))
            da = dz @ self.trunk[i].weights
        return grads

    @staticmethod
    def _activation_backward(head: HeadSpec, y: np.ndarray, gout: np.ndarray) -> np.ndarray:
        if head.activation == "linear":
            return gout
        if head.activation == "sigmoid":
            return gout * y * (1.0 - y)
        # softmax Jacobian: dz_j = y_j * (g_j - sum_i g_i y_i) / T, rowwise
        dot = (gout * y).sum(axis=-1, keepdims=True)
        return y * (gout - dot) / head.temperature

    # -- updates -------------------------------------------------------------

    def apply_gradients(
        self,
        grads: Gradients,
        learning_rate: float,
        direction: str = "descent",
        max_norm: float = GRAD_CLIP_NORM,
    ) -> float:
        """One SGD step; returns the pre-clip global gradient norm.

        The global norm is taken across every array in `grads`; if it
        exceeds `max_norm` all gradients are rescaled by max_norm / norm.
        """
        if direction not in ("descent", "ascent"):
            raise ValueError("direction must be 'descent' or 'ascent'")
        sq = 0.0
        for dw, db in grads.values():
            if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
                raise FloatingPointError("non-finite gradient")
            sq += float((dw * dw).sum() + (db * db).sum())
        norm = float(np.sqrt(sq))
        scale = learning_rate
        if norm > max_norm:
            scale *= max_norm / norm
        if direction == "ascent":
            scale = -scale
        named = dict(self.layers())
        for name, (dw, db) in grads.items():
            layer = named[name]
            layer.weights -= scale * dw
            layer.biases -= scale * db
        return norm


def accumulate_gradients(into: Gradients, new: Gradients) -> Gradients:
    """Sum two gradient dicts in place (into is returned)."""
    for name, (dw, db) in new.items():
        if name in into:
            old_w, old_b = into[name]
            into[name] = (old_w + dw, old_b + db)
        else:
            into[name] = (dw.copy(), db.copy())
    return into


# -- snapshots ----------------------------------------------------------------


def save_params(net: Network, path: str) -> None:
    """Write parameters as: magic, u16 version, then per layer
    (u32 rows, u32 cols, row-major float64 weights, float64 biases),
    all little-endian, layers in trunk-then-heads order."""
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<H", SNAPSHOT_VERSION))
        for _, layer in net.layers():
            rows, cols = layer.weights.shape
            fh.write(struct.pack("<II", rows, cols))
            fh.write(layer.weights.astype("<f8").tobytes(order="C"))
            fh.write(layer.biases.astype("<f8").tobytes(order="C"))


def load_params(net: Network, path: str) -> None:
    """Load a snapshot written by save_params into an existing network.

    Raises ValueError on a bad magic/version or any layer-shape mismatch.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic {magic!r}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        for name, layer in net.layers():
            header = fh.read(8)
            if len(header) != 8:
                raise ValueError("snapshot truncated")
            rows, cols = struct.unpack("<II", header)
            if (rows, cols) != layer.weights.shape:
                raise ValueError(
                    f"layer {name}: snapshot shape {(rows, cols)} != expected {layer.weights.shape}"
                )
            w = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8").reshape(rows, cols)
            b = np.frombuffer(fh.read(rows * 8), dtype="<f8")
            if w.size != rows * cols or b.size != rows:
                raise ValueError("snapshot truncated")
            layer.weights[...] = w
            layer.biases[...] = b
        if fh.read(1):
            raise ValueError("snapshot has trailing bytes")
