"""Dense network core: forward pass, reverse-mode gradients, Adam and serialization.

Checkpoint layout (little-endian):
    magic    4 bytes  b"SBNN"
    version  uint32
    n_widths uint32, then n_widths x uint32 layer widths
    n_widths - 1 x uint8 activation tags
    float64 parameters, per layer W (row-major, in x out) followed by b
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from slicebench.core.domain.enums import Activation
from slicebench.core.domain.exceptions import CheckpointFormatError, ShapeMismatchError

logger = logging.getLogger(__name__)

MAGIC = b"SBNN"
FORMAT_VERSION = 1

_ACTIVATION_TAGS = {
    Activation.LINEAR: 0,
    Activation.RELU: 1,
    Activation.GELU: 2,
    Activation.TANH: 3,
}
_TAG_ACTIVATIONS = {tag: act for act, tag in _ACTIVATION_TAGS.items()}

# GELU tanh approximation: 0.5 x (1 + tanh(k (x + c x^3)))
_GELU_K = np.sqrt(2.0 / np.pi)
_GELU_C = 0.044715


def _activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.LINEAR:
        return z
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    return 0.5 * z * (1.0 + np.tanh(_GELU_K * (z + _GELU_C * z**3)))


def _activation_grad(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.LINEAR:
        return np.ones_like(z)
    if kind is Activation.RELU:
        return (z > 0).astype(np.float64)
    if kind is Activation.TANH:
        return 1.0 - np.tanh(z) ** 2
    t = np.tanh(_GELU_K * (z + _GELU_C * z**3))
    return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t**2) * _GELU_K * (1.0 + 3.0 * _GELU_C * z**2)


@dataclass
class Mlp:
    """Fully connected network with per-layer activations."""

    widths: tuple[int, ...]
    activations: tuple[Activation, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.widths) < 1 or any(w < 1 for w in self.widths):
            raise ShapeMismatchError(f"invalid layer widths {self.widths}")
        n_layers = len(self.widths) - 1
        if not (len(self.activations) == len(self.weights) == len(self.biases) == n_layers):
            raise ShapeMismatchError("one activation, weight and bias per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[i], self.widths[i + 1]) or b.shape != (self.widths[i + 1],):
                raise ShapeMismatchError(f"layer {i} parameters do not match widths {self.widths}")

    @classmethod
    def create(
        cls,
        input_size: int,
        hidden_sizes: Sequence[int],
        output_size: int,
        activation: Activation,
        rng: np.random.Generator,
        output_activation: Activation = Activation.LINEAR,
    ) -> "Mlp":
        """Build a network with uniform fan-in initialization.

        Args:
            input_size: Input width
            hidden_sizes: Hidden layer widths
            output_size: Output width
            activation: Hidden nonlinearity
            rng: Initialization generator
            output_activation: Output nonlinearity

        Returns:
            Freshly initialized network
        """
        widths = (input_size, *hidden_sizes, output_size)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        activations = tuple([Activation(activation)] * len(hidden_sizes) + [output_activation])
        return cls(widths=widths, activations=activations, weights=weights, biases=biases)

    @classmethod
    def identity(cls, width: int) -> "Mlp":
        """Zero-depth network mapping x to itself."""
        return cls(widths=(width,), activations=(), weights=[], biases=[])

    @property
    def input_size(self) -> int:
        return self.widths[0]

    @property
    def output_size(self) -> int:
        return self.widths[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in layer order: W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params

    def copy(self) -> "Mlp":
        return Mlp(
            widths=self.widths,
            activations=self.activations,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def flat(self) -> np.ndarray:
        """All parameters as one vector."""
        if not self.weights:
            return np.zeros(0)
        return np.concatenate([p.ravel() for p in self.parameters()])

    def load_flat(self, vector: np.ndarray) -> None:
        """Overwrite parameters in place from a flat vector."""
        if vector.shape != (self.n_params,):
            raise ShapeMismatchError(f"expected {self.n_params} parameters, got {vector.shape}")
        offset = 0
        for p in self.parameters():
            p[...] = vector[offset : offset + p.size].reshape(p.shape)
            offset += p.size

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)[0]


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations recorded by forward."""

    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    squeezed: bool = False


def forward(net: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate the network on a vector or a batch of row vectors.

    Args:
        net: Network
        x: Input of shape (in,) or (B, in)

    Returns:
        (output, cache for backward)

    Raises:
        ShapeMismatchError: If x does not match the input width
    """
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    h = x[None, :] if squeezed else x
    if h.ndim != 2 or h.shape[1] != net.input_size:
        raise ShapeMismatchError(f"input shape {x.shape} does not match width {net.input_size}")

    cache = ForwardCache(squeezed=squeezed)
    for w, b, kind in zip(net.weights, net.biases, net.activations):
        z = h @ w + b
        cache.inputs.append(h)
        cache.preacts.append(z)
        h = _activate(kind, z)
    return (h[0] if squeezed else h), cache


def backward(
    net: Mlp, cache: ForwardCache, grad_out: np.ndarray
) -> tuple[list[np.ndarray], np.ndarray]:
    """Reverse-mode gradients of sum(grad_out * output).

    Gradients are summed over batch rows; callers fold in any 1/B factor.

    Args:
        net: Network used in the matching forward
        cache: Cache returned by forward
        grad_out: Upstream gradient with the output's shape

    Returns:
        (parameter gradients in net.parameters() order, input gradient)
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if cache.squeezed:
        g = g[None, :]
    expected = (cache.inputs[0].shape[0], net.output_size) if cache.inputs else None
    if expected is not None and g.shape != expected:
        raise ShapeMismatchError(f"output gradient shape {g.shape} != {expected}")

    grads: list[np.ndarray] = [np.empty(0)] * (2 * len(net.weights))
    for i in reversed(range(len(net.weights))):
        dz = g * _activation_grad(net.activations[i], cache.preacts[i])
        grads[2 * i] = cache.inputs[i].T @ dz
        grads[2 * i + 1] = dz.sum(axis=0)
        g = dz @ net.weights[i].T
    return grads, (g[0] if cache.squeezed else g)


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    """Polyak blend target <- tau * source + (1 - tau) * target, in place."""
    for t, s in zip(target.parameters(), source.parameters()):
        t *= 1.0 - tau
        t += tau * s


def grads_finite(grads: Sequence[np.ndarray]) -> bool:
    return all(np.all(np.isfinite(g)) for g in grads)


def grad_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


@dataclass
class AdamState:
    """Bias-corrected Adam moments for one network."""

    lr: float
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp, lr: float) -> "AdamState":
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in net.parameters()],
            v=[np.zeros_like(p) for p in net.parameters()],
        )

    def copy(self) -> "AdamState":
        return AdamState(
            lr=self.lr,
            m=[a.copy() for a in self.m],
            v=[a.copy() for a in self.v],
            step=self.step,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
        )


def adam_step(net: Mlp, grads: Sequence[np.ndarray], state: AdamState) -> None:
    """Apply one Adam descent step to the network parameters in place.

    Args:
        net: Network to update
        grads: Gradients in net.parameters() order
        state: Optimizer state, advanced by one step
    """
    params = net.parameters()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ShapeMismatchError("gradients do not match network parameters")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)


def dumps(net: Mlp) -> bytes:
    """Serialize a network to the versioned binary layout."""
    header = MAGIC + struct.pack("<II", FORMAT_VERSION, len(net.widths))
    header += struct.pack(f"<{len(net.widths)}I", *net.widths)
    header += bytes(_ACTIVATION_TAGS[a] for a in net.activations)
    return header + net.flat().astype("<f8").tobytes()


def loads(blob: bytes) -> Mlp:
    """Deserialize a network written by dumps.

    Raises:
        CheckpointFormatError: On bad magic, unsupported version or truncated data
    """
    if blob[:4] != MAGIC:
        raise CheckpointFormatError("not a network checkpoint (bad magic)")
    try:
        version, n_widths = struct.unpack_from("<II", blob, 4)
        if version != FORMAT_VERSION:
            raise CheckpointFormatError(f"unsupported network format version {version}")
        offset = 12
        widths = struct.unpack_from(f"<{n_widths}I", blob, offset)
        offset += 4 * n_widths
        tags = blob[offset : offset + n_widths - 1]
        offset += n_widths - 1
        activations = tuple(_TAG_ACTIVATIONS[t] for t in tags)
    except (struct.error, KeyError) as e:
        raise CheckpointFormatError(f"corrupt network header: {e}") from e

    try:
        net = Mlp(
            widths=tuple(widths),
            activations=activations,
            weights=[np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])],
            biases=[np.zeros(b) for b in widths[1:]],
        )
    except ShapeMismatchError as e:
        raise CheckpointFormatError(f"corrupt network header: {e}") from e
    payload = len(blob) - offset
    if payload != 8 * net.n_params:
        raise CheckpointFormatError(
            f"expected {net.n_params} parameters, found {payload / 8:g}"
        )
    values = np.frombuffer(blob, dtype="<f8", offset=offset)
    net.load_flat(values.astype(np.float64))
    return net


def save(net: Mlp, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(net))
    return path


def load(path: Union[str, Path]) -> Mlp:
    return loads(Path(path).read_bytes())
