"""The grasp network: six strided convs, six transposed convs, three 1x1 heads.

Every trunk layer is followed by batch normalization and ReLU.  The heads are
linear: quality (1 channel), rotation encoded as (sin 2phi, cos 2phi) and
normalized gripper width (1 channel).  Output channel order is
``[Q, sin2phi, cos2phi, W]``.
"""

from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import ShapeError, SpecError, StateError
from .nn import BatchNorm2D, Conv2D, ConvTranspose2D, LayerSpec, ReLU, param_count
from .nn.functional import check_finite

OUTPUT_CHANNELS = ("quality", "sin2phi", "cos2phi", "width")


def _conv(k, c, s=1):
    return LayerSpec("conv", (k, k), c, s)


def _tconv(k, c, s=1):
    return LayerSpec("tconv", (k, k), c, s)


DEFAULT_ENCODER = (
    _conv(9, 8, 3),
    _conv(5, 16, 2),
    _conv(5, 16, 2),
    _conv(3, 32),
    _conv(3, 32),
    _conv(3, 32),
)
DEFAULT_DECODER = (
    _tconv(3, 32),
    _tconv(3, 32),
    _tconv(3, 32),
    _tconv(5, 16, 2),
    _tconv(5, 32, 2),
    _tconv(9, 32, 3),
)
DEFAULT_HEADS = (("quality", 1), ("rotation", 2), ("width", 1))


@dataclass(frozen=True)
class NetworkSpec:
    encoder: tuple = DEFAULT_ENCODER
    decoder: tuple = DEFAULT_DECODER
    heads: tuple = DEFAULT_HEADS
    in_channels: int = 1
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3
    # linear heads start near zero output; full He scale stalls Adam at lr 1e-3
    head_init_scale: float = 0.1

    def __post_init__(self):
        if any(s.kind != "conv" for s in self.encoder) or any(s.kind != "tconv" for s in self.decoder):
            raise SpecError("encoder must hold conv layers and decoder tconv layers")
        down = prod(s.stride for s in self.encoder)
        up = prod(s.stride for s in self.decoder)
        if down != up:
            raise SpecError(f"encoder stride product {down} != decoder stride product {up}")
        if sum(c for _, c in self.heads) != len(OUTPUT_CHANNELS):
            raise SpecError("heads must produce exactly quality, sin/cos and width channels")

    @property
    def stride_product(self):
        return prod(s.stride for s in self.encoder)

    def check_input(self, h, w):
        f = self.stride_product
        if h <= 0 or w <= 0 or h % f or w % f:
            raise SpecError(f"input {h}x{w} must be positive and divisible by {f}")

    def param_count(self):
        trunk = []
        for s in self.encoder + self.decoder:
            trunk += [s, LayerSpec("batchnorm"), LayerSpec("relu")]
        width = self.decoder[-1].channels_out
        heads = sum(param_count([_conv(1, c)], in_channels=width) for _, c in self.heads)
        return param_count(trunk, self.in_channels) + heads


class Network:
    """Encoder-decoder grasp network with explicit forward/backward passes."""

    def __init__(self, spec=None, seed=0, dtype=np.float32):
        self.spec = spec or NetworkSpec()
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        self.blocks = []
        ch = self.spec.in_channels
        for prefix, layers in (("enc", self.spec.encoder), ("dec", self.spec.decoder)):
            for i, s in enumerate(layers, 1):
                cls = Conv2D if s.kind == "conv" else ConvTranspose2D
                conv = cls(ch, s.channels_out, s.kernel, s.stride, rng=rng, dtype=self.dtype)
                bn = BatchNorm2D(s.channels_out, self.spec.bn_momentum, self.spec.bn_eps, self.dtype)
                self.blocks.append((f"{prefix}{i}", conv, bn, ReLU()))
                ch = s.channels_out
        self.heads = [
            (f"head_{name}", Conv2D(ch, c, 1, 1, rng=rng, dtype=self.dtype)) for name, c in self.spec.heads
        ]
        for _, head in self.heads:
            head.params["w"] *= self.dtype.type(self.spec.head_init_scale)

    # ------------------------------------------------------------ parameters

    def _named_layers(self):
        for name, conv, bn, _ in self.blocks:
            yield f"{name}.conv", conv
            yield f"{name}.bn", bn
        for name, head in self.heads:
            yield name, head

    def parameters(self):
        """Trainable arrays keyed by dotted name (live references)."""
        return {f"{ln}.{k}": v for ln, layer in self._named_layers() for k, v in layer.params.items()}

    def gradients(self):
        return {f"{ln}.{k}": v for ln, layer in self._named_layers() for k, v in layer.grads.items()}

    def state_dict(self):
        state = self.parameters()
        for ln, layer in self._named_layers():
            for k, v in layer.buffers().items():
                state[f"{ln}.{k}"] = v
        return state

    def load_state_dict(self, state):
        own = self.state_dict()
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ShapeError(f"state mismatch: missing {sorted(missing)[:3]}, unexpected {sorted(extra)[:3]}")
        for k, v in state.items():
            if own[k].shape != v.shape:
                raise ShapeError(f"{k}: shape {v.shape} != expected {own[k].shape}")
            own[k][...] = v
        for _, _, bn, _ in self.blocks:
            bn.stats.initialized = True

    @property
    def num_parameters(self):
        return sum(v.size for v in self.parameters().values())

    @property
    def ready_for_inference(self):
        return all(bn.stats.initialized for _, _, bn, _ in self.blocks)

    # ------------------------------------------------------------ passes

    def forward(self, x, train=False):
        """(N, 1, H, W) -> (N, 4, H, W) raw head outputs."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None, None]
        if x.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeError(f"expected (N, {self.spec.in_channels}, H, W) input, got {x.shape}")
        self.spec.check_input(x.shape[2], x.shape[3])
        if not train and not self.ready_for_inference:
            raise StateError("running statistics are not initialized; train or load weights first")
        for _, conv, bn, act in self.blocks:
            x = act.forward(bn.forward(conv.forward(x, train), train), train)
        out = np.concatenate([head.forward(x, train) for _, head in self.heads], axis=1)
        return check_finite(out, "network forward")

    def backward(self, grad_out):
        grad = None
        start = 0
        for _, head in self.heads:
            c = head.params["b"].size
            g = head.backward(np.ascontiguousarray(grad_out[:, start : start + c]))
            grad = g if grad is None else grad + g
            start += c
        for _, conv, bn, act in reversed(self.blocks):
            grad = conv.backward(bn.backward(act.backward(grad)))
        return grad


def build_network(spec=None, seed=0, dtype=np.float32, input_shape=None):
    """Construct and seed a network; ``input_shape`` (h, w) is validated if given."""
    spec = spec or NetworkSpec()
    if input_shape is not None:
        spec.check_input(*input_shape)
    return Network(spec, seed=seed, dtype=dtype)


META_PREFIX = "meta."


def save_network(net, path, meta=None):
    """Write weights, running statistics and scalar metadata (``meta.*`` tensors)."""
    from .nn.weights import save_weights

    tensors = dict(net.state_dict())
    for k, v in (meta or {}).items():
        tensors[META_PREFIX + k] = np.array([v], dtype=np.float32)
    save_weights(tensors, path)


def load_network(path, spec=None, dtype=np.float32):
    """Inverse of :func:`save_network`; returns ``(net, meta)``."""
    from .nn.weights import load_weights

    tensors = load_weights(path)
    meta = {k[len(META_PREFIX) :]: float(v[0]) for k, v in tensors.items() if k.startswith(META_PREFIX)}
    state = {k: v for k, v in tensors.items() if not k.startswith(META_PREFIX)}
    net = Network(spec, seed=0, dtype=dtype)
    net.load_state_dict(state)
    return net, meta
