from dataclasses import dataclass

from ..errors import SpecError

KINDS = ("conv", "tconv", "batchnorm", "relu")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: tuple = (1, 1)
    channels_out: int = 0
    stride: int = 1
    padding: str = "same"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kind in ("conv", "tconv"):
            if self.stride not in (1, 2, 3):
                raise SpecError(f"stride must be 1, 2 or 3, got {self.stride}")
            if self.padding != "same":
                raise SpecError("only 'same' padding is supported")
            if self.channels_out < 1:
                raise SpecError("conv layers need channels_out >= 1")


def param_count(layers, in_channels=1):
    """Trainable element count (weights, biases, gamma, beta) of a layer stack.

    ``layers`` is a sequence of :class:`LayerSpec`; batchnorm and relu take
    their width from the preceding layer.
    """
    total = 0
    ch = in_channels
    for spec in layers:
        if spec.kind in ("conv", "tconv"):
            kh, kw = spec.kernel
            total += kh * kw * ch * spec.channels_out + spec.channels_out
            ch = spec.channels_out
        elif spec.kind == "batchnorm":
            # channels_out may pin the width explicitly for a standalone layer
            if spec.channels_out:
                ch = spec.channels_out
            total += 2 * ch
    return total
