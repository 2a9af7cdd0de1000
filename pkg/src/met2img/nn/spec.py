"""Declarative network/training configuration and the shape pipeline."""

from dataclasses import dataclass, replace
from enum import Enum

MAX_DEPTH = 5
MAX_WIDTH = 20
KERNEL = 3
POOL = 2


class ConvDim(str, Enum):
    NONE = "none"
    CONV1D = "conv1d"
    CONV2D = "conv2d"


class Head(str, Enum):
    TWO_NODE = "two-node"
    ONE_NODE = "one-node"


class OptimizerKind(str, Enum):
    SGD_MOMENTUM = "sgd"
    ADAM = "adam"


class BuildError(ValueError):
    """Raised when a NetworkSpec cannot be turned into a network."""


@dataclass(frozen=True)
class NetworkSpec:
    conv_dim: ConvDim = ConvDim.CONV2D
    depth: int = 5
    width: int = 20
    head: Head = Head.TWO_NODE
    input_shape: tuple | None = None
    fc_hidden: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "conv_dim", ConvDim(self.conv_dim))
        object.__setattr__(self, "head", Head(self.head))
        if self.input_shape is not None:
            object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if not 0 <= self.depth <= MAX_DEPTH:
            raise BuildError(f"depth must be in 0..{MAX_DEPTH}, got {self.depth}")
        if self.conv_dim is ConvDim.NONE and self.depth != 0:
            raise BuildError("a network without convolutions must have depth 0")
        if self.conv_dim is not ConvDim.NONE:
            if self.depth < 1:
                raise BuildError("convolutional networks need depth >= 1")
            if not 1 <= self.width <= MAX_WIDTH:
                raise BuildError(f"width must be in 1..{MAX_WIDTH}, got {self.width}")
        if self.fc_hidden is not None and self.fc_hidden < 1:
            raise BuildError("fc_hidden must be positive")

    @property
    def arch(self):
        """Short architecture label, e.g. ``conv2d:5:20`` or ``fc``."""
        if self.conv_dim is ConvDim.NONE:
            s = "fc"
        else:
            s = f"{self.conv_dim.value}:{self.depth}:{self.width}"
        if self.fc_hidden:
            s += f"+h{self.fc_hidden}"
        if self.head is Head.ONE_NODE:
            s += ":one-node"
        return s

    def with_input(self, shape):
        return replace(self, input_shape=tuple(shape))


def parse_arch(text, head=Head.TWO_NODE, fc_hidden=None):
    """Parse ``conv2d:5:20``, ``conv1d:2:20`` or ``fc`` into a NetworkSpec.

    A trailing ``:one-node`` / ``:two-node`` overrides ``head``.
    """
    parts = [p.strip().lower() for p in str(text).split(":") if p.strip()]
    if parts and parts[-1] in (Head.ONE_NODE.value, Head.TWO_NODE.value):
        head = Head(parts.pop())
    if parts == ["fc"] or parts == ["none"]:
        return NetworkSpec(ConvDim.NONE, 0, 1, head, None, fc_hidden)
    if len(parts) != 3 or parts[0] not in ("conv1d", "conv2d"):
        raise BuildError(f"invalid architecture string {text!r}; expected conv1d:D:W, conv2d:D:W or fc")
    try:
        depth, width = int(parts[1]), int(parts[2])
    except ValueError:
        raise BuildError(f"invalid architecture string {text!r}; depth and width must be integers") from None
    return NetworkSpec(ConvDim(parts[0]), depth, width, head, None, fc_hidden)


def shape_trace(spec):
    """List of ``(layer_name, output_shape)`` for one sample (no batch axis).

    The first convolution is SAME-padded; later ones are VALID, followed by a
    single 2-wide stride-2 max-pool. Raises BuildError at the first layer
    whose output would have a non-positive dimension.
    """
    if spec.input_shape is None:
        raise BuildError("NetworkSpec has no input_shape")
    shape = tuple(spec.input_shape)
    trace = [("input", shape)]
    if spec.conv_dim is ConvDim.CONV2D and len(shape) != 3:
        raise BuildError(f"conv2d expects (channels, height, width) input, got {shape}")
    if spec.conv_dim is ConvDim.CONV1D and len(shape) != 2:
        raise BuildError(f"conv1d expects (channels, length) input, got {shape}")
    if min(shape) < 1:
        raise BuildError(f"input shape {shape} has a non-positive dimension")

    spatial = list(shape[1:])
    for i in range(spec.depth):
        name = f"conv{i + 1}"
        if i > 0:
            spatial = [s - (KERNEL - 1) for s in spatial]
        if min(spatial) < 1:
            raise BuildError(f"layer {name} reduces spatial size to {spatial}")
        trace.append((name, (spec.width, *spatial)))
    if spec.depth:
        spatial = [s // POOL for s in spatial]
        if min(spatial) < 1:
            raise BuildError(f"layer maxpool reduces spatial size to {spatial}")
        trace.append(("maxpool", (spec.width, *spatial)))

    flat = 1
    for s in trace[-1][1]:
        flat *= s
    trace.append(("flatten", (flat,)))
    if spec.fc_hidden:
        trace.append(("fc_hidden", (spec.fc_hidden,)))
    n_out = 2 if spec.head is Head.TWO_NODE else 1
    trace.append(("fc", (n_out,)))
    return trace


def fc_input_size(spec):
    return dict(shape_trace(spec))["flatten"][0]


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 16
    momentum: float = 0.1
    weight_decay: float = 1e-5
    learning_rate: float = 5e-4
    epochs: int = 200
    optimizer: OptimizerKind | None = None
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer is not None:
            object.__setattr__(self, "optimizer", OptimizerKind(self.optimizer))
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def optimizer_for(self, head):
        """Explicit optimizer, else SGD for the two-node head and Adam for one-node."""
        if self.optimizer is not None:
            return self.optimizer
        return OptimizerKind.SGD_MOMENTUM if Head(head) is Head.TWO_NODE else OptimizerKind.ADAM
