from met2img.nn.network import Network, build, feature_maps, loss, loss_grad, predictions
from met2img.nn.optim import adam_step, sgd_step
from met2img.nn.spec import (
    BuildError,
    ConvDim,
    Head,
    NetworkSpec,
    OptimizerKind,
    TrainingConfig,
    fc_input_size,
    parse_arch,
    shape_trace,
)
from met2img.nn.train import train

__all__ = [
    "BuildError", "ConvDim", "Head", "Network", "NetworkSpec", "OptimizerKind", "TrainingConfig",
    "adam_step", "build", "fc_input_size", "feature_maps", "loss", "loss_grad", "parse_arch",
    "predictions", "sgd_step", "shape_trace", "train",
]
