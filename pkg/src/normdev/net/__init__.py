"""From-scratch 3D convolutional residual regressor with exact gradients."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import gradient_check
from .model import ModelState, init_params, mse_loss, mse_loss_and_grad, net_forward
from .optim import AdamState, TrainConfig, adam_step
from .spec import ConvSpec, NetSpec, StageSpec, build_plan, make_spec
from .train import TrainResult, train_regressor

__all__ = [
    "AdamState",
    "ConvSpec",
    "ModelState",
    "NetSpec",
    "StageSpec",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "build_plan",
    "gradient_check",
    "init_params",
    "load_checkpoint",
    "make_spec",
    "mse_loss",
    "mse_loss_and_grad",
    "net_forward",
    "save_checkpoint",
    "train_regressor",
]
