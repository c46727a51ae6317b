from .tensor import (
    EngineError,
    Param,
    ShapeError,
    Tensor,
    add,
    avgpool1d,
    backward,
    concat,
    conv1d,
    dropout,
    matmul,
    maxpool1d,
    mse_loss,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    slice_,
    sub,
    sum_,
    tanh_,
)
from .optim import Adam, AdamState, adam_step, init_adam_state
from .checkpoint import load_checkpoint, restore, save_checkpoint

__all__ = [
    "Adam",
    "AdamState",
    "EngineError",
    "Param",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "avgpool1d",
    "backward",
    "concat",
    "conv1d",
    "dropout",
    "init_adam_state",
    "load_checkpoint",
    "matmul",
    "maxpool1d",
    "mse_loss",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "restore",
    "save_checkpoint",
    "sigmoid",
    "slice_",
    "sub",
    "sum_",
    "tanh_",
]
