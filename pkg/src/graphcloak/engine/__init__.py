from .checkpoint import load_checkpoint, params_digest, save_checkpoint
from .model import (
    ARCHS,
    Batch,
    EngineError,
    GnnModel,
    GradientBundle,
    Gradients,
    StaleCacheError,
    backward,
    backward_graph,
    cross_entropy,
    forward,
    forward_graph,
    init_model,
    loss,
    loss_and_grad,
)
from .optim import Adam, ReduceLROnPlateau
from .training import History, TrainConfig, evaluate, predict_logits, train

__all__ = [
    "ARCHS", "Adam", "Batch", "EngineError", "GnnModel", "GradientBundle", "Gradients", "History",
    "ReduceLROnPlateau", "StaleCacheError", "TrainConfig", "backward", "backward_graph",
    "cross_entropy", "evaluate", "forward", "forward_graph", "init_model", "load_checkpoint", "loss",
    "loss_and_grad", "params_digest", "predict_logits", "save_checkpoint", "train",
]
