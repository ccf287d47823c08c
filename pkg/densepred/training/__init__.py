# Re-export from config
from .config import TrainConfig, lr_at_step

# Re-export from optim
from .optim import TrainState, sgd_update

# Re-export from loop
from .loop import (
    TrainResult,
    train,
    train_phase1,
    train_phase2,
    batch_loss,
    draw_batch,
    targets_on_grid,
    save_training_checkpoint,
    load_training_checkpoint,
    write_loss_curve,
    read_loss_curve,
)

# Re-export from evaluate
from .evaluate import GroundTruthEcho, evaluate


__all__ = [
    "TrainConfig",
    "lr_at_step",
    "TrainState",
    "sgd_update",
    "TrainResult",
    "train",
    "train_phase1",
    "train_phase2",
    "batch_loss",
    "draw_batch",
    "targets_on_grid",
    "save_training_checkpoint",
    "load_training_checkpoint",
    "write_loss_curve",
    "read_loss_curve",
    "GroundTruthEcho",
    "evaluate",
]
