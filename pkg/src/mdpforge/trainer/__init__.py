"""Inner-loop RL: PPO actor-critic, evaluation and fitness."""

from .nets import PolicySpec, act, action_probs, gaussian_log_prob, init_params, value
from .ppo import Adam, Batch, LossConfig, NonFiniteLoss, compute_gae, loss_and_grad, ppo_update
from .train import (
    FitnessResult,
    TrainConfig,
    TrainConfigError,
    TrainDiagnostics,
    TrainResult,
    detect_plateau,
    evaluate,
    fitness,
    train,
)

__all__ = [
    "Adam",
    "Batch",
    "FitnessResult",
    "LossConfig",
    "NonFiniteLoss",
    "PolicySpec",
    "TrainConfig",
    "TrainConfigError",
    "TrainDiagnostics",
    "TrainResult",
    "act",
    "action_probs",
    "compute_gae",
    "detect_plateau",
    "evaluate",
    "fitness",
    "gaussian_log_prob",
    "init_params",
    "loss_and_grad",
    "ppo_update",
    "train",
    "value",
]
