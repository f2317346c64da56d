"""From-scratch MLPs, Adam and soft actor-critic."""

from .nn import MLP, Adam, grad_check
from .sac import ReplayBuffer, SACConfig, SACLearner, SquashedGaussianPolicy
from .train import EvalResult, TrainConfig, TrainResult, evaluate, train

__all__ = ["MLP", "Adam", "grad_check", "ReplayBuffer", "SACConfig", "SACLearner",
           "SquashedGaussianPolicy", "TrainConfig", "TrainResult", "EvalResult", "evaluate", "train"]
