from .agent import (OBS_FEATURES, PolicyController, PolicyModel, TrainConfig, TrainLog, Transition,
                    a2c_gradients, a2c_update, init_model, observe, run_rl_episode, select_action, softmax,
                    train)
from .mlp import MlpParams, backward, forward, init_mlp, zeros_mlp
from .model_io import load_model, model_bytes, model_from_bytes, save_model

__all__ = [
    "OBS_FEATURES", "PolicyController", "PolicyModel", "TrainConfig", "TrainLog", "Transition",
    "a2c_gradients", "a2c_update", "init_model", "observe", "run_rl_episode", "select_action",
    "softmax", "train", "MlpParams", "backward", "forward", "init_mlp", "zeros_mlp",
    "load_model", "model_bytes", "model_from_bytes", "save_model",
]
