"""Minimal reverse-mode neural core in numpy."""

from .checkpoint import checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint
from .core import DTYPE, Module, Param
from .gradcheck import GradCheckReport, check_scalar_function, gradient_check
from .layers import BiLSTM, Conv1d, Embedding, Linear, LSTM, ReLU, Sequential, Tanh, conv_stack
from .losses import l1, log_softmax, mse, sigmoid, sigmoid_bce, softmax, softmax_cross_entropy
from .optim import Adam, AdamState, LrSchedule, adam_step, lr_at

__all__ = [
    "Adam", "AdamState", "BiLSTM", "Conv1d", "DTYPE", "Embedding", "GradCheckReport",
    "LSTM", "Linear", "LrSchedule", "Module", "Param", "ReLU", "Sequential", "Tanh",
    "adam_step", "check_scalar_function", "checkpoint_bytes", "parse_checkpoint", "conv_stack", "gradient_check", "l1",
    "load_checkpoint", "log_softmax", "lr_at", "mse", "save_checkpoint", "sigmoid",
    "sigmoid_bce", "softmax", "softmax_cross_entropy",
]
