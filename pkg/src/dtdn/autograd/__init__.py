"""Minimal reverse-mode autodiff: tensors, conv layers, Adam, grad checks."""
from .gradcheck import GradCheckReport, finite_diff_check
from .params import Adam, ParamSet, conv_params, glorot_uniform, linear_params
from .tensor import (
    Tensor, activation, add, clamp, concat, conv2d, leaky_relu, log, matmul, mean,
    mul, no_grad, norm, relu, reshape, sigmoid, square, tanh, tsum,
)

__all__ = [
    "Adam", "GradCheckReport", "ParamSet", "Tensor", "activation", "add", "clamp",
    "concat", "conv2d", "conv_params", "finite_diff_check", "glorot_uniform",
    "leaky_relu", "linear_params", "log", "matmul", "mean", "mul", "no_grad", "norm", "relu",
    "reshape", "sigmoid", "square", "tanh", "tsum",
]
