from .autodiff import Tensor, concatenate, matmul, maximum, minimum, softmax, stop_gradient, where

__all__ = [
    "Tensor",
    "concatenate",
    "matmul",
    "maximum",
    "minimum",
    "softmax",
    "stop_gradient",
    "where",
]
