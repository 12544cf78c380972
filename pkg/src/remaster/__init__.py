"""Restoration and reference-guided colorization of black-and-white frame sequences."""

__version__ = "0.1.0"

from .tensor import Tensor, no_grad
from .networks import PreprocessNet, RemasterModel, SourceRefNet

__all__ = ["Tensor", "no_grad", "PreprocessNet", "SourceRefNet", "RemasterModel"]
