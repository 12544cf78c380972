"""Parameter containers and the convolution building block.

``Module`` gives hierarchical parameter/buffer naming by reflecting over
attributes; names double as checkpoint keys.
"""

import math

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """Base class: anything holding parameters, buffers, or child modules."""

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def named_buffers(self, prefix=""):
        for name, value in vars(self).items():
            path = f"{prefix}{name}"
            if isinstance(value, ops.BatchNormState):
                yield f"{path}.mean", value.mean
                yield f"{path}.var", value.var
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{path}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{path}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_state(self):
        """Parameters plus running statistics, as name -> ndarray."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(dict(self.named_buffers()))
        return state

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def parameter_count(self):
        return sum(p.size for p in self.parameters())


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class ConvLayer(Module):
    """Convolution, optionally followed by batch norm and an activation.

    Weights start Kaiming-uniform (fan-in), biases at zero, norm at
    scale 1 / shift 0.
    """

    def __init__(self, in_ch, out_ch, kernel=(3, 3, 3), stride=(1, 1, 1),
                 padding="zero", norm=True, act="elu", rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = ops.ConvSpec(kernel, stride, padding, in_ch, out_ch)
        fan_in = in_ch * kernel[0] * kernel[1] * kernel[2]
        self.weight = Tensor(
            kaiming_uniform(rng, (out_ch, in_ch) + tuple(kernel), fan_in, dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)
        self.norm = norm
        if norm:
            self.scale = Tensor(np.ones(out_ch, dtype=dtype), requires_grad=True)
            self.shift = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)
            self.bn = ops.BatchNormState(out_ch, dtype=dtype)
        self.act = act

    def forward(self, x, training=False):
        y = ops.conv3d(x, self.weight, self.bias, self.spec)
        if self.norm:
            y = ops.batch_norm(y, self.scale, self.shift, self.bn, training)
        if self.act is not None:
            y = ops.activation(y, self.act)
        return y

    __call__ = forward


def spatial(in_ch, out_ch, stride=1, **kw):
    """1x3x3 convolution layer; stride applies to the spatial axes."""
    return ConvLayer(in_ch, out_ch, kernel=(1, 3, 3), stride=(1, stride, stride), **kw)


def temporal(in_ch, out_ch, stride=1, **kw):
    """3x3x3 convolution layer; stride applies to the spatial axes."""
    return ConvLayer(in_ch, out_ch, kernel=(3, 3, 3), stride=(1, stride, stride), **kw)
