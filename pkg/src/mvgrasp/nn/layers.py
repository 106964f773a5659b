"""Stateful layer wrappers around :mod:`mvgrasp.nn.functional`.

Each layer keeps its trainable arrays in ``params`` and the matching
gradients in ``grads`` after ``backward``.  ``forward`` caches what the
backward pass needs; a layer is therefore not re-entrant during training.
"""

import numpy as np

from . import functional as F


def he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Layer:
    params: dict
    grads: dict

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def buffers(self):
        """Non-trainable state stored alongside parameters in weight files."""
        return {}


class Conv2D(Layer):
    def __init__(self, in_ch, out_ch, kernel, stride=1, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        self.stride = stride
        self.params = {
            "w": he_uniform(rng, (out_ch, in_ch, kh, kw), in_ch * kh * kw, dtype),
            "b": np.zeros(out_ch, dtype=dtype),
        }
        self.grads = {}
        self._x = None

    def forward(self, x, train=False):
        self._x = x if train else None
        return F.conv2d(x, self.params["w"], self.params["b"], self.stride)

    def backward(self, grad_out):
        gx, gw, gb = F.conv2d_backward(grad_out, self._x, self.params["w"], self.stride)
        self.grads = {"w": gw, "b": gb}
        return gx


class ConvTranspose2D(Layer):
    def __init__(self, in_ch, out_ch, kernel, stride=1, rng=None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else kernel
        self.stride = stride
        # each output pixel receives about in_ch * kh * kw / stride**2 terms
        fan_in = max(in_ch * kh * kw / (stride * stride), 1.0)
        self.params = {
            "w": he_uniform(rng, (in_ch, out_ch, kh, kw), fan_in, dtype),
            "b": np.zeros(out_ch, dtype=dtype),
        }
        self.grads = {}
        self._x = None

    def forward(self, x, train=False):
        self._x = x if train else None
        return F.tconv2d(x, self.params["w"], self.params["b"], self.stride)

    def backward(self, grad_out):
        gx, gw, gb = F.tconv2d_backward(grad_out, self._x, self.params["w"], self.stride)
        self.grads = {"w": gw, "b": gb}
        return gx


class BatchNorm2D(Layer):
    def __init__(self, channels, momentum=0.99, eps=1e-3, dtype=np.float32):
        self.eps = eps
        self.params = {
            "gamma": np.ones(channels, dtype=dtype),
            "beta": np.zeros(channels, dtype=dtype),
        }
        self.stats = F.RunningStats(channels, momentum, dtype)
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False):
        p = self.params
        mode = "train" if train else "infer"
        out, self._cache = F.batch_norm(x, p["gamma"], p["beta"], mode, self.stats, self.eps)
        return out

    def backward(self, grad_out):
        gx, gg, gb = F.batch_norm_backward(grad_out, self._cache, self.params["gamma"])
        self.grads = {"gamma": gg, "beta": gb}
        return gx

    def buffers(self):
        return {"running_mean": self.stats.mean, "running_var": self.stats.var}


class ReLU(Layer):
    def __init__(self):
        self.params = {}
        self.grads = {}
        self._x = None

    def forward(self, x, train=False):
        self._x = x if train else None
        return F.relu(x)

    def backward(self, grad_out):
        return F.relu_backward(grad_out, self._x)
