"""Forward and backward kernels for the layer set used by the grasp network.

Tensors are numpy arrays in (N, C, H, W) layout.  Convolution weights are
(C_out, C_in, kh, kw); transposed-convolution weights are (C_in, C_out, kh, kw),
so that ``tconv2d(y, w)`` is the adjoint of ``conv2d(., w)`` read with the
roles of the channel axes swapped.

"Same" padding: a stride-s convolution maps n pixels to ceil(n / s); a
transposed convolution maps n pixels to n * s.  When the total padding is odd
the extra row/column goes on the high side.
"""

import numpy as np

from .. import _kernels
from ..errors import NumericError, ShapeError, StateError


def same_padding(n, k, s):
    """Return (out, pad_lo, pad_hi) for a same-padded conv over n pixels."""
    out = -(-n // s)
    total = max((out - 1) * s + k - n, 0)
    return out, total // 2, total - total // 2


def check_finite(x, where):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values produced by {where}")
    return x


def _conv_geometry(h, w, kh, kw, stride):
    ho, pt, pb = same_padding(h, kh, stride)
    wo, pl, pr = same_padding(w, kw, stride)
    return ho, wo, (pt, pb, pl, pr)


def _pad(x, pads):
    pt, pb, pl, pr = pads
    if not any(pads):
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))


def _unpad(xp, pads, h, w):
    pt, _, pl, _ = pads
    return xp[:, :, pt : pt + h, pl : pl + w]


def _patches(x, kh, kw, stride):
    """im2col over a same-padded input; returns (cols[N, K, P], ho, wo, pads)."""
    n, c, h, w = x.shape
    ho, wo, pads = _conv_geometry(h, w, kh, kw, stride)
    cols = _kernels.im2col(_pad(x, pads), kh, kw, stride, ho, wo)
    return cols.reshape(n, c * kh * kw, ho * wo), ho, wo, pads


def _scatter(dcols, shape, kh, kw, stride):
    """col2im: adjoint of ``_patches`` for an input of ``shape``."""
    n, c, h, w = shape
    ho, wo, pads = _conv_geometry(h, w, kh, kw, stride)
    pt, pb, pl, pr = pads
    cols = dcols.reshape(n, c, kh, kw, ho, wo)
    xp = _kernels.col2im(cols, h + pt + pb, w + pl + pr, stride)
    return _unpad(xp, pads, h, w)


def _batched_outer(a, b):
    """sum_n a[n] @ b[n].T for (N, A, P) and (N, B, P) without transposed copies."""
    return np.matmul(a, b.transpose(0, 2, 1)).sum(axis=0)


def conv2d(x, w, b=None, stride=1):
    """Cross-correlation with same padding."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weights {w.shape}")
    n = x.shape[0]
    co, _, kh, kw = w.shape
    cols, ho, wo, _ = _patches(x, kh, kw, stride)
    out = np.matmul(w.reshape(co, -1), cols).reshape(n, co, ho, wo)
    if b is not None:
        out += b.reshape(1, co, 1, 1)
    return out


def conv2d_backward(grad_out, x, w, stride=1):
    """Gradients of ``conv2d`` w.r.t. input, weights and bias."""
    co, ci, kh, kw = w.shape
    n = x.shape[0]
    cols, ho, wo, _ = _patches(x, kh, kw, stride)
    if grad_out.shape != (n, co, ho, wo):
        raise ShapeError(f"conv2d_backward: grad_out {grad_out.shape} != {(n, co, ho, wo)}")
    g = grad_out.reshape(n, co, ho * wo)
    grad_w = _batched_outer(g, cols).reshape(w.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    dcols = np.matmul(w.reshape(co, -1).T, g)
    grad_x = _scatter(dcols, x.shape, kh, kw, stride)
    return grad_x, grad_w, grad_b


def tconv2d(y, w, b=None, stride=1):
    """Transposed convolution: the adjoint of a same-padded stride-s conv."""
    if y.ndim != 4 or w.ndim != 4 or y.shape[1] != w.shape[0]:
        raise ShapeError(f"tconv2d: input {y.shape} incompatible with weights {w.shape}")
    n, ci, h, wd = y.shape
    _, co, kh, kw = w.shape
    out_shape = (n, co, h * stride, wd * stride)
    dcols = np.matmul(w.reshape(ci, -1).T, y.reshape(n, ci, h * wd))
    out = np.ascontiguousarray(_scatter(dcols, out_shape, kh, kw, stride))
    if b is not None:
        out += b.reshape(1, co, 1, 1)
    return out


def tconv2d_backward(grad_out, y, w, stride=1):
    """Gradients of ``tconv2d`` w.r.t. input, weights and bias."""
    n, ci, h, wd = y.shape
    _, co, kh, kw = w.shape
    if grad_out.shape != (n, co, h * stride, wd * stride):
        raise ShapeError(f"tconv2d_backward: grad_out {grad_out.shape} does not match forward")
    cols, _, _, _ = _patches(grad_out, kh, kw, stride)
    grad_y = np.matmul(w.reshape(ci, -1), cols).reshape(y.shape)
    grad_w = _batched_outer(y.reshape(n, ci, h * wd), cols).reshape(w.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    return grad_y, grad_w, grad_b


class RunningStats:
    """Exponential moving averages of per-channel batch mean and variance."""

    def __init__(self, channels, momentum=0.99, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.initialized = False

    def update(self, mean, var):
        if not self.initialized:
            # first batch seeds the averages instead of decaying from (0, 1)
            self.mean[...] = mean
            self.var[...] = var
            self.initialized = True
            return
        m = self.momentum
        self.mean[...] = m * self.mean + (1.0 - m) * mean
        self.var[...] = m * self.var + (1.0 - m) * var


def batch_norm(x, gamma, beta, mode="train", stats=None, eps=1e-3):
    """Per-channel batch normalization.

    Returns ``(out, cache)``; ``cache`` is None in inference mode.  In train
    mode the batch statistics are used and ``stats`` (if given) is updated.
    """
    shape = (1, -1, 1, 1)
    if mode == "train":
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        if stats is not None:
            stats.update(mean, var)
        return xhat * gamma.reshape(shape) + beta.reshape(shape), (xhat, inv_std)
    if mode != "infer":
        raise ValueError(f"batch_norm mode must be 'train' or 'infer', got {mode!r}")
    if stats is None or not stats.initialized:
        raise StateError("batch_norm in infer mode needs initialized running statistics")
    inv_std = (1.0 / np.sqrt(stats.var + eps)).astype(x.dtype)
    scale = (gamma * inv_std).reshape(shape)
    shift = (beta - stats.mean * gamma * inv_std).reshape(shape)
    return x * scale + shift, None


def batch_norm_backward(grad_out, cache, gamma):
    xhat, inv_std = cache
    m = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    shape = (1, -1, 1, 1)
    gx = grad_out * gamma.reshape(shape)
    grad_x = (inv_std.reshape(shape) / m) * (
        m * gx
        - gx.sum(axis=(0, 2, 3)).reshape(shape)
        - xhat * (gx * xhat).sum(axis=(0, 2, 3)).reshape(shape)
    )
    return grad_x, grad_gamma, grad_beta


def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return grad_out * (x > 0)


def mse_loss(pred, target):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes {pred.shape} and {target.shape} differ")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff
