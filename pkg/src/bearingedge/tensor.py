"""Dense tensor kernels, forward and backward, for the small diagnosis CNN.

Tensors are plain float64 ndarrays of shape (rows, cols, channels) in C
order, so the flat layout is row-major with the channel index fastest:
``flat[(r*cols + c)*channels + ch]``. Convolutions are stride-1 with zero
padding chosen to preserve spatial size; for even kernels the extra pad
row/column goes on the bottom/right. Pooling uses no padding and the output
size ``floor((n - k)/stride) + 1``.

Kernels are vectorized with an im2col layout whose reduction axis is ordered
(kernel row, kernel col, in-channel); the test suite pins them to a scalar
reference with that exact summation order to within 1e-12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch


@dataclass(frozen=True)
class ConvKernel:
    """Convolution weights (kh, kw, in_ch, out_ch) with per-filter bias."""

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 4:
            raise ShapeMismatch("conv weights must be (kh, kw, in_ch, out_ch)")
        if b.shape != (w.shape[3],):
            raise ShapeMismatch("conv bias length must equal out_ch")
        if self.stride < 1:
            raise ShapeMismatch("stride must be >= 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class DenseWeights:
    """Fully connected weights (in_dim, out_dim) plus bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
            raise ShapeMismatch("dense weights must be (in_dim, out_dim)")
        if b.shape != (w.shape[1],):
            raise ShapeMismatch("dense bias length must equal out_dim")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)


def _check_tensor(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"expected (rows, cols, channels), got {x.shape}")
    return x


def _same_pad(kh: int, kw: int) -> tuple[int, int]:
    # floor((k-1)/2) on top/left; even kernels get the extra row/col
    # bottom/right.
    return (kh - 1) // 2, (kw - 1) // 2


def _im2col(padded: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(H, W, C) padded input -> (H_out*W_out, kh*kw*C) patch matrix."""
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(0, 1))
    # (Ho, Wo, C, kh, kw) -> (Ho, Wo, kh, kw, C): reduction axis ordered
    # kernel row, kernel col, in-channel.
    ho, wo = windows.shape[0], windows.shape[1]
    patches = windows.transpose(0, 1, 3, 4, 2)
    return np.ascontiguousarray(patches).reshape(ho * wo, kh * kw * padded.shape[2])


def conv2d_same(x, kernel: ConvKernel) -> np.ndarray:
    """Stride-1 2-D convolution with size-preserving zero padding."""
    x = _check_tensor(x)
    kh, kw, in_ch, out_ch = kernel.weights.shape
    if x.shape[2] != in_ch:
        raise ShapeMismatch(
            f"input has {x.shape[2]} channels, kernel expects {in_ch}"
        )
    if kernel.stride != 1:
        raise ShapeMismatch("only stride-1 convolutions are supported")
    h, w, _ = x.shape
    pt, pl = _same_pad(kh, kw)
    padded = np.zeros((h + kh - 1, w + kw - 1, in_ch))
    padded[pt:pt + h, pl:pl + w] = x
    col = _im2col(padded, kh, kw)
    out = col @ kernel.weights.reshape(kh * kw * in_ch, out_ch) + kernel.bias
    return out.reshape(h, w, out_ch)


def conv2d_same_backward(x, kernel: ConvKernel, dy):
    """Gradients (dx, dweights, dbias) of conv2d_same."""
    x = _check_tensor(x)
    dy = _check_tensor(dy)
    kh, kw, in_ch, out_ch = kernel.weights.shape
    h, w, _ = x.shape
    if dy.shape != (h, w, out_ch):
        raise ShapeMismatch(f"dy shape {dy.shape} != ({h}, {w}, {out_ch})")
    pt, pl = _same_pad(kh, kw)

    padded = np.zeros((h + kh - 1, w + kw - 1, in_ch))
    padded[pt:pt + h, pl:pl + w] = x
    col = _im2col(padded, kh, kw)
    dy_flat = dy.reshape(h * w, out_ch)
    dw = (col.T @ dy_flat).reshape(kh, kw, in_ch, out_ch)
    db = dy.sum(axis=(0, 1))

    # dx is a full correlation of dy with the spatially flipped kernel,
    # evaluated on the padded grid and cropped back to the input window.
    dy_ext = np.zeros((h + 2 * (kh - 1), w + 2 * (kw - 1), out_ch))
    dy_ext[kh - 1:kh - 1 + h, kw - 1:kw - 1 + w] = dy
    w_flip = kernel.weights[::-1, ::-1].transpose(0, 1, 3, 2)
    col_ext = _im2col(dy_ext, kh, kw)
    dpadded = (col_ext @ w_flip.reshape(kh * kw * out_ch, in_ch))
    dpadded = dpadded.reshape(h + kh - 1, w + kw - 1, in_ch)
    dx = dpadded[pt:pt + h, pl:pl + w]
    return dx, dw, db


def maxpool(x, k: int, stride: int):
    """Max pooling; returns the pooled tensor and an argmax index map.

    The map holds, per output cell and channel, the flat spatial index
    (r*cols + c) of the winning input; ties go to the first index in scan
    order, which keeps backprop deterministic.
    """
    x = _check_tensor(x)
    h, w, c = x.shape
    if k < 1 or k > min(h, w):
        raise ShapeMismatch(f"pool size {k} invalid for {h}x{w} input")
    if stride < 1:
        raise ShapeMismatch("stride must be >= 1")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(0, 1))
    windows = windows[::stride, ::stride]  # (Ho, Wo, C, k, k)
    ho, wo = windows.shape[0], windows.shape[1]
    flat = windows.reshape(ho, wo, c, k * k)
    local = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    rows = np.arange(ho)[:, None, None] * stride + local // k
    cols = np.arange(wo)[None, :, None] * stride + local % k
    argmax = rows * w + cols
    return np.ascontiguousarray(out), argmax


def maxpool_backward(argmax, dy, input_dims) -> np.ndarray:
    """Scatter pooled gradients back through the argmax map."""
    h, w, c = input_dims
    dy = _check_tensor(dy)
    if argmax.shape != dy.shape:
        raise ShapeMismatch("argmax map and dy must have identical shapes")
    dx = np.zeros(h * w * c)
    flat_idx = argmax * c + np.arange(c)
    np.add.at(dx, flat_idx.ravel(), dy.ravel())
    return dx.reshape(h, w, c)


def dense(x, weights: DenseWeights) -> np.ndarray:
    """out[j] = bias[j] + sum_i x[i] * weights[i][j] for a flat input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != weights.weights.shape[0]:
        raise ShapeMismatch(
            f"input length {x.shape} != in_dim {weights.weights.shape[0]}"
        )
    return x @ weights.weights + weights.bias


def dense_backward(x, weights: DenseWeights, dy):
    """Gradients (dx, dweights, dbias) of dense."""
    x = np.asarray(x, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    if dy.shape != (weights.weights.shape[1],):
        raise ShapeMismatch("dy length must equal out_dim")
    return weights.weights @ dy, np.outer(x, dy), dy.copy()


def tanh(x) -> np.ndarray:
    return np.tanh(np.asarray(x, dtype=np.float64))


def tanh_backward(y, dy) -> np.ndarray:
    """Backward through tanh given its output y."""
    return (1.0 - np.square(y)) * dy


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(x, dy) -> np.ndarray:
    """Backward through relu given its input x (zero subgradient at 0)."""
    return np.where(x > 0.0, dy, 0.0)


def softmax(x) -> np.ndarray:
    """Max-subtracted softmax over a 1-D vector; stable for huge logits."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeMismatch("softmax input must be one-dimensional")
    e = np.exp(x - x.max())
    return e / e.sum()


_EPS = 1e-300  # guards log/0 on fully saturated predictions


def cross_entropy(probs, target: int):
    """Loss -ln p[target] and its gradient with respect to the probabilities."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or not 0 <= target < len(probs):
        raise ShapeMismatch("target must index the 1-D probability vector")
    p = max(float(probs[target]), _EPS)
    grad = np.zeros_like(probs)
    grad[target] = -1.0 / p
    return -np.log(p), grad


def softmax_cross_entropy_grad(probs, target: int) -> np.ndarray:
    """Fused gradient of cross-entropy(softmax(z)) wrt the logits z."""
    probs = np.asarray(probs, dtype=np.float64)
    grad = probs.copy()
    grad[target] -= 1.0
    return grad
