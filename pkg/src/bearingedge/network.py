"""Whole-network forward and backward passes over an Architecture."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ShapeMismatch
from .model import (
    KIND_CONV,
    KIND_DENSE,
    KIND_MAXPOOL,
    KIND_SOFTMAX_DENSE,
    ACT_RELU,
    ACT_TANH,
    Architecture,
    ModelParams,
)


def _as_input_tensor(arch: Architecture, frame_values) -> np.ndarray:
    x = np.asarray(frame_values, dtype=np.float64)
    rows, cols, channels = arch.input_dims
    if x.shape == (rows, cols) and channels == 1:
        x = x.reshape(rows, cols, 1)
    if x.shape != (rows, cols, channels):
        raise ShapeMismatch(
            f"input {x.shape} does not match model input {arch.input_dims}"
        )
    return x


def _activate(pre, activation):
    if activation == ACT_TANH:
        return T.tanh(pre)
    if activation == ACT_RELU:
        return T.relu(pre)
    return pre


def forward(arch: Architecture, params: ModelParams, frame_values,
            want_cache: bool = False):
    """Class probabilities for one frame; optionally the backprop cache.

    The cache holds, per layer, whatever its backward pass needs: layer
    input, pre-activation, and the pool argmax map.
    """
    x = _as_input_tensor(arch, frame_values)
    cache = [] if want_cache else None
    for layer, entry in zip(arch.layers, params.layers):
        if layer.kind == KIND_CONV:
            pre = T.conv2d_same(x, entry)
            out = _activate(pre, layer.activation)
            if want_cache:
                cache.append(("conv", x, pre, out))
        elif layer.kind == KIND_MAXPOOL:
            out, argmax = T.maxpool(x, layer.filter_size[0], layer.stride)
            if want_cache:
                cache.append(("pool", x.shape, argmax))
        elif layer.kind == KIND_DENSE:
            flat = x.reshape(-1)
            pre = T.dense(flat, entry)
            out = _activate(pre, layer.activation)
            if want_cache:
                cache.append(("dense", flat, x.shape, pre, out))
        else:  # softmax-dense
            flat = x.reshape(-1)
            logits = T.dense(flat, entry)
            out = T.softmax(logits)
            if want_cache:
                cache.append(("softmax", flat, x.shape, out))
        x = out
    return (x, cache) if want_cache else x


def backward(arch: Architecture, params: ModelParams, cache, target: int):
    """Loss and per-layer (dweights, dbias) grads via fused softmax+CE."""
    probs = cache[-1][3]
    loss = -np.log(max(float(probs[target]), 1e-300))
    grads: list = [None] * len(arch.layers)
    dy = None
    for i in range(len(arch.layers) - 1, -1, -1):
        layer = arch.layers[i]
        entry = params.layers[i]
        record = cache[i]
        if layer.kind == KIND_SOFTMAX_DENSE:
            _, flat, in_shape, probs = record
            dlogits = T.softmax_cross_entropy_grad(probs, target)
            dflat, dw, db = T.dense_backward(flat, entry, dlogits)
            grads[i] = (dw, db)
            dy = dflat.reshape(in_shape)
        elif layer.kind == KIND_DENSE:
            _, flat, in_shape, pre, out = record
            dpre = _activation_backward(layer.activation, pre, out, dy.reshape(-1))
            dflat, dw, db = T.dense_backward(flat, entry, dpre)
            grads[i] = (dw, db)
            dy = dflat.reshape(in_shape)
        elif layer.kind == KIND_MAXPOOL:
            _, in_shape, argmax = record
            dy = T.maxpool_backward(argmax, dy, in_shape)
        else:  # conv
            _, x_in, pre, out = record
            dpre = _activation_backward(layer.activation, pre, out, dy)
            dx, dw, db = T.conv2d_same_backward(x_in, entry, dpre)
            grads[i] = (dw, db)
            dy = dx
    return loss, grads


def _activation_backward(activation, pre, out, dy):
    if activation == ACT_TANH:
        return T.tanh_backward(out, dy)
    if activation == ACT_RELU:
        return T.relu_backward(pre, dy)
    return dy


def loss_for(arch: Architecture, params: ModelParams, frame_values,
             target: int) -> float:
    probs = forward(arch, params, frame_values)
    return -float(np.log(max(float(probs[target]), 1e-300)))


def predict(arch: Architecture, params: ModelParams, frame_values):
    """(class_id, probabilities) for one frame."""
    probs = forward(arch, params, frame_values)
    return int(np.argmax(probs)), probs
