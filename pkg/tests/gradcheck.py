"""Finite-difference gradient checking over random tiny networks.

Shared by the unit tests and the acceptance suite.
"""

import numpy as np

from bearingedge import network
from bearingedge.model import (
    KIND_CONV,
    KIND_MAXPOOL,
    KIND_SOFTMAX_DENSE,
    Architecture,
    LayerSpec,
    ModelParams,
    init_params,
)
from bearingedge.tensor import ConvKernel, DenseWeights

EPS = 1e-4
REL_TOL = 1e-4


def random_tiny_network(seed: int):
    """4x4 input, one conv, one pool, one softmax-dense head."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 4))          # covers even and odd kernels
    channels = int(rng.integers(1, 4))
    activation = "tanh" if rng.integers(2) else "relu"
    arch = Architecture((4, 4, 1), (
        LayerSpec(KIND_CONV, (k, k), channels, 1, activation),
        LayerSpec(KIND_MAXPOOL, (2, 2), None, 2),
        LayerSpec(KIND_SOFTMAX_DENSE, 3),
    ))
    params = init_params(arch, seed=seed)
    x = rng.uniform(0.0, 1.0, (4, 4))
    target = int(rng.integers(3))
    return arch, params, x, target


def _params_with(params: ModelParams, layer_idx: int, attr: str, array):
    entries = list(params.layers)
    entry = entries[layer_idx]
    if isinstance(entry, ConvKernel):
        fields = {"weights": entry.weights, "bias": entry.bias}
        fields[attr] = array
        entries[layer_idx] = ConvKernel(fields["weights"], fields["bias"],
                                        entry.stride)
    else:
        fields = {"weights": entry.weights, "bias": entry.bias}
        fields[attr] = array
        entries[layer_idx] = DenseWeights(fields["weights"], fields["bias"])
    return ModelParams(tuple(entries))


def max_relative_gradient_error(arch, params, x, target) -> float:
    """Worst relative disagreement between backprop and central differences
    over every weight and bias scalar of the model."""
    _, cache = network.forward(arch, params, x, want_cache=True)
    _, grads = network.backward(arch, params, cache, target)
    worst = 0.0
    for li, entry in enumerate(params.layers):
        if entry is None:
            continue
        for attr, g in (("weights", grads[li][0]), ("bias", grads[li][1])):
            base = getattr(entry, attr)
            it = np.nditer(base, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                plus = base.copy()
                plus[idx] += EPS
                minus = base.copy()
                minus[idx] -= EPS
                lp = network.loss_for(arch, _params_with(params, li, attr, plus),
                                      x, target)
                lm = network.loss_for(arch, _params_with(params, li, attr, minus),
                                      x, target)
                fd = (lp - lm) / (2.0 * EPS)
                analytic = float(g[idx])
                rel = abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-8)
                worst = max(worst, rel)
    return worst
