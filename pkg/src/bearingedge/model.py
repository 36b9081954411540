"""Network architecture, resource accounting, and weight serialization.

The stock model is an 11-layer sequential CNN over 20x20x1 frames with
36,390 parameters. MACC counting uses the kernel-multiply convention (one
MACC per weight multiply in convs and dense layers; bias adds and pooling
excluded). The vendor tool that imports this network onto the target
microcontroller reports different totals under its own conventions; those
figures are carried as labeled reference metadata and never asserted
against ours.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CorruptModel, ShapeMismatch
from .tensor import ConvKernel, DenseWeights

KIND_CONV = "conv"
KIND_MAXPOOL = "maxpool"
KIND_DENSE = "dense"
KIND_SOFTMAX_DENSE = "softmax-dense"

ACT_TANH = "tanh"
ACT_RELU = "relu"

BYTES_PER_SCALAR = 4  # weights and activations are 32-bit on the device

# Footprint the vendor import tool reports for this network on the target
# microcontroller; counting conventions differ, so these are metadata, not
# oracles.
VENDOR_TOOL_MACC = 1_238_380
VENDOR_TOOL_FLASH_KB = 142.15
VENDOR_TOOL_RAM_KB = 11.32


@dataclass(frozen=True)
class LayerSpec:
    """One sequential layer: conv, maxpool, dense, or softmax-dense."""

    kind: str
    filter_size: tuple[int, int] | int
    filter_count: int | None = None
    stride: int | None = None
    activation: str | None = None

    def __post_init__(self):
        if self.kind in (KIND_CONV, KIND_MAXPOOL):
            if (not isinstance(self.filter_size, tuple)
                    or len(self.filter_size) != 2
                    or any(s < 1 for s in self.filter_size)):
                raise ShapeMismatch(f"{self.kind} filter_size must be (h, w)")
            if self.stride is None or self.stride < 1:
                raise ShapeMismatch(f"{self.kind} needs a positive stride")
        if self.kind == KIND_CONV:
            if self.filter_count is None or self.filter_count < 1:
                raise ShapeMismatch("conv needs a positive filter_count")
        elif self.kind == KIND_MAXPOOL:
            if self.activation is not None:
                raise ShapeMismatch("pool layers carry no activation")
        elif self.kind in (KIND_DENSE, KIND_SOFTMAX_DENSE):
            if not isinstance(self.filter_size, int) or self.filter_size < 1:
                raise ShapeMismatch("dense filter_size is the output width")
            if self.stride is not None:
                raise ShapeMismatch("dense layers carry no stride")
            if self.kind == KIND_SOFTMAX_DENSE and self.activation is not None:
                raise ShapeMismatch("softmax-dense has softmax built in")
        else:
            raise ShapeMismatch(f"unknown layer kind {self.kind!r}")
        if self.activation not in (None, ACT_TANH, ACT_RELU):
            raise ShapeMismatch(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class Architecture:
    """A sequential layer stack over a fixed input size."""

    input_dims: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if len(self.input_dims) != 3 or any(d < 1 for d in self.input_dims):
            raise ShapeMismatch("input_dims must be (rows, cols, channels)")
        if not self.layers or self.layers[-1].kind != KIND_SOFTMAX_DENSE:
            raise ShapeMismatch("final layer must be softmax-dense")
        self.shape_chain()  # fails fast on impossible stacks

    def shape_chain(self) -> list[tuple[int, int, int] | int]:
        """Output dims after each layer; dense outputs appear as plain ints."""
        dims: tuple[int, int, int] | int = self.input_dims
        chain: list[tuple[int, int, int] | int] = []
        for layer in self.layers:
            if layer.kind == KIND_CONV:
                if not isinstance(dims, tuple):
                    raise ShapeMismatch("conv after a dense layer")
                dims = (dims[0], dims[1], layer.filter_count)
            elif layer.kind == KIND_MAXPOOL:
                if not isinstance(dims, tuple):
                    raise ShapeMismatch("pool after a dense layer")
                k = layer.filter_size[0]
                if k > min(dims[0], dims[1]):
                    raise ShapeMismatch(
                        f"pool size {k} exceeds input {dims[0]}x{dims[1]}"
                    )
                out_h = (dims[0] - k) // layer.stride + 1
                out_w = (dims[1] - k) // layer.stride + 1
                dims = (out_h, out_w, dims[2])
            else:
                dims = layer.filter_size
            chain.append(dims)
        return chain

    def flat_input_dim(self, index: int) -> int:
        """Input width of the dense layer at ``index``."""
        prev = self.input_dims if index == 0 else self.shape_chain()[index - 1]
        return int(np.prod(prev)) if isinstance(prev, tuple) else prev

    def layer_names(self) -> list[str]:
        names = []
        counters = {KIND_CONV: 0, KIND_MAXPOOL: 0, KIND_DENSE: 0}
        for layer in self.layers:
            if layer.kind == KIND_SOFTMAX_DENSE:
                names.append("softmax")
            else:
                counters[layer.kind] += 1
                base = {KIND_CONV: "conv", KIND_MAXPOOL: "maxpool",
                        KIND_DENSE: "dense"}[layer.kind]
                names.append(f"{base}{counters[layer.kind]}")
        return names


def canonical_architecture(activation: str = ACT_TANH) -> Architecture:
    """The stock ten-class model: six convs, three pools, two dense layers."""
    return Architecture(
        input_dims=(20, 20, 1),
        layers=(
            LayerSpec(KIND_CONV, (10, 10), 4, 1, activation),
            LayerSpec(KIND_CONV, (5, 5), 8, 1, activation),
            LayerSpec(KIND_MAXPOOL, (4, 4), 8, 2),
            LayerSpec(KIND_CONV, (3, 3), 16, 1, activation),
            LayerSpec(KIND_CONV, (3, 3), 16, 1, activation),
            LayerSpec(KIND_MAXPOOL, (2, 2), 16, 2),
            LayerSpec(KIND_CONV, (3, 3), 32, 1, activation),
            LayerSpec(KIND_CONV, (3, 3), 64, 1, activation),
            LayerSpec(KIND_MAXPOOL, (1, 1), 64, 2),
            LayerSpec(KIND_DENSE, 32, activation=activation),
            LayerSpec(KIND_SOFTMAX_DENSE, 10),
        ),
    )


def with_activation(arch: Architecture, activation: str) -> Architecture:
    """Same stack with every conv/dense activation swapped."""
    layers = tuple(
        replace(layer, activation=activation)
        if layer.kind in (KIND_CONV, KIND_DENSE) else layer
        for layer in arch.layers
    )
    return Architecture(arch.input_dims, layers)


def _weight_shapes(arch: Architecture):
    """Per layer: (weight shape, bias shape) or None for pools."""
    shapes = []
    dims: tuple[int, int, int] | int = arch.input_dims
    for layer, out_dims in zip(arch.layers, arch.shape_chain()):
        if layer.kind == KIND_CONV:
            kh, kw = layer.filter_size
            shapes.append(((kh, kw, dims[2], layer.filter_count),
                           (layer.filter_count,)))
        elif layer.kind in (KIND_DENSE, KIND_SOFTMAX_DENSE):
            in_dim = int(np.prod(dims)) if isinstance(dims, tuple) else dims
            shapes.append(((in_dim, layer.filter_size), (layer.filter_size,)))
        else:
            shapes.append(None)
        dims = out_dims
    return shapes


def parameter_count(arch: Architecture) -> int:
    total = 0
    for entry in _weight_shapes(arch):
        if entry is not None:
            w, b = entry
            total += int(np.prod(w)) + int(np.prod(b))
    return total


def macc_per_layer(arch: Architecture) -> list[int]:
    """Kernel multiplies per layer: conv out_elems*kh*kw*in_ch, dense in*out."""
    maccs = []
    dims: tuple[int, int, int] | int = arch.input_dims
    for layer, out_dims in zip(arch.layers, arch.shape_chain()):
        if layer.kind == KIND_CONV:
            kh, kw = layer.filter_size
            out_elems = out_dims[0] * out_dims[1] * out_dims[2]
            maccs.append(out_elems * kh * kw * dims[2])
        elif layer.kind in (KIND_DENSE, KIND_SOFTMAX_DENSE):
            in_dim = int(np.prod(dims)) if isinstance(dims, tuple) else dims
            maccs.append(in_dim * layer.filter_size)
        else:
            maccs.append(0)
        dims = out_dims
    return maccs


def count_macc(arch: Architecture) -> int:
    return sum(macc_per_layer(arch))


@dataclass(frozen=True)
class ResourceReport:
    """Deployment footprint: MACCs, flash for weights, activation RAM."""

    macc_total: int
    flash_bytes: int
    per_layer_ram_bytes: tuple[int, ...]
    peak_ram_bytes: int
    per_layer_shapes: tuple


def plan_memory(arch: Architecture) -> ResourceReport:
    """Footprint under a ping-pong buffer plan (two live activations)."""
    chain = arch.shape_chain()
    sizes = [int(np.prod(arch.input_dims))]
    sizes += [int(np.prod(d)) if isinstance(d, tuple) else d for d in chain]
    ram = [s * BYTES_PER_SCALAR for s in sizes]
    peak = max(ram[i] + ram[i + 1] for i in range(len(ram) - 1))
    return ResourceReport(
        macc_total=count_macc(arch),
        flash_bytes=parameter_count(arch) * BYTES_PER_SCALAR,
        per_layer_ram_bytes=tuple(ram[1:]),
        peak_ram_bytes=peak,
        per_layer_shapes=tuple(chain),
    )


@dataclass(frozen=True)
class ModelParams:
    """Learned weights aligned with an Architecture's layers (None at pools)."""

    layers: tuple

    def scalar_count(self) -> int:
        total = 0
        for entry in self.layers:
            if entry is not None:
                total += entry.weights.size + entry.bias.size
        return total

    def copy(self) -> "ModelParams":
        copied = []
        for entry in self.layers:
            if entry is None:
                copied.append(None)
            elif isinstance(entry, ConvKernel):
                copied.append(ConvKernel(entry.weights.copy(),
                                         entry.bias.copy(), entry.stride))
            else:
                copied.append(DenseWeights(entry.weights.copy(),
                                           entry.bias.copy()))
        return ModelParams(tuple(copied))


def init_params(arch: Architecture, seed: int = 0) -> ModelParams:
    """Seeded uniform init in +-sqrt(6/(fan_in+fan_out)); zero biases.

    Draws are snapped to float32 so a fresh model round-trips bit-exactly
    through the float32 file format.
    """
    rng = np.random.default_rng(seed)
    params = []
    for layer, entry in zip(arch.layers, _weight_shapes(arch)):
        if entry is None:
            params.append(None)
            continue
        w_shape, b_shape = entry
        if layer.kind == KIND_CONV:
            kh, kw, cin, cout = w_shape
            fan_in, fan_out = kh * kw * cin, kh * kw * cout
        else:
            fan_in, fan_out = w_shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, w_shape)
        w = w.astype(np.float32).astype(np.float64)
        b = np.zeros(b_shape)
        if layer.kind == KIND_CONV:
            params.append(ConvKernel(w, b, stride=1))
        else:
            params.append(DenseWeights(w, b))
    return ModelParams(tuple(params))


def check_params(arch: Architecture, params: ModelParams) -> None:
    """Raise ShapeMismatch unless params line up with the architecture."""
    shapes = _weight_shapes(arch)
    if len(params.layers) != len(shapes):
        raise ShapeMismatch("parameter list length != layer count")
    for i, (entry, expected) in enumerate(zip(params.layers, shapes)):
        if expected is None:
            if entry is not None:
                raise ShapeMismatch(f"layer {i} is a pool but has weights")
            continue
        if entry is None:
            raise ShapeMismatch(f"layer {i} is missing weights")
        w_shape, b_shape = expected
        if entry.weights.shape != w_shape or entry.bias.shape != b_shape:
            raise ShapeMismatch(
                f"layer {i} weights {entry.weights.shape} != {w_shape}"
            )


# ---------------------------------------------------------------------------
# Binary model file: magic "BFDM", u16 version, 3x u16 input dims, u16 layer
# count, a 10-byte record per layer (u8 kind, 4x u16 dims, u8 activation),
# every weight scalar as float32 LE in layer order, then every bias scalar,
# then CRC-32 of everything after the magic.
# ---------------------------------------------------------------------------

MODEL_MAGIC = b"BFDM"
MODEL_VERSION = 1

_KIND_CODES = {KIND_CONV: 1, KIND_MAXPOOL: 2, KIND_DENSE: 3,
               KIND_SOFTMAX_DENSE: 4}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_ACT_CODES = {None: 0, ACT_TANH: 1, ACT_RELU: 2}
_ACT_FROM_CODE = {v: k for k, v in _ACT_CODES.items()}


def _layer_record(arch: Architecture, index: int) -> tuple[int, int, int, int]:
    layer = arch.layers[index]
    if layer.kind == KIND_CONV:
        shapes = _weight_shapes(arch)[index]
        kh, kw, cin, cout = shapes[0]
        return kh, kw, cin, cout
    if layer.kind == KIND_MAXPOOL:
        declared = layer.filter_count or 0
        return layer.filter_size[0], layer.filter_size[1], layer.stride, declared
    in_dim = arch.flat_input_dim(index)
    return in_dim, layer.filter_size, 0, 0


def save_model(params: ModelParams, arch: Architecture, path) -> None:
    """Write the model file; float64 weights are stored as float32."""
    check_params(arch, params)
    body = bytearray()
    body += struct.pack("<H", MODEL_VERSION)
    body += struct.pack("<3H", *arch.input_dims)
    body += struct.pack("<H", len(arch.layers))
    for i, layer in enumerate(arch.layers):
        body += struct.pack("<B", _KIND_CODES[layer.kind])
        body += struct.pack("<4H", *_layer_record(arch, i))
        body += struct.pack("<B", _ACT_CODES[layer.activation])
    for entry in params.layers:
        if entry is not None:
            body += entry.weights.astype("<f4").tobytes()
    for entry in params.layers:
        if entry is not None:
            body += entry.bias.astype("<f4").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    Path(path).write_bytes(MODEL_MAGIC + bytes(body))


def load_model(path) -> tuple[Architecture, ModelParams]:
    """Read and verify a model file; scalars come back as exact float32.

    Raises CorruptModel on any structural damage: bad magic or version, a
    file size that disagrees with the declared layout, or checksum mismatch.
    """
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise CorruptModel("bad magic")
    body = data[4:]
    if len(body) < 12:
        raise CorruptModel("file truncated before header")
    (version,) = struct.unpack_from("<H", body, 0)
    if version != MODEL_VERSION:
        raise CorruptModel(f"unsupported version {version}")
    input_dims = struct.unpack_from("<3H", body, 2)
    (layer_count,) = struct.unpack_from("<H", body, 8)
    pos = 10
    records = []
    for _ in range(layer_count):
        if pos + 10 > len(body):
            raise CorruptModel("file truncated in layer table")
        (kind_code,) = struct.unpack_from("<B", body, pos)
        dims = struct.unpack_from("<4H", body, pos + 1)
        (act_code,) = struct.unpack_from("<B", body, pos + 9)
        if kind_code not in _KIND_FROM_CODE or act_code not in _ACT_FROM_CODE:
            raise CorruptModel(f"unknown layer kind/activation at {pos}")
        records.append((_KIND_FROM_CODE[kind_code], dims,
                        _ACT_FROM_CODE[act_code]))
        pos += 10

    layers = []
    weight_shapes = []
    for kind, dims, activation in records:
        if kind == KIND_CONV:
            kh, kw, cin, cout = dims
            layers.append(LayerSpec(kind, (kh, kw), cout, 1, activation))
            weight_shapes.append(((kh, kw, cin, cout), (cout,)))
        elif kind == KIND_MAXPOOL:
            kh, kw, stride, declared = dims
            layers.append(LayerSpec(kind, (kh, kw), declared or None, stride))
            weight_shapes.append(None)
        else:
            in_dim, out_dim, _, _ = dims
            layers.append(LayerSpec(kind, out_dim, activation=activation))
            weight_shapes.append(((in_dim, out_dim), (out_dim,)))

    n_weights = sum(int(np.prod(s[0])) for s in weight_shapes if s)
    n_biases = sum(int(np.prod(s[1])) for s in weight_shapes if s)
    expected = pos + 4 * (n_weights + n_biases) + 4
    if len(body) != expected:
        raise CorruptModel(
            f"file holds {len(body) + 4} bytes, layout needs {expected + 4}"
        )
    (stored_crc,) = struct.unpack_from("<I", body, len(body) - 4)
    if zlib.crc32(body[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CorruptModel("checksum mismatch")

    scalars = np.frombuffer(body, dtype="<f4", count=n_weights + n_biases,
                            offset=pos).astype(np.float64)
    weights_flat = scalars[:n_weights]
    biases_flat = scalars[n_weights:]
    params = []
    w_off = b_off = 0
    for spec, shapes in zip(layers, weight_shapes):
        if shapes is None:
            params.append(None)
            continue
        w_shape, b_shape = shapes
        w_size, b_size = int(np.prod(w_shape)), int(np.prod(b_shape))
        w = weights_flat[w_off:w_off + w_size].reshape(w_shape)
        b = biases_flat[b_off:b_off + b_size].reshape(b_shape)
        w_off += w_size
        b_off += b_size
        if spec.kind == KIND_CONV:
            params.append(ConvKernel(w.copy(), b.copy(), stride=1))
        else:
            params.append(DenseWeights(w.copy(), b.copy()))

    try:
        arch = Architecture(tuple(int(d) for d in input_dims), tuple(layers))
        model = ModelParams(tuple(params))
        check_params(arch, model)
    except ShapeMismatch as exc:
        raise CorruptModel(f"inconsistent architecture in file: {exc}") from exc
    return arch, model
