"""Forward-only convolutional network loaded from a header + float32 blob file.

File layout: one line of JSON describing the layers, a newline, then every
layer's weights followed by its biases as little-endian float32, row-major,
in layer order. Convolution weights are ``(out, in, k, k)``, fully connected
weights ``(out, in)``; fully connected layers flatten their input in
``(channel, row, column)`` order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatchError, TruncatedBlobError, UnknownLayerError, WeightFileError
from .backends import l2_normalize, resize_batch

FORMAT = "synthprobe-convnet/1"


@dataclass(eq=False)
class Conv:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    weight: np.ndarray = None
    bias: np.ndarray = None
    kind = "conv"

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels, self.kernel, self.kernel)

    def header(self):
        return {"kind": "conv", "in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel": self.kernel, "stride": self.stride, "padding": self.padding}

    def out_shape(self, shape):
        c, h, w = shape
        ho = (h + 2 * self.padding - self.kernel) // self.stride + 1
        wo = (w + 2 * self.padding - self.kernel) // self.stride + 1
        return (self.out_channels, ho, wo)


@dataclass(eq=False)
class ReLU:
    kind = "relu"
    weight_shape = None

    def header(self):
        return {"kind": "relu"}

    def out_shape(self, shape):
        return shape


@dataclass(eq=False)
class MaxPool:
    window: int
    stride: int
    kind = "maxpool"
    weight_shape = None

    def header(self):
        return {"kind": "maxpool", "window": self.window, "stride": self.stride}

    def out_shape(self, shape):
        c, h, w = shape
        return (c, (h - self.window) // self.stride + 1, (w - self.window) // self.stride + 1)


@dataclass(eq=False)
class FC:
    in_features: int
    out_features: int
    weight: np.ndarray = None
    bias: np.ndarray = None
    kind = "fc"

    @property
    def weight_shape(self):
        return (self.out_features, self.in_features)

    def header(self):
        return {"kind": "fc", "in_features": self.in_features, "out_features": self.out_features}

    def out_shape(self, shape):
        return (self.out_features, 1, 1)


@dataclass(eq=False)
class ConvNetSpec:
    layers: list
    input_size: int
    input_channels: int = 3
    last_hidden: int = -1
    shapes: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.last_hidden < 0:
            self.last_hidden += len(self.layers)
        if not 0 <= self.last_hidden < len(self.layers):
            raise WeightFileError(f"last_hidden {self.last_hidden} outside {len(self.layers)} layers")
        self.shapes = layer_shapes(self.layers, (self.input_channels, self.input_size, self.input_size))

    @property
    def dim(self):
        c, h, w = self.shapes[self.last_hidden]
        return c * h * w

    @property
    def num_params(self):
        return sum(int(np.prod(l.weight_shape)) + l.weight_shape[0] for l in self.layers if l.weight_shape)


def layer_shapes(layers, in_shape):
    """Output ``(C, H, W)`` after each layer; raises ShapeMismatchError on incompatibility."""
    shapes = []
    shape = in_shape
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv) and layer.in_channels != shape[0]:
            raise ShapeMismatchError(f"conv expects {layer.in_channels} channels, gets {shape[0]}", i)
        if isinstance(layer, FC) and layer.in_features != int(np.prod(shape)):
            raise ShapeMismatchError(f"fc expects {layer.in_features} inputs, gets {int(np.prod(shape))}", i)
        if isinstance(layer, (Conv, MaxPool)):
            k = layer.kernel if isinstance(layer, Conv) else layer.window
            if min(layer.stride, k) < 1 or (isinstance(layer, Conv) and layer.padding < 0):
                raise ShapeMismatchError("kernel, stride must be >= 1 and padding >= 0", i)
        shape = layer.out_shape(shape)
        if min(shape) < 1:
            raise ShapeMismatchError(f"layer output shape {shape} is empty", i)
        shapes.append(shape)
    return shapes


def _layer_from_header(i, entry):
    kind = entry.get("kind") if isinstance(entry, dict) else None
    try:
        if kind == "conv":
            return Conv(int(entry["in_channels"]), int(entry["out_channels"]), int(entry["kernel"]),
                        int(entry.get("stride", 1)), int(entry.get("padding", 0)))
        if kind == "relu":
            return ReLU()
        if kind == "maxpool":
            return MaxPool(int(entry["window"]), int(entry.get("stride", entry["window"])))
        if kind == "fc":
            return FC(int(entry["in_features"]), int(entry["out_features"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ShapeMismatchError(f"{kind} layer missing/invalid field {exc}", i) from None
    raise UnknownLayerError(f"unknown layer kind {kind!r}", i)


def parse_convnet(data):
    """Parse the bytes of a weight file into a validated ``ConvNetSpec``."""
    nl = data.find(b"\n")
    if nl < 0:
        raise WeightFileError("missing JSON header line")
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFileError(f"bad header: {exc}") from None
    if header.get("format", FORMAT) != FORMAT:
        raise WeightFileError(f"unsupported format {header.get('format')!r}")
    blob = data[nl + 1:]
    values = np.frombuffer(blob[: len(blob) // 4 * 4], dtype="<f4").astype(np.float64)
    try:
        input_size = int(header["input_size"])
        input_channels = int(header.get("input_channels", 3))
        entries = list(header["layers"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightFileError(f"header missing field {exc}") from None

    layers = [_layer_from_header(i, e) for i, e in enumerate(entries)]
    layer_shapes(layers, (input_channels, input_size, input_size))
    pos = 0
    for i, layer in enumerate(layers):
        if layer.weight_shape is None:
            continue
        n_w = int(np.prod(layer.weight_shape))
        n_b = layer.weight_shape[0]
        if pos + n_w + n_b > len(values):
            raise TruncatedBlobError(
                f"needs {n_w + n_b} parameters, only {len(values) - pos} remain", i
            )
        layer.weight = values[pos:pos + n_w].reshape(layer.weight_shape)
        layer.bias = values[pos + n_w:pos + n_w + n_b].copy()
        pos += n_w + n_b
    if len(blob) % 4 or pos != len(values):
        raise ShapeMismatchError(f"blob has {len(values) - pos} trailing parameters")
    declared = header.get("total_params")
    if declared is not None and int(declared) != pos:
        raise ShapeMismatchError(f"header declares {declared} parameters, layers need {pos}")
    return ConvNetSpec(layers, input_size, input_channels, int(header.get("last_hidden", -1)))


def load_convnet(path):
    return parse_convnet(Path(path).read_bytes())


def dump_convnet(net):
    header = {
        "format": FORMAT,
        "input_size": net.input_size,
        "input_channels": net.input_channels,
        "last_hidden": net.last_hidden,
        "layers": [l.header() for l in net.layers],
        "total_params": net.num_params,
    }
    parts = [json.dumps(header).encode("utf-8"), b"\n"]
    for layer in net.layers:
        if layer.weight_shape is not None:
            parts.append(np.asarray(layer.weight, dtype="<f4").tobytes())
            parts.append(np.asarray(layer.bias, dtype="<f4").tobytes())
    return b"".join(parts)


def save_convnet(net, path):
    Path(path).write_bytes(dump_convnet(net))


def random_convnet(seed, input_size=16, channels=(8, 16), hidden=64):
    """Two conv+relu+pool stages and one fully connected hidden layer with scaled uniform init.

    ``hidden=0`` leaves out the fully connected layer, so the pooled feature
    map is the last hidden layer. Weights are rounded through float32 so that
    a save/load round trip is exact.
    """
    rng = np.random.default_rng(int(seed))
    layers = []
    c_in = 3
    for c_out in channels:
        bound = 1.0 / np.sqrt(c_in * 9)
        layers += [
            Conv(c_in, c_out, 3, 1, 1,
                 rng.uniform(-bound, bound, (c_out, c_in, 3, 3)), rng.uniform(-bound, bound, c_out)),
            ReLU(),
            MaxPool(2, 2),
        ]
        c_in = c_out
    if hidden:
        shape = layer_shapes(layers, (3, input_size, input_size))[-1]
        n_in = int(np.prod(shape))
        bound = 1.0 / np.sqrt(n_in)
        layers += [FC(n_in, hidden, rng.uniform(-bound, bound, (hidden, n_in)),
                      rng.uniform(-bound, bound, hidden)),
                   ReLU()]
    for layer in layers:
        if layer.weight_shape is not None:
            layer.weight = layer.weight.astype(np.float32).astype(np.float64)
            layer.bias = layer.bias.astype(np.float32).astype(np.float64)
    return ConvNetSpec(layers, input_size, 3, len(layers) - 1)


def _conv_im2col(x, layer):
    p, k, s = layer.padding, layer.kernel, layer.stride
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = cols @ layer.weight.reshape(layer.out_channels, -1).T + layer.bias
    return out.reshape(n, ho, wo, -1).transpose(0, 3, 1, 2)


def _conv_direct(x, layer):
    p, k, s = layer.padding, layer.kernel, layer.stride
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    n = x.shape[0]
    _, ho, wo = layer.out_shape((x.shape[1], x.shape[2] - 2 * p, x.shape[3] - 2 * p))
    out = np.empty((n, layer.out_channels, ho, wo))
    for b in range(n):
        for o in range(layer.out_channels):
            for i in range(ho):
                for j in range(wo):
                    window = x[b, :, i * s:i * s + k, j * s:j * s + k]
                    out[b, o, i, j] = np.sum(window * layer.weight[o]) + layer.bias[o]
    return out


def _maxpool(x, layer):
    win = sliding_window_view(x, (layer.window, layer.window), axis=(2, 3))
    return win[:, :, ::layer.stride, ::layer.stride].max(axis=(4, 5))


def forward_activations(net, x, method="im2col"):
    """Run ``(N, C, H, W)`` input through the net; returns activations after each layer."""
    conv = _conv_im2col if method == "im2col" else _conv_direct
    acts = []
    for layer in net.layers[: net.last_hidden + 1]:
        if isinstance(layer, Conv):
            x = conv(x, layer)
        elif isinstance(layer, ReLU):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MaxPool):
            x = _maxpool(x, layer)
        else:
            x = (x.reshape(len(x), -1) @ layer.weight.T + layer.bias).reshape(len(x), -1, 1, 1)
        acts.append(x)
    return acts


def convnet_many(net, patches, method="im2col"):
    batch = resize_batch(patches, net.input_size)
    x = batch.transpose(0, 3, 1, 2)
    if x.shape[1] != net.input_channels:
        raise ShapeMismatchError(f"net expects {net.input_channels} channels, patch has {x.shape[1]}")
    out = forward_activations(net, x, method)[-1]
    return l2_normalize(out.reshape(len(out), -1))


def convnet_forward(net, patch, method="im2col"):
    """Activations of the last hidden layer for one ``(H, W, 3)`` patch, L2-normalized."""
    return convnet_many(net, patch, method)[0]
