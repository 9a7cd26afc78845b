"""ONNX export for the ResUNet architecture.

Writes standard protobuf wire format directly (opset 13, float32
tensors with raw little-endian data), covering exactly the operators the
network uses: Conv, Relu, MaxPool, Resize (nearest), and Add. The graph
mirrors ResUNet.forward node for node, with the global residual emitted
as a final Add of the graph input.
"""

import struct

import numpy as np
import torch

from .resunet import ResUNet

_FLOAT = 1

_WIRE_VARINT = 0
_WIRE_LEN = 2
_WIRE_32BIT = 5

_ATTR_INT = 2
_ATTR_STRING = 3
_ATTR_INTS = 7


def _varint(value: int) -> bytes:
    if value < 0:
        raise ValueError("only non-negative varints are supported")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field: int, wire: int) -> bytes:
    return _varint((field << 3) | wire)


def _fv(field: int, value: int) -> bytes:
    return _tag(field, _WIRE_VARINT) + _varint(value)


def _fb(field: int, payload: bytes) -> bytes:
    return _tag(field, _WIRE_LEN) + _varint(len(payload)) + payload


def _fs(field: int, text: str) -> bytes:
    return _fb(field, text.encode("utf-8"))


def _tensor(name: str, array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype=np.float32)
    parts = [_fv(1, int(d)) for d in array.shape]
    parts.append(_fv(2, _FLOAT))
    parts.append(_fs(8, name))
    parts.append(_fb(9, array.tobytes()))
    return b"".join(parts)


def _attr_int(name: str, value: int) -> bytes:
    return _fs(1, name) + _fv(3, value) + _fv(20, _ATTR_INT)


def _attr_ints(name: str, values) -> bytes:
    body = b"".join(_fv(8, v) for v in values)
    return _fs(1, name) + body + _fv(20, _ATTR_INTS)


def _attr_string(name: str, value: str) -> bytes:
    return _fs(1, name) + _fb(4, value.encode("utf-8")) + _fv(20, _ATTR_STRING)


def _node(op_type: str, inputs, outputs, attrs=()) -> bytes:
    parts = [_fs(1, i) for i in inputs]
    parts += [_fs(2, o) for o in outputs]
    parts.append(_fs(4, op_type))
    parts += [_fb(5, a) for a in attrs]
    return b"".join(parts)


def _value_info(name: str, shape) -> bytes:
    dims = b"".join(_fb(1, _fv(1, int(d))) for d in shape)
    tensor_type = _fv(1, _FLOAT) + _fb(2, dims)
    return _fs(1, name) + _fb(2, _fb(1, tensor_type))


class _GraphBuilder:
    def __init__(self):
        self.nodes = []
        self.initializers = []
        self.counter = 0

    def _fresh(self, stem: str) -> str:
        self.counter += 1
        return f"{stem}_{self.counter}"

    def weight(self, stem: str, array) -> str:
        name = self._fresh(stem)
        self.initializers.append(_tensor(name, array))
        return name

    def conv(self, src: str, layer, stem: str) -> str:
        w = layer.weight.detach().numpy()
        b = layer.bias.detach().numpy()
        k = w.shape[2]
        pad = k // 2
        out = self._fresh(stem)
        attrs = [
            _attr_ints("dilations", [1, 1]),
            _attr_int("group", 1),
            _attr_ints("kernel_shape", [k, k]),
            _attr_ints("pads", [pad, pad, pad, pad]),
            _attr_ints("strides", [1, 1]),
        ]
        self.nodes.append(_node(
            "Conv",
            [src, self.weight(stem + "_w", w), self.weight(stem + "_b", b)],
            [out], attrs,
        ))
        return out

    def relu(self, src: str) -> str:
        out = self._fresh("relu")
        self.nodes.append(_node("Relu", [src], [out]))
        return out

    def maxpool(self, src: str) -> str:
        out = self._fresh("pool")
        attrs = [_attr_ints("kernel_shape", [2, 2]), _attr_ints("strides", [2, 2])]
        self.nodes.append(_node("MaxPool", [src], [out], attrs))
        return out

    def upsample(self, src: str) -> str:
        scales = self.weight("scales", np.array([1, 1, 2, 2], dtype=np.float32))
        out = self._fresh("up")
        attrs = [
            _attr_string("coordinate_transformation_mode", "asymmetric"),
            _attr_string("mode", "nearest"),
            _attr_string("nearest_mode", "floor"),
        ]
        self.nodes.append(_node("Resize", [src, "", scales], [out], attrs))
        return out

    def add(self, a: str, b: str, out: str = None) -> str:
        out = out or self._fresh("add")
        self.nodes.append(_node("Add", [a, b], [out]))
        return out


def export_resunet(net: ResUNet, side: int, path) -> None:
    """Serialize the network for inputs of shape (1, 1, side, side)."""
    factor = 2 ** net.spec.levels
    if side % factor:
        raise ValueError(f"side {side} is not divisible by {factor}")

    g = _GraphBuilder()
    with torch.no_grad():
        t = "input"
        skips = []
        for l, (conv_a, conv_b) in enumerate(zip(net.enc_a, net.enc_b)):
            t = g.relu(g.conv(t, conv_a, f"enc{l}a"))
            t = g.relu(g.conv(t, conv_b, f"enc{l}b"))
            skips.append(t)
            t = g.maxpool(t)
        t = g.relu(g.conv(t, net.bottom_a, "bottom_a"))
        t = g.relu(g.conv(t, net.bottom_b, "bottom_b"))
        for i, (up, conv_a, conv_b) in enumerate(zip(net.up, net.dec_a,
                                                     net.dec_b)):
            l = net.spec.levels - 1 - i
            t = g.relu(g.conv(g.upsample(t), up, f"up{l}"))
            t = g.add(t, skips[l])
            t = g.relu(g.conv(t, conv_a, f"dec{l}a"))
            t = g.relu(g.conv(t, conv_b, f"dec{l}b"))
        head = g.conv(t, net.head, "head")
        g.add("input", head, out="output")

    shape = (1, 1, side, side)
    graph = b"".join(
        [_fb(1, n) for n in g.nodes]
        + [_fs(2, "resunet")]
        + [_fb(5, init) for init in g.initializers]
        + [_fb(11, _value_info("input", shape))]
        + [_fb(12, _value_info("output", shape))]
    )
    opset = _fs(1, "") + _fv(2, 13)
    model = _fv(1, 7) + _fs(2, "resunet-training") + _fb(7, graph) + _fb(8, opset)
    with open(path, "wb") as fh:
        fh.write(model)
