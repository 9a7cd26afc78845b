"""Minimal ONNX interchange support: wire-format codec plus a numpy executor.

Covers the operator subset used by the exported guess networks: Conv (stride
1 or 2, zero padding), Relu, MaxPool (kernel == stride), Resize (nearest,
asymmetric, floor, integer scale), Add, and Identity. Tensors are float32,
stored as raw little-endian data. Opset 13 semantics.

The writer produces standard protobuf wire format, so files are readable by
any ONNX runtime; the reader accepts both packed and unpacked repeated
scalar fields.
"""

import struct

import numpy as np

FLOAT = 1
INT64 = 7

ATTR_FLOAT = 1
ATTR_INT = 2
ATTR_STRING = 3
ATTR_TENSOR = 4
ATTR_FLOATS = 6
ATTR_INTS = 7

_WIRE_VARINT = 0
_WIRE_64BIT = 1
_WIRE_LEN = 2
_WIRE_32BIT = 5


# ---------------------------------------------------------------- encoding

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


def _field_varint(field: int, value: int) -> bytes:
    return _tag(field, _WIRE_VARINT) + _varint(value)


def _field_bytes(field: int, payload: bytes) -> bytes:
    return _tag(field, _WIRE_LEN) + _varint(len(payload)) + payload


def _field_string(field: int, text: str) -> bytes:
    return _field_bytes(field, text.encode("utf-8"))


def _field_float(field: int, value: float) -> bytes:
    return _tag(field, _WIRE_32BIT) + struct.pack("<f", value)


def encode_tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype == np.float32:
        dtype = FLOAT
    elif array.dtype == np.int64:
        dtype = INT64
    else:
        raise ValueError(f"unsupported tensor dtype {array.dtype}")
    parts = [_field_varint(1, int(d)) for d in array.shape]
    parts.append(_field_varint(2, dtype))
    parts.append(_field_string(8, name))
    parts.append(_field_bytes(9, array.tobytes()))
    return b"".join(parts)


def _encode_attribute(name: str, value) -> bytes:
    parts = [_field_string(1, name)]
    if isinstance(value, float):
        parts.append(_field_float(2, value))
        parts.append(_field_varint(20, ATTR_FLOAT))
    elif isinstance(value, bool):
        raise ValueError("boolean attributes are not supported")
    elif isinstance(value, int):
        parts.append(_field_varint(3, value))
        parts.append(_field_varint(20, ATTR_INT))
    elif isinstance(value, str):
        parts.append(_field_bytes(4, value.encode("utf-8")))
        parts.append(_field_varint(20, ATTR_STRING))
    elif isinstance(value, np.ndarray):
        parts.append(_field_bytes(5, encode_tensor(name + "_value", value)))
        parts.append(_field_varint(20, ATTR_TENSOR))
    elif isinstance(value, (list, tuple)):
        if all(isinstance(v, int) for v in value):
            parts.extend(_field_varint(8, v) for v in value)
            parts.append(_field_varint(20, ATTR_INTS))
        elif all(isinstance(v, float) for v in value):
            parts.extend(_tag(7, _WIRE_32BIT) + struct.pack("<f", v) for v in value)
            parts.append(_field_varint(20, ATTR_FLOATS))
        else:
            raise ValueError(f"mixed-type attribute list for {name}")
    else:
        raise ValueError(f"unsupported attribute type for {name}: {type(value)}")
    return b"".join(parts)


def encode_node(op_type: str, inputs, outputs, name: str = "", attrs: dict = None) -> bytes:
    parts = [_field_string(1, i) for i in inputs]
    parts += [_field_string(2, o) for o in outputs]
    if name:
        parts.append(_field_string(3, name))
    parts.append(_field_string(4, op_type))
    for key in sorted(attrs or {}):
        parts.append(_field_bytes(5, _encode_attribute(key, attrs[key])))
    return b"".join(parts)


def _encode_value_info(name: str, shape, elem_type: int = FLOAT) -> bytes:
    dims = b"".join(
        _field_bytes(1, _field_varint(1, int(d))) for d in shape
    )
    tensor_type = _field_varint(1, elem_type) + _field_bytes(2, dims)
    type_proto = _field_bytes(1, tensor_type)
    return _field_string(1, name) + _field_bytes(2, type_proto)


def encode_model(nodes, graph_inputs, graph_outputs, initializers,
                 graph_name: str = "net", opset: int = 13,
                 producer: str = "onnx-lite") -> bytes:
    """Assemble a serialized model.

    nodes: list of encode_node() byte strings, in topological order.
    graph_inputs/graph_outputs: lists of (name, shape) for float tensors.
    initializers: dict name -> ndarray (float32 or int64).
    """
    parts = [_field_bytes(1, n) for n in nodes]
    parts.append(_field_string(2, graph_name))
    for name, array in initializers.items():
        parts.append(_field_bytes(5, encode_tensor(name, array)))
    for name, shape in graph_inputs:
        parts.append(_field_bytes(11, _encode_value_info(name, shape)))
    for name, shape in graph_outputs:
        parts.append(_field_bytes(12, _encode_value_info(name, shape)))
    graph = b"".join(parts)

    opset_proto = _field_string(1, "") + _field_varint(2, opset)
    model = (
        _field_varint(1, 7)  # IR version
        + _field_string(2, producer)
        + _field_bytes(7, graph)
        + _field_bytes(8, opset_proto)
    )
    return model


def save_model(path, nodes, graph_inputs, graph_outputs, initializers, **kwargs):
    blob = encode_model(nodes, graph_inputs, graph_outputs, initializers, **kwargs)
    with open(path, "wb") as fh:
        fh.write(blob)


# ---------------------------------------------------------------- decoding

class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def at_end(self):
        return self.pos >= len(self.buf)

    def varint(self) -> int:
        result = 0
        shift = 0
        while True:
            if self.pos >= len(self.buf):
                raise ValueError("truncated varint")
            byte = self.buf[self.pos]
            self.pos += 1
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return result
            shift += 7

    def fields(self):
        """Yield (field_number, wire_type, value); value is bytes for
        length-delimited fields, int for varints, raw bytes for fixed."""
        while not self.at_end():
            key = self.varint()
            field, wire = key >> 3, key & 0x07
            if wire == _WIRE_VARINT:
                yield field, wire, self.varint()
            elif wire == _WIRE_LEN:
                size = self.varint()
                if self.pos + size > len(self.buf):
                    raise ValueError("truncated length-delimited field")
                yield field, wire, self.buf[self.pos : self.pos + size]
                self.pos += size
            elif wire == _WIRE_32BIT:
                yield field, wire, self.buf[self.pos : self.pos + 4]
                self.pos += 4
            elif wire == _WIRE_64BIT:
                yield field, wire, self.buf[self.pos : self.pos + 8]
                self.pos += 8
            else:
                raise ValueError(f"unsupported wire type {wire}")


def _repeated_ints(existing, wire, value):
    if wire == _WIRE_VARINT:
        existing.append(value)
    else:  # packed
        reader = _Reader(value)
        while not reader.at_end():
            existing.append(reader.varint())
    return existing


def _decode_tensor(buf: bytes):
    dims, dtype, name, raw, floats = [], FLOAT, "", None, []
    for field, wire, value in _Reader(buf).fields():
        if field == 1:
            _repeated_ints(dims, wire, value)
        elif field == 2:
            dtype = value
        elif field == 4:
            if wire == _WIRE_32BIT:
                floats.append(struct.unpack("<f", value)[0])
            else:
                floats.extend(np.frombuffer(value, dtype="<f4").tolist())
        elif field == 8:
            name = value.decode("utf-8")
        elif field == 9:
            raw = value
    if dtype == FLOAT:
        np_dtype = np.float32
    elif dtype == INT64:
        np_dtype = np.int64
    else:
        raise ValueError(f"unsupported tensor data_type {dtype} for {name!r}")
    if raw is not None:
        array = np.frombuffer(raw, dtype=np_dtype).reshape(dims)
    else:
        array = np.asarray(floats, dtype=np_dtype).reshape(dims)
    return name, array.copy()


def _decode_attribute(buf: bytes):
    name, atype = "", None
    f_val, i_val, s_val, t_val = None, None, None, None
    floats, ints = [], []
    for field, wire, value in _Reader(buf).fields():
        if field == 1:
            name = value.decode("utf-8")
        elif field == 2:
            f_val = struct.unpack("<f", value)[0]
        elif field == 3:
            i_val = value
        elif field == 4:
            s_val = value.decode("utf-8")
        elif field == 5:
            t_val = _decode_tensor(value)[1]
        elif field == 7:
            if wire == _WIRE_32BIT:
                floats.append(struct.unpack("<f", value)[0])
            else:
                floats.extend(np.frombuffer(value, dtype="<f4").tolist())
        elif field == 8:
            _repeated_ints(ints, wire, value)
        elif field == 20:
            atype = value
    if atype == ATTR_FLOAT:
        return name, f_val
    if atype == ATTR_INT:
        return name, i_val
    if atype == ATTR_STRING:
        return name, s_val
    if atype == ATTR_TENSOR:
        return name, t_val
    if atype == ATTR_FLOATS:
        return name, floats
    if atype == ATTR_INTS:
        return name, ints
    # fall back on whichever payload field is present
    for candidate in (f_val, i_val, s_val, t_val):
        if candidate is not None:
            return name, candidate
    return name, ints or floats


def _decode_value_info(buf: bytes):
    name, shape = "", []
    for field, _, value in _Reader(buf).fields():
        if field == 1:
            name = value.decode("utf-8")
        elif field == 2:
            for tfield, _, tval in _Reader(value).fields():
                if tfield != 1:
                    continue
                for sfield, _, sval in _Reader(tval).fields():
                    if sfield != 2:
                        continue
                    for dfield, dwire, dval in _Reader(sval).fields():
                        if dfield != 1:
                            continue
                        for xfield, _, xval in _Reader(dval).fields():
                            if xfield == 1:
                                shape.append(xval)
                            elif xfield == 2:
                                shape.append(None)  # symbolic dimension
    return name, shape


def _decode_node(buf: bytes):
    node = {"inputs": [], "outputs": [], "name": "", "op_type": "", "attrs": {}}
    for field, _, value in _Reader(buf).fields():
        if field == 1:
            node["inputs"].append(value.decode("utf-8"))
        elif field == 2:
            node["outputs"].append(value.decode("utf-8"))
        elif field == 3:
            node["name"] = value.decode("utf-8")
        elif field == 4:
            node["op_type"] = value.decode("utf-8")
        elif field == 5:
            aname, aval = _decode_attribute(value)
            node["attrs"][aname] = aval
    return node


def _decode_graph(buf: bytes):
    graph = {"nodes": [], "initializers": {}, "inputs": [], "outputs": [], "name": ""}
    for field, _, value in _Reader(buf).fields():
        if field == 1:
            graph["nodes"].append(_decode_node(value))
        elif field == 2:
            graph["name"] = value.decode("utf-8")
        elif field == 5:
            name, array = _decode_tensor(value)
            graph["initializers"][name] = array
        elif field == 11:
            graph["inputs"].append(_decode_value_info(value))
        elif field == 12:
            graph["outputs"].append(_decode_value_info(value))
    return graph


def load_model(path):
    """Parse a model file into {graph, ir_version, producer, opset}."""
    with open(path, "rb") as fh:
        buf = fh.read()
    model = {"graph": None, "ir_version": None, "producer": "", "opset": None}
    for field, _, value in _Reader(buf).fields():
        if field == 1:
            model["ir_version"] = value
        elif field == 2:
            model["producer"] = value.decode("utf-8")
        elif field == 7:
            model["graph"] = _decode_graph(value)
        elif field == 8:
            for ofield, _, oval in _Reader(value).fields():
                if ofield == 2:
                    model["opset"] = oval
    if model["graph"] is None:
        raise ValueError(f"{path}: no graph found; not a model file?")
    return model


# ---------------------------------------------------------------- executor

def _op_conv(x, weight, bias, attrs):
    pads = attrs.get("pads", [0, 0, 0, 0])
    strides = attrs.get("strides", [1, 1])
    dilations = attrs.get("dilations", [1, 1])
    group = attrs.get("group", 1)
    if list(dilations) != [1, 1] or group != 1:
        raise ValueError("only dilation 1 and group 1 convolutions are supported")
    sh, sw = strides
    padded = np.pad(x, ((0, 0), (0, 0), (pads[0], pads[2]), (pads[1], pads[3])))
    batch, chans, ph, pw = padded.shape
    f_out, _, kh, kw = weight.shape
    h_out = (ph - kh) // sh + 1
    w_out = (pw - kw) // sw + 1
    wmat = weight.reshape(f_out, chans * kh * kw)
    out = np.empty((batch, f_out, h_out, w_out), dtype=np.float32)
    # tile output rows so the unfolded buffer stays modest
    tile = max(1, (1 << 21) // max(1, chans * kh * kw * w_out))
    for b in range(batch):
        for r0 in range(0, h_out, tile):
            r1 = min(h_out, r0 + tile)
            cols = np.empty((chans, kh, kw, r1 - r0, w_out), dtype=np.float32)
            for di in range(kh):
                row_stop = (r1 - 1) * sh + di + 1
                for dj in range(kw):
                    col_stop = (w_out - 1) * sw + dj + 1
                    cols[:, di, dj] = padded[b, :, r0 * sh + di : row_stop : sh,
                                             dj : col_stop : sw]
            prod = wmat @ cols.reshape(chans * kh * kw, -1)
            out[b, :, r0:r1] = prod.reshape(f_out, r1 - r0, w_out)
    if bias is not None:
        out += bias.reshape(1, -1, 1, 1)
    return out


def _op_maxpool(x, attrs):
    kernel = attrs.get("kernel_shape", [2, 2])
    strides = attrs.get("strides", kernel)
    if list(kernel) != list(strides):
        raise ValueError("only kernel == stride pooling is supported")
    kh, kw = kernel
    b, c, h, w = x.shape
    if h % kh or w % kw:
        raise ValueError(f"pooling {kh}x{kw} needs divisible sides, got {h}x{w}")
    return x.reshape(b, c, h // kh, kh, w // kw, kw).max(axis=(3, 5))


def _op_resize(x, scales, attrs):
    if attrs.get("mode", "nearest") != "nearest":
        raise ValueError("only nearest resize is supported")
    coord = attrs.get("coordinate_transformation_mode", "half_pixel")
    nearest = attrs.get("nearest_mode", "round_prefer_floor")
    if coord != "asymmetric" or nearest != "floor":
        raise ValueError("only asymmetric/floor nearest resize is supported")
    if len(scales) != 4 or scales[0] != 1.0 or scales[1] != 1.0:
        raise ValueError("resize must keep batch and channel dimensions")
    fh, fw = scales[2], scales[3]
    if fh < 1 or fw < 1 or fh != int(fh) or fw != int(fw):
        raise ValueError("only integer upscale factors are supported")
    return np.repeat(np.repeat(x, int(fh), axis=2), int(fw), axis=3)


class OnnxModel:
    """Loaded model with a single float input and output, runnable on numpy."""

    def __init__(self, path):
        parsed = load_model(path)
        self.graph = parsed["graph"]
        self.opset = parsed["opset"]
        inits = self.graph["initializers"]
        runtime_inputs = [(n, s) for n, s in self.graph["inputs"] if n not in inits]
        if len(runtime_inputs) != 1 or len(self.graph["outputs"]) != 1:
            raise ValueError("expected exactly one runtime input and one output")
        self.input_name, self.input_shape = runtime_inputs[0]
        self.output_name = self.graph["outputs"][0][0]

    def run(self, x: np.ndarray) -> np.ndarray:
        tensors = dict(self.graph["initializers"])
        expected = tuple(d for d in self.input_shape)
        x = np.asarray(x, dtype=np.float32)
        if len(x.shape) != len(expected) or any(
            e is not None and e != g for e, g in zip(expected, x.shape)
        ):
            raise ValueError(f"input shape {x.shape} does not match {expected}")
        tensors[self.input_name] = x

        for node in self.graph["nodes"]:
            op = node["op_type"]
            ins = node["inputs"]
            if op == "Conv":
                bias = tensors[ins[2]] if len(ins) > 2 and ins[2] else None
                result = _op_conv(tensors[ins[0]], tensors[ins[1]], bias, node["attrs"])
            elif op == "Relu":
                result = np.maximum(tensors[ins[0]], 0.0)
            elif op == "MaxPool":
                result = _op_maxpool(tensors[ins[0]], node["attrs"])
            elif op == "Resize":
                scales_name = ins[2] if len(ins) > 2 else ins[1]
                scales = np.asarray(tensors[scales_name], dtype=np.float64).tolist()
                result = _op_resize(tensors[ins[0]], scales, node["attrs"])
            elif op == "Add":
                result = tensors[ins[0]] + tensors[ins[1]]
            elif op == "Identity":
                result = tensors[ins[0]]
            else:
                raise ValueError(f"unsupported op {op} in node {node['name']!r}")
            if not np.all(np.isfinite(result)):
                raise FloatingPointError(
                    f"non-finite activations after node {node['name'] or op!r}"
                )
            tensors[node["outputs"][0]] = result

        return tensors[self.output_name]
