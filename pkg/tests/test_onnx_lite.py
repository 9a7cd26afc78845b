"""Wire-format codec and numpy executor for the bundled model format."""

import struct

import numpy as np
import pytest

from inctpv.onnx_lite import (
    OnnxModel,
    _decode_node,
    _decode_tensor,
    _field_bytes,
    _field_varint,
    _Reader,
    _varint,
    encode_node,
    encode_tensor,
    load_model,
    save_model,
)


def _ref_conv(x, w, bias, pads, strides):
    """Direct nested-loop convolution used as the comparison baseline."""
    x = np.pad(x, ((0, 0), (0, 0), (pads[0], pads[2]), (pads[1], pads[3])))
    bs, _, h, wd = x.shape
    co, _, kh, kw = w.shape
    sh, sw = strides
    ho = (h - kh) // sh + 1
    wo = (wd - kw) // sw + 1
    out = np.zeros((bs, co, ho, wo))
    for bi in range(bs):
        for f in range(co):
            for i in range(ho):
                for j in range(wo):
                    patch = x[bi, :, i * sh : i * sh + kh, j * sw : j * sw + kw]
                    out[bi, f, i, j] = np.sum(patch * w[f])
    if bias is not None:
        out = out + bias.reshape(1, -1, 1, 1)
    return out


class TestVarint:
    def test_roundtrip(self):
        for value in [0, 1, 127, 128, 129, 300, 16383, 16384, 2**21, 2**40 + 17]:
            reader = _Reader(_varint(value))
            assert reader.varint() == value
            assert reader.at_end()

    def test_single_byte_below_128(self):
        assert len(_varint(127)) == 1
        assert len(_varint(128)) == 2

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            _varint(-1)


class TestTensorCodec:
    def test_float32_roundtrip(self):
        rng = np.random.default_rng(60)
        array = rng.standard_normal((2, 3, 4)).astype(np.float32)
        name, decoded = _decode_tensor(encode_tensor("weights", array))
        assert name == "weights"
        assert decoded.dtype == np.float32
        assert np.array_equal(decoded, array)

    def test_int64_roundtrip(self):
        array = np.array([[5, -2], [0, 9]], dtype=np.int64)
        name, decoded = _decode_tensor(encode_tensor("idx", array))
        assert name == "idx"
        assert decoded.dtype == np.int64
        assert np.array_equal(decoded, array)

    def test_unsupported_dtype(self):
        with pytest.raises(ValueError):
            encode_tensor("bad", np.zeros(3, dtype=np.float64))

    def test_packed_dims_accepted(self):
        # the writer emits one varint per dim; packed form must decode too
        array = np.arange(6, dtype=np.float32).reshape(2, 3)
        packed = (
            _field_bytes(1, _varint(2) + _varint(3))
            + _field_varint(2, 1)
            + _field_bytes(8, b"t")
            + _field_bytes(9, array.tobytes())
        )
        name, decoded = _decode_tensor(packed)
        assert name == "t"
        assert np.array_equal(decoded, array)


class TestNodeCodec:
    def test_roundtrip_with_attributes(self):
        blob = encode_node(
            "Conv",
            ["x", "w", "b"],
            ["y"],
            name="conv0",
            attrs={
                "pads": [1, 1, 1, 1],
                "strides": [2, 2],
                "group": 1,
                "alpha": 0.5,
                "mode": "nearest",
            },
        )
        node = _decode_node(blob)
        assert node["op_type"] == "Conv"
        assert node["inputs"] == ["x", "w", "b"]
        assert node["outputs"] == ["y"]
        assert node["name"] == "conv0"
        assert node["attrs"]["pads"] == [1, 1, 1, 1]
        assert node["attrs"]["strides"] == [2, 2]
        assert node["attrs"]["group"] == 1
        assert node["attrs"]["alpha"] == pytest.approx(0.5)
        assert node["attrs"]["mode"] == "nearest"

    def test_tensor_attribute(self):
        value = np.array([1.0, 2.0], dtype=np.float32)
        node = _decode_node(encode_node("Constant", [], ["c"], attrs={"value": value}))
        assert np.array_equal(node["attrs"]["value"], value)

    def test_float_list_attribute(self):
        node = _decode_node(encode_node("Op", ["x"], ["y"], attrs={"scales": [1.0, 2.0]}))
        assert node["attrs"]["scales"] == pytest.approx([1.0, 2.0])

    def test_mixed_list_rejected(self):
        with pytest.raises(ValueError):
            encode_node("Op", ["x"], ["y"], attrs={"bad": [1, 2.0]})

    def test_bool_attribute_rejected(self):
        with pytest.raises(ValueError):
            encode_node("Op", ["x"], ["y"], attrs={"flag": True})


class TestModelRoundtrip:
    def test_header_and_graph(self, tmp_path):
        path = tmp_path / "m.onnx"
        w = np.ones((1, 1, 1, 1), dtype=np.float32)
        nodes = [encode_node("Conv", ["x", "w"], ["y"], name="c")]
        save_model(path, nodes, [("x", (1, 1, 4, 4))], [("y", (1, 1, 4, 4))], {"w": w})
        model = load_model(path)
        assert model["ir_version"] == 7
        assert model["producer"] == "onnx-lite"
        assert model["opset"] == 13
        graph = model["graph"]
        assert graph["name"] == "net"
        assert graph["inputs"] == [("x", [1, 1, 4, 4])]
        assert graph["outputs"] == [("y", [1, 1, 4, 4])]
        assert np.array_equal(graph["initializers"]["w"], w)
        assert len(graph["nodes"]) == 1
        assert graph["nodes"][0]["op_type"] == "Conv"

    def test_not_a_model_file(self, tmp_path):
        path = tmp_path / "junk.onnx"
        path.write_bytes(struct.pack("<f", 1.25))
        with pytest.raises(ValueError):
            load_model(path)

    def test_graphless_file_rejected(self, tmp_path):
        path = tmp_path / "nograph.onnx"
        path.write_bytes(_field_varint(1, 7))  # header only
        with pytest.raises(ValueError, match="graph"):
            load_model(path)


def _run_single(tmp_path, op_type, x, inputs, outputs, initializers, attrs=None,
                out_shape=None):
    path = tmp_path / "single.onnx"
    nodes = [encode_node(op_type, inputs, outputs, name="n0", attrs=attrs)]
    save_model(path, nodes, [("x", x.shape)],
               [(outputs[0], out_shape or x.shape)], initializers)
    return OnnxModel(path).run(x)


class TestConvExec:
    def test_matches_reference_stride_one(self, tmp_path):
        rng = np.random.default_rng(61)
        x = rng.standard_normal((1, 2, 8, 8)).astype(np.float32)
        w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
        out = _run_single(tmp_path, "Conv", x, ["x", "w"], ["y"], {"w": w},
                          attrs={"kernel_shape": [3, 3], "pads": [1, 1, 1, 1],
                                 "strides": [1, 1]},
                          out_shape=(1, 3, 8, 8))
        ref = _ref_conv(x, w, None, [1, 1, 1, 1], [1, 1])
        assert out.shape == (1, 3, 8, 8)
        assert np.max(np.abs(out - ref)) <= 1e-4

    def test_matches_reference_stride_two_with_bias(self, tmp_path):
        rng = np.random.default_rng(62)
        x = rng.standard_normal((2, 3, 7, 7)).astype(np.float32)
        w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        out = _run_single(tmp_path, "Conv", x, ["x", "w", "b"], ["y"],
                          {"w": w, "b": b},
                          attrs={"kernel_shape": [3, 3], "pads": [1, 1, 1, 1],
                                 "strides": [2, 2]},
                          out_shape=(2, 4, 4, 4))
        ref = _ref_conv(x, w, b, [1, 1, 1, 1], [2, 2])
        assert out.shape == (2, 4, 4, 4)
        assert np.max(np.abs(out - ref)) <= 1e-4

    def test_no_padding(self, tmp_path):
        rng = np.random.default_rng(63)
        x = rng.standard_normal((1, 1, 5, 5)).astype(np.float32)
        w = rng.standard_normal((1, 1, 3, 3)).astype(np.float32)
        out = _run_single(tmp_path, "Conv", x, ["x", "w"], ["y"], {"w": w},
                          attrs={"kernel_shape": [3, 3]},
                          out_shape=(1, 1, 3, 3))
        ref = _ref_conv(x, w, None, [0, 0, 0, 0], [1, 1])
        assert np.max(np.abs(out - ref)) <= 1e-4

    def test_group_conv_rejected(self, tmp_path):
        x = np.zeros((1, 2, 4, 4), dtype=np.float32)
        w = np.zeros((2, 1, 1, 1), dtype=np.float32)
        with pytest.raises(ValueError):
            _run_single(tmp_path, "Conv", x, ["x", "w"], ["y"], {"w": w},
                        attrs={"group": 2}, out_shape=(1, 2, 4, 4))


class TestPoolAndResizeExec:
    def test_maxpool_matches_blockwise_max(self, tmp_path):
        rng = np.random.default_rng(64)
        x = rng.standard_normal((1, 2, 6, 8)).astype(np.float32)
        out = _run_single(tmp_path, "MaxPool", x, ["x"], ["y"], {},
                          attrs={"kernel_shape": [2, 2], "strides": [2, 2]},
                          out_shape=(1, 2, 3, 4))
        ref = x.reshape(1, 2, 3, 2, 4, 2).max(axis=(3, 5))
        assert np.array_equal(out, ref)

    def test_maxpool_kernel_stride_mismatch(self, tmp_path):
        x = np.zeros((1, 1, 4, 4), dtype=np.float32)
        with pytest.raises(ValueError):
            _run_single(tmp_path, "MaxPool", x, ["x"], ["y"], {},
                        attrs={"kernel_shape": [2, 2], "strides": [1, 1]})

    def test_maxpool_indivisible_side(self, tmp_path):
        x = np.zeros((1, 1, 5, 4), dtype=np.float32)
        with pytest.raises(ValueError):
            _run_single(tmp_path, "MaxPool", x, ["x"], ["y"], {},
                        attrs={"kernel_shape": [2, 2], "strides": [2, 2]})

    def test_resize_doubles_by_repetition(self, tmp_path):
        rng = np.random.default_rng(65)
        x = rng.standard_normal((1, 2, 3, 4)).astype(np.float32)
        scales = np.array([1.0, 1.0, 2.0, 2.0], dtype=np.float32)
        attrs = {"mode": "nearest", "coordinate_transformation_mode": "asymmetric",
                 "nearest_mode": "floor"}
        out = _run_single(tmp_path, "Resize", x, ["x", "scales"], ["y"],
                          {"scales": scales}, attrs=attrs, out_shape=(1, 2, 6, 8))
        ref = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
        assert np.array_equal(out, ref)

    def test_resize_with_roi_slot(self, tmp_path):
        # scales may arrive as the third input with an unused roi placeholder
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        scales = np.array([1.0, 1.0, 3.0, 3.0], dtype=np.float32)
        attrs = {"mode": "nearest", "coordinate_transformation_mode": "asymmetric",
                 "nearest_mode": "floor"}
        out = _run_single(tmp_path, "Resize", x, ["x", "", "scales"], ["y"],
                          {"scales": scales}, attrs=attrs, out_shape=(1, 1, 6, 6))
        assert out.shape == (1, 1, 6, 6)
        assert np.array_equal(out, np.ones((1, 1, 6, 6), dtype=np.float32))

    def test_resize_fractional_scale_rejected(self, tmp_path):
        x = np.zeros((1, 1, 4, 4), dtype=np.float32)
        scales = np.array([1.0, 1.0, 1.5, 1.5], dtype=np.float32)
        attrs = {"mode": "nearest", "coordinate_transformation_mode": "asymmetric",
                 "nearest_mode": "floor"}
        with pytest.raises(ValueError):
            _run_single(tmp_path, "Resize", x, ["x", "scales"], ["y"],
                        {"scales": scales}, attrs=attrs)


class TestGraphExec:
    def test_relu_add_identity_chain(self, tmp_path):
        rng = np.random.default_rng(66)
        x = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
        shift = rng.standard_normal((1, 1, 4, 4)).astype(np.float32)
        path = tmp_path / "chain.onnx"
        nodes = [
            encode_node("Relu", ["x"], ["a"], name="relu"),
            encode_node("Add", ["a", "shift"], ["b"], name="add"),
            encode_node("Identity", ["b"], ["y"], name="id"),
        ]
        save_model(path, nodes, [("x", x.shape)], [("y", x.shape)], {"shift": shift})
        out = OnnxModel(path).run(x)
        assert np.array_equal(out, np.maximum(x, 0.0) + shift)

    def test_residual_conv_block(self, tmp_path):
        rng = np.random.default_rng(67)
        x = rng.standard_normal((1, 1, 6, 6)).astype(np.float32)
        w = rng.standard_normal((1, 1, 3, 3)).astype(np.float32)
        path = tmp_path / "res.onnx"
        nodes = [
            encode_node("Conv", ["x", "w"], ["c"], name="conv",
                        attrs={"kernel_shape": [3, 3], "pads": [1, 1, 1, 1],
                               "strides": [1, 1]}),
            encode_node("Relu", ["c"], ["r"], name="relu"),
            encode_node("Add", ["r", "x"], ["y"], name="skip"),
        ]
        save_model(path, nodes, [("x", x.shape)], [("y", x.shape)], {"w": w})
        out = OnnxModel(path).run(x)
        ref = np.maximum(_ref_conv(x, w, None, [1, 1, 1, 1], [1, 1]), 0.0) + x
        assert np.max(np.abs(out - ref)) <= 1e-4

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    def test_nonfinite_activation_raises(self, tmp_path):
        x = np.full((1, 1, 2, 2), 3.0e38, dtype=np.float32)
        big = np.full((1, 1, 2, 2), 3.0e38, dtype=np.float32)
        path = tmp_path / "blow.onnx"
        nodes = [encode_node("Add", ["x", "big"], ["y"], name="boom")]
        save_model(path, nodes, [("x", x.shape)], [("y", x.shape)], {"big": big})
        with pytest.raises(FloatingPointError):
            OnnxModel(path).run(x)

    def test_unsupported_op(self, tmp_path):
        x = np.zeros((1, 1, 2, 2), dtype=np.float32)
        path = tmp_path / "sub.onnx"
        nodes = [encode_node("Sub", ["x", "x"], ["y"], name="sub")]
        save_model(path, nodes, [("x", x.shape)], [("y", x.shape)], {})
        with pytest.raises(ValueError):
            OnnxModel(path).run(x)

    def test_input_shape_validated(self, tmp_path):
        x = np.zeros((1, 1, 4, 4), dtype=np.float32)
        path = tmp_path / "id.onnx"
        nodes = [encode_node("Identity", ["x"], ["y"], name="id")]
        save_model(path, nodes, [("x", (1, 1, 4, 4))], [("y", (1, 1, 4, 4))], {})
        model = OnnxModel(path)
        with pytest.raises(ValueError):
            model.run(np.zeros((1, 1, 5, 5), dtype=np.float32))

    def test_two_runtime_inputs_rejected(self, tmp_path):
        path = tmp_path / "two.onnx"
        nodes = [encode_node("Add", ["x", "z"], ["y"], name="add")]
        save_model(path, nodes, [("x", (1, 1, 2, 2)), ("z", (1, 1, 2, 2))],
                   [("y", (1, 1, 2, 2))], {})
        with pytest.raises(ValueError):
            OnnxModel(path)

    def test_initializer_listed_as_graph_input_is_not_runtime(self, tmp_path):
        # some exporters list weights among graph inputs; they must not count
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        w = np.full((1, 1, 2, 2), 2.0, dtype=np.float32)
        path = tmp_path / "init_in.onnx"
        nodes = [encode_node("Add", ["x", "w"], ["y"], name="add")]
        save_model(path, nodes, [("x", x.shape), ("w", w.shape)], [("y", x.shape)],
                   {"w": w})
        out = OnnxModel(path).run(x)
        assert np.array_equal(out, np.full((1, 1, 2, 2), 3.0, dtype=np.float32))
