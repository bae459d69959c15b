import json

import numpy as np
import pytest

from marrq import storage
from marrq.flow import (CalibrationSet, DualFlow, ModuleSpec, NetworkSpec, capture_flows, forward,
                        generate_toy_network)
from marrq.quantizer import QuantConfig, quantize_activations_per_token


def test_toy_network_shape_and_determinism():
    a = generate_toy_network(3, [4, 6, 5, 2], seed=3)
    b = generate_toy_network(3, [4, 6, 5, 2], seed=3)
    assert [m.weight.shape for m in a.modules] == [(6, 4), (5, 6), (2, 5)]
    assert [m.activation_after for m in a.modules] == ["relu", "relu", "none"]
    assert all(np.array_equal(x.weight, y.weight) for x, y in zip(a.modules, b.modules))


def test_network_rejects_broken_chain():
    m0 = ModuleSpec("a", np.zeros((3, 2)))
    m1 = ModuleSpec("b", np.zeros((2, 4)))
    with pytest.raises(ValueError, match="b"):
        NetworkSpec((m0, m1), 2)


def test_fp_flow_cache_matches_forward(small_net, small_calib):
    flow = DualFlow(small_net, small_calib, QuantConfig(2, 4))
    assert np.allclose(flow.fp_output, forward(small_net, small_calib.inputs))
    x_fp, _, z_fp = flow.capture()
    assert np.array_equal(x_fp, small_calib.inputs)
    assert np.allclose(z_fp, small_net.modules[0].linear(x_fp))


def test_quantized_flow_uses_quantized_weights(small_net, small_calib):
    cfg = QuantConfig(2, 4)
    zeros = [np.zeros_like(m.weight) for m in small_net.modules]
    flow = DualFlow(small_net, small_calib, cfg)
    flow.advance(zeros[0])
    _, x_hat, _ = flow.capture()
    relu_bias = np.maximum(small_net.modules[0].bias, 0.0)[:, None] * np.ones((1, small_calib.n_samples))
    assert np.allclose(x_hat, quantize_activations_per_token(relu_bias, 4))


def test_without_quantization_flows_coincide(small_net, small_calib):
    cfg = QuantConfig(16, 16)
    weights = [m.weight for m in small_net.modules]
    x_fp, x_hat, _ = capture_flows(small_net, weights[:2], small_calib, cfg, 2)
    assert np.array_equal(x_fp, x_hat)


def test_capture_flows_validates(small_net, small_calib):
    with pytest.raises(IndexError):
        capture_flows(small_net, [], small_calib, QuantConfig(), 5)
    with pytest.raises(ValueError):
        capture_flows(small_net, [], small_calib, QuantConfig(), 1)


def test_calibration_dim_mismatch(small_net):
    with pytest.raises(ValueError):
        DualFlow(small_net, CalibrationSet.generate(3, 4, seed=0), QuantConfig())


def test_network_round_trip_is_float32(tmp_path, small_net):
    path = storage.save_network(small_net, tmp_path / "net.json")
    loaded = storage.load_network(path)
    assert len(loaded) == len(small_net)
    for a, b in zip(small_net.modules, loaded.modules):
        assert np.array_equal(b.weight, a.weight.astype(np.float32).astype(np.float64))
        assert np.array_equal(b.bias, a.bias.astype(np.float32).astype(np.float64))
        assert (a.name, a.activation_after) == (b.name, b.activation_after)
    manifest = json.loads(path.read_text())
    assert manifest["modules"][0]["offset"] == 0
    assert (tmp_path / "net.bin").stat().st_size == 4 * sum(
        m.weight.size + m.bias.size for m in small_net.modules)


def test_calibration_round_trip(tmp_path, small_calib):
    loaded = storage.load_calibration(storage.save_calibration(small_calib, tmp_path / "c.json"))
    assert loaded.seed == small_calib.seed
    assert np.array_equal(loaded.inputs, small_calib.inputs.astype(np.float32).astype(np.float64))


def test_truncated_blob_is_reported(tmp_path, small_net):
    path = storage.save_network(small_net, tmp_path / "net.json")
    blob = tmp_path / "net.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(ValueError, match="blob too short"):
        storage.load_network(path)


def test_wrong_format_tag(tmp_path, small_net):
    path = storage.save_network(small_net, tmp_path / "net.json")
    data = json.loads(path.read_text())
    data["format"] = "other"
    path.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="format"):
        storage.load_network(path)
