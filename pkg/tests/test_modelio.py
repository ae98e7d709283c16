import json
import struct

import numpy as np
import pytest

from lipcert.errors import ModelError
from lipcert.genarch import generate_architecture
from lipcert.modelio import load_network, save_network
from lipcert.network import evaluate


def _hand_written_fc_model(tmp_path, weights=(1.0, 2.0, 3.0, 4.0, 5.0, 6.0),
                           fmt="lipcert-model/1", blob_override=None, layers=None):
    d = tmp_path / "m"
    d.mkdir()
    if layers is None:
        layers = [{
            "kind": "dense",
            "weight": {"offset": 0, "length": 16, "shape": [2, 2]},
            "bias": {"offset": 16, "length": 8, "shape": [2]},
        }]
    manifest = {"format": fmt, "input": {"signal_dims": 0, "channels": 2, "support": []},
                "layers": layers}
    (d / "model.json").write_text(json.dumps(manifest))
    blob = blob_override if blob_override is not None else struct.pack("<6f", *weights)
    (d / "weights.bin").write_bytes(blob)
    return d


def test_load_hand_written_dense(tmp_path):
    d = _hand_written_fc_model(tmp_path)
    net = load_network(d)
    np.testing.assert_array_equal(net.layers[0].weight, [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(net.layers[0].bias, [5.0, 6.0])


def test_load_rejects_bad_format_tag(tmp_path):
    d = _hand_written_fc_model(tmp_path, fmt="something-else/9")
    with pytest.raises(ModelError, match="format tag"):
        load_network(d)


def test_load_rejects_short_blob(tmp_path):
    d = _hand_written_fc_model(tmp_path, blob_override=b"\x00" * 20)
    with pytest.raises(ModelError, match="blob"):
        load_network(d)


def test_load_rejects_length_shape_mismatch(tmp_path):
    layers = [{"kind": "dense",
               "weight": {"offset": 0, "length": 12, "shape": [2, 2]},
               "bias": {"offset": 16, "length": 8, "shape": [2]}}]
    d = _hand_written_fc_model(tmp_path, layers=layers)
    with pytest.raises(ModelError, match="layer 0"):
        load_network(d)


def test_load_rejects_missing_manifest(tmp_path):
    with pytest.raises(ModelError, match="model.json"):
        load_network(tmp_path)


def test_load_reports_offending_layer_for_shape_errors(tmp_path):
    layers = [
        {"kind": "dense",
         "weight": {"offset": 0, "length": 16, "shape": [2, 2]},
         "bias": {"offset": 16, "length": 8, "shape": [2]}},
        {"kind": "groupsort", "group_size": 3},
    ]
    d = _hand_written_fc_model(tmp_path, layers=layers)
    with pytest.raises(ModelError, match="layer 1: group size does not divide channels"):
        load_network(d)


@pytest.mark.parametrize("name", ["lenet5-avg", "2c2f", "fc-r18"])
def test_roundtrip_bit_identical(tmp_path, name):
    net = generate_architecture(name, seed=3)
    save_network(net, tmp_path / name)
    back = load_network(tmp_path / name)
    flat_a, flat_b = _all_params(net), _all_params(back)
    assert len(flat_a) == len(flat_b)
    for a, b in zip(flat_a, flat_b):
        np.testing.assert_array_equal(a, b)   # bit-for-bit
    u = np.random.default_rng(0).standard_normal(net.input.array_shape())
    np.testing.assert_array_equal(evaluate(net, u), evaluate(back, u))


def _all_params(net):
    out = []
    for layer in net.layers:
        for attr in ("weight", "bias", "kernel", "A", "B", "C", "D", "g"):
            if hasattr(layer, attr):
                out.append(getattr(layer, attr))
        if hasattr(layer, "inner"):
            out.extend(_all_params(layer.inner))
    return out


def test_roundtrip_preserves_structure(tmp_path):
    net = generate_architecture("lenet5-max", seed=1)
    save_network(net, tmp_path / "m")
    back = load_network(tmp_path / "m")
    assert [type(a).__name__ for a in net.layers] == [type(b).__name__ for b in back.layers]
    manifest = json.loads((tmp_path / "m" / "model.json").read_text())
    assert manifest["format"] == "lipcert-model/1"
    assert manifest["layers"][2]["kind"] == "maxpool"
