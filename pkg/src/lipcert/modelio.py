"""On-disk model format.

A model is a directory holding

    model.json    manifest: format tag, input interface, layer list; every
                  parameter entry carries {"offset", "length", "shape"} into
                  the blob (offset/length in bytes)
    weights.bin   all parameters concatenated as little-endian IEEE-754
                  binary32, row-major; kernels are stored in tap-major order
                  [t1][t2][out-channel][in-channel]

Weights are widened to float64 on load; save narrows to float32, so only
float32-representable weights round-trip bit-identically (the architecture
generator produces exactly those).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ModelError
from .network import (
    Activation,
    AvgPool,
    Conv1D,
    Conv2D,
    Flatten,
    FullyConnected,
    GroupSort,
    Interface,
    MaxPool,
    Network,
    Residual,
    StateSpace,
    trace_shapes,
)

FORMAT_TAG = "lipcert-model/1"


class _BlobWriter:
    def __init__(self):
        self.chunks = []
        self.offset = 0

    def put(self, array: np.ndarray) -> dict:
        data = np.ascontiguousarray(array, dtype="<f4").tobytes()
        ref = {"offset": self.offset, "length": len(data), "shape": list(array.shape)}
        self.chunks.append(data)
        self.offset += len(data)
        return ref


def _layer_to_json(layer, blob: _BlobWriter) -> dict:
    if isinstance(layer, FullyConnected):
        return {"kind": "dense", "weight": blob.put(layer.weight), "bias": blob.put(layer.bias)}
    if isinstance(layer, (Conv1D, Conv2D)):
        return {
            "kind": "conv1d" if isinstance(layer, Conv1D) else "conv2d",
            "stride": list(layer.stride), "padding": layer.padding,
            "kernel": blob.put(layer.kernel), "bias": blob.put(layer.bias),
        }
    if isinstance(layer, StateSpace):
        return {"kind": "ssm", **{name: blob.put(getattr(layer, name)) for name in "ABCDg"}}
    if isinstance(layer, Activation):
        return {"kind": "activation", "fn": layer.fn}
    if isinstance(layer, GroupSort):
        return {"kind": "groupsort", "group_size": layer.group_size}
    if isinstance(layer, (AvgPool, MaxPool)):
        return {"kind": "avgpool" if isinstance(layer, AvgPool) and not isinstance(layer, MaxPool)
                else "maxpool",
                "extent": list(layer.extent), "stride": list(layer.stride)}
    if isinstance(layer, Flatten):
        return {"kind": "flatten"}
    if isinstance(layer, Residual):
        return {
            "kind": "residual",
            "inner_input": _interface_to_json(layer.inner.input),
            "inner": [_layer_to_json(inner, blob) for inner in layer.inner.layers],
        }
    raise ModelError(f"cannot serialize layer {type(layer).__name__}")


def _interface_to_json(shape: Interface) -> dict:
    return {"signal_dims": shape.signal_dims, "channels": shape.channels,
            "support": list(shape.support)}


def save_network(net: Network, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    blob = _BlobWriter()
    manifest = {
        "format": FORMAT_TAG,
        "input": _interface_to_json(net.input),
        "layers": [_layer_to_json(layer, blob) for layer in net.layers],
    }
    (path / "weights.bin").write_bytes(b"".join(blob.chunks))
    (path / "model.json").write_text(json.dumps(manifest, indent=2) + "\n")


class _BlobReader:
    def __init__(self, data: bytes):
        self.data = data

    def get(self, ref: dict, where: str) -> np.ndarray:
        try:
            offset, length, shape = ref["offset"], ref["length"], tuple(ref["shape"])
        except (TypeError, KeyError):
            raise ModelError(f"{where}: malformed parameter reference {ref!r}") from None
        if length != 4 * int(np.prod(shape)):
            raise ModelError(f"{where}: length {length} does not match shape {shape}")
        if offset < 0 or offset + length > len(self.data):
            raise ModelError(f"{where}: blob range {offset}+{length} exceeds blob size {len(self.data)}")
        flat = np.frombuffer(self.data, dtype="<f4", count=length // 4, offset=offset)
        return flat.reshape(shape).astype(np.float64)


def _interface_from_json(obj: dict, where: str) -> Interface:
    try:
        return Interface(int(obj["signal_dims"]), int(obj["channels"]),
                         tuple(int(n) for n in obj.get("support", [])))
    except (TypeError, KeyError, ValueError) as e:
        raise ModelError(f"{where}: malformed interface: {e}") from None


def _layer_from_json(obj: dict, blob: _BlobReader, where: str):
    kind = obj.get("kind")
    try:
        if kind == "dense":
            return FullyConnected(blob.get(obj["weight"], where), blob.get(obj["bias"], where))
        if kind in ("conv1d", "conv2d"):
            cls = Conv1D if kind == "conv1d" else Conv2D
            return cls(blob.get(obj["kernel"], where), blob.get(obj["bias"], where),
                       tuple(obj["stride"]), obj["padding"])
        if kind == "ssm":
            return StateSpace(*(blob.get(obj[name], where) for name in "ABCDg"))
        if kind == "activation":
            return Activation(obj["fn"])
        if kind == "groupsort":
            return GroupSort(int(obj["group_size"]))
        if kind in ("avgpool", "maxpool"):
            cls = AvgPool if kind == "avgpool" else MaxPool
            return cls(tuple(obj["extent"]), tuple(obj["stride"]))
        if kind == "flatten":
            return Flatten()
        if kind == "residual":
            inner_input = _interface_from_json(obj["inner_input"], where)
            inner = [_layer_from_json(o, blob, f"{where}.inner[{i}]")
                     for i, o in enumerate(obj["inner"])]
            return Residual(Network(inner_input, inner))
    except ModelError:
        raise
    except (TypeError, KeyError, ValueError) as e:
        raise ModelError(f"{where}: malformed {kind} layer: {e}") from None
    raise ModelError(f"{where}: unknown layer kind {kind!r}")


def load_network(path) -> Network:
    path = Path(path)
    manifest_path = path / "model.json"
    if not manifest_path.is_file():
        raise ModelError(f"no model.json in {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise ModelError(f"malformed manifest: {e}") from None
    if manifest.get("format") != FORMAT_TAG:
        raise ModelError(f"unsupported format tag {manifest.get('format')!r}, want {FORMAT_TAG!r}")
    blob_path = path / "weights.bin"
    blob = _BlobReader(blob_path.read_bytes() if blob_path.is_file() else b"")
    net = Network(
        _interface_from_json(manifest.get("input", {}), "input"),
        [_layer_from_json(obj, blob, f"layer {k}") for k, obj in enumerate(manifest.get("layers", []))],
    )
    trace_shapes(net)   # validate shape compatibility before handing the net out
    return net
