"""Manifest + binary blob tensor files.

A manifest is JSON listing each module (name, rows, cols, byte offset,
activation, optional bias offset). The blob holds little-endian float32
values, row-major, in manifest order. Calibration sets use the same layout
with a single ``calib`` entry.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .flow import CalibrationSet, ModuleSpec, NetworkSpec

FORMAT = "marrq-tensors/1"
_DTYPE = np.dtype("<f4")


def _write(manifest_path: Path, entries: list[dict], arrays: list[np.ndarray], extra: dict):
    manifest_path = Path(manifest_path)
    blob_path = manifest_path.with_suffix(".bin")
    offset = 0
    chunks = []
    for arr in arrays:
        data = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
        chunks.append((offset, data))
        offset += len(data)
    manifest = {"format": FORMAT, "blob": blob_path.name, **extra, "modules": entries}
    blob_path.write_bytes(b"".join(data for _, data in chunks))
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def _read_blob(manifest_path: Path) -> tuple[dict, bytes]:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{manifest_path}: unsupported format {manifest.get('format')!r}")
    blob = (manifest_path.parent / manifest["blob"]).read_bytes()
    return manifest, blob


def _take(blob: bytes, offset: int, count: int) -> np.ndarray:
    end = offset + count * _DTYPE.itemsize
    if offset < 0 or end > len(blob):
        raise ValueError(f"blob too short for {count} values at offset {offset}")
    return np.frombuffer(blob, dtype=_DTYPE, count=count, offset=offset).astype(np.float64)


def save_network(net: NetworkSpec, manifest_path) -> Path:
    entries, arrays = [], []
    offset = 0
    for m in net.modules:
        entry = {"name": m.name, "rows": m.d_out, "cols": m.d_in, "offset": offset,
                 "activation": m.activation_after}
        arrays.append(m.weight)
        offset += m.weight.size * _DTYPE.itemsize
        if m.bias is not None:
            entry["bias_offset"] = offset
            arrays.append(m.bias)
            offset += m.bias.size * _DTYPE.itemsize
        entries.append(entry)
    return _write(manifest_path, entries, arrays, {"input_dim": net.input_dim})


def load_network(manifest_path) -> NetworkSpec:
    manifest, blob = _read_blob(manifest_path)
    modules = []
    for e in manifest["modules"]:
        w = _take(blob, e["offset"], e["rows"] * e["cols"]).reshape(e["rows"], e["cols"])
        b = _take(blob, e["bias_offset"], e["rows"]) if "bias_offset" in e else None
        modules.append(ModuleSpec(name=e["name"], weight=w, bias=b,
                                  activation_after=e.get("activation", "none")))
    input_dim = manifest.get("input_dim", modules[0].d_in if modules else 0)
    return NetworkSpec(tuple(modules), input_dim)


def save_calibration(calib: CalibrationSet, manifest_path) -> Path:
    rows, cols = calib.inputs.shape
    entry = {"name": "calib", "rows": rows, "cols": cols, "offset": 0, "activation": "none"}
    return _write(manifest_path, [entry], [calib.inputs], {"seed": calib.seed})


def load_calibration(manifest_path) -> CalibrationSet:
    manifest, blob = _read_blob(manifest_path)
    if len(manifest["modules"]) != 1:
        raise ValueError("calibration manifest must have exactly one entry")
    e = manifest["modules"][0]
    x = _take(blob, e["offset"], e["rows"] * e["cols"]).reshape(e["rows"], e["cols"])
    return CalibrationSet(x, seed=int(manifest.get("seed", 0)))
