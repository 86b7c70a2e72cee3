"""Flat binary checkpoints with a JSON manifest.

A checkpoint is two files: ``<stem>.bin`` holding the raw little-endian
float64 bytes of every array back to back, and ``<stem>.json`` mapping
each name to its byte offset and shape (plus caller metadata). Reload
is bit-exact.
"""

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(stem, arrays: dict, meta: dict = None) -> None:
    """Write ``arrays`` (name -> ndarray) to ``<stem>.bin/.json``."""
    stem = Path(stem)
    manifest = {"format_version": FORMAT_VERSION, "meta": meta or {}, "arrays": {}}
    offset = 0
    with open(stem.with_suffix(".bin"), "wb") as fh:
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(data.tobytes())
            manifest["arrays"][name] = {
                "offset": offset,
                "shape": list(data.shape),
            }
            offset += data.nbytes
    with open(stem.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(stem):
    """Read back ``(arrays, meta)`` from ``<stem>.bin/.json``."""
    stem = Path(stem)
    with open(stem.with_suffix(".json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(
            f"unsupported checkpoint format {manifest.get('format_version')!r}")
    raw = stem.with_suffix(".bin").read_bytes()
    arrays = {}
    for name, entry in manifest["arrays"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        flat = np.frombuffer(raw, dtype="<f8", count=count,
                             offset=entry["offset"])
        arrays[name] = flat.reshape(shape).copy()
    return arrays, manifest.get("meta", {})
