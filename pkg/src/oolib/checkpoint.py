"""Parameter checkpoints: a JSON manifest next to a raw float64 blob.

    model.json  {"kind": ..., "meta": {...}, "tensors": [{"name", "shape", "offset"}], "sha256": ...}
    model.bin   little-endian float64 values, tensors back to back
"""
import hashlib
import json
import os
from typing import Dict, Tuple

import numpy as np

from .errors import DataError, IoError


def blob_path(manifest_path: str) -> str:
    root, _ = os.path.splitext(manifest_path)
    return root + ".bin"


def save(manifest_path: str, arrays: Dict[str, np.ndarray], kind: str, meta=None) -> str:
    """Write both files and return the blob's sha256."""
    entries, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size
        chunks.append(a.reshape(-1).tobytes())
    blob = b"".join(chunks)
    digest = hashlib.sha256(blob).hexdigest()
    manifest = {"kind": kind, "meta": meta or {}, "dtype": "<f8", "tensors": entries, "sha256": digest}
    try:
        with open(blob_path(manifest_path), "wb") as fh:
            fh.write(blob)
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
    except OSError as e:
        raise IoError(str(e)) from e
    return digest


def load(manifest_path: str) -> Tuple[str, dict, Dict[str, np.ndarray]]:
    """Return (kind, meta, arrays)."""
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        with open(blob_path(manifest_path), "rb") as fh:
            blob = fh.read()
    except OSError as e:
        raise IoError(f"cannot read checkpoint {manifest_path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"malformed checkpoint manifest {manifest_path}: {e}") from e
    if hashlib.sha256(blob).hexdigest() != manifest.get("sha256"):
        raise DataError(f"checkpoint blob for {manifest_path} does not match its manifest hash")
    flat = np.frombuffer(blob, dtype="<f8")
    arrays = {}
    for e in manifest["tensors"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        arrays[e["name"]] = flat[e["offset"]:e["offset"] + size].reshape(e["shape"]).astype(np.float64)
    return manifest["kind"], manifest.get("meta", {}), arrays
