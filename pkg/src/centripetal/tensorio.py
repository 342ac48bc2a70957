"""Serialization: line-delimited annotation JSON and a minimal bit-exact
binary tensor container.

Container layout: magic ``CTMP`` | version u8 | dtype u8 (0 = float32,
1 = uint8) | ndim u8 | ndim x u32 little-endian dims | tightly packed
row-major little-endian payload.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .encoder import LabelBundle, TextAnnotation
from .errors import (
    AnnotationError,
    BadMagic,
    BadVersion,
    InvalidPolygon,
    TruncatedPayload,
    UnsupportedDtype,
)
from .geometry import Polygon

MAGIC = b"CTMP"
VERSION = 1
_DTYPE_BY_CODE = {0: np.dtype("<f4"), 1: np.dtype("u1")}
_CODE_BY_KIND = {np.dtype(np.float32): 0, np.dtype(np.uint8): 1}


def write_tensor(path, array):
    """Write an array (float32, uint8, or bool) to the tensor container."""
    arr = np.asarray(array)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8)
    if arr.dtype not in _CODE_BY_KIND:
        raise UnsupportedDtype(f"cannot encode dtype {arr.dtype}")
    code = _CODE_BY_KIND[arr.dtype]
    header = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr).astype(_DTYPE_BY_CODE[code], copy=False).tobytes()
    Path(path).write_bytes(header + payload)


def read_tensor(path):
    """Read a tensor container back into a numpy array (lossless round trip)."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 7:
        raise TruncatedPayload(f"{path}: header truncated")
    version, code, ndim = struct.unpack_from("<BBB", data, 4)
    if version != VERSION:
        raise BadVersion(f"{path}: unsupported version {version}")
    if code not in _DTYPE_BY_CODE:
        raise UnsupportedDtype(f"{path}: unknown dtype code {code}")
    header_len = 7 + 4 * ndim
    if len(data) < header_len:
        raise TruncatedPayload(f"{path}: header truncated")
    dims = struct.unpack_from(f"<{ndim}I", data, 7)
    dtype = _DTYPE_BY_CODE[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize if ndim else dtype.itemsize
    if len(data) - header_len != expected:
        raise TruncatedPayload(
            f"{path}: payload is {len(data) - header_len} bytes, expected {expected}"
        )
    arr = np.frombuffer(data, dtype=dtype, offset=header_len).reshape(dims)
    return arr.copy()


def _parse_annotation(obj, lineno, index):
    if not isinstance(obj, dict) or "polygon" not in obj:
        raise AnnotationError(f"line {lineno}: expected an object with a 'polygon' field")
    try:
        polygon = Polygon(obj["polygon"])
    except (InvalidPolygon, ValueError, TypeError) as exc:
        raise AnnotationError(f"line {lineno}: {exc}") from exc
    return TextAnnotation(polygon=polygon, ignore=bool(obj.get("ignore", False)), id=index)


def load_annotations(path):
    """Load line-delimited annotation JSON; ids are assigned by position (1-based)."""
    annotations = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationError(f"line {lineno}: invalid JSON ({exc})") from exc
            annotations.append(_parse_annotation(obj, lineno, len(annotations) + 1))
    return annotations


def save_annotations(path, annotations, scores=None):
    """Write annotations (optionally with per-entry scores) as one JSON object
    per line."""
    with open(path, "w", encoding="utf-8") as handle:
        for idx, ann in enumerate(annotations):
            obj = {
                "polygon": [[float(x), float(y)] for x, y in ann.polygon.points],
                "text": None,
                "ignore": bool(ann.ignore),
            }
            if scores is not None:
                obj["score"] = float(scores[idx])
            handle.write(json.dumps(obj) + "\n")


def save_detections(path, instances):
    """Write decoded instances in the annotation format plus a score field."""
    anns = [TextAnnotation(polygon=inst.contour, ignore=False, id=i + 1)
            for i, inst in enumerate(instances)]
    save_annotations(path, anns, scores=[inst.score for inst in instances])


_BUNDLE_TENSORS = (
    ("kernel", "kernel_map"),
    ("training_mask", "training_mask"),
    ("shift", "shift_field"),
    ("instance_id", "instance_id"),
    ("kernel_id", "kernel_id"),
    ("reference", "reference_mask"),
)


def bundle_tensor_paths(directory):
    directory = Path(directory)
    return {name: directory / f"{name}.ctmp" for name, _ in _BUNDLE_TENSORS}


def save_bundle(directory, bundle):
    """Write every bundle map to ``<directory>/<name>.ctmp``.

    Id grids are stored as float32 (exact for ids below 2**24) because the
    container only encodes float32 and uint8.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = bundle_tensor_paths(directory)
    write_tensor(paths["kernel"], bundle.kernel_map.astype(np.uint8))
    write_tensor(paths["training_mask"], bundle.training_mask.astype(np.uint8))
    write_tensor(paths["shift"], bundle.shift_field.astype(np.float32))
    write_tensor(paths["instance_id"], bundle.instance_id.astype(np.float32))
    write_tensor(paths["kernel_id"], bundle.kernel_id.astype(np.float32))
    write_tensor(paths["reference"], bundle.reference_mask.astype(np.uint8))
    return paths


def load_bundle(directory):
    paths = bundle_tensor_paths(directory)
    kernel = read_tensor(paths["kernel"]).astype(bool)
    height, width = kernel.shape
    return LabelBundle(
        height=height,
        width=width,
        kernel_map=kernel,
        training_mask=read_tensor(paths["training_mask"]).astype(bool),
        shift_field=read_tensor(paths["shift"]),
        instance_id=read_tensor(paths["instance_id"]).astype(np.int32),
        kernel_id=read_tensor(paths["kernel_id"]).astype(np.int32),
        reference_mask=read_tensor(paths["reference"]).astype(bool),
    )
