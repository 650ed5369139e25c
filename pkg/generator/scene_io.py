# generator/scene_io.py
"""On-disk formats.

Boxes / detections: one record per line, whitespace separated, floats in
repr form so parsing returns the identical double.

    class cx cy cz w l h yaw vx vy              (boxes)
    class score cx cy cz w l h yaw vx vy        (detections)

Point clouds: little-endian binary, magic b"RFPC", u32 count, then
count x 4 float32 (x, y, z, intensity).
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Sequence

import numpy as np

from domain.boxes import Box3D, Detection, PointCloud
from domain.errors import FormatError, StorageError

CLOUD_MAGIC = b"RFPC"
_HEADER = struct.Struct("<4sI")
_POINT_DTYPE = np.dtype("<f4")


def _box_fields(box: Box3D) -> List[str]:
    return [repr(float(v)) for v in (*box.center, *box.size, box.yaw, *box.velocity)]


def _parse_box(class_field: str, fields: Sequence[str]) -> Box3D:
    v = [float(x) for x in fields]
    return Box3D((v[0], v[1], v[2]), (v[3], v[4], v[5]), v[6], int(class_field), (v[7], v[8]))


def format_boxes(boxes: Sequence[Box3D]) -> str:
    return "".join(" ".join([str(b.class_id), *_box_fields(b)]) + "\n" for b in boxes)


def parse_boxes(text: str, source: str = "<text>") -> List[Box3D]:
    boxes = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 10:
            raise FormatError(f"{source}:{lineno}: expected 10 fields, got {len(parts)}")
        try:
            boxes.append(_parse_box(parts[0], parts[1:]))
        except ValueError as e:
            raise FormatError(f"{source}:{lineno}: {e}") from None
    return boxes


def format_detections(detections: Sequence[Detection]) -> str:
    lines = []
    for d in detections:
        lines.append(" ".join([str(d.class_id), repr(float(d.score)), *_box_fields(d.box)]) + "\n")
    return "".join(lines)


def parse_detections(text: str, source: str = "<text>") -> List[Detection]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 11:
            raise FormatError(f"{source}:{lineno}: expected 11 fields, got {len(parts)}")
        try:
            out.append(Detection(_parse_box(parts[0], parts[2:]), float(parts[1])))
        except ValueError as e:
            raise FormatError(f"{source}:{lineno}: {e}") from None
    return out


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from None


def _read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from None


def write_boxes(path, boxes: Sequence[Box3D]) -> None:
    _write_text(Path(path), format_boxes(boxes))


def read_boxes(path) -> List[Box3D]:
    path = Path(path)
    return parse_boxes(_read_text(path), str(path))


def write_detections(path, detections: Sequence[Detection]) -> None:
    _write_text(Path(path), format_detections(detections))


def read_detections(path) -> List[Detection]:
    path = Path(path)
    return parse_detections(_read_text(path), str(path))


def encode_cloud(cloud: PointCloud) -> bytes:
    payload = np.ascontiguousarray(cloud.points, dtype=_POINT_DTYPE)
    return _HEADER.pack(CLOUD_MAGIC, len(cloud)) + payload.tobytes()


def decode_cloud(data: bytes, source: str = "<bytes>") -> PointCloud:
    if len(data) < _HEADER.size:
        raise FormatError(f"{source}: truncated header")
    magic, count = _HEADER.unpack_from(data)
    if magic != CLOUD_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    expected = _HEADER.size + count * 4 * _POINT_DTYPE.itemsize
    if len(data) != expected:
        raise FormatError(
            f"{source}: expected {expected} bytes for {count} points, got {len(data)}"
        )
    points = np.frombuffer(data, dtype=_POINT_DTYPE, offset=_HEADER.size).reshape(count, 4)
    return PointCloud(points.astype(np.float64))


def write_cloud(path, cloud: PointCloud) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_cloud(cloud))
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from None


def read_cloud(path) -> PointCloud:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read {path}: {e}") from None
    return decode_cloud(data, str(path))
