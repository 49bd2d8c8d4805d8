"""Manifest and feature-blob I/O.

A dataset on disk is a JSON Lines manifest plus one sidecar blob file
per feature view. The manifest starts with a header line::

    {"kind": "header",
     "views": [{"name": ..., "dim": ..., "lambda": ...}, ...],
     "camera": {"fx": ..., "fy": ...},
     "blobs": {view_name: relative_path, ...}}

followed by ``{"kind": "instance", ...}`` and ``{"kind": "gt", ...}``
lines in any order. Blob layout, bit-exact:

    magic ``ALF1`` | uint32 LE count | uint32 LE dim | count*dim float32 LE

rows are stored row-major, one row per instance in manifest order.
Features are float32 on disk and widened to float64 in memory.
"""

from __future__ import annotations

import json
import re
import struct
from pathlib import Path

import numpy as np

from .records import (
    Box2D,
    CameraModel,
    Dataset,
    GroundTruthObject,
    InstanceRecord,
    ViewSpec,
    validate_dataset,
)

__all__ = ["DatasetError", "read_blob", "write_blob", "load_dataset", "write_dataset"]

_MAGIC = b"ALF1"


class DatasetError(ValueError):
    """Raised for malformed manifests, blobs, or invariant violations."""


def write_blob(path, matrix) -> None:
    """Write a (count, dim) float matrix as an ALF1 blob."""
    arr = np.ascontiguousarray(np.asarray(matrix, dtype=np.float64))
    if arr.ndim != 2:
        raise DatasetError(f"blob matrix must be 2-D, got shape {arr.shape}")
    count, dim = arr.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", count, dim))
        fh.write(arr.astype("<f4").tobytes(order="C"))


def read_blob(path) -> np.ndarray:
    """Read an ALF1 blob into a float64 (count, dim) matrix."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != _MAGIC:
        raise DatasetError(f"{path}: not an ALF1 blob")
    count, dim = struct.unpack("<II", raw[4:12])
    expected = 12 + count * dim * 4
    if len(raw) != expected:
        raise DatasetError(f"{path}: blob truncated or oversized ({len(raw)} bytes, expected {expected})")
    data = np.frombuffer(raw, dtype="<f4", offset=12, count=count * dim)
    return data.reshape(count, dim).astype(np.float64)


def _parse_views(header: dict) -> tuple[ViewSpec, ...]:
    views = []
    for entry in header.get("views", []):
        views.append(ViewSpec(name=str(entry["name"]), dim=int(entry["dim"]), lam=float(entry["lambda"])))
    return tuple(views)


def _parse_instance(obj: dict) -> InstanceRecord:
    box = obj["box2d"]
    aux = obj.get("aux_depths")
    return InstanceRecord(
        image_id=str(obj["image_id"]),
        instance_id=int(obj["instance_id"]),
        class_id=int(obj["class_id"]),
        box2d=Box2D(float(box["cx"]), float(box["cy"]), float(box["w"]), float(box["h"])),
        features={},
        pred_depth=None if obj.get("pred_depth") is None else float(obj["pred_depth"]),
        confidence=None if obj.get("confidence") is None else float(obj["confidence"]),
        aux_depths=None if aux is None else tuple(float(x) for x in aux),
    )


def _parse_gt(obj: dict) -> GroundTruthObject:
    cx, cy = obj["center2d"]
    return GroundTruthObject(
        gt_id=int(obj["gt_id"]),
        image_id=str(obj["image_id"]),
        class_id=int(obj["class_id"]),
        center2d=(float(cx), float(cy)),
        depth=float(obj["depth"]),
        pixel_height=float(obj["pixel_height"]),
    )


def _read_manifest(path: Path):
    header = None
    instances: list[InstanceRecord] = []
    gts: list[GroundTruthObject] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            kind = obj.get("kind")
            if kind == "header":
                if header is not None:
                    raise DatasetError(f"{path}:{lineno}: duplicate header line")
                header = obj
            elif kind == "instance":
                instances.append(_parse_instance(obj))
            elif kind == "gt":
                gts.append(_parse_gt(obj))
            else:
                raise DatasetError(f"{path}:{lineno}: unknown record kind {kind!r}")
    if header is None:
        raise DatasetError(f"{path}: manifest has no header line")
    return header, instances, gts


def _image_table(instances, gts) -> dict[str, int]:
    # First-seen order over instance then gt lines keeps loading
    # order-preserving and deterministic.
    images: dict[str, int] = {}
    for r in instances:
        images.setdefault(r.image_id, 0)
    for g in gts:
        images.setdefault(g.image_id, 0)
        images[g.image_id] += 1
    return images


def load_dataset(path) -> Dataset:
    """Load and fully validate a dataset from a manifest file.

    Raises ``DatasetError`` on malformed input, blob/view dimension
    mismatch, duplicate ids, or any type-invariant violation.
    """
    path = Path(path)
    header, instances, gts = _read_manifest(path)

    views = _parse_views(header)
    cam = header.get("camera", {})
    camera = CameraModel(f_x=float(cam["fx"]), f_y=float(cam["fy"]))

    blob_refs = header.get("blobs", {})
    feature_rows: dict[str, np.ndarray] = {}
    for v in views:
        if v.name not in blob_refs:
            raise DatasetError(f"header declares view {v.name!r} but no blob reference")
        matrix = read_blob(path.parent / blob_refs[v.name])
        if matrix.shape[0] != len(instances):
            raise DatasetError(
                f"view {v.name!r}: blob has {matrix.shape[0]} rows for {len(instances)} instances"
            )
        if matrix.shape[1] != v.dim:
            raise DatasetError(
                f"view {v.name!r}: dimension mismatch (declared {v.dim}, blob rows have {matrix.shape[1]})"
            )
        feature_rows[v.name] = matrix

    seen: set[int] = set()
    for r in instances:
        if r.instance_id in seen:
            raise DatasetError(f"duplicate instance_id {r.instance_id}")
        seen.add(r.instance_id)
    seen_gt: set[int] = set()
    for g in gts:
        if g.gt_id in seen_gt:
            raise DatasetError(f"duplicate gt_id {g.gt_id}")
        seen_gt.add(g.gt_id)

    filled = []
    for i, r in enumerate(instances):
        feats = {name: feature_rows[name][i] for name in feature_rows}
        filled.append(
            InstanceRecord(
                image_id=r.image_id,
                instance_id=r.instance_id,
                class_id=r.class_id,
                box2d=r.box2d,
                features=feats,
                pred_depth=r.pred_depth,
                confidence=r.confidence,
                aux_depths=r.aux_depths,
            )
        )

    dataset = Dataset(
        camera=camera,
        views=views,
        instances=tuple(filled),
        ground_truth=tuple(gts),
        images=_image_table(filled, gts),
    )
    violations = validate_dataset(dataset)
    if violations:
        raise DatasetError("invalid dataset: " + "; ".join(violations))
    return dataset


def _blob_name(index: int, view_name: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9_-]", "_", view_name)
    return f"view{index:02d}_{safe}.alf"


def _instance_line(r: InstanceRecord) -> dict:
    obj = {
        "kind": "instance",
        "image_id": r.image_id,
        "instance_id": r.instance_id,
        "class_id": r.class_id,
        "box2d": {"cx": r.box2d.cx, "cy": r.box2d.cy, "w": r.box2d.w, "h": r.box2d.h},
        "pred_depth": r.pred_depth,
        "confidence": r.confidence,
    }
    if r.aux_depths is not None:
        obj["aux_depths"] = list(r.aux_depths)
    return obj


def _gt_line(g: GroundTruthObject) -> dict:
    return {
        "kind": "gt",
        "gt_id": g.gt_id,
        "image_id": g.image_id,
        "class_id": g.class_id,
        "center2d": [g.center2d[0], g.center2d[1]],
        "depth": g.depth,
        "pixel_height": g.pixel_height,
    }


def write_dataset(dataset: Dataset, manifest_path) -> None:
    """Write a dataset as manifest plus blobs next to the manifest.

    Round-trips with ``load_dataset``: feature blobs come back
    byte-identical because vectors are stored as float32 on both sides.
    """
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)

    blobs = {}
    for i, v in enumerate(dataset.views):
        name = _blob_name(i, v.name)
        rows = np.zeros((len(dataset.instances), v.dim), dtype=np.float64)
        for j, r in enumerate(dataset.instances):
            rows[j] = r.features[v.name]
        write_blob(manifest_path.parent / name, rows)
        blobs[v.name] = name

    header = {
        "kind": "header",
        "views": [{"name": v.name, "dim": v.dim, "lambda": v.lam} for v in dataset.views],
        "camera": {"fx": dataset.camera.f_x, "fy": dataset.camera.f_y},
        "blobs": blobs,
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, separators=(",", ":")) + "\n")
        for r in dataset.instances:
            fh.write(json.dumps(_instance_line(r), separators=(",", ":")) + "\n")
        for g in dataset.ground_truth:
            fh.write(json.dumps(_gt_line(g), separators=(",", ":")) + "\n")
