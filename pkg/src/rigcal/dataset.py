"""Rig dataset and estimate-file I/O.

On-disk layout of a dataset directory:

* ``rig.json`` — UTF-8 JSON, numbers written with 17 significant digits::

      {
        "depth_unit": "meters",
        "cameras": [
          {
            "id": 0,
            "fx": ..., "fy": ..., "cx": ..., "cy": ...,
            "width": 320, "height": 240,
            "init_extrinsic": {"rotation": [9 row-major], "translation": [3]},
            "gt_extrinsic":   {... optional ...},
            "depth_file": "depth_000.bin"
          }, ...
        ]
      }

* depth binaries — ASCII header ``GMACD1 <width> <height>\n`` followed by
  width*height little-endian IEEE-754 float32, row-major, row 0 at the
  top. Invalid pixels are NaN or any value <= 0.

Depth maps are float64 in memory (full render precision); files store
float32. Saving is deterministic: identical rigs produce byte-identical
files. Units are meters on disk and in memory throughout.

Rotations are checked on load: orthonormality defect <= 1e-9 is accepted
verbatim (this keeps save/load/save byte-identical), defects in
(1e-9, 1e-6] are re-orthonormalized, larger defects are rejected.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    InvalidValue,
    MalformedJson,
    MissingFile,
    NonContiguousIds,
    NotARotation,
)
from .geometry import CameraIntrinsics, RigidTransform, nearest_rotation, rotation_defect

DEPTH_MAGIC = b"GMACD1"
ROTATION_ACCEPT_DEFECT = 1e-9
ROTATION_REPAIR_DEFECT = 1e-6


@dataclass
class CameraRecord:
    """One camera of the rig: intrinsics, initial (and optional true) extrinsics, depth."""

    id: int
    intrinsics: CameraIntrinsics
    init_extrinsic: RigidTransform
    gt_extrinsic: RigidTransform | None
    depth: np.ndarray
    depth_file: str = ""


@dataclass
class CameraRig:
    """A full problem instance. Immutable by convention; share freely across workers."""

    cameras: list[CameraRecord]
    depth_unit: str = "meters"

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    def init_extrinsics(self) -> list[RigidTransform]:
        return [c.init_extrinsic for c in self.cameras]

    def gt_extrinsics(self) -> list[RigidTransform] | None:
        if any(c.gt_extrinsic is None for c in self.cameras):
            return None
        return [c.gt_extrinsic for c in self.cameras]

    def validate(self) -> None:
        ids = [c.id for c in self.cameras]
        if ids != list(range(len(ids))):
            raise NonContiguousIds(f"camera ids must be 0..N-1 contiguous, got {ids}")
        if len(ids) < 2:
            raise InvalidValue(f"a rig needs at least 2 cameras, got {len(ids)}")
        for cam in self.cameras:
            h, w = cam.depth.shape
            if w != cam.intrinsics.width or h != cam.intrinsics.height:
                raise DimensionMismatch(
                    f"camera {cam.id}: depth map is {w}x{h} but intrinsics say "
                    f"{cam.intrinsics.width}x{cam.intrinsics.height}"
                )


@dataclass
class EstimateFile:
    """Refinement output: per-camera extrinsics plus run bookkeeping."""

    extrinsics: list[RigidTransform]
    initial_loss: dict
    final_loss: dict
    iterations: dict
    termination: str
    config: dict = field(default_factory=dict)


# --- canonical JSON ----------------------------------------------------------

def _fmt_json(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            raise InvalidValue(f"cannot serialize non-finite number {v}")
        if v == 0.0:
            v = 0.0  # canonicalize -0.0, whose sign JSON integers cannot carry
        return format(v, ".17g")
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ",".join(_fmt_json(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_fmt_json(v)}" for k, v in value.items()) + "}"
    raise InvalidValue(f"cannot serialize {type(value).__name__} to JSON")


def dump_canonical_json(value) -> bytes:
    """Deterministic JSON bytes: insertion order, floats at 17 significant digits."""
    return (_fmt_json(value) + "\n").encode("utf-8")


def _load_json(path: str) -> dict:
    if not os.path.isfile(path):
        raise MissingFile(f"no such file: {path}")
    with open(path, "rb") as f:
        data = f.read()
    try:
        return json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedJson(f"{path}: {exc}") from exc


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise MalformedJson(f"{where}: missing field {key!r}")
    return obj[key]


def _transform_to_json(t: RigidTransform) -> dict:
    return {
        "rotation": [float(x) for x in t.rotation.reshape(9)],
        "translation": [float(x) for x in t.translation],
    }


def _transform_from_json(obj, where: str) -> RigidTransform:
    if not isinstance(obj, dict):
        raise MalformedJson(f"{where}: expected an object with rotation/translation")
    rot = np.asarray(_require(obj, "rotation", where), dtype=float)
    tr = np.asarray(_require(obj, "translation", where), dtype=float)
    if rot.shape != (9,):
        raise MalformedJson(f"{where}: rotation must be 9 row-major numbers")
    if tr.shape != (3,):
        raise MalformedJson(f"{where}: translation must be 3 numbers")
    rot = rot.reshape(3, 3)
    defect = rotation_defect(rot)
    if defect > ROTATION_REPAIR_DEFECT:
        raise NotARotation(f"{where}: orthonormality defect {defect:.3g} exceeds 1e-6")
    if defect > ROTATION_ACCEPT_DEFECT:
        rot = nearest_rotation(rot)
    return RigidTransform(rot, tr)


# --- depth binaries ----------------------------------------------------------

def write_depth(path: str, depth: np.ndarray) -> None:
    h, w = depth.shape
    with open(path, "wb") as f:
        f.write(DEPTH_MAGIC + f" {w} {h}\n".encode("ascii"))
        f.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def read_depth(path: str, camera_label: str = "") -> np.ndarray:
    if not os.path.isfile(path):
        raise MissingFile(f"{camera_label}no such depth file: {path}")
    with open(path, "rb") as f:
        header = f.readline(64)
        parts = header.split()
        if len(parts) != 3 or parts[0] != DEPTH_MAGIC or not header.endswith(b"\n"):
            raise BadMagic(f"{camera_label}{path}: bad depth header {header[:32]!r}")
        try:
            w, h = int(parts[1]), int(parts[2])
        except ValueError as exc:
            raise BadMagic(f"{camera_label}{path}: bad dimensions in header") from exc
        payload = f.read()
    expected = w * h * 4
    if len(payload) != expected:
        raise DimensionMismatch(
            f"{camera_label}{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(h, w)
    return values.astype(np.float64)


# --- rig save / load ---------------------------------------------------------

def save_rig(rig: CameraRig, path: str) -> None:
    """Write rig.json plus one depth binary per camera; deterministic bytes."""
    rig.validate()
    os.makedirs(path, exist_ok=True)
    cameras = []
    for cam in rig.cameras:
        depth_file = cam.depth_file or f"depth_{cam.id:03d}.bin"
        entry = {
            "id": cam.id,
            "fx": cam.intrinsics.fx,
            "fy": cam.intrinsics.fy,
            "cx": cam.intrinsics.cx,
            "cy": cam.intrinsics.cy,
            "width": cam.intrinsics.width,
            "height": cam.intrinsics.height,
            "init_extrinsic": _transform_to_json(cam.init_extrinsic),
        }
        if cam.gt_extrinsic is not None:
            entry["gt_extrinsic"] = _transform_to_json(cam.gt_extrinsic)
        entry["depth_file"] = depth_file
        cameras.append(entry)
        write_depth(os.path.join(path, depth_file), cam.depth)
    doc = {"depth_unit": rig.depth_unit, "cameras": cameras}
    with open(os.path.join(path, "rig.json"), "wb") as f:
        f.write(dump_canonical_json(doc))


def load_rig(path: str) -> CameraRig:
    """Load and fully validate a dataset directory."""
    doc = _load_json(os.path.join(path, "rig.json"))
    if not isinstance(doc, dict) or "cameras" not in doc:
        raise MalformedJson(f"{path}/rig.json: missing 'cameras'")
    depth_unit = doc.get("depth_unit", "meters")
    if depth_unit != "meters":
        raise InvalidValue(f"{path}/rig.json: depth_unit must be 'meters', got {depth_unit!r}")
    records = []
    for idx, entry in enumerate(doc["cameras"]):
        where = f"camera {entry.get('id', idx)}"
        try:
            intr = CameraIntrinsics(
                fx=float(_require(entry, "fx", where)),
                fy=float(_require(entry, "fy", where)),
                cx=float(_require(entry, "cx", where)),
                cy=float(_require(entry, "cy", where)),
                width=int(_require(entry, "width", where)),
                height=int(_require(entry, "height", where)),
            )
        except ValueError as exc:
            raise InvalidValue(f"{where}: {exc}") from exc
        init = _transform_from_json(
            _require(entry, "init_extrinsic", where), f"{where} init_extrinsic"
        )
        gt = None
        if entry.get("gt_extrinsic") is not None:
            gt = _transform_from_json(entry["gt_extrinsic"], f"{where} gt_extrinsic")
        depth_file = str(_require(entry, "depth_file", where))
        depth = read_depth(os.path.join(path, depth_file), camera_label=f"{where}: ")
        h, w = depth.shape
        if w != intr.width or h != intr.height:
            raise DimensionMismatch(
                f"{where}: depth file {depth_file} is {w}x{h} but intrinsics say "
                f"{intr.width}x{intr.height}"
            )
        records.append(
            CameraRecord(
                id=int(_require(entry, "id", where)),
                intrinsics=intr,
                init_extrinsic=init,
                gt_extrinsic=gt,
                depth=depth,
                depth_file=depth_file,
            )
        )
    rig = CameraRig(cameras=records, depth_unit=depth_unit)
    rig.validate()
    return rig


# --- estimate save / load ----------------------------------------------------

def save_estimate(est: EstimateFile, path: str) -> None:
    doc = {
        "n_cameras": len(est.extrinsics),
        "cameras": [
            {"id": i, "extrinsic": _transform_to_json(t)} for i, t in enumerate(est.extrinsics)
        ],
        "initial_loss": est.initial_loss,
        "final_loss": est.final_loss,
        "iterations": est.iterations,
        "termination": est.termination,
        "config": est.config,
    }
    with open(path, "wb") as f:
        f.write(dump_canonical_json(doc))


def load_estimate(path: str) -> EstimateFile:
    doc = _load_json(path)
    if not isinstance(doc, dict) or "cameras" not in doc:
        raise MalformedJson(f"{path}: missing 'cameras'")
    extrinsics = []
    for idx, entry in enumerate(doc["cameras"]):
        where = f"{path} camera {entry.get('id', idx)}"
        extrinsics.append(_transform_from_json(_require(entry, "extrinsic", where), where))
    return EstimateFile(
        extrinsics=extrinsics,
        initial_loss=doc.get("initial_loss", {}),
        final_loss=doc.get("final_loss", {}),
        iterations=doc.get("iterations", {}),
        termination=doc.get("termination", ""),
        config=doc.get("config", {}),
    )
