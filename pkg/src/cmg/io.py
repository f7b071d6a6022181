"""Bit-exact file formats: motion containers, plan JSON, reports.

Motion container layout: 4-byte magic ``CMG1``, little-endian uint32 header
length, UTF-8 JSON header, then the raw float32 little-endian payload.  The
header declares {version, n, f, J, D, fps, dtype, repr, joint_names} and
the payload must be exactly n*f*D (relative) or n*f*J*3 (global) floats.
Malformed files are rejected with distinct error types, never repaired.

JSON documents (plans, reports) are serialized canonically: declared key
order, floats at 9 significant digits, locale independent — so equal
objects produce byte-equal files.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    HeaderMismatchError,
    MagicError,
    SchemaError,
    TruncatedPayloadError,
    ValidationError,
)
from .motion import dims_for_joints
from .planner.types import PLAN_VERSION, ScenePlan

MOTION_MAGIC = b"CMG1"
MOTION_VERSION = 1
REPRS = ("relative", "global")


@dataclass
class MotionData:
    """A decoded motion container: payload plus header metadata."""

    data: np.ndarray  # (n, f, D) relative or (n, f, J, 3) global, float32
    repr: str
    fps: float
    joint_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def J(self) -> int:
        if self.repr == "global":
            return self.data.shape[2]
        return (self.data.shape[2] + 1) // 12


# ----------------------------------------------------------------------
# canonical JSON
def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialize non-finite float {x!r}")
    if x == int(x) and abs(x) < 1e16:
        return f"{int(x)}.0" if abs(x) < 1e15 else format(x, ".9g")
    return format(x, ".9g")


def dumps_canonical(obj) -> str:
    """Serialize a JSON document with fixed float formatting and key order.

    Dict keys keep their insertion order (callers declare schemas by
    building dicts in order); floats use 9 significant digits.
    """
    parts: list[str] = []
    _emit(obj, parts)
    return "".join(parts)


def _emit(obj, parts: list[str]) -> None:
    if obj is None or isinstance(obj, bool):
        parts.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _emit(item, parts)
        parts.append("]")
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                parts.append(",")
            parts.append(json.dumps(str(key), ensure_ascii=False))
            parts.append(":")
            _emit(value, parts)
        parts.append("}")
    else:
        raise ValidationError(f"cannot serialize {type(obj).__name__} to JSON")


def write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(dumps_canonical(doc) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc


# ----------------------------------------------------------------------
# motion container
def motion_bytes(
    data: np.ndarray,
    repr: str,
    fps: float,
    joint_names: tuple[str, ...] | list[str] = (),
) -> bytes:
    """Serialize a motion container; ``data`` is (n, f, D) or (n, f, J, 3)."""
    data = np.asarray(data)
    if repr not in REPRS:
        raise ValidationError(f"repr must be one of {REPRS}, got {repr!r}")
    if repr == "global":
        if data.ndim != 4 or data.shape[3] != 3:
            raise ValidationError(f"global payload must be (n, f, J, 3), got {data.shape}")
        n, f, J, _ = data.shape
        D = dims_for_joints(J)
    else:
        if data.ndim != 3:
            raise ValidationError(f"relative payload must be (n, f, D), got {data.shape}")
        n, f, D = data.shape
        J = (D + 1) // 12
        if dims_for_joints(J) != D:
            raise ValidationError(f"channel count {D} is not 12*J-1 for any J")
    header = {
        "version": MOTION_VERSION,
        "n": int(n),
        "f": int(f),
        "J": int(J),
        "D": int(D),
        "fps": float(fps),
        "dtype": "f32le",
        "repr": repr,
        "joint_names": list(joint_names),
    }
    header_bytes = dumps_canonical(header).encode("utf-8")
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    return (
        MOTION_MAGIC
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + payload
    )


def write_motion(
    path: str | Path,
    data: np.ndarray,
    repr: str,
    fps: float,
    joint_names: tuple[str, ...] | list[str] = (),
) -> None:
    """Write a motion container; ``data`` is (n, f, D) or (n, f, J, 3)."""
    with open(path, "wb") as fh:
        fh.write(motion_bytes(data, repr, fps, joint_names))


def read_motion(path: str | Path) -> MotionData:
    return motion_from_bytes(Path(path).read_bytes())


def motion_from_bytes(raw: bytes) -> MotionData:
    if len(raw) < 8 or raw[:4] != MOTION_MAGIC:
        raise MagicError(
            f"bad magic {raw[:4]!r}; expected {MOTION_MAGIC!r}"
        )
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise TruncatedPayloadError(
            f"header declares {header_len} bytes but only "
            f"{len(raw) - 8} remain after the magic"
        )
    try:
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderMismatchError(f"header is not valid JSON: {exc}") from exc
    for key in ("version", "n", "f", "J", "D", "fps", "dtype", "repr"):
        if key not in header:
            raise HeaderMismatchError(f"header missing field {key!r}")
    if header["version"] != MOTION_VERSION:
        raise HeaderMismatchError(
            f"unsupported motion container version {header['version']!r}"
        )
    if header["dtype"] != "f32le":
        raise HeaderMismatchError(f"unsupported dtype {header['dtype']!r}")
    if header["repr"] not in REPRS:
        raise HeaderMismatchError(f"repr must be one of {REPRS}")
    n, f, J, D = (int(header[k]) for k in ("n", "f", "J", "D"))
    if dims_for_joints(J) != D:
        raise HeaderMismatchError(f"header D={D} inconsistent with J={J} (12*J-1)")
    per_item = D if header["repr"] == "relative" else J * 3
    expected = n * f * per_item * 4
    payload = raw[8 + header_len:]
    if len(payload) < expected:
        raise TruncatedPayloadError(
            f"payload holds {len(payload)} bytes, header demands {expected}"
        )
    if len(payload) > expected:
        raise HeaderMismatchError(
            f"payload holds {len(payload)} bytes, header demands {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f4")
    shape = (n, f, D) if header["repr"] == "relative" else (n, f, J, 3)
    return MotionData(
        data=arr.reshape(shape).copy(),
        repr=header["repr"],
        fps=float(header["fps"]),
        joint_names=tuple(header.get("joint_names", ())),
    )


# ----------------------------------------------------------------------
# plan documents
def _require(doc: dict, key: str, path: str) -> object:
    if key not in doc:
        raise SchemaError("missing required field", json_path=f"{path}.{key}")
    return doc[key]


def validate_plan_doc(doc: dict) -> None:
    """Structural validation of a plan document, with JSON-path errors."""
    if not isinstance(doc, dict):
        raise SchemaError("plan must be a JSON object", json_path="$")
    version = _require(doc, "version", "$")
    if version != PLAN_VERSION:
        raise SchemaError(
            f"unsupported version {version!r}; expected {PLAN_VERSION!r}",
            json_path="$.version",
        )
    params = _require(doc, "params", "$")
    for key in ("n", "s", "sigma", "alpha"):
        _require(params, key, "$.params")
    _require(doc, "fps", "$")
    _require(doc, "frames", "$")
    groups = _require(doc, "groups", "$")
    if not isinstance(groups, list) or not groups:
        raise SchemaError("groups must be a non-empty array", json_path="$.groups")
    for i, grp in enumerate(groups):
        for key in ("id", "members", "activity", "anchor"):
            _require(grp, key, f"$.groups[{i}]")
        if not isinstance(grp["members"], list) or not grp["members"]:
            raise SchemaError(
                "members must be a non-empty array", json_path=f"$.groups[{i}].members"
            )
    control = _require(doc, "control", "$")
    _require(control, "joints", "$.control")
    entries = _require(control, "entries", "$.control")
    if not isinstance(entries, list):
        raise SchemaError("entries must be an array", json_path="$.control.entries")
    for i, row in enumerate(entries):
        if not isinstance(row, list) or len(row) != 6:
            raise SchemaError(
                "entry must be [agent, frame, joint, x, y, z]",
                json_path=f"$.control.entries[{i}]",
            )


def write_plan(path: str | Path, plan: ScenePlan) -> None:
    write_json(path, plan.to_dict())


def read_plan(path: str | Path) -> ScenePlan:
    doc = read_json(path)
    validate_plan_doc(doc)
    try:
        return ScenePlan.from_dict(doc)
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"malformed plan document: {exc}") from exc


# ----------------------------------------------------------------------
# CSV transcoding
def motion_to_csv(path: str | Path, motion: MotionData) -> None:
    """Flatten a motion container to CSV (one row per agent/frame)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if motion.repr == "global":
            writer.writerow(["agent", "frame", "joint", "x", "y", "z"])
            n, f, J, _ = motion.data.shape
            for a in range(n):
                for t in range(f):
                    for j in range(J):
                        x, y, z = motion.data[a, t, j]
                        writer.writerow([a, t, j, repr(float(x)), repr(float(y)),
                                         repr(float(z))])
        else:
            D = motion.data.shape[2]
            writer.writerow(["agent", "frame"] + [f"c{i}" for i in range(D)])
            for a in range(motion.n):
                for t in range(motion.frames):
                    writer.writerow(
                        [a, t] + [repr(float(v)) for v in motion.data[a, t]]
                    )


def csv_to_motion(path: str | Path, fps: float) -> MotionData:
    """Rebuild a motion container from CSV produced by :func:`motion_to_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError("CSV file is empty")
        rows = list(reader)
    if header[:3] == ["agent", "frame", "joint"]:
        entries = [(int(r[0]), int(r[1]), int(r[2]), float(r[3]), float(r[4]), float(r[5]))
                   for r in rows]
        n = max(e[0] for e in entries) + 1
        f = max(e[1] for e in entries) + 1
        J = max(e[2] for e in entries) + 1
        data = np.zeros((n, f, J, 3), dtype=np.float32)
        for a, t, j, x, y, z in entries:
            data[a, t, j] = (x, y, z)
        return MotionData(data=data, repr="global", fps=fps, joint_names=())
    if header[:2] == ["agent", "frame"]:
        D = len(header) - 2
        entries = [(int(r[0]), int(r[1]), [float(v) for v in r[2:]]) for r in rows]
        n = max(e[0] for e in entries) + 1
        f = max(e[1] for e in entries) + 1
        data = np.zeros((n, f, D), dtype=np.float32)
        for a, t, vals in entries:
            data[a, t] = vals
        return MotionData(data=data, repr="relative", fps=fps, joint_names=())
    raise ValidationError(f"unrecognized CSV header {header[:3]}")
